/** Error types raised by the trainer. */

/** A binary artifact is malformed: wrong magic, bad version, or truncated. */
export class FormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FormatError";
  }
}

/** The surrogate dataset violates a training precondition. */
export class DatasetError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "DatasetError";
  }
}

/** A checkpoint is unreadable or incompatible with the given inputs. */
export class CheckpointError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "CheckpointError";
  }
}
