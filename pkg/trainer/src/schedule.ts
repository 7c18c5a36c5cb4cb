/** Validation-driven learning-rate schedule and stopping rule. */

/** Divisor applied to the learning rate when validation error rises. */
export const LR_DROP_FACTOR = 10;

/** Evaluations without improvement over the best error before stopping. */
export const STOP_PATIENCE = 3;

export interface ScheduleStep {
  /** True when this evaluation triggered a learning-rate drop. */
  dropped: boolean;
  /** True when training should stop after this evaluation. */
  stop: boolean;
}

/**
 * Adapts the learning rate from validation error. Each evaluation whose
 * error exceeds the previous one divides the learning rate by
 * `LR_DROP_FACTOR`; once `STOP_PATIENCE` consecutive evaluations fail to
 * improve on the best error seen, training stops.
 */
export class AdaptiveLrSchedule {
  private lr: number;
  private previous: number | null = null;
  private best = Number.POSITIVE_INFINITY;
  private sinceImprovement = 0;
  private dropCount = 0;

  constructor(initialLearningRate: number) {
    if (!(initialLearningRate > 0)) {
      throw new RangeError(
        `initial learning rate must be positive, got ${initialLearningRate}`);
    }
    this.lr = initialLearningRate;
  }

  get learningRate(): number {
    return this.lr;
  }

  get drops(): number {
    return this.dropCount;
  }

  /** Records one validation evaluation and returns the resulting actions. */
  observe(valError: number): ScheduleStep {
    const dropped = this.previous !== null && valError > this.previous;
    if (dropped) {
      this.lr /= LR_DROP_FACTOR;
      this.dropCount++;
    }
    if (valError < this.best) {
      this.best = valError;
      this.sinceImprovement = 0;
    } else {
      this.sinceImprovement++;
    }
    this.previous = valError;
    return { dropped, stop: this.sinceImprovement >= STOP_PATIENCE };
  }
}
