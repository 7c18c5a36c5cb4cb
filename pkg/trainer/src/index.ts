export { BackendName, conv2dFilterGradient, initBackend,
         registerWasmFilterGradKernel } from "./backend";
export { CHECKPOINT_VERSION, CheckpointInfo, loadCheckpoint,
         saveCheckpoint } from "./checkpoint";
export { PixelStats, RemappedLabels, SplitIndices, SurrogateData,
         VAL_FRACTION_CAP, fillBatch, loadSurrogateDirectory, pixelStats,
         remapLabels, splitTrainVal } from "./dataset";
export { CheckpointError, DatasetError, FormatError } from "./errors";
export { DescriptorMatrix, FORMAT_VERSION, LabelList, MetaRow, PatchStack,
         readLdsc, readMetaCsv, readSlbl, readSptc, writeFileAtomic,
         writeLdsc } from "./format";
export { EMBEDDING_DIM, STAGE_WIDTHS, SUPPORTED_DEPTHS,
         buildPatchClassifier } from "./model";
export { mulberry32, shuffleInPlace } from "./rng";
export { AdaptiveLrSchedule, LR_DROP_FACTOR, STOP_PATIENCE,
         ScheduleStep } from "./schedule";
export { CURVE_FILE, DEFAULT_TRAINER_CONFIG, EpochStats, LOG_FILE,
         TrainOptions, TrainResult, TrainerConfig, train } from "./train";
export { ExportOptions, ExportResult, ExportedFile,
         exportActivations } from "./export";
