export {
  cyclicAdjustment,
  tipAdjustment,
  linearDecayAdjustment,
  randomAdjustment,
  evaluateSchedule,
  hashUnit,
  splitmix64,
  ScheduleParameterError,
  type ScheduleConfig,
  type ScheduleKind,
} from "./schedule.js";
export { BoundProcessor, processStep, type ProcessorConfig } from "./processor.js";
export { normalizeSurface, parseVocab, buildReflectionIds } from "./vocab.js";
export { ScriptedScorer, type ScriptedRules } from "./scripted.js";
export { greedyLoop, argmaxLowestId, type Scorer, type GreedyLoopOptions } from "./greedyLoop.js";
