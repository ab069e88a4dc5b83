/**
 * The logits-processor binding: a small stateful object a host inference
 * loop calls once per generated token, between "model produced logits"
 * and "sample". It adds the schedule's delta to the reflection-token ids
 * and keeps the step counter; the host owns sampling, stopping, and any
 * phase logic.
 */

import { evaluateSchedule, type ScheduleConfig } from "./schedule.js";
import { buildReflectionIds } from "./vocab.js";

export interface ProcessorConfig extends ScheduleConfig {
  /** Direct reflection-token ids (takes precedence when present). */
  reflection_ids?: number[];
  /** Word list resolved against a vocab passed to the constructor. */
  reflection_words?: string[];
  reflection_dynamic?: boolean;
  vocab_size?: number;
}

export class BoundProcessor {
  private readonly config: ProcessorConfig;
  private readonly ids: Set<number>;
  readonly addedIds: number[] = [];
  private readonly dynamic: boolean;
  private expectedSize: number | undefined;
  private t = 0;

  constructor(config: ProcessorConfig, vocabSurfaces?: string[]) {
    this.config = config;
    let ids: number[];
    if (config.reflection_ids !== undefined) {
      ids = config.reflection_ids;
    } else if (vocabSurfaces !== undefined) {
      ids = buildReflectionIds(
        vocabSurfaces,
        config.reflection_words ?? ["wait", "but", "alternatively"],
      );
    } else {
      throw new Error(
        "BoundProcessor needs reflection_ids in the config or a vocab to resolve words",
      );
    }
    this.ids = new Set(ids);
    this.dynamic = config.reflection_dynamic ?? false;
    this.expectedSize = config.vocab_size;
    if (vocabSurfaces !== undefined && this.expectedSize === undefined) {
      this.expectedSize = vocabSurfaces.length;
    }
  }

  /** Current step counter (next position to be processed). */
  get step(): number {
    return this.t;
  }

  reflectionIds(): number[] {
    return [...this.ids].sort((a, b) => a - b);
  }

  reset(): void {
    this.t = 0;
  }

  /**
   * Adjust `logits` in place for the current step and advance the counter.
   *
   * `tOverride` evaluates the schedule at an explicit position instead of
   * the internal counter; the counter still advances by exactly 1.
   */
  process(logits: Float64Array, tOverride?: number): Float64Array {
    if (this.expectedSize === undefined) {
      this.expectedSize = logits.length;
    } else if (logits.length !== this.expectedSize) {
      throw new Error(
        `logits buffer length ${logits.length} != vocab size ${this.expectedSize}`,
      );
    }
    const t = tOverride ?? this.t;
    this.t += 1;
    if (this.dynamic) {
      this.maybeExpand(logits);
    }
    const delta = evaluateSchedule(this.config, t);
    if (delta !== 0.0) {
      for (const id of this.ids) {
        logits[id] += delta;
      }
    }
    return logits;
  }

  /** Top-2 adoption rule on the raw buffer, before any adjustment. */
  private maybeExpand(logits: Float64Array): void {
    if (logits.length < 3) {
      throw new Error("dynamic expansion needs at least 3 vocabulary entries");
    }
    let i1 = -1;
    let i2 = -1;
    let i3 = -1;
    for (let i = 0; i < logits.length; i++) {
      const v = logits[i];
      if (i1 < 0 || v > logits[i1]) {
        i3 = i2;
        i2 = i1;
        i1 = i;
      } else if (i2 < 0 || v > logits[i2]) {
        i3 = i2;
        i2 = i;
      } else if (i3 < 0 || v > logits[i3]) {
        i3 = i;
      }
    }
    if (!this.ids.has(i1) || this.ids.has(i2)) {
      return;
    }
    if (logits[i1] - logits[i2] < logits[i2] - logits[i3]) {
      this.ids.add(i2);
      this.addedIds.push(i2);
    }
  }
}

/** One-shot form: adjust a buffer with an explicit id set and delta source. */
export function processStep(
  processor: BoundProcessor,
  logits: Float64Array,
  tOverride?: number,
): Float64Array {
  return processor.process(logits, tOverride);
}
