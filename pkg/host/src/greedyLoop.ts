/**
 * A minimal host-side sampling loop with the processor mounted at the
 * logits hook point, the way an inference framework would call it.
 */

import type { BoundProcessor } from "./processor.js";

export interface Scorer {
  query(context: number[]): Float64Array;
}

export interface GreedyLoopOptions {
  maxNewTokens: number;
  stopIds?: Set<number>;
}

/** Lowest id wins ties, matching the core engine's greedy rule. */
export function argmaxLowestId(logits: Float64Array): number {
  let best = 0;
  for (let i = 1; i < logits.length; i++) {
    if (logits[i] > logits[best]) {
      best = i;
    }
  }
  return best;
}

export function greedyLoop(
  scorer: Scorer,
  promptIds: number[],
  processor: BoundProcessor,
  options: GreedyLoopOptions,
): number[] {
  const stopIds = options.stopIds ?? new Set();
  const context = [...promptIds];
  const out: number[] = [];
  processor.reset();
  for (let i = 0; i < options.maxNewTokens; i++) {
    const logits = scorer.query(context);
    const adjusted = processor.process(logits); // the hook point
    const token = argmaxLowestId(adjusted);
    out.push(token);
    context.push(token);
    if (stopIds.has(token)) {
      break;
    }
  }
  return out;
}
