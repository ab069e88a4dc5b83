/**
 * Scripted table scorer speaking the core engine's rules-file format:
 * ordered (context-suffix -> logits) rules with a default vector. Used by
 * host-side loops in tests and demos.
 */

export interface ScriptedRules {
  rules?: Array<{ suffix: number[]; logits: number[] }>;
  default_logits: number[];
}

export class ScriptedScorer {
  private readonly rules: Array<{ suffix: number[]; logits: Float64Array }>;
  private readonly defaultLogits: Float64Array;
  readonly vocabSize: number;

  constructor(doc: ScriptedRules) {
    this.defaultLogits = Float64Array.from(doc.default_logits);
    this.vocabSize = this.defaultLogits.length;
    this.rules = (doc.rules ?? []).map((rule) => {
      if (rule.logits.length !== this.vocabSize) {
        throw new Error(
          `rule logits length ${rule.logits.length} != vocab size ${this.vocabSize}`,
        );
      }
      return { suffix: [...rule.suffix], logits: Float64Array.from(rule.logits) };
    });
  }

  /** First rule whose suffix matches the context tail wins. */
  query(context: number[]): Float64Array {
    outer: for (const rule of this.rules) {
      const k = rule.suffix.length;
      if (k > context.length) continue;
      for (let i = 0; i < k; i++) {
        if (context[context.length - k + i] !== rule.suffix[i]) {
          continue outer;
        }
      }
      return Float64Array.from(rule.logits);
    }
    return Float64Array.from(this.defaultLogits);
  }
}
