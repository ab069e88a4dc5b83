/**
 * Per-position logit adjustments for reflection tokens, numerically
 * identical to the core engine's evaluation.
 *
 * Every formula is written with the exact operation order the core uses,
 * so results agree bit-for-bit on any IEEE-754 runtime: Euclidean
 * remainder via `%` plus a conditional add, and a splitmix64 hash driving
 * the noise schedule instead of a library RNG.
 */

const MASK64 = (1n << 64n) - 1n;
const SQRT3 = Math.sqrt(3.0);

export type ScheduleKind =
  | "none"
  | "tip"
  | "cyclic"
  | "linear_decay"
  | "random_noise"
  | "forced_reflection";

/** Flat schedule fields, mirroring the run-config keys of the core engine. */
export interface ScheduleConfig {
  schedule_kind?: ScheduleKind;
  amplitude?: number;
  period?: number;
  phase_shift?: number;
  alpha?: number;
  window?: number;
  decay_horizon?: number;
  noise_sigma?: number;
  noise_seed?: number | bigint;
}

export class ScheduleParameterError extends Error {}

export function cyclicAdjustment(
  t: number,
  amplitude: number,
  period: number,
  phase = 0.0,
): number {
  if (!(period > 0)) {
    throw new ScheduleParameterError(`period must be positive, got ${period}`);
  }
  if (!(amplitude >= 0)) {
    throw new ScheduleParameterError(`amplitude must be nonnegative, got ${amplitude}`);
  }
  const x = (t + phase) - period / 4.0;
  let r = x % period; // fmod semantics: sign of the dividend
  if (r < 0.0) {
    r += period;
  }
  return amplitude * Math.abs(4.0 * (r / period) - 2.0) - amplitude;
}

export function tipAdjustment(t: number, alpha: number, window: number): number {
  if (window < 0) {
    throw new ScheduleParameterError(`window must be nonnegative, got ${window}`);
  }
  return t < window ? alpha : 0.0;
}

export function linearDecayAdjustment(
  t: number,
  alphaStart: number,
  horizon: number,
): number {
  if (!(horizon > 0)) {
    throw new ScheduleParameterError(`horizon must be positive, got ${horizon}`);
  }
  if (t > horizon) {
    return -alphaStart;
  }
  return alphaStart * (1.0 - (2.0 * t) / horizon);
}

export function splitmix64(x: bigint): bigint {
  x = (x + 0x9e3779b97f4a7c15n) & MASK64;
  let z = x;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return z ^ (z >> 31n);
}

/** Deterministic uniform in [0, 1) keyed by (seed, t). */
export function hashUnit(seed: number | bigint, t: number | bigint): number {
  const s = BigInt.asUintN(64, typeof seed === "bigint" ? seed : BigInt(Math.trunc(seed)));
  const tt = BigInt.asUintN(64, typeof t === "bigint" ? t : BigInt(Math.trunc(t)));
  const h = splitmix64(splitmix64(s) ^ tt);
  return Number(h >> 11n) * 2 ** -53;
}

export function randomAdjustment(
  t: number,
  sigma: number,
  seed: number | bigint,
): number {
  if (!(sigma >= 0)) {
    throw new ScheduleParameterError(`sigma must be nonnegative, got ${sigma}`);
  }
  const u = hashUnit(seed, t);
  return (2.0 * u - 1.0) * SQRT3 * sigma;
}

export function evaluateSchedule(config: ScheduleConfig, t: number): number {
  if (t < 0) {
    throw new ScheduleParameterError(`t must be nonnegative, got ${t}`);
  }
  const kind = config.schedule_kind ?? "none";
  switch (kind) {
    case "none":
    case "forced_reflection":
      return 0.0;
    case "tip":
      return tipAdjustment(t, config.alpha ?? 0.0, config.window ?? 0);
    case "cyclic":
      return cyclicAdjustment(
        t,
        config.amplitude ?? 0.0,
        config.period ?? 1.0,
        config.phase_shift ?? 0.0,
      );
    case "linear_decay":
      return linearDecayAdjustment(t, config.alpha ?? 0.0, config.decay_horizon ?? 1);
    case "random_noise":
      return randomAdjustment(t, config.noise_sigma ?? 0.0, config.noise_seed ?? 0);
    default:
      throw new ScheduleParameterError(`unknown schedule kind: ${String(kind)}`);
  }
}
