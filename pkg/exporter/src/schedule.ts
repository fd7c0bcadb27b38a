/** Variance schedule for the deterministic inversion steps. */

export interface Schedule {
  tSteps: number;
  /** cumulative products, index i is timestep i + 1 */
  alphaBar: Float64Array;
}

export const BASE_STEPS = 1000;
export const SAMPLE_STRIDE = 8;

export function makeSchedule(
  tSteps: number,
  betaStart = 0.00085,
  betaEnd = 0.012,
  spacing: "scaled_linear" | "linear" = "scaled_linear",
): Schedule {
  if (!(betaStart > 0 && betaStart <= betaEnd && betaEnd < 1)) {
    throw new Error(`invalid beta range [${betaStart}, ${betaEnd}]`);
  }
  if (tSteps < 1) throw new Error("tSteps must be >= 1");
  const beta = new Float64Array(tSteps);
  for (let i = 0; i < tSteps; i++) {
    const frac = tSteps === 1 ? 0 : i / (tSteps - 1);
    if (spacing === "linear") {
      beta[i] = betaStart + frac * (betaEnd - betaStart);
    } else {
      const s = Math.sqrt(betaStart) + frac * (Math.sqrt(betaEnd) - Math.sqrt(betaStart));
      beta[i] = s * s;
    }
  }
  const alphaBar = new Float64Array(tSteps);
  let product = 1.0;
  for (let i = 0; i < tSteps; i++) {
    product *= 1.0 - beta[i];
    alphaBar[i] = product;
  }
  return { tSteps, alphaBar };
}

/** Subsample the long base schedule every `stride` steps; the cumulative
 *  products come from the base schedule at the sampled indices. */
export function makeSubsampledSchedule(tSteps: number, stride = SAMPLE_STRIDE): Schedule {
  if (tSteps * stride > BASE_STEPS) {
    throw new Error(`${tSteps} steps at stride ${stride} exceed the ${BASE_STEPS}-step base`);
  }
  const base = makeSchedule(BASE_STEPS);
  const alphaBar = new Float64Array(tSteps);
  for (let i = 0; i < tSteps; i++) alphaBar[i] = base.alphaBar[i * stride];
  return { tSteps, alphaBar };
}

/** alpha-bar with the clean-sample convention abar(0) == 1. */
export function abar(schedule: Schedule, t: number): number {
  if (t < 0 || t > schedule.tSteps) throw new Error(`timestep ${t} out of range`);
  return t === 0 ? 1.0 : schedule.alphaBar[t - 1];
}
