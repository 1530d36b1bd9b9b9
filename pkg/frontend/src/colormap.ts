// Residual heat ramp: fixed 0-5 mm scale so runs stay comparable.

export const RESIDUAL_RAMP_MAX_MM = 5.0;

/** Blue (0 mm) through green to red (>= 5 mm), as [r, g, b] in 0..1. */
export function residualColor(mm: number): [number, number, number] {
  const t = Math.min(Math.max(mm / RESIDUAL_RAMP_MAX_MM, 0), 1);
  if (t < 0.5) {
    const s = t * 2;
    return [0, s, 1 - s];
  }
  const s = (t - 0.5) * 2;
  return [s, 1 - s, 0];
}
