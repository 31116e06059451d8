/**
 * The UI speaks "patients out of 100"; the API speaks probabilities in
 * [0, 1].  These two helpers are the only place the conversion happens, so
 * every displayed value round-trips through it exactly once.
 */

export function countsToUnit(counts: number): number {
  return counts / 100;
}

export function unitToCounts(p: number): number {
  return p * 100;
}
