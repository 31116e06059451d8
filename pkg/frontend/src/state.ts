/** Draft state for one elicitation answer, on the 0-100 counts scale. */

export type ArmName = "high" | "low";

export interface ClientSubmissionDraft {
  lower: number;
  mode: number;
  upper: number;
  arm: ArmName;
  round: number;
}

/** The strict ordering the backend enforces; checked before submit enables. */
export function orderingValid(draft: ClientSubmissionDraft): boolean {
  return (
    0 <= draft.lower &&
    draft.lower < draft.mode &&
    draft.mode < draft.upper &&
    draft.upper <= 100
  );
}

export function submitEnabled(draft: ClientSubmissionDraft): boolean {
  return orderingValid(draft) && (draft.round === 1 || draft.round === 2);
}
