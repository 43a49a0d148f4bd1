import type { Score } from "./types.js";

export interface HotkeyActions {
  score(value: Score): void;
  move(delta: number): void;
  submit(): void;
}

/**
 * Keyboard shortcuts for annotation throughput:
 *   1 / 0 / -  score the highlighted relation row and advance
 *   ArrowUp / ArrowDown (or k / j)  move the highlight
 *   Enter  submit once every row is scored
 * Returns the handler so callers can detach it again.
 */
export function bindHotkeys(
  target: { addEventListener(type: "keydown", fn: (e: KeyboardEvent) => void): void },
  actions: HotkeyActions,
): (event: KeyboardEvent) => void {
  const handler = (event: KeyboardEvent) => {
    const key = event.key;
    if (key === "1") actions.score(1);
    else if (key === "0") actions.score(0);
    else if (key === "-") actions.score(-1);
    else if (key === "ArrowDown" || key === "j") actions.move(1);
    else if (key === "ArrowUp" || key === "k") actions.move(-1);
    else if (key === "Enter") actions.submit();
    else return;
    event.preventDefault?.();
  };
  target.addEventListener("keydown", handler);
  return handler;
}
