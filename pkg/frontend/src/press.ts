// Press interaction. A pointer has no force sensing, so the force comes
// from a slider and the pointer only picks the prexel. While a cell is
// held the press is re-sent on a timer (the service treats it as "set the
// virtual load"), dragging onto another cell releases the old one first,
// and lifting the pointer releases with force zero.

import { Cell, sameCell } from "./geometry.js";

/**
 * ``fresh`` is true for deliberate changes (new cell, new force, release)
 * and false for the keep-alive repeats, so callers can time round trips
 * from the action itself rather than from the latest repeat.
 */
export type PressEmit = (row: number, col: number, forceN: number, fresh: boolean) => void;

export const REPEAT_HZ = 33;

export class PressDriver {
  forceN = 5.0;
  private held: Cell | null = null;
  private pointerDown = false;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private emit: PressEmit, private repeatHz: number = REPEAT_HZ) {}

  down(cell: Cell | null): void {
    this.pointerDown = true;
    if (cell === null) return;
    this.held = cell;
    this.emit(cell.row, cell.col, this.forceN, true);
    this.startTimer();
  }

  move(cell: Cell | null): void {
    if (!this.pointerDown || sameCell(cell, this.held)) return;
    if (this.held !== null) {
      this.emit(this.held.row, this.held.col, 0, true);
    }
    this.held = cell;
    if (cell !== null) {
      this.emit(cell.row, cell.col, this.forceN, true);
      this.startTimer();
    } else {
      this.stopTimer();
    }
  }

  up(): void {
    if (this.held !== null) {
      this.emit(this.held.row, this.held.col, 0, true);
    }
    this.held = null;
    this.pointerDown = false;
    this.stopTimer();
  }

  setForce(forceN: number): void {
    this.forceN = Math.min(Math.max(forceN, 0), 15);
    if (this.held !== null) {
      this.emit(this.held.row, this.held.col, this.forceN, true);
    }
  }

  get heldCell(): Cell | null {
    return this.held;
  }

  dispose(): void {
    this.stopTimer();
  }

  private startTimer(): void {
    this.stopTimer();
    this.timer = setInterval(() => {
      if (this.held !== null) {
        this.emit(this.held.row, this.held.col, this.forceN, false);
      }
    }, 1000 / this.repeatHz);
  }

  private stopTimer(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
