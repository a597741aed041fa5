// Pointer-to-prexel mapping. The heatmap draws the grid edge to edge, so
// the math is plain proportional division; everything else in the panel
// asks this module instead of redoing it.

export interface Cell {
  row: number;
  col: number;
}

export interface GridBox {
  width: number;
  height: number;
  rows: number;
  cols: number;
}

/** Cell under a pointer position, or null when outside the box. */
export function cellAt(x: number, y: number, box: GridBox): Cell | null {
  if (box.rows < 1 || box.cols < 1) return null;
  if (x < 0 || y < 0 || x >= box.width || y >= box.height) return null;
  return {
    row: Math.min(Math.floor((y / box.height) * box.rows), box.rows - 1),
    col: Math.min(Math.floor((x / box.width) * box.cols), box.cols - 1),
  };
}

/** Pixel rectangle of a cell, for rendering. */
export function cellRect(cell: Cell, box: GridBox) {
  const w = box.width / box.cols;
  const h = box.height / box.rows;
  return { x: cell.col * w, y: cell.row * h, w, h };
}

export function sameCell(a: Cell | null, b: Cell | null): boolean {
  if (a === null || b === null) return a === b;
  return a.row === b.row && a.col === b.col;
}
