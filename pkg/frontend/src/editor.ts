/** Per-tile editing state.
 *
 * Boxes live in normalized [0,1] coordinates so edits are resolution
 * independent across zoom. A tile starts as the server payload verbatim;
 * the first mutation flips it to dirty. Submitted boxes carry source
 * "human" when the reviewer created or touched them, and
 * "model-confirmed" when an untouched model prediction is confirmed
 * as-is (its confidence is kept; human boxes have none).
 */

import type { BoxPayload, CorrectionsRequest, TileDetail } from './types';
import type { CellClassName } from './classes';
import { isCellClassName } from './classes';

// Smallest box edge the editor will create or keep after a resize.
export const MIN_BOX_EDGE = 0.004;

export interface EditorBox {
  key: number;
  cx: number;
  cy: number;
  w: number;
  h: number;
  cls: CellClassName;
  /** Where the box came from when the tile was loaded. */
  origin: 'model' | 'human';
  /** True once the reviewer moved/resized/relabeled this box. */
  touched: boolean;
  confidence: number | null;
}

export interface BoxDiff {
  added: number;
  removed: number;
  changed: number;
}

export class ZeroAreaBoxError extends Error {
  constructor() {
    super(`boxes must be at least ${MIN_BOX_EDGE} on each edge`);
    this.name = 'ZeroAreaBoxError';
  }
}

const clamp = (v: number, lo: number, hi: number) =>
  Math.min(hi, Math.max(lo, v));

function payloadToBox(payload: BoxPayload, key: number): EditorBox {
  if (!isCellClassName(payload.cls)) {
    throw new Error(`unknown class label ${JSON.stringify(payload.cls)}`);
  }
  return {
    key,
    cx: payload.cx,
    cy: payload.cy,
    w: payload.w,
    h: payload.h,
    cls: payload.cls,
    origin: payload.source === 'human' ? 'human' : 'model',
    touched: false,
    confidence: payload.confidence,
  };
}

export class EditorState {
  readonly tileId: string;
  readonly revision: number;
  private items: EditorBox[];
  private baseline: Map<number, EditorBox>;
  private nextKey: number;
  private mutated = false;
  selectedKey: number | null = null;

  private constructor(tileId: string, revision: number, boxes: EditorBox[]) {
    this.tileId = tileId;
    this.revision = revision;
    this.items = boxes;
    this.baseline = new Map(boxes.map((b) => [b.key, { ...b }]));
    this.nextKey = boxes.length;
  }

  /** Seed from saved corrections when they exist, else from the model
   * predictions, so the canvas shows exactly what the server holds. */
  static fromTile(detail: TileDetail): EditorState {
    const source = detail.corrections ?? detail.predictions;
    return new EditorState(
      detail.tile_id,
      detail.revision,
      source.map(payloadToBox),
    );
  }

  get boxes(): readonly EditorBox[] {
    return this.items;
  }

  get dirty(): boolean {
    return this.mutated;
  }

  get selected(): EditorBox | null {
    return this.items.find((b) => b.key === this.selectedKey) ?? null;
  }

  select(key: number | null): void {
    this.selectedKey = key;
  }

  private find(key: number): EditorBox {
    const box = this.items.find((b) => b.key === key);
    if (!box) throw new Error(`no box with key ${key}`);
    return box;
  }

  /** Finish a drag: corners in normalized coordinates, any order. */
  addBox(
    x0: number,
    y0: number,
    x1: number,
    y1: number,
    cls: CellClassName,
  ): EditorBox {
    const w = Math.abs(x1 - x0);
    const h = Math.abs(y1 - y0);
    if (w < MIN_BOX_EDGE || h < MIN_BOX_EDGE) throw new ZeroAreaBoxError();
    const box: EditorBox = {
      key: this.nextKey++,
      cx: clamp((x0 + x1) / 2, 0, 1),
      cy: clamp((y0 + y1) / 2, 0, 1),
      w: Math.min(w, 1),
      h: Math.min(h, 1),
      cls,
      origin: 'human',
      touched: true,
      confidence: null,
    };
    this.items.push(box);
    this.mutated = true;
    this.selectedKey = box.key;
    return box;
  }

  moveBox(key: number, dx: number, dy: number): void {
    const box = this.find(key);
    box.cx = clamp(box.cx + dx, 0, 1);
    box.cy = clamp(box.cy + dy, 0, 1);
    this.touch(box);
  }

  resizeBox(key: number, w: number, h: number): void {
    if (w < MIN_BOX_EDGE || h < MIN_BOX_EDGE) throw new ZeroAreaBoxError();
    const box = this.find(key);
    box.w = Math.min(w, 1);
    box.h = Math.min(h, 1);
    this.touch(box);
  }

  relabel(key: number, cls: CellClassName): void {
    const box = this.find(key);
    if (box.cls === cls) return;
    box.cls = cls;
    this.touch(box);
  }

  deleteBox(key: number): void {
    this.find(key);
    this.items = this.items.filter((b) => b.key !== key);
    if (this.selectedKey === key) this.selectedKey = null;
    this.mutated = true;
  }

  deleteAll(): void {
    if (!this.items.length) return;
    this.items = [];
    this.selectedKey = null;
    this.mutated = true;
  }

  private touch(box: EditorBox): void {
    box.touched = true;
    box.confidence = null;
    this.mutated = true;
  }

  /** Change summary against the loaded payload, for the status line. */
  diff(): BoxDiff {
    let added = 0;
    let changed = 0;
    const seen = new Set<number>();
    for (const box of this.items) {
      const base = this.baseline.get(box.key);
      if (!base) {
        added += 1;
        continue;
      }
      seen.add(box.key);
      if (
        base.cls !== box.cls ||
        base.cx !== box.cx ||
        base.cy !== box.cy ||
        base.w !== box.w ||
        base.h !== box.h
      ) {
        changed += 1;
      }
    }
    const removed = this.baseline.size - seen.size;
    return { added, removed, changed };
  }

  /** The full corrected box set in wire form. Only the explicit confirm
   * or save action should ever send this anywhere. */
  buildPayload(status: 'edited' | 'confirmed'): CorrectionsRequest {
    return {
      revision: this.revision,
      status,
      boxes: this.items.map((box) => ({
        cx: box.cx,
        cy: box.cy,
        w: box.w,
        h: box.h,
        cls: box.cls,
        source:
          box.origin === 'human' || box.touched ? 'human' : 'model-confirmed',
        confidence: box.confidence,
      })),
    };
  }
}
