/** Box overlay rendering.
 *
 * Review mode colors by provenance: model predictions blue, anything the
 * reviewer created or touched orange. Validation-compare mode follows the
 * ground-truth comparison scheme: green = ground truth, blue = matched
 * prediction, red = mismatch (red box and red predicted class name).
 */

import type { BoxPayload } from './types';
import type { EditorBox } from './editor';

export const COLOR_MODEL = '#2f6fdb';
export const COLOR_HUMAN = '#e8811c';
export const COLOR_SELECTED = '#ffd166';
export const COLOR_GROUND_TRUTH = '#1f9d44';
export const COLOR_MATCH = '#2f6fdb';
export const COLOR_MISMATCH = '#d62828';

/** The slice of CanvasRenderingContext2D the overlay uses; tests pass a
 * recording stand-in. The style properties mirror the DOM's union type
 * even though the overlay only ever assigns plain color strings. */
export interface OverlayContext {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  beginPath(): void;
  rect(x: number, y: number, w: number, h: number): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
}

export interface OverlaySize {
  width: number;
  height: number;
}

interface NormBox {
  cx: number;
  cy: number;
  w: number;
  h: number;
}

/** Intersection-over-union of two normalized center boxes. Display-side
 * matching only; the backend owns the evaluation metrics. */
export function iou(a: NormBox, b: NormBox): number {
  const ax0 = a.cx - a.w / 2;
  const ay0 = a.cy - a.h / 2;
  const bx0 = b.cx - b.w / 2;
  const by0 = b.cy - b.h / 2;
  const ix = Math.max(
    0,
    Math.min(ax0 + a.w, bx0 + b.w) - Math.max(ax0, bx0),
  );
  const iy = Math.max(
    0,
    Math.min(ay0 + a.h, by0 + b.h) - Math.max(ay0, by0),
  );
  const inter = ix * iy;
  const union = a.w * a.h + b.w * b.h - inter;
  return union > 0 ? inter / union : 0;
}

export interface ComparedPrediction {
  box: BoxPayload;
  /** Overlaps a ground-truth box (IoU >= threshold) of the same class. */
  matched: boolean;
}

/** Greedy best-IoU assignment of predictions to ground truth; a match
 * must also agree on the class, otherwise the prediction is a mismatch. */
export function matchPredictions(
  groundTruth: BoxPayload[],
  predictions: BoxPayload[],
  iouThreshold = 0.5,
): ComparedPrediction[] {
  const taken = new Set<number>();
  const ranked = predictions
    .map((box, i) => ({ box, i }))
    .sort((a, b) => (b.box.confidence ?? 0) - (a.box.confidence ?? 0));
  const result: ComparedPrediction[] = new Array(predictions.length);
  for (const { box, i } of ranked) {
    let best = -1;
    let bestIou = iouThreshold;
    for (let g = 0; g < groundTruth.length; g++) {
      if (taken.has(g)) continue;
      const overlap = iou(box, groundTruth[g]);
      if (overlap >= bestIou) {
        bestIou = overlap;
        best = g;
      }
    }
    const matched = best >= 0 && groundTruth[best].cls === box.cls;
    if (best >= 0 && matched) taken.add(best);
    result[i] = { box, matched };
  }
  return result;
}

function strokeBox(
  ctx: OverlayContext,
  size: OverlaySize,
  box: NormBox,
  color: string,
  lineWidth: number,
): { x: number; y: number } {
  const x = (box.cx - box.w / 2) * size.width;
  const y = (box.cy - box.h / 2) * size.height;
  ctx.beginPath();
  ctx.strokeStyle = color;
  ctx.lineWidth = lineWidth;
  ctx.rect(x, y, box.w * size.width, box.h * size.height);
  ctx.stroke();
  return { x, y };
}

function label(
  ctx: OverlayContext,
  at: { x: number; y: number },
  text: string,
  color: string,
): void {
  ctx.fillStyle = color;
  ctx.font = '12px sans-serif';
  // Keep labels on-canvas for boxes that touch the top edge.
  ctx.fillText(text, at.x + 2, Math.max(10, at.y - 3));
}

export interface ReviewDrawOptions {
  selectedKey?: number | null;
  showConfidence?: boolean;
}

/** Review mode: one labeled box per editor box. */
export function drawReviewOverlay(
  ctx: OverlayContext,
  size: OverlaySize,
  boxes: readonly EditorBox[],
  options: ReviewDrawOptions = {},
): void {
  ctx.clearRect(0, 0, size.width, size.height);
  for (const box of boxes) {
    const human = box.origin === 'human' || box.touched;
    const selected = box.key === (options.selectedKey ?? null);
    const color = selected
      ? COLOR_SELECTED
      : human
        ? COLOR_HUMAN
        : COLOR_MODEL;
    const corner = strokeBox(ctx, size, box, color, selected ? 3 : 2);
    let text = box.cls;
    if (options.showConfidence && box.confidence !== null) {
      text += ` ${box.confidence.toFixed(2)}`;
    }
    label(ctx, corner, text, color);
  }
}

/** Validation-compare mode: ground truth green; predictions blue when
 * matched, red with a red class name when not. */
export function drawCompareOverlay(
  ctx: OverlayContext,
  size: OverlaySize,
  groundTruth: BoxPayload[],
  predictions: BoxPayload[],
  iouThreshold = 0.5,
): void {
  ctx.clearRect(0, 0, size.width, size.height);
  for (const box of groundTruth) {
    const corner = strokeBox(ctx, size, box, COLOR_GROUND_TRUTH, 2);
    label(ctx, corner, box.cls, COLOR_GROUND_TRUTH);
  }
  for (const { box, matched } of matchPredictions(
    groundTruth,
    predictions,
    iouThreshold,
  )) {
    const color = matched ? COLOR_MATCH : COLOR_MISMATCH;
    const corner = strokeBox(ctx, size, box, color, 2);
    label(ctx, corner, box.cls, color);
  }
}
