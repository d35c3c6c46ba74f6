import { describe, expect, it } from 'vitest';

import { EditorState, MIN_BOX_EDGE, ZeroAreaBoxError } from '../src/editor';
import type { BoxPayload, TileDetail } from '../src/types';

function modelBox(
  cls: string,
  cx = 0.5,
  cy = 0.5,
  confidence: number | null = 0.75,
): BoxPayload {
  return { cx, cy, w: 0.25, h: 0.25, cls, source: 'model', confidence };
}

function tile(
  predictions: BoxPayload[],
  corrections: BoxPayload[] | null = null,
  revision = 0,
): TileDetail {
  return {
    tile_id: 't0',
    position: 0,
    image: '/tile/t0/image',
    predictions,
    corrections,
    revision,
    status: corrections ? 'edited' : 'untouched',
  };
}

describe('loading', () => {
  it('mirrors the server predictions until edited', () => {
    const detail = tile([modelBox('blast'), modelBox('lymphocyte', 0.2, 0.2)]);
    const state = EditorState.fromTile(detail);
    expect(state.dirty).toBe(false);
    expect(state.boxes.map((b) => [b.cx, b.cy, b.w, b.h, b.cls])).toEqual(
      detail.predictions.map((p) => [p.cx, p.cy, p.w, p.h, p.cls]),
    );
    expect(state.boxes.every((b) => b.origin === 'model' && !b.touched)).toBe(
      true,
    );
  });

  it('prefers saved corrections over predictions', () => {
    const corrections: BoxPayload[] = [
      { cx: 0.3, cy: 0.3, w: 0.1, h: 0.1, cls: 'mast_cell', source: 'human', confidence: null },
    ];
    const state = EditorState.fromTile(tile([modelBox('blast')], corrections, 2));
    expect(state.boxes).toHaveLength(1);
    expect(state.boxes[0].cls).toBe('mast_cell');
    expect(state.boxes[0].origin).toBe('human');
    expect(state.revision).toBe(2);
  });

  it('rejects unknown class labels', () => {
    expect(() => EditorState.fromTile(tile([modelBox('zombie')]))).toThrow(
      /unknown class/,
    );
  });
});

describe('edit actions', () => {
  it('relabel produces a payload with one class change', () => {
    const state = EditorState.fromTile(tile([modelBox('blast')]));
    state.relabel(state.boxes[0].key, 'lymphocyte');
    expect(state.dirty).toBe(true);
    expect(state.diff()).toEqual({ added: 0, removed: 0, changed: 1 });
    const payload = state.buildPayload('edited');
    expect(payload.boxes).toHaveLength(1);
    expect(payload.boxes[0].cls).toBe('lymphocyte');
  });

  it('relabel to the same class is a no-op', () => {
    const state = EditorState.fromTile(tile([modelBox('blast')]));
    state.relabel(state.boxes[0].key, 'blast');
    expect(state.dirty).toBe(false);
    expect(state.diff()).toEqual({ added: 0, removed: 0, changed: 0 });
  });

  it('deleting every box yields a diff with 3 deletions', () => {
    const state = EditorState.fromTile(
      tile([modelBox('blast'), modelBox('monocyte', 0.2, 0.2), modelBox('debris', 0.8, 0.8)]),
    );
    state.deleteAll();
    expect(state.diff()).toEqual({ added: 0, removed: 3, changed: 0 });
    expect(state.buildPayload('edited').boxes).toEqual([]);
  });

  it('drawing a new box adds one human-sourced entry', () => {
    const state = EditorState.fromTile(tile([modelBox('blast')]));
    state.addBox(0.1, 0.1, 0.3, 0.25, 'eosinophil');
    expect(state.diff()).toEqual({ added: 1, removed: 0, changed: 0 });
    const added = state.buildPayload('edited').boxes[1];
    expect(added).toEqual({
      cx: 0.2,
      cy: expect.closeTo(0.175, 12),
      w: expect.closeTo(0.2, 12),
      h: expect.closeTo(0.15, 12),
      cls: 'eosinophil',
      source: 'human',
      confidence: null,
    });
  });

  it('rejects zero-area boxes client side', () => {
    const state = EditorState.fromTile(tile([]));
    expect(() => state.addBox(0.5, 0.5, 0.5, 0.9, 'blast')).toThrow(
      ZeroAreaBoxError,
    );
    expect(() =>
      state.addBox(0.1, 0.1, 0.1 + MIN_BOX_EDGE / 2, 0.4, 'blast'),
    ).toThrow(ZeroAreaBoxError);
    expect(state.boxes).toHaveLength(0);
    expect(state.dirty).toBe(false);
  });

  it('move and resize mark the box as touched and clamp to the tile', () => {
    const state = EditorState.fromTile(tile([modelBox('blast', 0.9, 0.9)]));
    const key = state.boxes[0].key;
    state.moveBox(key, 0.5, 0.5);
    expect(state.boxes[0].cx).toBe(1);
    expect(state.boxes[0].cy).toBe(1);
    state.resizeBox(key, 0.4, 0.4);
    expect(state.boxes[0].touched).toBe(true);
    expect(() => state.resizeBox(key, 0, 0.2)).toThrow(ZeroAreaBoxError);
  });

  it('selection follows deletes', () => {
    const state = EditorState.fromTile(tile([modelBox('blast')]));
    const key = state.boxes[0].key;
    state.select(key);
    expect(state.selected?.key).toBe(key);
    state.deleteBox(key);
    expect(state.selected).toBeNull();
  });
});

describe('submitted sources', () => {
  it('confirming untouched predictions sends model-confirmed with confidence', () => {
    const state = EditorState.fromTile(tile([modelBox('blast', 0.5, 0.5, 0.625)]));
    const payload = state.buildPayload('confirmed');
    expect(payload.status).toBe('confirmed');
    expect(payload.revision).toBe(0);
    expect(payload.boxes[0].source).toBe('model-confirmed');
    expect(payload.boxes[0].confidence).toBe(0.625);
  });

  it('any touched box becomes human and sheds its confidence', () => {
    const state = EditorState.fromTile(
      tile([modelBox('blast'), modelBox('monocyte', 0.2, 0.2)]),
    );
    state.moveBox(state.boxes[0].key, 0.01, 0);
    const payload = state.buildPayload('edited');
    expect(payload.boxes[0].source).toBe('human');
    expect(payload.boxes[0].confidence).toBeNull();
    expect(payload.boxes[1].source).toBe('model-confirmed');
  });
});
