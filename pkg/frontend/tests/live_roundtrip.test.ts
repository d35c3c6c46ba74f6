/** Round trip against a live review service: the backend is started as a
 * real subprocess and everything below talks to it over HTTP only.
 * Covers: submit corrections and refetch reproduces the edited box set
 * exactly; merge bumps the dataset version and updates class counts.
 */

import { ChildProcess, execFileSync, spawn } from 'node:child_process';
import { mkdtempSync, rmSync, writeFileSync, readFileSync, mkdirSync } from 'node:fs';
import { tmpdir } from 'node:os';
import path from 'node:path';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ConflictError, ReviewApi } from '../src/api';
import { EditorState } from '../src/editor';
import type { BoxPayload } from '../src/types';

const PORT = 8913;
const BASE = `http://127.0.0.1:${PORT}`;
const PYTHON = process.env.PYTHON ?? 'python3';

let workDir: string;
let server: ChildProcess | null = null;
const api = new ReviewApi(BASE);

// Pool fixture: candidates 0..2 carry a mast cell prediction, 3..5 a
// neutrophil; the manifest starts with ten neutrophil-only tiles, so the
// scarcity-weighted query must pick the mast-cell candidates.
const FIXTURE_SCRIPT = `
import sys
from pathlib import Path
from PIL import Image
from marrowcyto.classes import CellClass
from marrowcyto.dataset import AnnotationRecord, BoxAnnotation, DatasetManifest
from marrowcyto.detect import BBox

root = Path(sys.argv[1])
records = [
    AnnotationRecord(
        tile_id=f"seed{i}",
        boxes=[BoxAnnotation(bbox=BBox(0.5, 0.5, 0.25, 0.25), cls=CellClass.NEUTROPHIL)],
    )
    for i in range(10)
]
DatasetManifest(records={r.tile_id: r for r in records}).save(root / "manifest.json")
(root / "pool").mkdir()
(root / "images").mkdir()
for i in range(6):
    cls = CellClass.MAST_CELL if i < 3 else CellClass.NEUTROPHIL
    (root / "pool" / f"cand{i}.txt").write_text(f"{int(cls)} 0.5 0.5 0.25 0.25 0.625\\n")
    Image.new("RGB", (64, 64), (120, 120, 120)).save(root / "images" / f"cand{i}.png")
print("fixtures ready")
`;

function cli(args: string[]): string {
  return execFileSync(PYTHON, ['-m', 'marrowcyto.cli', ...args], {
    cwd: workDir,
    encoding: 'utf8',
  });
}

async function waitForServer(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastErr: unknown = null;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/queue`);
      if (resp.ok) return;
    } catch (err) {
      lastErr = err;
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`review service did not come up: ${lastErr}`);
}

function sortedBoxes(boxes: BoxPayload[]): BoxPayload[] {
  return [...boxes].sort((a, b) => a.cx - b.cx || a.cy - b.cy || (a.cls < b.cls ? -1 : 1));
}

beforeAll(async () => {
  workDir = mkdtempSync(path.join(tmpdir(), 'review-ui-live-'));
  mkdirSync(path.join(workDir, 'out'));
  writeFileSync(path.join(workDir, 'fixtures.py'), FIXTURE_SCRIPT);
  execFileSync(PYTHON, [path.join(workDir, 'fixtures.py'), workDir], {
    encoding: 'utf8',
  });
  cli([
    'al', 'query',
    '--manifest', 'manifest.json',
    '--pool', 'pool',
    '--n', '3',
    '--out', 'selection.json',
  ]);
  cli([
    'al', 'export',
    '--pool', 'pool',
    '--images', 'images',
    '--selection', 'selection.json',
    '--out', 'package',
  ]);
  server = spawn(
    PYTHON,
    [
      '-m', 'marrowcyto.cli', 'serve-review',
      '--package', 'package',
      '--store', 'store.json',
      '--manifest', 'manifest.json',
      '--host', '127.0.0.1',
      '--port', String(PORT),
    ],
    { cwd: workDir, stdio: 'ignore' },
  );
  await waitForServer();
});

afterAll(() => {
  server?.kill('SIGTERM');
  rmSync(workDir, { recursive: true, force: true });
});

describe('live review service', () => {
  it('serves the exported queue', async () => {
    const queue = await api.getQueue();
    expect(queue.total).toBe(3);
    expect(queue.archived).toBe(false);
    expect(queue.tiles.every((t) => t.status === 'untouched' && t.revision === 0)).toBe(true);
    const ids = queue.tiles.map((t) => t.tile_id).sort();
    expect(ids).toEqual(['cand0', 'cand1', 'cand2']);
  });

  it('serves tile images', async () => {
    const queue = await api.getQueue();
    const resp = await fetch(api.imageUrl(queue.tiles[0].tile_id));
    expect(resp.status).toBe(200);
    const bytes = new Uint8Array(await resp.arrayBuffer());
    expect([...bytes.slice(0, 4)]).toEqual([0x89, 0x50, 0x4e, 0x47]);
  });

  it('submitting then refetching reproduces the edited box set exactly', async () => {
    const queue = await api.getQueue();
    const tileId = queue.tiles[0].tile_id;
    const detail = await api.getTile(tileId);
    expect(detail.predictions).toHaveLength(1);
    expect(detail.corrections).toBeNull();

    // Edit like a reviewer: relabel the prediction, add a missed cell,
    // then submit through the same payload builder the app uses.
    const editor = EditorState.fromTile(detail);
    editor.relabel(editor.boxes[0].key, 'blast');
    editor.addBox(0.0625, 0.0625, 0.3125, 0.3125, 'eosinophil');
    const payload = editor.buildPayload('confirmed');
    expect(payload.boxes.map((b) => b.source).sort()).toEqual(['human', 'human']);

    const ack = await api.postCorrections(tileId, payload);
    expect(ack).toEqual({ tile_id: tileId, revision: 1, status: 'confirmed' });

    const refetched = await api.getTile(tileId);
    expect(refetched.revision).toBe(1);
    expect(refetched.status).toBe('confirmed');
    expect(sortedBoxes(refetched.corrections ?? [])).toEqual(
      sortedBoxes(payload.boxes),
    );
    // The model predictions are untouched by the edit.
    expect(refetched.predictions).toEqual(detail.predictions);
  });

  it('rejects stale revisions with a conflict', async () => {
    const queue = await api.getQueue();
    const tileId = queue.tiles[0].tile_id;
    const stale = { revision: 0, status: 'confirmed' as const, boxes: [] };
    await expect(api.postCorrections(tileId, stale)).rejects.toBeInstanceOf(
      ConflictError,
    );
    const detail = await api.getTile(tileId);
    expect(detail.corrections).not.toEqual([]);
  });

  it('merge bumps the dataset version and updates class counts', async () => {
    const queue = await api.getQueue();
    for (const tile of queue.tiles) {
      if (tile.status === 'confirmed') continue;
      const editor = EditorState.fromTile(await api.getTile(tile.tile_id));
      await api.postCorrections(
        tile.tile_id,
        editor.buildPayload('confirmed'),
      );
    }

    const result = await api.merge('2026-08-13T00:00:00Z');
    expect(result.version).toBe(1);
    expect(result.merged_tiles).toBe(3);
    // One tile was relabeled mast_cell -> blast + eosinophil; two were
    // confirmed as predicted (mast cells); ten neutrophil seeds remain.
    expect(result.class_counts).toEqual({
      neutrophil: 10,
      mast_cell: 2,
      blast: 1,
      eosinophil: 1,
    });

    const manifest = JSON.parse(
      readFileSync(path.join(workDir, 'manifest.json'), 'utf8'),
    ) as { version: number };
    expect(manifest.version).toBe(1);

    // The queue is archived afterwards: further writes conflict.
    const archived = await api.getQueue();
    expect(archived.archived).toBe(true);
    await expect(
      api.postCorrections(queue.tiles[0].tile_id, {
        revision: 2,
        status: 'confirmed',
        boxes: [],
      }),
    ).rejects.toBeInstanceOf(ConflictError);
  });
});
