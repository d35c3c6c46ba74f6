/** Composition root: wires the API client, queue model, per-tile editor,
 * canvas overlay and keyboard map to the DOM. All mutating traffic goes
 * through explicit confirm/save actions; navigation guards unsaved edits.
 */

import { ReviewApi, ConflictError, ApiError } from './api';
import { CELL_CLASSES, CLASS_HOTKEYS, displayName } from './classes';
import type { CellClassName } from './classes';
import { EditorState, ZeroAreaBoxError, MIN_BOX_EDGE } from './editor';
import type { EditorBox } from './editor';
import { keyToAction } from './keyboard';
import { drawReviewOverlay } from './overlay';
import { QueueModel } from './queue';

const CANVAS_SIZE = 640;
const HANDLE_PX = 8;

interface DragState {
  mode: 'draw' | 'move' | 'resize';
  key: number | null;
  startX: number;
  startY: number;
  lastX: number;
  lastY: number;
}

class ReviewApp {
  private api: ReviewApi;
  private queue!: QueueModel;
  private editor: EditorState | null = null;
  private showConfidence = false;
  private addMode = false;
  private pendingClass: CellClassName = CELL_CLASSES[0];
  private readOnly = false;
  private drag: DragState | null = null;
  private image = new Image();
  private imageFailed = false;

  private canvas!: HTMLCanvasElement;
  private statusEl!: HTMLElement;
  private progressEl!: HTMLElement;
  private queueEl!: HTMLElement;
  private pickerEl!: HTMLElement;
  private bannerEl!: HTMLElement;

  constructor(private root: HTMLElement, baseUrl: string) {
    this.api = new ReviewApi(baseUrl);
  }

  async start(): Promise<void> {
    this.buildLayout();
    const queue = await this.api.getQueue();
    this.queue = new QueueModel(queue);
    if (queue.archived) {
      this.banner('This queue has been merged and is read only.');
      this.readOnly = true;
    }
    if (this.queue.total > 0) await this.loadCurrent();
    this.renderQueue();
    window.addEventListener('keydown', (ev) => this.onKey(ev));
  }

  private buildLayout(): void {
    this.root.innerHTML = `
      <header>
        <span id="progress"></span>
        <button id="merge">Merge confirmed</button>
        <span class="hint">Enter confirm, s save, a draw, d delete, c confidence, n/p navigate</span>
      </header>
      <div id="banner" hidden></div>
      <main>
        <nav id="queue"></nav>
        <section>
          <canvas id="board" width="${CANVAS_SIZE}" height="${CANVAS_SIZE}"></canvas>
          <div id="status"></div>
        </section>
        <aside id="picker"></aside>
      </main>`;
    this.canvas = this.root.querySelector('#board') as HTMLCanvasElement;
    this.statusEl = this.root.querySelector('#status') as HTMLElement;
    this.progressEl = this.root.querySelector('#progress') as HTMLElement;
    this.queueEl = this.root.querySelector('#queue') as HTMLElement;
    this.pickerEl = this.root.querySelector('#picker') as HTMLElement;
    this.bannerEl = this.root.querySelector('#banner') as HTMLElement;

    this.buildPicker();
    const mergeBtn = this.root.querySelector('#merge') as HTMLButtonElement;
    mergeBtn.addEventListener('click', () => void this.merge());

    this.canvas.addEventListener('mousedown', (ev) => this.onMouseDown(ev));
    this.canvas.addEventListener('mousemove', (ev) => this.onMouseMove(ev));
    this.canvas.addEventListener('mouseup', () => this.onMouseUp());
    this.image.addEventListener('load', () => this.draw());
    this.image.addEventListener('error', () => {
      this.imageFailed = true;
      this.draw();
    });
  }

  /** Exactly the 19 canonical classes, one button and hotkey each. */
  private buildPicker(): void {
    this.pickerEl.innerHTML = '';
    CELL_CLASSES.forEach((cls, i) => {
      const btn = document.createElement('button');
      btn.className = 'class-option';
      btn.dataset.cls = cls;
      btn.textContent = `${CLASS_HOTKEYS[i]}  ${displayName(cls)}`;
      btn.addEventListener('click', () => this.applyClass(cls));
      this.pickerEl.appendChild(btn);
    });
  }

  private async loadCurrent(): Promise<void> {
    const tile = this.queue.current;
    const detail = await this.api.getTile(tile.tile_id);
    this.editor = EditorState.fromTile(detail);
    this.imageFailed = false;
    this.image.src = this.api.imageUrl(tile.tile_id);
    this.status('');
    this.draw();
    this.renderQueue();
  }

  private draw(): void {
    const ctx = this.canvas.getContext('2d');
    if (!ctx || !this.editor) return;
    ctx.clearRect(0, 0, CANVAS_SIZE, CANVAS_SIZE);
    if (this.imageFailed) {
      ctx.fillStyle = '#888';
      ctx.font = '16px sans-serif';
      ctx.fillText('image failed to load', 20, CANVAS_SIZE / 2);
    } else if (this.image.complete && this.image.naturalWidth > 0) {
      ctx.drawImage(this.image, 0, 0, CANVAS_SIZE, CANVAS_SIZE);
    }
    drawReviewOverlay(
      ctx,
      { width: CANVAS_SIZE, height: CANVAS_SIZE },
      this.editor.boxes,
      {
        selectedKey: this.editor.selectedKey,
        showConfidence: this.showConfidence,
      },
    );
    this.progressEl.textContent = this.queue.progress;
  }

  private renderQueue(): void {
    this.queueEl.innerHTML = '';
    this.queue.tiles.forEach((tile, i) => {
      const row = document.createElement('div');
      row.className = 'queue-row' + (i === this.queue.position ? ' active' : '');
      row.textContent = `${tile.tile_id} [${tile.status}]`;
      row.addEventListener('click', () => void this.moveTo(i));
      this.queueEl.appendChild(row);
    });
  }

  private banner(text: string): void {
    this.bannerEl.textContent = text;
    this.bannerEl.hidden = text === '';
  }

  private status(text: string): void {
    this.statusEl.textContent = text;
  }

  private diffSummary(): string {
    if (!this.editor) return '';
    const d = this.editor.diff();
    return `+${d.added} -${d.removed} ~${d.changed}`;
  }

  // ---- navigation ----

  private async moveTo(position: number): Promise<void> {
    const dirty = this.editor?.dirty ?? false;
    const intent = this.queue.navigate(position, dirty);
    if (intent.kind === 'blocked') {
      if (
        dirty &&
        position >= 0 &&
        position < this.queue.total &&
        window.confirm('Discard unsaved edits on this tile?')
      ) {
        this.queue.discardAndMove(position);
        await this.loadCurrent();
      }
      return;
    }
    await this.loadCurrent();
  }

  // ---- edit actions ----

  private applyClass(cls: CellClassName): void {
    this.pendingClass = cls;
    if (this.readOnly || !this.editor) return;
    if (this.editor.selectedKey !== null) {
      this.editor.relabel(this.editor.selectedKey, cls);
      this.status(`relabeled to ${cls}; ${this.diffSummary()}`);
      this.draw();
    } else {
      this.status(`next drawn box: ${cls}`);
    }
  }

  private deleteSelected(): void {
    if (this.readOnly || !this.editor || this.editor.selectedKey === null) return;
    this.editor.deleteBox(this.editor.selectedKey);
    this.status(`deleted; ${this.diffSummary()}`);
    this.draw();
  }

  private async submit(status: 'edited' | 'confirmed'): Promise<void> {
    if (this.readOnly || !this.editor) return;
    try {
      const response = await this.api.postCorrections(
        this.editor.tileId,
        this.editor.buildPayload(status),
      );
      this.queue.markSaved(response.tile_id, response.revision, response.status);
      this.status(`${status} at revision ${response.revision}`);
      await this.loadCurrent();
      if (status === 'confirmed') {
        await this.moveTo(this.queue.position + 1);
      }
    } catch (err) {
      if (err instanceof ConflictError) {
        // Someone else moved this tile; show their state, read only.
        this.readOnly = true;
        this.banner(`Conflict: ${err.detail}. Reloaded; press Escape to edit again.`);
        await this.loadCurrent();
      } else if (err instanceof ApiError) {
        this.status(`rejected: ${err.detail}`);
      } else {
        throw err;
      }
    }
  }

  private async merge(): Promise<void> {
    if (!window.confirm('Merge all confirmed tiles into the dataset?')) return;
    try {
      const result = await this.api.merge();
      this.readOnly = true;
      this.banner(
        `Merged ${result.merged_tiles} tiles into dataset version ${result.version}.`,
      );
    } catch (err) {
      if (err instanceof ApiError) this.status(`merge failed: ${err.detail}`);
      else throw err;
    }
  }

  // ---- input ----

  private onKey(ev: KeyboardEvent): void {
    if (ev.target instanceof HTMLInputElement) return;
    const action = keyToAction(ev.key);
    if (!action) return;
    ev.preventDefault();
    switch (action.type) {
      case 'relabel':
        this.applyClass(action.cls);
        break;
      case 'confirm':
        void this.submit('confirmed');
        break;
      case 'save-edited':
        void this.submit('edited');
        break;
      case 'next':
        void this.moveTo(this.queue.position + 1);
        break;
      case 'prev':
        void this.moveTo(this.queue.position - 1);
        break;
      case 'jump-last':
        void this.moveTo(this.queue.total - 1);
        break;
      case 'delete':
        this.deleteSelected();
        break;
      case 'add-mode':
        this.addMode = !this.addMode;
        this.status(this.addMode ? `drawing ${this.pendingClass}` : '');
        break;
      case 'toggle-confidence':
        this.showConfidence = !this.showConfidence;
        this.draw();
        break;
      case 'cancel':
        this.addMode = false;
        this.drag = null;
        if (this.readOnly && this.bannerEl.textContent?.startsWith('Conflict')) {
          this.readOnly = false;
          this.banner('');
        }
        this.editor?.select(null);
        this.draw();
        break;
    }
  }

  private norm(ev: MouseEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: (ev.clientX - rect.left) / rect.width,
      y: (ev.clientY - rect.top) / rect.height,
    };
  }

  private hitTest(x: number, y: number): EditorBox | null {
    if (!this.editor) return null;
    // Smallest box wins so nested cells stay reachable.
    let best: EditorBox | null = null;
    for (const box of this.editor.boxes) {
      if (
        Math.abs(x - box.cx) <= box.w / 2 &&
        Math.abs(y - box.cy) <= box.h / 2 &&
        (!best || box.w * box.h < best.w * best.h)
      ) {
        best = box;
      }
    }
    return best;
  }

  private onCorner(x: number, y: number, box: EditorBox): boolean {
    const tol = HANDLE_PX / CANVAS_SIZE;
    const cx0 = box.cx - box.w / 2;
    const cy0 = box.cy - box.h / 2;
    const corners = [
      [cx0, cy0],
      [cx0 + box.w, cy0],
      [cx0, cy0 + box.h],
      [cx0 + box.w, cy0 + box.h],
    ];
    return corners.some(
      ([px, py]) => Math.abs(x - px) <= tol && Math.abs(y - py) <= tol,
    );
  }

  private onMouseDown(ev: MouseEvent): void {
    if (this.readOnly || !this.editor) return;
    const { x, y } = this.norm(ev);
    if (this.addMode) {
      this.drag = { mode: 'draw', key: null, startX: x, startY: y, lastX: x, lastY: y };
      return;
    }
    const selected = this.editor.selected;
    if (selected && this.onCorner(x, y, selected)) {
      this.drag = { mode: 'resize', key: selected.key, startX: x, startY: y, lastX: x, lastY: y };
      return;
    }
    const hit = this.hitTest(x, y);
    this.editor.select(hit ? hit.key : null);
    if (hit) {
      this.drag = { mode: 'move', key: hit.key, startX: x, startY: y, lastX: x, lastY: y };
    }
    this.draw();
  }

  private onMouseMove(ev: MouseEvent): void {
    if (!this.drag || !this.editor) return;
    const { x, y } = this.norm(ev);
    if (this.drag.mode === 'move' && this.drag.key !== null) {
      this.editor.moveBox(this.drag.key, x - this.drag.lastX, y - this.drag.lastY);
    } else if (this.drag.mode === 'resize' && this.drag.key !== null) {
      const box = this.editor.boxes.find((b) => b.key === this.drag!.key);
      if (box) {
        const w = Math.max(MIN_BOX_EDGE, 2 * Math.abs(x - box.cx));
        const h = Math.max(MIN_BOX_EDGE, 2 * Math.abs(y - box.cy));
        this.editor.resizeBox(this.drag.key, w, h);
      }
    }
    this.drag.lastX = x;
    this.drag.lastY = y;
    if (this.drag.mode !== 'draw') this.draw();
  }

  private onMouseUp(): void {
    if (!this.drag || !this.editor) return;
    const drag = this.drag;
    this.drag = null;
    if (drag.mode === 'draw') {
      try {
        this.editor.addBox(drag.startX, drag.startY, drag.lastX, drag.lastY, this.pendingClass);
        this.status(`added ${this.pendingClass}; ${this.diffSummary()}`);
      } catch (err) {
        if (err instanceof ZeroAreaBoxError) this.status('box too small, ignored');
        else throw err;
      }
      this.addMode = false;
    }
    this.draw();
  }
}

export function mount(root: HTMLElement, baseUrl = ''): Promise<void> {
  return new ReviewApp(root, baseUrl).start();
}
