/** Queue navigation with completion tracking and an unsaved-edit guard.
 * The guard is a pure decision here; the app decides how to prompt. */

import type { QueueResponse, QueueTile, TileStatus } from './types';

export type NavIntent =
  | { kind: 'move'; position: number }
  | { kind: 'blocked' };

export class QueueModel {
  private items: QueueTile[];
  private cursor = 0;

  constructor(queue: QueueResponse) {
    this.items = queue.tiles.map((t) => ({ ...t }));
  }

  get tiles(): readonly QueueTile[] {
    return this.items;
  }

  get position(): number {
    return this.cursor;
  }

  get total(): number {
    return this.items.length;
  }

  get confirmed(): number {
    return this.items.filter((t) => t.status === 'confirmed').length;
  }

  get current(): QueueTile {
    if (!this.items.length) throw new Error('queue is empty');
    return this.items[this.cursor];
  }

  /** "n confirmed / total" for the header. */
  get progress(): string {
    return `${this.confirmed} confirmed / ${this.total}`;
  }

  /** Record the outcome of a successful corrections POST. */
  markSaved(tileId: string, revision: number, status: TileStatus): void {
    const item = this.items.find((t) => t.tile_id === tileId);
    if (!item) throw new Error(`tile ${tileId} is not in the queue`);
    item.revision = revision;
    item.status = status;
  }

  /** Navigation asks permission: moving off a dirty tile is blocked and
   * the caller must either save or explicitly discard first. */
  navigate(to: number, hasUnsavedEdits: boolean): NavIntent {
    if (to < 0 || to >= this.items.length) return { kind: 'blocked' };
    if (to === this.cursor) return { kind: 'move', position: this.cursor };
    if (hasUnsavedEdits) return { kind: 'blocked' };
    this.cursor = to;
    return { kind: 'move', position: to };
  }

  next(hasUnsavedEdits: boolean): NavIntent {
    return this.navigate(this.cursor + 1, hasUnsavedEdits);
  }

  prev(hasUnsavedEdits: boolean): NavIntent {
    return this.navigate(this.cursor - 1, hasUnsavedEdits);
  }

  jumpLast(hasUnsavedEdits: boolean): NavIntent {
    return this.navigate(this.items.length - 1, hasUnsavedEdits);
  }

  /** Force the cursor after the user chose to discard unsaved edits. */
  discardAndMove(to: number): void {
    if (to < 0 || to >= this.items.length) throw new Error(`position ${to} out of range`);
    this.cursor = to;
  }
}
