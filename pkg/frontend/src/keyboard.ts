/** Keyboard-first bindings: reviewers work through 250-tile batches, so
 * every action has a key. Class hotkeys relabel the selected box (or set
 * the class for the next drawn box); commands use letters that no class
 * occupies. */

import type { CellClassName } from './classes';
import { classForHotkey } from './classes';

export type KeyAction =
  | { type: 'relabel'; cls: CellClassName }
  | { type: 'confirm' }
  | { type: 'save-edited' }
  | { type: 'next' }
  | { type: 'prev' }
  | { type: 'jump-last' }
  | { type: 'delete' }
  | { type: 'add-mode' }
  | { type: 'toggle-confidence' }
  | { type: 'cancel' };

const COMMANDS: Record<string, KeyAction> = {
  Enter: { type: 'confirm' },
  s: { type: 'save-edited' },
  n: { type: 'next' },
  ArrowRight: { type: 'next' },
  p: { type: 'prev' },
  ArrowLeft: { type: 'prev' },
  g: { type: 'jump-last' },
  d: { type: 'delete' },
  Delete: { type: 'delete' },
  Backspace: { type: 'delete' },
  a: { type: 'add-mode' },
  c: { type: 'toggle-confidence' },
  Escape: { type: 'cancel' },
};

export function keyToAction(key: string): KeyAction | null {
  const command = COMMANDS[key];
  if (command) return command;
  const cls = classForHotkey(key);
  return cls ? { type: 'relabel', cls } : null;
}
