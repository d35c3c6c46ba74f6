import { describe, expect, it } from 'vitest';

import {
  CELL_CLASSES,
  CLASS_HOTKEYS,
  classForHotkey,
  displayName,
  isCellClassName,
} from '../src/classes';

describe('class picker catalogue', () => {
  it('offers exactly the 19 class names in canonical order', () => {
    expect(CELL_CLASSES).toEqual([
      'neutrophil',
      'metamyelocyte',
      'myelocyte',
      'promyelocyte',
      'blast',
      'erythroblast',
      'megakaryocyte_nucleus',
      'lymphocyte',
      'monocyte',
      'plasma_cell',
      'eosinophil',
      'basophil',
      'megakaryocyte',
      'debris',
      'histiocyte',
      'mast_cell',
      'platelet',
      'platelet_clump',
      'other_cell',
    ]);
  });

  it('assigns one distinct hotkey per class', () => {
    expect(CLASS_HOTKEYS.length).toBe(CELL_CLASSES.length);
    expect(new Set(CLASS_HOTKEYS).size).toBe(CLASS_HOTKEYS.length);
  });

  it('maps hotkeys back to classes in order', () => {
    CLASS_HOTKEYS.forEach((key, i) => {
      expect(classForHotkey(key)).toBe(CELL_CLASSES[i]);
    });
    expect(classForHotkey('Z')).toBeNull();
  });

  it('recognizes valid names and rejects strangers', () => {
    expect(isCellClassName('mast_cell')).toBe(true);
    expect(isCellClassName('zombie')).toBe(false);
  });

  it('prettifies labels for display', () => {
    expect(displayName('plasma_cell')).toBe('Plasma cell');
    expect(displayName('blast')).toBe('Blast');
  });
});
