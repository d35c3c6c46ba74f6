/** The 19 cell classes in canonical id order (id = array index). */
export const CELL_CLASSES = [
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
] as const;

export type CellClassName = (typeof CELL_CLASSES)[number];

// One relabel hotkey per class, in canonical order: digits then a letter row.
// Letters avoid the command keys (a d c n p x Enter Escape; see keyboard.ts).
export const CLASS_HOTKEYS = [
  '1', '2', '3', '4', '5', '6', '7', '8', '9', '0',
  'q', 'w', 'e', 'r', 't', 'y', 'u', 'i', 'o',
] as const;

export function isCellClassName(name: string): name is CellClassName {
  return (CELL_CLASSES as readonly string[]).includes(name);
}

export function classForHotkey(key: string): CellClassName | null {
  const idx = (CLASS_HOTKEYS as readonly string[]).indexOf(key);
  return idx >= 0 ? CELL_CLASSES[idx] : null;
}

/** human_readable label -> "Human readable" for picker rows. */
export function displayName(cls: CellClassName): string {
  const words = cls.split('_').join(' ');
  return words.charAt(0).toUpperCase() + words.slice(1);
}
