"""The 19-class cytology taxonomy and the class subsets used downstream.

Integer ids are fixed by the enum order and must never be reshuffled:
annotation files, wire payloads and saved manifests all use them.
"""

from __future__ import annotations

from enum import IntEnum


class CellClass(IntEnum):
    NEUTROPHIL = 0
    METAMYELOCYTE = 1
    MYELOCYTE = 2
    PROMYELOCYTE = 3
    BLAST = 4
    ERYTHROBLAST = 5
    MEGAKARYOCYTE_NUCLEUS = 6
    LYMPHOCYTE = 7
    MONOCYTE = 8
    PLASMA_CELL = 9
    EOSINOPHIL = 10
    BASOPHIL = 11
    MEGAKARYOCYTE = 12
    DEBRIS = 13
    HISTIOCYTE = 14
    MAST_CELL = 15
    PLATELET = 16
    PLATELET_CLUMP = 17
    OTHER_CELL = 18

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "CellClass":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            from .errors import UnknownClassNameError

            raise UnknownClassNameError(f"unknown cell class name: {label!r}") from None

    @classmethod
    def from_id(cls, class_id: int) -> "CellClass":
        try:
            return cls(class_id)
        except ValueError:
            from .errors import UnknownClassIdError

            raise UnknownClassIdError(
                f"class id {class_id} outside 0..{len(cls) - 1}"
            ) from None


ALL_CLASSES: tuple[CellClass, ...] = tuple(CellClass)

# The twelve cellular classes whose proportions drive histogram convergence
# and the differential-count percentages.
NDC_CLASSES: tuple[CellClass, ...] = (
    CellClass.NEUTROPHIL,
    CellClass.METAMYELOCYTE,
    CellClass.MYELOCYTE,
    CellClass.PROMYELOCYTE,
    CellClass.BLAST,
    CellClass.ERYTHROBLAST,
    CellClass.LYMPHOCYTE,
    CellClass.MONOCYTE,
    CellClass.PLASMA_CELL,
    CellClass.EOSINOPHIL,
    CellClass.BASOPHIL,
    CellClass.MEGAKARYOCYTE,
)

# Granulocytic-lineage classes forming the numerator of the
# myeloid-to-erythroid ratio; the denominator is ERYTHROBLAST alone.
ME_NUMERATOR_CLASSES: tuple[CellClass, ...] = (
    CellClass.BLAST,
    CellClass.PROMYELOCYTE,
    CellClass.MYELOCYTE,
    CellClass.METAMYELOCYTE,
    CellClass.NEUTROPHIL,
    CellClass.EOSINOPHIL,
)

# The sixteen object types retained for detection evaluation; basophil,
# mast cell and "other cell" are kept in datasets but too rare to score.
EVAL_CLASSES: tuple[CellClass, ...] = tuple(
    c
    for c in CellClass
    if c not in (CellClass.BASOPHIL, CellClass.MAST_CELL, CellClass.OTHER_CELL)
)

# The ten cell types a conventional manual differential count reports,
# used for model-vs-manual mean-square-error comparison.
MANUAL_NDC_CLASSES: tuple[CellClass, ...] = (
    CellClass.NEUTROPHIL,
    CellClass.METAMYELOCYTE,
    CellClass.MYELOCYTE,
    CellClass.PROMYELOCYTE,
    CellClass.BLAST,
    CellClass.LYMPHOCYTE,
    CellClass.MONOCYTE,
    CellClass.EOSINOPHIL,
    CellClass.PLASMA_CELL,
    CellClass.ERYTHROBLAST,
)
