import pytest

from marrowcyto.classes import (
    ALL_CLASSES,
    EVAL_CLASSES,
    MANUAL_NDC_CLASSES,
    ME_NUMERATOR_CLASSES,
    NDC_CLASSES,
    CellClass,
)
from marrowcyto.errors import UnknownClassIdError, UnknownClassNameError


def test_nineteen_classes_with_stable_ids():
    assert len(ALL_CLASSES) == 19
    assert [int(c) for c in ALL_CLASSES] == list(range(19))
    # The id order is a wire contract; annotation files depend on it.
    assert CellClass(0) is CellClass.NEUTROPHIL
    assert CellClass(4) is CellClass.BLAST
    assert CellClass(5) is CellClass.ERYTHROBLAST
    assert CellClass(18) is CellClass.OTHER_CELL


def test_labels_round_trip():
    for c in ALL_CLASSES:
        assert CellClass.from_label(c.label) is c
        assert CellClass.from_id(int(c)) is c
    assert CellClass.from_label(" Blast ") is CellClass.BLAST


def test_unknown_label_and_id():
    with pytest.raises(UnknownClassNameError):
        CellClass.from_label("erythrocyte")
    with pytest.raises(UnknownClassIdError):
        CellClass.from_id(19)
    with pytest.raises(UnknownClassIdError):
        CellClass.from_id(-1)


def test_ndc_subset():
    assert len(NDC_CLASSES) == 12
    assert CellClass.MEGAKARYOCYTE in NDC_CLASSES
    for absent in (
        CellClass.DEBRIS,
        CellClass.PLATELET,
        CellClass.PLATELET_CLUMP,
        CellClass.HISTIOCYTE,
        CellClass.MEGAKARYOCYTE_NUCLEUS,
        CellClass.OTHER_CELL,
    ):
        assert absent not in NDC_CLASSES


def test_me_numerator_subset():
    assert set(ME_NUMERATOR_CLASSES) == {
        CellClass.BLAST,
        CellClass.PROMYELOCYTE,
        CellClass.MYELOCYTE,
        CellClass.METAMYELOCYTE,
        CellClass.NEUTROPHIL,
        CellClass.EOSINOPHIL,
    }
    assert CellClass.ERYTHROBLAST not in ME_NUMERATOR_CLASSES


def test_eval_subset_is_sixteen_classes():
    assert len(EVAL_CLASSES) == 16
    assert set(ALL_CLASSES) - set(EVAL_CLASSES) == {
        CellClass.BASOPHIL,
        CellClass.MAST_CELL,
        CellClass.OTHER_CELL,
    }


def test_manual_ndc_subset_is_ten_classes():
    assert len(MANUAL_NDC_CLASSES) == 10
    assert set(MANUAL_NDC_CLASSES) <= set(NDC_CLASSES)
    assert CellClass.BASOPHIL not in MANUAL_NDC_CLASSES
    assert CellClass.MEGAKARYOCYTE not in MANUAL_NDC_CLASSES
