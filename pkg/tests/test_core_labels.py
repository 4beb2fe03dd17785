"""Gold label consistency rules."""

from drivelens.core import (
    RULE_ANOMALOUS_WITHOUT_LAYERS,
    RULE_FLAGS_ON_NORMAL,
    SceneLayer,
    validate_gold,
)
from conftest import make_gold


def test_consistent_labels_pass():
    assert validate_gold(make_gold(False)).ok
    assert validate_gold(make_gold(True, "M")).ok
    assert validate_gold(make_gold(True, "E.S.I.M")).ok


def test_flags_on_normal_is_a_violation():
    check = validate_gold(make_gold(False, "S.M"))
    assert not check.ok
    assert [issue.rule for issue in check.violations] == [RULE_FLAGS_ON_NORMAL]
    assert "S" in check.violations[0].message and "M" in check.violations[0].message


def test_anomalous_without_layers_is_advisory_only():
    check = validate_gold(make_gold(True))
    assert check.ok
    assert [issue.rule for issue in check.advisories] == [RULE_ANOMALOUS_WITHOUT_LAYERS]


def test_gold_label_flags_are_sets():
    gold = make_gold(True, "M.S")
    assert gold.layer_flags == frozenset({SceneLayer.STREET, SceneLayer.MOVABLE_OBJECTS})
