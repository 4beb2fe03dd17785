"""Layer enum, combination keys, scene description aggregation."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from drivelens.core import (
    CANONICAL_ORDER,
    EMPTY_KEY,
    KEY_ORDER,
    LayerDescription,
    SceneDescription,
    SceneLayer,
    combination_key,
    flags_from_key,
    layers_from_codes,
    sorted_canonical,
)


class TestSceneLayer:
    def test_exactly_four_variants_in_canonical_order(self):
        assert CANONICAL_ORDER == (
            SceneLayer.STREET,
            SceneLayer.INFRASTRUCTURE,
            SceneLayer.MOVABLE_OBJECTS,
            SceneLayer.ENVIRONMENT,
        )
        assert len(SceneLayer) == 4

    def test_code_mapping_is_bijective(self):
        codes = {layer.code for layer in SceneLayer}
        assert codes == {"S", "I", "M", "E"}
        for layer in SceneLayer:
            assert SceneLayer.from_code(layer.code) is layer
            assert SceneLayer.from_code(layer.code.lower()) is layer

    def test_labels(self):
        assert SceneLayer.STREET.label == "Street"
        assert SceneLayer.INFRASTRUCTURE.label == "Infrastructure"
        assert SceneLayer.MOVABLE_OBJECTS.label == "Movable Objects"
        assert SceneLayer.ENVIRONMENT.label == "Environment"

    def test_unknown_code_rejected(self):
        with pytest.raises(ValueError, match="unknown layer code"):
            SceneLayer.from_code("X")


class TestCombinationKey:
    # Frozen expectations, computed by hand from the fixed E.S.I.M code order.
    CASES = [
        (set(), "none"),
        ({SceneLayer.MOVABLE_OBJECTS}, "M"),
        ({SceneLayer.STREET}, "S"),
        ({SceneLayer.INFRASTRUCTURE, SceneLayer.MOVABLE_OBJECTS}, "I.M"),
        ({SceneLayer.STREET, SceneLayer.MOVABLE_OBJECTS}, "S.M"),
        ({SceneLayer.ENVIRONMENT, SceneLayer.STREET}, "E.S"),
        (set(SceneLayer), "E.S.I.M"),
    ]

    @pytest.mark.parametrize("flags,expected", CASES)
    def test_frozen_cases(self, flags, expected):
        assert combination_key(flags) == expected

    def test_input_order_and_duplicates_ignored(self):
        flags = [SceneLayer.MOVABLE_OBJECTS, SceneLayer.ENVIRONMENT, SceneLayer.MOVABLE_OBJECTS]
        assert combination_key(flags) == "E.M"

    def test_empty_key_constant(self):
        assert EMPTY_KEY == "none"
        assert flags_from_key(EMPTY_KEY) == frozenset()

    @given(st.sets(st.sampled_from(list(SceneLayer))))
    def test_key_round_trip(self, flags):
        assert flags_from_key(combination_key(flags)) == frozenset(flags)

    @given(st.sets(st.sampled_from(list(SceneLayer)), min_size=1))
    def test_key_follows_fixed_code_order(self, flags):
        key = combination_key(flags)
        order = [layer.code for layer in KEY_ORDER]
        codes = key.split(".")
        assert codes == sorted(codes, key=order.index)

    def test_layers_from_codes(self):
        assert layers_from_codes(["m", "S"]) == frozenset(
            {SceneLayer.MOVABLE_OBJECTS, SceneLayer.STREET}
        )

    def test_sorted_canonical(self):
        got = sorted_canonical({SceneLayer.ENVIRONMENT, SceneLayer.STREET})
        assert got == (SceneLayer.STREET, SceneLayer.ENVIRONMENT)


class TestSceneDescription:
    def _descriptions(self):
        return [LayerDescription(layer, f"{layer.label} text") for layer in SceneLayer]

    def test_aggregate_contains_all_sections_in_canonical_order(self):
        scene = SceneDescription.from_layers(self._descriptions())
        text = scene.aggregate_text
        positions = [text.index(f"## {layer.label}") for layer in CANONICAL_ORDER]
        assert positions == sorted(positions)
        assert scene.text_for(SceneLayer.ENVIRONMENT) == "Environment text"

    def test_input_order_does_not_matter(self):
        forward = SceneDescription.from_layers(self._descriptions())
        backward = SceneDescription.from_layers(list(reversed(self._descriptions())))
        assert forward.aggregate_text == backward.aggregate_text

    def test_missing_layer_rejected(self):
        descriptions = self._descriptions()[:3]
        with pytest.raises(ValueError, match="missing"):
            SceneDescription.from_layers(descriptions)

    def test_duplicate_layer_rejected(self):
        descriptions = self._descriptions()
        descriptions[1] = LayerDescription(SceneLayer.STREET, "again")
        with pytest.raises(ValueError, match="duplicate"):
            SceneDescription.from_layers(descriptions)

    def test_empty_text_rejected(self):
        descriptions = self._descriptions()
        descriptions[0] = LayerDescription(SceneLayer.STREET, "")
        with pytest.raises(ValueError, match="empty"):
            SceneDescription.from_layers(descriptions)
