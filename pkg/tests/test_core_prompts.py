"""Prompt template rendering rules."""

import pytest

from drivelens.core import (
    ANSWER_SCHEMA,
    SCENE_PLACEHOLDER,
    DemoPair,
    PromptRole,
    PromptTemplate,
    SceneLayer,
)


def template(role=PromptRole.EVALUATION, instruction="Judge the scene.", **kw):
    layer = SceneLayer.STREET if role is PromptRole.LAYER_EXTRACTION else None
    return PromptTemplate(name="t", role=role, instruction=instruction, layer=layer, **kw)


def test_layer_binding_enforced():
    with pytest.raises(ValueError, match="needs a layer"):
        PromptTemplate(name="t", role=PromptRole.LAYER_EXTRACTION, instruction="x")
    with pytest.raises(ValueError, match="must not bind a layer"):
        PromptTemplate(
            name="t", role=PromptRole.EVALUATION, instruction="x", layer=SceneLayer.STREET
        )


def test_rendering_is_deterministic():
    t = template(demos=(DemoPair("in", "out"),))
    assert t.render(scene_description="the scene") == t.render(scene_description="the scene")


def test_placeholder_is_substituted():
    t = template(instruction=f"Look at this:\n{SCENE_PLACEHOLDER}\nDecide.")
    rendered = t.render(scene_description="A quiet road.")
    assert "A quiet road." in rendered
    assert SCENE_PLACEHOLDER not in rendered


def test_scene_section_appended_when_placeholder_missing():
    t = template(instruction="Decide.")
    rendered = t.render(scene_description="A quiet road.")
    assert "Scene description:\nA quiet road." in rendered


def test_placeholder_without_scene_is_an_error():
    t = template(instruction=f"Look: {SCENE_PLACEHOLDER}")
    with pytest.raises(ValueError, match="expects a scene description"):
        t.render()


def test_schema_is_appended_by_role():
    assert template(role=PromptRole.EVALUATION).render(scene_description="s").endswith(ANSWER_SCHEMA)
    assert template(role=PromptRole.DIRECT).render().endswith(ANSWER_SCHEMA)
    assert ANSWER_SCHEMA not in template(role=PromptRole.LAYER_EXTRACTION).render()
    assert ANSWER_SCHEMA not in template(role=PromptRole.BASELINE_DESCRIPTION).render()


def test_structured_answer_override():
    plain = template(role=PromptRole.DIRECT, structured_answer=False)
    assert plain.render() == plain.instruction
    forced = template(role=PromptRole.BASELINE_DESCRIPTION, structured_answer=True)
    assert forced.render().endswith(ANSWER_SCHEMA)


def test_demos_render_between_instruction_and_schema():
    t = template(demos=(DemoPair("scene A", "verdict A"), DemoPair("scene B", "verdict B")))
    rendered = t.render(scene_description="s")
    i_demo_a = rendered.index("scene A")
    i_demo_b = rendered.index("scene B")
    assert rendered.index("Judge the scene.") < i_demo_a < i_demo_b < rendered.index(ANSWER_SCHEMA)


def test_with_instruction_and_with_demos_do_not_mutate():
    base = template()
    changed = base.with_instruction("New wording.").with_demos((DemoPair("a", "b"),))
    assert base.instruction == "Judge the scene."
    assert base.demos == ()
    assert changed.instruction == "New wording."
    assert changed.role is base.role


def test_demo_pair_round_trip():
    demo = DemoPair("the input", "the output")
    assert DemoPair.from_dict(demo.to_dict()) == demo
