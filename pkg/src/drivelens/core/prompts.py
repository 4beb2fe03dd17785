"""Prompt templates and deterministic rendering.

A template is instruction text plus optional few-shot demos.  For roles
that expect a structured reply the renderer appends the answer-schema
block itself, so instruction rewrites can never break parseability.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .layers import SceneLayer


class PromptRole(enum.Enum):
    """What a template is used for."""

    LAYER_EXTRACTION = "layer_extraction"
    EVALUATION = "evaluation"
    DIRECT = "direct"
    BASELINE_DESCRIPTION = "baseline_description"


@dataclass(frozen=True)
class DemoPair:
    """A single few-shot demonstration."""

    input_summary: str
    ideal_output: str

    def to_dict(self) -> dict[str, str]:
        return {"input": self.input_summary, "output": self.ideal_output}

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "DemoPair":
        return cls(d["input"], d["output"])


#: Placeholder the evaluation/direct instructions may use to position the
#: scene description; if absent the renderer appends a description section.
SCENE_PLACEHOLDER = "{scene_description}"

#: Schema block appended to structured-answer prompts.  ``parse_verdict``
#: understands exactly this shape.
ANSWER_SCHEMA = (
    "Answer with exactly this fenced block and nothing after it:\n"
    "```\n"
    "verdict: yes or no\n"
    "layers: comma-separated codes among S, I, M, E, or none\n"
    "rationale: one short explanation\n"
    "```"
)


@dataclass(frozen=True)
class PromptTemplate:
    """Named prompt template bound to a role.

    A ``LAYER_EXTRACTION`` template is bound to exactly one layer; all
    other roles must not carry one.
    """

    name: str
    role: PromptRole
    instruction: str
    layer: SceneLayer | None = None
    demos: tuple[DemoPair, ...] = field(default=())
    # None means "decided by role": evaluation and direct replies are
    # structured, descriptions are free-form.  The naive baseline sets
    # False explicitly so its question gains no schema suffix.
    structured_answer: bool | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("template name must be non-empty")
        if self.role is PromptRole.LAYER_EXTRACTION:
            if self.layer is None:
                raise ValueError(f"template {self.name}: layer_extraction needs a layer")
        elif self.layer is not None:
            raise ValueError(f"template {self.name}: role {self.role.value} must not bind a layer")

    @property
    def wants_structured_answer(self) -> bool:
        if self.structured_answer is not None:
            return self.structured_answer
        return self.role in (PromptRole.EVALUATION, PromptRole.DIRECT)

    def render(self, scene_description: str | None = None) -> str:
        """Render the full user text.  Same inputs, same bytes."""
        body = self.instruction.strip()
        if scene_description is not None:
            if SCENE_PLACEHOLDER in body:
                body = body.replace(SCENE_PLACEHOLDER, scene_description)
            else:
                # Instruction rewrites may drop the placeholder; the scene
                # text must still reach the model.
                body = f"{body}\n\nScene description:\n{scene_description}"
        elif SCENE_PLACEHOLDER in body:
            raise ValueError(f"template {self.name} expects a scene description")

        parts = [body]
        if self.demos:
            demo_lines = ["Examples:"]
            for demo in self.demos:
                demo_lines.append(f"Input:\n{demo.input_summary}\nOutput:\n{demo.ideal_output}")
            parts.append("\n\n".join(demo_lines))
        if self.wants_structured_answer:
            parts.append(ANSWER_SCHEMA)
        return "\n\n".join(parts)

    def with_instruction(self, instruction: str) -> "PromptTemplate":
        return PromptTemplate(
            self.name, self.role, instruction, self.layer, self.demos, self.structured_answer
        )

    def with_demos(self, demos: tuple[DemoPair, ...]) -> "PromptTemplate":
        return PromptTemplate(
            self.name, self.role, self.instruction, self.layer, demos, self.structured_answer
        )
