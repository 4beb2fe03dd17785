"""Two-phase execution of one item under one method.

Phase 1 collects descriptions (per layer for layered methods, whole-scene
for the unstructured baselines); Phase 2 runs the evaluation query on the
collected text, with or without the image depending on the method's input
mode.  Single-query methods skip straight to their one call.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core import (
    CANONICAL_ORDER,
    AnomalyVerdict,
    ImageInput,
    LayerDescription,
    PromptTemplate,
    SceneDescription,
    SceneLayer,
    VerdictParseError,
    parse_verdict,
)
from ..gateway import ChatRequest, ChatResponse, Gateway, GatewayError, ImageAttachment, ModelSpec
from ..imageprep import BASE_LEVEL
from .methods import (
    INPUT_DESCRIPTION_ONLY,
    INPUT_IMAGE_ONLY,
    INPUT_IMAGE_PLUS_DESCRIPTION,
    MethodConfig,
)
from .prompts import (
    LAYER_SLOTS,
    SLOT_BASELINE_DESCRIPTION,
    SLOT_DIRECT,
    SLOT_EVALUATION,
    SLOT_IMAGE_BASELINE,
    PromptSet,
)

#: System text sent with every query.  Empty: all content lives in the
#: user turn, which keeps the naive baseline's question untouched.
SYSTEM_TEXT = ""


class LayerExtractionError(RuntimeError):
    """A Phase 1 layer query failed; remembers which layer.

    ``record`` carries the query accounting when the call itself went
    through but its result was unusable (e.g. an empty description).
    """

    def __init__(self, layer: SceneLayer, cause: Exception, record: "QueryRecord | None" = None):
        super().__init__(f"layer extraction failed ({layer.label}): {cause}")
        self.layer = layer
        self.cause = cause
        self.record = record


@dataclass(frozen=True)
class QueryRecord:
    """Accounting for one model call."""

    role: str
    latency_s: float
    input_tokens: int
    output_tokens: int
    image_tokens: int | None
    cost: float
    billed_cost: float
    cache_hit: bool
    attempt_count: int

    @classmethod
    def from_response(cls, role: str, response: ChatResponse) -> "QueryRecord":
        return cls(
            role=role,
            latency_s=response.latency_s,
            input_tokens=response.input_tokens,
            output_tokens=response.output_tokens,
            image_tokens=response.image_tokens,
            cost=response.cost,
            billed_cost=response.billed_cost,
            cache_hit=response.cache_hit,
            attempt_count=response.attempt_count,
        )


@dataclass(frozen=True)
class ItemResult:
    """Outcome of one item under one method.

    Exactly one of ``verdict``/``error`` is set.  Query accounting covers
    every call made, including calls before a failure.
    """

    item_id: str
    verdict: AnomalyVerdict | None
    error: str | None
    scene: SceneDescription | None
    description_text: str | None
    queries: tuple[QueryRecord, ...]

    def __post_init__(self) -> None:
        if (self.verdict is None) == (self.error is None):
            raise ValueError("exactly one of verdict/error must be set")

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def call_count(self) -> int:
        return len(self.queries)

    @property
    def billed_cost(self) -> float:
        return sum(q.billed_cost for q in self.queries)

    @property
    def total_latency_s(self) -> float:
        return sum(q.latency_s for q in self.queries)


def _call(
    gw: Gateway,
    spec: ModelSpec,
    role: str,
    user_text: str,
    image: ImageAttachment | None,
) -> tuple[ChatResponse, QueryRecord]:
    request = ChatRequest(model=spec, system=SYSTEM_TEXT, user=user_text, image=image)
    response = gw.complete(request)
    return response, QueryRecord.from_response(role, response)


def describe_layer(
    gw: Gateway,
    spec: ModelSpec,
    prompts: PromptSet,
    layer: SceneLayer,
    image: ImageAttachment,
) -> tuple[LayerDescription, QueryRecord]:
    """One Phase 1 call for one layer.  Failures carry the layer context."""
    template = prompts.for_layer(layer)
    try:
        response, record = _call(gw, spec, LAYER_SLOTS[layer], template.render(), image)
    except GatewayError as exc:
        raise LayerExtractionError(layer, exc) from exc
    if not response.text.strip():
        raise LayerExtractionError(layer, ValueError("model returned an empty description"), record)
    return LayerDescription(layer, response.text), record


def aggregate(descriptions: list[LayerDescription]) -> SceneDescription:
    """Combine per-layer descriptions; order of the input never matters."""
    return SceneDescription.from_layers(descriptions)


def evaluate(
    gw: Gateway,
    spec: ModelSpec,
    template: PromptTemplate,
    scene_text: str | None,
    image: ImageAttachment | None,
    role: str = SLOT_EVALUATION,
    sink: "list[QueryRecord] | None" = None,
) -> tuple[AnomalyVerdict, QueryRecord]:
    """Phase 2: run a classification query and parse the reply.

    Unparseable replies raise; callers record the item error rather than
    inventing a verdict.  The record lands in ``sink`` as soon as the
    call completes, so accounting survives a parse failure.
    """
    user_text = template.render(scene_description=scene_text) if scene_text is not None else template.render()
    response, record = _call(gw, spec, role, user_text, image)
    if sink is not None:
        sink.append(record)
    verdict = parse_verdict(response.text)
    return verdict, record


def _phase1_layers(
    gw: Gateway,
    spec: ModelSpec,
    prompts: PromptSet,
    image: ImageAttachment,
    sink: list[QueryRecord],
) -> SceneDescription:
    """Run all four layer queries, appending accounting into ``sink``.

    The sink is filled as calls complete, so a mid-phase failure still
    leaves the records of every call actually made.
    """
    descriptions: list[LayerDescription] = []
    for layer in CANONICAL_ORDER:
        try:
            desc, record = describe_layer(gw, spec, prompts, layer, image)
        except LayerExtractionError as exc:
            if exc.record is not None:
                sink.append(exc.record)
            raise
        descriptions.append(desc)
        sink.append(record)
    return aggregate(descriptions)


def run_method(
    method: MethodConfig,
    image: ImageInput,
    spec: ModelSpec,
    gw: Gateway,
    prompts: PromptSet,
    level: int = int(BASE_LEVEL),
) -> ItemResult:
    """Run one item under one method.

    ``image`` must already be at the resolution named by ``level``; the
    caller owns resizing so that batch runs prepare images once.
    """
    item_id = image.image_id
    attachment = ImageAttachment.from_image(image, level)
    queries: list[QueryRecord] = []
    scene: SceneDescription | None = None
    description_text: str | None = None

    def fail(error: Exception) -> ItemResult:
        return ItemResult(item_id, None, f"{type(error).__name__}: {error}", scene,
                          description_text, tuple(queries))

    try:
        if method.layered:
            if method.input_mode == INPUT_IMAGE_ONLY:
                verdict, _ = evaluate(
                    gw, spec, prompts.direct, None, attachment, role=SLOT_DIRECT, sink=queries
                )
            else:
                scene = _phase1_layers(gw, spec, prompts, attachment, queries)
                eval_image = attachment if method.input_mode == INPUT_IMAGE_PLUS_DESCRIPTION else None
                verdict, _ = evaluate(
                    gw, spec, prompts.evaluation, scene.aggregate_text, eval_image, sink=queries
                )
        else:
            if method.input_mode == INPUT_IMAGE_ONLY:
                verdict, _ = evaluate(
                    gw, spec, prompts.image_baseline, None, attachment,
                    role=SLOT_IMAGE_BASELINE, sink=queries,
                )
            else:
                template = prompts.baseline_description
                response, record = _call(
                    gw, spec, SLOT_BASELINE_DESCRIPTION, template.render(), attachment
                )
                description_text = response.text
                queries.append(record)
                eval_image = attachment if method.input_mode == INPUT_IMAGE_PLUS_DESCRIPTION else None
                verdict, _ = evaluate(
                    gw, spec, prompts.evaluation, description_text, eval_image, sink=queries
                )
    except (GatewayError, LayerExtractionError, VerdictParseError) as exc:
        return fail(exc)

    return ItemResult(item_id, verdict, None, scene, description_text, tuple(queries))


def describe_scene(
    image: ImageInput,
    spec: ModelSpec,
    gw: Gateway,
    prompts: PromptSet,
    level: int = int(BASE_LEVEL),
) -> tuple[SceneDescription, list[QueryRecord]]:
    """Phase 1 only: the four layer descriptions and their aggregate."""
    attachment = ImageAttachment.from_image(image, level)
    records: list[QueryRecord] = []
    scene = _phase1_layers(gw, spec, prompts, attachment, records)
    return scene, records
