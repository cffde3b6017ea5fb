"""Corpus loading, constraint derivation, and exemplar index persistence.

Corpora and test inputs share one line-delimited JSON record format. Ingest
turns records into retrieval exemplars: layouts are discretized onto the
domain canvas, constraints are derived from the record (or taken verbatim
when given explicitly), text embeddings and saliency boxes are computed and
cached, and the result is written to a single JSON index file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import DataError, EmptySaliencyError
from .gateway import EmbeddingProvider, HashEmbeddingProvider
from .geometry import (
    BoundingBox,
    CanvasSpec,
    DomainConfig,
    Element,
    Layout,
    RawElement,
    RawLayout,
    clamp_box,
    discretize_layout,
    normalize_label,
    round_half_away,
)
from .retrieval import Exemplar, ExemplarIndex
from .rng import SplitMix64
from .saliency import (
    DEFAULT_THRESHOLD,
    read_pgm,
    rectify,
    spectral_residual_saliency,
)
from .serde import (
    CANVAS,
    ConstraintSpec,
    ContentConstraint,
    NoisyLayout,
    PartialLayout,
    Relation,
    RelationConstraint,
    RelationPredicate,
    TaskKind,
    TextConstraint,
    TypeConstraint,
    TypeSizeConstraint,
)

logger = logging.getLogger(__name__)

#: Tasks whose exemplar elements are stable-sorted by type label, matching
#: the grouped type lists their constraint grammars exhibit.
LABEL_SORTED_TASKS = frozenset(
    {TaskKind.GEN_T, TaskKind.GEN_TS, TaskKind.GEN_R, TaskKind.TEXT_TO_LAYOUT}
)

_REFINEMENT_JITTER = 2


@dataclass(frozen=True)
class Sample:
    """One corpus or test record after validation and discretization."""

    id: str
    constraint: ConstraintSpec
    reference: Optional[Layout]
    saliency_box: Optional[BoundingBox] = None


@dataclass(frozen=True)
class IngestReport:
    """What ingest did: counts plus one human-readable line per skip."""

    total: int
    kept: int
    skipped: tuple[str, ...]


def _scaled_box(
    values: Sequence[float], source: tuple[float, float], target: CanvasSpec
) -> BoundingBox:
    sx = target.width / source[0]
    sy = target.height / source[1]
    left, top, width, height = values
    return clamp_box(
        round_half_away(left * sx),
        round_half_away(top * sy),
        round_half_away(width * sx),
        round_half_away(height * sy),
        target,
    )


def _parse_elements(raw: object, field: str) -> list[RawElement]:
    if not isinstance(raw, list):
        raise DataError(f"{field} must be a list of [type, left, top, width, height]")
    elements = []
    for item in raw:
        if not isinstance(item, (list, tuple)) or len(item) != 5:
            raise DataError(f"{field} entries must be [type, left, top, width, height]")
        label, left, top, width, height = item
        try:
            elements.append(
                RawElement(
                    normalize_label(str(label)),
                    float(left),
                    float(top),
                    float(width),
                    float(height),
                )
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"{field} entry has non-numeric geometry: {item}") from exc
    return elements


def _check_labels(labels: Sequence[str], domain: DomainConfig, what: str) -> None:
    for label in labels:
        if not domain.knows_label(label):
            raise DataError(f"{what} uses unknown element type {label!r}")


def _source_dims(record: dict, domain: DomainConfig) -> tuple[float, float]:
    """Source canvas dimensions; the domain canvas when the record omits them."""
    raw = record.get("canvas")
    if raw is None:
        return (float(domain.canvas.width), float(domain.canvas.height))
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise DataError("canvas must be [width, height]")
    try:
        width, height = float(raw[0]), float(raw[1])
    except (TypeError, ValueError) as exc:
        raise DataError(f"canvas has non-numeric dimensions: {raw}") from exc
    if width <= 0 or height <= 0:
        raise DataError(f"canvas dimensions must be positive: {raw}")
    return (width, height)


def _record_layout(record: dict, domain: DomainConfig) -> Optional[Layout]:
    if "elements" not in record:
        return None
    source = _source_dims(record, domain)
    elements = _parse_elements(record["elements"], "elements")
    _check_labels([e.type_label for e in elements], domain, "layout")
    raw = RawLayout(source[0], source[1], tuple(elements))
    return discretize_layout(raw, domain.canvas)


def _label_sorted(layout: Layout) -> tuple[Layout, list[int]]:
    """Stable label sort; also returns old-index -> new-index mapping."""
    order = sorted(range(len(layout.elements)), key=lambda i: layout.elements[i].type_label)
    remap = [0] * len(order)
    for new_index, old_index in enumerate(order):
        remap[old_index] = new_index
    sorted_layout = Layout(
        canvas=layout.canvas,
        elements=tuple(layout.elements[i] for i in order),
    )
    return sorted_layout, remap


def _parse_relations(
    raw: object, types: Sequence[str], remap: Optional[Sequence[int]]
) -> tuple[Relation, ...]:
    if not isinstance(raw, list):
        raise DataError("relations must be a list of [subject, predicate, object]")
    relations = []
    for item in raw:
        if not isinstance(item, (list, tuple)) or len(item) != 3:
            raise DataError(f"relation entries must be [subject, predicate, object]: {item}")
        subject_raw, predicate_raw, object_raw = item
        try:
            predicate = RelationPredicate(str(predicate_raw))
        except ValueError as exc:
            raise DataError(f"unknown relation predicate {predicate_raw!r}") from exc

        def endpoint(value: object) -> tuple[str, int]:
            if not isinstance(value, int) or isinstance(value, bool):
                raise DataError(f"relation endpoint must be an element index: {value!r}")
            index = remap[value] if remap is not None and value < len(remap) else value
            if not 0 <= index < len(types):
                raise DataError(f"relation endpoint {value} out of range")
            return (types[index], index)

        subject = endpoint(subject_raw)
        target = CANVAS if object_raw == CANVAS else endpoint(object_raw)
        relations.append(Relation(subject, predicate, target))
    return tuple(relations)


def _seeded_noise(layout: Layout, record_id: str) -> tuple[Element, ...]:
    """Reproducible jitter for refinement records that ship no noisy copy."""
    seed = int.from_bytes(
        hashlib.sha256(record_id.encode("utf-8")).digest()[:8], "big"
    )
    rng = SplitMix64(seed)
    noisy = []
    for e in layout.elements:
        box = clamp_box(
            e.box.left + rng.randint(-_REFINEMENT_JITTER, _REFINEMENT_JITTER),
            e.box.top + rng.randint(-_REFINEMENT_JITTER, _REFINEMENT_JITTER),
            max(0, e.box.width + rng.randint(-_REFINEMENT_JITTER, _REFINEMENT_JITTER)),
            max(0, e.box.height + rng.randint(-_REFINEMENT_JITTER, _REFINEMENT_JITTER)),
            layout.canvas,
        )
        noisy.append(Element(e.type_label, box))
    return tuple(noisy)


def _discretized_named_elements(
    record: dict, field: str, domain: DomainConfig
) -> Optional[tuple[Element, ...]]:
    if field not in record:
        return None
    source = _source_dims(record, domain)
    elements = _parse_elements(record[field], field)
    _check_labels([e.type_label for e in elements], domain, field)
    raw = RawLayout(source[0], source[1], tuple(elements))
    return discretize_layout(raw, domain.canvas).elements


def _explicit_types(record: dict, domain: DomainConfig) -> Optional[list[str]]:
    if "types" not in record:
        return None
    raw = record["types"]
    if not isinstance(raw, list):
        raise DataError("types must be a list of labels")
    types = [normalize_label(str(t)) for t in raw]
    _check_labels(types, domain, "types")
    return types


def build_sample(
    record: dict,
    task: TaskKind,
    domain: DomainConfig,
    require_layout: bool,
    embedding_provider: Optional[EmbeddingProvider] = None,
    saliency_threshold: float = DEFAULT_THRESHOLD,
    image_root: str = "",
) -> tuple[Sample, list[str], Optional[tuple[float, ...]]]:
    """Validate one record and derive its constraint for the task.

    Returns the sample, any non-fatal warnings, and the text embedding when
    one was computed. Raises DataError for records that cannot be used.
    """
    record_id = record.get("id")
    if not isinstance(record_id, str) or not record_id:
        raise DataError("record has no usable string id")
    warnings: list[str] = []
    embedding: Optional[tuple[float, ...]] = None
    saliency_box: Optional[BoundingBox] = None

    layout = _record_layout(record, domain)
    if require_layout and layout is None:
        raise DataError("record has no layout elements")

    remap: Optional[list[int]] = None
    if layout is not None and task in LABEL_SORTED_TASKS:
        layout, remap = _label_sorted(layout)

    if task is TaskKind.GEN_T:
        types = _explicit_types(record, domain)
        if types is None:
            if layout is None:
                raise DataError("record needs either types or a layout")
            types = list(layout.labels())
        constraint: ConstraintSpec = TypeConstraint(tuple(types))
    elif task is TaskKind.GEN_TS:
        if "type_sizes" in record:
            raw_items = record["type_sizes"]
            if not isinstance(raw_items, list):
                raise DataError("type_sizes must be a list of [type, width, height]")
            items = []
            for item in raw_items:
                if not isinstance(item, (list, tuple)) or len(item) != 3:
                    raise DataError(f"type_sizes entries must be [type, w, h]: {item}")
                label = normalize_label(str(item[0]))
                _check_labels([label], domain, "type_sizes")
                items.append((label, int(item[1]), int(item[2])))
            constraint = TypeSizeConstraint(tuple(items))
        else:
            if layout is None:
                raise DataError("record needs either type_sizes or a layout")
            constraint = TypeSizeConstraint(
                tuple(
                    (e.type_label, e.box.width, e.box.height) for e in layout.elements
                )
            )
    elif task is TaskKind.GEN_R:
        types = _explicit_types(record, domain)
        if types is None:
            if layout is None:
                raise DataError("record needs either types or a layout")
            types = list(layout.labels())
        else:
            remap = None  # explicit types: relation indices address that list
        relations = _parse_relations(record.get("relations", []), types, remap)
        constraint = RelationConstraint(tuple(types), relations)
    elif task is TaskKind.COMPLETION:
        given = _discretized_named_elements(record, "partial", domain)
        if given is None:
            if layout is None:
                raise DataError("record needs either partial or a layout")
            count = record.get("partial_count", 1)
            if not isinstance(count, int) or not 0 < count <= len(layout.elements):
                raise DataError(f"partial_count {count!r} out of range")
            given = layout.elements[:count]
        constraint = PartialLayout(given)
    elif task is TaskKind.REFINEMENT:
        noise = _discretized_named_elements(record, "noise", domain)
        if noise is None:
            if layout is None:
                raise DataError("record needs either noise or a layout")
            noise = _seeded_noise(layout, record_id)
        constraint = NoisyLayout(noise)
    elif task is TaskKind.CONTENT_AWARE:
        types = _explicit_types(record, domain)
        if types is None:
            types = list(layout.labels()) if layout is not None else []
        saliency_box = _content_box(
            record, domain, saliency_threshold, image_root, warnings
        )
        constraint = ContentConstraint(saliency_box, tuple(types))
    else:
        text = record.get("text")
        if not isinstance(text, str) or not text.strip():
            raise DataError("text-to-layout record needs non-empty text")
        constraint = TextConstraint(text)
        provider = embedding_provider or HashEmbeddingProvider()
        embedding = provider.embed(text)

    sample = Sample(
        id=record_id,
        constraint=constraint,
        reference=layout,
        saliency_box=saliency_box,
    )
    return sample, warnings, embedding


def _content_box(
    record: dict,
    domain: DomainConfig,
    threshold: float,
    image_root: str,
    warnings: list[str],
) -> BoundingBox:
    if "saliency_box" in record:
        raw = record["saliency_box"]
        if not isinstance(raw, (list, tuple)) or len(raw) != 4:
            raise DataError("saliency_box must be [left, top, width, height]")
        source = _source_dims(record, domain)
        return _scaled_box([float(v) for v in raw], source, domain.canvas)
    image = record.get("image")
    if isinstance(image, str) and image:
        path = os.path.join(image_root, image) if image_root else image
        saliency = spectral_residual_saliency(read_pgm(path))
        try:
            return rectify(saliency, threshold, domain.canvas)
        except EmptySaliencyError:
            warnings.append(
                f"no saliency above threshold {threshold} in {image}; "
                "using a zero-area box at canvas center"
            )
            return BoundingBox(domain.canvas.width // 2, domain.canvas.height // 2, 0, 0)
    raise DataError("content-aware record needs saliency_box or image")


def load_records(path: str) -> tuple[list[tuple[int, dict]], list[str]]:
    """Read line-delimited JSON records.

    Returns (1-based line number, record) pairs for parseable object lines
    and a skip message per line that was not one.
    """
    parsed: list[tuple[int, dict]] = []
    skipped: list[str] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus file {path}: {exc}") from exc
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                value = json.loads(line)
            except json.JSONDecodeError as exc:
                skipped.append(f"{path}:{line_number}: invalid JSON: {exc}")
                continue
            if not isinstance(value, dict):
                skipped.append(f"{path}:{line_number}: record must be a JSON object")
                continue
            parsed.append((line_number, value))
    return parsed, skipped


def load_samples(
    path: str,
    task: TaskKind,
    domain: DomainConfig,
    require_layout: bool,
    embedding_provider: Optional[EmbeddingProvider] = None,
    saliency_threshold: float = DEFAULT_THRESHOLD,
    image_root: str = "",
) -> tuple[list[Sample], list[tuple[float, ...]], IngestReport]:
    """Load every usable record from a JSONL file, skipping bad ones.

    Returns samples, a parallel list of embeddings (empty tuples where none
    apply), and a report of what was skipped and why.
    """
    parsed, unparseable = load_records(path)
    samples: list[Sample] = []
    embeddings: list[tuple[float, ...]] = []
    skipped: list[str] = list(unparseable)
    for message in unparseable:
        logger.warning("skipping line: %s", message)
    for line_number, record in parsed:
        try:
            sample, warnings, embedding = build_sample(
                record,
                task,
                domain,
                require_layout,
                embedding_provider,
                saliency_threshold,
                image_root,
            )
        except DataError as exc:
            message = f"{path}:{line_number}: {exc}"
            logger.warning("skipping record: %s", message)
            skipped.append(message)
            continue
        for warning in warnings:
            logger.warning("%s:%d: %s", path, line_number, warning)
        samples.append(sample)
        embeddings.append(embedding if embedding is not None else ())
    report = IngestReport(
        total=len(parsed) + len(unparseable),
        kept=len(samples),
        skipped=tuple(skipped),
    )
    return samples, embeddings, report


def ingest(
    corpus_path: str,
    task: TaskKind,
    domain: DomainConfig,
    index_path: str,
    embedding_provider: Optional[EmbeddingProvider] = None,
    saliency_threshold: float = DEFAULT_THRESHOLD,
    image_root: str = "",
) -> IngestReport:
    """Build the exemplar index file from a corpus file."""
    samples, embeddings, report = load_samples(
        corpus_path,
        task,
        domain,
        require_layout=True,
        embedding_provider=embedding_provider,
        saliency_threshold=saliency_threshold,
        image_root=image_root,
    )
    if not samples:
        raise DataError(f"{corpus_path}: no valid records (of {report.total})")
    exemplars = []
    seen_ids: set[str] = set()
    dropped: list[str] = []
    for sample, embedding in zip(samples, embeddings):
        if sample.id in seen_ids:
            message = f"{corpus_path}: duplicate record id {sample.id!r}"
            logger.warning("skipping record: %s", message)
            dropped.append(message)
            continue
        seen_ids.add(sample.id)
        exemplars.append(
            Exemplar(
                id=sample.id,
                constraint=sample.constraint,
                layout=sample.reference,
                embedding=embedding or None,
                saliency_box=sample.saliency_box,
            )
        )
    if dropped:
        report = IngestReport(
            total=report.total,
            kept=len(exemplars),
            skipped=report.skipped + tuple(dropped),
        )
    index = ExemplarIndex(domain=domain, task=task, exemplars=tuple(exemplars))
    save_index(index, index_path)
    logger.info(
        "ingested %d of %d records into %s", report.kept, report.total, index_path
    )
    return report


# --- JSON (de)serialization of constraints, layouts, and the index ---


def _box_json(box: BoundingBox) -> list[int]:
    return [box.left, box.top, box.width, box.height]


def _elements_json(elements: Sequence[Element]) -> list[list]:
    return [
        [e.type_label, e.box.left, e.box.top, e.box.width, e.box.height]
        for e in elements
    ]


def _elements_from_json(raw: list) -> tuple[Element, ...]:
    return tuple(
        Element(str(label), BoundingBox(int(l), int(t), int(w), int(h)))
        for label, l, t, w, h in raw
    )


def constraint_to_json(constraint: ConstraintSpec) -> dict:
    if isinstance(constraint, TypeConstraint):
        return {"kind": "types", "types": list(constraint.types)}
    if isinstance(constraint, TypeSizeConstraint):
        return {"kind": "type_sizes", "items": [list(i) for i in constraint.items]}
    if isinstance(constraint, RelationConstraint):
        relations = []
        for rel in constraint.relations:
            target = CANVAS if rel.object == CANVAS else rel.object[1]
            relations.append([rel.subject[1], rel.predicate.value, target])
        return {
            "kind": "relations",
            "types": list(constraint.types),
            "relations": relations,
        }
    if isinstance(constraint, PartialLayout):
        return {"kind": "partial", "elements": _elements_json(constraint.elements)}
    if isinstance(constraint, NoisyLayout):
        return {"kind": "noisy", "elements": _elements_json(constraint.elements)}
    if isinstance(constraint, ContentConstraint):
        return {
            "kind": "content",
            "box": _box_json(constraint.box),
            "types": list(constraint.types),
        }
    assert isinstance(constraint, TextConstraint)
    return {"kind": "text", "text": constraint.text}


def constraint_from_json(raw: dict) -> ConstraintSpec:
    kind = raw.get("kind")
    if kind == "types":
        return TypeConstraint(tuple(raw["types"]))
    if kind == "type_sizes":
        return TypeSizeConstraint(tuple((c, int(w), int(h)) for c, w, h in raw["items"]))
    if kind == "relations":
        types = tuple(raw["types"])
        relations = []
        for subject, predicate, target in raw["relations"]:
            obj = CANVAS if target == CANVAS else (types[int(target)], int(target))
            relations.append(
                Relation(
                    (types[int(subject)], int(subject)),
                    RelationPredicate(predicate),
                    obj,
                )
            )
        return RelationConstraint(types, tuple(relations))
    if kind == "partial":
        return PartialLayout(_elements_from_json(raw["elements"]))
    if kind == "noisy":
        return NoisyLayout(_elements_from_json(raw["elements"]))
    if kind == "content":
        left, top, width, height = raw["box"]
        return ContentConstraint(
            BoundingBox(int(left), int(top), int(width), int(height)),
            tuple(raw.get("types", [])),
        )
    if kind == "text":
        return TextConstraint(raw["text"])
    raise DataError(f"unknown constraint kind {kind!r}")


def layout_to_json(layout: Layout) -> dict:
    return {
        "canvas": [layout.canvas.width, layout.canvas.height],
        "elements": _elements_json(layout.elements),
    }


def layout_from_json(raw: dict) -> Layout:
    width, height = raw["canvas"]
    return Layout(
        canvas=CanvasSpec(int(width), int(height)),
        elements=_elements_from_json(raw["elements"]),
    )


def domain_to_json(domain: DomainConfig) -> dict:
    return {
        "name": domain.name,
        "canvas": [domain.canvas.width, domain.canvas.height],
        "types": list(domain.type_vocabulary),
    }


def domain_from_json(raw: dict) -> DomainConfig:
    width, height = raw["canvas"]
    return DomainConfig(
        name=raw["name"],
        canvas=CanvasSpec(int(width), int(height)),
        type_vocabulary=tuple(raw["types"]),
    )


def save_index(index: ExemplarIndex, path: str) -> None:
    payload = {
        "task": index.task.value,
        "domain": domain_to_json(index.domain),
        "exemplars": [
            {
                "id": ex.id,
                "constraint": constraint_to_json(ex.constraint),
                "layout": layout_to_json(ex.layout),
                **(
                    {"embedding": list(ex.embedding)}
                    if ex.embedding is not None
                    else {}
                ),
                **(
                    {"saliency_box": _box_json(ex.saliency_box)}
                    if ex.saliency_box is not None
                    else {}
                ),
            }
            for ex in index.exemplars
        ],
    }
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=None, separators=(",", ":"))
        fh.write("\n")
    os.replace(tmp, path)


def load_index(path: str) -> ExemplarIndex:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"index file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid index JSON: {exc}") from exc
    try:
        task = TaskKind(payload["task"])
        domain = domain_from_json(payload["domain"])
        exemplars = tuple(
            Exemplar(
                id=raw["id"],
                constraint=constraint_from_json(raw["constraint"]),
                layout=layout_from_json(raw["layout"]),
                embedding=(
                    tuple(raw["embedding"]) if "embedding" in raw else None
                ),
                saliency_box=(
                    BoundingBox(*(int(v) for v in raw["saliency_box"]))
                    if "saliency_box" in raw
                    else None
                ),
            )
            for raw in payload["exemplars"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed index: {exc}") from exc
    return ExemplarIndex(domain=domain, task=task, exemplars=exemplars)
