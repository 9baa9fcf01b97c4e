"""Domain types shared by every other module.

All values are immutable after construction; pages can be processed in
parallel with no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import BoundingBox
from .taxonomy import LayoutCategory

__all__ = [
    "TeacherPrediction",
    "LlmRegion",
    "OcrBlock",
    "GroundTruthAnnotation",
    "FusedLabel",
    "Page",
    "PROVENANCE_FUSED",
    "PROVENANCE_TEACHER",
    "PROVENANCE_LLM_SOFT",
]

PROVENANCE_FUSED = "fused"
PROVENANCE_TEACHER = "teacher"
PROVENANCE_LLM_SOFT = "llm-soft"
_PROVENANCES = (PROVENANCE_FUSED, PROVENANCE_TEACHER, PROVENANCE_LLM_SOFT)


def _check_probability(value: float, name: str) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name}={value} must be strictly inside (0, 1)")


@dataclass(frozen=True)
class TeacherPrediction:
    """One visual-detector output: box, category, confidence.

    ``coordinate_variance`` is an optional per-box variance of the
    normalized coordinates; when present it enables precision-weighted
    box fusion instead of the fixed-weight blend.
    """

    box: BoundingBox
    category: LayoutCategory
    confidence: float
    coordinate_variance: float | None = None

    def __post_init__(self) -> None:
        _check_probability(self.confidence, "confidence")
        if self.coordinate_variance is not None and self.coordinate_variance < 0.0:
            raise ValueError(f"coordinate_variance={self.coordinate_variance} must be >= 0")


@dataclass(frozen=True)
class LlmRegion:
    """One text-derived structural region: box, category, score.

    ``q_text`` and ``q_spatial`` grade the text evidence behind the
    region; their product sets the region's spatial precision.
    """

    box: BoundingBox
    category: LayoutCategory
    score: float
    q_text: float = 1.0
    q_spatial: float = 1.0

    def __post_init__(self) -> None:
        _check_probability(self.score, "score")
        for name in ("q_text", "q_spatial"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name}={value} must be in (0, 1]")


@dataclass(frozen=True)
class OcrBlock:
    box: BoundingBox
    text: str = ""
    is_bold: bool = False


@dataclass(frozen=True)
class GroundTruthAnnotation:
    box: BoundingBox
    category: LayoutCategory


@dataclass(frozen=True)
class FusedLabel:
    """A refined pseudo-label with provenance.

    ``smoothing`` is stored on the label (not applied to any target
    distribution) and must be zero unless the label came in as an
    unmatched high-confidence text region ("llm-soft").
    """

    box: BoundingBox
    category: LayoutCategory
    confidence: float
    provenance: str
    smoothing: float = 0.0

    def __post_init__(self) -> None:
        if self.provenance not in _PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence={self.confidence} must be in (0, 1)")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError(f"smoothing={self.smoothing} must be in [0, 1)")
        if self.provenance != PROVENANCE_LLM_SOFT and self.smoothing != 0.0:
            raise ValueError("smoothing is only meaningful for llm-soft labels")


@dataclass(frozen=True)
class Page:
    """One document page: OCR blocks plus the two prediction streams.

    ``ground_truth`` is present on simulated or annotated data only;
    ``refined`` carries fusion output when a refined dataset is loaded.
    """

    page_id: str
    ocr_blocks: tuple[OcrBlock, ...] = ()
    teacher: tuple[TeacherPrediction, ...] = ()
    llm: tuple[LlmRegion, ...] = ()
    ground_truth: tuple[GroundTruthAnnotation, ...] | None = None
    refined: tuple[FusedLabel, ...] | None = None

    def with_refined(self, labels) -> "Page":
        return Page(
            page_id=self.page_id,
            ocr_blocks=self.ocr_blocks,
            teacher=self.teacher,
            llm=self.llm,
            ground_truth=self.ground_truth,
            refined=tuple(labels),
        )

    def with_llm(self, regions) -> "Page":
        return Page(
            page_id=self.page_id,
            ocr_blocks=self.ocr_blocks,
            teacher=self.teacher,
            llm=tuple(regions),
            ground_truth=self.ground_truth,
            refined=self.refined,
        )
