"""Matching and fusion of the two prediction streams.

The teacher stream (visual detector) and the text stream (LLM-style
structural regions) are aligned by greedy IoU matching, then fused:

* boxes by a fixed convex blend, by inverse-variance (precision)
  weighting when per-box variances are available, or by a learned gate;
* confidences by a convex combination in logit space, optionally after
  per-stream temperature calibration;
* categories by the trust-the-text-source policy on compatible
  disagreements.

``refine_pseudo_labels`` runs the complete refinement pipeline over one
page: fuse matched pairs, retain confident unmatched teacher boxes, and
admit high-scoring unmatched text regions of selected categories as
smoothed soft labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curriculum import CurriculumConfig, threshold_table
from .gating import GateFeatures, GateParams, GateSample, extract_features, gate_forward
from .geometry import BoundingBox, iou
from .model import (
    FusedLabel,
    LlmRegion,
    Page,
    PROVENANCE_FUSED,
    PROVENANCE_LLM_SOFT,
    PROVENANCE_TEACHER,
    TeacherPrediction,
)
from .numerics import logit, sigmoid, softplus
from .taxonomy import DOCLAYNET, LayoutCategory, Taxonomy

__all__ = [
    "FusionConfig",
    "MatchResult",
    "MatchOutcome",
    "match_regions",
    "compatible",
    "resolve_category",
    "fuse_fixed_box",
    "llm_spatial_variance",
    "fuse_inverse_variance",
    "optimal_alpha",
    "fused_variance",
    "apply_temperature",
    "fit_temperature",
    "fuse_confidence_logit",
    "refine_pseudo_labels",
    "gate_samples_from_pages",
]


@dataclass(frozen=True)
class FusionConfig:
    """Thresholds and weights for matching and fixed fusion.

    ``teacher_logit_weight`` and ``llm_logit_weight`` must sum to one;
    temperatures of 1.0 leave confidences untouched.
    """

    iou_threshold: float = 0.5
    teacher_box_weight: float = 0.6
    teacher_logit_weight: float = 0.7
    llm_logit_weight: float = 0.3
    teacher_temperature: float = 1.0
    llm_temperature: float = 1.0
    soft_score_min: float = 0.6
    soft_categories: tuple[str, ...] = ("header", "title", "caption")
    soft_smoothing: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"iou_threshold={self.iou_threshold} must be in (0, 1)")
        if not 0.0 <= self.teacher_box_weight <= 1.0:
            raise ValueError(f"teacher_box_weight={self.teacher_box_weight} must be in [0, 1]")
        if abs(self.teacher_logit_weight + self.llm_logit_weight - 1.0) > 1e-9:
            raise ValueError("teacher_logit_weight + llm_logit_weight must equal 1")
        if not 0.0 <= self.teacher_logit_weight <= 1.0:
            raise ValueError("teacher_logit_weight must be in [0, 1]")
        if self.teacher_temperature <= 0.0 or self.llm_temperature <= 0.0:
            raise ValueError("temperatures must be positive")
        if not 0.0 <= self.soft_smoothing < 1.0:
            raise ValueError(f"soft_smoothing={self.soft_smoothing} must be in [0, 1)")


@dataclass(frozen=True)
class MatchResult:
    """A consumed teacher/text pairing; emitted matches are compatible."""

    teacher_index: int
    llm_index: int
    iou: float
    compatible: bool = True


@dataclass(frozen=True)
class MatchOutcome:
    matches: tuple[MatchResult, ...]
    unmatched_teacher: tuple[int, ...]
    unmatched_llm: tuple[int, ...]


def compatible(a, b, taxonomy: Taxonomy = DOCLAYNET) -> bool:
    """True iff the categories are identical or a confusable pair."""
    name_a = a.name if isinstance(a, LayoutCategory) else a
    name_b = b.name if isinstance(b, LayoutCategory) else b
    return taxonomy.compatible(name_a, name_b)


def match_regions(
    teacher,
    llm,
    config: FusionConfig = FusionConfig(),
    taxonomy: Taxonomy = DOCLAYNET,
) -> MatchOutcome:
    """Greedy IoU matching in teacher-list order with single-use regions.

    For each teacher box the IoU-argmax among still-available text
    regions is taken; the pair is emitted iff its IoU clears the
    threshold and the categories are compatible. A region consumed by an
    earlier teacher box is unavailable to later ones. No second-best
    fallback: if the argmax fails either check the teacher stays
    unmatched.
    """
    matches: list[MatchResult] = []
    consumed: set[int] = set()
    unmatched_teacher: list[int] = []
    for ti, pred in enumerate(teacher):
        best_iou = 0.0
        best_idx = -1
        for li, region in enumerate(llm):
            if li in consumed:
                continue
            overlap = iou(pred.box, region.box)
            if overlap > best_iou:
                best_iou = overlap
                best_idx = li
        if (
            best_idx >= 0
            and best_iou >= config.iou_threshold
            and compatible(pred.category, llm[best_idx].category, taxonomy)
        ):
            matches.append(MatchResult(ti, best_idx, best_iou, compatible=True))
            consumed.add(best_idx)
        else:
            unmatched_teacher.append(ti)
    unmatched_llm = tuple(i for i in range(len(llm)) if i not in consumed)
    return MatchOutcome(tuple(matches), tuple(unmatched_teacher), unmatched_llm)


def resolve_category(
    c_t: LayoutCategory,
    p_t: float,
    c_l: LayoutCategory,
    s_l: float,
    taxonomy: Taxonomy = DOCLAYNET,
) -> LayoutCategory:
    """Category of a fused label: agreement keeps it, disagreement
    trusts the text source.

    The policy is unconditional on the scores; they participate in
    confidence fusion only. Incompatible pairs are an error because the
    matcher must never produce them.
    """
    del p_t, s_l
    if not compatible(c_t, c_l, taxonomy):
        raise ValueError(f"incompatible categories {c_t.name!r} and {c_l.name!r}")
    return c_t if c_t.name == c_l.name else c_l


def fuse_fixed_box(b_t: BoundingBox, b_l: BoundingBox, weight: float) -> BoundingBox:
    """Coordinate-wise convex combination, ``weight`` on the teacher box."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight={weight} must be in [0, 1]")
    blended = weight * b_t.as_array() + (1.0 - weight) * b_l.as_array()
    return BoundingBox.from_array(blended)


def llm_spatial_variance(q_text: float, q_spatial: float) -> float:
    """Spatial variance of a text region: reciprocal of its evidence quality."""
    if q_text <= 0.0 or q_spatial <= 0.0:
        raise ValueError("variance undefined for non-positive quality")
    return 1.0 / (q_text * q_spatial)


def fuse_inverse_variance(
    b_t: BoundingBox, var_t: float, b_l: BoundingBox, var_l: float
) -> BoundingBox:
    """Precision-weighted box blend; a zero-variance source wins outright."""
    if var_t < 0.0 or var_l < 0.0:
        raise ValueError("variances must be nonnegative")
    if var_t == 0.0 and var_l == 0.0:
        raise ValueError("at least one variance must be positive")
    if var_t == 0.0:
        return b_t
    if var_l == 0.0:
        return b_l
    w_t = 1.0 / var_t
    w_l = 1.0 / var_l
    blended = (w_t * b_t.as_array() + w_l * b_l.as_array()) / (w_t + w_l)
    return BoundingBox.from_array(blended)


def optimal_alpha(sigma_t: float, sigma_l: float, rho: float) -> float:
    """Variance-minimizing teacher weight for correlated sources.

    Closed form (sigma_l^2 - rho sigma_t sigma_l) / (sigma_t^2 +
    sigma_l^2 - 2 rho sigma_t sigma_l), clamped to [0, 1].
    """
    if sigma_t <= 0.0 or sigma_l <= 0.0:
        raise ValueError("standard deviations must be positive")
    denominator = sigma_t**2 + sigma_l**2 - 2.0 * rho * sigma_t * sigma_l
    if denominator <= 1e-12:
        raise ValueError("degenerate fusion: equal deviations with correlation near 1")
    alpha = (sigma_l**2 - rho * sigma_t * sigma_l) / denominator
    return min(1.0, max(0.0, alpha))


def fused_variance(sigma_t: float, sigma_l: float, rho: float) -> float:
    """Minimum variance achievable by any linear combination of the sources."""
    if sigma_t <= 0.0 or sigma_l <= 0.0:
        raise ValueError("standard deviations must be positive")
    denominator = sigma_t**2 + sigma_l**2 - 2.0 * rho * sigma_t * sigma_l
    if denominator <= 1e-12:
        raise ValueError("degenerate fusion: equal deviations with correlation near 1")
    return sigma_t**2 * sigma_l**2 * (1.0 - rho**2) / denominator


def apply_temperature(p, temperature: float):
    """Rescale a probability's logit by 1/T; T = 1 is the identity."""
    if temperature <= 0.0:
        raise ValueError(f"temperature={temperature} must be positive")
    return sigmoid(logit(p) / temperature)


def fit_temperature(confidences, correct, *, tol: float = 1e-4) -> float:
    """Fit the temperature minimizing binary negative log-likelihood.

    One-dimensional golden-section search on T in [0.05, 20]. Requires
    at least 10 samples and both outcomes present (otherwise the NLL is
    unbounded in T).
    """
    p = np.asarray(confidences, dtype=np.float64)
    y = np.asarray(correct, dtype=bool)
    if p.shape != y.shape:
        raise ValueError("confidences and correct must have equal length")
    if p.size < 10:
        raise ValueError(f"need at least 10 samples, got {p.size}")
    if y.all() or (~y).all():
        raise ValueError("need both correct and incorrect outcomes to fit a temperature")
    z = logit(p)

    def nll(temperature: float) -> float:
        scaled = z / temperature
        # -log sigmoid(x) = softplus(-x); stable for extreme logits.
        return float(np.sum(softplus(-scaled[y])) + np.sum(softplus(scaled[~y])))

    lo, hi = 0.05, 20.0
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    while hi - lo > tol:
        c = hi - invphi * (hi - lo)
        d = lo + invphi * (hi - lo)
        if nll(c) < nll(d):
            hi = d
        else:
            lo = c
    return (lo + hi) / 2.0


def fuse_confidence_logit(p_t: float, s_l: float, lambda_t: float) -> float:
    """Convex combination of the two confidences in logit space."""
    if not 0.0 <= lambda_t <= 1.0:
        raise ValueError(f"lambda_t={lambda_t} must be in [0, 1]")
    return float(sigmoid(lambda_t * logit(p_t) + (1.0 - lambda_t) * logit(s_l)))


def _fuse_pair(
    pred: TeacherPrediction,
    region: LlmRegion,
    pair_iou: float,
    config: FusionConfig,
    gate: GateParams | None,
    taxonomy: Taxonomy,
) -> FusedLabel:
    p_cal = apply_temperature(pred.confidence, config.teacher_temperature)
    s_cal = apply_temperature(region.score, config.llm_temperature)
    if gate is not None:
        features = GateFeatures(pred.confidence, region.score, pair_iou)
        g = gate_forward(gate, features)
        box = fuse_fixed_box(pred.box, region.box, g)
        lambda_t = g
    elif pred.coordinate_variance is not None:
        var_t = pred.coordinate_variance
        var_l = llm_spatial_variance(region.q_text, region.q_spatial)
        box = fuse_inverse_variance(pred.box, var_t, region.box, var_l)
        # Normalized precisions; a zero-variance teacher takes all weight.
        lambda_t = 1.0 if var_t == 0.0 else var_l / (var_t + var_l)
    else:
        box = fuse_fixed_box(pred.box, region.box, config.teacher_box_weight)
        lambda_t = config.teacher_logit_weight
    confidence = fuse_confidence_logit(p_cal, s_cal, lambda_t)
    category = resolve_category(pred.category, pred.confidence, region.category, region.score, taxonomy)
    return FusedLabel(box=box, category=category, confidence=confidence, provenance=PROVENANCE_FUSED)


def refine_pseudo_labels(
    page: Page,
    config: FusionConfig = FusionConfig(),
    gate: GateParams | None = None,
    *,
    taxonomy: Taxonomy = DOCLAYNET,
    thresholds=None,
) -> list[FusedLabel]:
    """Run the full refinement pipeline over one page.

    Matched pairs become fused labels; unmatched teacher boxes are kept
    when their confidence clears the per-category threshold (rarity
    defaults: 0.7 frequent, 0.5 rare; pass a flat table for a global
    threshold); unmatched text regions with high scores in the
    configured soft categories enter as smoothed soft labels.
    """
    if thresholds is None:
        thresholds = threshold_table(taxonomy, CurriculumConfig())
    outcome = match_regions(page.teacher, page.llm, config, taxonomy)
    matched_llm = {m.llm_index for m in outcome.matches}
    by_teacher = {m.teacher_index: m for m in outcome.matches}

    labels: list[FusedLabel] = []
    for ti, pred in enumerate(page.teacher):
        match = by_teacher.get(ti)
        if match is not None:
            labels.append(
                _fuse_pair(pred, page.llm[match.llm_index], match.iou, config, gate, taxonomy)
            )
        elif pred.confidence >= thresholds[pred.category.name]:
            labels.append(
                FusedLabel(
                    box=pred.box,
                    category=pred.category,
                    confidence=pred.confidence,
                    provenance=PROVENANCE_TEACHER,
                )
            )
    for li, region in enumerate(page.llm):
        if li in matched_llm:
            continue
        if region.score >= config.soft_score_min and region.category.name in config.soft_categories:
            labels.append(
                FusedLabel(
                    box=region.box,
                    category=region.category,
                    confidence=region.score,
                    provenance=PROVENANCE_LLM_SOFT,
                    smoothing=config.soft_smoothing,
                )
            )
    return labels


def gate_samples_from_pages(
    pages,
    config: FusionConfig = FusionConfig(),
    taxonomy: Taxonomy = DOCLAYNET,
) -> list[GateSample]:
    """Gate training samples from annotated pages.

    One sample per matched pair; the target box is the ground-truth
    annotation that best overlaps the teacher box, and the correctness
    flags record whether each source named that annotation's category.
    """
    samples: list[GateSample] = []
    for page in pages:
        if page.ground_truth is None:
            raise ValueError(f"page {page.page_id!r} has no ground truth")
        outcome = match_regions(page.teacher, page.llm, config, taxonomy)
        for match in outcome.matches:
            pred = page.teacher[match.teacher_index]
            region = page.llm[match.llm_index]
            best_overlap = 0.0
            best = None
            for annotation in page.ground_truth:
                overlap = iou(pred.box, annotation.box)
                if overlap > best_overlap:
                    best_overlap = overlap
                    best = annotation
            if best is None:
                continue
            samples.append(
                GateSample(
                    features=extract_features(pred, region, match.iou),
                    teacher_box=pred.box.as_array(),
                    llm_box=region.box.as_array(),
                    truth_box=best.box.as_array(),
                    teacher_correct=pred.category.name == best.category.name,
                    llm_correct=region.category.name == best.category.name,
                )
            )
    return samples
