"""Synthetic ground truth and noisy two-source predictions.

This is the desk-scale oracle: every noise parameter is known exactly,
so closed-form fusion claims (optimal weights, fused variance, sample
complexity) can be checked against brute force.

Noise model per ground-truth box, coordinate-wise:

    teacher = truth + sigma_t * (sqrt(rho) * z + sqrt(1 - rho) * u)
    text    = truth + sigma_l * (sqrt(rho) * z + sqrt(1 - rho) * v)

with independent standard normals z, u, v shared as shown, giving error
correlation exactly rho. Categories flip to a confusable partner (or a
random other category when none exists) at the configured rate, and
confidences are drawn calibrated (correctness is Bernoulli in the
latent confidence) then optionally miscalibrated by scaling logits with
a temperature, so a temperature fit has a recoverable target.

Pages own independent RNG streams derived from (seed, stream, page), so
generation order does not matter.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .gating import GateFeatures, GateSample
from .geometry import BoundingBox, iou
from .model import GroundTruthAnnotation, LlmRegion, OcrBlock, Page, TeacherPrediction
from .numerics import sigmoid
from .taxonomy import TAXONOMIES, Taxonomy

__all__ = [
    "SimConfig",
    "GateTask",
    "GateInstances",
    "default_asymmetric_config",
    "generate_pages",
    "simulate_predictions",
    "simulate_dataset",
    "monte_carlo_fusion_variance",
    "sample_calibration_data",
    "sample_gate_instances",
]

_CONF_CLIP = 1e-7
_BETA_CONCENTRATION = 8.0
_MIN_CELL = 0.02

DEFAULT_CATEGORY_FREQUENCIES: dict[str, float] = {
    "text": 0.30,
    "paragraph": 0.20,
    "section-header": 0.12,
    "list": 0.08,
    "table": 0.07,
    "figure": 0.07,
    "caption": 0.06,
    "title": 0.04,
    "header": 0.03,
    "footer": 0.02,
    "footnote": 0.01,
}


@dataclass(frozen=True)
class SimConfig:
    """Controllable noise model for the synthetic corpus.

    ``sigma_t``/``sigma_l`` may be a single float or a per-category
    mapping. Confusion rates must stay below 0.5 (predictors must not
    be mostly wrong). ``*_temperature`` scales the emitted confidence
    logits; 1.0 emits calibrated confidences.
    """

    pages: int = 100
    regions_min: int = 4
    regions_max: int = 8
    category_frequencies: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_CATEGORY_FREQUENCIES)
    )
    sigma_t: float | Mapping[str, float] = 0.010
    sigma_l: float | Mapping[str, float] = 0.015
    rho: float = 0.2
    teacher_confusion: float = 0.18
    llm_confusion: float = 0.06
    teacher_temperature: float = 1.0
    llm_temperature: float = 1.0
    emit_coordinate_variance: bool = False
    emit_ocr_stubs: bool = False
    taxonomy: str = "doclaynet"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pages < 0:
            raise ValueError("pages must be >= 0")
        if not 1 <= self.regions_min <= self.regions_max:
            raise ValueError("need 1 <= regions_min <= regions_max")
        if self.taxonomy not in TAXONOMIES:
            raise ValueError(f"unknown taxonomy {self.taxonomy!r}")
        total = sum(self.category_frequencies.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"category frequencies sum to {total}, expected 1")
        tax = TAXONOMIES[self.taxonomy]
        for name in self.category_frequencies:
            if name not in tax:
                raise ValueError(f"frequency for unknown category {name!r}")
        for name, value in (("rho", self.rho),):
            if not 0.0 <= value <= 0.99:
                raise ValueError(f"{name}={value} must be in [0, 0.99]")
        for name in ("teacher_confusion", "llm_confusion"):
            value = getattr(self, name)
            if not 0.0 <= value < 0.5:
                raise ValueError(f"{name}={value} must be in [0, 0.5)")
        for name in ("teacher_temperature", "llm_temperature"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("sigma_t", "sigma_l"):
            sigma = getattr(self, name)
            values = sigma.values() if isinstance(sigma, Mapping) else [sigma]
            if any(v < 0.0 for v in values):
                raise ValueError(f"{name} must be nonnegative")

    def sigma_for(self, which: str, category: str) -> float:
        sigma = self.sigma_t if which == "teacher" else self.sigma_l
        if isinstance(sigma, Mapping):
            return float(sigma[category])
        return float(sigma)

    def to_dict(self) -> dict:
        return {
            "pages": self.pages,
            "regions_min": self.regions_min,
            "regions_max": self.regions_max,
            "category_frequencies": dict(self.category_frequencies),
            "sigma_t": self.sigma_t if not isinstance(self.sigma_t, Mapping) else dict(self.sigma_t),
            "sigma_l": self.sigma_l if not isinstance(self.sigma_l, Mapping) else dict(self.sigma_l),
            "rho": self.rho,
            "teacher_confusion": self.teacher_confusion,
            "llm_confusion": self.llm_confusion,
            "teacher_temperature": self.teacher_temperature,
            "llm_temperature": self.llm_temperature,
            "emit_coordinate_variance": self.emit_coordinate_variance,
            "emit_ocr_stubs": self.emit_ocr_stubs,
            "taxonomy": self.taxonomy,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown simulator config fields: {sorted(unknown)}")
        return cls(**obj)


def default_asymmetric_config(pages: int = 200, seed: int = 0) -> SimConfig:
    """Complementary-strengths default: the visual stream localizes
    better, the text stream classifies better."""
    return SimConfig(pages=pages, seed=seed)


def _page_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng((seed, stream, index))


def _place_boxes(rng: np.random.Generator, count: int) -> list[BoundingBox]:
    grid = int(np.ceil(np.sqrt(count)))
    cell = 1.0 / grid
    if cell < _MIN_CELL:
        raise ValueError(f"region count {count} infeasible for the placement grid")
    cells = rng.choice(grid * grid, size=count, replace=False)
    boxes = []
    margin = 0.05 * cell
    avail = cell - 2.0 * margin
    for flat in cells:
        row, col = divmod(int(flat), grid)
        spans = []
        for base in (col, row):
            lo = base * cell + margin
            extent = rng.uniform(0.5, 0.95) * avail
            offset = rng.uniform(0.0, avail - extent)
            spans.append((lo + offset, lo + offset + extent))
        (x1, x2), (y1, y2) = spans
        boxes.append(BoundingBox(x1, y1, x2, y2))
    return boxes


def generate_pages(config: SimConfig) -> list[Page]:
    """Ground-truth pages: non-overlapping boxes on a jittered grid."""
    taxonomy = TAXONOMIES[config.taxonomy]
    names = sorted(config.category_frequencies)
    freqs = np.array([config.category_frequencies[n] for n in names])
    freqs = freqs / freqs.sum()
    pages = []
    for index in range(config.pages):
        rng = _page_rng(config.seed, 0, index)
        count = int(rng.integers(config.regions_min, config.regions_max + 1))
        boxes = _place_boxes(rng, count)
        categories = rng.choice(names, size=count, p=freqs)
        annotations = tuple(
            GroundTruthAnnotation(box=b, category=taxonomy.category(str(c)))
            for b, c in zip(boxes, categories)
        )
        pages.append(Page(page_id=f"page-{index:05d}", ground_truth=annotations))
    return pages


def _correlated_offsets(rng: np.random.Generator, sigma_t: float, sigma_l: float, rho: float):
    z = rng.standard_normal(4)
    u = rng.standard_normal(4)
    v = rng.standard_normal(4)
    shared = np.sqrt(rho)
    private = np.sqrt(1.0 - rho)
    eps_t = sigma_t * (shared * z + private * u)
    eps_l = sigma_l * (shared * z + private * v)
    return eps_t, eps_l


def _noisy_box(truth: BoundingBox, eps: np.ndarray) -> BoundingBox | None:
    coords = np.clip(truth.as_array() + eps, 0.0, 1.0)
    if coords[0] < coords[2] and coords[1] < coords[3]:
        return BoundingBox.from_array(coords)
    return None


def _draw_confidence(rng: np.random.Generator, confusion: float, temperature: float):
    """Calibrated latent confidence, its correctness draw, and the
    (possibly miscalibrated) emitted value.

    The latent confidence has mean 1 - confusion and correctness is
    Bernoulli in it, so emitted confidences are exactly calibrated
    before the temperature distortion. A zero confusion rate means the
    stream never errs: correctness is forced and the latent stays high.
    """
    if confusion == 0.0:
        latent = float(np.clip(rng.beta(_BETA_CONCENTRATION, 0.05), 0.5, 1.0 - _CONF_CLIP))
        correct = True
    else:
        latent = float(
            np.clip(
                rng.beta(
                    _BETA_CONCENTRATION * (1.0 - confusion), _BETA_CONCENTRATION * confusion
                ),
                _CONF_CLIP,
                1.0 - _CONF_CLIP,
            )
        )
        correct = bool(rng.random() < latent)
    z = np.log(latent) - np.log1p(-latent)
    emitted = float(np.clip(sigmoid(temperature * z), _CONF_CLIP, 1.0 - _CONF_CLIP))
    return latent, correct, emitted


def _flip_category(rng: np.random.Generator, name: str, taxonomy: Taxonomy) -> str:
    partner = taxonomy.confusable_partner(name)
    if partner is not None:
        return partner
    others = [c for c in taxonomy.names if c != name]
    return str(rng.choice(others))


def _ocr_stub_blocks(rng: np.random.Generator, annotation: GroundTruthAnnotation) -> list[OcrBlock]:
    box = annotation.box
    name = annotation.category.name
    if name == "caption":
        return [OcrBlock(box=box, text="Figure 1: synthetic caption", is_bold=False)]
    if name == "header":
        return [OcrBlock(box=box, text="Synthetic Header", is_bold=True)]
    if name == "footer":
        return [OcrBlock(box=box, text="page 3", is_bold=False)]
    if name == "table":
        blocks = []
        xs = np.linspace(box.x1, box.x2, 4)
        ys = np.linspace(box.y1, box.y2, 4)
        for r in range(3):
            for c in range(3):
                cell = BoundingBox(
                    xs[c], ys[r], xs[c] + 0.8 * (xs[1] - xs[0]), ys[r] + 0.8 * (ys[1] - ys[0])
                )
                blocks.append(OcrBlock(box=cell, text=str(int(rng.integers(0, 100))), is_bold=False))
        return blocks
    return [OcrBlock(box=box, text="body text", is_bold=False)]


def simulate_predictions(pages: list[Page], config: SimConfig) -> list[Page]:
    """Attach noisy teacher and text streams to ground-truth pages."""
    taxonomy = TAXONOMIES[config.taxonomy]
    out = []
    for index, page in enumerate(pages):
        if page.ground_truth is None:
            raise ValueError(f"page {page.page_id!r} has no ground truth")
        rng = _page_rng(config.seed, 1, index)
        teacher = []
        llm = []
        ocr: list[OcrBlock] = []
        for annotation in page.ground_truth:
            name = annotation.category.name
            sigma_t = config.sigma_for("teacher", name)
            sigma_l = config.sigma_for("llm", name)
            for _ in range(100):
                eps_t, eps_l = _correlated_offsets(rng, sigma_t, sigma_l, config.rho)
                box_t = _noisy_box(annotation.box, eps_t)
                box_l = _noisy_box(annotation.box, eps_l)
                if box_t is not None and box_l is not None:
                    break
            else:
                raise ValueError("noise repeatedly collapsed a box; lower sigma")

            _, correct_t, conf_t = _draw_confidence(
                rng, config.teacher_confusion, config.teacher_temperature
            )
            cat_t = name if correct_t else _flip_category(rng, name, taxonomy)
            teacher.append(
                TeacherPrediction(
                    box=box_t,
                    category=taxonomy.category(cat_t),
                    confidence=conf_t,
                    coordinate_variance=sigma_t**2 if config.emit_coordinate_variance else None,
                )
            )

            _, correct_l, score_l = _draw_confidence(
                rng, config.llm_confusion, config.llm_temperature
            )
            cat_l = name if correct_l else _flip_category(rng, name, taxonomy)
            q_text, q_spatial = rng.uniform(0.6, 0.95, size=2)
            llm.append(
                LlmRegion(
                    box=box_l,
                    category=taxonomy.category(cat_l),
                    score=score_l,
                    q_text=float(q_text),
                    q_spatial=float(q_spatial),
                )
            )
            if config.emit_ocr_stubs:
                ocr.extend(_ocr_stub_blocks(rng, annotation))
        out.append(
            Page(
                page_id=page.page_id,
                ocr_blocks=tuple(ocr),
                teacher=tuple(teacher),
                llm=tuple(llm),
                ground_truth=page.ground_truth,
            )
        )
    return out


def simulate_dataset(config: SimConfig) -> list[Page]:
    return simulate_predictions(generate_pages(config), config)


def monte_carlo_fusion_variance(
    sigma_t: float, sigma_l: float, rho: float, alpha: float, samples: int, seed: int = 0
) -> float:
    """Empirical variance of the alpha-fused scalar under correlated noise."""
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples for a stable estimate")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(samples)
    u = rng.standard_normal(samples)
    v = rng.standard_normal(samples)
    shared = np.sqrt(rho)
    private = np.sqrt(1.0 - rho)
    eps_t = sigma_t * (shared * z + private * u)
    eps_l = sigma_l * (shared * z + private * v)
    fused = alpha * eps_t + (1.0 - alpha) * eps_l
    return float(np.var(fused))


def sample_calibration_data(
    n: int, temperature: float = 1.0, seed: int = 0, logit_scale: float = 1.2
):
    """Confidence/correctness pairs, calibrated before logit scaling.

    Correctness is Bernoulli in the latent probability; the emitted
    confidence has its logit multiplied by ``temperature``, which is
    exactly the value a temperature fit should recover.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(0.0, logit_scale, size=n)
    latent = sigmoid(z)
    correct = rng.random(n) < latent
    emitted = np.clip(sigmoid(temperature * z), _CONF_CLIP, 1.0 - _CONF_CLIP)
    return emitted, correct


@dataclass(frozen=True)
class GateTask:
    """Recipe for sampling abstract fusion-gate instances.

    Default mode draws the text/teacher deviation ratio log-uniformly
    and encodes it in both confidence channels (so the optimal weight is
    an exact smooth function of the features). A ``mixture`` of
    (weight, sigma_t, sigma_l) components overrides the ratio draw, with
    confidences drawn uninformatively from the configured ranges.
    """

    sigma_scale: float = 0.05
    ratio_lo: float = 0.25
    ratio_hi: float = 4.0
    rho: float = 0.0
    mixture: tuple[tuple[float, float, float], ...] | None = None
    p_t_range: tuple[float, float] = (0.55, 0.9)
    s_l_range: tuple[float, float] = (0.55, 0.9)
    synthetic_iou: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 0.99:
            raise ValueError(f"rho={self.rho} must be in [0, 0.99]")
        if self.mixture is None and not 0.0 < self.ratio_lo <= self.ratio_hi:
            raise ValueError("need 0 < ratio_lo <= ratio_hi")
        if self.mixture is not None:
            if not self.mixture or any(w <= 0 or st <= 0 or sl <= 0 for w, st, sl in self.mixture):
                raise ValueError("mixture components need positive weight and deviations")

    def to_dict(self) -> dict:
        doc = {
            "sigma_scale": self.sigma_scale,
            "ratio_lo": self.ratio_lo,
            "ratio_hi": self.ratio_hi,
            "rho": self.rho,
            "p_t_range": list(self.p_t_range),
            "s_l_range": list(self.s_l_range),
        }
        if self.mixture is not None:
            doc["mixture"] = [list(c) for c in self.mixture]
        if self.synthetic_iou is not None:
            doc["synthetic_iou"] = list(self.synthetic_iou)
        return doc

    @classmethod
    def from_dict(cls, obj: Mapping) -> "GateTask":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown gate task fields: {sorted(unknown)}")
        obj = dict(obj)
        if "mixture" in obj and obj["mixture"] is not None:
            obj["mixture"] = tuple(tuple(c) for c in obj["mixture"])
        for key in ("p_t_range", "s_l_range", "synthetic_iou"):
            if key in obj and obj[key] is not None:
                obj[key] = tuple(obj[key])
        return cls(**obj)


@dataclass
class GateInstances:
    """Vectorized gate instances with their true noise parameters."""

    features: np.ndarray  # (n, 3)
    teacher_boxes: np.ndarray  # (n, 4)
    llm_boxes: np.ndarray  # (n, 4)
    truth_boxes: np.ndarray  # (n, 4)
    sigma_t: np.ndarray  # (n,)
    sigma_l: np.ndarray  # (n,)
    rho: float
    teacher_correct: np.ndarray  # (n,) bool
    llm_correct: np.ndarray  # (n,) bool

    def __len__(self) -> int:
        return self.features.shape[0]

    def to_samples(self) -> list[GateSample]:
        return [
            GateSample(
                features=GateFeatures(*self.features[i]),
                teacher_box=self.teacher_boxes[i],
                llm_box=self.llm_boxes[i],
                truth_box=self.truth_boxes[i],
                teacher_correct=bool(self.teacher_correct[i]),
                llm_correct=bool(self.llm_correct[i]),
            )
            for i in range(len(self))
        ]

    def subset(self, idx) -> "GateInstances":
        return replace(
            self,
            features=self.features[idx],
            teacher_boxes=self.teacher_boxes[idx],
            llm_boxes=self.llm_boxes[idx],
            truth_boxes=self.truth_boxes[idx],
            sigma_t=self.sigma_t[idx],
            sigma_l=self.sigma_l[idx],
            teacher_correct=self.teacher_correct[idx],
            llm_correct=self.llm_correct[idx],
        )


def _sample_truth_boxes(rng: np.random.Generator, n: int) -> np.ndarray:
    cx = rng.uniform(0.3, 0.7, size=n)
    cy = rng.uniform(0.3, 0.7, size=n)
    hx = rng.uniform(0.05, 0.2, size=n)
    hy = rng.uniform(0.05, 0.2, size=n)
    return np.stack([cx - hx, cy - hy, cx + hx, cy + hy], axis=1)


def sample_gate_instances(task: GateTask, n: int, seed: int = 0) -> GateInstances:
    """Draw abstract matched-pair instances from a gate task."""
    rng = np.random.default_rng(seed)
    if task.mixture is not None:
        weights = np.array([c[0] for c in task.mixture])
        weights = weights / weights.sum()
        idx = rng.choice(len(task.mixture), size=n, p=weights)
        sigma_t = np.array([task.mixture[i][1] for i in idx])
        sigma_l = np.array([task.mixture[i][2] for i in idx])
    else:
        log_ratio = rng.uniform(np.log(task.ratio_lo), np.log(task.ratio_hi), size=n)
        ratio = np.exp(log_ratio)
        sigma_t = task.sigma_scale / np.sqrt(ratio)
        sigma_l = task.sigma_scale * np.sqrt(ratio)

    truth = _sample_truth_boxes(rng, n)
    z = rng.standard_normal((n, 4))
    u = rng.standard_normal((n, 4))
    v = rng.standard_normal((n, 4))
    shared = np.sqrt(task.rho)
    private = np.sqrt(1.0 - task.rho)
    teacher = truth + sigma_t[:, None] * (shared * z + private * u)
    llm = truth + sigma_l[:, None] * (shared * z + private * v)
    teacher = np.clip(teacher, 0.0, 1.0)
    llm = np.clip(llm, 0.0, 1.0)
    # Repair the rare collapse instead of resampling: order the corners.
    for boxes in (teacher, llm):
        lo = np.minimum(boxes[:, :2], boxes[:, 2:] - 1e-4)
        boxes[:, :2] = np.clip(lo, 0.0, 1.0 - 1e-4)

    if task.mixture is not None:
        p_t = rng.uniform(*task.p_t_range, size=n)
        s_l = rng.uniform(*task.s_l_range, size=n)
    else:
        coded = sigma_l**2 / (sigma_t**2 + sigma_l**2)
        p_t = np.clip(coded, 1e-3, 1.0 - 1e-3)
        s_l = p_t.copy()

    if task.synthetic_iou is not None:
        pair_iou = rng.uniform(*task.synthetic_iou, size=n)
    else:
        pair_iou = np.array(
            [
                iou(BoundingBox.from_array(teacher[i]), BoundingBox.from_array(llm[i]))
                for i in range(n)
            ]
        )
    features = np.stack([p_t, s_l, np.clip(pair_iou, 0.0, 1.0)], axis=1)
    flags = np.ones(n, dtype=bool)
    return GateInstances(
        features=features,
        teacher_boxes=teacher,
        llm_boxes=llm,
        truth_boxes=truth,
        sigma_t=sigma_t,
        sigma_l=sigma_l,
        rho=task.rho,
        teacher_correct=flags,
        llm_correct=flags.copy(),
    )
