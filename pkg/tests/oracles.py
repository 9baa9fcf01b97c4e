"""Independent reference implementations used as test oracles.

Everything here is deliberately written from scratch (plain Python,
no imports from the package's fusion internals) so the main code can be
checked against a second, dumber path.
"""

from __future__ import annotations

import math

import numpy as np


def raster_iou(box_a, box_b, resolution: int = 2000) -> float:
    """Brute-force IoU by rasterizing both boxes on a fine pixel grid."""
    xs = (np.arange(resolution) + 0.5) / resolution
    ys = (np.arange(resolution) + 0.5) / resolution
    gx, gy = np.meshgrid(xs, ys)

    def mask(b):
        return (gx >= b.x1) & (gx <= b.x2) & (gy >= b.y1) & (gy <= b.y2)

    a = mask(box_a)
    b = mask(box_b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def _iou_tuple(a, b) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / (area_a + area_b - inter)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


def naive_refine(
    page,
    *,
    tau: float = 0.5,
    box_weight: float = 0.6,
    w_t: float = 0.7,
    t_teacher: float = 1.0,
    t_llm: float = 1.0,
    soft_min: float = 0.6,
    soft_categories=("header", "title", "caption"),
    smoothing: float = 0.2,
    thresholds=None,
    confusable=frozenset(
        {frozenset({"caption", "footer"}), frozenset({"title", "section-header"}), frozenset({"table", "figure"})}
    ),
):
    """Straight-line re-implementation of the refinement loop.

    Returns tuples (x1, y1, x2, y2, category, confidence, provenance,
    smoothing) in emission order. Matching: for each teacher box in list
    order take the best-overlap unconsumed region; fuse iff overlap
    clears tau and the categories are equal or confusable. Unmatched
    teacher boxes survive when above their category threshold; leftover
    regions in the soft set with high scores come in smoothed.
    """
    thresholds = thresholds or {}
    out = []
    consumed = set()
    teacher = [
        (
            (t.box.x1, t.box.y1, t.box.x2, t.box.y2),
            t.category.name,
            t.confidence,
            t.coordinate_variance,
        )
        for t in page.teacher
    ]
    regions = [
        ((r.box.x1, r.box.y1, r.box.x2, r.box.y2), r.category.name, r.score, r.q_text, r.q_spatial)
        for r in page.llm
    ]
    for t_box, t_cat, t_conf, t_var in teacher:
        best_j = -1
        best_overlap = 0.0
        for j, (r_box, _, _, _, _) in enumerate(regions):
            if j in consumed:
                continue
            overlap = _iou_tuple(t_box, r_box)
            if overlap > best_overlap:
                best_overlap = overlap
                best_j = j
        ok = False
        if best_j >= 0 and best_overlap >= tau:
            r_box, r_cat, r_score, r_qt, r_qs = regions[best_j]
            ok = t_cat == r_cat or frozenset({t_cat, r_cat}) in confusable
        if ok:
            consumed.add(best_j)
            if t_var is not None:
                var_l = 1.0 / (r_qt * r_qs)
                if t_var == 0.0:
                    fused = t_box
                    lam = 1.0
                else:
                    p_t_w = 1.0 / t_var
                    p_l_w = 1.0 / var_l
                    fused = tuple(
                        (p_t_w * tc + p_l_w * rc) / (p_t_w + p_l_w) for tc, rc in zip(t_box, r_box)
                    )
                    lam = var_l / (t_var + var_l)
            else:
                fused = tuple(box_weight * tc + (1.0 - box_weight) * rc for tc, rc in zip(t_box, r_box))
                lam = w_t
            p_cal = _sigmoid(_logit(t_conf) / t_teacher)
            s_cal = _sigmoid(_logit(r_score) / t_llm)
            conf = _sigmoid(lam * _logit(p_cal) + (1.0 - lam) * _logit(s_cal))
            cat = t_cat if t_cat == r_cat else r_cat
            out.append((*fused, cat, conf, "fused", 0.0))
        elif t_conf >= thresholds.get(t_cat, 0.7):
            out.append((*t_box, t_cat, t_conf, "teacher", 0.0))
    for j, (r_box, r_cat, r_score, _, _) in enumerate(regions):
        if j in consumed:
            continue
        if r_score >= soft_min and r_cat in soft_categories:
            out.append((*r_box, r_cat, r_score, "llm-soft", smoothing))
    return out


def best_assignment_by_enumeration(teacher_boxes, llm_boxes, tau):
    """All feasible one-use matchings by exhaustive enumeration,
    keeping for each teacher (in order) the best available overlap.

    Mirrors the greedy semantics: walk teachers in order, each taking
    the argmax over regions not yet taken. Returned as a dict
    teacher_index -> llm_index for pairs clearing tau.
    """
    taken = set()
    result = {}
    for ti, t_box in enumerate(teacher_boxes):
        best, best_j = 0.0, -1
        for j, r_box in enumerate(llm_boxes):
            if j in taken:
                continue
            overlap = _iou_tuple(t_box, r_box)
            if overlap > best:
                best, best_j = overlap, j
        if best_j >= 0 and best >= tau:
            result[ti] = best_j
            taken.add(best_j)
    return result


def sign_flip_p_two_sided(differences, n_draws: int = 100_000, seed: int = 0) -> float:
    """Monte-Carlo sign-flip permutation p-value for a paired test."""
    d = np.asarray(differences, dtype=np.float64)
    rng = np.random.default_rng(seed)
    observed = abs(d.mean())
    signs = rng.choice([-1.0, 1.0], size=(n_draws, d.size))
    flipped = np.abs((signs * d).mean(axis=1))
    return float((np.count_nonzero(flipped >= observed - 1e-15) + 1) / (n_draws + 1))


def sign_flip_p_one_sided(differences, shift: float, n_draws: int = 100_000, seed: int = 0) -> float:
    """One-sided permutation p for H0: mean <= shift versus greater.

    Centers the differences at the null and counts sign-flip means at
    least as large as observed.
    """
    d = np.asarray(differences, dtype=np.float64) - shift
    rng = np.random.default_rng(seed)
    observed = d.mean()
    signs = rng.choice([-1.0, 1.0], size=(n_draws, d.size))
    flipped = (signs * d).mean(axis=1)
    return float((np.count_nonzero(flipped >= observed - 1e-15) + 1) / (n_draws + 1))
