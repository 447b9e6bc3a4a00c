"""Segmentation error metrics and the composite per-example error term.

Images are float64 arrays in [0,1] (row-major, shape H x W), masks are
boolean arrays of the same shape, probability maps are float64 in [0,1].
All functions here are pure and safe to call from any number of workers.

The composite error term of one example combines four measurements:

    E = L + FP + FN + (1 - JI)          ("full" variant)
    E = L + (1 - JI)                    ("loss_ji" variant)

with L the mean pixel cross-entropy, FP/FN the lesion-level false
positive / false negative counts under IoU matching, and JI the
pixel-level Jaccard index.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

CLAMP_EPS = 1e-7

VARIANTS = ("full", "loss_ji")


@dataclass(frozen=True)
class LesionMatchResult:
    """Outcome of matching predicted components against ground truth.

    Component ids are indices into the input component lists. Each id
    appears at most once across matches and the FP/FN lists.
    """

    matches: list  # (pred_id, gt_id, iou) triples, in acceptance order
    false_positives: list  # unmatched pred ids, ascending
    false_negatives: list  # unmatched gt ids, ascending


@dataclass(frozen=True)
class MetricsBreakdown:
    """Per-example evaluation: loss, lesion counts, Jaccard, composite E."""

    L: float
    fp: int
    fn: int
    ji: float
    E: float


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def mean_cross_entropy(p, y):
    """Mean over pixels of -[y ln p + (1-y) ln(1-p)], p clamped to [1e-7, 1-1e-7]."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.bool_)
    _check_same_shape(p, y)
    return kernels.cross_entropy_sum(p, y, CLAMP_EPS) / p.size


def jaccard_index(a, b):
    """|a n b| / |a u b| over boolean masks; 1.0 when both masks are empty."""
    a = np.asarray(a, dtype=np.bool_)
    b = np.asarray(b, dtype=np.bool_)
    _check_same_shape(a, b)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    inter = np.logical_and(a, b).sum()
    return float(inter) / float(union)


def binarize(p, threshold=0.5):
    """Boolean mask with pixels on where p >= threshold (inclusive)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    return np.asarray(p, dtype=np.float64) >= threshold


def connected_components(mask):
    """8-connected components of a boolean mask as a list of pixel sets.

    Each component is a frozenset of (row, col) tuples. Components are
    ordered by (min row, min col), ties broken by first on-pixel in
    row-major order.
    """
    mask = np.asarray(mask, dtype=np.bool_)
    labels, n = kernels.label_components(mask)
    if n == 0:
        return []
    comps = []
    for k in range(1, n + 1):
        rows, cols = np.nonzero(labels == k)
        first = rows[0] * mask.shape[1] + cols[0]
        comps.append((int(rows.min()), int(cols.min()), int(first),
                      frozenset(zip(rows.tolist(), cols.tolist()))))
    comps.sort(key=lambda t: t[:3])
    return [c[3] for c in comps]


def component_iou(a, b):
    """IoU between two pixel sets."""
    if not a and not b:
        return 1.0
    inter = len(a & b)
    if inter == 0:
        return 0.0
    return inter / len(a | b)


def match_lesions(pred, gt, tau=0.5):
    """Greedily match predicted components to ground-truth components.

    All (pred, gt) pairs are scored by IoU and accepted in descending
    order (ties broken by pred id then gt id, ascending), each component
    used at most once, accepting only pairs with IoU >= tau. Unmatched
    predicted components are false positives, unmatched ground-truth
    components false negatives.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0,1], got {tau}")
    pairs = []
    for pi, pc in enumerate(pred):
        for gi, gc in enumerate(gt):
            iou = component_iou(pc, gc)
            if iou >= tau:
                pairs.append((-iou, pi, gi))
    pairs.sort()
    used_pred = set()
    used_gt = set()
    matches = []
    for neg_iou, pi, gi in pairs:
        if pi in used_pred or gi in used_gt:
            continue
        used_pred.add(pi)
        used_gt.add(gi)
        matches.append((pi, gi, -neg_iou))
    fps = [pi for pi in range(len(pred)) if pi not in used_pred]
    fns = [gi for gi in range(len(gt)) if gi not in used_gt]
    return LesionMatchResult(matches=matches, false_positives=fps,
                             false_negatives=fns)


def error_term(L, fp, fn, ji, variant="full", weights=(1.0, 1.0, 1.0)):
    """Composite example error.

    full:    L + w0*fp + w1*fn + w2*(1 - ji)
    loss_ji: L + w2*(1 - ji)

    ``weights`` defaults to (1, 1, 1), i.e. raw counts enter unscaled.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if L < 0 or fp < 0 or fn < 0 or not 0.0 <= ji <= 1.0:
        raise ValueError(
            f"invalid metric values: L={L}, fp={fp}, fn={fn}, ji={ji}"
        )
    w_fp, w_fn, w_ji = weights
    if variant == "full":
        return L + w_fp * fp + w_fn * fn + w_ji * (1.0 - ji)
    return L + w_ji * (1.0 - ji)


def evaluate_example(prob, gt_mask, tau=0.5, variant="full", threshold=0.5,
                     weights=(1.0, 1.0, 1.0)):
    """Full per-example breakdown of a probability map against its mask."""
    prob = np.asarray(prob, dtype=np.float64)
    gt_mask = np.asarray(gt_mask, dtype=np.bool_)
    _check_same_shape(prob, gt_mask)
    L = mean_cross_entropy(prob, gt_mask)
    pred_mask = binarize(prob, threshold)
    result = match_lesions(connected_components(pred_mask),
                           connected_components(gt_mask), tau)
    fp = len(result.false_positives)
    fn = len(result.false_negatives)
    ji = jaccard_index(pred_mask, gt_mask)
    return MetricsBreakdown(
        L=L, fp=fp, fn=fn, ji=ji,
        E=error_term(L, fp, fn, ji, variant, weights),
    )


def evaluate_detection(pred_masks, gt_masks, tau=0.5):
    """Lesion-level precision, recall and F1 aggregated over mask pairs.

    Matches are counted per image via ``match_lesions`` and pooled.
    0/0 ratios are defined as 0.
    """
    if len(pred_masks) != len(gt_masks):
        raise ValueError(
            f"list length mismatch: {len(pred_masks)} vs {len(gt_masks)}"
        )
    tp = fp = fn = 0
    for pm, gm in zip(pred_masks, gt_masks):
        result = match_lesions(connected_components(pm),
                               connected_components(gm), tau)
        tp += len(result.matches)
        fp += len(result.false_positives)
        fn += len(result.false_negatives)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return precision, recall, f1
