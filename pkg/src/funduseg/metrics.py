"""Segmentation quality metrics: dice overlap, one-sided and bidirectional
Hausdorff distance, vertical cup-to-disc ratio, and mean/median aggregation.

Empty-set policy (masks can come out of a bad model empty):
  * dice(empty, empty) = 1.0, a vacuously perfect prediction
  * hausdorff with exactly one empty mask returns the image diagonal
    (largest distance between two pixel centers) as a worst-case sentinel
  * hausdorff with both masks empty raises EmptyBoth
"""

import csv
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyBoth, EmptyDisc, EmptyList, EmptySet, ShapeMismatch


def dice_score(pred: np.ndarray, target: np.ndarray) -> float:
    """2*TP / ((TP+FP) + (TP+FN)) over binary planes."""
    p = np.asarray(pred).astype(bool)
    t = np.asarray(target).astype(bool)
    if p.shape != t.shape:
        raise ShapeMismatch(f"shapes differ: {p.shape} vs {t.shape}")
    tp = int((p & t).sum())
    denom = int(p.sum()) + int(t.sum())  # (TP+FP) + (TP+FN)
    if denom == 0:
        return 1.0
    return 2.0 * tp / denom


def hausdorff_one_sided(x_points: np.ndarray, y_points: np.ndarray) -> float:
    """max over x of the Euclidean distance to the nearest y."""
    x = np.atleast_2d(np.asarray(x_points, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y_points, dtype=np.float64))
    if x.size == 0 or y.size == 0:
        raise EmptySet("hausdorff_one_sided needs non-empty point sets")
    dists, _ = cKDTree(y).query(x, k=1)
    return float(np.max(dists))


def image_diagonal(shape) -> float:
    """Largest distance between two pixel centers of an (H, W) plane."""
    h, w = shape
    return math.hypot(h - 1, w - 1)


def hausdorff(x_mask: np.ndarray, y_mask: np.ndarray, boundary_only: bool = False) -> float:
    """Bidirectional Hausdorff distance between the foreground point sets.

    boundary_only reduces each mask to its 8-neighborhood boundary first.
    """
    x_mask = np.asarray(x_mask)
    y_mask = np.asarray(y_mask)
    if x_mask.shape != y_mask.shape:
        raise ShapeMismatch(f"shapes differ: {x_mask.shape} vs {y_mask.shape}")
    if boundary_only:
        from .edges import extract_edges

        x_mask = extract_edges((x_mask != 0).astype(np.int64))
        y_mask = extract_edges((y_mask != 0).astype(np.int64))
    xs = np.argwhere(x_mask)
    ys = np.argwhere(y_mask)
    if xs.size == 0 and ys.size == 0:
        raise EmptyBoth("both masks are empty")
    if xs.size == 0 or ys.size == 0:
        return image_diagonal(x_mask.shape)
    return max(hausdorff_one_sided(xs, ys), hausdorff_one_sided(ys, xs))


def compute_cdr(disc: np.ndarray, cup: np.ndarray) -> float:
    """Vertical cup diameter over vertical disc diameter.

    Diameter is the foreground row span (max row - min row + 1). Empty cup
    gives 0; empty disc is an error.
    """
    disc_rows = np.flatnonzero(np.asarray(disc).astype(bool).any(axis=1))
    if disc_rows.size == 0:
        raise EmptyDisc("disc plane is empty")
    cup_rows = np.flatnonzero(np.asarray(cup).astype(bool).any(axis=1))
    if cup_rows.size == 0:
        return 0.0
    disc_span = int(disc_rows[-1]) - int(disc_rows[0]) + 1
    cup_span = int(cup_rows[-1]) - int(cup_rows[0]) + 1
    return cup_span / disc_span


@dataclass(frozen=True)
class MetricsRecord:
    image_id: str
    dice_disc: float
    hausdorff_disc: float
    dice_cup: float
    hausdorff_cup: float
    cdr: float

    def values(self):
        return (self.dice_disc, self.hausdorff_disc, self.dice_cup, self.hausdorff_cup, self.cdr)


METRIC_COLUMNS = ("dice_disc", "hausdorff_disc", "dice_cup", "hausdorff_cup", "cdr")
CSV_HEADER = ("image_id",) + METRIC_COLUMNS


def aggregate(records) -> dict:
    """Mean and median of every metric column over a non-empty record list."""
    records = list(records)
    if not records:
        raise EmptyList("no records to aggregate")
    out = {}
    for col in METRIC_COLUMNS:
        vals = np.array([getattr(r, col) for r in records], dtype=np.float64)
        out[col] = {"mean": float(vals.mean()), "median": float(np.median(vals))}
    return out


def write_records_csv(path, records, summary: bool = True) -> None:
    """Records sorted by image id, optionally with mean/median summary rows."""
    records = sorted(records, key=lambda r: r.image_id)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow((r.image_id,) + tuple(repr(v) for v in r.values()))
        if summary and records:
            agg = aggregate(records)
            for stat in ("mean", "median"):
                w.writerow((stat,) + tuple(repr(agg[c][stat]) for c in METRIC_COLUMNS))


def read_records_csv(path):
    """Round-trip reader for write_records_csv; summary rows are skipped."""
    records = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header in {path}")
    for row in rows[1:]:
        if row[0] in ("mean", "median"):
            continue
        vals = [float(v) for v in row[1:]]
        records.append(MetricsRecord(row[0], *vals))
    return records


def score_planes(
    image_id: str, pred_disc, pred_cup, true_disc, true_cup, boundary_only: bool = False
) -> MetricsRecord:
    """Per-image record comparing decoded prediction planes to ground truth."""
    try:
        hd_disc = hausdorff(pred_disc, true_disc, boundary_only=boundary_only)
    except EmptyBoth:
        hd_disc = 0.0
    try:
        hd_cup = hausdorff(pred_cup, true_cup, boundary_only=boundary_only)
    except EmptyBoth:
        hd_cup = 0.0
    try:
        cdr = compute_cdr(pred_disc, pred_cup)
    except EmptyDisc:
        cdr = 0.0
    return MetricsRecord(
        image_id=image_id,
        dice_disc=dice_score(pred_disc, true_disc),
        hausdorff_disc=hd_disc,
        dice_cup=dice_score(pred_cup, true_cup),
        hausdorff_cup=hd_cup,
        cdr=cdr,
    )


# CSV layout is a wire contract; keep it locked to the dataclass fields
assert tuple(f.name for f in fields(MetricsRecord)) == CSV_HEADER
