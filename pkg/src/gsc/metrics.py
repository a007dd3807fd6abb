"""Detection metrics over labeled score sets, plus histogram/profile export.

AUROC uses the rank statistic with midrank ties, which is the one tie
treatment that agrees exactly with the pairwise definition. FPR uses the
strict comparison (score > tau passes as ID) to mirror the verdict rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedRatioError
from .head import HeadModel, evaluate
from .scoring import calibrate


@dataclass(frozen=True)
class ScoredSet:
    id_scores: np.ndarray
    ood_scores: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.id_scores, dtype=np.float64)
        oods = np.asarray(self.ood_scores, dtype=np.float64)
        if ids.size == 0 or oods.size == 0:
            raise ValueError("both score sets must be nonempty")
        object.__setattr__(self, "id_scores", ids)
        object.__setattr__(self, "ood_scores", oods)


def fpr_at_tpr(s: ScoredSet, target_tpr: float = 0.95) -> float:
    """Fraction of OOD scores that still pass the calibrated ID gate."""
    tau = calibrate(s.id_scores, target_tpr).tau
    return float(np.mean(s.ood_scores > tau))


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    sx = x[order]
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    return ranks


def auroc(s: ScoredSet) -> float:
    """P(random ID score > random OOD score), ties counted half."""
    n_id = s.id_scores.size
    n_ood = s.ood_scores.size
    ranks = _midranks(np.concatenate([s.id_scores, s.ood_scores]))
    u = float(np.sum(ranks[:n_id])) - n_id * (n_id + 1) / 2.0
    return u / (n_id * n_ood)


def topk_ratio(g, k: int) -> float:
    """Share of total |g| mass carried by the k largest-magnitude entries."""
    mags = np.abs(np.asarray(g, dtype=np.float64))
    d = mags.size
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    if not np.any(mags):
        raise UndefinedRatioError("top-k ratio undefined for an all-zero vector")
    desc = np.sort(mags)[::-1]
    csum = np.cumsum(desc)
    # same cumulative sum for numerator and denominator => ratio at k == d
    # is exactly 1 and the profile is exactly nondecreasing
    return float(csum[k - 1] / csum[-1])


@dataclass(frozen=True)
class ConcentrationProfile:
    k_values: tuple[int, ...]
    mean_ratio: tuple[float, ...]
    std_ratio: tuple[float, ...]
    n_samples: int
    excluded: int  # all-zero-gradient samples left out


def concentration_profile(head: HeadModel, samples, k_values) -> ConcentrationProfile:
    """Mean/std top-k mass ratio of each sample's predicted-class gradient."""
    ks = sorted(int(k) for k in k_values)
    if not ks:
        raise ValueError("need at least one k value")
    rows = []
    excluded = 0
    for feat in samples:
        g = evaluate(head, feat).g
        try:
            rows.append([topk_ratio(g, k) for k in ks])
        except UndefinedRatioError:
            excluded += 1
    if not rows:
        raise UndefinedRatioError("every sample had an all-zero gradient")
    arr = np.asarray(rows)
    return ConcentrationProfile(
        k_values=tuple(ks),
        mean_ratio=tuple(float(v) for v in arr.mean(axis=0)),
        std_ratio=tuple(float(v) for v in arr.std(axis=0)),
        n_samples=arr.shape[0],
        excluded=excluded,
    )


def profiles_to_csv(path, id_profile: ConcentrationProfile,
                    ood_profile: ConcentrationProfile) -> None:
    if id_profile.k_values != ood_profile.k_values:
        raise ValueError("profiles must share k values")
    excluded = id_profile.excluded + ood_profile.excluded
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "mean_id", "std_id", "mean_ood", "std_ood", "excluded"])
        for i, k in enumerate(id_profile.k_values):
            w.writerow([
                k,
                repr(id_profile.mean_ratio[i]), repr(id_profile.std_ratio[i]),
                repr(ood_profile.mean_ratio[i]), repr(ood_profile.std_ratio[i]),
                excluded,
            ])


@dataclass(frozen=True)
class HistogramTable:
    edges: np.ndarray  # (bins + 1,)
    id_counts: np.ndarray
    ood_counts: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "id_count", "ood_count"])
            for i in range(self.id_counts.size):
                w.writerow([
                    repr(float(self.edges[i])), repr(float(self.edges[i + 1])),
                    int(self.id_counts[i]), int(self.ood_counts[i]),
                ])


def export_histogram(s: ScoredSet, bins: int) -> HistogramTable:
    """Shared-edge counts per label over the union's score range."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    lo = float(min(np.min(s.id_scores), np.min(s.ood_scores)))
    hi = float(max(np.max(s.id_scores), np.max(s.ood_scores)))
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    id_counts, _ = np.histogram(s.id_scores, bins=edges)
    ood_counts, _ = np.histogram(s.ood_scores, bins=edges)
    return HistogramTable(edges=edges, id_counts=id_counts, ood_counts=ood_counts)
