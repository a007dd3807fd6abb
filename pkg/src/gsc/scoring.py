"""Scores, verdicts, threshold calibration, and the Fisher diagonal.

Both scores are oriented higher-is-ID. The verdict boundary s == tau is
assigned to OOD (conservative). Thresholds come from an empirical order
statistic with no interpolation so calibration is exactly reproducible.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDistributionWarning,
    InsufficientCalibrationError,
)
from .head import HeadModel, evaluate
from .numcore import logsumexp, softmax

SCORE_KINDS = ("energy", "msp")

ID = "ID"
OOD = "OOD"


def score(kind: str, y) -> float:
    """energy -> logsumexp(y); msp -> max softmax probability."""
    if kind == "energy":
        return logsumexp(y)
    if kind == "msp":
        return float(np.max(softmax(y)))
    raise ValueError(f"unknown score kind {kind!r}")


@dataclass(frozen=True)
class Threshold:
    tau: float
    target_tpr: float
    calibration_size: int
    tie_count: int
    degenerate: bool

    def to_json(self) -> str:
        return json.dumps({
            "tau": self.tau,
            "target_tpr": self.target_tpr,
            "n": self.calibration_size,
            "tie_count": self.tie_count,
            "degenerate": self.degenerate,
        }, sort_keys=True)


def decide(s: float, t: Threshold) -> str:
    """ID iff the score strictly exceeds tau."""
    return ID if s > t.tau else OOD


def calibrate(id_scores, target_tpr: float = 0.95) -> Threshold:
    """Threshold so that ~target_tpr of the calibration scores pass.

    tau is the m-th smallest score (0-indexed), m = floor((1-target_tpr)*N);
    under the strict verdict rule ties at tau lower the achieved TPR, so the
    count of scores equal to tau is reported. The floor gets a +1e-9 nudge
    to absorb binary representation error of (1-t)*N at exact integers.
    """
    scores = np.asarray(list(id_scores), dtype=np.float64)
    if scores.size < 20:
        raise InsufficientCalibrationError(
            f"need at least 20 calibration scores, got {scores.size}"
        )
    if not 0.0 < target_tpr < 1.0:
        raise ValueError(f"target_tpr must be in (0, 1), got {target_tpr}")
    n = scores.size
    m = int(math.floor((1.0 - target_tpr) * n + 1e-9))
    m = min(m, n - 1)
    s = np.sort(scores, kind="stable")
    tau = float(s[m])
    tie_count = int(np.sum(s == tau))
    degenerate = bool(s[0] == s[-1])
    if degenerate:
        warnings.warn(
            "all calibration scores identical: strict thresholding yields TPR 0",
            DegenerateDistributionWarning,
        )
    return Threshold(
        tau=tau,
        target_tpr=target_tpr,
        calibration_size=n,
        tie_count=tie_count,
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class FisherDiagonal:
    """Mean squared predicted-class gradient per coordinate, floored."""

    lam: np.ndarray  # (d,), all entries >= epsilon_floor
    sample_count: int
    epsilon_floor: float


def estimate_fisher_diag(head: HeadModel, calibration, epsilon_floor: float = 1e-12) -> FisherDiagonal:
    """lambda_i = mean over samples of g_i^2, g at each sample's own
    predicted class, then floored at epsilon_floor."""
    feats = list(calibration)
    if not feats:
        raise ValueError("fisher estimation needs a nonempty calibration set")
    if epsilon_floor <= 0.0:
        raise ValueError("epsilon_floor must be positive")
    acc = np.zeros(head.input_dim)
    for f in feats:
        g = evaluate(head, f).g
        acc += g * g
    lam = np.maximum(acc / len(feats), epsilon_floor)
    return FisherDiagonal(lam=lam, sample_count=len(feats), epsilon_floor=epsilon_floor)
