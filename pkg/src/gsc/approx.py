"""Post-modification logits: first-order estimate, exact recompute, gap audit.

The first-order path folds a feature delta into the already-computed logits
with one forward-mode sweep instead of re-running the head on the modified
feature. For affine heads the two paths agree exactly; for smooth heads the
gap is capped by half the local curvature times the squared delta norm, and
the audit checks that cap sample by sample. ReLU heads violate smoothness,
so their bound column is reported as unavailable rather than faked.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .head import (
    HeadModel,
    flops_forward,
    flops_jvp,
    forward,
    jacobian,
    jvp,
)
from .scoring import score


def approx_logits(head: HeadModel, feat, y, delta) -> np.ndarray:
    """y + J(feat) @ delta, the one-sweep estimate of the modified logits."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != head.output_dim:
        raise DimensionError(f"logit length {y.shape} != head output {head.output_dim}")
    return y + jvp(head, feat, delta)


def exact_logits(head: HeadModel, f_prime) -> np.ndarray:
    """The expensive second forward on the modified feature."""
    return forward(head, f_prime)


@dataclass(frozen=True)
class SmoothnessEstimate:
    """Sampled Jacobian-variation bound around a feature point."""

    L_hat: float
    probe_count: int
    direction_policy: str
    usable: bool  # False for relu heads (nonsmooth; no valid bound)


def smoothness_over_points(head: HeadModel, points) -> float:
    """max over point pairs of ||J(u) - J(v)||_F / ||u - v||_2.

    Monotone under adding points: the max over a superset of pairs can only
    grow. Pairs at zero distance are skipped.
    """
    pts = [np.asarray(p, dtype=np.float64) for p in points]
    jacs = [jacobian(head, p) for p in pts]
    best = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            dist = float(np.linalg.norm(pts[i] - pts[j]))
            if dist == 0.0:
                continue
            num = float(np.linalg.norm(jacs[i] - jacs[j]))
            best = max(best, num / dist)
    return best


_SEGMENT_PROBES = 8


def estimate_smoothness(head: HeadModel, feat, radius: float, probes: int,
                        seed: int, segment=None) -> SmoothnessEstimate:
    """Probe the ball around ``feat`` for the largest Jacobian variation.

    Probes are drawn uniformly in the ball (seeded); the center itself is
    always included. When ``segment`` (a delta direction) is given, evenly
    spaced points along it are probed too: in high dimension a sparse
    modification direction is invisible to uniform sampling, and the bound
    consumer needs the variation along the path actually taken. For relu
    heads the estimate is flagged unusable.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if probes < 1:
        raise ValueError("probes must be >= 1")
    f = np.asarray(feat, dtype=np.float64)
    if head.has_relu:
        return SmoothnessEstimate(
            L_hat=0.0, probe_count=0,
            direction_policy="unavailable: relu head is not smooth",
            usable=False,
        )
    rng = np.random.default_rng(seed)
    d = f.shape[0]
    dirs = rng.standard_normal((probes, d))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = radius * rng.uniform(0.0, 1.0, size=(probes, 1)) ** (1.0 / d)
    pts = [f] + list(f + dirs / norms * radii)
    policy = f"uniform in ball radius {radius}, center included"
    count = probes
    if segment is not None:
        seg = np.asarray(segment, dtype=np.float64)
        seg_norm = float(np.linalg.norm(seg))
        if seg_norm > 0.0:
            reach = min(1.0, radius / seg_norm)
            for t in np.linspace(0.0, reach, _SEGMENT_PROBES + 1)[1:]:
                pts.append(f + t * seg)
            policy += f", plus {_SEGMENT_PROBES} points along the delta segment"
            count += _SEGMENT_PROBES
    return SmoothnessEstimate(
        L_hat=smoothness_over_points(head, pts),
        probe_count=count,
        direction_policy=policy,
        usable=True,
    )


@dataclass(frozen=True)
class ApproxResult:
    y_approx: np.ndarray
    y_exact: np.ndarray | None
    delta_norm2: float
    remainder_bound: float | None  # 0.5 * L_hat * ||delta||^2, None for relu
    flops_approx: int
    flops_exact: int | None


def compare(head: HeadModel, feat, delta, y=None, *, smoothness: SmoothnessEstimate | None = None) -> ApproxResult:
    """Run both logit paths for one delta and package the outcome."""
    if y is None:
        y = forward(head, feat)
    f = np.asarray(feat, dtype=np.float64)
    dlt = np.asarray(delta, dtype=np.float64)
    y_approx = approx_logits(head, f, y, dlt)
    y_exact = exact_logits(head, f + dlt)
    dn = float(np.linalg.norm(dlt))
    bound = None
    if smoothness is not None and smoothness.usable:
        bound = 0.5 * smoothness.L_hat * dn * dn
    return ApproxResult(
        y_approx=y_approx,
        y_exact=y_exact,
        delta_norm2=dn,
        remainder_bound=bound,
        flops_approx=flops_jvp(head) + head.output_dim,
        flops_exact=flops_forward(head),
    )


@dataclass(frozen=True)
class AuditRow:
    sample_id: str
    label: str  # ID | OOD
    score_kind: str
    gap_abs: float
    remainder_bound: float | None
    flops_approx: int
    flops_exact: int


@dataclass(frozen=True)
class AuditTable:
    rows: tuple[AuditRow, ...]

    def summary(self) -> dict:
        """mean/std/max of the score gaps, split by label and score kind."""
        out: dict = {}
        for kind in sorted({r.score_kind for r in self.rows}):
            out[kind] = {}
            for label in sorted({r.label for r in self.rows}):
                gaps = np.array([
                    r.gap_abs for r in self.rows
                    if r.score_kind == kind and r.label == label
                ])
                if gaps.size == 0:
                    continue
                out[kind][label] = {
                    "mean": float(np.mean(gaps)),
                    "std": float(np.std(gaps)),
                    "max": float(np.max(gaps)),
                    "n": int(gaps.size),
                }
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "label", "score_kind", "gap_abs",
                        "remainder_bound", "flops_approx", "flops_exact"])
            for r in self.rows:
                w.writerow([
                    r.sample_id, r.label, r.score_kind, repr(r.gap_abs),
                    "" if r.remainder_bound is None else repr(r.remainder_bound),
                    r.flops_approx, r.flops_exact,
                ])


def audit_gap(head: HeadModel, samples, labels, score_kinds=("energy", "msp"),
              *, probes: int = 24, radius_margin: float = 1.25,
              seed: int = 0) -> AuditTable:
    """Exact-vs-approx score gaps for (feature, plan) pairs.

    The smoothness probe radius covers the modified feature
    (radius = radius_margin * ||delta||), so the per-sample bound is valid
    whenever the head is smooth. Samples are processed and reported in
    input order, so aggregates are reproducible.
    """
    from .shortcircuit import run_plan

    samples = list(samples)
    labels = list(labels)
    if not samples:
        raise ValueError("audit needs at least one sample")
    if len(labels) != len(samples):
        raise DimensionError("labels must parallel samples")

    rows: list[AuditRow] = []
    for idx, ((feat, plan), label) in enumerate(zip(samples, labels)):
        res = run_plan(plan, head, feat)
        dn = float(np.linalg.norm(res.delta_total))
        smooth = None
        if not head.has_relu and dn > 0.0:
            smooth = estimate_smoothness(
                head, feat, radius=max(radius_margin * dn, 1e-9),
                probes=probes,
                seed=int(np.random.SeedSequence([seed, idx]).generate_state(1)[0]),
                segment=res.delta_total,
            )
        cmpres = compare(head, feat, res.delta_total, y=res.y0, smoothness=smooth)
        for kind in score_kinds:
            gap = abs(score(kind, cmpres.y_exact) - score(kind, cmpres.y_approx))
            rows.append(AuditRow(
                sample_id=str(idx),
                label=label,
                score_kind=kind,
                gap_abs=gap,
                remainder_bound=cmpres.remainder_bound,
                flops_approx=cmpres.flops_approx,
                flops_exact=cmpres.flops_exact,
            ))
    return AuditTable(rows=tuple(rows))
