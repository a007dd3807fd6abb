"""Coordinate selection and feature modification.

``select`` ranks coordinates by a sensitivity key and returns a fixed-size
mask; ``apply`` produces the modified feature and its delta; ``run_plan``
chains the two, optionally over several rounds that recompute the gradient
at the current feature.

Determinism is load-bearing: ties always break to the lowest index, the
random strategy draws from a generator built per call from its seed, and
identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGradientWarning, DimensionError
from .head import HeadModel, forward, grad_logit
from .numcore import argmax

SELECTION_KINDS = ("top_grad", "top_grad_times_feature", "fisher_weighted", "random", "reverse")
RULE_KINDS = ("zero", "scale", "sign_perturb", "orth_project", "clip")


@dataclass(frozen=True)
class MaskBudget:
    """Either a fraction of coordinates or an explicit count, never both."""

    ratio: float | None = None
    explicit_k: int | None = None

    def __post_init__(self):
        if (self.ratio is None) == (self.explicit_k is None):
            raise ValueError("exactly one of ratio / explicit_k must be set")
        if self.ratio is not None and not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio}")
        if self.explicit_k is not None and self.explicit_k < 0:
            raise ValueError(f"explicit_k must be nonnegative, got {self.explicit_k}")

    def resolve(self, d: int) -> int:
        """Coordinate count for dimension d.

        round-half-up on ratio*d, clamped to [1, d] whenever ratio > 0;
        k == 0 only for ratio == 0 (or explicit_k == 0).
        """
        if self.explicit_k is not None:
            return min(self.explicit_k, d)
        if self.ratio == 0.0:
            return 0
        k = int(np.floor(self.ratio * d + 0.5))
        return max(1, min(k, d))


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str
    budget: MaskBudget
    seed: int | None = None  # random only
    fisher_diag: np.ndarray | None = None  # fisher_weighted only

    def __post_init__(self):
        if self.kind not in SELECTION_KINDS:
            raise ValueError(f"unknown selection kind {self.kind!r}")
        if self.kind == "random" and self.seed is None:
            raise ValueError("random selection requires a seed")
        if self.kind == "fisher_weighted":
            if self.fisher_diag is None:
                raise ValueError("fisher_weighted selection requires fisher_diag")
            lam = np.asarray(self.fisher_diag, dtype=np.float64)
            if np.any(lam <= 0.0):
                raise ValueError("fisher_diag entries must all be positive")
            object.__setattr__(self, "fisher_diag", lam)


@dataclass(frozen=True)
class ModificationRule:
    """How selected coordinates are altered.

    ``sign_perturb`` with alpha=None uses 0.1 * max|F| of the feature being
    modified, keeping the step size tied to feature magnitude.
    """

    kind: str
    beta: float | None = None  # scale only
    alpha: float | None = None  # sign_perturb only; None -> 0.1 * ||F||_inf
    clip_bound: float | None = None  # clip only

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown modification kind {self.kind!r}")
        if self.kind == "scale":
            if self.beta is None or not 0.0 <= self.beta < 1.0:
                raise ValueError("scale requires beta in [0, 1)")
        elif self.beta is not None:
            raise ValueError("beta only valid for scale")
        if self.kind == "sign_perturb":
            if self.alpha is not None and self.alpha <= 0.0:
                raise ValueError("sign_perturb alpha must be positive")
        elif self.alpha is not None:
            raise ValueError("alpha only valid for sign_perturb")
        if self.kind == "clip":
            if self.clip_bound is None or self.clip_bound <= 0.0:
                raise ValueError("clip requires a positive clip_bound")
        elif self.clip_bound is not None:
            raise ValueError("clip_bound only valid for clip")


@dataclass(frozen=True)
class MaskSet:
    """Sorted distinct coordinate indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValueError("mask indices must be nonnegative")
        if len(set(idx)) != len(idx):
            raise ValueError("mask indices must be distinct")
        if list(idx) != sorted(idx):
            idx = tuple(sorted(idx))
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)


@dataclass(frozen=True)
class ShortCircuitPlan:
    strategy: SelectionStrategy
    rule: ModificationRule
    rounds: int = 1

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


def _ranked(scores: np.ndarray, k: int, largest: bool) -> tuple[int, ...]:
    # stable argsort => ties break to the lowest original index
    key = -scores if largest else scores
    order = np.argsort(key, kind="stable")
    return tuple(sorted(int(i) for i in order[:k]))


def select(strategy: SelectionStrategy, feat, grad, *, eligible=None) -> MaskSet:
    """Pick the budgeted coordinates for one round.

    ``eligible`` (optional boolean array) restricts the candidate pool;
    multi-round plans use it to exclude already-modified coordinates.
    """
    f = np.asarray(feat, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if f.shape != g.shape or f.ndim != 1:
        raise DimensionError(f"feature/gradient shape mismatch: {f.shape} vs {g.shape}")
    d = f.shape[0]
    if eligible is None:
        eligible = np.ones(d, dtype=bool)
    pool = int(np.sum(eligible))
    k = min(strategy.budget.resolve(d), pool)
    if k == 0:
        return MaskSet(())

    if strategy.kind == "random":
        rng = np.random.default_rng(strategy.seed)
        candidates = np.flatnonzero(eligible)
        picked = rng.choice(candidates, size=k, replace=False)
        return MaskSet(tuple(int(i) for i in picked))

    if strategy.kind == "top_grad":
        scores = np.abs(g)
        largest = True
    elif strategy.kind == "top_grad_times_feature":
        scores = np.abs(g * f)
        largest = True
    elif strategy.kind == "fisher_weighted":
        lam = strategy.fisher_diag
        if lam.shape[0] != d:
            raise DimensionError(f"fisher_diag length {lam.shape[0]} != d {d}")
        scores = np.abs(g) / np.sqrt(lam)
        largest = True
    else:  # reverse
        scores = np.abs(g)
        largest = False

    if not np.any(g):
        warnings.warn(
            "zero gradient vector: falling back to lowest-index selection",
            DegenerateGradientWarning,
        )
    scores = scores.copy()
    scores[~eligible] = -np.inf if largest else np.inf
    return MaskSet(_ranked(scores, k, largest))


@dataclass(frozen=True)
class ApplyResult:
    f_prime: np.ndarray
    delta: np.ndarray


def apply(rule: ModificationRule, feat, grad, mask: MaskSet) -> ApplyResult:
    """Modified feature and exact delta.

    Coordinates outside the mask are bit-identical to the input, except for
    orth_project which is a global projection and ignores the mask.
    """
    f = np.asarray(feat, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if f.shape != g.shape or f.ndim != 1:
        raise DimensionError(f"feature/gradient shape mismatch: {f.shape} vs {g.shape}")
    if len(mask) and max(mask.indices) >= f.shape[0]:
        raise DimensionError("mask index out of range")

    if rule.kind == "orth_project":
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            warnings.warn(
                "orth_project with zero gradient: feature left unchanged",
                DegenerateGradientWarning,
            )
            fp = f.copy()
        else:
            ghat = g / norm
            fp = f - float(f @ ghat) * ghat
        return ApplyResult(f_prime=fp, delta=fp - f)

    idx = mask.as_array()
    fp = f.copy()
    if rule.kind == "zero":
        fp[idx] = 0.0
    elif rule.kind == "scale":
        fp[idx] = rule.beta * f[idx]
    elif rule.kind == "sign_perturb":
        alpha = rule.alpha if rule.alpha is not None else 0.1 * float(np.max(np.abs(f)))
        fp[idx] = f[idx] - alpha * np.sign(g[idx])
    else:  # clip
        fp[idx] = np.clip(f[idx], -rule.clip_bound, rule.clip_bound)
    return ApplyResult(f_prime=fp, delta=fp - f)


def logit_drop_estimate(grad, feat, mask: MaskSet, rule: ModificationRule) -> float:
    """First-order prediction of how far the chosen logit falls."""
    f = np.asarray(feat, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if f.shape != g.shape:
        raise DimensionError(f"feature/gradient shape mismatch: {f.shape} vs {g.shape}")

    if rule.kind == "orth_project":
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            return 0.0
        ghat = g / norm
        return float(f @ ghat) * norm

    idx = mask.as_array()
    if rule.kind == "zero":
        return float(np.sum(g[idx] * f[idx]))
    if rule.kind == "scale":
        return (1.0 - rule.beta) * float(np.sum(g[idx] * f[idx]))
    if rule.kind == "sign_perturb":
        alpha = rule.alpha if rule.alpha is not None else 0.1 * float(np.max(np.abs(f)))
        return alpha * float(np.sum(np.abs(g[idx])))
    # clip
    clamped = np.clip(f[idx], -rule.clip_bound, rule.clip_bound)
    return float(np.sum(g[idx] * (f[idx] - clamped)))


@dataclass(frozen=True)
class RoundRecord:
    mask: MaskSet
    g: np.ndarray
    c: int


@dataclass(frozen=True)
class PlanResult:
    f_prime: np.ndarray
    delta_total: np.ndarray
    per_round: tuple[RoundRecord, ...]
    union_mask: MaskSet
    y0: np.ndarray  # logits at the original feature
    c0: int
    g0: np.ndarray  # gradient at the original feature

    @property
    def initial(self) -> RoundRecord:
        return self.per_round[0]


def _split_budget(k: int, rounds: int) -> list[int]:
    base, rem = divmod(k, rounds)
    return [base + (1 if r < rem else 0) for r in range(rounds)]


def _round_strategy(strategy: SelectionStrategy, k: int, round_idx: int) -> SelectionStrategy:
    seed = strategy.seed
    if strategy.kind == "random" and round_idx > 0:
        # independent per-round stream, reproducible from the plan seed
        seed = int(np.random.SeedSequence(strategy.seed).generate_state(round_idx + 1)[-1])
    return SelectionStrategy(
        kind=strategy.kind,
        budget=MaskBudget(explicit_k=k),
        seed=seed,
        fisher_diag=strategy.fisher_diag,
    )


def run_plan(plan: ShortCircuitPlan, head: HeadModel, feat) -> PlanResult:
    """Execute selection + modification, re-deriving the gradient each round.

    The total budget is split as evenly as possible (earlier rounds take the
    remainder) and later rounds only consider coordinates not yet selected,
    so the union mask never exceeds the budget.
    """
    f0 = np.asarray(feat, dtype=np.float64)
    d = f0.shape[0]
    k_total = plan.strategy.budget.resolve(d)
    per_round_k = _split_budget(k_total, plan.rounds)

    current = f0
    used = np.zeros(d, dtype=bool)
    records: list[RoundRecord] = []
    y0 = c0 = g0 = None
    for r, k_r in enumerate(per_round_k):
        y = forward(head, current)
        c = argmax(y)
        g = grad_logit(head, current, c)
        if r == 0:
            y0, c0, g0 = y, c, g
        if plan.rule.kind == "orth_project":
            # global projection: carries no mask, ignores the budget
            current = apply(plan.rule, current, g, MaskSet(())).f_prime
            records.append(RoundRecord(mask=MaskSet(()), g=g, c=c))
            continue
        if k_r == 0:
            records.append(RoundRecord(mask=MaskSet(()), g=g, c=c))
            continue
        strat_r = _round_strategy(plan.strategy, k_r, r)
        mask = select(strat_r, current, g, eligible=~used)
        used[mask.as_array()] = True
        current = apply(plan.rule, current, g, mask).f_prime
        records.append(RoundRecord(mask=mask, g=g, c=c))

    union = MaskSet(tuple(int(i) for i in np.flatnonzero(used)))
    return PlanResult(
        f_prime=current,
        delta_total=current - f0,
        per_round=tuple(records),
        union_mask=union,
        y0=y0,
        c0=c0,
        g0=g0,
    )


def default_plan(ratio: float = 0.05, rule_kind: str = "zero", rounds: int = 1,
                 strategy_kind: str = "top_grad", seed: int | None = None,
                 fisher_diag=None, **rule_params) -> ShortCircuitPlan:
    """Convenience constructor; the stock configuration zeroes the top 5%."""
    return ShortCircuitPlan(
        strategy=SelectionStrategy(
            kind=strategy_kind,
            budget=MaskBudget(ratio=ratio),
            seed=seed,
            fisher_diag=fisher_diag,
        ),
        rule=ModificationRule(kind=rule_kind, **rule_params),
        rounds=rounds,
    )
