"""Seeded synthetic ID/OOD feature benchmark.

Default preset builds a single affine head with row-normalized class
weights. ID samples spread their logit over an M-coordinate support with
per-coordinate contributions equalized (bounded share <= 2/M of the support
mass); OOD samples concentrate their logit on the s strongest weight
coordinates of a class (>= 80% of total contribution mass), with the spike
gain tuned by bisection so raw ID and OOD energies overlap. Everything a
detector should exploit is therefore in the *structure*, not the raw score.

A second preset (``generate_tanh``) builds a 2-layer tanh head from
per-class unit blocks with sparse unit supports and a threshold bias: ID
samples light up every unit of their class mid-range, OOD samples drive a
couple of units out of the gated region. That makes OOD gradients
concentrate on few coordinates (the unsaturated units' inputs) while ID
gradients spread over the whole class support, and gives a smooth head with
real curvature for approximation-error audits.

All features and weights are quantized to the 32-bit container grid before
the construction checks run, so datasets round-trip through the container
format identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GenerationError
from .head import HeadModel, LayerSpec, forward
from .numcore import argmax
from .shortcircuit import ShortCircuitPlan, run_plan

_RETRY_BUDGET = 100


@dataclass(frozen=True)
class SynthConfig:
    d: int = 128
    K: int = 10
    M: int = 64  # ID support size per class
    s: int = 5  # OOD spike count
    spike_gain: float | None = None  # None -> tuned to match mean raw energies
    noise_sigma: float = 0.02
    n_id: int = 400
    n_ood: int = 400
    n_cal: int = 200
    seed: int = 0
    id_logit_target: float = 6.0
    # per-sample spread of the ID logit; without it the ID energy band is so
    # tight that any mask's collateral damage dominates the threshold, which
    # inverts the random-vs-reverse ordering the benchmark exists to show
    id_logit_spread: float = 0.45

    def __post_init__(self):
        if not (1 <= self.s < self.M <= self.d):
            raise ValueError("need 1 <= s < M <= d")
        if min(self.n_id, self.n_ood, self.n_cal) <= 0 or self.K <= 0:
            raise ValueError("all counts must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


@dataclass(frozen=True)
class SynthDataset:
    head: HeadModel
    id_features: np.ndarray  # (n_id, d)
    ood_features: np.ndarray  # (n_ood, d)
    cal_features: np.ndarray  # (n_cal, d), drawn from the ID construction
    id_classes: np.ndarray
    ood_classes: np.ndarray
    provenance: SynthConfig
    spike_gain_used: float


def _f32(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float32).astype(np.float64)


def _row_normalized_weights(rng: np.random.Generator, K: int, d: int) -> np.ndarray:
    w = rng.standard_normal((K, d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    # avoid exact zeros so support contributions a / W[c, i] stay finite
    w[w == 0.0] = 1e-6
    return _f32(w)


def _supports(w: np.ndarray, M: int) -> np.ndarray:
    # per class: indices of the M largest |W[c]|, strongest first
    return np.argsort(-np.abs(w), axis=1, kind="stable")[:, :M]


def _mean_energy(logits: np.ndarray) -> float:
    m = logits.max(axis=1, keepdims=True)
    return float(np.mean(m[:, 0] + np.log(np.sum(np.exp(logits - m), axis=1))))


def _tune_spike_gain(cfg: SynthConfig, w: np.ndarray, supports: np.ndarray,
                     rng: np.random.Generator) -> float:
    """Bisect the spike gain until pilot OOD mean energy matches pilot ID.

    Mean pilot energy is convex in the gain and below the ID level at gain
    zero, so the upward crossing is unique.
    """
    pilots = 256
    classes = rng.integers(0, cfg.K, size=pilots)
    targets = _id_targets(cfg, rng, pilots)
    f_id = np.zeros((pilots, cfg.d))
    for p, c in enumerate(classes):
        idx = supports[c]
        f_id[p, idx] = (targets[p] / cfg.M) / w[c, idx]
    f_id += cfg.noise_sigma * rng.standard_normal((pilots, cfg.d))
    target = _mean_energy(f_id @ w.T)

    classes = rng.integers(0, cfg.K, size=pilots)
    spikes = np.zeros((pilots, cfg.d))
    for p, c in enumerate(classes):
        idx = supports[c, :cfg.s]
        spikes[p, idx] = np.sign(w[c, idx])
    noise = cfg.noise_sigma * rng.standard_normal((pilots, cfg.d))
    base_a = spikes @ w.T
    base_b = noise @ w.T

    def gap(gain: float) -> float:
        return _mean_energy(gain * base_a + base_b) - target

    lo, hi = 0.0, 1.0
    for _ in range(40):
        if gap(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise GenerationError("spike gain tuning failed to bracket the energy match")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _id_targets(cfg: SynthConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    t = cfg.id_logit_target + cfg.id_logit_spread * rng.standard_normal(n)
    lo = cfg.id_logit_target - 3.0 * cfg.id_logit_spread
    hi = cfg.id_logit_target + 3.0 * cfg.id_logit_spread
    return np.clip(t, max(lo, 1.0), hi)


def _draw_id(cfg: SynthConfig, w: np.ndarray, supports: np.ndarray,
             rng: np.random.Generator) -> tuple[np.ndarray, int]:
    share_cap = 2.0 / cfg.M
    last_violation = "predicted-class"
    for _ in range(_RETRY_BUDGET):
        c = int(rng.integers(0, cfg.K))
        a = float(_id_targets(cfg, rng, 1)[0]) / cfg.M
        f = np.zeros(cfg.d)
        idx = supports[c]
        f[idx] = a / w[c, idx]
        f += cfg.noise_sigma * rng.standard_normal(cfg.d)
        f = _f32(f)
        y = w @ f
        if argmax(y) != c:
            last_violation = "predicted-class"
            continue
        contrib = np.abs(w[c] * f)
        support_mass = float(np.sum(contrib[idx]))
        if float(np.max(contrib)) > share_cap * support_mass:
            last_violation = "bounded-share"
            continue
        return f, c
    raise GenerationError(
        f"ID construction failed: {last_violation} invariant unattainable "
        f"within {_RETRY_BUDGET} retries"
    )


def _draw_ood(cfg: SynthConfig, w: np.ndarray, supports: np.ndarray,
              gain: float, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    last_violation = "predicted-class"
    for _ in range(_RETRY_BUDGET):
        c = int(rng.integers(0, cfg.K))
        f = np.zeros(cfg.d)
        spk = supports[c, :cfg.s]
        f[spk] = gain * np.sign(w[c, spk])
        f += cfg.noise_sigma * rng.standard_normal(cfg.d)
        f = _f32(f)
        y = w @ f
        if argmax(y) != c:
            last_violation = "predicted-class"
            continue
        contrib = np.abs(w[c] * f)
        total = float(np.sum(contrib))
        if total == 0.0 or float(np.sum(contrib[spk])) < 0.8 * total:
            last_violation = "top-s mass"
            continue
        return f, c
    raise GenerationError(
        f"OOD construction failed: {last_violation} invariant unattainable "
        f"within {_RETRY_BUDGET} retries"
    )


def generate(cfg: SynthConfig) -> SynthDataset:
    """Build the affine-head benchmark for one seed."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    w = _row_normalized_weights(rng, cfg.K, cfg.d)
    supports = _supports(w, cfg.M)
    if cfg.spike_gain is not None:
        gain = cfg.spike_gain
    else:
        gain = _tune_spike_gain(cfg, w, supports,
                                np.random.default_rng(np.random.SeedSequence([cfg.seed, 2])))

    head = HeadModel(layers=(LayerSpec(weight=w, bias=np.zeros(cfg.K)),))

    id_feats = np.empty((cfg.n_id, cfg.d))
    id_classes = np.empty(cfg.n_id, dtype=np.int64)
    for i in range(cfg.n_id):
        id_feats[i], id_classes[i] = _draw_id(cfg, w, supports, rng)
    cal_feats = np.empty((cfg.n_cal, cfg.d))
    for i in range(cfg.n_cal):
        cal_feats[i], _ = _draw_id(cfg, w, supports, rng)
    ood_feats = np.empty((cfg.n_ood, cfg.d))
    ood_classes = np.empty(cfg.n_ood, dtype=np.int64)
    for i in range(cfg.n_ood):
        ood_feats[i], ood_classes[i] = _draw_ood(cfg, w, supports, gain, rng)

    return SynthDataset(
        head=head,
        id_features=id_feats,
        ood_features=ood_feats,
        cal_features=cal_feats,
        id_classes=id_classes,
        ood_classes=ood_classes,
        provenance=cfg,
        spike_gain_used=gain,
    )


@dataclass(frozen=True)
class TheoryReport:
    """Exact logit drops under a plan, against the construction's bounds."""

    id_drop_mean: float
    id_drop_max: float
    ood_drop_mean: float
    ood_drop_max: float
    id_rel_drop_mean: float
    ood_rel_drop_mean: float
    id_bound_violations: float  # fraction with drop > (2/M) * k * total mass
    ood_mass_capture: float  # fraction with drop >= 0.8 * spike contribution
    k_used: int


def theory_check(ds: SynthDataset, plan: ShortCircuitPlan) -> TheoryReport:
    """Measure per-population drops on the affine benchmark.

    Requires plan budget k >= s so the OOD capture check is meaningful.
    """
    head = ds.head
    if len(head.layers) != 1 or head.layers[0].activation != "none":
        raise ValueError("theory_check applies to the affine preset only")
    cfg = ds.provenance
    w = head.layers[0].weight
    supports = _supports(w, cfg.M)
    k = plan.strategy.budget.resolve(cfg.d)
    if k < cfg.s:
        raise ValueError(f"plan budget k={k} must be >= spike count s={cfg.s}")

    def drops(feats: np.ndarray, spike_check: bool):
        exact, rel, bound_viol, captured = [], [], 0, 0
        for f in feats:
            y = forward(head, f)
            c = argmax(y)
            res = run_plan(plan, head, f)
            drop = float(y[c] - forward(head, res.f_prime)[c])
            exact.append(drop)
            rel.append(drop / float(y[c]))
            contrib = w[c] * f
            total_mass = float(np.sum(np.abs(contrib)))
            if drop > (2.0 / cfg.M) * k * total_mass:
                bound_viol += 1
            if spike_check:
                spike_contrib = float(np.sum(contrib[supports[c, :cfg.s]]))
                if drop >= 0.8 * spike_contrib:
                    captured += 1
        return (np.asarray(exact), np.asarray(rel), bound_viol, captured)

    id_drop, id_rel, id_viol, _ = drops(ds.id_features, spike_check=False)
    ood_drop, ood_rel, _, ood_cap = drops(ds.ood_features, spike_check=True)
    return TheoryReport(
        id_drop_mean=float(id_drop.mean()),
        id_drop_max=float(id_drop.max()),
        ood_drop_mean=float(ood_drop.mean()),
        ood_drop_max=float(ood_drop.max()),
        id_rel_drop_mean=float(id_rel.mean()),
        ood_rel_drop_mean=float(ood_rel.mean()),
        id_bound_violations=id_viol / len(ds.id_features),
        ood_mass_capture=ood_cap / len(ds.ood_features),
        k_used=k,
    )


# --- 2-layer tanh preset ---------------------------------------------------

_TANH_THETA = 3.0  # gating bias: units rest at z = -theta (tanh' ~ 0.01)
_TANH_Z_ID = 0.8  # ID units sit mid-range
_TANH_Z_OOD = 0.5  # driven OOD units stay active and unsaturated
_TANH_UNIT_FANIN = 2  # coordinates per hidden unit


def tanh_preset_config(seed: int = 0, n_id: int = 400, n_ood: int = 400,
                       n_cal: int = 200, noise_sigma: float = 0.02) -> SynthConfig:
    """Geometry for the tanh preset: disjoint 16-coordinate class blocks."""
    return SynthConfig(d=128, K=8, M=16, s=4, spike_gain=1.0,
                       noise_sigma=noise_sigma, n_id=n_id, n_ood=n_ood,
                       n_cal=n_cal, seed=seed)


def generate_tanh(cfg: SynthConfig) -> SynthDataset:
    """Build the 2-layer tanh benchmark (smooth head, concentrated OOD grads)."""
    if cfg.d % cfg.K != 0 or cfg.d // cfg.K != cfg.M:
        raise ValueError("tanh preset needs d == K * M (disjoint class blocks)")
    if cfg.M % _TANH_UNIT_FANIN != 0:
        raise ValueError(f"tanh preset needs M divisible by {_TANH_UNIT_FANIN}")
    q = _TANH_UNIT_FANIN
    units_per_class = cfg.M // q
    h = cfg.K * units_per_class

    w1 = np.zeros((h, cfg.d))
    for c in range(cfg.K):
        block = np.arange(c * cfg.M, (c + 1) * cfg.M)
        for j in range(units_per_class):
            w1[c * units_per_class + j, block[j * q:(j + 1) * q]] = 1.0
    b1 = np.full(h, -_TANH_THETA)
    w2 = np.zeros((cfg.K, h))
    for c in range(cfg.K):
        w2[c, c * units_per_class:(c + 1) * units_per_class] = 1.0
    head = HeadModel(layers=(
        LayerSpec(weight=_f32(w1), bias=_f32(b1), activation="tanh"),
        LayerSpec(weight=_f32(w2), bias=np.zeros(cfg.K)),
    ))

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
    id_value = (_TANH_THETA + _TANH_Z_ID) / q

    def draw_id() -> tuple[np.ndarray, int]:
        for _ in range(_RETRY_BUDGET):
            c = int(rng.integers(0, cfg.K))
            f = np.zeros(cfg.d)
            f[c * cfg.M:(c + 1) * cfg.M] = id_value
            f += cfg.noise_sigma * rng.standard_normal(cfg.d)
            f = _f32(f)
            if argmax(forward(head, f)) == c:
                return f, c
        raise GenerationError("tanh preset: ID predicted-class invariant unattainable")

    def draw_ood() -> tuple[np.ndarray, int]:
        full_units, part = divmod(cfg.s, q)
        for _ in range(_RETRY_BUDGET):
            c = int(rng.integers(0, cfg.K))
            f = np.zeros(cfg.d)
            block0 = c * cfg.M
            for j in range(full_units):
                f[block0 + j * q: block0 + (j + 1) * q] = (_TANH_THETA + _TANH_Z_OOD) / q
            if part:
                # partial unit: one coordinate carries the whole drive
                f[block0 + full_units * q] = _TANH_THETA + _TANH_Z_OOD
            f += cfg.noise_sigma * rng.standard_normal(cfg.d)
            f = _f32(f)
            if argmax(forward(head, f)) == c:
                return f, c
        raise GenerationError("tanh preset: OOD predicted-class invariant unattainable")

    id_feats = np.empty((cfg.n_id, cfg.d))
    id_classes = np.empty(cfg.n_id, dtype=np.int64)
    for i in range(cfg.n_id):
        id_feats[i], id_classes[i] = draw_id()
    cal_feats = np.empty((cfg.n_cal, cfg.d))
    for i in range(cfg.n_cal):
        cal_feats[i], _ = draw_id()
    ood_feats = np.empty((cfg.n_ood, cfg.d))
    ood_classes = np.empty(cfg.n_ood, dtype=np.int64)
    for i in range(cfg.n_ood):
        ood_feats[i], ood_classes[i] = draw_ood()

    return SynthDataset(
        head=head,
        id_features=id_feats,
        ood_features=ood_feats,
        cal_features=cal_feats,
        id_classes=id_classes,
        ood_classes=ood_classes,
        provenance=cfg,
        spike_gain_used=float(cfg.spike_gain if cfg.spike_gain is not None else 1.0),
    )
