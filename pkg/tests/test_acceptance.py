"""Acceptance suite: one test per primary criterion, stated tolerances pinned.

Each test prints a PASS line; run with `pytest tests/test_acceptance.py -v -s`
to see them.
"""

import time

import numpy as np
import pytest

from conftest import affine_head, central_difference_gradient, relu_head, tanh_head

from gsc import (
    HeadModel,
    LayerSpec,
    RunConfig,
    ScoredSet,
    SynthConfig,
    approx_logits,
    auroc,
    compare,
    dataset_from_synth,
    default_plan,
    estimate_smoothness,
    exact_logits,
    flop_report,
    forward,
    fpr_at_tpr,
    generate,
    generate_tanh,
    grad_logit,
    jacobian,
    run_pipeline,
    run_plan,
    tanh_preset_config,
    theory_check,
    topk_ratio,
)
from gsc.cli import EXIT_OK, cli
from gsc.numcore import argmax, logsumexp
from gsc.shortcircuit import MaskBudget, ModificationRule, SelectionStrategy, ShortCircuitPlan


def _random_plan(rng):
    kind = rng.choice(["top_grad", "top_grad_times_feature", "reverse", "random"])
    rule = rng.choice(["zero", "scale", "sign_perturb", "clip", "orth_project"])
    params = {}
    if rule == "scale":
        params["beta"] = float(rng.uniform(0.0, 0.99))
    if rule == "sign_perturb":
        params["alpha"] = float(rng.uniform(0.01, 0.5))
    if rule == "clip":
        params["clip_bound"] = float(rng.uniform(0.1, 2.0))
    return ShortCircuitPlan(
        strategy=SelectionStrategy(
            kind=str(kind),
            budget=MaskBudget(ratio=float(rng.uniform(0.01, 0.5))),
            seed=int(rng.integers(0, 2**31)) if kind == "random" else None,
        ),
        rule=ModificationRule(kind=str(rule), **params),
        rounds=int(rng.integers(1, 4)),
    )


def test_affine_exactness():
    """1,000 random (affine head, F, plan) triples: approx == exact to 1e-12."""
    rng = np.random.default_rng(101)
    t0 = time.time()
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(4, 24))
        k = int(rng.integers(2, 8))
        head = affine_head(rng, d, k)
        f = rng.standard_normal(d)
        res = run_plan(_random_plan(rng), head, f)
        approx = approx_logits(head, f, res.y0, res.delta_total)
        exact = exact_logits(head, res.f_prime)
        worst = max(worst, float(np.max(np.abs(approx - exact))))
        assert np.all(np.abs(approx - exact) <= 1e-12)
    elapsed = time.time() - t0
    assert elapsed < 5.0
    print(f"\nPASS: affine exactness (worst gap {worst:.2e}, {elapsed:.2f}s)")


def _relu_head_off_boundary(rng, d, h, k, feat, margin=1e-3):
    """Resample until every pre-activation clears the kink by `margin`."""
    while True:
        head = relu_head(rng, d, h, k)
        x = feat
        ok = True
        for layer in head.layers:
            z = layer.weight @ x + layer.bias
            if layer.activation == "relu":
                if np.min(np.abs(z)) < margin:
                    ok = False
                    break
                x = np.maximum(z, 0)
            else:
                x = z
        if ok:
            return head


def test_gradient_correctness():
    """grad_logit/jacobian vs central differences, 1e-5 relative, 100 heads."""
    rng = np.random.default_rng(202)
    t0 = time.time()
    for trial in range(100):
        d = int(rng.integers(3, 10))
        h = int(rng.integers(3, 10))
        k = int(rng.integers(2, 5))
        f = rng.standard_normal(d)
        if trial % 2 == 0:
            head = tanh_head(rng, d, h, k)
        else:
            head = _relu_head_off_boundary(rng, d, h, k, f)
        jac = jacobian(head, f)
        for c in range(k):
            g = grad_logit(head, f, c)
            fd = central_difference_gradient(lambda x: forward(head, x)[c], f)
            tol = 1e-5 * np.maximum(1.0, np.abs(g))
            assert np.all(np.abs(fd - g) <= tol)
            assert np.all(np.abs(jac[c] - g) <= 1e-12)
    elapsed = time.time() - t0
    assert elapsed < 30.0
    print(f"\nPASS: gradient correctness vs finite differences ({elapsed:.2f}s)")


def test_remainder_bound():
    """500 tanh-head audits, ||dF|| <= 0.1: gap_inf <= 0.5 * L_hat * ||dF||^2."""
    rng = np.random.default_rng(303)
    t0 = time.time()
    checked = 0
    while checked < 500:
        d = int(rng.integers(4, 12))
        head = tanh_head(rng, d, int(rng.integers(4, 10)), int(rng.integers(2, 5)))
        f = rng.standard_normal(d)
        delta = rng.standard_normal(d)
        delta *= float(rng.uniform(0.005, 0.1)) / float(np.linalg.norm(delta))
        dn = float(np.linalg.norm(delta))
        assert dn <= 0.1
        est = estimate_smoothness(head, f, radius=1.25 * dn, probes=24,
                                  seed=int(rng.integers(0, 2**31)))
        res = compare(head, f, delta, smoothness=est)
        gap = float(np.max(np.abs(res.y_exact - res.y_approx)))
        assert gap <= res.remainder_bound, (
            f"gap {gap} above bound {res.remainder_bound} at sample {checked}")
        checked += 1
    elapsed = time.time() - t0
    assert elapsed < 60.0
    print(f"\nPASS: remainder bound held on 500/500 tanh audits ({elapsed:.2f}s)")


def test_energy_one_lipschitz():
    """|E(a) - E(b)| <= ||a - b||_inf on 1e5 random pairs, zero violations."""
    rng = np.random.default_rng(404)
    violations = 0
    for _ in range(100_000):
        k = int(rng.integers(2, 10))
        scale = 10.0 ** rng.uniform(-2, 2)
        a = scale * rng.standard_normal(k)
        b = a + rng.standard_normal(k) * rng.uniform(0.01, 2.0)
        if abs(logsumexp(a) - logsumexp(b)) > float(np.max(np.abs(a - b))):
            violations += 1
    assert violations == 0
    print("\nPASS: energy 1-Lipschitz, 0 violations in 100000 pairs")


def test_auroc_oracle_equivalence():
    """Rank AUROC == pairwise oracle within 1e-12 on 1,000 random sets."""
    rng = np.random.default_rng(505)
    for _ in range(1000):
        n_id = int(rng.integers(1, 201))
        n_ood = int(rng.integers(1, 201))
        ids = rng.standard_normal(n_id) * 10 ** rng.uniform(-2, 2)
        oods = rng.standard_normal(n_ood) * 10 ** rng.uniform(-2, 2)
        if rng.uniform() < 0.4:
            ids, oods = np.round(ids, 1), np.round(oods, 1)
        # independent pairwise definition
        wins = float(np.sum(ids[:, None] > oods[None, :]))
        ties = float(np.sum(ids[:, None] == oods[None, :]))
        oracle = (wins + 0.5 * ties) / (n_id * n_ood)
        got = auroc(ScoredSet(id_scores=ids, ood_scores=oods))
        assert abs(got - oracle) <= 1e-12
    print("\nPASS: AUROC rank statistic == pairwise oracle on 1000 sets")


def test_fpr95_enumeration():
    """fpr_at_tpr matches brute-force threshold enumeration on 1,000 sets."""
    import math
    rng = np.random.default_rng(606)
    for _ in range(1000):
        n_id = int(rng.integers(20, 200))
        n_ood = int(rng.integers(1, 200))
        ids = list(rng.standard_normal(n_id))
        oods = list(rng.standard_normal(n_ood) - rng.uniform(0, 3))
        if rng.uniform() < 0.4:
            ids = [round(v, 1) for v in ids]
            oods = [round(v, 1) for v in oods]
        # brute force: extract the m-th smallest by repeated min-removal
        m = math.floor(0.05 * n_id + 1e-9)
        pool = list(ids)
        tau = None
        for _ in range(m + 1):
            tau = min(pool)
            pool.remove(tau)
        oracle = sum(1 for s in oods if s > tau) / n_ood
        got = fpr_at_tpr(ScoredSet(id_scores=ids, ood_scores=oods), 0.95)
        assert got == oracle
    print("\nPASS: FPR95 == enumeration oracle on 1000 sets")


def test_synthetic_detection_gain():
    """20 seeds: GSC beats raw on AUROC and FPR95 in >= 19; drop ratio >= 3x."""
    t0 = time.time()
    auroc_wins = fpr_wins = 0
    id_rels, ood_rels = [], []
    for seed in range(20):
        ds = generate(SynthConfig(seed=seed))
        rep = run_pipeline(dataset_from_synth(ds), RunConfig(seed=seed))
        agg = rep.aggregates
        auroc_wins += agg["auroc_gsc"] > agg["auroc_raw"]
        fpr_wins += agg["fpr95"] < agg["fpr95_raw"]
        theory = theory_check(ds, default_plan())
        id_rels.append(theory.id_rel_drop_mean)
        ood_rels.append(theory.ood_rel_drop_mean)
    elapsed = time.time() - t0
    assert auroc_wins >= 19
    assert fpr_wins >= 19
    ratio = float(np.mean(ood_rels)) / float(np.mean(id_rels))
    assert ratio >= 3.0
    assert elapsed < 120.0
    print(f"\nPASS: detection gain {auroc_wins}/20 AUROC, {fpr_wins}/20 FPR95, "
          f"drop ratio {ratio:.1f}x ({elapsed:.1f}s)")


def test_ablation_ordering():
    """Zero beats perturb/projection; top-grad < random < reverse on FPR95."""
    ds = generate(SynthConfig(seed=7))
    data = dataset_from_synth(ds)

    def fpr(**kw):
        return run_pipeline(data, RunConfig(seed=7, **kw)).aggregates["fpr95"]

    f_zero = fpr(rule="zero")
    f_sign = fpr(rule="sign_perturb")
    f_orth = fpr(rule="orth_project")
    f_top = fpr(strategy="top_grad")
    f_rand = fpr(strategy="random")
    f_rev = fpr(strategy="reverse")
    assert f_zero < f_sign
    assert f_zero < f_orth
    assert f_top < f_rand < f_rev
    print(f"\nPASS: ablation ordering zero={f_zero:.3f} < sign={f_sign:.3f}, "
          f"orth={f_orth:.3f}; top={f_top:.3f} < rand={f_rand:.3f} < rev={f_rev:.3f}")


def test_concentration_separation():
    """Tanh benchmark: OOD TopKRatio(s) >= ID + 0.10; monotone; terminal 1."""
    cfg = tanh_preset_config(seed=7, n_id=150, n_ood=150, n_cal=30)
    ds = generate_tanh(cfg)
    d, s = cfg.d, cfg.s

    def per_sample(feats):
        out = []
        for f in feats:
            g = grad_logit(ds.head, f, argmax(forward(ds.head, f)))
            profile = [topk_ratio(g, k) for k in range(1, d + 1)]
            assert all(a <= b for a, b in zip(profile, profile[1:]))
            assert profile[-1] == 1.0
            out.append(profile[s - 1])
        return np.asarray(out)

    id_ratios = per_sample(ds.id_features)
    ood_ratios = per_sample(ds.ood_features)
    sep = float(np.mean(ood_ratios) - np.mean(id_ratios))
    assert sep >= 0.10
    print(f"\nPASS: concentration separation {sep:.3f} at k={s} "
          f"(ID {np.mean(id_ratios):.3f}, OOD {np.mean(ood_ratios):.3f})")


def test_cost_accounting():
    """3-layer head: approx path under the two-forward path, ratio < 0.75."""
    rng = np.random.default_rng(707)
    head = HeadModel(layers=(
        LayerSpec(weight=rng.standard_normal((256, 512)) / 16, bias=np.zeros(256),
                  activation="tanh"),
        LayerSpec(weight=rng.standard_normal((128, 256)) / 16, bias=np.zeros(128),
                  activation="relu"),
        LayerSpec(weight=rng.standard_normal((10, 128)) / 16, bias=np.zeros(10)),
    ))
    rep = flop_report(head)
    assert rep.approx_path_total < rep.naive_path_total
    assert rep.ratio < 0.75
    print(f"\nPASS: cost accounting ratio {rep.ratio:.3f} "
          f"({rep.approx_path_total} vs {rep.naive_path_total} FLOPs)")


def test_full_eval_determinism(tmp_path):
    """Two identical CLI eval runs produce byte-identical reports."""
    import json
    cfg = tmp_path / "synth.json"
    cfg.write_text(json.dumps({"n_id": 60, "n_ood": 60, "n_cal": 40}))
    assert cli(["gen", "--config", str(cfg), "--seed", "11",
                "--out", str(tmp_path / "ds")]) == EXIT_OK
    args = ["eval", "--manifest", str(tmp_path / "ds" / "manifest.json"),
            "--ratio", "0.05", "--rule", "zero", "--seed", "11"]
    assert cli(args + ["--out", str(tmp_path / "r1")]) == EXIT_OK
    assert cli(args + ["--out", str(tmp_path / "r2")]) == EXIT_OK
    for fn in ("report.csv", "summary.json"):
        b1 = (tmp_path / "r1" / fn).read_bytes()
        b2 = (tmp_path / "r2" / fn).read_bytes()
        assert b1 == b2
    print("\nPASS: full eval determinism, byte-identical reports")
