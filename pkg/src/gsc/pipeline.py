"""End-to-end inference over a loaded dataset.

Per sample: forward -> predicted class -> feature gradient -> short-circuit
-> post-modification logits (first-order, exact recompute, or both) ->
score -> verdict against the calibrated threshold. The threshold is
calibrated on the calibration split run through the same transform
(``calibrate_on="raw"`` switches to unmodified scores for comparison).

A degenerate sample must not kill a run: per-sample failures land in an
error column and are excluded from aggregates. Samples are processed
independently (optionally on a thread pool capped by GSC_THREADS) and
merged in input order, so reports are byte-identical across runs.
"""

from __future__ import annotations

import csv
import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .container import FeatureSet, LoadedDataset
from .errors import DataFormatError
from .head import flops_backward, flops_forward, flops_jvp
from .metrics import ScoredSet, auroc, fpr_at_tpr
from .approx import approx_logits, exact_logits
from .scoring import Threshold, calibrate, decide, estimate_fisher_diag, score
from .shortcircuit import (
    MaskBudget,
    ModificationRule,
    SelectionStrategy,
    ShortCircuitPlan,
    run_plan,
)

APPROX_MODES = ("first_order", "exact", "both")


@dataclass(frozen=True)
class RunConfig:
    ratio: float = 0.05
    explicit_k: int | None = None
    strategy: str = "top_grad"
    rule: str = "zero"
    beta: float | None = None
    alpha: float | None = None
    clip_bound: float | None = None
    rounds: int = 1
    score: str = "energy"
    target_tpr: float = 0.95
    approx_mode: str = "first_order"
    seed: int = 0
    calibrate_on: str = "gsc"  # gsc | raw
    output_dir: str | None = None  # default for the CLI --out flag

    def __post_init__(self):
        if self.approx_mode not in APPROX_MODES:
            raise ValueError(f"approx_mode must be one of {APPROX_MODES}")
        if self.calibrate_on not in ("gsc", "raw"):
            raise ValueError("calibrate_on must be 'gsc' or 'raw'")

    def budget(self) -> MaskBudget:
        if self.explicit_k is not None:
            return MaskBudget(explicit_k=self.explicit_k)
        return MaskBudget(ratio=self.ratio)

    def modification_rule(self) -> ModificationRule:
        params = {}
        if self.rule == "scale":
            params["beta"] = self.beta if self.beta is not None else 0.5
        if self.rule == "sign_perturb" and self.alpha is not None:
            params["alpha"] = self.alpha
        if self.rule == "clip":
            params["clip_bound"] = self.clip_bound if self.clip_bound is not None else 1.0
        return ModificationRule(kind=self.rule, **params)


@dataclass(frozen=True)
class EvalRow:
    sample_id: str
    label: str
    raw_score: float | None
    gsc_score: float | None
    verdict: str
    flops: int
    gap: float | None
    error: str


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    aggregates: dict
    threshold: Threshold

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "label", "raw_score", "gsc_score",
                        "verdict", "flops", "gap", "error"])
            for r in self.rows:
                w.writerow([
                    r.sample_id, r.label,
                    "" if r.raw_score is None else repr(r.raw_score),
                    "" if r.gsc_score is None else repr(r.gsc_score),
                    r.verdict, r.flops,
                    "" if r.gap is None else repr(r.gap),
                    r.error,
                ])
        summary = dict(self.aggregates)
        summary["threshold"] = {
            "tau": self.threshold.tau,
            "target_tpr": self.threshold.target_tpr,
            "n": self.threshold.calibration_size,
            "tie_count": self.threshold.tie_count,
            "degenerate": self.threshold.degenerate,
        }
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _worker_count() -> int:
    env = os.environ.get("GSC_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return 1


def _per_sample_strategy(cfg: RunConfig, stream: str, index: int,
                         fisher_diag) -> SelectionStrategy:
    seed = cfg.seed
    if cfg.strategy == "random":
        # independent, reproducible per-sample stream (crc32: process-stable)
        seed = int(np.random.SeedSequence(
            [cfg.seed, zlib.crc32(stream.encode()), index]
        ).generate_state(1)[0])
    return SelectionStrategy(
        kind=cfg.strategy,
        budget=cfg.budget(),
        seed=seed,
        fisher_diag=fisher_diag,
    )


def _eval_sample(head, feat, cfg: RunConfig, stream: str, index: int,
                 fisher_diag) -> tuple[float, float, int, float | None]:
    """(raw_score, verdict_score, flops, gap) for one feature vector."""
    plan = ShortCircuitPlan(
        strategy=_per_sample_strategy(cfg, stream, index, fisher_diag),
        rule=cfg.modification_rule(),
        rounds=cfg.rounds,
    )
    res = run_plan(plan, head, feat)
    raw = score(cfg.score, res.y0)
    flops = plan.rounds * (flops_forward(head) + flops_backward(head))
    gap = None
    if cfg.approx_mode == "exact":
        y_prime = exact_logits(head, res.f_prime)
        flops += flops_forward(head)
        gsc = score(cfg.score, y_prime)
    else:
        y_approx = approx_logits(head, feat, res.y0, res.delta_total)
        flops += flops_jvp(head) + head.output_dim
        gsc = score(cfg.score, y_approx)
        if cfg.approx_mode == "both":
            y_exact = exact_logits(head, res.f_prime)
            flops += flops_forward(head)
            gap = abs(score(cfg.score, y_exact) - gsc)
    return raw, gsc, flops, gap


def _map_ordered(fn, items):
    workers = _worker_count()
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_pipeline(data: LoadedDataset, cfg: RunConfig) -> EvalReport:
    head = data.head
    cal_sets = data.by_label("calibration")
    if not cal_sets:
        raise DataFormatError("no calibration feature set present")
    cal_feats = np.concatenate([fs.features for fs in cal_sets], axis=0)

    fisher_diag = None
    if cfg.strategy == "fisher_weighted":
        fisher_diag = estimate_fisher_diag(head, cal_feats).lam

    def cal_score(args):
        i, feat = args
        raw, gsc, _, _ = _eval_sample(head, feat, cfg, "calibration", i, fisher_diag)
        return raw if cfg.calibrate_on == "raw" else gsc

    cal_scores = _map_ordered(cal_score, list(enumerate(cal_feats)))
    threshold = calibrate(cal_scores, cfg.target_tpr)

    jobs = []
    for fs in data.feature_sets:
        if fs.label == "calibration":
            continue
        for i, feat in enumerate(fs.features):
            jobs.append((fs.name, fs.label, i, feat))

    def job(args):
        name, label, i, feat = args
        sid = f"{name}[{i}]"
        try:
            raw, gsc, flops, gap = _eval_sample(head, feat, cfg, name, i, fisher_diag)
            return EvalRow(sample_id=sid, label=label, raw_score=raw,
                           gsc_score=gsc, verdict=decide(gsc, threshold),
                           flops=flops, gap=gap, error="")
        except Exception as exc:  # per-sample isolation
            return EvalRow(sample_id=sid, label=label, raw_score=None,
                           gsc_score=None, verdict="", flops=0, gap=None,
                           error=f"{type(exc).__name__}: {exc}")

    rows = tuple(_map_ordered(job, jobs))
    aggregates = compute_aggregates(rows, cfg.target_tpr)
    return EvalReport(rows=rows, aggregates=aggregates, threshold=threshold)


def compute_aggregates(rows, target_tpr: float) -> dict:
    ok = [r for r in rows if not r.error]
    id_raw = np.array([r.raw_score for r in ok if r.label == "ID"])
    ood_raw = np.array([r.raw_score for r in ok if r.label == "OOD"])
    id_gsc = np.array([r.gsc_score for r in ok if r.label == "ID"])
    ood_gsc = np.array([r.gsc_score for r in ok if r.label == "OOD"])
    gaps = [r.gap for r in ok if r.gap is not None]
    agg: dict = {
        "n_id": int(id_raw.size),
        "n_ood": int(ood_raw.size),
        "n_errors": int(len(rows) - len(ok)),
        "target_tpr": target_tpr,
        "mean_gap": float(np.mean(gaps)) if gaps else None,
    }
    if id_raw.size and ood_raw.size:
        raw_set = ScoredSet(id_scores=id_raw, ood_scores=ood_raw)
        gsc_set = ScoredSet(id_scores=id_gsc, ood_scores=ood_gsc)
        agg.update({
            "auroc_raw": auroc(raw_set),
            "auroc_gsc": auroc(gsc_set),
        })
        # FPR-at-TPR thresholds on the test ID rows need the same minimum
        # count as calibration; a small test split must not abort the run
        if id_raw.size >= 20:
            agg["fpr95_raw"] = fpr_at_tpr(raw_set, target_tpr)
            agg["fpr95"] = fpr_at_tpr(gsc_set, target_tpr)
        else:
            agg["fpr95_raw"] = None
            agg["fpr95"] = None
    return agg


def load_report(out_dir: str, *, check: bool = True) -> EvalReport:
    """Read back a written report; verify aggregates against the rows."""
    rows = []
    with open(os.path.join(out_dir, "report.csv"), newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(EvalRow(
                sample_id=rec["sample_id"],
                label=rec["label"],
                raw_score=float(rec["raw_score"]) if rec["raw_score"] else None,
                gsc_score=float(rec["gsc_score"]) if rec["gsc_score"] else None,
                verdict=rec["verdict"],
                flops=int(rec["flops"]),
                gap=float(rec["gap"]) if rec["gap"] else None,
                error=rec["error"],
            ))
    with open(os.path.join(out_dir, "summary.json")) as fh:
        summary = json.load(fh)
    tinfo = summary.pop("threshold")
    threshold = Threshold(
        tau=tinfo["tau"], target_tpr=tinfo["target_tpr"], calibration_size=tinfo["n"],
        tie_count=tinfo["tie_count"], degenerate=tinfo["degenerate"],
    )
    report = EvalReport(rows=tuple(rows), aggregates=summary, threshold=threshold)
    if check:
        recomputed = compute_aggregates(report.rows, summary["target_tpr"])
        for key, val in recomputed.items():
            stored = summary.get(key)
            if isinstance(val, float) and isinstance(stored, float):
                if abs(val - stored) > 1e-9:
                    raise DataFormatError(
                        f"summary {key} = {stored} disagrees with rows ({val})"
                    )
            elif stored != val:
                raise DataFormatError(f"summary {key} = {stored!r} vs rows {val!r}")
    return report


def dataset_from_synth(ds) -> LoadedDataset:
    """In-memory adapter so benchmarks can skip the container round trip."""
    return LoadedDataset(
        head=ds.head,
        feature_sets=(
            FeatureSet(name="id", label="ID", features=ds.id_features),
            FeatureSet(name="ood", label="OOD", features=ds.ood_features),
            FeatureSet(name="calibration", label="calibration",
                       features=ds.cal_features),
        ),
        d=ds.head.input_dim,
        K=ds.head.output_dim,
    )
