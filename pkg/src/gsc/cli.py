"""Command-line surface.

Subcommands: gen, eval, approx-error, concentration, flops, hist.
Exit codes: 0 success, 1 usage, 2 data error, 3 numeric/degenerate error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace

from . import container, metrics, synth
from .approx import audit_gap
from .errors import (
    DataFormatError,
    DegenerateGradientError,
    GenerationError,
    InsufficientCalibrationError,
    NonFiniteError,
    UndefinedRatioError,
)
from .head import flop_report
from .metrics import ScoredSet, concentration_profile, export_histogram, profiles_to_csv
from .pipeline import RunConfig, run_pipeline
from .shortcircuit import ShortCircuitPlan

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_DATA_ERRORS = (DataFormatError, FileNotFoundError, json.JSONDecodeError, KeyError)
_NUMERIC_ERRORS = (
    DegenerateGradientError,
    GenerationError,
    InsufficientCalibrationError,
    NonFiniteError,
    UndefinedRatioError,
)


class _UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract here is exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="manifest.json path")
    p.add_argument("--config", help="RunConfig JSON file (flags override it)")
    p.add_argument("--ratio", type=float, help="mask ratio (default 0.05)")
    p.add_argument("--rule", choices=["zero", "scale", "sign_perturb", "orth_project", "clip"])
    p.add_argument("--strategy", choices=["top_grad", "top_grad_times_feature",
                                          "fisher_weighted", "random", "reverse"])
    p.add_argument("--rounds", type=int)
    p.add_argument("--score", choices=["energy", "msp"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (or output_dir in --config)")


def _run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(raw) - known
        if unknown:
            raise DataFormatError(f"unknown RunConfig keys: {sorted(unknown)}")
        cfg = replace(cfg, **raw)
    overrides = {}
    for flag in ("ratio", "rule", "strategy", "rounds", "score", "seed"):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[flag] = val
    if getattr(args, "approx_mode", None):
        overrides["approx_mode"] = args.approx_mode
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    cfg = replace(cfg, **overrides)
    if not cfg.output_dir:
        raise _UsageError("an output directory is required (--out or output_dir)")
    return cfg


def _cmd_gen(args) -> int:
    cfg = synth.tanh_preset_config() if args.preset == "tanh" else synth.SynthConfig()
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(synth.SynthConfig)}
        unknown = set(raw) - known
        if unknown:
            raise DataFormatError(f"unknown SynthConfig keys: {sorted(unknown)}")
        cfg = replace(cfg, **raw)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    ds = synth.generate_tanh(cfg) if args.preset == "tanh" else synth.generate(cfg)
    manifest = container.save_synth_dataset(args.out, ds)
    print(manifest)
    return EXIT_OK


def _fisher_for(cfg: RunConfig, data):
    if cfg.strategy != "fisher_weighted":
        return None
    from .scoring import estimate_fisher_diag
    cal = data.by_label("calibration")
    if not cal:
        raise DataFormatError("fisher_weighted needs a calibration set")
    return estimate_fisher_diag(data.head, cal[0].features).lam


def _plan_for(cfg: RunConfig, sample_index: int, fisher) -> ShortCircuitPlan:
    from .pipeline import _per_sample_strategy
    strat = _per_sample_strategy(cfg, "audit", sample_index, fisher)
    return ShortCircuitPlan(strategy=strat, rule=cfg.modification_rule(), rounds=cfg.rounds)


def _cmd_eval(args) -> int:
    data = container.load_dataset(args.manifest)
    cfg = _run_config(args)
    report = run_pipeline(data, cfg)
    report.write(cfg.output_dir)
    print(os.path.join(cfg.output_dir, "summary.json"))
    return EXIT_OK


def _cmd_approx_error(args) -> int:
    data = container.load_dataset(args.manifest)
    cfg = _run_config(args)
    fisher = _fisher_for(cfg, data)
    samples, labels = [], []
    for fs in data.feature_sets:
        if fs.label == "calibration":
            continue
        for i, feat in enumerate(fs.features):
            samples.append((feat, _plan_for(cfg, i, fisher)))
            labels.append(fs.label)
    table = audit_gap(data.head, samples, labels, seed=cfg.seed)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "approx_error.csv")
    table.to_csv(path)
    with open(os.path.join(cfg.output_dir, "approx_error_summary.json"), "w") as fh:
        json.dump(table.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(path)
    return EXIT_OK


def _default_k_values(d: int) -> list[int]:
    ks = []
    k = 1
    while k < d:
        ks.append(k)
        k *= 2
    ks.append(d)
    return ks


def _cmd_concentration(args) -> int:
    data = container.load_dataset(args.manifest)
    k_values = ([int(v) for v in args.k_values.split(",")]
                if args.k_values else _default_k_values(data.d))
    id_feats = [f for fs in data.by_label("ID") for f in fs.features]
    ood_feats = [f for fs in data.by_label("OOD") for f in fs.features]
    id_prof = concentration_profile(data.head, id_feats, k_values)
    ood_prof = concentration_profile(data.head, ood_feats, k_values)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "concentration.csv")
    profiles_to_csv(path, id_prof, ood_prof)
    print(path)
    return EXIT_OK


def _cmd_flops(args) -> int:
    data = container.load_dataset(args.manifest)
    rep = flop_report(data.head)
    payload = {
        "forward": rep.forward,
        "backward": rep.backward,
        "approx_extra": rep.approx_extra,
        "two_forward_total": rep.two_forward_total,
        "approx_path_total": rep.approx_path_total,
        "naive_path_total": rep.naive_path_total,
        "ratio": rep.ratio,
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "flops.json")
        with open(path, "w") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_hist(args) -> int:
    data = container.load_dataset(args.manifest)
    cfg = _run_config(args)
    report = run_pipeline(data, cfg)
    ids = [r.gsc_score for r in report.rows if r.label == "ID" and not r.error]
    oods = [r.gsc_score for r in report.rows if r.label == "OOD" and not r.error]
    table = export_histogram(ScoredSet(id_scores=ids, ood_scores=oods), args.bins)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "hist.csv")
    table.to_csv(path)
    print(path)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="gsc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic benchmark dataset")
    p.add_argument("--config", help="SynthConfig JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=["affine", "tanh"], default="affine")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("eval", help="run the detection pipeline, write report")
    _add_run_flags(p)
    p.add_argument("--approx-mode", dest="approx_mode",
                   choices=["first_order", "exact", "both"])
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("approx-error", help="exact-vs-approx score gap audit")
    _add_run_flags(p)
    p.set_defaults(fn=_cmd_approx_error, approx_mode="both")

    p = sub.add_parser("concentration", help="gradient top-k mass profile CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k-values", help="comma-separated k list (default: powers of 2)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_concentration)

    p = sub.add_parser("flops", help="analytic cost report for the head")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_flops)

    p = sub.add_parser("hist", help="score histogram CSV")
    _add_run_flags(p)
    p.add_argument("--bins", type=int, default=30)
    p.set_defaults(fn=_cmd_hist)
    return parser


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except _UsageError as exc:
        print(f"gsc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        print(f"gsc: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"gsc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"gsc: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    raise SystemExit(cli())
