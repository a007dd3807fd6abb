#!/usr/bin/env python3
"""Ablation surface: modification rules, selection strategies, mask ratios,
and one-shot vs iterative schedules on the synthetic benchmark."""

import argparse

from gsc import RunConfig, SynthConfig, dataset_from_synth, generate, run_pipeline


def row(data, seed, label, **kw):
    agg = run_pipeline(data, RunConfig(seed=seed, **kw)).aggregates
    print(f"{label:<34} FPR95 {agg['fpr95']:>7.4f}   AUROC {agg['auroc_gsc']:>7.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    data = dataset_from_synth(generate(SynthConfig(seed=args.seed)))
    print("== modification rules (ratio 0.05, top-grad) ==")
    row(data, args.seed, "zero", rule="zero")
    row(data, args.seed, "scale beta=0.5", rule="scale", beta=0.5)
    row(data, args.seed, "sign_perturb", rule="sign_perturb")
    row(data, args.seed, "clip +-1.0", rule="clip", clip_bound=1.0)
    row(data, args.seed, "orth_project", rule="orth_project")

    print("\n== selection strategies (ratio 0.05, zero) ==")
    for strat in ("top_grad", "top_grad_times_feature", "fisher_weighted",
                  "random", "reverse"):
        row(data, args.seed, strat, strategy=strat)

    print("\n== mask ratios (zero, top-grad) ==")
    for ratio in (0.0, 0.01, 0.02, 0.05, 0.10):
        row(data, args.seed, f"ratio {ratio:.2f}", ratio=ratio)

    print("\n== schedules (ratio 0.05, zero, top-grad) ==")
    for rounds in (1, 2, 3):
        row(data, args.seed, f"{rounds} round(s)", rounds=rounds)


if __name__ == "__main__":
    main()
