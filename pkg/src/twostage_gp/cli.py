"""Command-line interface.

Subcommands: fit, predict, benchmark, aks, misspec-check, fps, toy,
contour. Exit codes: 0 success, 1 input error, 2 numerical or training
error, 3 procedure error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import Standardizer, ingest_csv, read_matrix_csv
from .exceptions import InputError, TwoStageGPError
from .experiments import (
    load_model,
    predict_loaded,
    run_benchmark,
    run_contour,
    run_toy,
    save_model,
    write_benchmark_outputs,
)
from .gp import fit_posterior
from .kernels import KernelFamily, KernelSpec
from .pipeline import fit_two_stage_exact, fit_two_stage_scalable
from .sampling import design_stats, fps
from .selection import misspec_check
from .selection import aks as run_aks
from .training import train_gp


class _Parser(argparse.ArgumentParser):
    """Report usage problems through the package's input-error exit code."""

    def error(self, message):
        raise InputError(message)


def _common(sub):
    sub.add_argument("--config", type=str, help="path to the JSON experiment config")
    sub.add_argument("--seed", type=int, help="master seed override")
    sub.add_argument("--jobs", type=int, help="parallel fold workers")
    sub.add_argument("--out", type=str, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twostage-gp", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "predict", "benchmark", "aks", "misspec-check", "fps", "toy", "contour"):
        sub = subs.add_parser(name)
        _common(sub)
        if name == "predict":
            sub.add_argument("--model", type=str, required=True, help="model artifact JSON")
            sub.add_argument("--data", type=str, required=True, help="feature CSV")
        if name == "fps":
            sub.add_argument("--data", type=str, help="feature CSV (overrides config dataset)")
            sub.add_argument("-k", type=int, default=None, help="number of points to select")
        if name == "misspec-check" or name == "aks":
            sub.add_argument("--kernel", type=str, help="kernel family for misspec-check")
        if name == "toy":
            sub.add_argument("--figure", choices=("fig2", "fig4"), default="fig2")
            sub.add_argument("--seeds", type=int, default=20, help="number of seeds")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.output = args.out
    return cfg.validate()


def _out_dir(cfg) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload):
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.integer, np.floating)):
            v = o.item()
            return v
        raise TypeError(f"not JSON serializable: {type(o)}")

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=default)


def _standardized_dataset(cfg):
    dataset = ingest_csv(cfg.dataset.path, cfg.dataset.has_header, cfg.dataset.name)
    std = Standardizer.fit(dataset.features, dataset.targets)
    return dataset, std, std.transform_x(dataset.features), std.transform_y(dataset.targets)


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    if not cfg.dataset.path:
        raise InputError("fit requires a dataset path in the config")
    dataset, std, X, y = _standardized_dataset(cfg)
    if cfg.method == "exact-gp":
        spec, _ = train_gp(KernelSpec(KernelFamily.from_name(cfg.kernel)), X, y, cfg.train)
        model = fit_posterior(spec, X, y)
    elif cfg.method == "two-stage-exact":
        model = fit_two_stage_exact(X, y, cfg.two_stage_config())
    elif cfg.method == "two-stage-gpnn":
        model = fit_two_stage_scalable(X, y, cfg.scalable, cfg.two_stage_config())
    else:
        raise InputError(f"fit does not support method {cfg.method!r}")
    out = _out_dir(cfg)
    path = out / f"{dataset.name}_{cfg.method}_model.json"
    save_model(model, std, path)
    print(f"saved model artifact to {path}")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    model, std, kind = load_model(args.model)
    X = read_matrix_csv(args.data)
    if X.shape[1] != std.x_mean.shape[0]:
        raise InputError(
            f"feature CSV has {X.shape[1]} columns, model expects {std.x_mean.shape[0]}"
        )
    pred = predict_loaded(model, kind, std.transform_x(X))
    mean = std.inverse_transform_y(pred.mean)
    sd = pred.std * std.y_std
    out = _out_dir(cfg)
    path = out / "predictions.csv"
    lines = ["mean,std"] + [f"{float(m)!r},{float(s)!r}" for m, s in zip(mean, sd)]
    path.write_text("\r\n".join(lines) + "\r\n")
    print(f"wrote {len(mean)} predictions to {path}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    if not cfg.dataset.path:
        raise InputError("benchmark requires a dataset path in the config")
    report = run_benchmark(cfg)
    out = _out_dir(cfg)
    write_benchmark_outputs(report, out)
    agg = report["aggregate"]
    flag = " [UNSTABLE NLL]" if agg["nll"]["unstable"] else ""
    print(
        f"{report['dataset']} {report['method']}: "
        f"RMSE {agg['rmse']['mean']:.4g} +/- {agg['rmse']['std']:.4g}, "
        f"NLL {agg['nll']['mean']:.4g} +/- {agg['nll']['std']:.4g}{flag}"
    )
    return 0


def cmd_aks(args) -> int:
    cfg = _load_config(args)
    if not cfg.dataset.path:
        raise InputError("aks requires a dataset path in the config")
    _, _, X, y = _standardized_dataset(cfg)
    from .training import TrainConfig

    winner, reports = run_aks(
        X, y, cfg.dictionary, cfg.misspec,
        TrainConfig(iterations=cfg.selection_iterations), master_seed=cfg.seed,
    )
    payload = {
        "selected": winner.value,
        "pass_rates": {f.value: r.mean_pass_rate for f, r in reports.items()},
        "verdicts": {f.value: r.verdict for f, r in reports.items()},
    }
    _write_json(_out_dir(cfg) / "aks.json", payload)
    print(json.dumps(payload, indent=2))
    return 0


def cmd_misspec(args) -> int:
    cfg = _load_config(args)
    if not cfg.dataset.path:
        raise InputError("misspec-check requires a dataset path in the config")
    kernel = args.kernel or cfg.kernel
    _, _, X, y = _standardized_dataset(cfg)
    from .training import TrainConfig

    report = misspec_check(
        X, y, KernelFamily.from_name(kernel), cfg.misspec,
        TrainConfig(iterations=cfg.selection_iterations), master_seed=cfg.seed,
    )
    payload = {
        "family": report.family.value,
        "mean_pass_rate": report.mean_pass_rate,
        "round_pass_rates": report.round_pass_rates.tolist(),
        "verdict": report.verdict,
        "delta": report.delta,
        "skipped_rounds": report.skipped_rounds,
    }
    _write_json(_out_dir(cfg) / "misspec.json", payload)
    print(json.dumps({k: payload[k] for k in ("family", "mean_pass_rate", "verdict")}, indent=2))
    return 0


def cmd_fps(args) -> int:
    cfg = _load_config(args)
    if args.data:
        X = read_matrix_csv(args.data)
    elif cfg.dataset.path:
        X = ingest_csv(cfg.dataset.path, cfg.dataset.has_header).features
    else:
        raise InputError("fps requires --data or a config dataset path")
    k = args.k or min(500, X.shape[0])
    sample = fps(X, k)
    q, h = design_stats(X, sample.indices)
    payload = {
        "k": int(k),
        "indices": sample.indices.tolist(),
        "fill_trace": [None if not np.isfinite(v) else float(v) for v in sample.fill_trace],
        "separation": q,
        "fill": h,
    }
    _write_json(_out_dir(cfg) / "fps.json", payload)
    print(json.dumps({"k": k, "separation": q, "fill": h}, indent=2))
    return 0


def cmd_toy(args) -> int:
    cfg = _load_config(args)
    seeds = range(cfg.seed, cfg.seed + args.seeds)
    result = run_toy(args.figure, seeds, out_dir=_out_dir(cfg))
    print(
        f"{args.figure}: median coverage two-stage "
        f"{result['median_coverage_two_stage']:.3f}, zero-mean "
        f"{result['median_coverage_zero_mean']:.3f}"
    )
    return 0


def cmd_contour(args) -> int:
    cfg = _load_config(args)
    if not cfg.dataset.path:
        raise InputError("contour requires a dataset path in the config")
    _, _, X, y = _standardized_dataset(cfg)
    result = run_contour(X, y, trainer=cfg.train, seed=cfg.seed)
    _write_json(_out_dir(cfg) / "contour.json", result)
    print(f"wrote contour grid ({len(result['grid_a'])}x{len(result['grid_b'])})")
    return 0


_COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "aks": cmd_aks,
    "misspec-check": cmd_misspec,
    "fps": cmd_fps,
    "toy": cmd_toy,
    "contour": cmd_contour,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except TwoStageGPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
