"""Command line interface: dataset generation, training, evaluation,
ablations, hyperparameter sweeps and regularized baselines.

All tables are UTF-8 CSV with LF endings and a fixed, documented column
order; every run directory receives the fully resolved configuration that
produced it.  Exit codes: 0 success, 2 configuration or input error,
3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, SweepSpec, load_run_config, load_sweep_spec
from .generator import generate_graph
from .graph import DatasetError, load_dataset, save_dataset
from .metrics import MetricError, evaluate
from .model import save_checkpoint
from .training import (
    REGULARIZERS,
    VARIANTS,
    BaselineError,
    NumericalError,
    train,
    train_baseline_with_regularizer,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

HISTORY_COLUMNS = ["phase", "epoch", "rec_x", "rec_a", "kl", "dis", "pre", "adv", "corr", "total"]
METRIC_COLUMNS = ["auc_roc", "auc_pr", "delta_dp", "delta_eo"]


def _default_jobs() -> int:
    try:
        import psutil

        n = psutil.cpu_count(logical=False)
    except Exception:
        n = None
    return n or os.cpu_count() or 1


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def _write_csv(path: Path, header: list, rows: list) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_history(path: Path, model, uses_corr: bool) -> None:
    rows = []
    for phase, history in (("1", model.phase1_history), ("2", model.phase2_history)):
        for epoch, report in enumerate(history):
            terms = report.terms()
            row = [phase, epoch]
            for col in HISTORY_COLUMNS[2:]:
                if col == "corr" and not uses_corr:
                    row.append("")
                else:
                    row.append(_fmt(terms[col]))
            rows.append(row)
    _write_csv(path, HISTORY_COLUMNS, rows)


def _write_scores(path: Path, scores: np.ndarray) -> None:
    _write_csv(path, ["node_id", "score"], [[i, repr(float(v))] for i, v in enumerate(scores)])


def _read_scores(path: Path) -> np.ndarray:
    with path.open(encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["node_id", "score"]:
            raise DatasetError(f"{path}: expected header node_id,score")
        pairs = [(int(r[0]), float(r[1])) for r in reader]
    scores = np.zeros(len(pairs))
    for i, v in pairs:
        scores[i] = v
    return scores


def _write_report(path: Path, report, extra: dict) -> None:
    payload = report.to_flat_dict(seed=extra.pop("seed", None))
    payload.update(extra)
    payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _resolved_config(out_dir: Path, run_cfg: RunConfig) -> None:
    _atomic_write_text(out_dir / "resolved_config.json",
                       json.dumps(run_cfg.to_dict(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    run_cfg = _load_config(args)
    out = Path(args.out)
    g, report = generate_graph(run_cfg.generator)
    save_dataset(g, out)
    _resolved_config(out, run_cfg)
    n_anom = int(g.labels.sum())
    minority = float((g.sensitive == 1).mean())
    print(f"generated: N={g.n_nodes} E={g.n_edges} d={g.n_attrs} "
          f"minority_ratio={minority:.4f} anomaly_ratio={n_anom / g.n_nodes:.4f} "
          f"(structural={len(report.structural_anomaly_ids)}, "
          f"contextual={len(report.contextual_anomaly_ids)})")
    return EXIT_OK


def cmd_train(args) -> int:
    run_cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g = load_dataset(args.data)
    model = train(g, run_cfg.training)
    save_checkpoint(out / "checkpoint.npz", model.params, run_cfg.to_dict())
    uses_corr = run_cfg.training.variant not in ("NO_CORR", "VANILLA_VGAE")
    _write_history(out / "history.csv", model, uses_corr)
    _write_scores(out / "scores.csv", model.scores)
    _resolved_config(out, run_cfg)
    if g.labels is not None:
        report = evaluate(model.scores, g.labels, g.sensitive, run_cfg.contamination)
        _write_report(out / "report.json", report,
                      {"seed": model.seed, "variant": model.variant,
                       "epochs_run": list(model.epochs_run)})
        print(f"trained {model.variant}: auc_roc={report.auc_roc:.4f} "
              f"delta_dp={report.delta_dp:.4f}")
    else:
        print(f"trained {model.variant}: no labels, skipping evaluation")
    return EXIT_OK


def cmd_eval(args) -> int:
    g = load_dataset(args.data)
    if g.labels is None:
        raise DatasetError("dataset has no labels; nothing to evaluate")
    scores = _read_scores(Path(args.scores))
    if len(scores) != g.n_nodes:
        raise DatasetError(f"scores cover {len(scores)} nodes, dataset has {g.n_nodes}")
    report = evaluate(scores, g.labels, g.sensitive, args.contamination)
    out = Path(args.out)
    _write_report(out / "report.json", report, {"seed": args.seed})
    print(report.to_json())
    return EXIT_OK


def _run_variant_worker(payload):
    data_dir, cfg_dict, variant, seed = payload
    run_cfg = RunConfig.from_dict(cfg_dict).with_overrides(
        {"training.variant": variant, "training.seed": seed})
    g = load_dataset(data_dir)
    try:
        model = train(g, run_cfg.training)
        report = evaluate(model.scores, g.labels, g.sensitive, run_cfg.contamination)
        flat = report.to_flat_dict()
        return (variant, seed, [flat[c] for c in METRIC_COLUMNS], None)
    except NumericalError as err:
        return (variant, seed, None, str(err))


def _run_pool(payloads, worker, jobs: int):
    if jobs <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, payloads))


def cmd_ablate(args) -> int:
    run_cfg = _load_config(args)
    out = Path(args.out)
    seeds = _parse_seeds(args.seeds)
    g = load_dataset(args.data)
    if g.labels is None:
        raise DatasetError("ablation requires a labeled dataset")
    cfg_dict = run_cfg.to_dict()
    payloads = [(args.data, cfg_dict, variant, seed)
                for variant in VARIANTS for seed in seeds]
    results = _run_pool(payloads, _run_variant_worker, args.jobs)

    rows, by_variant = [], {v: [] for v in VARIANTS}
    for variant, seed, metrics, error in results:
        if error is not None:
            rows.append([variant, seed] + ["FAILED"] * len(METRIC_COLUMNS))
            print(f"run failed ({variant}, seed {seed}): {error}", file=sys.stderr)
            continue
        rows.append([variant, seed] + [_fmt(m) for m in metrics])
        by_variant[variant].append(metrics)
    for variant in VARIANTS:
        good = by_variant[variant]
        if not good:
            rows.append([variant, "summary"] + ["FAILED"] * len(METRIC_COLUMNS))
            continue
        cells = []
        for col_idx in range(len(METRIC_COLUMNS)):
            vals = [m[col_idx] for m in good if m[col_idx] is not None]
            if not vals:
                cells.append("")
                continue
            cells.append(f"{np.mean(vals)!r}±{np.std(vals)!r}")
        rows.append([variant, "summary"] + cells)
    _write_csv(out / "ablation_table.csv", ["variant", "seed"] + METRIC_COLUMNS, rows)
    _resolved_config(out, run_cfg)
    print(f"ablation complete: {len(VARIANTS)} variants x {len(seeds)} seeds "
          f"-> {out / 'ablation_table.csv'}")
    return EXIT_OK


def _run_sweep_worker(payload):
    data_dir, cfg_dict, overrides, seed = payload
    run_cfg = RunConfig.from_dict(cfg_dict).with_overrides(
        {**overrides, "training.seed": seed})
    g = load_dataset(data_dir)
    try:
        model = train(g, run_cfg.training)
        report = evaluate(model.scores, g.labels, g.sensitive, run_cfg.contamination)
        flat = report.to_flat_dict()
        return (overrides, seed, [flat[c] for c in METRIC_COLUMNS], None)
    except NumericalError as err:
        return (overrides, seed, None, str(err))


def cmd_sweep(args) -> int:
    spec = load_sweep_spec(args.spec)
    out = Path(args.out)
    g = load_dataset(args.data)
    if g.labels is None:
        raise DatasetError("sweep requires a labeled dataset")
    points = spec.points()
    total = len(points) * len(spec.seeds)
    print(f"sweep: {len(points)} grid points x {len(spec.seeds)} seeds = {total} runs")
    axis_names = list(spec.axes)
    cfg_dict = spec.base.to_dict()
    payloads = [(args.data, cfg_dict, point, seed)
                for point in points for seed in spec.seeds]
    results = _run_pool(payloads, _run_sweep_worker, args.jobs)

    rows = []
    grouped: dict = {}
    for overrides, seed, metrics, error in results:
        key = tuple(overrides[a] for a in axis_names)
        if error is not None:
            rows.append(list(key) + [seed] + ["FAILED"] * len(METRIC_COLUMNS))
            print(f"run failed ({overrides}, seed {seed}): {error}", file=sys.stderr)
            continue
        rows.append(list(key) + [seed] + [_fmt(m) for m in metrics])
        grouped.setdefault(key, []).append(metrics)
    header = axis_names + ["seed"] + METRIC_COLUMNS
    _write_csv(out / "tradeoff.csv", header, rows)

    # non-dominated front over per-point medians: maximize auc_roc, minimize delta_eo
    medians = []
    for key, metric_rows in grouped.items():
        auc = float(np.median([m[0] for m in metric_rows]))
        eo_vals = [m[3] for m in metric_rows if m[3] is not None]
        if not eo_vals:
            continue
        medians.append((key, auc, float(np.median(eo_vals))))
    front = [
        (key, auc, eo) for key, auc, eo in medians
        if not any(
            (auc2 >= auc and eo2 <= eo) and (auc2 > auc or eo2 < eo)
            for _, auc2, eo2 in medians
        )
    ]
    front_rows = [list(key) + [_fmt(auc), _fmt(eo)] for key, auc, eo in front]
    _write_csv(out / "pareto.csv", axis_names + ["auc_roc_median", "delta_eo_median"],
               front_rows)
    print(f"sweep complete -> {out / 'tradeoff.csv'}, {out / 'pareto.csv'}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    run_cfg = _load_config(args)
    reg = args.reg
    if reg not in REGULARIZERS:
        raise ConfigError("reg", f"unknown regularizer {reg!r}; valid: {', '.join(REGULARIZERS)}")
    out = Path(args.out)
    run_dir = out / reg
    g = load_dataset(args.data)
    o_base = None
    needs_base = reg == "fairod" or (
        reg == "hin" and run_cfg.training.baseline_adcg_weight > 0)
    if needs_base:
        base_path = out / "none" / "scores.csv"
        if not base_path.exists():
            raise ConfigError(
                "baseline", f"{reg} needs base scores; run with --reg none into the "
                f"same --out first (expected {base_path})")
        o_base = _read_scores(base_path)
    model = train_baseline_with_regularizer(g, reg, run_cfg.training, o_base=o_base)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(run_dir / "checkpoint.npz", model.params, run_cfg.to_dict())
    _write_scores(run_dir / "scores.csv", model.scores)
    _resolved_config(run_dir, run_cfg)
    if g.labels is not None:
        report = evaluate(model.scores, g.labels, g.sensitive, run_cfg.contamination)
        _write_report(run_dir / "report.json", report,
                      {"seed": model.seed, "regularizer": reg,
                       "epochs_run": model.epochs_run})
        print(f"baseline reg={reg}: auc_roc={report.auc_roc:.4f} "
              f"delta_dp={report.delta_dp:.4f}")
    else:
        print(f"baseline reg={reg}: no labels, skipping evaluation")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plumbing


def _parse_seeds(text: str) -> list:
    try:
        seeds = [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as err:
        raise ConfigError("seeds", f"expected comma-separated integers, got {text!r}") from err
    if not seeds:
        raise ConfigError("seeds", "seed list is empty")
    return seeds


def _load_config(args) -> RunConfig:
    if args.config is None:
        run_cfg = RunConfig.from_dict({})
    else:
        run_cfg = load_run_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["training.seed"] = args.seed
        overrides["generator.seed"] = args.seed
    if getattr(args, "reduction", None) is not None:
        overrides["training.reduction"] = args.reduction
    return run_cfg.with_overrides(overrides) if overrides else run_cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairgad",
        description="fairness-aware unsupervised graph anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", default=None, help="run config JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override all seeds")
        p.add_argument("--reduction", choices=["mean", "sum"], default=None)
        p.add_argument("--jobs", type=int, default=_default_jobs(),
                       help="worker pool size for multi-run commands")
        if data:
            p.add_argument("--data", required=True, help="dataset directory")

    p_gen = sub.add_parser("generate", help="write a synthetic dataset")
    common(p_gen, data=False)
    p_gen.set_defaults(func=cmd_generate)

    p_train = sub.add_parser("train", help="train and evaluate one run")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate stored scores against labels")
    common(p_eval)
    p_eval.add_argument("--scores", required=True, help="scores.csv from a run")
    p_eval.add_argument("--contamination", type=float, default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="run every variant across seeds")
    common(p_abl)
    p_abl.add_argument("--seeds", default="0,1,2,3,4,5,6,7,8,9",
                       help="comma-separated seed list")
    p_abl.set_defaults(func=cmd_ablate)

    p_sweep = sub.add_parser("sweep", help="hyperparameter grid sweep")
    common(p_sweep)
    p_sweep.add_argument("--spec", required=True, help="sweep spec JSON")
    p_sweep.set_defaults(func=cmd_sweep)

    p_base = sub.add_parser("baseline", help="reconstruction baseline with a regularizer")
    common(p_base)
    p_base.add_argument("--reg", required=True, help=f"one of {', '.join(REGULARIZERS)}")
    p_base.set_defaults(func=cmd_baseline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, BaselineError, MetricError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
