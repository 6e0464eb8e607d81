"""Command line entry point: detect, eval, bench, synth, gradcheck.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .data import DataError, generate_synthetic, load_series, read_synthetic_spec, to_benchmark_json
from .detector import ABLATIONS, ConfigError, DetectorError, EnsembleConfig, run, with_ablation
from .metrics import AnnotationSet, MatchConfig, MetricError, average_rank, covering, f1_score
from .ndcore import activation, activation_grad
from .taenet import gradcheck_suite

log = logging.getLogger("alacpd")

GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    def __init__(self, message: str, stage: str):
        super().__init__(message)
        self.stage = stage


# -- config files ----------------------------------------------------------------

# flat key = value names, as the hyperparameters are usually written down
CONFIG_KEYS = {
    "w": ("window", int),
    "U": ("hidden", int),
    "h": ("horizon", int),
    "C": ("threshold_coef", float),
    "beta": ("beta", float),
    "n_cpd": ("n_cpd", int),
    "n_init": ("n_init", int),
    "n_init_frac": ("n_init_frac", float),
    "e_init": ("e_init", int),
    "e_train": ("e_train", int),
    "e_reinit": ("e_reinit", int),
    "lr": ("learning_rate", float),
    "C_grace_mult": ("grace_multiplier", float),
    "grace_len": ("grace_length", int),
}


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    standardization: Optional[str] = "init_prefix"


def read_config(path) -> RunConfig:
    """Parse a ``key = value`` file (``#`` starts a comment)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}", "config") from None
    overrides = {}
    n_models = None
    standardization = "init_prefix"
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'", "config")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in CONFIG_KEYS:
                name, conv = CONFIG_KEYS[key]
                overrides[name] = conv(value)
            elif key == "S":
                overrides["skip_sizes"] = tuple(int(v) for v in value.replace(",", " ").split())
            elif key == "M":
                n_models = int(value)
            elif key == "standardize":
                standardization = None if value == "none" else value
            elif key == "reset_on_change":
                overrides["reset_on_change"] = _parse_bool(value)
            else:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}", "config")
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}", "config") from None
    if n_models is not None:
        skips = overrides.get("skip_sizes")
        if skips is None:
            overrides["skip_sizes"] = tuple(3 + 2 * k for k in range(n_models))
        elif len(skips) != n_models:
            raise UsageError(f"{path}: M={n_models} but {len(skips)} skip sizes given", "config")
    if standardization not in (None, "init_prefix", "full_series"):
        raise UsageError(f"{path}: standardize must be init_prefix, full_series or none", "config")
    try:
        return RunConfig(replace(EnsembleConfig(), **overrides), standardization)
    except ConfigError as exc:
        raise UsageError(f"{path}: {exc}", "config") from None


def config_to_json(rc: RunConfig) -> dict:
    doc = asdict(rc.ensemble)
    doc["skip_sizes"] = list(doc["skip_sizes"])
    doc["standardization"] = rc.standardization or "none"
    return doc


# -- detect ----------------------------------------------------------------------


def _detect_one(args):
    series, cfg, seed, standardization, trace = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return seed, run(series, cfg, seed=seed, standardization=standardization, trace=trace)


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def detect_dataset(data_path, rc: RunConfig, seeds: list[int], ablation: str, trace: bool, workers: int):
    try:
        series = load_series(data_path)
    except DataError as exc:
        raise UsageError(str(exc), "load") from None
    cfg = with_ablation(rc.ensemble, ablation)
    jobs = [(series, cfg, s, rc.standardization, trace) for s in seeds]
    try:
        results = _map(_detect_one, jobs, workers)
    except ConfigError as exc:
        raise UsageError(str(exc), "detect") from None
    return series, cfg, results


def cmd_detect(args) -> int:
    rc = read_config(args.config) if args.config else RunConfig()
    if args.standardize:
        rc.standardization = None if args.standardize == "none" else args.standardize
    seeds = [args.seed + k for k in range(args.seeds)]
    out = Path(args.out)
    for data_path in args.data:
        series, cfg, results = detect_dataset(data_path, rc, seeds, args.ablation, args.trace, args.workers)
        per_seed = {}
        for seed, rep in results:
            doc = rep.to_json(series.name, seed)
            _write_json(out / f"{series.name}.seed{seed}.json", doc)
            per_seed[str(seed)] = rep.change_points
        union = sorted(set().union(*(set(v) for v in per_seed.values())))
        summary = {
            "dataset": series.name,
            "variant": cfg.variant,
            "seeds": seeds,
            "change_points": per_seed,
            "union": union,
            "config": config_to_json(replace(rc, ensemble=cfg)),
        }
        _write_json(out / f"{series.name}.summary.json", summary)
        print(json.dumps({"dataset": series.name, "variant": cfg.variant, "change_points": per_seed}))
    return 0


# -- eval ------------------------------------------------------------------------


def read_predictions(pred_path) -> list[dict]:
    pred_path = Path(pred_path)
    if pred_path.is_dir():
        files = sorted(p for p in pred_path.glob("*.json") if not p.name.endswith(".summary.json"))
    elif pred_path.exists():
        files = [pred_path]
    else:
        raise UsageError(f"prediction path not found: {pred_path}", "eval")
    docs = []
    for f in files:
        try:
            doc = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{f}: invalid JSON ({exc})", "eval") from None
        if isinstance(doc, dict) and "change_points" in doc and "seed" in doc:
            docs.append(doc)
    return docs


def score_predictions(docs: list[dict], ann: AnnotationSet, match: MatchConfig) -> dict:
    rows = []
    for doc in sorted(docs, key=lambda d: d["seed"]):
        f = f1_score(doc["change_points"], ann, match)
        rows.append({
            "seed": doc["seed"],
            "covering": covering(doc["change_points"], ann, ann.n),
            "f1": f.f1,
            "precision": f.precision,
            "recall": f.recall,
        })
    mean = {k: float(np.mean([r[k] for r in rows])) for k in ("covering", "f1", "precision", "recall")}
    return {
        "dataset": ann.dataset,
        **mean,
        "margin": match.margin,
        "trivial_start": match.include_trivial_start,
        "seeds": rows,
        "mean": mean,
    }


def cmd_eval(args) -> int:
    try:
        ann = AnnotationSet.load(args.annotations)
    except (MetricError, json.JSONDecodeError) as exc:
        raise UsageError(str(exc), "annotations") from None
    docs = read_predictions(args.pred)
    if args.dataset:
        docs = [d for d in docs if d.get("dataset") == args.dataset]
    if not docs:
        raise UsageError(f"no detection files found in {args.pred}", "eval")
    names = {d.get("dataset") for d in docs}
    if names != {ann.dataset}:
        raise UsageError(
            f"dataset mismatch: predictions for {sorted(map(str, names))}, annotations for {ann.dataset!r}",
            "eval",
        )
    match = MatchConfig(args.margin, not args.no_trivial_start)
    try:
        report = score_predictions(docs, ann, match)
    except MetricError as exc:
        raise UsageError(str(exc), "eval") from None
    text = json.dumps(report, indent=2)
    if args.out:
        _write_json(Path(args.out), report)
    print(text)
    return 0


# -- bench -----------------------------------------------------------------------


def cmd_bench(args) -> int:
    manifest_path = Path(args.manifest)
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise UsageError(f"manifest not found: {manifest_path}", "bench") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{manifest_path}: invalid JSON ({exc})", "bench") from None
    base = manifest_path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    rc = read_config(resolve(manifest["config"])) if manifest.get("config") else RunConfig()
    if "standardize" in manifest:
        rc.standardization = None if manifest["standardize"] == "none" else manifest["standardize"]
    variants = manifest.get("variants", ["full"])
    for v in variants:
        if v not in ABLATIONS:
            raise UsageError(f"unknown variant {v!r}", "bench")
    first = int(manifest.get("seed", 0))
    seeds = [first + k for k in range(int(manifest.get("seeds", 10)))]
    match = MatchConfig(int(manifest.get("margin", 5)), bool(manifest.get("trivial_start", True)))
    out = resolve(manifest.get("out", "bench_out")) if not args.out else Path(args.out)
    workers = int(manifest.get("workers", args.workers))

    table = {}
    cover_scores = {}
    f1_scores = {}
    for entry in manifest.get("datasets", []):
        try:
            ann = AnnotationSet.load(resolve(entry["annotations"]))
        except (MetricError, KeyError) as exc:
            raise UsageError(f"bad annotations entry: {exc}", "bench") from None
        for variant in variants:
            series, cfg, results = detect_dataset(resolve(entry["data"]), rc, seeds, variant, False, workers)
            if series.name != ann.dataset:
                raise UsageError(f"dataset mismatch: {series.name!r} vs annotations {ann.dataset!r}", "bench")
            docs = [rep.to_json(series.name, seed) for seed, rep in results]
            scores = score_predictions(docs, ann, match)
            table.setdefault(series.name, {})[cfg.variant] = {
                "covering": scores["covering"],
                "f1": scores["f1"],
                "precision": scores["precision"],
                "recall": scores["recall"],
                "change_points": {str(d["seed"]): d["change_points"] for d in docs},
            }
            cover_scores.setdefault(cfg.variant, {})[series.name] = scores["covering"]
            f1_scores.setdefault(cfg.variant, {})[series.name] = scores["f1"]
    if not table:
        raise UsageError("manifest lists no datasets", "bench")
    ranks = {"covering": average_rank(cover_scores), "f1": average_rank(f1_scores)}
    report = {
        "seeds": seeds,
        "margin": match.margin,
        "config": config_to_json(rc),
        "datasets": table,
        "average_rank": ranks,
    }
    _write_json(out / "bench_report.json", report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "method", "mean_rank"])
    for metric, r in ranks.items():
        for method in sorted(r):
            w.writerow([metric, method, repr(r[method])])
    (out / "bench_ranks.csv").write_text(buf.getvalue())
    print(json.dumps({"average_rank": ranks, "report": str(out / "bench_report.json")}))
    return 0


# -- synth -----------------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        spec = read_synthetic_spec(args.spec)
        series, truth = generate_synthetic(spec)
    except (DataError, ValueError) as exc:
        raise UsageError(str(exc), "synth") from None
    out = Path(args.out)
    _write_json(out, to_benchmark_json(series))
    ann_path = out.with_name(out.stem + "_annotations.json")
    _write_json(ann_path, AnnotationSet.single(truth, series.n, series.name).to_json())
    print(json.dumps({"dataset": series.name, "n": series.n, "n_dims": series.n_dims,
                      "change_points": truth, "data": str(out), "annotations": str(ann_path)}))
    return 0


# -- gradcheck -------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    x = rng.normal(scale=3.0, size=1000)
    eps = 1e-5
    act_err = {}
    for kind in ("tanh", "sigmoid", "identity"):
        numeric = (activation(kind, x + eps) - activation(kind, x - eps)) / (2 * eps)
        act_err[kind] = float(np.max(np.abs(numeric - activation_grad(kind, x))))
    results = gradcheck_suite(args.configs, args.seed, eps)
    worst = max(r["max_rel_error"] for r in results)
    passed = worst < GRADCHECK_TOL and max(act_err.values()) < 1e-7
    print(json.dumps({"activation_max_abs_error": act_err, "configs": results,
                      "max_rel_error": worst, "tolerance": GRADCHECK_TOL, "passed": passed}, indent=2))
    return 0 if passed else 1


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="alacpd", description="Online change-point detection with a TAEnet ensemble.")
    sub = ap.add_subparsers(dest="command", required=True)
    default_workers = os.cpu_count() or 1

    p = sub.add_parser("detect", help="run the detector on one or more datasets")
    p.add_argument("--data", required=True, nargs="+", help="benchmark JSON or CSV file(s)")
    p.add_argument("--config", help="key = value hyperparameter file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=10, help="number of consecutive seeds")
    p.add_argument("--ablation", choices=sorted(ABLATIONS), default="full")
    p.add_argument("--standardize", choices=["init_prefix", "full_series", "none"])
    p.add_argument("--trace", action="store_true", help="also store per-step losses and thresholds")
    p.add_argument("--workers", type=int, default=default_workers)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score detection files against annotations")
    p.add_argument("--pred", required=True, help="directory of detection JSON files (or one file)")
    p.add_argument("--annotations", required=True)
    p.add_argument("--margin", type=int, default=5)
    p.add_argument("--no-trivial-start", action="store_true")
    p.add_argument("--dataset", help="only score files for this dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="multi-dataset, multi-seed runs with rank aggregation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="override the manifest's output directory")
    p.add_argument("--workers", type=int, default=default_workers)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic dataset and its annotations")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference verification of the gradients")
    p.add_argument("--configs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def _fail(stage: str, message: str, code: int) -> int:
    print(json.dumps({"error": message, "stage": stage, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(exc.stage, str(exc), 2)
    except (DataError, MetricError, ConfigError) as exc:
        return _fail(args.command, str(exc), 2)
    except DetectorError as exc:
        return _fail("detect", str(exc), 1)
    except Exception as exc:  # noqa: BLE001 - last-resort structured report
        return _fail(args.command, f"{type(exc).__name__}: {exc}", 1)


if __name__ == "__main__":
    sys.exit(main())
