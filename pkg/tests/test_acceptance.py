"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line (also printed in the pytest
terminal summary); the assertion uses the criterion's own tolerance.
Run directly with ``python tests/test_acceptance.py`` to get only the lines.
"""
import os
import random
import sys
import time
import warnings
from dataclasses import replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from alacpd.data import Segment, SyntheticSpec, generate_synthetic, load_series, standardize
from alacpd.detector import Detector, EnsembleConfig, Outcome, run, with_ablation
from alacpd.experiments import matched_within, piecewise_spec, run_seeds, spiky_spec
from alacpd.metrics import AnnotationSet, MatchConfig, covering, f1_score
from alacpd.taenet import AscLstmCell, gradcheck_suite

from harness import TINY, expected_change_points, scripted
from oracles import brute_covering, brute_f1, plain_lstm

pytestmark = pytest.mark.filterwarnings("ignore:.*never fires")

RESULTS = {}
SEEDS = range(10)
MARGIN = 10


def record(k, title, passed, detail):
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    line = f"criterion {k:>2} {status}  {title}: {detail}"
    RESULTS[k] = line
    print(line)
    return passed


# -- shared fixtures ---------------------------------------------------------------


@lru_cache(maxsize=None)
def piecewise_runs(variant):
    jobs = []
    for seed in SEEDS:
        series, truth = generate_synthetic(piecewise_spec(seed))
        jobs.append((series, truth, seed))
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        runs = run_seeds(jobs, with_ablation(EnsembleConfig(), variant), margin=MARGIN)
    return runs, time.perf_counter() - t0


# -- criteria ----------------------------------------------------------------------


def test_c01_gradient_correctness():
    t0 = time.perf_counter()
    results = gradcheck_suite(8, seed=2024, epsilon=1e-5)
    dt = time.perf_counter() - t0
    worst = max(r["max_rel_error"] for r in results)
    grid = {(c["config"]["hidden"], c["config"]["window"], c["config"]["n_dims"], c["config"]["skip"]) for c in results}
    ok = worst < 1e-4 and dt < 30 and len(results) >= 5
    record(1, "gradient check", ok, f"{len(results)} configs ({len(grid)} distinct U,w,D,S), max rel error {worst:.2e} < 1e-4, {dt:.1f} s")
    assert ok


def test_c02_skip_degeneracy():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst, cases = 0.0, 0
    for w in (3, 4, 6):
        for skip in (w, w + 1, w + 4):
            for n_in, hidden in ((1, 2), (3, 4), (2, 20)):
                cell = AscLstmCell(n_in, hidden, skip, rng)
                cell.alpha_raw.value[...] = rng.normal(scale=2.0)
                x = rng.normal(size=(w, n_in))
                H, _ = cell.forward(x)
                worst = max(worst, float(np.max(np.abs(H - plain_lstm(x, cell.weight.value, cell.bias.value)))))
                cases += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 1.0
    record(2, "skip degeneracy", ok, f"{cases} cells with S >= w, max |ASC - plain LSTM| {worst:.1e} <= 1e-10, {dt:.2f} s")
    assert ok


def test_c03_metric_oracles():
    t0 = time.perf_counter()
    rng = random.Random(3)
    cov_err, f1_mismatch = 0.0, 0
    for _ in range(200):
        n = rng.randint(2, 20)
        pred = rng.sample(range(n), rng.randint(0, min(3, n)))
        anns = [rng.sample(range(n), rng.randint(0, min(3, n))) for _ in range(rng.randint(1, 3))]
        margin = rng.randint(0, 5)
        ann = AnnotationSet("r", n, {str(i + 1): a for i, a in enumerate(anns)})
        cov_err = max(cov_err, abs(covering(pred, ann, n) - brute_covering(pred, anns, n)))
        for trivial in (True, False):
            if tuple(f1_score(pred, ann, MatchConfig(margin, trivial))) != brute_f1(pred, anns, margin, trivial):
                f1_mismatch += 1
    dt = time.perf_counter() - t0
    ok = cov_err <= 1e-12 and f1_mismatch == 0 and dt < 10
    record(3, "metric oracles", ok, f"200 instances, covering max err {cov_err:.1e}, F1 mismatches {f1_mismatch}, {dt:.2f} s")
    assert ok


def test_c04_worked_metric_values():
    cov = covering([], AnnotationSet.single([5], 10), 10)
    f = f1_score([11], AnnotationSet.single([10, 20], 30), MatchConfig(5, include_trivial_start=False))
    ok = cov == 0.5 and f.f1 == 2 / 3 and (f.precision, f.recall) == (1.0, 0.5)
    record(4, "worked metric values", ok, f"covering {cov!r} (0.5), F1 {f.f1!r} (2/3)")
    assert ok


def test_c05_synthetic_detection():
    runs, dt = piecewise_runs("full")
    good = 0
    parts = []
    for r in runs:
        hits, fp = matched_within(r.truth, r.report.change_points, MARGIN)
        good += hits == len(r.truth) and fp <= 1
        parts.append(f"s{r.seed}:{r.report.change_points}")
    ok = good >= 8 and dt < 300
    record(5, "synthetic detection", ok, f"{good}/10 seeds hit both change-points within {MARGIN} with <= 1 false positive (need 8), {dt:.0f} s")
    print("   ", " ".join(parts))
    assert ok


def test_c06_anomaly_robustness():
    t0 = time.perf_counter()
    counts, spikes = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for seed in SEEDS:
            spec = spiky_spec(seed)
            idx = sorted(i for i, _ in spec.spikes)
            runs = [i for i in idx if i - 1 not in idx]
            lengths = [1 + (i + 1 in idx) for i in runs]
            assert max(lengths) < EnsembleConfig().n_cpd
            spikes.append(len(runs))
            series, _ = generate_synthetic(spec)
            counts.append(len(run(series, EnsembleConfig(), seed=seed).change_points))
    dt = time.perf_counter() - t0
    ok = all(c == 0 for c in counts) and dt < 120
    record(6, "anomaly robustness", ok,
           f"change-points per seed {counts} (need all 0), {sum(spikes)} spike runs of 1-2 samples, 5 sd on 4/64 dims, {dt:.0f} s")
    assert ok


def test_c07_delay_bound():
    t0 = time.perf_counter()
    rng = random.Random(11)
    bad = emissions = 0
    for _ in range(50):
        n_cpd = rng.randint(1, 5)
        flags = [rng.random() < rng.choice((0.3, 0.6, 0.9)) for _ in range(rng.randint(5, 80))]
        det = scripted(flags, replace(TINY, n_cpd=n_cpd))
        start = det.t + 1
        got = []
        for _ in flags:
            r = det.step([0.0])
            if r.outcome is Outcome.CHANGE_POINT:
                got.append((r.t, r.change_point))
        emissions += len(got)
        bad += got != expected_change_points(flags, start, n_cpd) or any(t - cp != n_cpd for t, cp in got)
    dt = time.perf_counter() - t0
    ok = bad == 0 and emissions > 0 and dt < 1.0
    record(7, "delay bound", ok, f"50 flag sequences, {emissions} emissions, {bad} with delay != n_cpd, {dt:.2f} s")
    assert ok


def test_c08_bounded_retention():
    t0 = time.perf_counter()
    n, D = 10_000, 64
    rng = np.random.default_rng(8)
    means = [np.zeros(D)]
    for _ in range(4):
        means.append(means[-1] + 3.0 * rng.choice([-1.0, 1.0], size=D))
    spec = SyntheticSpec(tuple(Segment(2000, m.tolist(), 1.0, 0.5) for m in means), n_dims=D, seed=8)
    series, _ = generate_synthetic(spec)
    cfg = EnsembleConfig()
    n_init = cfg.resolve_n_init(n)
    values, _ = standardize(series, "init_prefix", n_init)
    values = values.values
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        det = Detector(cfg, D, seed=0)
        det.initialize(values[:n_init])
    peak_buffer = peak_recent = 0
    for x in values[n_init:]:
        det.step(x)
        peak_buffer = max(peak_buffer, len(det.anomaly_buffer))
        peak_recent = max(peak_recent, len(det.recent))
    dt = time.perf_counter() - t0
    bound = max(cfg.n_cpd, n_init)
    context = det.models[0].config.context_length
    ok = det.max_retained <= bound and peak_buffer <= bound and peak_recent <= context and dt < 300
    record(8, "bounded retention", ok,
           f"n={n}, D={D}: peak buffered windows {det.max_retained} <= max(n_cpd, n_init)={bound}, "
           f"sample ring {peak_recent} <= {context}, {len(det.change_points)} change-points, {dt:.0f} s")
    assert ok


BENCH_DIR = Path(os.environ.get("ALACPD_BENCHMARK_DIR", Path(__file__).parent / "data" / "benchmark"))


def _benchmark_pair(name):
    data = BENCH_DIR / f"{name}.json"
    ann = BENCH_DIR / f"{name}_annotations.json"
    if not (data.exists() and ann.exists()):
        return None
    return load_series(data), AnnotationSet.load(ann)


def test_c09_benchmark_reproduction():
    pairs = {name: _benchmark_pair(name) for name in ("run_log", "apple")}
    if any(v is None for v in pairs.values()):
        record(9, "benchmark reproduction (informational)", None,
               f"not measured: run_log/apple files absent from {BENCH_DIR} (set ALACPD_BENCHMARK_DIR)")
        pytest.skip("public benchmark files not available")
    t0 = time.perf_counter()
    scores = {}
    for name, (series, ann) in pairs.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            reps = [run(series, EnsembleConfig(), seed=s) for s in SEEDS]
        scores[name] = (
            float(np.mean([covering(r.change_points, ann, series.n) for r in reps])),
            float(np.mean([f1_score(r.change_points, ann, MatchConfig(5)).f1 for r in reps])),
        )
    dt = time.perf_counter() - t0
    ok = scores["run_log"][0] >= 0.60 and abs(scores["apple"][1] - 0.761) <= 0.15
    record(9, "benchmark reproduction (informational)", ok,
           f"run_log covering {scores['run_log'][0]:.3f} (>= 0.60), apple F1 {scores['apple'][1]:.3f} "
           f"(0.761 +/- 0.15), {dt:.0f} s")
    if not ok:
        pytest.xfail("informational criterion")


def test_c10_ablation_direction():
    means = {}
    total = 0.0
    for variant in ("full", "no_ar", "no_ae"):
        runs, dt = piecewise_runs(variant)
        total += dt
        means[variant] = float(np.mean([r.covering for r in runs]))
    ok = all(means["full"] >= means[v] - 0.05 for v in ("no_ar", "no_ae")) and total < 600
    record(10, "ablation direction", ok,
           "mean covering " + ", ".join(f"{k} {v:.3f}" for k, v in means.items()) + f" (full >= others - 0.05), {total:.0f} s")
    assert ok


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except (AssertionError, pytest.skip.Exception, pytest.xfail.Exception):
                pass
