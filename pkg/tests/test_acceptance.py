"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 7, 8 and 10 run full synthetic experiments and take minutes.
"""

from __future__ import annotations

import datetime as dt
import json
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import FIXTURE_LABELS, FIXTURE_PROBA, fixture_forest
from oracles import brute_force_split, pairwise_auc, threshold_grid_oracle

from prognosis_forest.cli import main
from prognosis_forest.cohort import Cohort
from prognosis_forest.datasets import Dataset, build_day_datasets, concat, split_cohort
from prognosis_forest.ensemble import ET, RF, HyperConfig, best_split_rf, fit, fit_arrays, learn_imputation
from prognosis_forest.evaluation import evaluate
from prognosis_forest.metrics import roc_auc
from prognosis_forest.selection import SearchSpec, cross_validate, random_search, stratified_kfold
from prognosis_forest.synth import GeneratorSpec, generate
from prognosis_forest.uncertainty import find_uncertain_threshold

BOUNDARY = dt.date(2020, 3, 21)
N_SEEDS = 20


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def test_criterion_1_threshold_oracle(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = 0
    n_instances = 1000
    for _ in range(n_instances):
        m = int(rng.integers(1, 201))
        n = int(rng.integers(1, 1001))
        p_dead = rng.random(m)
        if rng.random() < 0.3:
            p_dead = np.round(p_dead * 10) / 10
        proba = np.column_stack([1 - p_dead, p_dead])
        labels = rng.integers(0, 2, m)
        max_u = float(rng.uniform(0.01, 0.99))
        res = find_uncertain_threshold(labels, proba, max_u, n)
        if (res.score, res.threshold) != threshold_grid_oracle(labels, proba, max_u, n):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60
    report(capsys, 1, ok, f"{n_instances} instances, {mismatches} mismatches, {elapsed:.1f}s (oracle included)")
    assert ok


def test_criterion_2_hand_trace(capsys):
    res = find_uncertain_threshold(FIXTURE_LABELS, FIXTURE_PROBA, max_u=0.3, n=10)
    ds = Dataset(["x"], [[0.0], [1.0], [2.0], [3.0]], FIXTURE_LABELS, list("abcd"))
    rep = evaluate(fixture_forest(threshold=res.threshold), ds, {"tool_version": "t", "config_hash": "h", "seed": 0})
    ok = (
        res.score == 1.0
        and abs(res.threshold - 0.55) < 1e-12
        and abs(rep.complete.macro_f2 - 0.7323) <= 1e-4
        and rep.uncertain_fraction == 0.25
    )
    report(
        capsys, 2, ok,
        f"score {res.score}, threshold {res.threshold:.4f}, complete macro-F2 "
        f"{rep.complete.macro_f2:.4f}, uncertain {rep.uncertain_fraction}",
    )
    assert ok


def test_criterion_3_split_oracle(capsys):
    rng = np.random.default_rng(33)
    bad = 0
    for _ in range(200):
        n = int(rng.integers(2, 31))
        k = int(rng.integers(1, 5))
        rows = np.round(rng.normal(size=(n, k)), int(rng.integers(0, 3)))
        labels = rng.integers(0, 2, n)
        got = best_split_rf(rows, labels)
        want = brute_force_split(rows, labels)
        if want is None:
            bad += got is not None
        else:
            bad += got is None or (got.feature, got.cut, got.impurity) != (want[0], want[1], float(want[2]))
    report(capsys, 3, bad == 0, f"200 datasets, {bad} disagreements with brute force")
    assert bad == 0


def test_criterion_4_auc_oracle(capsys):
    rng = np.random.default_rng(44)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 80))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = rng.integers(0, 6, n) / 5 if rng.random() < 0.5 else rng.random(n)
        worst = max(worst, abs(roc_auc(scores, labels) - pairwise_auc(scores, labels)))
    ok = worst <= 1e-12
    report(capsys, 4, ok, f"500 instances, max |rank - pairwise| = {worst:.2e}")
    assert ok


def test_criterion_5_ensemble_semantics(capsys):
    rng = np.random.default_rng(55)
    worst = 0.0
    for kind in (RF, ET):
        X = rng.normal(size=(150, 5))
        X[rng.random(X.shape) < 0.15] = np.nan
        y = (rng.random(150) < 0.35).astype(int)
        forest = fit_arrays(X, y, HyperConfig(kind, n_trees=25, max_features=2, min_samples_leaf=2, seed=5))
        Xi = forest.impute(X)
        per_tree = []
        for t in forest.trees:
            leaves = t.apply(Xi)
            c = t.counts[leaves]
            per_tree.append(c[:, 1] / (c[:, 0] + c[:, 1]))
        worst = max(worst, float(np.abs(forest.predict_proba(X)[:, 1] - np.mean(per_tree, axis=0)).max()))
    leaf_exact = True
    tree = fixture_forest().trees[0]
    for x, (a, d) in zip(range(4), [(9, 1), (9, 11), (2, 3), (1, 19)]):
        p = tree.predict_proba(np.array([[float(x)]]))[0]
        leaf_exact &= p[1] == d / (a + d) and p[0] == a / (a + d)
    ok = worst <= 1e-12 and leaf_exact
    report(capsys, 5, ok, f"mean-of-trees error {worst:.2e}, constructed leaves exact: {leaf_exact}")
    assert ok


def test_criterion_6_no_leakage(capsys):
    recs = generate(GeneratorSpec(n_patients=800, seed=6))
    cohort = Cohort(recs, BOUNDARY)
    split = split_cohort(cohort, 0.2, 6)
    problems = []
    for phase in ("hcp", "mcp"):
        for form in ("num", "cat"):
            pairs = build_day_datasets(cohort.phase_records(phase), split, phase, form)
            train_ids = set().union(*(set(tr.patient_ids) for tr, _ in pairs.values()))
            test_ids = set().union(*(set(te.patient_ids) for _, te in pairs.values()))
            if train_ids & test_ids:
                problems.append(f"{phase}/{form}: {len(train_ids & test_ids)} shared patients")

    train, test = build_day_datasets(cohort.phase_records("hcp"), split, "hcp", "num", ("4",))["4"]
    folds = stratified_kfold(train.labels, 5, 1)
    fitted = []

    def spy(ds, config):
        forest = fit(ds, config)
        fitted.append((set(ds.patient_ids), forest.imputation_values.copy()))
        return forest

    config = HyperConfig(RF, n_trees=3, max_features=4, imputation="mean", seed=2)
    cross_validate(train, config, folds, fit_fn=spy)
    for (ids, _), valid in zip(fitted, folds):
        if ids & {train.patient_ids[i] for i in valid}:
            problems.append("a CV fold fitted on its own validation rows")

    # fill values come from the fitting rows alone
    for strategy in ("mean", "median"):
        model = fit(train, HyperConfig(RF, n_trees=2, max_features=3, imputation=strategy, seed=1))
        if not np.array_equal(model.imputation_values, learn_imputation(train.rows, strategy)):
            problems.append(f"{strategy} fill values not learned from the training rows")
    # perturbing a fold's validation rows must leave that fold's fill values unchanged
    before = [v for _, v in fitted]
    for k, valid in enumerate(folds):
        fitted.clear()
        perturbed = Dataset(train.feature_names, train.rows.copy(), train.labels, train.patient_ids)
        perturbed.rows[valid] = perturbed.rows[valid] * 50 + 3
        cross_validate(perturbed, config, [valid], fit_fn=spy)
        if not np.array_equal(fitted[0][1], before[k]):
            problems.append(f"fold {k} fill values moved when its validation rows changed")
    ok = not problems
    report(capsys, 6, ok, "split, fold and imputation audits clean" if ok else "; ".join(problems))
    assert ok


@pytest.fixture(scope="module")
def seeded_runs():
    """Per seed: phase-specific models on HCP/MCP x day 2/end plus pooled models on MCP."""
    runs = []
    for seed in range(N_SEEDS):
        spec = GeneratorSpec(n_patients=2000, drift_factor=2.0, base_mortality=0.11, seed=seed)
        cohort = Cohort(generate(spec), BOUNDARY)
        split = split_cohort(cohort, 0.2, seed)
        pairs = {
            ph: build_day_datasets(cohort.phase_records(ph), split, ph, "num", ("2", "end"))
            for ph in ("hcp", "mcp")
        }
        search = SearchSpec(n_configs=8, seed=seed)
        views, drift = [], []
        for ph in ("hcp", "mcp"):
            for day, (train, test) in pairs[ph].items():
                rep = evaluate(random_search(train, search).forest, test)
                views.append((rep.complete.macro_f2, rep.no_uncertain.macro_f2, rep.uncertain_fraction))
                if ph == "mcp":
                    pooled = concat([pairs["hcp"][day][0], train])
                    rep_pooled = evaluate(random_search(pooled, search).forest, test)
                    drift.append(rep.complete.macro_f2 - rep_pooled.complete.macro_f2)
        runs.append({"views": np.array(views), "drift": drift})
    return runs


def test_criterion_7_reject_option_benefit(capsys, seeded_runs):
    wins = 0
    unc = []
    for run in seeded_runs:
        v = run["views"]
        wins += v[:, 1].mean() >= v[:, 0].mean()
        unc.append(v[:, 2].mean())
    rate = wins / len(seeded_runs)
    ok = rate >= 0.8 and np.mean(unc) <= 0.30
    report(
        capsys, 7, ok,
        f"F2-U >= F2 in {wins}/{len(seeded_runs)} runs ({rate:.0%}), mean uncertain {np.mean(unc):.3f}",
    )
    assert ok


def test_criterion_8_concept_drift_benefit(capsys, seeded_runs):
    diffs = np.array([d for run in seeded_runs for d in run["drift"]])
    ok = diffs.mean() >= 0
    report(capsys, 8, ok, f"phase-specific minus pooled MCP macro-F2: mean {diffs.mean():+.4f} over {len(diffs)} pairs")
    assert ok


def _artifact_bytes(out: Path) -> dict:
    files = sorted((out / "models").glob("*.json")) + [out / "summary.csv", out / "summary.md"]
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in files}


def test_criterion_9_determinism(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 9, "generator": {"n_patients": 500}, "n_configs": 4}))
    outs = []
    for run, threads in enumerate((1, 4, 1)):
        out = tmp_path / f"run{run}"
        assert main(["--config", str(cfg), "--threads", str(threads), "--out-dir", str(out), "pipeline"]) == 0
        outs.append(_artifact_bytes(out))
    ok = outs[0] == outs[1] == outs[2] and len(outs[0]) == 14
    report(capsys, 9, ok, f"{len(outs[0])} files byte-identical across threads 1, 4, 1: {ok}")
    assert ok


def test_criterion_10_desk_scale_runtime(capsys, tmp_path):
    out = tmp_path / "full"
    t0 = time.perf_counter()
    status = main(["--seed", "10", "--threads", "4", "--out-dir", str(out), "pipeline", "--configs", "64"])
    minutes = (time.perf_counter() - t0) / 60
    n_models = len(list((out / "models").glob("*.json")))
    ok = status == 0 and n_models == 12 and (out / "summary.csv").is_file() and minutes < 30
    report(capsys, 10, ok, f"2000 patients, 64 configs/search: {n_models} models in {minutes:.1f} min")
    assert ok
