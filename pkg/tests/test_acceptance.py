"""Acceptance suite: one test per headline criterion.

Each test records a one-line PASS/FAIL verdict; the lines are printed in the
pytest terminal summary (and directly when run as a script).
"""

import csv
import json
import time
from datetime import date
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from insider_forest import dataset as ds
from insider_forest.cli import main as cli_main
from insider_forest.errors import MalformedXml, MissingRequiredField
from insider_forest.evaluate import ConfusionMatrix, SearchSpace, metrics, roc_auc
from insider_forest.experiment import ExperimentConfig, run_experiments
from insider_forest.forest import HyperParams, audit_tree, fit_arrays, fit_forest, gini_impurity, predict_batch
from insider_forest.form4 import (
    DefendantList,
    Label,
    Transaction,
    label_transactions,
    levenshtein,
    levenshtein_similarity,
    normalize_name,
    parse_form4,
    transactions_csv,
)
from insider_forest.importance import decorrelated_permutation_importance, permutation_importance
from insider_forest.linalg import symmetric_eigen
from insider_forest.pca import fit_pca, transform

from oracles import auc_pairs, cart_oracle

FIXTURES = Path(__file__).parent / "fixtures"
VERDICTS: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    VERDICTS[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(VERDICTS[number])
    assert ok, VERDICTS[number]


def test_criterion_01_metric_identities():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        tp, fn, fp, tn = (int(v) for v in rng.integers(1, 10**6, 4))
        r = metrics(ConfusionMatrix(tp, fn, fp, tn))
        n = tp + fn + fp + tn
        worst = max(
            worst,
            abs(r.tpr + r.fnr - 1), abs(r.fpr + r.tnr - 1),
            abs(r.acc - (tp + tn) / n), abs(r.pre - tp / (tp + fp)),
            abs(r.tpr - tp / (tp + fn)), abs(r.fpr - fp / (fp + tn)),
        )
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-12 and elapsed < 1.0, f"max identity error {worst:.1e}, {elapsed:.3f}s for 1000 matrices")


def test_criterion_02_eigen_and_pca():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst_orth = worst_rec = worst_evr = worst_cov = 0.0
    for _ in range(200):
        dim = int(rng.integers(1, 51))
        a = rng.standard_normal((dim, dim))
        a = 0.5 * (a + a.T)
        e = symmetric_eigen(a)
        norm = np.linalg.norm(a)
        worst_orth = max(worst_orth, np.abs(e.vectors.T @ e.vectors - np.eye(dim)).max())
        worst_rec = max(worst_rec, np.abs(e.vectors @ np.diag(e.values) @ e.vectors.T - a).max() / norm)
        x = rng.standard_normal((dim + 20, dim)) @ rng.standard_normal((dim, dim))
        model = fit_pca(x)
        worst_evr = max(worst_evr, abs(model.evr.sum() - 1.0))
        s = transform(model, x, dim)
        cov = s.T @ s / x.shape[0]
        worst_cov = max(worst_cov, np.abs(cov - np.diag(model.eigenvalues)).max())
    elapsed = time.perf_counter() - start
    ok = worst_orth <= 1e-7 and worst_rec <= 1e-7 and worst_evr <= 1e-9 and worst_cov <= 1e-8 and elapsed < 30
    record(2, ok, f"orth {worst_orth:.1e}, recon/|A| {worst_rec:.1e}, evr {worst_evr:.1e}, "
                  f"score cov {worst_cov:.1e}, {elapsed:.1f}s")


def test_criterion_03_forest_matches_cart_oracle():
    rng = np.random.default_rng(3)
    one_tree = HyperParams(ntrees=1, mtry_fraction=1.0, bootstrap=False)
    checked = mismatches = gini_off = 0

    def exhaustive(n, m):
        # every binary table with n rows, m features and both labels present
        for code in range(2 ** (n * (m + 1))):
            bits = np.array([(code >> i) & 1 for i in range(n * (m + 1))]).reshape(n, m + 1)
            if bits[:, m].min() != bits[:, m].max():
                yield bits[:, :m].astype(float), bits[:, m]

    def sampled(n, m, count=120):
        for _ in range(count):
            x = rng.integers(0, 2, (n, m)).astype(float)
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            yield x, y

    shapes = [(n, m, exhaustive(n, m)) for n, m in ((2, 1), (3, 1), (4, 1), (2, 2), (3, 2), (4, 2), (2, 3), (3, 3))]
    shapes += [(n, m, sampled(n, m)) for n in range(5, 13) for m in range(1, 4)]
    for n, m, tables in shapes:
        for x, y in tables:
            model = fit_arrays(x, y, one_tree)
            oracle = cart_oracle(x, y)
            mismatches += predict_batch(model, x)[0].tolist() != [oracle(r) for r in x]
            tree = model.trees[0]
            audit_tree(tree)
            for c0, c1 in tree.counts:
                tot = c0 + c1
                plain = (c0 / tot) * (1 - c0 / tot) + (c1 / tot) * (1 - c1 / tot)
                exact = sum(Fraction(int(c), int(tot)) * (1 - Fraction(int(c), int(tot))) for c in (c0, c1))
                g = gini_impurity((c0, c1))
                gini_off += g != plain or abs(g - float(exact)) > 1e-15
            checked += 1
    record(3, mismatches == 0 and gini_off == 0,
           f"{checked} datasets (all tables for n<=4 and m<=2 or n<=3 and m=3, sampled up to n=12): {mismatches} prediction mismatches, {gini_off} Gini mismatches")


@pytest.mark.slow
def test_criterion_04_pipeline_power():
    cfg = ExperimentConfig(
        source={"type": "synthetic", "m": 25, "n_informative": 5, "class_separation": 6.0},
        n_transactions=3984, reps=10, seed=7,
    )
    start = time.perf_counter()
    res = run_experiments(cfg)
    elapsed = time.perf_counter() - start
    acc = np.mean(res.metric_values("acc"))
    gaps = [abs(o.oob_error - (1 - o.report.acc)) for o in res.ok]
    ok = len(res.ok) == 10 and acc >= 0.95 and max(gaps) <= 0.05 and elapsed < 300
    record(4, ok, f"mean test ACC {acc:.4f}, max |OOB - test error| {max(gaps):.4f}, {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_05_variance_reduction():
    cfg = ExperimentConfig(
        source={"type": "synthetic", "m": 25, "n_informative": 5, "class_separation": 0.5},
        n_transactions=320, seed=7,
        search=SearchSpace(ntrees=(50, 100), n_iterations=2, k_folds=3),
    )
    res = run_experiments(cfg, reps=100)
    acc = np.array(res.metric_values("acc"))
    sem10 = acc[:10].std(ddof=1) / np.sqrt(10)
    sem100 = acc.std(ddof=1) / np.sqrt(100)
    record(5, sem100 < sem10,
           f"std of mean accuracy {100 * sem10:.2f} -> {100 * sem100:.2f} pts (10 -> 100 reps); "
           f"per-rep std {100 * acc[:10].std(ddof=1):.2f} vs {100 * acc.std(ddof=1):.2f}")


def test_criterion_06_auc_oracle():
    rng = np.random.default_rng(6)
    worst, cases = 0.0, 0
    while cases < 500:
        n = int(rng.integers(2, 201))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            continue
        s = rng.integers(0, int(rng.integers(1, 20)) + 1, n) / 20.0  # coarse grid forces ties
        worst = max(worst, abs(roc_auc(y, s) - auc_pairs(y, s)))
        cases += 1
    record(6, worst <= 1e-12, f"{cases} score vectors with ties, max |rank AUC - pair count| {worst:.1e}")


def test_criterion_07_importance_recovery():
    d = ds.generate_synthetic(2000, 25, 5, 1.0, correlated_groups=1, seed=7)
    train, test = ds.train_test_split(d, 0.8, seed=7)
    params = HyperParams(ntrees=500, seed=7)
    perm = permutation_importance(fit_forest(train, params), test, n_repeats=10, seed=7)
    groups = d.schema.groups
    informative = [j for j, g in enumerate(groups) if g == "informative"]
    noise = [j for j, g in enumerate(groups) if g == "noise"]
    recovered = min(perm.scores[informative]) > max(perm.scores[noise])
    dup = groups.index("duplicate")
    res = decorrelated_permutation_importance(train, test, params, threshold=0.5, n_repeats=10, seed=7)
    in_cluster = [j for j in res.representatives if j in (0, dup)]
    after = res.report.scores[res.representatives.index(in_cluster[0])] if len(in_cluster) == 1 else float("nan")
    before = max(perm.scores[0], perm.scores[dup])
    ok = recovered and len(in_cluster) == 1 and after > before
    record(7, ok, f"min informative {min(perm.scores[informative]):.4f} > max noise {max(perm.scores[noise]):.4f}; "
                  f"duplicate pair {perm.scores[0]:.4f}/{perm.scores[dup]:.4f} -> representative {after:.4f}")


def _full_table(a, b):
    t = np.zeros((len(a) + 1, len(b) + 1), dtype=int)
    t[:, 0] = np.arange(len(a) + 1)
    t[0, :] = np.arange(len(b) + 1)
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            t[i, j] = min(t[i - 1, j] + 1, t[i, j - 1] + 1, t[i - 1, j - 1] + (a[i - 1] != b[j - 1]))
    return int(t[-1, -1])


def test_criterion_08_levenshtein():
    rng = np.random.default_rng(8)
    alphabet = list("abcAB ")
    bad = 0
    for _ in range(10_000):
        a = "".join(rng.choice(alphabet, int(rng.integers(0, 31))))
        b = "".join(rng.choice(alphabet, int(rng.integers(0, 31))))
        bad += levenshtein(a, b) != _full_table(a, b)
    with open(FIXTURES / "name_pairs.csv", newline="") as fh:
        pairs = list(csv.DictReader(fh))
    wrong = 0
    for p in pairs:
        txn = Transaction("1", p["filer"], date(2020, 1, 1), "A")
        (lab,) = label_transactions([txn], DefendantList.from_names([p["defendant"]]), 85)
        wrong += (lab.label is Label.UNLAWFUL) != (p["match"] == "1")
        wrong += levenshtein_similarity(p["filer"], p["defendant"]) != int(p["score"])
        wrong += levenshtein(normalize_name(p["filer"]), normalize_name(p["defendant"])) != int(p["distance"])
    kitten = levenshtein("kitten", "sitting")
    record(8, bad == 0 and kitten == 3 and wrong == 0 and len(pairs) == 20,
           f"10000 random pairs: {bad} DP mismatches; kitten/sitting = {kitten}; {len(pairs)} fixture pairs, {wrong} wrong")


def test_criterion_09_determinism(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "source": {"type": "synthetic", "m": 25, "n_informative": 5, "class_separation": 1.0},
        "n_transactions": 320, "reps": 8,
        "search": {"ntrees": [20, 60], "n_iterations": 2, "k_folds": 3},
        "importance": {"enabled": False},
    }))
    outputs = []
    for run, workers in enumerate(("8", "1", "8")):
        out = tmp_path / f"run{run}"
        assert cli_main(["run", "--config", str(cfg), "--seed", "7", "--workers", workers, "--out", str(out)]) == 0
        outputs.append((out / "per_rep.csv").read_bytes())
    ok = outputs[0] == outputs[1] == outputs[2]
    record(9, ok, f"per-rep CSV identical across 8/1/8 workers ({len(outputs[0])} bytes, 8 reps)")


def test_criterion_10_form4_golden_files():
    golden = sorted(p for p in (FIXTURES / "form4").iterdir() if p.name[:2].isdigit() and "expected" not in p.name)
    exact = 0
    for src in golden:
        expected = src.with_name(src.name.split(".")[0] + ".expected.csv").read_text()
        exact += transactions_csv(parse_form4(src.read_bytes())) == expected
    errors = {}
    for name in ("bad_truncated.xml", "bad_no_cik.xml"):
        try:
            parse_form4((FIXTURES / "form4" / name).read_bytes())
            errors[name] = None
        except (MalformedXml, MissingRequiredField) as exc:
            errors[name] = type(exc).__name__
    ok = len(golden) == 5 and exact == 5 and errors == {
        "bad_truncated.xml": "MalformedXml", "bad_no_cik.xml": "MissingRequiredField"}
    record(10, ok, f"{exact}/{len(golden)} golden files exact; malformed -> {errors}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
