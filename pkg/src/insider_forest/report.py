"""Markdown summary of an experiment next to the published reference columns.

Reference numbers come only from the checked-in ``reference_tables.json``;
nothing here invents or rescales them.
"""

from __future__ import annotations

import json
from importlib import resources
from typing import Optional

ROWS = ("ACC", "TPR", "FPR", "TNR", "FNR", "PRE")


def reference_tables() -> dict:
    text = resources.files("insider_forest").joinpath("data/reference_tables.json").read_text(encoding="utf-8")
    return json.loads(text)


def matching_column(n_transactions: int, n_features: int, pca: str) -> Optional[int]:
    """Index of the results column with the same size/feature count/PCA setting, if any."""
    feats = 110 if n_features >= 110 else n_features
    want = f"{n_transactions} tx / {feats} feat / {'no PCA' if pca == 'off' else 'PCA'}"
    cols = reference_tables()["results_by_setting"]["columns"]
    return cols.index(want) if want in cols else None


def _fmt(v, digits: int = 2) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"


def render(aggregate: dict, importance: Optional[dict] = None) -> str:
    ref = reference_tables()
    m = aggregate["metrics"]
    lines = [
        "# Experiment report",
        "",
        f"- transactions: {aggregate['n_transactions']}",
        f"- features: {aggregate['n_features']}",
        f"- PCA: {aggregate['pca']}",
        f"- repetitions: {aggregate['reps_ok']} ok, {aggregate['reps_failed']} failed",
        "",
        "## Test-split metrics (percent, mean ± std over repetitions)",
        "",
        "Lawful is the positive class: TPR is the share of lawful trades kept lawful,",
        "TNR the share of unlawful trades flagged.",
        "",
    ]
    col = matching_column(aggregate["n_transactions"], aggregate["n_features"], aggregate["pca"])
    by_setting = ref["results_by_setting"]
    bench = ref["benchmarks"]
    header = "| metric | this run |"
    sep = "|---|---|"
    if col is not None:
        header += f" published ({by_setting['columns'][col]}) |"
        sep += "---|"
    header += " published RF, PCA (benchmark) |"
    sep += "---|"
    lines += [header, sep]
    for name in ROWS:
        s = m[name.lower()]
        row = f"| {name} | {_fmt(s['mean'])} ± {_fmt(s['std'])} |"
        if col is not None:
            row += f" {_fmt(by_setting['rows'][name][col])} |"
        row += f" {_fmt(bench['rows'][name][-1])} |"
        lines.append(row)
    lines += [
        "",
        "## Unlawful-centric reading",
        "",
        f"- detection rate of unlawful trades (TNR): {_fmt(m['tnr']['mean'])}%",
        f"- unlawful trades missed (FPR): {_fmt(m['fpr']['mean'])}%",
        f"- lawful trades wrongly flagged (FNR): {_fmt(m['fnr']['mean'])}%",
        "",
        "## Ranking and internal estimates",
        "",
        f"- ROC-AUC: {_fmt(m['auc']['mean'], 4)} ± {_fmt(m['auc']['std'], 4)}",
        f"- PR-AUC (unlawful): {_fmt(m['aucpr']['mean'], 4)} ± {_fmt(m['aucpr']['std'], 4)}",
        f"- OOB error: {_fmt(m['oob_error']['mean'], 4)} vs test error {_fmt(m['test_error']['mean'], 4)}",
        f"- std of mean accuracy: {_fmt(m['acc']['sem'], 3)} percentage points",
        "",
        "## Chosen hyperparameters (mode over repetitions)",
        "",
    ]
    for k, v in sorted(aggregate["params_mode"].items()):
        lines.append(f"- {k}: {v}")
    if importance:
        lines += ["", "## Top features (first repetition)", ""]
        for method, names in importance.items():
            lines.append(f"- {method}: {', '.join(names[:5])}")
    lines += [
        "",
        "## About the published columns",
        "",
        ref["note"],
        "Published accuracy std at 10 vs 100 repetitions (no PCA): "
        f"{ref['accuracy_std_by_reps']['without_pca']['10']} vs {ref['accuracy_std_by_reps']['without_pca']['100']}.",
        "",
    ]
    return "\n".join(lines)
