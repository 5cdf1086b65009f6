"""Join labelled transactions with a quarterly issuer panel into a Dataset.

Panel CSV layout: ``cik,quarter,<numeric feature>...`` with quarters as
``YYYYQn`` and empty cells for missing values.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import (
    Dataset,
    FeatureSchema,
    FeatureSpec,
    feature_catalog,
    fill_missing,
    one_hot_encode,
    quarter_of,
)
from .errors import DataError, InvalidSpec
from .form4 import Label, Transaction

log = logging.getLogger(__name__)

# categorical features carried by the filing itself
TRANSACTION_FEATURES = {
    "acquisition_disposition": (lambda t: t.acquired_disposed, ("A", "D")),
    "is_director": (lambda t: t.is_director, (True, False)),
    "is_officer": (lambda t: t.is_officer, (True, False)),
    "is_other": (lambda t: t.is_other, (True, False)),
    "ten_percent_ownership": (lambda t: t.is_ten_percent_owner, (True, False)),
}


def read_panel_csv(path) -> dict:
    panel = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or reader.fieldnames[:2] != ["cik", "quarter"]:
            raise DataError(f"{path}: panel header must start with cik,quarter")
        for i, row in enumerate(reader, start=2):
            values = {}
            for k, v in row.items():
                if k in ("cik", "quarter"):
                    continue
                v = (v or "").strip()
                try:
                    values[k] = float(v) if v and v.upper() != "NA" else None
                except ValueError:
                    raise DataError(f"{path}:{i}: column {k}: {v!r} is not a number") from None
            panel[(row["cik"].strip(), row["quarter"].strip().upper())] = values
    return panel


def assemble(
    txns: Sequence[Transaction],
    panel: dict,
    feature_names: Sequence[str],
    window: int = 1,
) -> tuple[Dataset, int]:
    """Build the feature matrix for labelled transactions.

    Transactions without a complete panel row after look-ahead filling, or
    still unlabelled, are dropped; the drop count is returned.
    """
    catalog = {f.name: f for f in feature_catalog().features}
    specs = []
    for name in feature_names:
        if name in TRANSACTION_FEATURES:
            specs.append(catalog.get(name, FeatureSpec(name, "categorical", "Ownership/Governance", 2)))
        else:
            specs.append(catalog.get(name, FeatureSpec(name, "numeric")))
    numeric = [s.name for s in specs if s.name not in TRANSACTION_FEATURES]

    needed = {key: {f: vals.get(f) for f in numeric} for key, vals in panel.items()}
    if needed and numeric:
        missing_cols = [f for f in numeric if all(f not in vals for vals in panel.values())]
        if missing_cols:
            raise InvalidSpec(f"panel lacks columns {missing_cols[:5]}")
    filled, excluded = fill_missing(needed, window=window)

    kept = []
    dropped = 0
    for t in txns:
        key = (t.cik, quarter_of(t.transaction_date))
        if t.label is Label.UNLABELED or key not in filled or key in excluded:
            dropped += 1
            continue
        kept.append((t, filled[key]))
    if not kept:
        raise DataError("no transaction survived the panel join")

    cols = []
    for s in specs:
        if s.name in TRANSACTION_FEATURES:
            get, cats = TRANSACTION_FEATURES[s.name]
            cols.append(one_hot_encode([get(t) for t, _ in kept], cats)[:, 0])
        else:
            cols.append(np.array([row[s.name] for _, row in kept], dtype=float))
    x = np.column_stack(cols)
    y = np.array([1 if t.label is Label.UNLAWFUL else 0 for t, _ in kept])
    if dropped:
        log.info("dropped %d transactions (unlabelled or incomplete panel)", dropped)
    return Dataset(x, y, FeatureSchema(tuple(specs))), dropped
