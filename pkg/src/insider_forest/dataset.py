"""Feature tables: assembly, z-scoring, one-hot encoding, balancing, splitting.

Labels are stored as integers, 0 = lawful and 1 = unlawful, and written to
CSV as ``lawful``/``unlawful`` in a final ``label`` column.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field, replace
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DataError,
    DegenerateSplit,
    DimensionMismatch,
    InsufficientPool,
    InvalidSpec,
    NonFiniteInput,
    UnknownCategory,
)
from .fileio import fmt_float, write_csv

LABEL_NAMES = ("lawful", "unlawful")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = "numeric"  # numeric | categorical
    group: str = ""
    cardinality: Optional[int] = None
    subsets: tuple = ()
    label: str = ""


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise InvalidSpec("feature names must be unique")

    @classmethod
    def numeric(cls, names: Sequence[str], group: str = "") -> "FeatureSchema":
        return cls(tuple(FeatureSpec(n, "numeric", group) for n in names))

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def kinds(self) -> list[str]:
        return [f.kind for f in self.features]

    @property
    def groups(self) -> list[str]:
        return [f.group for f in self.features]

    def __len__(self) -> int:
        return len(self.features)

    def numeric_mask(self) -> np.ndarray:
        return np.array([f.kind == "numeric" for f in self.features], dtype=bool)

    def subset(self, names: Sequence[str]) -> "FeatureSchema":
        by_name = {f.name: f for f in self.features}
        missing = [n for n in names if n not in by_name]
        if missing:
            raise InvalidSpec(f"unknown features: {missing[:5]}")
        return FeatureSchema(tuple(by_name[n] for n in names))

    def to_json(self) -> str:
        recs = []
        for f in self.features:
            rec = {"name": f.name, "kind": f.kind, "group": f.group}
            if f.cardinality is not None:
                rec["cardinality"] = f.cardinality
            if f.subsets:
                rec["subsets"] = list(f.subsets)
            if f.label:
                rec["label"] = f.label
            recs.append(rec)
        return json.dumps({"features": recs}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        raw = json.loads(text)
        recs = raw["features"] if isinstance(raw, dict) else raw
        return cls(
            tuple(
                FeatureSpec(
                    name=r["name"],
                    kind=r.get("kind", "numeric"),
                    group=r.get("group", ""),
                    cardinality=r.get("cardinality"),
                    subsets=tuple(r.get("subsets", ())),
                    label=r.get("label", ""),
                )
                for r in recs
            )
        )


def feature_catalog() -> FeatureSchema:
    """Financial-indicator catalog with ``dcz25``/``full110`` subset tags."""
    text = resources.files("insider_forest").joinpath("data/feature_catalog.json").read_text()
    return FeatureSchema.from_json(text)


def catalog_subset(name: str) -> list[str]:
    cat = feature_catalog()
    names = [f.name for f in cat.features if name in f.subsets]
    if not names:
        raise InvalidSpec(f"no catalog subset named {name!r}")
    return names


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    schema: FeatureSchema
    normalized: bool = False

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2:
            raise DimensionMismatch("x must be a matrix")
        if self.x.shape[0] != self.y.shape[0]:
            raise DimensionMismatch(f"{self.x.shape[0]} rows but {self.y.shape[0]} labels")
        if self.x.shape[1] != len(self.schema):
            raise DimensionMismatch(f"{self.x.shape[1]} columns but {len(self.schema)} schema entries")
        if not np.all(np.isfinite(self.x)):
            raise NonFiniteInput("feature matrix contains NaN or infinite entries")
        if not np.isin(self.y, (0, 1)).all():
            raise DataError("labels must be 0 (lawful) or 1 (unlawful)")

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def names(self) -> list[str]:
        return self.schema.names

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return replace(self, x=self.x[rows], y=self.y[rows])

    def select(self, names: Sequence[str]) -> "Dataset":
        pos = {n: i for i, n in enumerate(self.schema.names)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise InvalidSpec(f"dataset lacks features {missing[:5]}")
        cols = [pos[n] for n in names]
        return replace(self, x=self.x[:, cols], schema=self.schema.subset(names))

    def select_columns(self, cols: Sequence[int]) -> "Dataset":
        names = [self.schema.names[c] for c in cols]
        return replace(self, x=self.x[:, list(cols)], schema=self.schema.subset(names))

    def class_counts(self) -> tuple[int, int]:
        n1 = int(self.y.sum())
        return self.n_rows - n1, n1


def concat(parts: Sequence[Dataset]) -> Dataset:
    return Dataset(
        np.vstack([p.x for p in parts]),
        np.concatenate([p.y for p in parts]),
        parts[0].schema,
        parts[0].normalized,
    )


# ---------------------------------------------------------------- CSV

def write_dataset_csv(path, d: Dataset) -> Path:
    rows = ([fmt_float(v) for v in row] + [LABEL_NAMES[lab]] for row, lab in zip(d.x, d.y))
    return write_csv(path, d.schema.names + ["label"], rows)


def read_dataset_csv(path, schema: Optional[FeatureSchema] = None) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[-1] != "label":
            raise DataError(f"{path}: last column must be 'label'")
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            lab = row[-1].strip().lower()
            if lab not in LABEL_NAMES:
                raise DataError(f"{path}:{lineno}: label must be lawful|unlawful, got {row[-1]!r}")
            try:
                xs.append([float(v) for v in row[:-1]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            ys.append(LABEL_NAMES.index(lab))
    names = header[:-1]
    if schema is None:
        schema = FeatureSchema.numeric(names)
    else:
        schema = schema.subset(names)
    x = np.array(xs, dtype=np.float64).reshape(len(xs), len(names))
    return Dataset(x, np.array(ys, dtype=np.int64), schema)


# ---------------------------------------------------------------- normalization

@dataclass(frozen=True)
class NormalizationParams:
    means: np.ndarray
    stds: np.ndarray  # population; 0 marks a constant column
    columns: Optional[np.ndarray] = None  # boolean mask of columns to touch; None = all

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "columns": None if self.columns is None else self.columns.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "NormalizationParams":
        cols = raw.get("columns")
        return cls(
            np.asarray(raw["means"], dtype=float),
            np.asarray(raw["stds"], dtype=float),
            None if cols is None else np.asarray(cols, dtype=bool),
        )


def zscore_normalize(x, columns=None) -> tuple[np.ndarray, NormalizationParams]:
    """Population z-score per column: (x - mean) / std.

    Constant columns are centred and divided by 1. ``columns`` optionally
    restricts the transform to a boolean mask (e.g. numeric features only).
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("cannot normalize non-finite values")
    means = x.mean(axis=0)
    stds = np.sqrt(((x - means) ** 2).mean(axis=0))
    params = NormalizationParams(
        means, stds, None if columns is None else np.asarray(columns, dtype=bool)
    )
    return apply_normalization(x, params), params


def apply_normalization(x, params: NormalizationParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != params.means.shape[0]:
        raise DimensionMismatch(f"expected {params.means.shape[0]} columns, got {x.shape[1]}")
    scale = np.where(params.stds > 0, params.stds, 1.0)
    z = (x - params.means) / scale
    if params.columns is not None:
        z = np.where(params.columns, z, x)
    return z


def normalize_dataset(d: Dataset, params: Optional[NormalizationParams] = None):
    """Normalize numeric columns; fits params when none are given."""
    if params is None:
        z, params = zscore_normalize(d.x, columns=d.schema.numeric_mask())
    else:
        z = apply_normalization(d.x, params)
    return replace(d, x=z, normalized=True), params


# ---------------------------------------------------------------- encoding

def one_hot_encode(column: Sequence[Hashable], categories: Sequence[Hashable]) -> np.ndarray:
    """Indicator columns for ``categories``.

    Two-category (boolean) columns collapse to a single 0/1 column that is 1
    for the first category, so no perfectly collinear pair is emitted.
    """
    categories = list(categories)
    k = len(categories)
    if k < 2:
        raise InvalidSpec("need at least two categories")
    pos = {c: i for i, c in enumerate(categories)}
    try:
        codes = np.array([pos[v] for v in column], dtype=np.int64)
    except KeyError as exc:
        raise UnknownCategory(f"value {exc.args[0]!r} not in {categories}") from None
    if k == 2:
        return (codes == 0).astype(np.float64)[:, None]
    out = np.zeros((codes.shape[0], k))
    out[np.arange(codes.shape[0]), codes] = 1.0
    return out


# ---------------------------------------------------------------- missing data

_QUARTER_RE = re.compile(r"^(\d{4})\s*-?\s*Q([1-4])$", re.IGNORECASE)


def quarter_ordinal(q) -> int:
    """``2020Q3`` (or an int ordinal) -> year * 4 + quarter - 1."""
    if isinstance(q, (int, np.integer)):
        return int(q)
    m = _QUARTER_RE.match(str(q).strip())
    if not m:
        raise DataError(f"bad quarter {q!r}; expected YYYYQn")
    return int(m.group(1)) * 4 + int(m.group(2)) - 1


def quarter_label(ordinal: int) -> str:
    return f"{ordinal // 4}Q{ordinal % 4 + 1}"


def quarter_of(day: date) -> str:
    return f"{day.year}Q{(day.month - 1) // 3 + 1}"


def _missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def fill_missing(
    panel: Mapping[tuple, Mapping[str, Optional[float]]], window: int = 1
) -> tuple[dict, set]:
    """Copy each missing value from the nearest later quarter of the same entity.

    ``panel`` maps ``(entity, quarter)`` to ``{feature: value or None}``.
    Looks ahead up to ``window`` quarters. Returns the filled panel and the
    set of keys still incomplete after the look-ahead (to be excluded).
    """
    if window < 1:
        raise InvalidSpec("window must be >= 1")
    by_key = {(e, quarter_ordinal(q)): (e, q) for e, q in panel}
    filled: dict = {}
    excluded: set = set()
    for (entity, q), values in panel.items():
        t = quarter_ordinal(q)
        row = dict(values)
        for feat, v in values.items():
            if not _missing(v):
                continue
            for step in range(1, window + 1):
                src = by_key.get((entity, t + step))
                if src is None:
                    continue
                cand = panel[src].get(feat)
                if not _missing(cand):
                    row[feat] = cand
                    break
        if any(_missing(v) for v in row.values()):
            excluded.add((entity, q))
        filled[(entity, q)] = row
    return filled, excluded


# ---------------------------------------------------------------- sampling

def balanced_sample(unlawful: Dataset, lawful_pool: Dataset, n_total: int, seed) -> Dataset:
    """Draw n_total/2 rows without replacement from each side."""
    if n_total < 2 or n_total % 2:
        raise InvalidSpec(f"n_total must be a positive even number, got {n_total}")
    half = n_total // 2
    if half > unlawful.n_rows or half > lawful_pool.n_rows:
        raise InsufficientPool(
            f"need {half} per class; have {unlawful.n_rows} unlawful, {lawful_pool.n_rows} lawful"
        )
    rng = np.random.default_rng(seed)
    u = unlawful.take(np.sort(rng.choice(unlawful.n_rows, half, replace=False)))
    l = lawful_pool.take(np.sort(rng.choice(lawful_pool.n_rows, half, replace=False)))
    return concat([l, u])


def balanced_sample_fixed(unlawful: Dataset, lawful_pool: Dataset, seed) -> Dataset:
    """Keep every unlawful row; draw as many lawful rows without replacement."""
    half = unlawful.n_rows
    if half == 0 or half > lawful_pool.n_rows:
        raise InsufficientPool(f"need {half} lawful rows; pool has {lawful_pool.n_rows}")
    rng = np.random.default_rng(seed)
    l = lawful_pool.take(np.sort(rng.choice(lawful_pool.n_rows, half, replace=False)))
    return concat([l, unlawful])


def train_test_split(d: Dataset, train_fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Stratified split: each class contributes round(fraction * count) train rows."""
    if not 0 < train_fraction < 1:
        raise InvalidSpec("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in (0, 1):
        rows = np.flatnonzero(d.y == cls)
        rows = rows[rng.permutation(rows.size)]
        k = int(math.floor(train_fraction * rows.size + 0.5))
        if k == 0 or k == rows.size:
            raise DegenerateSplit(
                f"class {LABEL_NAMES[cls]} ({rows.size} rows) leaves a side empty at {train_fraction}"
            )
        train_idx.append(rows[:k])
        test_idx.append(rows[k:])
    return d.take(np.sort(np.concatenate(train_idx))), d.take(np.sort(np.concatenate(test_idx)))


# ---------------------------------------------------------------- synthetic data

@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 1000
    m: int = 25
    n_informative: int = 5
    class_separation: float = 6.0
    correlated_groups: int = 0
    duplicate_noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise InvalidSpec("n must be a positive even number")
        if not 0 <= self.n_informative <= self.m:
            raise InvalidSpec("need 0 <= n_informative <= m")
        if self.class_separation < 0:
            raise InvalidSpec("class_separation must be >= 0")
        if not 0 <= self.correlated_groups <= self.n_informative:
            raise InvalidSpec("correlated_groups must not exceed n_informative")
        if self.n_informative + self.correlated_groups > self.m:
            raise InvalidSpec("informative plus duplicate columns exceed m")


def generate_synthetic(
    n: int,
    m: int,
    n_informative: int,
    class_separation: float,
    correlated_groups: int = 0,
    seed: int = 0,
    duplicate_noise: float = 0.1,
) -> Dataset:
    """Balanced two-class Gaussian data with planted signal.

    Columns are laid out as ``informative_*`` (unit-variance Gaussians whose
    class means differ by ``class_separation``), then ``duplicate_*`` (a
    noisy copy of informative column g for each of the first
    ``correlated_groups`` informative columns), then ``noise_*``.
    Rows are shuffled.
    """
    spec = SyntheticSpec(n, m, n_informative, class_separation, correlated_groups, duplicate_noise, seed)
    rng = np.random.default_rng(spec.seed)
    y = np.repeat([0, 1], n // 2)[rng.permutation(n)]
    shift = class_separation * (y - 0.5)
    inf = rng.standard_normal((n, n_informative)) + shift[:, None]
    spread = math.sqrt(1.0 + class_separation**2 / 4.0)
    dup = inf[:, :correlated_groups] + duplicate_noise * spread * rng.standard_normal((n, correlated_groups))
    n_noise = m - n_informative - correlated_groups
    noise = rng.standard_normal((n, n_noise))
    names = (
        [f"informative_{i}" for i in range(n_informative)]
        + [f"duplicate_{g}" for g in range(correlated_groups)]
        + [f"noise_{k}" for k in range(n_noise)]
    )
    groups = ["informative"] * n_informative + ["duplicate"] * correlated_groups + ["noise"] * n_noise
    schema = FeatureSchema(tuple(FeatureSpec(nm, "numeric", g) for nm, g in zip(names, groups)))
    return Dataset(np.hstack([inf, dup, noise]), y, schema)


def bayes_accuracy(n_informative: int, class_separation: float) -> float:
    """Accuracy of the optimal rule for the generator's model."""
    from scipy.stats import norm

    return float(norm.cdf(class_separation * math.sqrt(n_informative) / 2.0))
