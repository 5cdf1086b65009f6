"""Repeated-experiment harness.

Each repetition resamples the lawful side (the unlawful side stays fixed),
splits 80/20, z-scores on the training part, optionally projects onto
principal components, tunes by random search with k-fold CV, refits on the
whole training part and scores the held-out part.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import dataset as ds
from .errors import ConfigError, InsiderForestError, InsufficientPool
from .evaluate import (
    ConfusionMatrix,
    MetricsReport,
    SearchSpace,
    confusion_matrix,
    metrics,
    pr_auc,
    random_search,
    roc_auc,
    summarize,
)
from .fileio import csv_text, fmt_float
from .forest import HyperParams, RandomForestModel, fit_forest, oob_error, predict_batch
from .pca import PcaModel, fit_pca, select_components, transform
from .rng import derive_seed

log = logging.getLogger(__name__)

PER_REP_HEADER = [
    "rep", "seed", "ntrees", "mtry", "max_depth", "sample_rate",
    "tp", "fn", "fp", "tn", "acc", "tpr", "fpr", "tnr", "fnr", "pre", "auc",
    # appended after the fixed block
    "aucpr", "oob_error", "cv_score", "pca_k",
]
AGGREGATED = ("acc", "tpr", "fpr", "tnr", "fnr", "pre", "auc", "aucpr", "oob_error", "test_error")

# stream tags under the master seed
_REP, _UNLAWFUL, _SOURCE = 1, 2, 3


@dataclass(frozen=True)
class PcaSetting:
    mode: str = "off"  # off | evr | k
    value: float = 0.0

    @classmethod
    def parse(cls, raw) -> "PcaSetting":
        if raw is None or raw is False or raw == "off":
            return cls()
        if isinstance(raw, dict):
            if "evr" in raw:
                return cls._make("evr", raw["evr"])
            if "k" in raw:
                return cls._make("k", raw["k"])
            raise ConfigError(f"pca must be off, evr=<r> or k=<int>; got {raw!r}")
        text = str(raw).strip()
        if "=" in text:
            key, val = text.split("=", 1)
            return cls._make(key.strip(), val)
        raise ConfigError(f"pca must be off, evr=<r> or k=<int>; got {raw!r}")

    @classmethod
    def _make(cls, mode: str, val) -> "PcaSetting":
        try:
            v = float(val)
        except (TypeError, ValueError):
            raise ConfigError(f"bad pca value {val!r}") from None
        if mode == "evr" and 0 < v <= 1:
            return cls("evr", v)
        if mode == "k" and v >= 1 and v == int(v):
            return cls("k", int(v))
        raise ConfigError(f"bad pca setting {mode}={val}")

    def __str__(self) -> str:
        if self.mode == "off":
            return "off"
        return f"{self.mode}={self.value:g}"


@dataclass(frozen=True)
class ImportanceSettings:
    enabled: bool = True
    n_repeats: int = 10
    cluster_threshold: float = 1.0
    signed_distance: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    source: dict
    n_transactions: int = 320
    features: Union[str, list] = "all"
    pca: PcaSetting = PcaSetting()
    search: SearchSpace = SearchSpace()
    criterion: str = "acc"
    reps: int = 1
    seed: int = 0
    train_fraction: float = 0.8
    importance: ImportanceSettings = ImportanceSettings()
    workers: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.n_transactions < 4 or self.n_transactions % 2:
            raise ConfigError("n_transactions must be an even number >= 4")
        if self.criterion not in ("acc", "auc"):
            raise ConfigError("criterion must be acc or auc")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        kind = self.source.get("type")
        if kind == "csv":
            path = self.source.get("path")
            if not path or not Path(path).is_file():
                raise ConfigError(f"input CSV not found: {path}")
        elif kind != "synthetic":
            raise ConfigError(f"source.type must be csv or synthetic, got {kind!r}")
        if isinstance(self.features, str) and self.features not in ("all", "dcz25", "full110"):
            if not Path(self.features).is_file():
                raise ConfigError(f"feature list file not found: {self.features}")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        raw = dict(raw)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "source" not in raw:
            raise ConfigError("config needs a source")
        source = dict(raw["source"])
        if base_dir is not None and source.get("type") == "csv" and source.get("path"):
            p = Path(source["path"])
            source["path"] = str(p if p.is_absolute() else base_dir / p)
        raw["source"] = source
        if "pca" in raw:
            raw["pca"] = PcaSetting.parse(raw["pca"])
        if "search" in raw:
            raw["search"] = SearchSpace.from_dict(raw["search"])
        if "importance" in raw:
            try:
                raw["importance"] = ImportanceSettings(**raw["importance"])
            except TypeError as exc:
                raise ConfigError(f"bad importance settings: {exc}") from None
        feats = raw.get("features")
        if isinstance(feats, str) and base_dir is not None and feats not in ("all", "dcz25", "full110"):
            p = Path(feats)
            raw["features"] = str(p if p.is_absolute() else base_dir / p)
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw, base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "n_transactions": self.n_transactions,
            "features": self.features,
            "pca": str(self.pca),
            "search": self.search.to_dict(),
            "criterion": self.criterion,
            "reps": self.reps,
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "importance": asdict(self.importance),
            "workers": self.workers,
        }


def resolve_features(spec, available: list[str]) -> list[str]:
    if isinstance(spec, list):
        return spec
    if spec == "all":
        return available
    if spec in ("dcz25", "full110"):
        return ds.catalog_subset(spec)
    text = Path(spec).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if isinstance(raw, list):
        return [str(r) for r in raw]
    return ds.FeatureSchema.from_json(text).names


def load_source(cfg: ExperimentConfig) -> tuple[ds.Dataset, ds.Dataset]:
    """(fixed unlawful rows, lawful pool)."""
    src = cfg.source
    if src["type"] == "synthetic":
        pool_factor = int(src.get("pool_factor", 5))
        try:
            data = ds.generate_synthetic(
                n=pool_factor * cfg.n_transactions,
                m=int(src.get("m", 25)),
                n_informative=int(src.get("n_informative", 5)),
                class_separation=float(src.get("class_separation", 6.0)),
                correlated_groups=int(src.get("correlated_groups", 0)),
                seed=derive_seed(cfg.seed, _SOURCE),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    else:
        schema = None
        if src.get("schema"):
            schema = ds.FeatureSchema.from_json(Path(src["schema"]).read_text(encoding="utf-8"))
        data = ds.read_dataset_csv(src["path"], schema)
    data = data.select(resolve_features(cfg.features, data.names))
    unlawful = data.take(np.flatnonzero(data.y == 1))
    lawful = data.take(np.flatnonzero(data.y == 0))
    half = cfg.n_transactions // 2
    if unlawful.n_rows < half or lawful.n_rows < half:
        raise InsufficientPool(
            f"need {half} per class; source has {unlawful.n_rows} unlawful, {lawful.n_rows} lawful"
        )
    if unlawful.n_rows > half:
        pick = np.random.default_rng(derive_seed(cfg.seed, _UNLAWFUL)).choice(unlawful.n_rows, half, replace=False)
        unlawful = unlawful.take(np.sort(pick))
    return unlawful, lawful


@dataclass
class RepOutcome:
    rep: int
    seed: int
    params: Optional[HyperParams] = None
    cv_score: Optional[float] = None
    cm: Optional[ConfusionMatrix] = None
    report: Optional[MetricsReport] = None
    oob_error: Optional[float] = None
    pca_k: Optional[int] = None
    error: Optional[str] = None
    # kept for the first repetition only
    model: Optional[RandomForestModel] = field(default=None, repr=False)
    train: Optional[ds.Dataset] = field(default=None, repr=False)
    test: Optional[ds.Dataset] = field(default=None, repr=False)
    pca_model: Optional[PcaModel] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_row(self) -> list[str]:
        p, cm, r = self.params, self.cm, self.report
        pct = lambda v: fmt_float(None if v is None else 100.0 * v)  # noqa: E731
        return [
            str(self.rep), str(self.seed), str(p.ntrees), fmt_float(p.mtry_fraction),
            str(p.max_depth), fmt_float(p.sample_rate),
            str(cm.tp), str(cm.fn), str(cm.fp), str(cm.tn),
            pct(r.acc), pct(r.tpr), pct(r.fpr), pct(r.tnr), pct(r.fnr), pct(r.pre), fmt_float(r.auc),
            fmt_float(r.aucpr), fmt_float(self.oob_error), fmt_float(self.cv_score),
            "NA" if self.pca_k is None else str(self.pca_k),
        ]


def project(train: ds.Dataset, test: ds.Dataset, setting: PcaSetting):
    model = fit_pca(train.x)
    k = select_components(model, setting.value) if setting.mode == "evr" else int(setting.value)
    k = min(k, model.n_components)
    schema = ds.FeatureSchema.numeric([f"pc_{i + 1}" for i in range(k)], group="principal_component")
    tr = ds.Dataset(transform(model, train.x, k), train.y, schema, normalized=True)
    te = ds.Dataset(transform(model, test.x, k), test.y, schema, normalized=True)
    return tr, te, model, k


def run_repetition(
    cfg: ExperimentConfig, rep: int, unlawful: ds.Dataset, lawful_pool: ds.Dataset, keep: bool = False
) -> RepOutcome:
    seed = derive_seed(cfg.seed, _REP, rep)
    out = RepOutcome(rep=rep, seed=seed)
    data = ds.balanced_sample_fixed(unlawful, lawful_pool, derive_seed(seed, 0))
    train, test = ds.train_test_split(data, cfg.train_fraction, derive_seed(seed, 1))
    train, norm = ds.normalize_dataset(train)
    test, _ = ds.normalize_dataset(test, norm)
    pca_model = None
    if cfg.pca.mode != "off":
        train, test, pca_model, out.pca_k = project(train, test, cfg.pca)
    best, out.cv_score, _ = random_search(cfg.search, train, derive_seed(seed, 2), cfg.criterion)
    out.params = best.replace(seed=derive_seed(seed, 3))
    model = fit_forest(train, out.params)
    labels, frac = predict_batch(model, test.x)
    out.cm = confusion_matrix(test.y, labels)
    out.report = metrics(out.cm, auc=roc_auc(test.y, frac), aucpr=pr_auc(test.y, frac))
    out.oob_error = oob_error(model, train)
    if keep:
        out.model, out.train, out.test, out.pca_model = model, train, test, pca_model
    return out


def run_experiments(cfg: ExperimentConfig, reps: Optional[int] = None, workers: Optional[int] = None,
                    keep_first: bool = False) -> "ExperimentResult":
    reps = cfg.reps if reps is None else reps
    workers = cfg.workers if workers is None else workers
    unlawful, lawful = load_source(cfg)

    def one(rep: int) -> RepOutcome:
        try:
            return run_repetition(cfg, rep, unlawful, lawful, keep=keep_first and rep == 0)
        except InsiderForestError as exc:
            log.warning("repetition %d failed: %s: %s", rep, type(exc).__name__, exc)
            return RepOutcome(rep=rep, seed=derive_seed(cfg.seed, _REP, rep), error=f"{type(exc).__name__}: {exc}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(reps)))
    else:
        outcomes = [one(r) for r in range(reps)]
    return ExperimentResult(cfg, outcomes, unlawful.names)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    outcomes: list[RepOutcome]
    feature_names: list[str] = field(default_factory=list)

    @property
    def ok(self) -> list[RepOutcome]:
        return [o for o in self.outcomes if o.ok]

    def per_rep_csv(self) -> str:
        return csv_text(PER_REP_HEADER, (o.csv_row() for o in self.ok))

    def metric_values(self, name: str) -> list[Optional[float]]:
        vals = []
        for o in self.ok:
            if name == "oob_error":
                vals.append(o.oob_error)
            elif name == "test_error":
                vals.append(1.0 - o.report.acc)
            else:
                vals.append(getattr(o.report, name))
        return vals

    def aggregate(self) -> dict:
        failures = [{"rep": o.rep, "error": o.error} for o in self.outcomes if not o.ok]
        if failures:
            log.warning("%d of %d repetitions failed and were excluded", len(failures), len(self.outcomes))
        pct = {"acc", "tpr", "fpr", "tnr", "fnr", "pre"}
        summary = {}
        for name in AGGREGATED:
            vals = self.metric_values(name)
            if name in pct:
                vals = [None if v is None else 100.0 * v for v in vals]
            summary[name] = summarize(vals)
        modes = {}
        for key in ("ntrees", "mtry_fraction", "max_depth", "sample_rate"):
            vals = [getattr(o.params, key) for o in self.ok]
            if key in ("mtry_fraction", "sample_rate"):
                vals = [round(v, 2) for v in vals]
            modes[key] = Counter(vals).most_common(1)[0][0] if vals else None
        return {
            "n_transactions": self.config.n_transactions,
            "n_features": len(self.feature_names),
            "pca": str(self.config.pca),
            "reps_requested": len(self.outcomes),
            "reps_ok": len(self.ok),
            "reps_failed": len(failures),
            "failures": failures,
            "metrics": summary,
            "params_mode": modes,
            "units": "acc/tpr/fpr/tnr/fnr/pre in percent; auc, aucpr, oob_error, test_error as fractions",
        }
