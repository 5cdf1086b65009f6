"""Command-line entry point: ``insider-forest <subcommand> ...``.

Exit codes: 0 ok, 2 configuration, 3 data, 4 numeric failure. On failure a
single line ``<Category>[/<Type>]: <message>`` goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import dataset as ds
from . import form4
from .errors import ConfigError, DataError, InsiderForestError, NumericError
from .evaluate import SearchSpace, confusion_matrix, metrics, pr_auc, random_search, roc_auc
from .experiment import ExperimentConfig, ImportanceSettings, PcaSetting, run_experiments
from .featurize import assemble, read_panel_csv
from .fileio import atomic_write_text, write_csv, write_json
from .forest import HyperParams, RandomForestModel, fit_forest, oob_error, predict_batch
from .importance import (
    IMPORTANCE_HEADER,
    decorrelated_permutation_importance,
    mdi_report,
    permutation_importance,
)
from .report import render
from .rng import derive_seed

log = logging.getLogger("insider_forest")

FILING_SUFFIXES = (".xml", ".txt")

# seed stream for importance, separate from the repetition streams
_IMPORTANCE_STREAM = 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0, or the config's)")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="insider-forest", description="Lawful/unlawful insider-trade classifier")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="parse Form 4 XML filings into a transaction CSV")
    s.add_argument("paths", nargs="+", help="filings or directories of filings")

    s = sub.add_parser("label", parents=[common], help="mark transactions whose filer matches a defendant")
    s.add_argument("--transactions", required=True)
    s.add_argument("--defendants", required=True, help="one name per line, '#' starts a comment")
    s.add_argument("--threshold", type=int, default=form4.DEFAULT_THRESHOLD, help="similarity cut-off 0..100")

    s = sub.add_parser("featurize", parents=[common], help="join labelled transactions with a quarterly panel")
    s.add_argument("--transactions", required=True)
    s.add_argument("--panel", required=True)
    s.add_argument("--features", default="dcz25", help="dcz25 | full110 | FILE")
    s.add_argument("--window", type=int, default=1, help="quarters of look-ahead when filling gaps")

    s = sub.add_parser("synth", parents=[common], help="write a planted-signal synthetic dataset")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--m", type=int, default=25)
    s.add_argument("--informative", type=int, default=5)
    s.add_argument("--separation", type=float, default=6.0)
    s.add_argument("--groups", type=int, default=0, help="informative columns that get a noisy duplicate")

    s = sub.add_parser("train", parents=[common], help="fit a forest on a dataset CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--params", help="JSON file of hyperparameters (e.g. from tune)")
    s.add_argument("--ntrees", type=int)
    s.add_argument("--mtry", type=float, help="fraction of features tried per split")
    s.add_argument("--max-depth", type=int)
    s.add_argument("--sample-rate", type=float)
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("tune", parents=[common], help="random search with k-fold CV")
    s.add_argument("--data", required=True)
    s.add_argument("--config", help="JSON search space")
    s.add_argument("--criterion", choices=("acc", "auc"), default="acc")

    s = sub.add_parser("evaluate", parents=[common], help="score a saved model on a dataset CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)

    s = sub.add_parser("importance", parents=[common], help="MDI, permutation and decorrelated importance")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True, help="evaluation split")
    s.add_argument("--train", help="training split; enables the decorrelated variant")
    s.add_argument("--params", help="hyperparameters for the decorrelated refit")
    s.add_argument("--n-repeats", type=int, default=10)
    s.add_argument("--cluster-threshold", type=float, default=1.0)
    s.add_argument("--signed-distance", action="store_true", help="cluster on 1 - rho instead of 1 - |rho|")

    s = sub.add_parser("run", parents=[common], help="full repeated-experiment pipeline")
    s.add_argument("--config", required=True)
    s.add_argument("--reps", type=int)
    s.add_argument("--pca", help="off | evr=<r> | k=<int>")
    s.add_argument("--features", help="dcz25 | full110 | all | FILE")
    s.add_argument("--criterion", choices=("acc", "auc"))
    s.add_argument("--cluster-threshold", type=float)
    s.add_argument("--signed-distance", action="store_true")
    s.add_argument("--no-importance", action="store_true")
    s.add_argument("--workers", type=int)

    s = sub.add_parser("report", parents=[common], help="render the Markdown report from aggregate.json")
    s.add_argument("--aggregate", required=True)
    return p


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def _load_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _read_data(path) -> ds.Dataset:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input CSV not found: {path}")
    schema_path = path.with_suffix(".schema.json")
    schema = ds.FeatureSchema.from_json(schema_path.read_text(encoding="utf-8")) if schema_path.is_file() else None
    return ds.read_dataset_csv(path, schema)


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    return path


def _params_from_args(args) -> HyperParams:
    base = HyperParams(**_load_json(args.params)) if getattr(args, "params", None) else HyperParams()
    changes = {}
    for key, attr in (("ntrees", "ntrees"), ("mtry_fraction", "mtry"), ("max_depth", "max_depth"),
                      ("sample_rate", "sample_rate")):
        v = getattr(args, attr, None)
        if v is not None:
            changes[key] = v
    if args.seed is not None:
        changes["seed"] = args.seed
    return base.replace(**changes)


def _write_importance(out_dir: Path, name: str, report) -> None:
    write_csv(out_dir / f"importance_{name}.csv", IMPORTANCE_HEADER, report.csv_rows())


# ---------------------------------------------------------------- subcommands

def cmd_ingest(args) -> int:
    files = []
    for raw in args.paths:
        p = _require(raw)
        if p.is_dir():
            files.extend(sorted(q for q in p.rglob("*") if q.is_file() and q.suffix.lower() in FILING_SUFFIXES))
        else:
            files.append(p)
    txns, skipped = form4.ingest_files(files)
    atomic_write_text(_out(args, "transactions.csv"), form4.transactions_csv(txns))
    print(f"{len(txns)} transactions from {len(files) - len(skipped)} filings; {len(skipped)} skipped")
    return 0


def cmd_label(args) -> int:
    txns = form4.read_transactions_csv(_require(args.transactions))
    defendants = form4.DefendantList.read(_require(args.defendants))
    labelled = form4.label_transactions(txns, defendants, args.threshold)
    atomic_write_text(_out(args, "labelled.csv"), form4.transactions_csv(labelled))
    n_bad = sum(t.label is form4.Label.UNLAWFUL for t in labelled)
    print(f"{n_bad} of {len(labelled)} transactions labelled unlawful")
    return 0


def cmd_featurize(args) -> int:
    from .experiment import resolve_features

    txns = form4.read_transactions_csv(_require(args.transactions))
    panel = read_panel_csv(_require(args.panel))
    names = resolve_features(args.features, [])
    data, dropped = assemble(txns, panel, names, window=args.window)
    out = _out(args, "dataset.csv")
    ds.write_dataset_csv(out, data)
    atomic_write_text(out.with_suffix(".schema.json"), data.schema.to_json())
    print(f"{data.n_rows} rows x {len(data.names)} features; {dropped} transactions dropped")
    return 0


def cmd_synth(args) -> int:
    data = ds.generate_synthetic(args.n, args.m, args.informative, args.separation, args.groups,
                                 seed=args.seed or 0)
    out = _out(args, "synthetic.csv")
    ds.write_dataset_csv(out, data)
    atomic_write_text(out.with_suffix(".schema.json"), data.schema.to_json())
    return 0


def cmd_train(args) -> int:
    data = _read_data(args.data)
    params = _params_from_args(args)
    model = fit_forest(data, params, n_jobs=args.workers)
    atomic_write_text(_out(args, "model.json"), model.to_json())
    print(f"trained {params.ntrees} trees; OOB error {oob_error(model, data):.4f}")
    return 0


def cmd_tune(args) -> int:
    data = _read_data(args.data)
    space = SearchSpace.from_dict(_load_json(args.config)) if args.config else SearchSpace()
    best, score, trials = random_search(space, data, args.seed or 0, args.criterion)
    write_json(_out(args, "params.json"), asdict(best))
    print(f"best CV {args.criterion} {score:.4f} over {len(trials)} draws")
    return 0


def cmd_evaluate(args) -> int:
    model = RandomForestModel.from_json(_require(args.model).read_text(encoding="utf-8"))
    data = _read_data(args.data)
    labels, frac = predict_batch(model, data.x)
    cm = confusion_matrix(data.y, labels)
    rep = metrics(cm, auc=roc_auc(data.y, frac), aucpr=pr_auc(data.y, frac))
    write_json(_out(args, "metrics.json"), {"confusion": asdict(cm), "metrics": asdict(rep)})
    print(f"ACC {100 * rep.acc:.2f}  AUC {rep.auc:.4f}")
    return 0


def cmd_importance(args) -> int:
    model = RandomForestModel.from_json(_require(args.model).read_text(encoding="utf-8"))
    test = _read_data(args.data)
    out = _out(args, "importance")
    seed = args.seed or 0
    _write_importance(out, "mdi", mdi_report(model, test.names))
    _write_importance(out, "permutation", permutation_importance(model, test, args.n_repeats, seed))
    if args.train:
        train = _read_data(args.train)
        params = _params_from_args(args) if args.params else model.params
        res = decorrelated_permutation_importance(
            train, test, params, args.cluster_threshold, args.n_repeats, seed, args.signed_distance
        )
        _write_importance(out, "decorrelated", res.report)
        atomic_write_text(out / "dendrogram.json", res.dendrogram.to_json(train.names))
    return 0


def _run_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None:
        changes["reps"] = args.reps
    if args.pca is not None:
        changes["pca"] = PcaSetting.parse(args.pca)
    if args.features is not None:
        changes["features"] = args.features
    if args.criterion is not None:
        changes["criterion"] = args.criterion
    if args.workers is not None:
        changes["workers"] = args.workers
    imp = cfg.importance
    if args.cluster_threshold is not None:
        imp = replace(imp, cluster_threshold=args.cluster_threshold)
    if args.signed_distance:
        imp = replace(imp, signed_distance=True)
    if args.no_importance:
        imp = replace(imp, enabled=False)
    changes["importance"] = imp
    return replace(cfg, **changes)


def run_pipeline(cfg: ExperimentConfig, out_dir) -> dict:
    """Run every repetition and write all artifacts into ``out_dir``."""
    out_dir = Path(out_dir)
    result = run_experiments(cfg, keep_first=cfg.importance.enabled)
    if not result.ok:
        first = result.outcomes[0].error or "unknown error"
        raise DataError(f"every repetition failed; first: {first}")
    resolved = cfg.to_dict()
    resolved.pop("workers")  # scheduling only; keeps artifacts identical across worker counts
    write_json(out_dir / "config.json", resolved)
    atomic_write_text(out_dir / "per_rep.csv", result.per_rep_csv())
    aggregate = result.aggregate()
    write_json(out_dir / "aggregate.json", aggregate)

    top = None
    first = result.outcomes[0]
    if cfg.importance.enabled and first.ok:
        settings: ImportanceSettings = cfg.importance
        seed = derive_seed(cfg.seed, _IMPORTANCE_STREAM)
        reports = {
            "mdi": mdi_report(first.model, first.train.names),
            "permutation": permutation_importance(first.model, first.test, settings.n_repeats, seed),
        }
        dec = decorrelated_permutation_importance(
            first.train, first.test, first.params, settings.cluster_threshold,
            settings.n_repeats, seed, settings.signed_distance,
        )
        reports["decorrelated"] = dec.report
        for name, rep in reports.items():
            _write_importance(out_dir, name, rep)
        atomic_write_text(out_dir / "dendrogram.json", dec.dendrogram.to_json(first.train.names))
        top = {name: [rep.feature_names[i] for i in rep.ranking()] for name, rep in reports.items()}
        write_json(out_dir / "importance_top.json", top)
    atomic_write_text(out_dir / "report.md", render(aggregate, top))
    return aggregate


def cmd_run(args) -> int:
    cfg = _run_config(args)
    out = _out(args, "out")
    agg = run_pipeline(cfg, out)
    acc = agg["metrics"]["acc"]
    print(f"{agg['reps_ok']} repetitions: ACC {acc['mean']:.2f} ± {acc['std']:.2f}; artifacts in {out}")
    return 0


def cmd_report(args) -> int:
    agg = _load_json(args.aggregate)
    top_path = Path(args.aggregate).with_name("importance_top.json")
    top = _load_json(top_path) if top_path.is_file() else None
    atomic_write_text(_out(args, "report.md"), render(agg, top))
    return 0


COMMANDS = {
    "ingest": cmd_ingest, "label": cmd_label, "featurize": cmd_featurize, "synth": cmd_synth,
    "train": cmd_train, "tune": cmd_tune, "evaluate": cmd_evaluate, "importance": cmd_importance,
    "run": cmd_run, "report": cmd_report,
}


def _category(exc: InsiderForestError) -> str:
    for base in (ConfigError, DataError, NumericError):
        if isinstance(exc, base):
            return base.__name__
    return "InsiderForestError"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InsiderForestError as exc:
        cat, kind = _category(exc), type(exc).__name__
        label = cat if cat == kind else f"{cat}/{kind}"
        print(f"{label}: {exc}".replace("\n", " "), file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"ConfigError: {exc}".replace("\n", " "), file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
