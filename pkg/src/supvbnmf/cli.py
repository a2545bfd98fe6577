"""Command line interface.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors (unreadable or
malformed inputs, dimension mismatches).
"""

import argparse
import configparser
import csv
import logging
import sys
from pathlib import Path

from . import archive
from .corpus import CorpusFormatError
from .evaluation import REPORT_FIELDS, default_k, evaluate, knn_classify
from .harness import (
    ExperimentConfig,
    _cell,
    fit_method,
    prepare_features,
    project_method,
    run_experiment,
)
from .supervised import SupervisedModel
from .vbnmf import DegenerateStateError

logger = logging.getLogger("supvbnmf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _read_model_section(path):
    """Defaults for fit flags from the [model] section of a config file."""
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    if not parser.has_section("model"):
        return {}
    m = parser["model"]
    conv = {"method": str, "rank": int, "a_lambda": float, "a_v": float, "seed": int,
            "max_iters": int, "tol": float, "burn_in": int}
    return {k: fn(m[k]) for k, fn in conv.items() if k in m}


def _features(args):
    if getattr(args, "features", None):
        return archive.load_features(args.features)
    if getattr(args, "config", None):
        return prepare_features(ExperimentConfig.from_file(args.config))
    raise UsageError("need --features or --config")


def cmd_ingest(args):
    overrides = {"vocab_cap": args.vocab_cap} if args.vocab_cap is not None else {}
    config = ExperimentConfig.from_file(args.config, **overrides)
    f = prepare_features(config)
    archive.save_features(args.out, f["X_train"], f["X_test"], f["y_train"], f["y_test"],
                          f["n_labels"], f["term_ids"], f["idf"])
    print(f"{args.out}: {f['X_train'].shape[0]} terms, {f['X_train'].shape[1]} train / "
          f"{f['X_test'].shape[1]} test documents, {f['n_labels']} labels")


def cmd_fit(args):
    settings = {"method": "supervised", "rank": 40, "a_lambda": 1.0, "a_v": 1.0, "seed": 0,
                "max_iters": 200, "tol": 1e-6, "burn_in": 10}
    if args.config:
        settings.update(_read_model_section(args.config))
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    f = _features(args)
    model, _ = fit_method(f["X_train"], f["y_train"], f["n_labels"], settings["method"],
                          settings["rank"], settings["seed"], settings["max_iters"],
                          settings["tol"], settings["a_lambda"], settings["a_v"],
                          settings["burn_in"])
    archive.save_model(args.out, model)
    for w in getattr(model, "warnings", []):
        logger.warning(w)
    print(f"{args.out}: {settings['method']} model, rank {settings['rank']}")


def _method_name(model):
    if isinstance(model, SupervisedModel):
        return "supervised"
    return "pca" if not hasattr(model, "T") else "vbnmf"


def _train_coords(model, X_train):
    if hasattr(model, "V"):
        if model.V.E.shape[1] != X_train.shape[1]:
            raise ValueError(f"model was fit on {model.V.E.shape[1]} documents, "
                             f"features have {X_train.shape[1]}")
        return model.V.E
    return project_method(model, X_train)


def _check_terms(model, X):
    n_terms = model.mean.size if not hasattr(model, "T") else model.n_terms
    if X.shape[0] != n_terms:
        raise ValueError(f"shape mismatch: model has {n_terms} terms, "
                         f"features have {X.shape[0]}")


def cmd_project(args):
    f = _features(args)
    model = archive.load_model(args.model)
    _check_terms(model, f["X_train"])
    train = _train_coords(model, f["X_train"])
    test = project_method(model, f["X_test"], args.max_iters, args.tol)
    archive.save_coords(args.out, train, test, _method_name(model))
    print(f"{args.out}: {test.shape[0]} x {test.shape[1]} test coordinates")


def cmd_classify(args):
    f = _features(args)
    _, train, test = archive.load_coords(args.coords)
    if train.shape[1] != f["y_train"].size or test.shape[1] != f["y_test"].size:
        raise ValueError("coordinates do not match the documents of the feature set")
    k = args.k or default_k(f["y_train"].size)
    pred = knn_classify(train, f["y_train"], test, k)
    text = "".join(f"{i}\t{int(p)}\n" for i, p in enumerate(pred))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_evaluate(args):
    f = _features(args)
    model = archive.load_model(args.model)
    _check_terms(model, f["X_train"])
    train = _train_coords(model, f["X_train"])
    test = project_method(model, f["X_test"], args.max_iters, args.tol)
    hyper = getattr(model, "hyper", None)
    report = evaluate(train, f["y_train"], test, f["y_test"], f["n_labels"],
                      _method_name(model), train.shape[0], getattr(model, "seed", 0),
                      k=args.k, a_lambda=getattr(hyper, "a_lambda", None),
                      a_v=getattr(hyper, "a_v", None) if not isinstance(model, SupervisedModel) else None)
    report.iterations = getattr(model, "iterations_run", 0)
    row = report.row()
    row["wall_time_s"] = None
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        w.writerow([_cell(row[k]) for k in REPORT_FIELDS])
    finally:
        if args.out:
            out.close()


def cmd_experiment(args):
    overrides = {"output": args.out, "restarts": args.restarts, "seed": args.seed}
    config = ExperimentConfig.from_file(args.config, **overrides)
    result = run_experiment(config)
    failed = sum(r.status != "ok" for r in result.rows)
    print(f"{config.output}: {len(result.rows)} runs, {failed} failed")


def build_parser():
    p = _Parser(prog="supvbnmf", description="Supervised variational Bayesian NMF for "
                "document classification.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("ingest", help="build TF-IDF features from a corpus config")
    s.add_argument("--config", required=True)
    s.add_argument("--vocab-cap", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit", help="fit a model on the training split")
    s.add_argument("--config")
    s.add_argument("--features")
    s.add_argument("--method", choices=("pca", "vbnmf", "supervised"))
    s.add_argument("--rank", type=int)
    s.add_argument("--a-lambda", dest="a_lambda", type=float)
    s.add_argument("--a-v", dest="a_v", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--max-iters", dest="max_iters", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--burn-in", dest="burn_in", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    for name, func, help_text in (
            ("project", cmd_project, "coordinates of training and test documents"),
            ("evaluate", cmd_evaluate, "project, classify and score one model")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config")
        s.add_argument("--features")
        s.add_argument("--model", required=True)
        s.add_argument("--max-iters", dest="max_iters", type=int, default=200)
        s.add_argument("--tol", type=float, default=1e-6)
        s.add_argument("--out", required=(name == "project"))
        if name == "evaluate":
            s.add_argument("--k", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("classify", help="k-NN labels for projected test documents")
    s.add_argument("--config")
    s.add_argument("--features")
    s.add_argument("--coords", required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("experiment", help="run a sweep described by a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--restarts", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except (OSError, configparser.Error, CorpusFormatError, archive.ArchiveError, DegenerateStateError,
            ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
