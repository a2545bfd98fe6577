"""Experiment runner: grid sweeps with random restarts and CSV reports.

A sweep visits methods, then ranks, then the method's own grid (a_v for the
unsupervised model, a_lambda for the supervised one), then restarts. Run i in
that order uses seed ``base_seed + i``. Rows are always written in that order,
whatever order parallel workers finish in.
"""

import configparser
import csv
import logging
import math
import os
import time
import warnings as _warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from . import archive
from .baselines import PcaModel, pca_fit, pca_project
from .corpus import fit_features, load_corpus
from .evaluation import REPORT_FIELDS, EvalReport, evaluate
from .supervised import SupervisedHyper, SupervisedModel, fit_supervised
from .vbnmf import FitConfig, VbnmfHyper, fit, project

logger = logging.getLogger(__name__)

METHODS = ("pca", "vbnmf", "supervised")
DEFAULT_A_LAMBDA = tuple(float(10 ** (e / 2)) for e in range(-2, 7))


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _words(text):
    return tuple(text.replace(",", " ").split())


@dataclass
class ExperimentConfig:
    counts: str
    vocab: Optional[str]
    labels: str
    train: str
    test: str
    output: str = "results"
    vocab_cap: Optional[int] = 10000
    methods: Tuple[str, ...] = ("supervised",)
    ranks: Tuple[int, ...] = (40,)
    a_lambda: Tuple[float, ...] = DEFAULT_A_LAMBDA
    a_v: Tuple[float, ...] = (0.5, 1.0)
    restarts: int = 10
    max_iters: int = 200
    tol: float = 1e-6
    seed: int = 0
    burn_in: int = 10
    k: Optional[int] = None
    save_models: bool = True
    record_time: bool = False

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        if not self.ranks or min(self.ranks) < 1:
            raise ValueError("ranks must be a nonempty list of positive integers")
        if "supervised" in self.methods and not self.a_lambda:
            raise ValueError("a_lambda grid is empty")
        if "vbnmf" in self.methods and not self.a_v:
            raise ValueError("a_v grid is empty")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    @classmethod
    def from_file(cls, path, **overrides):
        """Read an ini-style file with [corpus], [experiment] and [output] sections.

        Relative corpus and output paths are resolved against the file's directory.
        """
        parser = configparser.ConfigParser()
        if not parser.read(path, encoding="utf-8"):
            raise FileNotFoundError(path)
        base = Path(path).resolve().parent
        kw = {}
        if parser.has_section("corpus"):
            c = parser["corpus"]
            for key in ("counts", "vocab", "labels", "train", "test"):
                if key in c:
                    kw[key] = str(base / c[key])
            if "vocab_cap" in c:
                kw["vocab_cap"] = None if c["vocab_cap"] in ("", "none") else int(c["vocab_cap"])
        if parser.has_section("experiment"):
            e = parser["experiment"]
            conv = {"methods": _words, "ranks": _ints, "a_lambda": _floats, "a_v": _floats,
                    "restarts": int, "max_iters": int, "tol": float, "seed": int,
                    "burn_in": int, "k": int}
            for key, fn in conv.items():
                if key in e:
                    kw[key] = fn(e[key])
        if parser.has_section("output"):
            o = parser["output"]
            if "dir" in o:
                kw["output"] = str(base / o["dir"])
            for key in ("save_models", "record_time"):
                if key in o:
                    kw[key] = o.getboolean(key)
        kw.setdefault("vocab", None)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        missing = [k for k in ("counts", "labels", "train", "test") if k not in kw]
        if missing:
            raise ValueError(f"config lacks corpus entries: {missing}")
        return cls(**kw)


@dataclass
class RunSpec:
    index: int
    method: str
    rank: int
    seed: int
    a_lambda: Optional[float] = None
    a_v: Optional[float] = None

    @property
    def name(self):
        parts = [self.method, f"r{self.rank}"]
        if self.a_lambda is not None:
            parts.append(f"al{self.a_lambda:g}")
        if self.a_v is not None:
            parts.append(f"av{self.a_v:g}")
        parts.append(f"s{self.seed}")
        return "_".join(parts)


@dataclass
class SweepResult:
    rows: List[EvalReport]
    traces: dict = field(default_factory=dict)

    def summary(self):
        """mean/min/max accuracy per (method, rank, a_lambda, a_v), failed runs excluded."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r.method, r.rank, r.a_lambda, r.a_v), []).append(r)
        out = []
        for (method, rank, a_lambda, a_v), rows in groups.items():
            ok = [r for r in rows if r.status == "ok"]
            entry = {"method": method, "rank": rank, "a_lambda": a_lambda, "a_v": a_v,
                     "runs": len(rows), "failed": len(rows) - len(ok)}
            for metric in ("micro", "macro", "inter_label_sparsity"):
                vals = np.array([getattr(r, metric) for r in ok], dtype=float)
                if vals.size:
                    entry[f"{metric}_mean"] = float(np.mean(vals))
                    entry[f"{metric}_min"] = float(np.min(vals))
                    entry[f"{metric}_max"] = float(np.max(vals))
                else:
                    entry[f"{metric}_mean"] = entry[f"{metric}_min"] = entry[f"{metric}_max"] = math.nan
            out.append(entry)
        return out


def plan_runs(config):
    specs = []
    for method in config.methods:
        for rank in config.ranks:
            grid = {"pca": [{}],
                    "vbnmf": [{"a_v": a} for a in config.a_v],
                    "supervised": [{"a_lambda": a} for a in config.a_lambda]}[method]
            for point in grid:
                for _ in range(config.restarts):
                    specs.append(RunSpec(len(specs), method, rank, config.seed + len(specs), **point))
    return specs


def prepare_features(config):
    split = load_corpus(config.counts, config.vocab, config.labels, config.train, config.test)
    train, space = fit_features(split.train, config.vocab_cap)
    test = space.transform(split.test)
    return {"X_train": train.X, "X_test": test.X, "y_train": split.y_train,
            "y_test": split.y_test, "n_labels": split.n_labels,
            "term_ids": space.term_ids, "idf": space.idf}


def fit_method(X_train, y_train, n_labels, method, rank, seed, max_iters=200, tol=1e-6,
               a_lambda=None, a_v=None, burn_in=10):
    """Fit one model and return ``(model, train_coords)``."""
    cfg = FitConfig(rank, max_iters, tol, seed)
    if method == "pca":
        model = pca_fit(X_train, rank)
        return model, pca_project(X_train, model)
    if method == "vbnmf":
        model = fit(X_train, cfg, VbnmfHyper(a_v=1.0 if a_v is None else a_v))
        return model, model.V.E
    if method == "supervised":
        hyper = SupervisedHyper(a_lambda=1.0 if a_lambda is None else a_lambda, burn_in=burn_in)
        model = fit_supervised(X_train, y_train, cfg, hyper, n_labels)
        return model, model.V.E
    raise ValueError(f"unknown method {method!r}")


def project_method(model, X, max_iters=200, tol=1e-6):
    """Coordinates of new documents under a fitted model (fixed components)."""
    if isinstance(model, PcaModel):
        return pca_project(X, model)
    if X.shape[0] != model.n_terms:
        raise ValueError(f"documents have {X.shape[0]} terms, model has {model.n_terms}")
    hyper = model.coefficient_prior() if isinstance(model, SupervisedModel) else model.hyper
    cfg = FitConfig(model.rank, max_iters, tol, model.seed)
    return project(X, model.T, hyper, cfg).E


def _execute(features, spec, config):
    start = time.perf_counter()
    meta = {"a_lambda": spec.a_lambda, "a_v": spec.a_v}
    try:
        model, train_coords = fit_method(
            features["X_train"], features["y_train"], features["n_labels"], spec.method,
            spec.rank, spec.seed, config.max_iters, config.tol, spec.a_lambda, spec.a_v,
            config.burn_in)
        test_coords = project_method(model, features["X_test"], config.max_iters, config.tol)
        report = evaluate(train_coords, features["y_train"], test_coords, features["y_test"],
                          features["n_labels"], spec.method, spec.rank, spec.seed,
                          k=config.k, **meta)
        report.iterations = getattr(model, "iterations_run", 0)
        for w in getattr(model, "warnings", []):
            logger.warning("%s: %s", spec.name, w)
        trace = list(getattr(model, "bound_trace", []))
    except Exception as exc:  # a failed run is reported, the sweep goes on
        logger.error("run %s failed: %s", spec.name, exc)
        model, trace = None, []
        report = EvalReport(spec.method, spec.rank, spec.seed, math.nan, math.nan, math.nan,
                            math.nan, status=f"failed: {type(exc).__name__}: {exc}", **meta)
    report.wall_time_s = time.perf_counter() - start
    return report, model, trace


def _worker(args):
    features, spec, config = args
    report, model, trace = _execute(features, spec, config)
    if model is not None and config.save_models:
        model_dir = Path(config.output) / "models"
        archive.save_model(model_dir / f"{spec.index:04d}_{spec.name}.npa", model)
    return report, trace


def thread_count():
    raw = os.environ.get("NMF_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"NMF_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run_experiment(config, features=None):
    """Run every grid point and restart; write the reports to ``config.output``."""
    features = features if features is not None else prepare_features(config)
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    if config.save_models:
        (out / "models").mkdir(exist_ok=True)
    specs = plan_runs(config)
    jobs = [(features, s, config) for s in specs]
    workers = min(thread_count(), len(specs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_worker, jobs))
    else:
        done = [_worker(job) for job in jobs]
    result = SweepResult([r for r, _ in done],
                         {f"{s.index:04d}_{s.name}": t for s, (_, t) in zip(specs, done)})
    write_reports(result, out, config.record_time)
    return result


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_results(rows, path, record_time=False):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in rows:
            row = r.row()
            if not record_time:
                row["wall_time_s"] = None
            w.writerow([_cell(row[k]) for k in REPORT_FIELDS])


def write_summary(result, path):
    summary = result.summary()
    fields = ["method", "rank", "a_lambda", "a_v", "runs", "failed"] + [
        f"{m}_{s}" for m in ("micro", "macro", "inter_label_sparsity")
        for s in ("mean", "min", "max")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for entry in summary:
            w.writerow([_cell(entry[f]) for f in fields])


def write_trace(trace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "bound"])
        for i, value in enumerate(trace, 1):
            w.writerow([i, repr(float(value))])


def correlations(x, y):
    """Pearson and Spearman coefficients; nan when either is undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.all(x == x[0]) or np.all(y == y[0]):
        return math.nan, math.nan
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        return float(stats.pearsonr(x, y)[0]), float(stats.spearmanr(x, y)[0])


def emit_scatter(rows, path):
    """Inter-label sparsity vs micro accuracy of supervised runs, with correlations."""
    rows = [r for r in rows if r.method == "supervised" and r.status == "ok"]
    if len(rows) < 2:
        raise ValueError("emit_scatter needs at least two successful supervised runs")
    x = [r.inter_label_sparsity for r in rows]
    y = [r.micro for r in rows]
    pearson, spearman = correlations(x, y)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["inter_label_sparsity", "micro", "rank", "a_lambda", "seed"])
        for r in rows:
            w.writerow([_cell(r.inter_label_sparsity), _cell(r.micro), r.rank,
                        _cell(r.a_lambda), r.seed])
        fh.write(f"# pearson={_cell(pearson)}\n# spearman={_cell(spearman)}\n")
    return pearson, spearman


def write_reports(result, out, record_time=False):
    out = Path(out)
    write_results(result.rows, out / "results.csv", record_time)
    write_summary(result, out / "summary.csv")
    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    for name, trace in result.traces.items():
        if trace:
            write_trace(trace, trace_dir / f"{name}_bound_trace.csv")
    ok_sup = [r for r in result.rows if r.method == "supervised" and r.status == "ok"]
    if len(ok_sup) >= 2:
        emit_scatter(result.rows, out / "scatter.csv")
