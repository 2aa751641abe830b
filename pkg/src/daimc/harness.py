"""Experiment driver: data -> mask -> fit -> k-means -> metrics -> reports."""

import argparse
import csv
import io
import itertools
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model, seminmf
from .dataset import (apply_incomplete_rate, incomplete_indicator, load_manifest,
                      save_manifest, synth_planted, write_matrix)
from .errors import DaimcError, InvalidInputError
from .evaluation import accuracy, kmeans, nmi

log = logging.getLogger(__name__)

METHODS = ("daimc", "seminmf_concat", "seminmf_fill")
METRICS = ("nmi", "ac", "objective", "iterations", "n_evaluated")
SYNTH_KEYS = ("n_per_cluster", "k_clusters", "n_views", "dims", "separation",
              "noise_sd", "seed")
DAIMC_KEYS = ("outer_tol", "inner_tol", "outer_max", "inner_max", "epsilon")


class StageError(Exception):
    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    manifest: str | None = None
    synth: dict | None = None
    rates: list = field(default_factory=lambda: [0.0])
    alphas: list = field(default_factory=lambda: [1e1])
    betas: list = field(default_factory=lambda: [1e0])
    seeds: list = field(default_factory=lambda: [0])
    methods: list = field(default_factory=lambda: ["daimc"])
    k: int | None = None
    view_counts: list | None = None
    kmeans_restarts: int = 20
    daimc: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.manifest is None) == (self.synth is None):
            raise InvalidInputError("exactly one of 'manifest' and 'synth' is required")
        for name in ("rates", "alphas", "betas", "seeds", "methods"):
            if not getattr(self, name):
                raise InvalidInputError(f"'{name}' must be a non-empty list")
        self.rates = [float(r) for r in self.rates]
        self.alphas = [float(a) for a in self.alphas]
        self.betas = [float(b) for b in self.betas]
        self.seeds = [int(x) for x in self.seeds]
        if any(not 0.0 <= r <= 0.5 for r in self.rates):
            raise InvalidInputError("rates must lie in [0, 0.5]")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise InvalidInputError(f"unknown methods {sorted(unknown)}")
        if self.synth is not None:
            missing = set(SYNTH_KEYS) - set(self.synth)
            if missing:
                raise InvalidInputError(f"synth spec lacks {sorted(missing)}")
        bad = set(self.daimc) - set(DAIMC_KEYS)
        if bad:
            raise InvalidInputError(f"unknown daimc options {sorted(bad)}")
        if self.view_counts is not None and not self.view_counts:
            raise InvalidInputError("'view_counts' must be non-empty when given")

    @classmethod
    def from_dict(cls, d, base=None):
        d = dict(d)
        data = d.pop("data", None)
        if data is not None:
            d.update(data)
        if d.get("manifest") and base is not None:
            d["manifest"] = str(Path(base) / d["manifest"])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidInputError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def load_data(cfg):
    if cfg.manifest is not None:
        try:
            return load_manifest(cfg.manifest)
        except (OSError, DaimcError) as exc:
            raise StageError("load_manifest", exc) from exc
    try:
        return synth_planted(**{k: cfg.synth[k] for k in SYNTH_KEYS})
    except DaimcError as exc:
        raise StageError("synth_planted", exc) from exc


# --- baselines --------------------------------------------------------------

def fill_missing(ds):
    """Per-view copies with missing columns set to the mean of present columns."""
    out = []
    for i, x in enumerate(ds.views):
        m = ds.mask(i)
        x = np.array(x)
        x[:, ~m] = x[:, m].mean(axis=1, keepdims=True)
        out.append(x)
    return out


def _fit_seminmf(x, k, seed):
    res = seminmf.fit(x, k, seed=seed)
    return res.v, {"U": res.u, "V": res.v}, res.trace, res.n_iter


def run_method(ds, method, k, alpha, beta, seed, daimc_opts=None):
    """Fit ``method``; returns (latent, instance index, factors, trace, n_iter)."""
    n = ds.n_instances
    if method == "daimc":
        hp = model.Hyperparams(alpha=alpha, beta=beta, k=k, seed=seed,
                               **(daimc_opts or {}))
        st = model.fit(ds, hp)
        factors = {"V": st.latent}
        for i in range(ds.n_views):
            factors[f"U{i + 1}"] = st.basis[i]
            factors[f"B{i + 1}"] = st.regression[i]
        return st.latent, np.arange(n), factors, st.objective_trace, st.n_iter
    if method == "seminmf_fill":
        v, factors, trace, it = _fit_seminmf(np.vstack(fill_missing(ds)), k, seed)
        return v, np.arange(n), factors, trace, it
    if method == "seminmf_concat":
        rows = np.flatnonzero(ds.indicator.min(axis=0) == 1)
        if rows.size < k + 1:
            raise InvalidInputError(
                f"only {rows.size} instances are present in every view")
        x = np.vstack([v[:, rows] for v in ds.views])
        v, factors, trace, it = _fit_seminmf(x, k, seed)
        return v, rows, factors, trace, it
    raise InvalidInputError(f"unknown method {method!r}")


# --- one configuration ------------------------------------------------------

def run_cell(ds, method, rate, alpha, beta, seed, k, n_views=None,
             restarts=20, daimc_opts=None, indicator=None, keep_factors=False):
    """Execute one configuration on a complete dataset ``ds``.

    ``indicator`` (full view set) may be supplied to share masks across cells.
    With ``n_views`` only the first views are used; instances absent from all
    of them get the extra prediction label ``k`` (unassigned).
    """
    n_views = ds.n_views if n_views is None else n_views
    rec = {"method": method, "n_views": n_views, "rate": rate, "alpha": alpha,
           "beta": beta, "seed": seed, "status": "ok", "stage": None, "error": None}
    stage = "apply_incomplete_rate"
    t0 = time.perf_counter()
    try:
        if indicator is None:
            masked = apply_incomplete_rate(ds, rate, seed)
        else:
            masked = ds.with_indicator(indicator)
        sub, kept = masked.select_views(range(n_views))
        stage = "fit"
        latent, rows, factors, trace, n_iter = run_method(
            sub, method, k, alpha, beta, seed, daimc_opts)
        stage = "kmeans"
        assign = kmeans(latent, k, restarts=restarts, seed=seed).assignments
        stage = "metrics"
        idx = kept[rows]
        if method == "seminmf_concat":
            truth = None if ds.labels is None else ds.labels[idx]
            pred = assign
        else:
            pred = np.full(ds.n_instances, k, dtype=np.int64)
            pred[idx] = assign
            truth = ds.labels
        rec.update(objective=float(trace[-1]), iterations=int(n_iter),
                   n_evaluated=int(len(pred)), trace=[float(t) for t in trace])
        if truth is not None:
            rec.update(nmi=nmi(truth, pred), ac=accuracy(truth, pred))
        else:
            rec.update(nmi=None, ac=None)
        if keep_factors:
            rec["_factors"] = factors
    except Exception as exc:  # noqa: BLE001 - recorded per cell
        rec.update(status="error", stage=stage, error=f"{type(exc).__name__}: {exc}")
    rec["wall_time"] = time.perf_counter() - t0
    return rec


# --- reports ----------------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


KEY = ("method", "n_views", "rate", "alpha", "beta")


def aggregate(records):
    groups = {}
    for r in records:
        groups.setdefault(tuple(r[k] for k in KEY), []).append(r)
    rows = []
    for key in sorted(groups):
        recs = groups[key]
        ok = [r for r in recs if r["status"] == "ok"]
        row = dict(zip(KEY, key), n_ok=len(ok), n_failed=len(recs) - len(ok))
        for m in METRICS:
            vals = [r[m] for r in ok if r.get(m) is not None]
            if vals:
                row[f"{m}_mean"] = float(np.mean(vals))
                row[f"{m}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            else:
                row[f"{m}_mean"] = row[f"{m}_std"] = None
        rows.append(row)
    return rows


def long_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(KEY) + ["seed", "metric", "value"])
    for r in records:
        if r["status"] != "ok":
            continue
        for m in METRICS:
            if r.get(m) is not None:
                w.writerow([_fmt(r[k]) for k in KEY] + [r["seed"], m, _fmt(r[m])])
    return buf.getvalue()


def aggregate_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(KEY) + ["metric", "mean", "std", "n"])
    for row in rows:
        for m in METRICS:
            w.writerow([_fmt(row[k]) for k in KEY]
                       + [m, _fmt(row[f"{m}_mean"]), _fmt(row[f"{m}_std"]), row["n_ok"]])
    return buf.getvalue()


def _clean(rec):
    return {k: v for k, v in rec.items() if not k.startswith("_")}


def write_report(out, cfg, records, extra=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    records = sorted(records, key=lambda r: tuple(r[k] for k in KEY) + (r["seed"],))
    agg = aggregate(records)
    (out / "report.csv").write_text(long_csv(records))
    (out / "aggregate.csv").write_text(aggregate_csv(agg))
    doc = {"config": cfg.to_dict() if cfg is not None else None,
           "records": [_clean(r) for r in records], "aggregates": agg}
    doc.update(extra or {})
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    return {"records": records, "aggregates": agg}


def write_factors(directory, factors, sidecar):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for name, a in factors.items():
        write_matrix(directory / f"{name}.csv", a)
        shapes[name] = list(np.shape(a))
    doc = dict(sidecar, shapes=shapes,
               files={name: f"{name}.csv" for name in factors})
    (directory / "factors.json").write_text(json.dumps(doc, indent=2) + "\n")


def _resolve_k(cfg, ds):
    if cfg.k is not None:
        return int(cfg.k)
    if ds.labels is None:
        raise InvalidInputError("k must be given when the data has no labels")
    return int(np.unique(ds.labels).size)


def _fail_report(out, cfg, stage, exc):
    rec = {"status": "error", "stage": stage, "error": f"{type(exc).__name__}: {exc}"}
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(
        {"config": cfg.to_dict() if cfg else None, "records": [rec],
         "aggregates": []}, indent=2) + "\n")
    return rec


def cmd_run(cfg, out):
    """Single configuration; returns the process exit status."""
    lists = (cfg.rates, cfg.alphas, cfg.betas, cfg.seeds, cfg.methods)
    if any(len(x) != 1 for x in lists):
        raise InvalidInputError("run expects exactly one value per list")
    try:
        ds = load_data(cfg)
        k = _resolve_k(cfg, ds)
    except StageError as exc:
        _fail_report(out, cfg, exc.stage, exc.cause)
        return 1
    except DaimcError as exc:
        _fail_report(out, cfg, "setup", exc)
        return 1
    n_views = cfg.view_counts[0] if cfg.view_counts else None
    rec = run_cell(ds, cfg.methods[0], cfg.rates[0], cfg.alphas[0], cfg.betas[0],
                   cfg.seeds[0], k, n_views, cfg.kmeans_restarts, cfg.daimc,
                   keep_factors=True)
    write_report(out, cfg, [rec])
    if rec["status"] != "ok":
        return 1
    hp = {"alpha": cfg.alphas[0], "beta": cfg.betas[0], "k": k, "seed": cfg.seeds[0],
          "rate": cfg.rates[0], "method": cfg.methods[0], **cfg.daimc}
    write_factors(Path(out) / "factors", rec["_factors"],
                  {"hyperparams": hp, "objective_trace": rec["trace"],
                   "iterations": rec["iterations"]})
    return 0


def _cell_job(args):
    ds, kwargs = args
    return run_cell(ds, **kwargs)


def sweep(cfg, workers=1):
    """All cells of the grid; returns (records, failures_all)."""
    ds = load_data(cfg)
    k = _resolve_k(cfg, ds)
    view_counts = cfg.view_counts or [ds.n_views]
    masks = {}
    for rate, seed in itertools.product(cfg.rates, cfg.seeds):
        masks[rate, seed] = incomplete_indicator(ds.n_views, ds.n_instances, rate, seed)
    jobs = []
    for method, nv, rate, seed in itertools.product(cfg.methods, view_counts,
                                                    cfg.rates, cfg.seeds):
        grid = (itertools.product(cfg.alphas, cfg.betas) if method == "daimc"
                else [(cfg.alphas[0], cfg.betas[0])])
        for alpha, beta in grid:
            jobs.append(dict(method=method, rate=rate, alpha=alpha, beta=beta,
                             seed=seed, k=k, n_views=nv, restarts=cfg.kmeans_restarts,
                             daimc_opts=cfg.daimc, indicator=masks[rate, seed]))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, [(ds, j) for j in jobs]))
    else:
        results = [run_cell(ds, **j) for j in jobs]
    records = []
    for rec in results:
        if rec["method"] == "daimc":
            records.append(rec)
            continue
        # baselines ignore alpha/beta; replicate across the grid
        for alpha, beta in itertools.product(cfg.alphas, cfg.betas):
            records.append(dict(rec, alpha=alpha, beta=beta))
    return records


def cmd_sweep(cfg, out, workers=1):
    try:
        records = sweep(cfg, workers)
    except StageError as exc:
        _fail_report(out, cfg, exc.stage, exc.cause)
        return 1
    except DaimcError as exc:
        _fail_report(out, cfg, "setup", exc)
        return 1
    write_report(out, cfg, records)
    failed = sum(r["status"] != "ok" for r in records)
    if failed:
        log.warning("%d of %d cells failed", failed, len(records))
    return 1 if failed == len(records) else 0


def cmd_synth(spec, out):
    missing = set(SYNTH_KEYS) - set(spec)
    if missing:
        raise InvalidInputError(f"synth spec lacks {sorted(missing)}")
    ds = synth_planted(**{k: spec[k] for k in SYNTH_KEYS})
    return save_manifest(ds, out)


# --- command line -----------------------------------------------------------

def _read_json(arg):
    if arg.lstrip().startswith("{"):
        return json.loads(arg), None
    path = Path(arg)
    return json.loads(path.read_text()), path.parent


def build_parser():
    p = argparse.ArgumentParser(prog="daimc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a single configuration")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--synth", help="synth spec: JSON file or inline JSON")
    r.add_argument("--rate", type=float, default=0.0)
    r.add_argument("--alpha", type=float, default=1e1)
    r.add_argument("--beta", type=float, default=1e0)
    r.add_argument("--k", type=int)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--method", choices=METHODS, default="daimc")
    r.add_argument("--views", type=int, help="use only the first N views")
    r.add_argument("--out", required=True)

    s = sub.add_parser("sweep", help="run a configuration grid")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)

    y = sub.add_parser("synth", help="write a planted-cluster dataset")
    y.add_argument("--spec", required=True, help="JSON file or inline JSON")
    y.add_argument("--out", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            synth = _read_json(args.synth)[0] if args.synth else None
            cfg = ExperimentConfig(
                manifest=args.manifest, synth=synth, rates=[args.rate],
                alphas=[args.alpha], betas=[args.beta], seeds=[args.seed],
                methods=[args.method], k=args.k,
                view_counts=[args.views] if args.views else None)
            return cmd_run(cfg, args.out)
        if args.command == "sweep":
            doc, base = _read_json(args.config)
            cfg = ExperimentConfig.from_dict(doc, base)
            return cmd_sweep(cfg, args.out, args.workers)
        spec, _ = _read_json(args.spec)
        path = cmd_synth(spec, args.out)
        print(path)
        return 0
    except (DaimcError, OSError, json.JSONDecodeError) as exc:
        print(f"daimc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
