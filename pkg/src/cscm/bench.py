"""Monte Carlo mean squared error study of the three estimators.

Each replicate draws one sample with seed ``base_seed + replicate``, fits
the MSLE and both plug-in estimators, and records squared errors at every
evaluation point. Replicates are independent, so they may run in worker
processes; results are reduced in replicate order, which makes the output
independent of the number of workers.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyCellError, UndefinedNodeError, ZeroDenominatorError
from .histogram import DEFAULT_L, build_histogram, default_k, make_grid
from .model import ModelSpec, model_from_name
from .msle import fit_msle
from .plugin import grid_cdf_eval, kernel_plugin_cdf, plugin_grid_cdf
from .sampler import draw_sample

MSLE = "msle"
PLUGIN_GRID = "plugin_grid"
PLUGIN_KERNEL = "plugin_kernel"
BINNED_MLE = "binned_mle"
ESTIMATORS = (MSLE, PLUGIN_GRID, PLUGIN_KERNEL)
EMPTY_POLICIES = ("exclude", "fit")
THREADS_ENV = "CSCM_THREADS"

# Published MSEs on the polynomial model at z0 = 0.6, from 10 000 samples each.
REFERENCE_Z0 = 0.6
PUBLISHED_MSE = {
    (0.2, 500): (2.12e-3, 1.41e-3, 2.81e-3, 7.84e-4),
    (0.2, 1000): (1.86e-3, 7.73e-4, 1.53e-3, 2.01e-4),
    (0.2, 5000): (3.19e-4, 1.96e-4, 2.04e-4, 1.49e-4),
    (0.2, 10000): (1.35e-4, 1.11e-4, 9.59e-5, 1.13e-4),
    (0.4, 500): (8.39e-4, 1.25e-3, 9.07e-4, 1.21e-3),
    (0.4, 1000): (4.90e-4, 7.07e-4, 5.94e-4, 6.74e-4),
    (0.4, 5000): (1.21e-4, 1.90e-4, 1.32e-4, 2.37e-4),
    (0.4, 10000): (8.35e-5, 1.08e-4, 8.95e-5, 1.35e-4),
    (0.6, 500): (6.32e-4, 1.17e-3, 8.21e-4, 1.38e-3),
    (0.6, 1000): (3.71e-4, 6.86e-4, 5.31e-4, 7.79e-4),
    (0.6, 5000): (1.48e-4, 1.86e-4, 1.21e-4, 2.11e-4),
    (0.6, 10000): (7.80e-5, 1.06e-4, 9.21e-5, 1.31e-4),
    (0.8, 500): (6.71e-4, 9.43e-4, 5.91e-4, 1.39e-3),
    (0.8, 1000): (5.88e-4, 5.85e-4, 3.14e-4, 8.59e-4),
    (0.8, 5000): (9.65e-5, 1.81e-4, 5.61e-5, 2.27e-4),
    (0.8, 10000): (5.84e-5, 1.04e-4, 3.25e-5, 1.39e-4),
}
_TABLE_COLUMNS = (MSLE, PLUGIN_GRID, PLUGIN_KERNEL, BINNED_MLE)
STUDY_POINTS = ((0.2, 0.6), (0.4, 0.6), (0.6, 0.6), (0.8, 0.6))
RATIO_BAND = (0.5, 2.0)
KERNEL_SCALE = 0.8


def default_bandwidth(n: int) -> float:
    """Kernel bandwidth ``0.8 n^(-1/5)``, tuned by simulation on the polynomial model."""
    return KERNEL_SCALE * n ** -0.2


def reference_value(t0, z0, n, estimator):
    """Published MSE for a cell of the reference table, or None."""
    if estimator not in _TABLE_COLUMNS or not math.isclose(z0, REFERENCE_Z0):
        return None
    for (t_ref, n_ref), vals in PUBLISHED_MSE.items():
        if n_ref == n and math.isclose(t_ref, t0):
            return vals[_TABLE_COLUMNS.index(estimator)]
    return None


@dataclass(frozen=True)
class BenchConfig:
    """Settings of one study.

    ``msle_k = None`` picks the time cell count from the sample size with
    :func:`~cscm.histogram.default_k`, and ``bandwidth = None`` uses
    :func:`default_bandwidth`. ``empty_cells`` decides what happens
    to MSLE replicates whose histogram has an empty cell: ``"exclude"``
    drops them, ``"fit"`` fits them anyway.
    """

    model: ModelSpec
    sample_sizes: tuple = (500, 1000)
    replicates: int = 500
    eval_points: tuple = STUDY_POINTS
    msle_k: int | None = None
    msle_l: int = DEFAULT_L
    plugin_k: int = 10
    plugin_l: int = 5
    bandwidth: float | None = None
    base_seed: int = 0
    tol: float = 1e-10
    empty_cells: str = "fit"

    def __post_init__(self):
        if not isinstance(self.model, ModelSpec):
            raise ValueError("model must be a built-in ModelSpec")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        sizes = tuple(int(n) for n in self.sample_sizes)
        if not sizes or min(sizes) < 1:
            raise ValueError("sample sizes must be positive")
        points = tuple((float(t), float(z)) for t, z in self.eval_points)
        for t0, z0 in points:
            if not (0 < t0 < self.model.m1 and 0 < z0 < self.model.m2):
                raise ValueError(f"evaluation point {(t0, z0)} is not interior to the support")
        if self.empty_cells not in EMPTY_POLICIES:
            raise ValueError(f"empty_cells must be one of {EMPTY_POLICIES}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "sample_sizes", sizes)
        object.__setattr__(self, "eval_points", points)

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.kind
        d["sample_sizes"] = list(self.sample_sizes)
        d["eval_points"] = [list(p) for p in self.eval_points]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "model" not in d:
            raise ValueError("config needs a model")
        d["model"] = model_from_name(str(d["model"]))
        if "sample_sizes" in d:
            d["sample_sizes"] = tuple(d["sample_sizes"])
        if "eval_points" in d:
            d["eval_points"] = tuple(tuple(p) for p in d["eval_points"])
        return cls(**d)


def load_config(path) -> BenchConfig:
    with open(path) as fh:
        return BenchConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class BenchRow:
    t0: float
    z0: float
    n: int
    estimator: str
    mse: float
    mc_stderr: float
    replicates: int
    excluded: int
    reference: float | None = None
    ratio: float | None = None


@dataclass(frozen=True)
class BenchTable:
    rows: tuple
    config: BenchConfig | None = field(default=None, compare=False)

    def get(self, t0, n, estimator, z0=None) -> BenchRow:
        for r in self.rows:
            if (math.isclose(r.t0, t0) and r.n == n and r.estimator == estimator
                    and (z0 is None or math.isclose(r.z0, z0))):
                return r
        raise KeyError((t0, z0, n, estimator))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(table_csv(self))


CSV_COLUMNS = ("t0", "z0", "n", "estimator", "mse", "mc_stderr", "replicates", "excluded",
               "reference", "ratio")


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def table_csv(table: BenchTable) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in table.rows:
        lines.append(",".join(_fmt(getattr(r, c)) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def read_table_csv(path) -> BenchTable:
    rows = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            opt = lambda s: float(s) if s else None  # noqa: E731
            rows.append(BenchRow(float(d["t0"]), float(d["z0"]), int(d["n"]), d["estimator"],
                                 float(d["mse"]) if d["mse"] else math.nan,
                                 float(d["mc_stderr"]) if d["mc_stderr"] else math.nan,
                                 int(d["replicates"]), int(d["excluded"]),
                                 opt(d["reference"]), opt(d["ratio"])))
    return BenchTable(tuple(rows))


# --- one replicate ----------------------------------------------------------

def _replicate(config: BenchConfig, n: int, r: int):
    """Squared errors ``{estimator: [err or None per eval point]}`` for one sample."""
    model = config.model
    sample = draw_sample(model, n, config.base_seed + r)
    pts = config.eval_points
    truth = [float(model.cdf(t0, z0)) for t0, z0 in pts]
    out = {}

    k = config.msle_k if config.msle_k is not None else default_k(n)
    hist = build_histogram(sample, make_grid(model.m1, model.m2, k, config.msle_l))
    try:
        fit = fit_msle(hist, tol=config.tol, allow_empty=config.empty_cells == "fit")
        out[MSLE] = [(float(fit.cdf(t0, z0)) - f) ** 2 for (t0, z0), f in zip(pts, truth)]
    except EmptyCellError:
        out[MSLE] = [None] * len(pts)

    gc = plugin_grid_cdf(sample, make_grid(model.m1, model.m2, config.plugin_k, config.plugin_l))
    errs = []
    for (t0, z0), f in zip(pts, truth):
        try:
            errs.append((grid_cdf_eval(gc, t0, z0) - f) ** 2)
        except UndefinedNodeError:
            errs.append(None)
    out[PLUGIN_GRID] = errs

    bw = config.bandwidth if config.bandwidth is not None else default_bandwidth(n)
    errs = []
    for (t0, z0), f in zip(pts, truth):
        try:
            errs.append((kernel_plugin_cdf(sample, t0, z0, bw) - f) ** 2)
        except ZeroDenominatorError:
            errs.append(None)
    out[PLUGIN_KERNEL] = errs
    return out


def _task(args):
    return _replicate(*args)


def worker_count(workers=None) -> int:
    """Requested workers, capped by ``CSCM_THREADS`` and the CPU count."""
    cap = os.environ.get(THREADS_ENV)
    n = workers if workers is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, int(cap))
    return max(1, int(n))


def _aggregate(config, n, results):
    rows = []
    for p, (t0, z0) in enumerate(config.eval_points):
        for est in ESTIMATORS:
            errs = [res[est][p] for res in results]
            kept = np.array([e for e in errs if e is not None], dtype=float)
            excluded = len(errs) - kept.size
            if kept.size:
                mse = float(kept.mean())
                se = float(kept.std(ddof=1) / math.sqrt(kept.size)) if kept.size > 1 else 0.0
            else:
                mse = se = math.nan
            ref = reference_value(t0, z0, n, est) if config.model.kind == "polynomial" else None
            ratio = mse / ref if ref is not None and kept.size else None
            rows.append(BenchRow(t0, z0, n, est, mse, se, int(kept.size), excluded, ref, ratio))
    return rows


def run_mse_study(config: BenchConfig, workers: int | None = None) -> BenchTable:
    """Estimate the MSE of every estimator at every point and sample size.

    Rows are ordered by sample size, evaluation point and estimator. A
    replicate is excluded for one estimator and point when that estimator
    cannot be evaluated there (empty MSLE cell under the ``"exclude"``
    policy, undefined plug-in node, empty kernel window); the counts are in
    the ``excluded`` column.
    """
    nw = worker_count(workers)
    rows = []
    for n in config.sample_sizes:
        tasks = [(config, n, r) for r in range(config.replicates)]
        if nw == 1:
            results = [_task(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=nw) as ex:
                results = list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * nw))))
        rows.extend(_aggregate(config, n, results))
    return BenchTable(tuple(rows), config)


# --- comparison with the published table ------------------------------------

@dataclass(frozen=True)
class ReferenceEntry:
    t0: float
    z0: float
    n: int
    estimator: str
    measured: float | None
    published: float
    ratio: float | None
    within_band: bool | None


@dataclass(frozen=True)
class ReferenceReport:
    entries: tuple

    @property
    def compared(self):
        return [e for e in self.entries if e.ratio is not None]

    @property
    def flagged(self):
        return [e for e in self.compared if not e.within_band]

    @property
    def pass_fraction(self) -> float:
        c = self.compared
        return sum(e.within_band for e in c) / len(c) if c else math.nan

    def to_dict(self):
        return {"entries": [asdict(e) for e in self.entries],
                "pass_fraction": self.pass_fraction}


def ratio_entry(t0, z0, n, estimator, measured, published) -> ReferenceEntry:
    ratio = measured / published
    lo, hi = RATIO_BAND
    return ReferenceEntry(t0, z0, n, estimator, measured, published, ratio, lo <= ratio <= hi)


def compare_reference(table: BenchTable) -> ReferenceReport:
    """Ratio measured / published for every table row with a published value.

    Ratios outside ``[0.5, 2]`` are flagged. For each compared cell the
    binned MLE value is listed from the published constants; it is never
    computed.
    """
    entries = []
    seen = set()
    for r in table.rows:
        if r.reference is None and reference_value(r.t0, r.z0, r.n, r.estimator) is None:
            continue
        pub = r.reference if r.reference is not None else reference_value(r.t0, r.z0, r.n, r.estimator)
        if math.isnan(r.mse):
            entries.append(ReferenceEntry(r.t0, r.z0, r.n, r.estimator, None, pub, None, None))
        else:
            entries.append(ratio_entry(r.t0, r.z0, r.n, r.estimator, r.mse, pub))
        key = (r.t0, r.z0, r.n)
        if key not in seen:
            seen.add(key)
            entries.append(ReferenceEntry(r.t0, r.z0, r.n, BINNED_MLE, None,
                                          reference_value(r.t0, r.z0, r.n, BINNED_MLE), None, None))
    return ReferenceReport(tuple(entries))
