"""Experiment drivers: 1NN classification, lag analysis, convergence,
runtime and alignment studies.

Every driver returns an :class:`ExperimentReport`, which serializes to
CSV and JSON plot data.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .data import LabeledDataset, YEAR, gen_gaussian_pair, lag_window
from .entropic import HBCDConfig, etaot_distance, hbcd_solve, sinkhorn_fixed_cost
from .errors import InvalidInputError, TiOTError
from .exact import TransportSimplex, solve_discrete_ot, tiot_exact, tiot_lp_dual
from .measures import TimeSeries, build_cost_pair, combine, euclidean_dist, lift_to_measure, zscore_normalize

logger = logging.getLogger(__name__)

DEFAULT_EPS_GRID = tuple(round(0.01 * k, 2) for k in range(1, 11))
CONVERGENCE_EPS = (1 / 2, 1 / 10, 1 / 50, 1 / 100)
SWEEP_SHIFTS = (30, 90, 180, 270)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _parse_scalar(text: str):
    if text == "":
        return None
    if text in ("True", "False"):
        return text == "True"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass
class ExperimentReport:
    kind: str
    parameters: dict
    rows: list[dict]
    wallclock: Optional[list[float]] = None
    summary: dict = field(default_factory=dict)

    def to_json(self, timestamp: bool = True) -> str:
        payload = {
            "kind": self.kind,
            "parameters": self.parameters,
            "summary": self.summary,
            "rows": self.rows,
        }
        if self.wallclock is not None:
            payload["wallclock"] = self.wallclock
        if timestamp:
            payload["created"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        return json.dumps(payload, indent=2, sort_keys=True, default=_json_default)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        d = json.loads(text)
        return cls(d["kind"], d["parameters"], d["rows"], d.get("wallclock"), d.get("summary", {}))

    def to_csv(self) -> str:
        columns: list[str] = []
        for row in self.rows:
            for k in row:
                if k not in columns:
                    columns.append(k)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _csv_cell(row.get(k)) for k in columns})
        return buf.getvalue()

    @staticmethod
    def rows_from_csv(text: str) -> list[dict]:
        reader = csv.DictReader(io.StringIO(text))
        return [{k: _parse_scalar(v) for k, v in row.items()} for row in reader]

    def write(self, out_dir, dataset: str = "", fmt: str = "both", timestamp: bool = True) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{self.kind}_{dataset or 'synthetic'}"
        if timestamp:
            stem += "_" + time.strftime("%Y%m%d-%H%M%S")
        written = []
        if fmt in ("json", "both"):
            p = out_dir / f"{stem}.json"
            p.write_text(self.to_json(timestamp))
            written.append(p)
        if fmt in ("csv", "both"):
            p = out_dir / f"{stem}.csv"
            p.write_text(self.to_csv())
            written.append(p)
        return written


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EtiotMetric:
    """eTiOT transport value ``<C(w), pi>`` computed by HBCD."""

    epsilon: float
    marginal_tol: float = 0.005
    freq: int = 10
    stepsize_rule: str = "adaptive_inverse"
    p: float = 2.0
    max_iters: int = 100_000

    name = "etiot"
    symmetric = True

    def config(self) -> HBCDConfig:
        return HBCDConfig(
            epsilon=self.epsilon,
            marginal_tol=self.marginal_tol,
            freq=self.freq,
            stepsize_rule=self.stepsize_rule,
            max_iters=self.max_iters,
        )

    def __call__(self, x: TimeSeries, y: TimeSeries) -> float:
        alpha, beta = lift_to_measure(x), lift_to_measure(y)
        cp = build_cost_pair(alpha, beta, self.p)
        return hbcd_solve(cp, alpha.weights, beta.weights, self.config()).transport_value


@dataclass(frozen=True)
class EtaotMetric:
    omega: float
    epsilon: float
    marginal_tol: float = 0.005

    name = "etaot"
    symmetric = True

    def __call__(self, x: TimeSeries, y: TimeSeries) -> float:
        return etaot_distance(lift_to_measure(x), lift_to_measure(y), self.omega, self.epsilon, self.marginal_tol)


@dataclass(frozen=True)
class EuclideanMetric:
    name = "ed"
    symmetric = True

    def __call__(self, x: TimeSeries, y: TimeSeries) -> float:
        return euclidean_dist(x, y)


@dataclass(frozen=True)
class ExactTiotMetric:
    p: float = 2.0
    w_tol: float = 1e-9

    name = "tiot"
    symmetric = True

    def __call__(self, x: TimeSeries, y: TimeSeries) -> float:
        alpha, beta = lift_to_measure(x), lift_to_measure(y)
        cp = build_cost_pair(alpha, beta, self.p)
        return tiot_exact(cp, alpha.weights, beta.weights, self.w_tol).distance


def metric_params(metric) -> dict:
    params = asdict(metric) if hasattr(metric, "__dataclass_fields__") else {}
    params["metric"] = getattr(metric, "name", type(metric).__name__)
    return params


# ---------------------------------------------------------------------------
# pairwise distances and cache
# ---------------------------------------------------------------------------


def default_cache_dir() -> Path:
    env = os.environ.get("TIOT_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "tiot"


def _series_digest(series: Sequence[TimeSeries]) -> str:
    h = hashlib.sha256()
    for s in series:
        h.update(np.ascontiguousarray(s.values).tobytes())
        h.update(np.ascontiguousarray(s.timestamps).tobytes())
    return h.hexdigest()


class DistanceCache:
    """Distance matrices on disk as ``<key>.npy`` with a ``<key>.json`` sidecar."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()

    def key(self, rows, cols, metric, tag: str = "") -> tuple[str, dict]:
        meta = {
            "rows": _series_digest(rows),
            "cols": _series_digest(cols),
            "shape": [len(rows), len(cols)],
            "params": metric_params(metric),
            "tag": tag,
            "version": __version__,
        }
        digest = hashlib.sha256(json.dumps(meta, sort_keys=True).encode()).hexdigest()[:24]
        return digest, meta

    def load(self, key: str) -> Optional[np.ndarray]:
        path = self.directory / f"{key}.npy"
        if path.exists():
            try:
                return np.load(path)
            except (OSError, ValueError):
                logger.warning("ignoring unreadable cache file %s", path)
        return None

    def save(self, key: str, matrix: np.ndarray, meta: dict) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        np.save(self.directory / f"{key}.npy", matrix)
        (self.directory / f"{key}.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def _fill_cells(metric, rows, cols, cells):
    out = []
    for i, j in cells:
        try:
            out.append(metric(rows[i], cols[j]))
        except TiOTError as exc:
            raise type(exc)(f"metric failed on pair (row {i}, col {j}): {exc}") from exc
    return out


def pairwise_distances(
    rows: Sequence[TimeSeries],
    cols: Sequence[TimeSeries],
    metric: Callable,
    jobs: int = 1,
    symmetric: bool = False,
    cache: Optional[DistanceCache] = None,
    tag: str = "",
) -> np.ndarray:
    """Matrix ``D[i, j] = metric(rows[i], cols[j])``.

    With ``symmetric`` (``rows is cols`` semantics) only ``i < j`` cells
    are solved and mirrored; the diagonal is zero.
    """
    rows, cols = list(rows), list(cols)
    key = meta = None
    if cache is not None:
        key, meta = cache.key(rows, cols, metric, tag + ("|sym" if symmetric else ""))
        hit = cache.load(key)
        if hit is not None and hit.shape == (len(rows), len(cols)):
            return hit
    if symmetric:
        if len(rows) != len(cols):
            raise InvalidInputError("symmetric fill needs a square matrix")
        cells = [(i, j) for i in range(len(rows)) for j in range(i + 1, len(cols))]
    else:
        cells = [(i, j) for i in range(len(rows)) for j in range(len(cols))]
    D = np.zeros((len(rows), len(cols)))
    jobs = max(1, int(jobs))
    if jobs == 1 or len(cells) < 2:
        values = _fill_cells(metric, rows, cols, cells)
    else:
        chunk = max(1, math.ceil(len(cells) / (jobs * 4)))
        parts = [cells[k : k + chunk] for k in range(0, len(cells), chunk)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_fill_cells, metric, rows, cols, part) for part in parts]
            values = [v for f in futures for v in f.result()]
    for (i, j), v in zip(cells, values):
        D[i, j] = v
        if symmetric:
            D[j, i] = v
    if cache is not None:
        cache.save(key, D, meta)
    return D


# ---------------------------------------------------------------------------
# 1NN and cross-validation
# ---------------------------------------------------------------------------


def knn1_predict(dist: np.ndarray, train_labels: np.ndarray) -> np.ndarray:
    """Label of the nearest train column per row; ties go to the lowest index."""
    return np.asarray(train_labels)[np.argmin(dist, axis=1)]


def knn1_error(dist: np.ndarray, train_labels, test_labels) -> float:
    pred = knn1_predict(dist, train_labels)
    return float(np.mean(pred != np.asarray(test_labels)))


def knn1_classify(
    train: LabeledDataset,
    test: LabeledDataset,
    metric: Callable,
    jobs: int = 1,
    cache: Optional[DistanceCache] = None,
) -> float:
    """1NN error rate of ``test`` against ``train`` under ``metric``."""
    if len(train) == 0 or len(test) == 0:
        raise InvalidInputError("train and test splits must be nonempty")
    if train.series[0].values.shape != test.series[0].values.shape:
        raise InvalidInputError("train and test series differ in length or dimension")
    D = pairwise_distances(test.series, train.series, metric, jobs=jobs, cache=cache, tag=f"{test.name}/{test.split}")
    return knn1_error(D, train.labels, test.labels)


def make_folds(labels, folds: int, seed: int = 0) -> tuple[np.ndarray, bool]:
    """Fold id per sample; stratified by label when every class has ``>= folds`` members.

    Returns ``(assignment, stratified)``.
    """
    labels = np.asarray(labels)
    if folds < 2:
        raise InvalidInputError("need at least 2 folds")
    if labels.size < folds:
        raise InvalidInputError(f"{labels.size} samples cannot form {folds} folds")
    rng = np.random.default_rng(seed)
    assign = np.empty(labels.size, dtype=np.int64)
    classes, counts = np.unique(labels, return_counts=True)
    stratified = bool(np.all(counts >= folds))
    if stratified:
        offset = 0
        for c in classes:
            idx = rng.permutation(np.flatnonzero(labels == c))
            assign[idx] = (np.arange(idx.size) + offset) % folds
            offset += idx.size
    else:
        idx = rng.permutation(labels.size)
        assign[idx] = np.arange(labels.size) % folds
    return assign, stratified


@dataclass
class CVResult:
    best: float
    errors: dict
    stratified: bool
    folds: np.ndarray


def cv_from_matrices(matrices: dict, labels, folds: int = 3, seed: int = 0) -> CVResult:
    """Pick the parameter whose train-vs-train matrix gives the lowest mean fold error."""
    labels = np.asarray(labels)
    assign, stratified = make_folds(labels, folds, seed)
    if not stratified:
        logger.warning("a class has fewer than %d members; using unstratified folds", folds)
    errors = {}
    for param, D in matrices.items():
        fold_err = []
        for k in range(folds):
            te = np.flatnonzero(assign == k)
            tr = np.flatnonzero(assign != k)
            fold_err.append(knn1_error(D[np.ix_(te, tr)], labels[tr], labels[te]))
        errors[param] = float(np.mean(fold_err))
    best = None
    for param in sorted(errors):
        if best is None or errors[param] < errors[best]:
            best = param
    return CVResult(best, errors, stratified, assign)


def cv_epsilon(
    train: LabeledDataset,
    grid: Sequence[float] = DEFAULT_EPS_GRID,
    folds: int = 3,
    seed: int = 0,
    metric_factory: Callable[[float], Callable] = EtiotMetric,
    jobs: int = 1,
    cache: Optional[DistanceCache] = None,
) -> CVResult:
    """Choose epsilon by k-fold 1NN error on the train split; ties go to the smaller value."""
    if not grid:
        raise InvalidInputError("epsilon grid is empty")
    matrices = {}
    for eps in grid:
        if len(grid) == 1:
            matrices[eps] = np.zeros((len(train), len(train)))
            continue
        metric = metric_factory(eps)
        matrices[eps] = pairwise_distances(
            train.series, train.series, metric, jobs=jobs, symmetric=True, cache=cache, tag=f"{train.name}/cv"
        )
    if len(grid) == 1:
        assign, stratified = make_folds(train.labels, folds, seed)
        return CVResult(grid[0], {grid[0]: math.nan}, stratified, assign)
    return cv_from_matrices(matrices, train.labels, folds, seed)


def knn_experiment(
    train: LabeledDataset,
    test: LabeledDataset,
    metric: str = "etiot",
    epsilon: Optional[float] = None,
    grid: Sequence[float] = DEFAULT_EPS_GRID,
    omega: Optional[float] = None,
    omega_grid: Sequence[float] = (0.0, 0.1, 1.0, 10.0, 100.0),
    folds: int = 3,
    seed: int = 0,
    marginal_tol: float = 0.005,
    stepsize_rule: str = "adaptive_inverse",
    jobs: int = 1,
    cache: Optional[DistanceCache] = None,
) -> ExperimentReport:
    """1NN error of one metric, tuning epsilon (and eTAOT's omega) on train when not fixed."""
    params = {
        "dataset": train.name,
        "metric": metric,
        "folds": folds,
        "seed": seed,
        "marginal_tol": marginal_tol,
        "n_train": len(train),
        "n_test": len(test),
    }
    summary: dict = {}
    t0 = time.perf_counter()
    if metric == "ed":
        chosen = EuclideanMetric()
    elif metric == "etiot":
        if epsilon is None:
            cv = cv_epsilon(
                train, grid, folds, seed,
                lambda e: EtiotMetric(e, marginal_tol, stepsize_rule=stepsize_rule), jobs, cache,
            )
            epsilon = cv.best
            summary["cv_errors"] = {str(k): v for k, v in cv.errors.items()}
            summary["stratified"] = cv.stratified
        chosen = EtiotMetric(epsilon, marginal_tol, stepsize_rule=stepsize_rule)
        params["epsilon"] = epsilon
        params["stepsize_rule"] = stepsize_rule
    elif metric == "etaot":
        if omega is None:
            omega = _loocv_omega(train, omega_grid, epsilon or 0.05, marginal_tol, jobs, cache)
            summary["omega_grid"] = list(omega_grid)
        if epsilon is None:
            cv = cv_epsilon(train, grid, folds, seed, lambda e: EtaotMetric(omega, e, marginal_tol), jobs, cache)
            epsilon = cv.best
            summary["cv_errors"] = {str(k): v for k, v in cv.errors.items()}
            summary["stratified"] = cv.stratified
        chosen = EtaotMetric(omega, epsilon, marginal_tol)
        params["epsilon"] = epsilon
        params["omega"] = omega
    else:
        raise InvalidInputError(f"unknown metric {metric!r}")
    D = pairwise_distances(test.series, train.series, chosen, jobs=jobs, cache=cache, tag=f"{test.name}/{test.split}")
    pred = knn1_predict(D, train.labels)
    err = float(np.mean(pred != test.labels))
    rows = [
        {"index": i, "label": int(test.labels[i]), "predicted": int(pred[i])}
        for i in range(len(test))
    ]
    summary["error"] = err
    summary["seconds"] = time.perf_counter() - t0
    return ExperimentReport("knn", params, rows, summary=summary)


def _loocv_omega(train, omega_grid, epsilon, marginal_tol, jobs, cache) -> float:
    labels = train.labels
    best, best_err = None, math.inf
    for omega in sorted(omega_grid):
        D = pairwise_distances(
            train.series, train.series, EtaotMetric(omega, epsilon, marginal_tol),
            jobs=jobs, symmetric=True, cache=cache, tag=f"{train.name}/loocv",
        )
        np.fill_diagonal(D, np.inf)
        err = knn1_error(D, labels, labels)
        if err < best_err:
            best, best_err = omega, err
    return best


# ---------------------------------------------------------------------------
# epsilon convergence (TiOT vs eTiOT)
# ---------------------------------------------------------------------------


def _prepared_pair(seed: int, n: int):
    x, y = gen_gaussian_pair(seed, n)
    alpha = lift_to_measure(zscore_normalize(x))
    beta = lift_to_measure(zscore_normalize(y))
    return alpha, beta


def convergence_study(
    n: int = 50,
    epsilons: Sequence[float] = CONVERGENCE_EPS,
    seeds: Iterable[int] = range(20),
    marginal_tol: float = 0.005,
    stepsize_rule: str = "adaptive_inverse",
    pair_factory: Optional[Callable[[int], tuple]] = None,
) -> ExperimentReport:
    """Deviation of eTiOT from exact TiOT in value and plan, per seed and epsilon."""
    seeds = list(seeds)
    rows = []
    for seed in seeds:
        alpha, beta = pair_factory(seed) if pair_factory else _prepared_pair(seed, n)
        cp = build_cost_pair(alpha, beta)
        exact = tiot_exact(cp, alpha.weights, beta.weights)
        for eps in epsilons:
            cfg = HBCDConfig(epsilon=eps, marginal_tol=marginal_tol, stepsize_rule=stepsize_rule)
            ent = hbcd_solve(cp, alpha.weights, beta.weights, cfg)
            indep = np.outer(alpha.weights, beta.weights)
            rows.append(
                {
                    "seed": seed,
                    "epsilon": eps,
                    "value_exact": exact.value,
                    "value_entropic": ent.transport_value,
                    "value_deviation": abs(ent.transport_value - exact.value),
                    "plan_deviation": float(np.abs(ent.plan.matrix - exact.plan.matrix).sum()),
                    "independent_deviation": float(np.abs(ent.plan.matrix - indep).sum()),
                    "w_exact": exact.w_star,
                    "w_entropic": ent.w,
                    "iterations": ent.iterations,
                    "converged": ent.converged,
                }
            )
    medians = {}
    for eps in epsilons:
        sel = [r for r in rows if r["epsilon"] == eps]
        medians[str(eps)] = {
            "value_deviation": float(np.median([r["value_deviation"] for r in sel])),
            "plan_deviation": float(np.median([r["plan_deviation"] for r in sel])),
            "independent_deviation": float(np.median([r["independent_deviation"] for r in sel])),
        }
    params = {
        "n": n,
        "epsilons": list(epsilons),
        "seeds": seeds,
        "marginal_tol": marginal_tol,
        "stepsize_rule": stepsize_rule,
    }
    return ExperimentReport("convergence", params, rows, summary={"medians": medians})


# ---------------------------------------------------------------------------
# runtime benchmark
# ---------------------------------------------------------------------------


def _time_call(fn, reps: int) -> tuple[float, object]:
    times, out = [], None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), out


def runtime_bench(
    sizes: Sequence[int],
    epsilon: float = 0.1,
    marginal_tol: float = 0.005,
    reps: int = 5,
    exact_max: int = 200,
    cell_budget: float = 60.0,
    seed: int = 0,
    solvers: Sequence[str] = ("etiot", "eot", "tiot_lp", "ot_exact"),
) -> ExperimentReport:
    """Median wallclock per size for HBCD, fixed-w Sinkhorn, and the exact solvers.

    The exact solvers run only up to ``exact_max``. A solver whose cell
    exceeds ``cell_budget`` seconds is recorded as missing for larger sizes.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise InvalidInputError("sizes must be ascending")
    rows, wall = [], []
    over_budget: set[str] = set()
    for size in sizes:
        alpha, beta = _prepared_pair(seed, size)
        a, b = alpha.weights, beta.weights
        cp = build_cost_pair(alpha, beta)
        cfg = HBCDConfig(epsilon=epsilon, marginal_tol=marginal_tol)
        runners = {
            "etiot": lambda: hbcd_solve(cp, a, b, cfg).transport_value,
            "eot": lambda: sinkhorn_fixed_cost(combine(cp, 0.5), a, b, epsilon, marginal_tol).value,
            "tiot_lp": lambda: tiot_lp_dual(cp, a, b),
            "ot_exact": lambda: solve_discrete_ot(combine(cp, 0.5), a, b)[1],
        }
        for name in solvers:
            exact_only = name in ("tiot_lp", "ot_exact")
            if name in over_budget or (exact_only and size > exact_max):
                rows.append({"size": size, "solver": name, "seconds": None, "value": None})
                continue
            sec, val = _time_call(runners[name], reps)
            if sec > cell_budget:
                over_budget.add(name)
            rows.append({"size": size, "solver": name, "seconds": sec, "value": float(val)})
            wall.append(sec)
    params = {
        "sizes": sizes,
        "epsilon": epsilon,
        "marginal_tol": marginal_tol,
        "reps": reps,
        "exact_max": exact_max,
        "seed": seed,
    }
    ratios = {}
    for size in sizes:
        cell = {r["solver"]: r["seconds"] for r in rows if r["size"] == size}
        if cell.get("etiot") and cell.get("eot"):
            ratios[str(size)] = cell["etiot"] / cell["eot"]
    return ExperimentReport("runtime", params, rows, wall, summary={"etiot_over_eot": ratios})


# ---------------------------------------------------------------------------
# lag analysis
# ---------------------------------------------------------------------------


def lag_analysis(
    series: TimeSeries,
    ell_range: Optional[Sequence[int]] = None,
    fixed_ws: Sequence[float] = (0.2, 0.5, 0.8),
    window: int = YEAR,
    sweep_shifts: Sequence[int] = SWEEP_SHIFTS,
    w_grid: Sequence[float] = tuple(np.linspace(0.0, 1.0, 21)),
    solver: str = "exact",
    epsilon: float = 0.01,
) -> ExperimentReport:
    """``D_2`` and ``W_{2,w}`` between the first window and the window at each lag.

    Windows are z-scored independently. The ``sweep`` rows hold
    ``W_{2,w}`` against ``w`` for the fixed shifts in ``sweep_shifts``.
    """
    max_ell = len(series) - window + 1
    if ell_range is None:
        ell_range = range(1, min(2 * YEAR, max_ell) + 1)
    ell_range = list(ell_range)
    if not ell_range or max(ell_range) > max_ell or min(ell_range) < 1:
        raise InvalidInputError(f"lags must lie in [1, {max_ell}] for a window of {window}")
    if solver not in ("exact", "entropic"):
        raise InvalidInputError(f"unknown solver {solver!r}")

    base = lift_to_measure(zscore_normalize(lag_window(series, 1, window)))
    a = base.weights
    simplex = {key: TransportSimplex(a, a) for key in fixed_ws} if solver == "exact" else {}
    rows = []
    for ell in ell_range:
        other = lift_to_measure(zscore_normalize(lag_window(series, ell, window)))
        cp = build_cost_pair(base, other)
        row = {"row": "lag", "ell": ell}
        if solver == "exact":
            sol = tiot_exact(cp, a, other.weights)
            row["D2"] = sol.distance
            row["w_star"] = sol.w_star
            for w in fixed_ws:
                row[f"W2_{w:g}"] = max(simplex[w].solve(combine(cp, w))[1], 0.0) ** 0.5
        else:
            sol = hbcd_solve(cp, a, other.weights, HBCDConfig(epsilon=epsilon))
            row["D2"] = max(sol.transport_value, 0.0) ** 0.5
            row["w_star"] = sol.w
            for w in fixed_ws:
                res = sinkhorn_fixed_cost(combine(cp, w), a, other.weights, epsilon)
                row[f"W2_{w:g}"] = max(res.value, 0.0) ** 0.5
        rows.append(row)
    for shift in sweep_shifts:
        ell = shift + 1
        if ell > max_ell:
            continue
        other = lift_to_measure(zscore_normalize(lag_window(series, ell, window)))
        cp = build_cost_pair(base, other)
        sx = TransportSimplex(a, other.weights) if solver == "exact" else None
        for w in w_grid:
            if solver == "exact":
                val = sx.solve(combine(cp, float(w)))[1]
            else:
                val = sinkhorn_fixed_cost(combine(cp, float(w)), a, other.weights, epsilon).value
            rows.append({"row": "sweep", "shift": shift, "w": float(w), "W2": max(val, 0.0) ** 0.5})
    params = {
        "window": window,
        "ells": [min(ell_range), max(ell_range)],
        "n_lags": len(ell_range),
        "fixed_ws": list(fixed_ws),
        "sweep_shifts": list(sweep_shifts),
        "solver": solver,
        "epsilon": epsilon if solver == "entropic" else None,
    }
    return ExperimentReport("lag", params, rows)


def local_minima(values: Sequence[float]) -> list[int]:
    """Indices of strict interior local minima."""
    v = np.asarray(values)
    return [k for k in range(1, v.size - 1) if v[k] < v[k - 1] and v[k] <= v[k + 1]]


# ---------------------------------------------------------------------------
# alignment export
# ---------------------------------------------------------------------------


def alignment_export(
    x: TimeSeries,
    y: TimeSeries,
    solver: str = "etiot",
    epsilon: float = 0.01,
    threshold: Optional[float] = None,
    marginal_tol: float = 0.005,
    with_exact: bool = False,
    normalize: bool = True,
) -> ExperimentReport:
    """Plan entries above ``threshold`` (default ``0.5 / (m n)``) and the ``w`` used."""
    if normalize:
        x, y = zscore_normalize(x), zscore_normalize(y)
    alpha, beta = lift_to_measure(x), lift_to_measure(y)
    cp = build_cost_pair(alpha, beta)
    m, n = cp.shape
    thr = 0.5 / (m * n) if threshold is None else threshold
    params = {"solver": solver, "m": m, "n": n, "threshold": thr}
    if solver == "exact":
        sol = tiot_exact(cp, alpha.weights, beta.weights)
        plan, w = sol.plan.matrix, sol.w_star
        params["value"] = sol.value
    elif solver == "etiot":
        sol = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(epsilon=epsilon, marginal_tol=marginal_tol))
        plan, w = sol.plan.matrix, sol.w
        params.update(epsilon=epsilon, marginal_tol=marginal_tol, value=sol.transport_value)
        if with_exact:
            params["w_exact"] = tiot_exact(cp, alpha.weights, beta.weights).w_star
    else:
        raise InvalidInputError(f"unknown solver {solver!r}")
    params["w"] = w
    ii, jj = np.nonzero(plan > thr)
    rows = [{"i": int(i), "j": int(j), "pi": float(plan[i, j]), "above": True} for i, j in zip(ii, jj)]
    return ExperimentReport("alignment", params, rows, summary={"support": len(rows), "w": w})
