"""End-to-end estimation runs and comparison against a known model.

Three methods are available:

``naive_lasso``
    Finite-difference increments at every ``stride``-th sample, lasso
    regression on all of them.
``proposal1``
    Thin the trajectory, drop the most isolated 5 %, pick representative
    points by k-means, average *all* increments around each representative
    with an isotropic Gaussian kernel, then regress on the representatives.
``proposal2``
    As ``proposal1``, but a Dirichlet-process mixture fitted to the thinned
    points splits the increments into clusters. Each representative averages
    only the increments of its own cluster, using that cluster's covariance
    as kernel bandwidth.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .clustering import dpmm_assign, dpmm_fit, edge_filter, kmeans
from .dictionary import Dictionary, build_dictionary, iter_pairs
from .estimators import (
    PointEstimates,
    finite_differences,
    from_increments,
    subsample,
    weighted_estimates,
)
from .gedmd import (
    ExtractedCoefficients,
    GeneratorMatrix,
    extract_coefficients,
    fit_generator_lasso,
    truth_coefficients,
)
from .simulate import BUILTIN_MODELS, Trajectory, make_builtin

log = logging.getLogger(__name__)

METHODS = ("naive_lasso", "proposal1", "proposal2")

DEFAULT_LAMBDA = {"naive_lasso": 0.01, "proposal1": 1e-6, "proposal2": 1e-3}
# appendix model: the proposals use different penalties
APPENDIX_LAMBDA = {"naive_lasso": 0.01, "proposal1": 1e-8, "proposal2": 1e-4}

# stage seed offsets from the master seed
_EDGE_SEED, _KMEANS_SEED, _DPMM_SEED = 101, 202, 303


@dataclass
class PipelineConfig:
    method: str = "proposal2"
    model: str | None = "double_well"
    dt: float = 1e-3
    steps: int = 2_000_000
    seed: int = 0
    max_degree: int = 10
    subsample_stride: int = 100
    n_representatives: int = 100
    edge_fraction: float = 0.05
    edge_filter_proposal2: bool = True
    bandwidth: float = 0.2
    dpmm_max_components: int = 10
    dpmm_max_iter: int = 1000
    dpmm_tol: float = 1e-3
    dpmm_concentration: float = 1.0
    dpmm_weight_floor: float = 1e-2
    lam: float | None = None
    lasso_scaling: str = "mean"
    lasso_tol: float = 1e-10
    lasso_max_sweeps: int = 10_000
    weight_floor: float = 1e-12
    grid_points: int = 9
    grid_extent: float = 1.5
    support_threshold: float = 0.05
    workers: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}")
        if self.subsample_stride < 1:
            raise ValueError("subsample_stride must be at least 1")
        if not 0 <= self.edge_fraction < 1:
            raise ValueError("edge_fraction must lie in [0, 1)")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.n_representatives < 1:
            raise ValueError("n_representatives must be at least 1")

    @property
    def effective_lambda(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        table = APPENDIX_LAMBDA if self.model == "appendix_dense" else DEFAULT_LAMBDA
        return table[self.method]

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lam"] = self.effective_lambda
        return out

    @classmethod
    def from_dict(cls, data: dict) -> PipelineConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass
class Metrics:
    max_coef_error: float
    support_f1: float
    drift_rmse: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Report:
    config: PipelineConfig
    generator: GeneratorMatrix
    coefficients: ExtractedCoefficients
    grid: np.ndarray
    drift_est: np.ndarray
    drift_true: np.ndarray | None = None
    metrics: Metrics | None = None
    timings: dict = field(default_factory=dict)
    estimates: PointEstimates | None = None
    dpmm: object = None
    diagnostics: dict = field(default_factory=dict)

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(self.config.to_dict(), out / "config.json")
        io.write_generator(self.generator, out / "generator_LT.csv")
        io.write_json(io.coefficients_to_json(self.coefficients), out / "coefficients.json")
        self._write_drift_field(out / "drift_field.csv")
        metrics = self.metrics.to_dict() if self.metrics else {}
        metrics.update(self.diagnostics)
        io.write_json(metrics, out / "metrics.json")
        io.write_json(self.timings, out / "timings.json")
        if self.estimates is not None and self.config.method != "naive_lasso":
            io.write_point_estimates(self.estimates, out / "point_estimates.csv")
        if self.dpmm is not None:
            io.write_json(io.dpmm_to_json(self.dpmm), out / "dpmm.json")
        return out

    def _write_drift_field(self, path):
        dim = self.grid.shape[1]
        header = [f"x{i + 1}" for i in range(dim)]
        header += [f"b{i + 1}_true" for i in range(dim)] + [f"b{i + 1}_est" for i in range(dim)]
        true = self.drift_true if self.drift_true is not None else np.full_like(self.drift_est, np.nan)
        io._write_rows(path, header, np.column_stack([self.grid, true, self.drift_est]))


def drift_grid(n: int = 9, extent: float = 1.5, dim: int = 2) -> np.ndarray:
    """Uniform ``n^dim`` grid over ``[-extent, extent]^dim`` (x1 varies slowest)."""
    axis = np.linspace(-extent, extent, n)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _support_f1(est: np.ndarray, truth: np.ndarray, threshold: float) -> float:
    pe = np.abs(est) > threshold
    pt = np.abs(truth) > threshold
    tp = np.sum(pe & pt)
    denom = pe.sum() + pt.sum()
    return 1.0 if denom == 0 else float(2 * tp / denom)


def _upper(a_poly: np.ndarray) -> np.ndarray:
    dim = a_poly.shape[0]
    return np.array([a_poly[i, j] for i, j in iter_pairs(dim)])


def compare_generators(est, truth: ExtractedCoefficients, grid, support_threshold: float = 0.05) -> Metrics:
    """Coefficient error, support F1 and drift-field RMSE against known coefficients.

    ``est`` may be a :class:`GeneratorMatrix` or already-extracted
    coefficients over the same dictionary.
    """
    if isinstance(est, GeneratorMatrix):
        est = extract_coefficients(est)
    if est.dictionary != truth.dictionary:
        raise ValueError("dictionary mismatch between estimate and truth")
    e = np.concatenate([est.drift.ravel(), _upper(est.a_poly).ravel()])
    t = np.concatenate([truth.drift.ravel(), _upper(truth.a_poly).ravel()])
    nz = t != 0
    max_err = float(np.max(np.abs(e[nz] - t[nz]))) if nz.any() else 0.0
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    diff = est.drift_at(grid) - truth.drift_at(grid)
    rmse = float(np.sqrt(np.mean(np.sum(diff ** 2, axis=1))))
    return Metrics(max_err, _support_f1(e, t, support_threshold), rmse)


class StageError(RuntimeError):
    pass


class _Stages:
    def __init__(self):
        self.timings = {}

    def __call__(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(f"stage {name!r} failed: {exc}") from exc
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start


def select_representatives(cfg: PipelineConfig, states: np.ndarray, stage) -> tuple[np.ndarray, np.ndarray]:
    """Thinned points and k-means centroids of the non-edge ones."""
    thinned = states[:: cfg.subsample_stride]
    use_edge = cfg.method == "proposal1" or cfg.edge_filter_proposal2
    if use_edge and cfg.edge_fraction > 0:
        keep = stage("edge_filter", edge_filter, thinned, cfg.edge_fraction,
                     seed=cfg.seed + _EDGE_SEED)
    else:
        keep = np.arange(thinned.shape[0])
    km = stage("kmeans", kmeans, thinned[keep], cfg.n_representatives, seed=cfg.seed + _KMEANS_SEED)
    return thinned, km.centroids


def run_pipeline(cfg: PipelineConfig, traj: Trajectory, truth: ExtractedCoefficients | None = None) -> Report:
    """Run one estimation method on a trajectory.

    When ``truth`` is omitted and ``cfg.model`` names a builtin model, the
    builtin's coefficients are used for the metrics.
    """
    if abs(traj.dt - cfg.dt) > 1e-12 * max(1.0, cfg.dt):
        log.info("trajectory dt %g overrides configured dt %g", traj.dt, cfg.dt)
        cfg = dataclasses.replace(cfg, dt=traj.dt)
    stage = _Stages()
    d = build_dictionary(traj.dim, cfg.max_degree)
    lam = cfg.effective_lambda
    raw = stage("increments", finite_differences, traj)
    diagnostics = {}
    dpmm = None

    if cfg.method == "naive_lasso":
        sub = subsample(raw, cfg.subsample_stride)
        estimates = from_increments(sub)
    else:
        thinned, reps = select_representatives(cfg, traj.states, stage)
        dim = traj.dim
        if cfg.method == "proposal1":
            h = cfg.bandwidth * np.eye(dim)
            estimates = stage("weighted_expectations", weighted_estimates, raw, reps, h,
                              weight_floor=cfg.weight_floor, workers=cfg.workers)
        else:
            dpmm = stage("dpmm", dpmm_fit, thinned, cfg.dpmm_max_components,
                         seed=cfg.seed + _DPMM_SEED, max_iter=cfg.dpmm_max_iter, tol=cfg.dpmm_tol,
                         concentration=cfg.dpmm_concentration, weight_floor=cfg.dpmm_weight_floor)
            anchor_labels = stage("dpmm_assign", dpmm_assign, dpmm, raw.anchors)
            rep_labels = dpmm_assign(dpmm, reps)
            groups = {int(k): np.flatnonzero(anchor_labels == k) for k in np.unique(rep_labels)}
            masks = [groups[int(k)] for k in rep_labels]
            bandwidths = dpmm.covariances[rep_labels]
            estimates = stage("weighted_expectations", weighted_estimates, raw, reps, bandwidths,
                              masks, weight_floor=cfg.weight_floor, workers=cfg.workers)
            diagnostics["dpmm_effective_components"] = dpmm.effective_components
            diagnostics["dpmm_converged"] = bool(dpmm.converged)
            diagnostics["representative_components"] = sorted(groups)

    diagnostics["regression_points"] = len(estimates)
    gen = stage("regression", fit_generator_lasso, d, estimates, lam,
                tol=cfg.lasso_tol, max_sweeps=cfg.lasso_max_sweeps, scaling=cfg.lasso_scaling)
    coefs = stage("extract", extract_coefficients, gen)

    grid = drift_grid(cfg.grid_points, cfg.grid_extent, traj.dim)
    drift_est = coefs.drift_at(grid)
    if truth is None and cfg.model in BUILTIN_MODELS:
        truth = truth_coefficients(make_builtin(cfg.model), d)
    metrics = drift_true = None
    if truth is not None:
        drift_true = truth.drift_at(grid)
        metrics = compare_generators(coefs, truth, grid, cfg.support_threshold)
    if coefs.warnings:
        diagnostics["warnings"] = list(coefs.warnings)

    return Report(
        config=cfg,
        generator=gen,
        coefficients=coefs,
        grid=grid,
        drift_est=drift_est,
        drift_true=drift_true,
        metrics=metrics,
        timings={k: float(v) for k, v in stage.timings.items()},
        estimates=estimates,
        dpmm=dpmm,
        diagnostics=diagnostics,
    )


def load_report_coefficients(report_dir) -> tuple[ExtractedCoefficients, dict]:
    """Coefficients and config saved by :meth:`Report.save`."""
    report_dir = Path(report_dir)
    coefs = io.coefficients_from_json(io.read_json(report_dir / "coefficients.json"))
    config_file = report_dir / "config.json"
    config = io.read_json(config_file) if config_file.exists() else {}
    return coefs, config


def truth_for(model_name: str, d: Dictionary) -> ExtractedCoefficients:
    return truth_coefficients(make_builtin(model_name), d)
