"""Readers and writers for the CSV/JSON artifacts.

Floats in trajectory and point-estimate files are written with ``repr``
(shortest string that round-trips), so reloading gives the same doubles.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .clustering.dpmm import DpmmModel
from .dictionary import Dictionary, dictionary_from_labels, parse_label
from .estimators import PointEstimates
from .gedmd import ExtractedCoefficients, GeneratorMatrix
from .simulate import Trajectory


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        fh.writelines(",".join(map(_fmt, row)) + "\n" for row in rows.tolist())


def _read_numeric_csv(path, expected_header=None):
    """Header list and float matrix; malformed cells are reported by row and column."""
    path = Path(path)
    with open(path, newline="") as fh:
        header = next(csv.reader([fh.readline()]), None)
        if not header:
            raise FormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if expected_header is not None and header != list(expected_header):
            raise FormatError(
                f"{path}: wrong header {','.join(header)!r}, expected {','.join(expected_header)!r}"
            )
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError:
            data = None
    if data is None:
        _locate_bad_cell(path, len(header))
    if data.size and data.shape[1] != len(header):
        raise FormatError(f"{path}: rows have {data.shape[1]} columns, header has {len(header)}")
    return header, data.reshape(-1, len(header))


def _locate_bad_cell(path, ncols):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != ncols:
                raise FormatError(f"{path}: row {lineno} has {len(row)} columns, expected {ncols}")
            for col, cell in enumerate(row):
                try:
                    float(cell)
                except ValueError:
                    raise FormatError(
                        f"{path}: row {lineno}, column {col + 1} ({header[col]!r}): "
                        f"non-numeric value {cell!r}"
                    ) from None
    raise FormatError(f"{path}: could not parse numeric data")


def metadata_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_trajectory(traj: Trajectory, path, **extra) -> None:
    dim = traj.dim
    rows = np.column_stack([traj.times, traj.states])
    _write_rows(path, ["t"] + [f"x{i + 1}" for i in range(dim)], rows)
    meta = {"dt": traj.dt, "seed": traj.seed, "dim": dim, "n_samples": len(traj)}
    meta.update(extra)
    write_json(meta, metadata_path(path))


def read_trajectory(path) -> tuple[Trajectory, dict]:
    path = Path(path)
    with open(path) as fh:
        first = fh.readline().strip().split(",")
    dim = len(first) - 1
    if dim < 1 or first[0].strip() != "t":
        raise FormatError(f"{path}: wrong header, expected 't,x1,...,xD'")
    header, data = _read_numeric_csv(path, ["t"] + [f"x{i + 1}" for i in range(dim)])
    meta_file = metadata_path(path)
    meta = read_json(meta_file) if meta_file.exists() else {}
    if "dt" in meta:
        dt = float(meta["dt"])
    elif data.shape[0] >= 2:
        dt = float(data[1, 0] - data[0, 0])
    else:
        raise FormatError(f"{path}: cannot determine dt (no metadata, fewer than 2 rows)")
    seed = meta.get("seed")
    return Trajectory(dt=dt, states=data[:, 1:], seed=seed), meta


def point_estimates_header(dim: int) -> list[str]:
    return ([f"x{i + 1}" for i in range(dim)] + [f"b{i + 1}" for i in range(dim)]
            + [f"a{i + 1}{j + 1}" for i in range(dim) for j in range(dim)] + ["weight"])


def write_point_estimates(est: PointEstimates, path) -> None:
    m, dim = est.points.shape
    rows = np.column_stack([est.points, est.b_tilde, est.a_tilde.reshape(m, dim * dim),
                            est.effective_weight])
    _write_rows(path, point_estimates_header(dim), rows)


def read_point_estimates(path) -> PointEstimates:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    # header length is 2D + D^2 + 1
    dim = int(round((-2 + np.sqrt(4 + 4 * (len(header) - 1))) / 2))
    _, data = _read_numeric_csv(path, point_estimates_header(dim))
    m = data.shape[0]
    return PointEstimates(
        points=data[:, :dim],
        b_tilde=data[:, dim:2 * dim],
        a_tilde=data[:, 2 * dim:2 * dim + dim * dim].reshape(m, dim, dim),
        effective_weight=data[:, -1],
    )


def write_generator(gen: GeneratorMatrix, path) -> None:
    """``L^T`` with monomial labels on the first row and column, 9 significant digits."""
    labels = gen.dictionary.labels()
    lt = gen.transposed
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join([""] + labels) + "\n")
        for lab, row in zip(labels, lt):
            fh.write(",".join([lab] + [f"{v:.8e}" for v in row]) + "\n")


def read_generator(path, dim: int | None = None) -> GeneratorMatrix:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    col_labels = [c.strip() for c in rows[0][1:]]
    try:
        d = dictionary_from_labels(col_labels, dim)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    lt = np.empty((d.size, d.size))
    if len(rows) - 1 != d.size:
        raise FormatError(f"{path}: expected {d.size} data rows, found {len(rows) - 1}")
    for r, row in enumerate(rows[1:]):
        if row[0].strip() != col_labels[r]:
            raise FormatError(f"{path}: row {r + 2} label {row[0]!r} does not match column order")
        if len(row) != d.size + 1:
            raise FormatError(f"{path}: row {r + 2} has {len(row)} columns, expected {d.size + 1}")
        for c, cell in enumerate(row[1:]):
            try:
                lt[r, c] = float(cell)
            except ValueError:
                raise FormatError(
                    f"{path}: row {r + 2}, column {c + 2}: non-numeric value {cell!r}"
                ) from None
    return GeneratorMatrix(d, lt.T, method="loaded")


def _poly_to_map(d: Dictionary, c) -> dict:
    labels = d.labels()
    return {labels[k]: float(c[k]) for k in np.flatnonzero(c)}


def _map_to_poly(d: Dictionary, terms: dict) -> np.ndarray:
    c = np.zeros(d.size)
    for label, value in terms.items():
        c[d.index_of(parse_label(label, d.dim))] = float(value)
    return c


def coefficients_to_json(c: ExtractedCoefficients) -> dict:
    d = c.dictionary
    out = {
        "dim": d.dim,
        "max_degree": d.max_degree,
        "drift": {f"b{i + 1}": _poly_to_map(d, c.drift[i]) for i in range(d.dim)},
        "diffusion": {
            f"a{i + 1}{j + 1}": _poly_to_map(d, c.a_poly[i, j])
            for i in range(d.dim) for j in range(i, d.dim)
        },
    }
    if c.warnings:
        out["warnings"] = list(c.warnings)
    return out


def coefficients_from_json(data: dict) -> ExtractedCoefficients:
    from .dictionary import build_dictionary

    for key in ("dim", "max_degree", "drift", "diffusion"):
        if key not in data:
            raise FormatError(f"coefficients: missing key {key!r}")
    d = build_dictionary(int(data["dim"]), int(data["max_degree"]))
    drift = np.array([_map_to_poly(d, data["drift"].get(f"b{i + 1}", {})) for i in range(d.dim)])
    a_poly = np.zeros((d.dim, d.dim, d.size))
    for i in range(d.dim):
        for j in range(i, d.dim):
            a_poly[i, j] = a_poly[j, i] = _map_to_poly(d, data["diffusion"].get(f"a{i + 1}{j + 1}", {}))
    return ExtractedCoefficients(d, drift, a_poly, warnings=tuple(data.get("warnings", ())))


def dpmm_to_json(model: DpmmModel) -> dict:
    return {
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "covariances": model.covariances.tolist(),
        "effective_components": model.effective_components,
        "seed": model.seed,
        "weight_floor": model.weight_floor,
        "converged": model.converged,
        "n_iter": model.n_iter,
        "sticks": model.sticks.tolist(),
        "mean_precision": model.mean_precision.tolist(),
        "dof": model.dof.tolist(),
        "precision_scale": model.precision_scale.tolist(),
    }


def dpmm_from_json(data: dict) -> DpmmModel:
    for key in ("weights", "means", "covariances", "effective_components", "seed"):
        if key not in data:
            raise FormatError(f"dpmm: missing key {key!r}")
    floor = float(data.get("weight_floor", 1e-2))
    if "sticks" not in data:
        return DpmmModel.from_components(data["weights"], data["means"], data["covariances"],
                                         weight_floor=floor, seed=int(data["seed"]))
    return DpmmModel(
        max_components=len(data["weights"]),
        weights=np.array(data["weights"]),
        means=np.array(data["means"]),
        covariances=np.array(data["covariances"]),
        sticks=np.array(data["sticks"]),
        mean_precision=np.array(data["mean_precision"]),
        dof=np.array(data["dof"]),
        precision_scale=np.array(data["precision_scale"]),
        converged=bool(data.get("converged", True)),
        n_iter=int(data.get("n_iter", 0)),
        seed=int(data["seed"]),
        weight_floor=floor,
    )


def write_json(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
