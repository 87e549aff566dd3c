"""Command-line interface: ``sysid {simulate,estimate,reconstruct,compare}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .dictionary import build_dictionary
from .gedmd import reconstruct_model
from .pipeline import (
    METHODS,
    PipelineConfig,
    compare_generators,
    drift_grid,
    load_report_coefficients,
    run_pipeline,
    truth_for,
)
from .simulate import BUILTIN_MODELS, euler_maruyama, make_builtin

log = logging.getLogger("sysid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # report usage problems through main() as a single line
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parse_x0(text: str | None, dim: int) -> np.ndarray:
    if text is None:
        x0 = np.zeros(dim)
        x0[0] = 1.0
        return x0
    try:
        x0 = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"--x0: expected comma-separated numbers, got {text!r}") from None
    if x0.size != dim:
        raise UsageError(f"--x0: expected {dim} values, got {x0.size}")
    return x0


def _model_name(name: str) -> str:
    return name.replace("-", "_")


def cmd_simulate(args) -> None:
    model = make_builtin(args.model)
    x0 = _parse_x0(args.x0, model.dim)
    traj = euler_maruyama(model, x0, args.dt, args.steps, args.seed)
    io.write_trajectory(traj, args.out, model=_model_name(args.model), x0=x0.tolist(),
                        steps=args.steps)
    log.info("wrote %d samples to %s", len(traj), args.out)


# flag name -> PipelineConfig field
_OVERRIDES = {
    "method": "method",
    "model": "model",
    "seed": "seed",
    "lam": "lam",
    "max_degree": "max_degree",
    "stride": "subsample_stride",
    "n_representatives": "n_representatives",
    "edge_fraction": "edge_fraction",
    "bandwidth": "bandwidth",
    "max_components": "dpmm_max_components",
    "workers": "workers",
}


def cmd_estimate(args) -> None:
    traj, meta = io.read_trajectory(args.traj)
    data = {}
    if "model" in meta:
        data["model"] = meta["model"]
    if "seed" in meta and meta["seed"] is not None:
        data["seed"] = meta["seed"]
    if "steps" in meta:
        data["steps"] = meta["steps"]
    if args.config:
        cfg_file = io.read_json(args.config)
        if not isinstance(cfg_file, dict):
            raise io.FormatError(f"{args.config}: expected a JSON object")
        data.update(cfg_file)
    for flag, name in _OVERRIDES.items():
        value = getattr(args, flag)
        if value is not None:
            data[name] = value
    data["dt"] = traj.dt
    if "model" in data and data["model"] is not None:
        data["model"] = _model_name(data["model"])
    if "method" not in data:
        raise UsageError(f"estimate: no method given (--method or config key 'method'); "
                         f"valid methods: {', '.join(METHODS)}")
    cfg = PipelineConfig.from_dict(data)
    report = run_pipeline(cfg, traj)
    report.save(args.out)
    log.info("report written to %s", args.out)


def _require(config: dict, key: str, where):
    if key not in config:
        raise io.FormatError(f"{where}: missing key {key!r}")
    return config[key]


def cmd_reconstruct(args) -> None:
    coefs, config = load_report_coefficients(args.report)
    dt = args.dt if args.dt is not None else float(
        _require(config, "dt", Path(args.report) / "config.json"))
    model = reconstruct_model(coefs)
    x0 = _parse_x0(args.x0, model.dim)
    traj = euler_maruyama(model, x0, dt, args.steps, args.seed,
                          on_divergence="raise" if args.strict else "truncate")
    extra = {}
    if len(traj) < args.steps + 1:
        extra["diverged_at_step"] = len(traj) - 1
        log.warning("reconstructed model diverged at step %d; wrote the %d finite samples",
                    len(traj) - 1, len(traj))
    io.write_trajectory(traj, args.out, model="reconstructed", report=str(args.report),
                        x0=x0.tolist(), steps=args.steps, **extra)
    log.info("wrote %d samples to %s", len(traj), args.out)


def cmd_compare(args) -> None:
    coefs, config = load_report_coefficients(args.report)
    name = args.model or config.get("model")
    if not name:
        raise UsageError("compare: no ground-truth model (use --model)")
    name = _model_name(name)
    if name not in BUILTIN_MODELS:
        raise UsageError(f"compare: unknown model {name!r}; valid models: {', '.join(BUILTIN_MODELS)}")
    d = build_dictionary(coefs.dictionary.dim, coefs.dictionary.max_degree)
    grid = drift_grid(int(config.get("grid_points", 9)), float(config.get("grid_extent", 1.5)), d.dim)
    metrics = compare_generators(coefs, truth_for(name, d), grid,
                                 float(config.get("support_threshold", 0.05)))
    io.write_json(metrics.to_dict(), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sysid", description="Generator EDMD identification of polynomial SDEs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("simulate", help="simulate a builtin model with Euler-Maruyama")
    s.add_argument("--model", required=True,
                   help=f"builtin model ({', '.join(BUILTIN_MODELS)}; '-' or '_' accepted)")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--x0", help="initial state, comma separated (default 1,0,...)")
    s.add_argument("--out", required=True, help="trajectory CSV; metadata goes next to it as .json")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate drift and diffusion from a trajectory")
    e.add_argument("--traj", required=True)
    e.add_argument("--method", choices=METHODS)
    e.add_argument("--config", help="JSON file with pipeline settings; flags take precedence")
    e.add_argument("--out", required=True, help="report directory")
    e.add_argument("--model", help="ground-truth model for metrics (default: from trajectory metadata)")
    e.add_argument("--seed", type=int)
    e.add_argument("--lam", type=float, help="lasso penalty")
    e.add_argument("--max-degree", type=int)
    e.add_argument("--stride", type=int)
    e.add_argument("--n-representatives", type=int)
    e.add_argument("--edge-fraction", type=float)
    e.add_argument("--bandwidth", type=float)
    e.add_argument("--max-components", type=int)
    e.add_argument("--workers", type=int, help="threads for kernel averaging (0 = auto)")
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("reconstruct", help="simulate the model stored in a report")
    r.add_argument("--report", required=True)
    r.add_argument("--steps", type=int, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--dt", type=float, help="step size (default: dt of the report)")
    r.add_argument("--x0", help="initial state, comma separated (default 1,0,...)")
    r.add_argument("--out", required=True)
    r.add_argument("--strict", action="store_true",
                   help="fail if the simulation diverges (default: keep the finite prefix)")
    r.set_defaults(func=cmd_reconstruct)

    c = sub.add_parser("compare", help="score a report against a builtin model")
    c.add_argument("--report", required=True)
    c.add_argument("--model", help="builtin model (default: model recorded in the report)")
    c.add_argument("--out", required=True, help="metrics JSON")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, FloatingPointError, RuntimeError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
