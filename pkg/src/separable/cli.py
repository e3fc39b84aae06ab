"""``separable`` command line: data generation, fitting, inversion, PDE solves and studies.

Every run writes into its output directory

* ``report.json``: parameters and results, with wall times and the timestamp
  kept under ``"volatile"`` so the rest is byte-identical across reruns,
* ``summary.txt``: the same in human-readable form,
* one tab-separated ``<family>.tsv`` per plot-data family the command produces.

Option values come from, in increasing priority: built-in defaults, the
``[run]`` and ``[<command>]`` sections of ``--config``, environment variables
``SNA_<OPTION>`` (e.g. ``SNA_SEED``, ``SNA_RANK``) and command-line flags.
Exit status is 2 for configuration or path problems and 1 for failures inside
a solver.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

log = logging.getLogger("separable")

ENV_PREFIX = "SNA_"


class ConfigError(Exception):
    """Bad option value, unreadable config or missing input path (exit status 2)."""


# ---------------------------------------------------------------------------
# option tables
# ---------------------------------------------------------------------------

def int_list(s) -> list:
    if isinstance(s, (list, tuple)):
        return [int(v) for v in s]
    return [int(v) for v in str(s).replace(" ", "").split(",") if v]


def param_value(s):
    """A number such as ``0.001``, ``pi/4`` or ``2*pi/3``, or ``free`` to make
    the parameter a coordinate."""
    if s is None or str(s).strip().lower() in ("free", "none"):
        return None
    if isinstance(s, (int, float)):
        return float(s)
    m = re.fullmatch(r"(?:([0-9.eE+-]+)\*?)?pi(?:/([0-9.eE+-]+))?", str(s).strip().lower())
    if m is None:
        return float(s)
    return float(m.group(1) or 1.0) * math.pi / float(m.group(2) or 1.0)


def boolean(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable
    default: object
    help: str = ""
    choices: Optional[tuple] = None


COMMON = (
    Opt("seed", int, 0, "root seed for every random substream"),
    Opt("out", str, None, "output directory (default runs/<command>)"),
)

PDE = (
    Opt("kind", str, "advection_diffusion", "problem family",
        ("advection_diffusion", "poisson_nd", "burgers_1d")),
    Opt("n_space", int, 2, "spatial dimensions of the plume problem"),
    Opt("omega", param_value, math.pi / 4, "wind speed, or 'free' for a coordinate"),
    Opt("diffusivity", param_value, 0.001, "diffusivity, or 'free' for a coordinate"),
    Opt("t_end", float, 1.0, "final time"),
    Opt("order", int, 3, "spline degree"),
    Opt("tikhonov_lambda", float, 1e-8, "relative proximal regularisation"),
    Opt("max_sweeps", int, 0, "ALS sweep cap (0: preset)"),
    Opt("rel_residual_tol", float, 1e-8, "relative objective change to stop"),
)

COMMANDS = {
    "gen-data": (
        Opt("generator", str, "borehole", "benchmark function", ("borehole", "sobol_g")),
        Opt("n_samples", int, 100_000, "Latin hypercube size"),
        Opt("noise_sigma", float, 0.01, "Sobol-G noise level"),
        Opt("normalise", boolean, True, "scale targets by their range"),
    ),
    "fit": (
        Opt("data", str, None, "dataset CSV written by gen-data"),
        Opt("rank", int, 4, "CP rank r"),
        Opt("resolution", int, 8, "interior cells C per dimension"),
        Opt("order", int, 3, "spline degree P"),
        Opt("activation", str, "identity", "output activation", ("identity", "tanh", "softplus")),
        Opt("optimiser", str, "als", "training method",
            ("adam", "lbfgs", "adam_then_lbfgs", "als", "als_then_lbfgs")),
        Opt("sweeps", int, 30, "ALS sweeps"),
        Opt("epochs", int, 500, "Adam epochs"),
        Opt("l2", float, 0.0, "coefficient penalty"),
        Opt("train_fraction", float, 0.7, "share of rows used for training"),
    ),
    "invert": (
        Opt("model", str, None, "model JSON written by fit"),
        Opt("target", float, None, "output value to hit"),
        Opt("n_seeds", int, 64, "Newton starts"),
        Opt("max_iters", int, 100, "Newton iterations per start"),
        Opt("tol", float, 1e-6, "|f(x) - target| accepted as converged"),
        Opt("damping", float, 1.0, "step scaling in (0, 1]"),
    ),
    "solve-pde": PDE + (
        Opt("rank", int, 4, "CP rank R"),
        Opt("resolution", int, 8, "interior cells C per dimension"),
        Opt("dims", int, 2, "poisson_nd dimension"),
        Opt("nx", int, 64, "Burgers sine modes"),
        Opt("nt", int, 16, "Burgers time polynomials"),
        Opt("method", str, "lbfgs", "Burgers optimiser", ("lbfgs", "gauss_newton")),
        Opt("max_iters", int, 20000, "Burgers iteration cap"),
        Opt("grid", int, 128, "Burgers evaluation grid per axis"),
    ),
    "scaling": PDE + (
        Opt("ranks", int_list, [1, 2, 4], "comma-separated ranks"),
        Opt("resolutions", int_list, [4, 8], "comma-separated resolutions"),
        Opt("warm_start", boolean, True, "start each rank from the previous one"),
    ),
    "benchmark": (
        Opt("suite", str, "borehole", "preset", ("borehole", "sobol_g", "sobol_rank1", "burgers")),
        Opt("n_samples", int, 100_000, "dataset size for the regression suites"),
        Opt("sweeps", int, 0, "ALS sweeps (0: preset)"),
    ),
}

PATH_OPTS = {"data", "model"}


def _options(command: str) -> tuple:
    return COMMON + COMMANDS[command]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="separable", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [run] and [%s] sections" % name)
        for o in _options(name):
            flag = "--" + o.name.replace("_", "-")
            # string values are converted later so that file and env values share one path
            p.add_argument(flag, dest=o.name, default=None, choices=None,
                           help=f"{o.help} (default: {o.default})")
    return parser


def _convert(o: Opt, raw, source: str):
    try:
        v = o.type(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: bad value for {o.name}: {raw!r} ({exc})") from None
    if o.choices is not None and v not in o.choices:
        raise ConfigError(f"{source}: {o.name} must be one of {', '.join(o.choices)}, got {v!r}")
    return v


def resolve(command: str, flags: dict, config_path: Optional[str] = None,
            environ: Optional[dict] = None) -> dict:
    """Merge defaults, config file, environment and flags into typed options."""
    environ = os.environ if environ is None else environ
    opts = _options(command)
    known = {o.name for o in opts}
    values = {o.name: o.default for o in opts}
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for section in ("run", command):
            if not cp.has_section(section):
                continue
            for key, raw in cp.items(section):
                key = key.replace("-", "_")
                if key not in known:
                    raise ConfigError(f"{path}: unknown option {key!r} in [{section}]")
                values[key] = _convert(next(o for o in opts if o.name == key), raw, str(path))
    for o in opts:
        env = environ.get(ENV_PREFIX + o.name.upper())
        if env is not None:
            values[o.name] = _convert(o, env, ENV_PREFIX + o.name.upper())
        if flags.get(o.name) is not None:
            values[o.name] = _convert(o, flags[o.name], "--" + o.name.replace("_", "-"))
    for name in PATH_OPTS & known:
        if values[name] is None:
            raise ConfigError(f"--{name} is required")
        if not Path(values[name]).is_file():
            raise ConfigError(f"input file not found: {values[name]}")
    if command == "invert" and values["target"] is None:
        raise ConfigError("--target is required")
    if values["out"] is None:
        values["out"] = str(Path("runs") / command)
    return values


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

PLOT_COLUMNS = {
    "scaling_frontier": ("N", "error", "R", "C"),
    "scaling_table": ("R", "C", "N", "error", "wall_time_s", "status"),
    "residual_history": ("iteration", "residual"),
    "inversion_ensemble": None,          # seed, converged, iterations, residual, x1..xd
    "burgers_error": ("x", "t", "u", "reference", "abs_error"),
}


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_plot_data(report: dict, out) -> list:
    """Write ``report["series"][family]`` as ``<family>.tsv`` files; returns the paths.

    Each series is ``{"columns": [...], "rows": [[...], ...]}``. Floats are
    written with ``repr`` so that :func:`read_plot_data` recovers them exactly.
    """
    out = Path(out)
    paths = []
    for family, series in sorted(report.get("series", {}).items()):
        cols = list(series["columns"])
        expected = PLOT_COLUMNS.get(family)
        if expected is not None and tuple(cols) != expected:
            raise ValueError(f"{family}: columns {cols} != {list(expected)}")
        path = out / f"{family}.tsv"
        with open(path, "w") as fh:
            fh.write("\t".join(cols) + "\n")
            for row in series["rows"]:
                fh.write("\t".join(_cell(v) for v in row) + "\n")
        paths.append(path)
    return paths


def read_plot_data(path) -> tuple[list, list]:
    """Header and rows of an emitted file; numeric cells become int or float."""
    def parse(s):
        for t in (int, float):
            try:
                return t(s)
            except ValueError:
                pass
        return s

    lines = Path(path).read_text().splitlines()
    cols = lines[0].split("\t")
    rows = [[parse(c) for c in ln.split("\t")] for ln in lines[1:] if ln]
    return cols, rows


# ---------------------------------------------------------------------------
# commands: each returns (results, series, volatile)
# ---------------------------------------------------------------------------

def _pop_wall(d: dict, volatile: dict, prefix: str = "") -> dict:
    d = dict(d)
    if "wall_time_s" in d:
        volatile[prefix + "wall_time_s"] = d.pop("wall_time_s")
    return d


def cmd_gen_data(o: dict, out: Path):
    from .bench import BoreholeSpec, SobolGSpec, make_dataset
    if o["generator"] == "borehole":
        spec = BoreholeSpec(n_samples=o["n_samples"], seed=o["seed"])
    else:
        spec = SobolGSpec(noise_sigma=o["noise_sigma"], n_samples=o["n_samples"], seed=o["seed"])
    data = make_dataset(o["generator"], spec, normalise_targets=o["normalise"])
    path = out / "data.csv"
    data.save(path)
    res = dict(path=path.name, n=data.n, dims=data.dims,
               target_bounds=None if data.target_bounds is None else list(data.target_bounds))
    return res, {}, {}


def cmd_fit(o: dict, out: Path):
    from .bench import STREAM_INIT, substream
    from .core import CpModel
    from .training import Dataset, TrainConfig, fit_supervised
    data = Dataset.load(o["data"])
    model = CpModel.uniform(data.dims, o["rank"], o["resolution"], o["order"],
                            rng=substream(o["seed"], STREAM_INIT), activation=o["activation"])
    cfg = TrainConfig(optimiser=o["optimiser"], als_sweeps=o["sweeps"], max_epochs=o["epochs"],
                      l2_penalty=o["l2"], seed=o["seed"], train_fraction=o["train_fraction"])
    model, report = fit_supervised(model, data, cfg)
    model.save(out / "model.json")
    volatile = {}
    res = _pop_wall(report.to_dict(), volatile)
    res["model"] = "model.json"
    return res, {}, volatile


def cmd_invert(o: dict, out: Path):
    from .core import CpModel
    from .inversion import InversionConfig, ensemble_envelope, invert
    model = CpModel.load(o["model"])
    cfg = InversionConfig(n_seeds=o["n_seeds"], max_iters=o["max_iters"], target_tol=o["tol"],
                          damping=o["damping"], seed=o["seed"])
    result = invert(model, o["target"], cfg)
    volatile = {"wall_time_s": result.wall_time_s}
    res = result.to_dict()
    res["n_converged"] = result.n_converged
    if result.n_converged:
        mean, env = ensemble_envelope(result)
        res["mean"], res["envelope"] = mean.tolist(), env.tolist()
    d = result.points.shape[1]
    rows = [[k, bool(result.converged_flags[k]), int(result.iterations[k]), float(result.residuals[k])]
            + [float(v) for v in result.points[k]] for k in range(len(result.points))]
    cols = ["seed", "converged", "iterations", "residual"] + [f"x{i + 1}" for i in range(d)]
    return res, {"inversion_ensemble": {"columns": cols, "rows": rows}}, volatile


def _plume(o: dict):
    from .variational import advection_diffusion
    return advection_diffusion(o["n_space"], omega=o["omega"], diffusivity=o["diffusivity"],
                               T=o["t_end"])


def _als_config(o: dict, problem, **kw):
    from dataclasses import replace

    from .presets import scaling_config
    base = scaling_config(problem)
    sweeps = o["max_sweeps"] or base.max_sweeps
    return replace(base, order=o["order"], tikhonov_lambda=o["tikhonov_lambda"],
                   max_sweeps=sweeps, rel_residual_tol=o["rel_residual_tol"], seed=o["seed"], **kw)


def cmd_solve_pde(o: dict, out: Path):
    if o["kind"] == "burgers_1d":
        from .presets import run_burgers
        from .variational import BurgersConfig
        sol, (X, T, u, ref) = run_burgers(o["nx"], o["nt"], o["t_end"],
                                          BurgersConfig(method=o["method"], max_iters=o["max_iters"]),
                                          grid=o["grid"])
        err = np.abs(u - ref)
        res = dict(nx=sol.nx, nt=sol.nt, T=sol.T, residual_norm=sol.residual_norm,
                   converged=bool(sol.converged), iterations=sol.iterations,
                   max_abs_error=float(err.max()))
        rows = [[float(a), float(b), float(c), float(d), float(e)]
                for a, b, c, d, e in zip(X.ravel(), T.ravel(), u.ravel(), ref.ravel(), err.ravel())]
        series = {"burgers_error": {"columns": PLOT_COLUMNS["burgers_error"], "rows": rows},
                  "residual_history": _history(np.sqrt(sol.history))}
        (out / "solution.json").write_text(json.dumps({"nx": sol.nx, "nt": sol.nt, "T": sol.T,
                                                       "coeffs": sol.coeffs.tolist()}))
        return res, series, {"wall_time_s": sol.wall_time_s}

    from .presets import error_quadrature
    from .variational import als_solve, poisson_nd, sobolev_norm
    from .variational.reference import l2_error, semi_analytic_reference
    problem = poisson_nd(o["dims"]) if o["kind"] == "poisson_nd" else _plume(o)
    sol = als_solve(problem, _als_config(o, problem, rank=o["rank"], resolution=o["resolution"]))
    res = dict(roles=list(problem.roles), rank=o["rank"], resolution=o["resolution"],
               sweeps_run=sol.sweeps_run, final_objective=sol.residual_history[-1],
               parameter_count=o["rank"] * sum(b.n_funcs for b in sol.model.bases))
    if problem.params.get("gaussian_ic"):
        res["l2_error_vs_proxy"] = l2_error(sol, lambda X: semi_analytic_reference(problem, X),
                                            **error_quadrature(problem))
    else:
        res["h1_norm"] = sobolev_norm(sol.model, 1)
    (out / "solution.json").write_text(json.dumps(sol.to_dict()))
    return res, {"residual_history": _history(sol.residual_history)}, {"wall_time_s": sol.wall_time_s}


def _history(h) -> dict:
    return {"columns": PLOT_COLUMNS["residual_history"], "rows": [[k, float(v)] for k, v in enumerate(h)]}


def cmd_scaling(o: dict, out: Path):
    from .presets import error_quadrature
    from .variational import scaling_study
    if o["kind"] != "advection_diffusion":
        raise ConfigError("scaling studies run on the advection_diffusion problem")
    if not o["ranks"] or not o["resolutions"]:
        raise ConfigError("ranks and resolutions must be non-empty")
    problem = _plume(o)
    study = scaling_study(problem, o["ranks"], o["resolutions"], _als_config(o, problem),
                          error_kwargs=error_quadrature(problem), warm_start=o["warm_start"],
                          progress=lambda r: log.info("R=%d C=%d error %.3e", r.rank, r.resolution, r.error))
    volatile = {"wall_time_s": {f"R{r.rank}_C{r.resolution}": r.wall_time_s for r in study.rows}}
    rows = [dict(R=r.rank, C=r.resolution, N=r.n_params, error=r.error, status=r.status, sweeps=r.sweeps)
            for r in study.rows]
    res = dict(roles=list(problem.roles), rows=rows,
               isoline_slopes={str(k): v for k, v in study.isoline_slopes().items()},
               frontier_slope=study.frontier_slope())
    series = {
        "scaling_table": {"columns": PLOT_COLUMNS["scaling_table"],
                          "rows": [[r.rank, r.resolution, r.n_params, r.error, r.wall_time_s, r.status]
                                   for r in study.rows]},
        "scaling_frontier": {"columns": PLOT_COLUMNS["scaling_frontier"],
                             "rows": [[r.n_params, r.error, r.rank, r.resolution] for r in study.frontier()]},
    }
    return res, series, volatile


def cmd_benchmark(o: dict, out: Path):
    if o["suite"] == "burgers":
        return cmd_solve_pde(dict(kind="burgers_1d", nx=64, nt=16, t_end=0.3, method="lbfgs",
                                  max_iters=40000, grid=128), out)
    from .presets import SUITES, run_fit_preset
    model, report, data = run_fit_preset(o["suite"], o["n_samples"], o["seed"], o["sweeps"] or None)
    model.save(out / "model.json")
    volatile = {}
    res = _pop_wall(report.to_dict(), volatile)
    preset = SUITES[o["suite"]]
    res.update(suite=o["suite"], n_samples=data.n, rank=preset.rank, resolution=preset.resolution,
               order=preset.order, optimiser=preset.optimiser, model="model.json")
    return res, {}, volatile


HANDLERS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "invert": cmd_invert,
    "solve-pde": cmd_solve_pde,
    "scaling": cmd_scaling,
    "benchmark": cmd_benchmark,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def _summary(command: str, params: dict, results: dict, volatile: dict) -> str:
    lines = [f"command: {command}"]
    lines += [f"  {k} = {v}" for k, v in sorted(params.items())]
    lines.append("results:")
    for k, v in results.items():
        if isinstance(v, (list, dict)) and len(json.dumps(_jsonable(v))) > 200:
            v = f"<{type(v).__name__} of {len(v)}>"
        lines.append(f"  {k}: {v}")
    for k, v in volatile.items():
        lines.append(f"  {k}: {v}")
    return "\n".join(lines) + "\n"


def run(command: str, options: dict) -> dict:
    """Execute one command with resolved options; returns the report written to disk."""
    out = Path(options["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {out} ({exc})") from None
    t0 = time.perf_counter()
    results, series, volatile = HANDLERS[command](options, out)
    volatile = dict(volatile, total_wall_time_s=time.perf_counter() - t0,
                    timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"))
    params = {k: v for k, v in options.items() if k != "out"}
    report = {"command": command, "params": _jsonable(params), "results": _jsonable(results),
              "series": series}
    files = [p.name for p in emit_plot_data(report, out)]
    on_disk = {"command": command, "params": report["params"], "results": report["results"],
               "plot_files": files, "volatile": _jsonable(volatile)}
    (out / "report.json").write_text(json.dumps(on_disk, indent=1, sort_keys=True) + "\n")
    text = _summary(command, params, results, volatile)
    (out / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return on_disk


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        options = resolve(args.command, flags, args.config)
        run(args.command, options)
    except ConfigError as exc:
        print(f"separable: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:          # surfaced verbatim with its type
        print(f"separable: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
