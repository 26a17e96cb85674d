"""Command-line driver: presets, config files, CSV/JSON output and SVG plots.

    hhsliding simulate --preset fig2 --out runs/fig2
    hhsliding analyze --preset fig2
    hhsliding sweep --preset fig2 --param rho --values 0 5 20 --out runs/sweep
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .coupled import CONVERGED, MAX_ITERATIONS, TIME_BUDGET, Scenario, SimulationError, SimulationResult, run_simulation
from .model import HHParameters
from .numerics.grid import SolverTolerances
from .presets import FIG3_OMEGA, PRESETS, preset
from .sliding import analyze, default_band, detect_sliding

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_MAX_ITERATIONS = 2
EXIT_TIME_BUDGET = 3
EXIT_USAGE = 4
EXIT_NUMERIC = 5

STOP_CODES = {CONVERGED: EXIT_OK, MAX_ITERATIONS: EXIT_MAX_ITERATIONS, TIME_BUDGET: EXIT_TIME_BUDGET}
PARAM_KEYS = tuple(f.name for f in fields(HHParameters))
FIELD_NAMES = ("v", "n", "m", "h")
PLOT_FILES = ("v_trace.svg", "v_surface.svg", "gating.svg")


class UsageError(ValueError):
    """Bad command line or configuration."""


@dataclass
class RunConfig:
    """Everything needed to reproduce one run."""

    preset: str = "fig1"
    T: float = 100.0
    maxX: int = 25
    maxT: int = 200
    omega: float = FIG3_OMEGA
    threshold: float = 1e-3
    max_iter: int = 100
    time_budget: float = 900.0
    rel_tol: float = 1e-6
    abs_tol: float = 1e-6
    params: dict = field(default_factory=dict)
    plots: bool = True

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}; choose one of {', '.join(PRESETS)}")
        unknown = set(self.params) - set(PARAM_KEYS)
        if unknown:
            raise UsageError(f"unknown parameter(s): {', '.join(sorted(unknown))}")

    def scenario(self) -> Scenario:
        try:
            return preset(self.preset, T=self.T, maxX=self.maxX, maxT=self.maxT,
                          fig3_omega=self.omega, **self.params)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    def tolerances(self) -> SolverTolerances:
        return SolverTolerances(self.rel_tol, self.abs_tol)

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw):
    kind = _TYPES.get(key)
    try:
        if kind == "int":
            return int(raw)
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            return str(raw).strip().lower() in ("1", "true", "yes", "on")
        if kind == "str":
            return str(raw)
        return float(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad value for {key}: {raw!r}") from exc


def config_from_mapping(values: dict) -> RunConfig:
    """Build a RunConfig from flat keys; HH parameter names go to ``params``."""
    kwargs: dict = {}
    params: dict = dict(values.get("params") or {})
    for key, raw in values.items():
        if key == "params":
            continue
        if key in PARAM_KEYS:
            params[key] = raw
        elif key in _TYPES:
            kwargs[key] = _coerce(key, raw)
        else:
            raise UsageError(f"unknown config key {key!r}")
    try:
        params = {k: float(v) for k, v in params.items()}
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad parameter value: {exc}") from exc
    return RunConfig(params=params, **kwargs)


def read_config(path: str | Path) -> dict:
    """Read a flat ``key = value`` file, or the ``config`` block of a summary.json."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from exc
        return dict(data.get("config", data))
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


# --- output ---------------------------------------------------------------

def write_field_csv(path: Path, tmesh, xmesh, values) -> None:
    """Header row is the xmesh, first column the tmesh, 17 significant digits."""
    fmt = "{:.17g}".format
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t\\x"] + [fmt(x) for x in xmesh])
        for t, row in zip(tmesh, np.asarray(values)):
            writer.writerow([fmt(t)] + [fmt(v) for v in row])


def read_field_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_field_csv`: returns (tmesh, xmesh, values)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    xmesh = np.array(rows[0][1:], dtype=float)
    body = np.array([r for r in rows[1:]], dtype=float)
    return body[:, 0], xmesh, body[:, 1:]


def _node_index(xmesh, x_fixed: float) -> int:
    return int(np.argmin(np.abs(np.asarray(xmesh) - x_fixed)))


def emit_plots(result: SimulationResult, out_dir: str | Path, x_fixed: float = 0.0) -> list[Path]:
    """Write the v trace, the v(t, x) heatmap and the gating traces as SVG."""
    v = np.asarray(result.fields.get("v", np.empty((0, 0))))
    if v.size == 0 or len(result.tmesh) == 0:
        raise ValueError("result holds no data; nothing to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    j = _node_index(result.xmesh, x_fixed)
    t = result.tmesh
    paths = [out_dir / name for name in PLOT_FILES]

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(t, v[:, j], lw=1.2, label="v")
    ax.plot(t, np.asarray(result.vstar)[:, j], "--", lw=0.8, label="v*")
    ax.set(xlabel="t [ms]", ylabel="v [mV]", title=f"v(t, x={result.xmesh[j]:.3g})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(paths[0])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    mesh = ax.pcolormesh(result.xmesh, t, v, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="v [mV]")
    ax.set(xlabel="x", ylabel="t [ms]", title="v(t, x)")
    fig.tight_layout()
    fig.savefig(paths[1])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name in ("n", "m", "h"):
        if name in result.fields:
            ax.plot(t, np.asarray(result.fields[name])[:, j], lw=1.2, label=name)
    ax.set(xlabel="t [ms]", ylabel="gating", ylim=(-0.02, 1.02), title=f"gating at x={result.xmesh[j]:.3g}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(paths[2])
    plt.close(fig)
    return paths


def build_summary(cfg: RunConfig, s: Scenario, result: SimulationResult) -> dict:
    band = default_band(s.params.epsilon, cfg.threshold)
    bound = analyze(s)
    return {
        "scenario": s.name,
        "config": cfg.to_dict(),
        "params": asdict(s.params),
        "target": s.target.describe(),
        "mesh": {"L": s.mesh.L, "T": s.mesh.T, "maxX": s.mesh.maxX, "maxT": s.mesh.maxT},
        "stop_reason": result.stop_reason,
        "iterations": result.iterations,
        "residual_trace": result.residual_trace,
        "elapsed_seconds": result.elapsed,
        "empirical": {"band": band, "sliding_onset": detect_sliding(result, band=band)},
        # theoretical sufficient gain, reported next to (not instead of) the observed onset
        "theory": bound.to_dict(),
    }


def write_outputs(cfg: RunConfig, s: Scenario, result: SimulationResult, out_dir: Path) -> None:
    for name in FIELD_NAMES:
        write_field_csv(out_dir / f"{name}.csv", result.tmesh, result.xmesh, result.fields[name])
    summary = build_summary(cfg, s, result)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if cfg.plots:
        emit_plots(result, out_dir, s.x_fixed)


def run(cfg: RunConfig, out_dir: str | Path) -> int:
    """Simulate, write results into ``out_dir`` and return the exit status."""
    out_dir = Path(out_dir)
    s = cfg.scenario()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out_dir}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    try:
        result = run_simulation(s, cfg.tolerances(), cfg.threshold, cfg.max_iter, cfg.time_budget)
    except (SimulationError, FloatingPointError) as exc:
        print(f"error: numerical failure in {s.name}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        write_outputs(cfg, s, result, out_dir)
    except OSError as exc:
        where = exc.filename or out_dir
        print(f"error: cannot write {where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{s.name}: {result.stop_reason} after {result.iterations} iterations "
          f"({result.elapsed:.1f}s), results in {out_dir}")
    return STOP_CODES[result.stop_reason]


# --- argument parsing -------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=PRESETS, help="named scenario")
    p.add_argument("--config", help="key = value file, or a summary.json to re-run")
    p.add_argument("--rho", type=float, help="relay gain")
    p.add_argument("--epsilon", type=float, help="width of the relay band")
    p.add_argument("--maxX", type=int, help="space nodes")
    p.add_argument("--maxT", type=int, help="saved time points")
    p.add_argument("--T", type=float, help="time horizon [ms]")
    p.add_argument("--omega", type=float, help="frequency of the fig3 target")
    p.add_argument("--threshold", type=float, help="Picard stopping threshold")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="outer iteration cap")
    p.add_argument("--time-budget", dest="time_budget", type=float, help="wall seconds")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any other config key or model parameter, e.g. g_K=3.8229")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hhsliding", description="Relay-controlled Hodgkin-Huxley cable simulations.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every Picard iteration")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run one scenario and write CSV, JSON and SVG output")
    _add_run_options(sim)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--no-plots", action="store_true", help="skip the SVG figures")

    ana = sub.add_parser("analyze", help="print the sufficient sliding bounds as JSON")
    _add_run_options(ana)

    sweep = sub.add_parser("sweep", help="run one scenario for several values of a parameter")
    _add_run_options(sweep)
    sweep.add_argument("--param", required=True, help="config key or model parameter to vary")
    sweep.add_argument("--values", required=True, nargs="+", help="values to try")
    sweep.add_argument("--out", required=True, help="parent output directory")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sweep.add_argument("--no-plots", action="store_true", help="skip the SVG figures")
    return parser


def config_from_args(args) -> RunConfig:
    values: dict = read_config(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = value
    for key in ("preset", "rho", "epsilon", "maxX", "maxT", "T", "omega", "threshold",
                "max_iter", "time_budget"):
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    if getattr(args, "no_plots", False):
        values["plots"] = False
    if "preset" not in values:
        raise UsageError("a preset is required (--preset or the config file)")
    return config_from_mapping(values)


def _sweep_one(cfg_dict: dict, out_dir: str) -> tuple[str, int]:
    return out_dir, run(config_from_mapping(cfg_dict), out_dir)


def sweep(base: RunConfig, param: str, values: list[str], out: Path, jobs: int = 1) -> int:
    jobs_list = []
    for raw in values:
        cfg_dict = base.to_dict()
        if param in PARAM_KEYS:
            cfg_dict["params"] = {**cfg_dict["params"], param: raw}
        elif param in _TYPES and param not in ("preset", "params"):
            cfg_dict[param] = raw
        else:
            raise UsageError(f"cannot sweep over {param!r}")
        config_from_mapping(cfg_dict)  # validate before starting any work
        jobs_list.append((cfg_dict, str(out / f"{param}={raw}")))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_sweep_one, *zip(*jobs_list)))
    else:
        outcomes = [_sweep_one(c, d) for c, d in jobs_list]
    for out_dir, code in outcomes:
        print(f"{out_dir}\texit {code}")
    return max(code for _, code in outcomes)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "analyze":
            print(json.dumps(analyze(cfg.scenario()).to_dict(), indent=2))
            return EXIT_OK
        if args.command == "sweep":
            return sweep(cfg, args.param, args.values, Path(args.out), args.jobs)
        return run(cfg, args.out)
    except UsageError as exc:
        print(f"hhsliding: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
