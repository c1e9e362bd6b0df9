"""``kslab`` command line: simulate, probe-linear, sweep-alpha, radial, verify.

Exit codes: 0 clean completion, 1 a verify check failed, 2 configuration
error, 3 numerical abort, 4 blow-up flag raised, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io
from .config import SUBCOMMANDS, ExperimentConfig, dump_config, parse_config
from .errors import ConfigError, KSLabError, NumericalAbort, ParameterError
from .kernels import BACKEND

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BLOWUP = 4
EXIT_IO = 5

STATUS = {
    EXIT_OK: "ok",
    EXIT_VERIFY_FAILED: "verify_failed",
    EXIT_CONFIG: "config_error",
    EXIT_NUMERICAL: "numerical_abort",
    EXIT_BLOWUP: "blowup_suspected",
    EXIT_IO: "io_error",
}


class Outcome:
    """What a mode handler produced: exit code, files written and notes."""

    def __init__(self):
        self.code = EXIT_OK
        self.files = ["config.ini"]
        self.notes = {}

    def wrote(self, path):
        self.files.append(Path(path).name)


def _grid(cfg):
    from .spectral import Grid

    return Grid.cube(cfg.grid.dim, cfg.grid.points, cfg.grid.box_length)


def kss_params(cfg):
    """Initial data and limiter for a Simulate run."""
    from .kss import FluxLimiter, KSSParams
    from .linear import periodic_potential
    from .spectral import ScalarField, VectorField

    grid = _grid(cfg)
    p = cfg.params
    if p.initial == "blob":
        return KSSParams.blob(grid, p.alpha, p.K_F, p.g, p.mass, p.width, p.background, p.fluid)
    level = p.mass / grid.volume + p.background
    n0 = ScalarField(grid, np.full(grid.shape, level))
    return KSSParams(FluxLimiter(p.K_F, p.alpha), periodic_potential(grid, p.g), n0, n0, VectorField.zeros(grid), p.fluid)


def _simulate(cfg, out, threads, outcome):
    from .kss import NUMERICAL_ABORT, run_simulation

    params = kss_params(cfg)
    nm = cfg.numerics
    checkpoint = out / "final.kss" if "checkpoint" in cfg.output.formats else None
    report = run_simulation(
        params,
        nm.T,
        nm.dt,
        monitor=cfg.estimate_spec(),
        output_every=nm.output_every,
        cfl=nm.cfl,
        adaptive=nm.adaptive,
        checkpoint=checkpoint,
    )
    outcome.wrote(report.write_csv(out / "series.csv"))
    outcome.wrote(report.write_events_csv(out / "events.csv"))
    if report.final_state_ref:
        outcome.wrote(report.final_state_ref)
    s = report.series
    summary = [
        ("final_time", s.t[-1]),
        ("samples", len(s)),
        ("initial_mass", s.mass[0]),
        ("final_mass", s.mass[-1]),
        ("max_n_inf", max(s.n_inf)),
        ("verdict", report.verdict.kind),
    ]
    outcome.wrote(io.write_csv(out / "summary.csv", "kslab-simulation-summary", ("key", "value"), summary))
    outcome.notes["events"] = [{"t": e.time, "kind": e.kind, "detail": e.detail} for e in report.events]
    outcome.notes["verdict"] = report.verdict.kind
    if any(e.kind == NUMERICAL_ABORT for e in report.events):
        outcome.code = EXIT_NUMERICAL
    elif report.verdict.suspected:
        outcome.code = EXIT_BLOWUP


def _probe_linear(cfg, out, threads, outcome):
    from .linear import ForcingSpec, probe_estimate

    f = cfg.forcing
    forcing = ForcingSpec(f.family, 1.0, f.width, f.speed, f.mass)
    report = probe_estimate(
        cfg.estimate_spec(),
        forcing,
        cfg.sweep.amplitudes,
        cfg.numerics.T,
        cfg.numerics.dt,
        grid=_grid(cfg),
        g=cfg.params.g,
        output_every=cfg.numerics.output_every,
        cfl=cfg.numerics.cfl,
        tolerance=cfg.sweep.tolerance,
        threads=threads,
    )
    outcome.wrote(report.write_series_csv(out / "probe_series.csv"))
    outcome.wrote(report.write_summary_csv(out / "probe_summary.csv"))
    failed = [r for r in report.runs if not r.ok]
    outcome.notes["failed_amplitudes"] = [{"amplitude": r.amplitude, "error": r.error} for r in failed]
    outcome.notes["fits"] = {
        name: {"slope": None if pf.fit is None else pf.fit.slope, "ceiling": pf.ceiling, "passed": pf.passed}
        for name, pf in report.fits.items()
    }
    if failed and len(failed) == len(report.runs):
        outcome.code = EXIT_NUMERICAL


def _dichotomy_config(cfg):
    from .radial import DichotomyConfig

    r = cfg.radial
    return DichotomyConfig(
        mass=r.mass,
        concentration=r.concentration,
        T=r.T,
        R=r.R,
        cells=r.cells,
        K_F=cfg.params.K_F,
        dt_max=r.dt_max,
        output_every=cfg.numerics.output_every,
        growth_factor=r.growth_factor,
        dt_floor=r.dt_floor,
    )


def _sweep_alpha(cfg, out, threads, outcome):
    from .blowup import BLOWUP
    from .radial import dichotomy_experiment, write_dichotomy_csv

    rows = dichotomy_experiment(cfg.sweep.alphas, _dichotomy_config(cfg), threads=threads)
    outcome.wrote(write_dichotomy_csv(out / "dichotomy.csv", rows))
    outcome.notes["verdicts"] = {repr(r.alpha): r.verdict for r in rows}
    if any(r.verdict == BLOWUP for r in rows):
        outcome.code = EXIT_BLOWUP


def _radial(cfg, out, threads, outcome):
    from .blowup import BlowupCriterion
    from .kss import FluxLimiter
    from .radial import RadialGrid, initial_bump, run_radial

    r = cfg.radial
    grid = RadialGrid(r.R, r.cells)
    n0 = initial_bump(grid, r.mass, r.concentration)
    run = run_radial(
        grid,
        FluxLimiter(cfg.params.K_F, cfg.params.alpha),
        n0,
        r.T,
        r.dt_max,
        cfg.numerics.output_every,
        BlowupCriterion(r.growth_factor, r.dt_floor),
    )
    outcome.wrote(run.write_csv(out / "radial_series.csv"))
    outcome.notes["verdict"] = run.verdict.kind
    outcome.notes["reason"] = run.verdict.reason
    if run.verdict.suspected:
        outcome.code = EXIT_BLOWUP


def _verify(cfg, out, threads, outcome):
    from .verify import format_table, run_suite

    results = run_suite()
    print(format_table(results))
    rows = [(r.name, "pass" if r.passed else "FAIL", r.detail) for r in results]
    outcome.wrote(io.write_csv(out / "verify.csv", "kslab-verify", ("check", "result", "detail"), rows))
    outcome.notes["failed_checks"] = [r.name for r in results if not r.passed]
    if not all(r.passed for r in results):
        outcome.code = EXIT_VERIFY_FAILED


HANDLERS = {
    "Simulate": _simulate,
    "ProbeLinear": _probe_linear,
    "SweepAlpha": _sweep_alpha,
    "Radial": _radial,
    "Verify": _verify,
}


def _write_manifest(out, cfg, outcome, message, elapsed):
    manifest = {
        "kslab_version": __version__,
        "kernel_backend": BACKEND,
        "mode": None if cfg is None else cfg.mode,
        "exit_code": outcome.code,
        "status": STATUS[outcome.code],
        "message": message,
        "config": "config.ini" if cfg is not None else None,
        "files": outcome.files if cfg is not None else [],
        "elapsed_seconds": round(elapsed, 3),
        **outcome.notes,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def run(cfg: ExperimentConfig, out_dir, threads=1):
    """Execute ``cfg`` into ``out_dir`` and return the exit code."""
    out = Path(out_dir)
    outcome = Outcome()
    message = ""
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(dump_config(cfg))
    except OSError as exc:
        print(f"error: cannot prepare output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        HANDLERS[cfg.mode](cfg, out, threads, outcome)
    except NumericalAbort as exc:
        outcome.code, message = EXIT_NUMERICAL, str(exc)
    except (ConfigError, ParameterError) as exc:
        outcome.code, message = EXIT_CONFIG, str(exc)
    except KSLabError as exc:
        outcome.code, message = EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        outcome.code, message = EXIT_IO, str(exc)
    if message:
        print(f"error: {message}", file=sys.stderr)
    try:
        _write_manifest(out, cfg, outcome, message, time.perf_counter() - start)
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=sys.stderr)
        return EXIT_IO
    return outcome.code


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="config file of [section] key = value lines")
    common.add_argument("--out", type=Path, help="run directory (default: <output.directory>/<subcommand>)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument(
        "--override", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config key; repeatable"
    )
    parser = argparse.ArgumentParser(prog="kslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kslab {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the coupled periodic simulation")
    sub.add_parser("probe-linear", parents=[common], help="sweep forcing amplitudes through the linear system")
    sub.add_parser("sweep-alpha", parents=[common], help="radial blow-up experiment over several alphas")
    sub.add_parser("radial", parents=[common], help="single radial run at params.alpha")
    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("config error: --threads: must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    mode = {v: k for k, v in SUBCOMMANDS.items()}[args.command]
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text, [*args.override, f"run.mode={mode}"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.output.directory) / args.command
    code = run(cfg, out, args.threads)
    print(f"{args.command}: {STATUS[code]} (exit {code}); outputs in {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
