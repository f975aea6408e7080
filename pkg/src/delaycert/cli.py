"""Command-line front-end: certification, bisection, simulation, verification.

Every command that takes `--out` writes its artifacts into that directory
together with a machine-readable manifest (parameters, input hashes, seed,
library versions).  Exit codes: 0 success or certified, 2 not certified,
3 invalid input, 4 numerical failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .dde import estimate_decay_rate, simulate
from .lmi import count_variables
from .inequalities import SUITE_KINDS, run_inequality_suite
from .search import (
    DEFAULT_ATTENUATION_ANCHORS,
    DEFAULT_XI_FRACTIONS,
    check_stability,
    max_decay_rate,
    max_delay_bound,
)
from .systems import DelaySignal, SystemFormatError, bundled_system, load_system

EXIT_OK = 0
EXIT_NOT_CERTIFIED = 2
EXIT_INVALID_INPUT = 3
EXIT_NUMERICAL = 4


def _load(system_ref: str):
    """A --system value is a JSON file path or a bundled benchmark name."""
    path = Path(system_ref)
    if path.exists():
        return load_system(path), [path]
    return bundled_system(system_ref), []


def _ensure_out(out: str | None) -> Path | None:
    if out is None:
        return None
    directory = Path(out)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _write_manifest(directory: Path, command: str, parameters: dict, inputs, seed=None):
    from .report import run_manifest, write_json

    write_json(run_manifest(command, parameters, inputs, seed), directory / "manifest.json")


def _xi_fractions(xi: float | None, h: float) -> tuple[float, ...]:
    if xi is None:
        return DEFAULT_XI_FRACTIONS
    return (xi / h,)


def _anchor_grid(anchors: tuple[float, ...], plain: bool, default) -> tuple[float | None, ...]:
    """Attenuation conditions for a search: the plain floor plus any anchors."""
    if plain and anchors:
        raise click.UsageError("--plain and --anchor are mutually exclusive")
    if plain:
        return (None,)
    if anchors:
        for a in anchors:
            if not 0.0 <= a <= 1.0:
                raise click.UsageError(f"--anchor must lie in [0, 1], got {a:g}")
        return (None,) + tuple(anchors)
    return default


@click.group()
def cli():
    """Certification toolkit for delayed neural-network dynamics."""


@cli.command("check")
@click.option("--system", "system_ref", required=True, help="System JSON path or bundled name.")
@click.option("--h", "h", type=float, required=True, help="Delay upper bound.")
@click.option("--mu", type=float, required=True, help="Delay-derivative bound.")
@click.option("--k", type=float, required=True, help="Decay rate to certify.")
@click.option("--xi", type=float, default=None, help="Reference lag in (0, h); default h/2.")
@click.option("--anchor", type=float, default=None,
              help="Attenuation anchor in [0, 1]; default keeps the plain drain floor.")
@click.option("--out", default=None, help="Directory for certificate.json and manifest.")
def cmd_check(system_ref, h, mu, k, xi, anchor, out):
    """Certify one (h, mu, k) point; exit 0 when certified, 2 otherwise."""
    system, inputs = _load(system_ref)
    cert = check_stability(system, h=h, mu=mu, k=k, xi=xi, attenuation_anchor=anchor)
    if cert.certified:
        click.echo(
            f"certified: k={k:g} h={h:g} mu={mu:g} xi={cert.xi:g} "
            f"margin={min(cert.margins.values()):.3e} envelope_gain={cert.envelope.gain:.4g}"
        )
    else:
        click.echo(f"not certified: k={k:g} h={h:g} mu={mu:g} ({cert.solver.message})")
    directory = _ensure_out(out)
    if directory is not None:
        from .report import write_json

        write_json(cert.to_dict(), directory / "certificate.json")
        _write_manifest(
            directory,
            "check",
            {"system": system_ref, "h": h, "mu": mu, "k": k, "xi": xi, "anchor": anchor},
            inputs,
        )
    return EXIT_OK if cert.certified else EXIT_NOT_CERTIFIED


@cli.command("bisect-k")
@click.option("--system", "system_ref", required=True, help="System JSON path or bundled name.")
@click.option("--h", "h", type=float, required=True, help="Delay upper bound.")
@click.option("--mu", type=float, required=True, help="Delay-derivative bound.")
@click.option("--xi", type=float, default=None, help="Single reference lag; default scans a small grid.")
@click.option("--tol", type=float, default=1e-3, show_default=True, help="Bracket width target.")
@click.option("--k-min", type=float, default=None, help="Lower end of the scanned range.")
@click.option("--k-max", type=float, default=None, help="Upper end of the scanned range.")
@click.option("--anchor", "anchors", type=float, multiple=True,
              help="Attenuation anchor(s) in [0, 1] tried after the plain floor; repeatable.")
@click.option("--plain", is_flag=True, help="Use only the plain drain floor (no tangent anchors).")
@click.option("--out", default=None, help="Directory for cells.csv, probes.csv, certificate.json.")
@click.option("--include-timing", is_flag=True, help="Add solve-time columns to the CSV output.")
def cmd_bisect_k(system_ref, h, mu, xi, tol, k_min, k_max, anchors, plain, out, include_timing):
    """Largest certifiable decay rate at fixed delay bound."""
    system, inputs = _load(system_ref)
    k_range = None
    if (k_min is None) != (k_max is None):
        raise click.UsageError("--k-min and --k-max must be given together")
    if k_min is not None:
        k_range = (k_min, k_max)
    anchor_grid = _anchor_grid(anchors, plain, DEFAULT_ATTENUATION_ANCHORS)
    outcome = max_decay_rate(
        system,
        h=h,
        mu=mu,
        k_range=k_range,
        tol=tol,
        xi_fractions=_xi_fractions(xi, h),
        attenuation_anchors=anchor_grid,
    )
    if outcome.certified:
        click.echo(
            f"best k = {outcome.best_value:.6g} (xi={outcome.best.xi:g}, "
            f"ceiling={'range end' if outcome.ceiling is None else format(outcome.ceiling, '.6g')})"
        )
    else:
        click.echo("not certified anywhere in the scanned range")
    directory = _ensure_out(out)
    if directory is not None:
        from .report import cell_from_outcome, write_cells_csv, write_json, write_probes_csv

        write_probes_csv(outcome, directory / "probes.csv", include_timing=include_timing)
        write_cells_csv(
            [cell_from_outcome(outcome, mu)], directory / "cells.csv", include_timing=include_timing
        )
        if outcome.best is not None:
            write_json(outcome.best.to_dict(), directory / "certificate.json")
        _write_manifest(
            directory,
            "bisect-k",
            {"system": system_ref, "h": h, "mu": mu, "xi": xi, "tol": tol,
             "k_min": k_min, "k_max": k_max, "anchors": list(anchor_grid)},
            inputs,
        )
    return EXIT_OK if outcome.certified else EXIT_NOT_CERTIFIED


@cli.command("bisect-h")
@click.option("--system", "system_ref", required=True, help="System JSON path or bundled name.")
@click.option("--mu", type=float, required=True, help="Delay-derivative bound.")
@click.option("--k", type=float, required=True, help="Fixed decay rate.")
@click.option("--xi", type=float, default=None,
              help="Reference lag as a fraction of h (0, 1); default scans a small grid.")
@click.option("--tol", type=float, default=1e-3, show_default=True, help="Bracket width target.")
@click.option("--h-min", type=float, default=0.1, show_default=True, help="Lower end of the scanned range.")
@click.option("--h-max", type=float, default=32.0, show_default=True, help="Upper end of the scanned range.")
@click.option("--anchor", "anchors", type=float, multiple=True,
              help="Attenuation anchor(s) in [0, 1] tried after the plain floor; repeatable.")
@click.option("--plain", is_flag=True, help="Use only the plain drain floor (no tangent anchors).")
@click.option("--out", default=None, help="Directory for cells.csv, probes.csv, certificate.json.")
@click.option("--include-timing", is_flag=True, help="Add solve-time columns to the CSV output.")
def cmd_bisect_h(system_ref, mu, k, xi, tol, h_min, h_max, anchors, plain, out, include_timing):
    """Largest certifiable delay bound at fixed decay rate."""
    system, inputs = _load(system_ref)
    if xi is not None and not 0.0 < xi < 1.0:
        raise click.UsageError("--xi must be a fraction in (0, 1) for bisect-h")
    fractions = DEFAULT_XI_FRACTIONS if xi is None else (xi,)
    anchor_grid = _anchor_grid(anchors, plain, (None,))
    outcome = max_delay_bound(
        system,
        mu=mu,
        k=k,
        h_range=(h_min, h_max),
        tol=tol,
        xi_fractions=fractions,
        attenuation_anchors=anchor_grid,
    )
    if outcome.certified:
        click.echo(
            f"best h = {outcome.best_value:.6g} (xi={outcome.best.xi:g}, "
            f"ceiling={'range end' if outcome.ceiling is None else format(outcome.ceiling, '.6g')})"
        )
    else:
        click.echo("not certified anywhere in the scanned range")
    directory = _ensure_out(out)
    if directory is not None:
        from .report import cell_from_outcome, write_cells_csv, write_json, write_probes_csv

        write_probes_csv(outcome, directory / "probes.csv", include_timing=include_timing)
        write_cells_csv(
            [cell_from_outcome(outcome, mu)], directory / "cells.csv", include_timing=include_timing
        )
        if outcome.best is not None:
            write_json(outcome.best.to_dict(), directory / "certificate.json")
        _write_manifest(
            directory,
            "bisect-h",
            {"system": system_ref, "mu": mu, "k": k, "xi": xi, "tol": tol,
             "h_min": h_min, "h_max": h_max, "anchors": list(anchor_grid)},
            inputs,
        )
    return EXIT_OK if outcome.certified else EXIT_NOT_CERTIFIED


@cli.command("simulate")
@click.option("--system", "system_ref", required=True, help="System JSON path or bundled name.")
@click.option("--h", "h", type=float, default=None,
              help="Constant delay (alternative to the sinusoid options).")
@click.option("--delay-base", type=float, default=None, help="Sinusoid delay offset.")
@click.option("--delay-amp", type=float, default=0.0, show_default=True, help="Sinusoid delay amplitude.")
@click.option("--delay-omega", type=float, default=1.0, show_default=True, help="Sinusoid delay frequency.")
@click.option("--history", default=None,
              help="Comma-separated r(0), extended constantly over the history window.")
@click.option("--horizon", type=float, default=20.0, show_default=True, help="Final time.")
@click.option("--step", type=float, default=None, help="Integration step; default h_min/4 capped.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for the random history when --history is omitted.")
@click.option("--out", default=None, help="Directory for trajectory.csv (and trajectory.svg).")
@click.option("--format", "fmt", type=click.Choice(["csv", "svg", "json"]), default="svg",
              show_default=True, help="svg renders the figure alongside the CSV.")
def cmd_simulate(system_ref, h, delay_base, delay_amp, delay_omega, history,
                 horizon, step, seed, out, fmt):
    """Integrate the closed loop and export the trajectory."""
    system, inputs = _load(system_ref)
    if (h is None) == (delay_base is None):
        raise click.UsageError("give exactly one of --h (constant) or --delay-base (sinusoid)")
    if h is not None:
        delay = DelaySignal.constant(h)
    else:
        delay = DelaySignal.sinusoid(delay_base, delay_amp, delay_omega)
    if history is not None:
        try:
            r0 = np.array([float(v) for v in history.split(",")], dtype=float)
        except ValueError:
            raise click.UsageError(f"--history must be comma-separated numbers, got {history!r}")
        if r0.shape != (system.dim,):
            raise click.UsageError(
                f"--history needs {system.dim} components for this system, got {len(r0)}"
            )
    else:
        r0 = np.random.default_rng(seed).uniform(-1.0, 1.0, system.dim)
    traj = simulate(system, delay, r0, t_final=horizon, step=step)
    if traj.blew_up:
        click.echo("trajectory blew up before the horizon")
        return EXIT_NUMERICAL
    rate, amplitude = estimate_decay_rate(traj, detail=True)
    click.echo(f"simulated to t={traj.t[-1]:g}: final norm {traj.norms()[-1]:.3e}, "
               f"fitted decay rate {rate:.4g}")
    directory = _ensure_out(out)
    if directory is not None:
        from .report import render_trajectory_svg, write_json, write_trajectory_csv

        write_trajectory_csv(traj, delay, directory / "trajectory.csv")
        if fmt == "svg":
            render_trajectory_svg(traj, directory / "trajectory.svg", delay=delay)
        if fmt == "json":
            write_json(
                {"final_norm": float(traj.norms()[-1]), "decay_rate": rate,
                 "amplitude": amplitude, "blew_up": traj.blew_up},
                directory / "summary.json",
            )
        _write_manifest(
            directory,
            "simulate",
            {"system": system_ref, "delay": delay.label, "history": history,
             "horizon": horizon, "step": step, "format": fmt},
            inputs,
            seed=seed,
        )
    return EXIT_OK


@cli.command("verify-inequalities")
@click.option("--cases", type=int, default=250, show_default=True, help="Cases per inequality family.")
@click.option("--seed", type=int, default=0, show_default=True, help="Base seed for the random suites.")
@click.option("--out", default=None, help="Directory for suite.csv and manifest.")
def cmd_verify_inequalities(cases, seed, out):
    """Run the randomized bound-verification suites; exit 4 on any violation."""
    if cases < 1:
        raise click.UsageError("--cases must be at least 1")
    all_cases = []
    failed = False
    for offset, kind in enumerate(SUITE_KINDS):
        suite = run_inequality_suite(kind, cases, seed + offset)
        worst = min(c.slack / max(c.scale, 1e-300) for c in suite)
        status = "ok" if worst >= -1e-8 else "VIOLATED"
        failed = failed or status != "ok"
        click.echo(f"{kind:<10} {len(suite)} cases, worst relative slack {worst:+.3e}  {status}")
        all_cases.extend(suite)
    directory = _ensure_out(out)
    if directory is not None:
        from .report import write_suite_csv

        write_suite_csv(all_cases, directory / "suite.csv")
        _write_manifest(directory, "verify-inequalities", {"cases": cases}, [], seed=seed)
    return EXIT_NUMERICAL if failed else EXIT_OK


@cli.command("count-vars")
@click.option("--n", type=int, default=None, help="State dimension.")
@click.option("--system", "system_ref", default=None, help="System JSON path or bundled name.")
def cmd_count_vars(n, system_ref):
    """Print the number of scalar decision variables for dimension n."""
    if (n is None) == (system_ref is None):
        raise click.UsageError("give exactly one of --n or --system")
    if system_ref is not None:
        system, _ = _load(system_ref)
        n = system.dim
    if n < 1:
        raise click.UsageError(f"--n must be at least 1, got {n}")
    click.echo(str(count_variables(n)))
    return EXIT_OK


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        code = cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EXIT_INVALID_INPUT
    except click.ClickException as exc:
        exc.show()
        return EXIT_INVALID_INPUT
    except click.exceptions.Abort:
        return EXIT_INVALID_INPUT
    except (SystemFormatError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID_INPUT
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERICAL
    return int(code) if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
