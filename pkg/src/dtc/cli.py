"""``dtc <mode> --config <file> [--preset <name>] [--out <dir>] [--jobs <k>] [--seed <u64>]``

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 resource guard. ``DTC_JOBS`` sets the worker count when ``--jobs`` is
not given.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import MODES, ConfigError, RunConfig, load_config, preset_names, schema
from .fock import DimerParams, build_bec_state, build_coherent, build_imbalance
from .liouvillian import DriveProtocol, StateError, evolve_state, flip_superoperator, propagate_piecewise
from .meanfield_dimer import MfParams, SCAN_COLUMNS, class_counts, critical_interaction, critical_interaction_formula, scan_cell
from .meanfield_ring import RingParams, RingProtocol, localized_state, ring_fourier, run_ring, with_axis
from .numerics import IntegrationError, NumericalError
from .spectrum import fit_scaling, leading_eigenvalues, relaxation_rate, quasi_frequency, spectral_decompose

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_GUARD = 0, 1, 2, 3
UCR_TOLERANCE = 1e-3


class ResourceGuardError(RuntimeError):
    pass


class RunFailed(RuntimeError):
    """A run whose outputs are written but whose acceptance check failed."""

    def __init__(self, message: str, tables: list):
        super().__init__(message)
        self.tables = tables


@dataclass
class Table:
    name: str
    columns: Sequence[str]
    rows: list
    notes: Sequence[str] = ()


def resolve_jobs(arg: int | None) -> int:
    if arg is not None:
        jobs = arg
    else:
        env = os.environ.get("DTC_JOBS", "1")
        try:
            jobs = int(env)
        except ValueError:
            raise ConfigError(f"DTC_JOBS must be an integer, got {env!r}") from None
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return jobs


def run_cells(fn: Callable, cells: Sequence, jobs: int) -> list:
    """``[fn(c) for c in cells]``, spread over `jobs` processes, in order."""
    if jobs == 1 or len(cells) < 2:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
        return list(pool.map(fn, cells))


def guard(N: int, cfg: RunConfig) -> None:
    if N > cfg.max_N:
        D = (N + 1) ** 2
        raise ResourceGuardError(
            f"N = {N} exceeds max_N = {cfg.max_N}: the one-period map would be a dense "
            f"{D} x {D} complex matrix ({D * D * 16 / 2**30:.2f} GiB); raise max_N to proceed"
        )


def dimer_drive(cfg: RunConfig) -> DriveProtocol:
    if cfg.drive == "constant":
        return DriveProtocol.constant(cfg.J, cfg.T)
    return DriveProtocol.two_step(cfg.J1, cfg.J2, cfg.xi, cfg.T)


def dimer_params(cfg: RunConfig, N: int, UN: float | None = None) -> DimerParams:
    return DimerParams.from_scaled(N, cfg.UN if UN is None else UN, cfg.gammaN, cfg.alpha, cfg.J)


# ---- spectrum -------------------------------------------------------------

def _grid_cell(args):
    cfg, J1, UN = args
    protocol = DriveProtocol.two_step(J1, cfg.J2, cfg.xi, cfg.T)
    lam = leading_eigenvalues(propagate_piecewise(dimer_params(cfg, cfg.N, UN), protocol), 3)
    th_re = relaxation_rate(lam, cfg.T)
    th_im = quasi_frequency(lam, cfg.T)
    omega = 2 * np.pi / cfg.T
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rate = np.log(-th_re[1] / cfg.gammaN) if cfg.gammaN > 0 else np.nan
    return [J1, UN, th_re[1], th_im[1], th_im[1] / omega, log_rate, th_re[2]]


def cmd_spectrum(cfg: RunConfig, jobs: int) -> list[Table]:
    guard(cfg.N, cfg)
    if cfg.J1_range:
        J1s = np.linspace(*cfg.J1_range)
        UNs = np.linspace(*cfg.UN_range)
        cells = [(cfg, float(j), float(u)) for j in J1s for u in UNs]
        rows = run_cells(_grid_cell, cells, jobs)
        cols = ["J1_over_J", "UN_over_J", "theta2_re", "theta2_im", "theta2_im_over_omega",
                "log_rate2_over_gammaN", "theta3_re"]
        return [Table("spectrum_grid", cols, rows)]
    p = dimer_params(cfg, cfg.N)
    V = propagate_piecewise(p, dimer_drive(cfg))
    report = spectral_decompose(V, flip_superoperator(cfg.N) if cfg.alpha == 0 else None)
    rows = [[m.index, m.eigenvalue.real, m.eigenvalue.imag, m.theta_re, m.theta_im, m.lifetime, m.parity]
            for m in report.modes]
    notes = [f"jordan_flag = {report.jordan_flag}", f"eigvec_condition = {report.eigvec_condition!r}"]
    cols = ["mode_index", "lambda_re", "lambda_im", "theta_re", "theta_im", "lifetime", "parity"]
    return [Table("spectrum", cols, rows, notes)]


# ---- evolve ---------------------------------------------------------------

def initial_density(cfg: RunConfig) -> np.ndarray:
    basis = dimer_params(cfg, cfg.N).basis
    if cfg.initial == "site1":
        psi = basis.ket(cfg.N, 0)
    elif cfg.initial == "site2":
        psi = basis.ket(0, cfg.N)
    elif cfg.initial == "bec":
        psi = build_bec_state(basis)
    else:
        psi = build_coherent(basis, cfg.theta, cfg.phi)
    return np.outer(psi, psi.conj())


def cmd_evolve(cfg: RunConfig, jobs: int) -> list[Table]:
    guard(cfg.N, cfg)
    p = dimer_params(cfg, cfg.N)
    traj = evolve_state(initial_density(cfg), p, dimer_drive(cfg), cfg.n_periods,
                        {"O": build_imbalance(p.basis)}, cfg.samples_per_segment)
    rows = [[int(k), t, "O", complex(v).real, complex(v).imag]
            for k, t, v in zip(traj.period_index, traj.times, traj.values["O"])]
    return [Table("evolve", ["period_index", "time", "observable_name", "value_re", "value_im"], rows)]


# ---- scaling --------------------------------------------------------------

def _scaling_cell(args):
    cfg, N = args
    lam = leading_eigenvalues(propagate_piecewise(dimer_params(cfg, N), dimer_drive(cfg)), 3)
    rates = relaxation_rate(lam, cfg.T)
    return float(rates[1]), float(rates[2])


def cmd_scaling(cfg: RunConfig, jobs: int) -> list[Table]:
    Ns = cfg.N_list
    if len(Ns) < 3 or any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ConfigError("N_list: need at least 3 ascending particle numbers")
    if cfg.gammaN <= 0:
        raise ConfigError("gammaN: the scaling mode needs gammaN > 0")
    guard(max(Ns), cfg)
    res = run_cells(_scaling_cell, [(cfg, N) for N in Ns], jobs)
    th2 = np.array([r[0] for r in res])
    th3 = np.array([r[1] for r in res])
    exp_fit, biased = fit_scaling(Ns, th2, th3, cfg.gammaN)
    rows = [[N, a, b, -a / cfg.gammaN, -b / cfg.gammaN] for N, a, b in zip(Ns, th2, th3)]
    fit_rows = [
        ["rate2", "c", exp_fit.c], ["rate2", "kappa", exp_fit.kappa],
        ["rate2", "log_residual", exp_fit.residual], ["rate2", "degenerate", exp_fit.degenerate],
        ["rate3", "a", biased.a], ["rate3", "b", biased.b], ["rate3", "kappa", biased.kappa],
        ["rate3", "residual", biased.residual], ["rate3", "degenerate", biased.degenerate],
    ]
    return [
        Table("scaling", ["N", "theta2_re", "theta3_re", "rate2_over_gammaN", "rate3_over_gammaN"], rows),
        Table("scaling_fit", ["quantity", "parameter", "value"], fit_rows),
    ]


# ---- ucr ------------------------------------------------------------------

def cmd_ucr(cfg: RunConfig, jobs: int) -> list[Table]:
    if not cfg.gammaN_list:
        raise ConfigError("gammaN_list: the ucr mode needs at least one dissipation value")
    measured = run_cells(critical_interaction, [g / cfg.J for g in cfg.gammaN_list], jobs)
    rows = []
    for g, u in zip(cfg.gammaN_list, measured):
        f = critical_interaction_formula(g / cfg.J)
        rows.append([g, u, f, abs(u - f)])
    table = Table("ucr", ["gammaN_over_J", "UN_cr_measured", "UN_cr_formula", "deviation"], rows)
    worst = max(r[3] for r in rows)
    if worst > UCR_TOLERANCE:
        raise RunFailed(f"critical interaction deviates from the closed form by {worst:.3g}", [table])
    return [table]


# ---- mean-field dimer -----------------------------------------------------

def _mf_cell(args):
    cfg, cell, value = args
    p = MfParams(cfg.UN, cfg.gammaN, cfg.alpha, dimer_drive(cfg))
    return scan_cell(cfg.axis, value, cell, p, cfg.n_random_inits, cfg.seed, cfg.n_transient, cfg.n_record, cfg.radius)


def cmd_mf_dimer(cfg: RunConfig, jobs: int) -> list[Table]:
    if not cfg.axis:
        raise ConfigError("axis: the mf-dimer mode needs a scan axis")
    values = cfg.scan_values
    if values.size == 0:
        raise ConfigError("axis_range, axis_values: no scan values given")
    records = [r for part in run_cells(_mf_cell, [(cfg, i, float(v)) for i, v in enumerate(values)], jobs)
               for r in part]
    rows = [[r.axis_value, r.init_seed, r.sample_index, r.theta, r.phi, r.O_value, r.attractor_class]
            for r in records]
    summary = [[v, lab, n] for v, counts in class_counts(records).items() for lab, n in sorted(counts.items())]
    return [
        Table("mf_dimer", list(SCAN_COLUMNS), rows),
        Table("mf_dimer_classes", ["axis_value", "attractor_class", "count"], summary),
    ]


# ---- mean-field ring ------------------------------------------------------

def _ring_cell(args):
    cfg, value = args
    p = RingParams(cfg.UN, cfg.gammaN, cfg.alpha)
    proto = RingProtocol(cfg.J, cfg.Jf, cfg.xi, cfg.T)
    if cfg.axis:
        p, proto = with_axis(p, proto, cfg.axis, value)
    traj = run_ring(p, proto, localized_state(cfg.M, cfg.initial_site), cfg.transient + cfg.W, cfg.rtol, cfg.atol)
    return traj, ring_fourier(traj, cfg.W, cfg.transient)


def cmd_mf_ring(cfg: RunConfig, jobs: int) -> list[Table]:
    values = cfg.scan_values if cfg.axis else np.array([np.nan])
    if values.size == 0:
        raise ConfigError("axis_range, axis_values: no scan values given")
    results = run_cells(_ring_cell, [(cfg, float(v)) for v in values], jobs)
    nu_n = 1.0 / (cfg.M // 2)
    spec_rows, summary, tables = [], [], []
    for i, (v, (traj, spec)) in enumerate(zip(values, results)):
        spec_rows += [[v, nu, m] for nu, m in zip(spec.nu, spec.magnitude)]
        summary.append([v, spec.dominant, spec.at(nu_n), spec.dominance(nu_n), spec.raw_dominance(nu_n),
                        float(np.max(np.abs(traj.density.sum(axis=1) - 1)))])
        rows = [[k, l + 1, d] for k, row in enumerate(traj.density) for l, d in enumerate(row)]
        tables.append(Table(f"mf_ring_trajectory_{i}", ["period", "site", "density"], rows,
                            [f"axis_value = {v!r}"]))
    notes = ["fourier_sampling = stroboscopic t = kT", f"fourier_window = periods {cfg.transient}..{cfg.transient + cfg.W - 1}",
             "fourier_normalization = 1/W"]
    return [
        Table("mf_ring_spectrum", ["axis_value", "omega_over_driving_frequency", "magnitude"], spec_rows, notes),
        Table("mf_ring_summary", ["axis_value", "dominant_over_driving_frequency", "magnitude_at_omega_over_n",
                                  "line_dominance", "raw_bin_dominance", "max_norm_drift"], summary, notes),
    ] + tables


COMMANDS = {
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    "scaling": cmd_scaling,
    "ucr": cmd_ucr,
    "mf-dimer": cmd_mf_dimer,
    "mf-ring": cmd_mf_ring,
}


# ---- output ---------------------------------------------------------------

def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def write_table(table: Table, path: Path, header: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        for line in list(header) + list(table.notes):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_cell(x) for x in row])


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_envelope(tables: Sequence[Table], cfg: RunConfig, path: Path, wall: float) -> None:
    env = {
        "config": cfg.expanded(),
        "version": __version__,
        "wall_time_s": wall,
        "tables": {
            t.name: [dict(zip(t.columns, map(_jsonable, row))) for row in t.rows] for t in tables
        },
    }
    path.write_text(json.dumps(env, indent=1))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dtc", description="Driven-dissipative Bose-Hubbard time-crystal simulations")
    ap.add_argument("mode", choices=MODES + ("presets", "schema"))
    ap.add_argument("--config", type=Path, help="flat TOML run configuration")
    ap.add_argument("--preset", help="named figure recipe; --config entries override it")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    ap.add_argument("--jobs", type=int, help="worker processes (default: $DTC_JOBS or 1)")
    ap.add_argument("--seed", type=int, help="base seed, overrides the config (unsigned 64-bit)")
    ap.add_argument("--json", action="store_true", help="also write a JSON envelope")
    ap.add_argument("--name", help="output file stem (default: preset or config name)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.mode == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    if args.mode == "schema":
        for name, doc, default in schema():
            print(f"{name:20s} {doc}  [default: {default}]")
        return EXIT_OK
    t0 = time.perf_counter()
    code, failure = EXIT_OK, None
    try:
        if args.config is None and args.preset is None:
            raise ConfigError("give --config, --preset or both")
        overrides = {}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            overrides["seed"] = args.seed
        cfg = load_config(args.config, args.preset, overrides, mode=args.mode)
        if cfg.mode != args.mode:
            raise ConfigError(f"mode: the configuration is for mode {cfg.mode!r}, not {args.mode!r}")
        jobs = resolve_jobs(args.jobs)
        try:
            tables = COMMANDS[cfg.mode](cfg, jobs)
        except RunFailed as exc:
            tables, code, failure = exc.tables, EXIT_NUMERICAL, str(exc)
    except ConfigError as exc:
        print(f"dtc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceGuardError as exc:
        print(f"dtc: refused: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (NumericalError, IntegrationError, StateError, np.linalg.LinAlgError) as exc:
        print(f"dtc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - t0
    stem = args.name or args.preset or (args.config.stem if args.config else cfg.mode)
    args.out.mkdir(parents=True, exist_ok=True)
    header = [f"dtc {__version__}", f"command = {cfg.mode}"] + cfg.header_lines()
    for t in tables:
        path = args.out / f"{stem}_{t.name}.csv"
        write_table(t, path, header)
        print(path)
    if args.json:
        path = args.out / f"{stem}.json"
        write_envelope(tables, cfg, path, wall)
        print(path)
    if failure:
        print(f"dtc: check failed: {failure}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
