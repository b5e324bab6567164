"""
Command line driver: ``cavityflow {modes,simulate,stability,atlas}``.

Exit status is 0 on success, 2 for configuration errors (nothing is
written) and 3 for numerical failures.
"""

import argparse
import csv
import functools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .ball_basis import build_basis
from .cache import CacheEntry, cache_load, cache_path, cache_store, params_hash
from .config import load_config
from .coupling import InertiaSpec, build_tensors, rigid_tensors
from .dynamics import SimState, integrate
from .equilibria import find_equilibria, stability_of
from .errors import (
    AssemblyError,
    CacheError,
    ConfigError,
    ConfigurationError,
    ConsistencyError,
    FitError,
    NumericalFailure,
    OracleError,
    ParameterError,
)
from .fitting import fit_decay
from .rng import SplitMix64
from .stokes_modes import FluidParams, compute_modes

__all__ = [
    "CSV_HEADER",
    "STABILITY_HEADER",
    "build_system",
    "initial_state",
    "main",
    "run_atlas",
    "run_modes",
    "run_simulate",
    "run_stability",
]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CSV_HEADER = ("t", "cnorm", "a1", "a2", "a3", "E", "Imom", "dissip", "eresid")
STABILITY_HEADER = ("lambda_star", "m", "zero_multiplicity", "unstable_count", "spectral_gap", "classification")
ATLAS_HEADER = ("cell", "solid_lambda", "zeta", "status") + STABILITY_HEADER

_CONFIG_ERRORS = (ConfigError, ParameterError, ConfigurationError)
_NUMERIC_ERRORS = (NumericalFailure, AssemblyError, ConsistencyError, OracleError)


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _note(msg):
    print(msg, file=sys.stderr)


def _inertia(cfg):
    if cfg.raw_lambda is not None:
        return InertiaSpec.raw(cfg.raw_lambda)
    return InertiaSpec.from_solid(cfg.solid_lambda)


@functools.lru_cache(maxsize=4)
def _basis(l_max, n_rad, families, radial):
    return build_basis(l_max, n_rad, families=families, radial=radial)


def _compute_entry(cfg):
    basis = _basis(cfg.l_max, cfg.n_rad, cfg.families, cfg.radial)
    fluid = FluidParams(cfg.nu, cfg.zeta, cfg.experimental_zero_zeta)
    modes = compute_modes(basis, fluid, cfg.n_modes)
    tensors = build_tensors(modes, _inertia(cfg))
    return CacheEntry(cfg.params_key(), modes, tensors)


def build_system(cfg, cache_dir=None, write_cache=True):
    """Modes and coupling tensors for ``cfg``, via the cache when possible.

    Returns ``(entry, status)`` where status is ``"hit"``, ``"miss"`` or
    ``"off"``.  With ``n_modes = 0`` the entry carries rigid-body tensors only.
    """
    if cfg.n_modes == 0:
        return CacheEntry(cfg.params_key(), None, rigid_tensors(_inertia(cfg))), "off"
    if cache_dir is None:
        return _compute_entry(cfg), "off"
    key = cfg.params_key()
    path = cache_path(cache_dir, key)
    if path.exists():
        try:
            return cache_load(path, expected_hash=params_hash(key)), "hit"
        except CacheError as exc:
            _note(f"warning: ignoring cache file {path}: {exc}")
    entry = _compute_entry(cfg)
    if write_cache:
        cache_store(path, entry)
    return entry, "miss"


def initial_state(cfg, tensors):
    """Initial (c0, a0) from the configured presets."""
    n = tensors.n
    init = cfg.initial
    rng = None
    c = np.zeros(n)
    if init.c0_kind == "single_mode":
        k, amp = init.c0_args
        c[k] = amp
    elif init.c0_kind == "random":
        seed, amp = init.c0_args
        rng = SplitMix64(seed)
        c = amp * np.array(rng.symmetric(n))
    elif init.c0_kind == "explicit":
        c = np.array(init.c0_args, dtype=float)
    if init.a0 == "random":
        if rng is None:
            rng = SplitMix64(cfg.seed if cfg.seed is not None else 0)
        a = np.array(rng.unit_vector())
    else:
        a = np.array(init.a0, dtype=float)
    if init.momentum is not None:
        a *= init.momentum / np.linalg.norm(np.asarray(tensors.inertia.lambdas) * a)
    return SimState(0.0, c, a)


def _nearest_equilibrium(a):
    """Principal axis closest to ``a``: (axis index, sign, angle)."""
    a = np.asarray(a, dtype=float)
    i = int(np.argmax(np.abs(a)))
    angle = float(np.arctan2(np.linalg.norm(np.delete(a, i)), abs(a[i])))
    return i, (1 if a[i] >= 0 else -1), angle


def _decay(t, values, tail):
    try:
        rate, r2 = fit_decay(t, values, tail)
        return f"{rate:.6g} (r2={r2:.6f})"
    except FitError as exc:
        return f"n/a ({exc})"


def _summary(result, cfg, tensors, out):
    lam = np.asarray(tensors.inertia.lambdas)
    t = result.column("t")
    c = result.column("c")
    a = result.column("a")
    final = result.final
    i, sign, angle = _nearest_equilibrium(final.a)
    Imom = float(np.linalg.norm(lam * final.a))
    cnorm = np.linalg.norm(c, axis=1) if c.size else np.zeros(len(t))
    abar = a[-5:].mean(axis=0)
    print(f"terminated_at_equilibrium: {str(result.terminated).lower()}", file=out)
    print(f"final_t: {final.t:.17g}", file=out)
    print(f"nearest_equilibrium: axis={i + 1} sign={'+' if sign > 0 else '-'} "
          f"lambda_star={lam[i]:.17g} angle={angle:.3e}", file=out)
    print(f"final_momentum: {Imom:.17g}", file=out)
    print(f"final_a: {' '.join(format(x, '.17g') for x in final.a)}", file=out)
    print(f"momentum_drift: {result.momentum_drift():.3e}", file=out)
    print(f"fluid_decay_rate: {_decay(t, cnorm, cfg.fit_tail)}", file=out)
    print(f"body_decay_rate: {_decay(t, np.linalg.norm(a - abar, axis=1), cfg.fit_tail)}", file=out)
    print(f"steps: {result.n_steps} rejected: {result.n_rejected}", file=out)


def run_simulate(cfg, cache_dir=None, out=None, stdout=None):
    """Integrate one trajectory and write the sample CSV."""
    path = out or cfg.csv_path
    if path is None:
        raise ConfigError("outputs.csv", "no output path (set outputs.csv or pass --out)")
    if cfg.initial.c0_kind == "rigid_only":
        # c = 0 is invariant only without fluid modes: off the principal axes
        # the body's angular acceleration drives the l = 1 toroidal modes.
        tensors, status = rigid_tensors(_inertia(cfg)), "off (rigid reduction)"
    else:
        entry, status = build_system(cfg, cache_dir)
        tensors = entry.tensors
    state0 = initial_state(cfg, tensors)
    _note(f"cache: {status}; modes: {tensors.n}")

    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)

        def sink(s):
            mon = s.monitors
            writer.writerow(_fmt(x) for x in (
                s.t, float(np.linalg.norm(s.state.c)), *s.state.a,
                mon.energy, mon.momentum_norm, mon.dissipation, s.eresid,
            ))

        try:
            result = integrate(state0, tensors, cfg.integrator, sink=sink, sample_interval=cfg.sample_interval)
        except NumericalFailure as exc:
            last = exc.state.t if exc.state is not None else float("nan")
            fh.flush()
            raise NumericalFailure(f"{exc} (last valid t = {last:.17g})", exc.state) from None
    _summary(result, cfg, tensors, out=stdout or sys.stdout)
    return result


def _stability_rows(tensors, momentum):
    rows, seen = [], set()
    for eq in find_equilibria(tensors.inertia, momentum):
        if eq.lambda_star in seen:
            continue
        seen.add(eq.lambda_star)
        rows.append(stability_of(tensors, eq).row())
    return rows


def _stability_momentum(cfg):
    if cfg.stability_momentum is not None:
        return cfg.stability_momentum
    return cfg.initial.momentum if cfg.initial.momentum is not None else 1.0


def _open_out(path):
    if path is None or path == "-":
        return _NoClose(sys.stdout)
    return open(path, "w", newline="", encoding="ascii")


class _NoClose:
    def __init__(self, fh):
        self.fh = fh

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        self.fh.flush()


def run_stability(cfg, cache_dir=None, out=None):
    """One row per distinct principal moment, ascending."""
    entry, _ = build_system(cfg, cache_dir)
    rows = _stability_rows(entry.tensors, _stability_momentum(cfg))
    with _open_out(out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STABILITY_HEADER)
        for row in rows:
            writer.writerow(_fmt(row[k]) for k in STABILITY_HEADER)
    return rows


def run_modes(cfg, cache_dir=None, out=None):
    """Compute (or load) the modes and list their eigenvalues."""
    entry, status = build_system(cfg, cache_dir)
    _note(f"cache: {status}")
    modes = entry.modes
    with _open_out(out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("index", "family", "l", "m", "radial_order", "Lambda"))
        if modes is not None:
            for k, (lab, r, lam) in enumerate(zip(modes.labels, modes.radial_order, modes.eigenvalues)):
                writer.writerow((k, lab[0].value, lab[1], lab[2], r, _fmt(lam)))
    return entry


def _atlas_cell(cfg, cache_dir):
    """Classify one grid cell; never raises for numerical or parameter failures."""
    try:
        entry, status = build_system(cfg, cache_dir, write_cache=False)
        rows = _stability_rows(entry.tensors, _stability_momentum(cfg))
        fresh = entry if status == "miss" else None
        return "ok", rows, fresh
    except (*_CONFIG_ERRORS, *_NUMERIC_ERRORS) as exc:
        msg = " ".join(str(exc).split()).replace(",", ";")
        return f"error: {type(exc).__name__}: {msg}", [], None


def run_atlas(cfg, cache_dir=None, out=None):
    """Stability classification over the inertia x zeta grid."""
    lambdas = cfg.atlas_solid_lambdas or (cfg.solid_lambda,)
    zetas = cfg.atlas_zetas or (cfg.zeta,)
    cells = [replace(cfg, solid_lambda=sl, raw_lambda=None, zeta=z) for sl in lambdas for z in zetas]
    if cfg.atlas_workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.atlas_workers) as pool:
            results = list(pool.map(_atlas_cell, cells, [cache_dir] * len(cells)))
    else:
        results = [_atlas_cell(c, cache_dir) for c in cells]

    table = []
    for idx, (cell, (status, rows, fresh)) in enumerate(zip(cells, results)):
        if fresh is not None and cache_dir is not None:
            cache_store(cache_path(cache_dir, fresh.params), fresh)
        row = {"cell": idx, "solid_lambda": " ".join(_fmt(float(x)) for x in cell.solid_lambda),
               "zeta": _fmt(float(cell.zeta)), "status": status}
        for k in STABILITY_HEADER:
            row[k] = ";".join(_fmt(r[k]) for r in rows)
        table.append(row)
    with _open_out(out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ATLAS_HEADER)
        for row in table:
            writer.writerow(row[k] for k in ATLAS_HEADER)
    return table


def _parser():
    p = argparse.ArgumentParser(prog="cavityflow", description="Rigid body with a fluid-filled ball cavity.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("modes", "compute and list Stokes modes"),
                       ("simulate", "integrate a trajectory to CSV"),
                       ("stability", "classify the permanent rotations"),
                       ("atlas", "classification sweep over inertia and zeta")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--cache-dir", default=os.environ.get("CAVITYFLOW_CACHE_DIR"),
                        help="mode/tensor cache directory (default: $CAVITYFLOW_CACHE_DIR)")
        sp.add_argument("--out", help="output path (default: outputs.csv for simulate, stdout otherwise)")
        sp.add_argument("--seed", type=_u64, help="seed for random initial-data presets")
    return p


def _u64(s):
    try:
        v = int(s, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


_COMMANDS = {"modes": run_modes, "simulate": run_simulate, "stability": run_stability, "atlas": run_atlas}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.command == "simulate" and args.out is None and cfg.csv_path is None:
            raise ConfigError("outputs.csv", "no output path (set outputs.csv or pass --out)")
    except ConfigError as exc:
        _note(f"config error: {exc}")
        return EXIT_CONFIG
    try:
        result = _COMMANDS[args.command](cfg, cache_dir=args.cache_dir, out=args.out)
    except _CONFIG_ERRORS as exc:
        _note(f"config error: {exc}")
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        _note(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    if args.command == "atlas" and not any(row["status"] == "ok" for row in result):
        _note("every atlas cell failed")
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
