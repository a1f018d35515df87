"""Command-line front end: ``moltc run | sweep | surfaces | oracle-check``.

Exit status 0 means success, 1 a physics-consistency failure (including failed
sweep cells and a failed oracle comparison) and 2 a usage or configuration
error.  The default worker count comes from ``MOLTC_WORKERS``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, units
from .basis import build_grid
from .config import ExperimentConfig, build_config, default_gamma_grid, read_config_file
from .ensemble import WORKERS_ENV, default_workers, energy_retention, run_ensemble
from .errors import ConfigurationError, MoltcError
from .hamiltonian import ModelParams
from .model import build_model
from .molecular import MolecularCurves, load_curves
from .oracle import compare, run_oracle
from .polaritons import pointwise_diagonalize

log = logging.getLogger("moltc")

EXIT_OK, EXIT_PHYSICS, EXIT_USAGE = 0, 1, 2


def _fmt(x) -> str:
    return format(float(x), ".10e")


def _header(cfg: ExperimentConfig, extra=()) -> list:
    lines = [f"# moltc {__version__}"]
    lines += [f"# {line}" for line in cfg.echo()]
    lines += [f"# {line}" for line in extra]
    return lines


def write_table(path: Path, header: list, columns: list, rows) -> None:
    text = "\n".join(header + [",".join(columns)] + [",".join(r) for r in rows]) + "\n"
    path.write_text(text, encoding="utf-8")


def _gamma_tag(gamma: float) -> str:
    return format(gamma, ".6g").replace(".", "p")


def cell_filename(n: int, gamma: float) -> str:
    return f"cell_N{n}_gamma{_gamma_tag(gamma)}.csv"


def _curves(cfg: ExperimentConfig):
    return None if cfg.curves == "surrogate" else load_curves(cfg.curves)


def run_cell(cfg: ExperimentConfig, n: int, gamma: float, curves=None):
    """Run one (N, gamma) ensemble; returns the model, statistics and surfaces."""
    params = cfg.model.replace(n_emitters=int(n), gamma=float(gamma))
    model = build_model(params, curves)
    surfaces = pointwise_diagonalize(model.curves, params)
    stats = run_ensemble(model, cfg.n_trajectories, cfg.master_seed, cfg.workers,
                         stride=cfg.stride, engine=cfg.engine, surfaces=surfaces)
    return model, stats, surfaces


def write_cell(path: Path, cfg: ExperimentConfig, model, stats, surfaces) -> tuple:
    """Write one time-series table; returns final (retention, stderr)."""
    ret, ret_se = energy_retention(stats, model.params, model.E0)
    pops = stats.populations
    pse = stats.stderr["populations"]
    bright = surfaces.labels[:surfaces.n_bright]
    columns = ["time_fs", "retention", "retention_se", "excited", "excited_se",
               "GROUND", "PHOTON", "PHOTON_se", "MOL_PI", "EMITTERS", "DARK", "DARK_se"]
    columns += [f"pol_{lab}" for lab in bright]
    pol = stats.mean["polaritonic"]
    rows = []
    for i, t in enumerate(stats.times_fs):
        row = [t, ret[i], ret_se[i], 1.0 - pops[i, 0], pse[i, 0], pops[i, 0], pops[i, 1],
               pse[i, 1], pops[i, 2], pops[i, 3:].sum(), stats.dark[i], stats.stderr["dark"][i]]
        row += list(pol[i, :surfaces.n_bright])
        rows.append([_fmt(x) for x in row])
    extra = [f"n_emitters = {model.params.n_emitters}", f"gamma = {model.params.gamma!r}",
             f"E0_hartree = {model.E0!r}"]
    write_table(path, _header(cfg, extra), columns, rows)
    return float(ret[-1]), float(ret_se[-1])


def run_sweep(cfg: ExperimentConfig, out_dir: Path) -> int:
    """All (N, gamma) cells plus the master retention table.

    Failed cells are marked ``FAILED`` in the table; the remaining cells are
    still written and the return status is 1.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = _curves(cfg)
    table = {}
    failed = False
    for n in cfg.n_values:
        for g in cfg.gamma_values:
            try:
                model, stats, surfaces = run_cell(cfg, n, g, curves)
                table[(n, g)] = write_cell(out_dir / cell_filename(n, g), cfg, model, stats, surfaces)
            except ConfigurationError:
                raise
            except MoltcError as exc:
                log.error("cell N=%s gamma=%s failed: %s", n, g, exc)
                table[(n, g)] = None
                failed = True
    columns = ["gamma_fs"]
    for n in cfg.n_values:
        columns += [f"N{n}", f"N{n}_se"]
    rows = []
    for g in cfg.gamma_values:
        row = [_fmt(g)]
        for n in cfg.n_values:
            val = table[(n, g)]
            row += ["FAILED", "FAILED"] if val is None else [_fmt(val[0]), _fmt(val[1])]
        rows.append(row)
    t_final = cfg.model.duration
    write_table(out_dir / "retention.csv", _header(cfg, [f"retention at t = {t_final!r} fs"]),
                columns, rows)
    return EXIT_PHYSICS if failed else EXIT_OK


def export_surfaces(cfg: ExperimentConfig, out_dir: Path) -> list:
    """Tracked polaritonic surfaces (eV) for every N in the config."""
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = _curves(cfg)
    paths = []
    for n in cfg.n_values:
        params = cfg.model.replace(n_emitters=int(n))
        model = build_model(params, curves)
        surf = pointwise_diagonalize(model.curves, params)
        nb = surf.n_bright
        n_dark = len(surf.labels) - nb
        columns = ["q_angstrom", "GROUND"] + list(surf.labels[:nb])
        if n_dark:
            columns += ["DARK", "DARK_multiplicity"]
        rows = []
        for j, q in enumerate(model.grid.points):
            row = [_fmt(q), _fmt(units.au_to_ev(surf.ground_energy[j]))]
            row += [_fmt(units.au_to_ev(surf.eigenvalues[s, j])) for s in range(nb)]
            if n_dark:
                row += [_fmt(units.au_to_ev(surf.eigenvalues[nb, j])), str(n_dark)]
            rows.append(row)
        extra = [f"n_emitters = {n}"]
        if surf.q_star is not None:
            extra.append(f"resonance_q_angstrom = {surf.q_star!r}")
            extra.append(f"splitting_eV = {units.au_to_ev(surf.splitting)!r}")
        path = out_dir / f"surfaces_N{n}.csv"
        write_table(path, _header(cfg, extra), columns, rows)
        paths.append(path)
    return paths


def reduced_oracle_model(n_emitters=2, gamma=0.05, kappa=0.01, duration=100.0):
    """Cavity plus emitters on an 8-point grid with flat curves and no molecular coupling."""
    q = np.linspace(0.5, 3.0, 20)
    flat = MolecularCurves(q, np.zeros(q.size), np.full(q.size, 10.0), np.zeros(q.size))
    params = ModelParams(n_emitters=n_emitters, gamma=gamma, kappa=kappa, duration=duration)
    return build_model(params, flat, grid=build_grid(1.0, 2.0, 8))


def oracle_check(n_trajectories=2000, master_seed=11, gamma=0.05, kappa=0.01,
                 times=(10.0, 50.0, 100.0), workers=None, stride=10):
    """Reduced-model ensemble against the dense Lindblad integration."""
    model = reduced_oracle_model(gamma=gamma, kappa=kappa, duration=max(times))
    stats = run_ensemble(model, n_trajectories, master_seed, workers, stride=stride)
    idx = [int(np.argmin(np.abs(stats.times_fs - t))) for t in times]
    oracle = run_oracle(model, stats.times_fs[idx])
    return compare(stats, oracle), stats, oracle


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moltc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"moltc {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sweep=False):
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--profile", choices=["desk", "paper"])
        sp.add_argument("--output", help="output directory")
        sp.add_argument("--curves", help="'surrogate' or a curve table path")
        for name in ("photon-energy", "emitter-energy", "mu-a", "field-base", "reduced-mass",
                     "kappa", "dt", "duration"):
            sp.add_argument(f"--{name}", type=float)
        if sweep:
            sp.add_argument("--n-values", help="comma-separated emitter counts")
            sp.add_argument("--gamma-values", help="comma-separated rates in 1/fs or 'default'")
        else:
            sp.add_argument("--n-emitters", type=int)
            sp.add_argument("--gamma", type=float)
        sp.add_argument("--n-trajectories", type=int)
        sp.add_argument("--master-seed", type=int)
        sp.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
        sp.add_argument("--stride", type=int)
        sp.add_argument("--engine", choices=["exact", "arnoldi"])

    common(sub.add_parser("run", help="one (N, gamma) ensemble"))
    common(sub.add_parser("sweep", help="grid of (N, gamma) ensembles and a retention table"), sweep=True)
    sp = sub.add_parser("surfaces", help="export polaritonic surfaces")
    common(sp, sweep=True)
    oc = sub.add_parser("oracle-check", help="compare trajectories with the dense Lindblad integrator")
    oc.add_argument("--n-trajectories", type=int, default=2000)
    oc.add_argument("--master-seed", type=int, default=11)
    oc.add_argument("--gamma", type=float, default=0.05)
    oc.add_argument("--kappa", type=float, default=0.01)
    oc.add_argument("--workers", type=int)
    return p


def config_from_args(args) -> ExperimentConfig:
    file_kw = read_config_file(args.config) if getattr(args, "config", None) else {}
    model = {}
    for name in ("photon_energy", "emitter_energy", "mu_a", "field_base", "reduced_mass",
                 "kappa", "dt", "duration"):
        value = getattr(args, name, None)
        if value is not None:
            model[name] = value
    over = dict(profile=args.profile, output=args.output, curves=args.curves,
                n_trajectories=args.n_trajectories, master_seed=args.master_seed,
                workers=args.workers, stride=args.stride, engine=args.engine, model=model)
    try:
        if getattr(args, "n_values", None) is not None:
            over["n_values"] = tuple(int(x) for x in args.n_values.split(",") if x.strip())
        if getattr(args, "gamma_values", None) is not None:
            over["gamma_values"] = (default_gamma_grid() if args.gamma_values == "default"
                                    else tuple(float(x) for x in args.gamma_values.split(",") if x.strip()))
    except ValueError as exc:
        raise ConfigurationError(f"bad sweep list: {exc}") from exc
    if getattr(args, "n_emitters", None) is not None:
        over["n_values"] = (args.n_emitters,)
    if getattr(args, "gamma", None) is not None:
        over["gamma_values"] = (args.gamma,)
    cfg = build_config(file_overrides=file_kw, overrides=over)
    if cfg.workers is None:
        cfg = cfg.replace(workers=default_workers())
    return cfg


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "oracle-check":
            report, stats, _ = oracle_check(args.n_trajectories, args.master_seed, args.gamma,
                                            args.kappa, workers=args.workers)
            for key, z in report.z_scores.items():
                print(f"{key}: max |z| = {np.max(np.abs(z)):.3f}")
            print(f"oracle check {'PASSED' if report.passed else 'FAILED'} "
                  f"(max |z| = {report.max_abs_z:.3f}, N_T = {stats.n_trajectories})")
            return EXIT_OK if report.passed else EXIT_PHYSICS
        cfg = config_from_args(args)
        out = Path(cfg.output)
        if args.command == "surfaces":
            for path in export_surfaces(cfg, out):
                print(path)
            return EXIT_OK
        if args.command == "run":
            if len(cfg.n_values) != 1 or len(cfg.gamma_values) != 1:
                raise ConfigurationError("'run' needs exactly one N and one gamma; use 'sweep'")
        return run_sweep(cfg, out)
    except ConfigurationError as exc:
        print(f"moltc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MoltcError as exc:
        print(f"moltc: physics check failed: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
