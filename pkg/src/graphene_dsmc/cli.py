"""Command line interface: ``graphene-dsmc run|compare|rates|analyze``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .analysis import run_property_suite
from .config import ConfigFileError, load_config
from .ee import intra_rate_cells
from .engine import ConfigError, RunAborted, SimConfig, _cell_masses, run
from .material import equilibrium_density
from .phonon import PhononRateTable
from .screening import ScreeningParams

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_ABORT = 3

STEADY_FRACTION = 0.25


def _err(msg: str) -> None:
    print(f"graphene-dsmc: error: {msg}", file=sys.stderr)


def _load(args) -> tuple[SimConfig, dict]:
    if args.config is None:
        return SimConfig(), {}
    return load_config(args.config)


def _apply_overrides(cfg: SimConfig, args) -> SimConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "no_ee", False):
        changes["ee_enabled"] = False
    if getattr(args, "mode", None) is not None:
        changes["mode"] = args.mode
    return cfg.replace(**changes) if changes else cfg


def steady_velocity(data: np.ndarray, E, fraction: float = STEADY_FRACTION) -> float:
    """Mean velocity over the final samples, along -E (or |V| at zero field)."""
    n = len(data)
    start = n - max(1, int(math.ceil(fraction * n)))
    v = data[start:, 1:3].mean(axis=0)
    E = np.asarray(E, dtype=float)
    if not np.any(E):
        return float(np.hypot(*v))
    return float(-v @ E / np.linalg.norm(E))


def _projected(data: np.ndarray, E) -> np.ndarray:
    E = np.asarray(E, dtype=float)
    if not np.any(E):
        return np.hypot(data[:, 1], data[:, 2])
    return -(data[:, 1:3] @ E) / np.linalg.norm(E)


def _execute(cfg: SimConfig, out_dir: Path) -> int:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = run(cfg)
    except RunAborted as exc:
        _err(str(exc))
        for key, value in sorted(exc.diagnostics.items()):
            print(f"  {key}={value}", file=sys.stderr)
        return EXIT_ABORT
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    paths = io.write_run(out_dir, result)
    ts = result.timeseries
    direction = -np.asarray(cfg.E) if any(cfg.E) else None
    print(f"wrote {paths['timeseries']}, {paths['snapshot']}, {paths['metadata']}")
    print(f"steady V = {ts.steady_velocity(direction):.6g} nm/ps, final W = {ts.W[-1]:.6g} eV, "
          f"max f = {max(ts.f_max):.4f} (bound {result.grid.pauli_bound():.4f})")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, extra = _load(args)
    cfg = _apply_overrides(cfg, args)
    out = Path(args.out or extra.get("out") or "run_out")
    return _execute(cfg, out)


def _comparable(a: SimConfig, b: SimConfig) -> bool:
    da, db = a.to_dict(), b.to_dict()
    for d in (da, db):
        d.pop("ee_enabled")
        d.pop("seed")
    return json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)


def compare_runs(dir_a, dir_b, out_csv=None) -> dict:
    """Steady-velocity reduction between two completed runs.

    When exactly one run has e-e scattering it is the second operand, so the
    result is (V_noee - V_ee) / V_noee.  Raises ValueError for runs whose
    configurations differ in anything but ``ee_enabled`` and ``seed``.
    """
    cfg_a, data_a = io.load_run(dir_a)
    cfg_b, data_b = io.load_run(dir_b)
    if not _comparable(cfg_a, cfg_b):
        raise ValueError("runs differ in more than ee_enabled/seed; comparison refused")
    if cfg_a.ee_enabled and not cfg_b.ee_enabled:
        cfg_a, cfg_b, data_a, data_b = cfg_b, cfg_a, data_b, data_a
    v_ref = steady_velocity(data_a, cfg_a.E)
    v_other = steady_velocity(data_b, cfg_b.E)
    reduction = (v_ref - v_other) / v_ref if v_ref != 0 else 0.0
    if out_csv is not None:
        n = min(len(data_a), len(data_b))
        rows = np.column_stack([data_a[:n, 0], _projected(data_a[:n], cfg_a.E), _projected(data_b[:n], cfg_b.E)])
        io.write_csv(out_csv, ("t_ps", "V_ref_nm_per_ps", "V_other_nm_per_ps"), rows,
                     cfg_a.hash(), cfg_a.seed)
    return {"V_ref": v_ref, "V_other": v_other, "reduction": reduction,
            "ref_ee": cfg_a.ee_enabled, "other_ee": cfg_b.ee_enabled}


def cmd_compare(args) -> int:
    if args.config is not None:
        if args.runs:
            _err("give either two run directories or --config, not both")
            return EXIT_USAGE
        cfg, extra = _load(args)
        cfg = _apply_overrides(cfg, args)
        base = Path(args.out or extra.get("out") or "compare_out")
        dirs = [base / "noee", base / "ee"]
        for d, flag in zip(dirs, (False, True)):
            code = _execute(cfg.replace(ee_enabled=flag), d)
            if code:
                return code
        out_csv = base / "compare.csv"
    else:
        if len(args.runs) != 2:
            _err("compare needs two run directories (or --config)")
            return EXIT_USAGE
        dirs = [Path(r) for r in args.runs]
        for d in dirs:
            if not (d / io.METADATA_FILE).is_file():
                _err(f"{d} is not a completed run (no {io.METADATA_FILE})")
                return EXIT_USAGE
        out_csv = Path(args.out) if args.out else dirs[0].parent / "compare.csv"
    try:
        res = compare_runs(dirs[0], dirs[1], out_csv)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_FAIL
    print(f"V_ref = {res['V_ref']:.6g} nm/ps (ee={res['ref_ee']}), "
          f"V_other = {res['V_other']:.6g} nm/ps (ee={res['other_ee']})")
    print(f"reduction = {100.0 * res['reduction']:.3f} %")
    print(f"paired series: {out_csv}")
    return EXIT_OK


def fermi_dirac_grid(cfg: SimConfig):
    """Cell centers and cell-averaged Fermi-Dirac occupations on the configured mesh."""
    params = cfg.params
    spec = cfg.grid
    masses = _cell_masses(spec, cfg.eps_F, params)
    f = (masses / spec.delta_k**2).ravel()
    dk = spec.delta_k
    c = -spec.k_max + dk * (np.arange(spec.N) + 0.5)
    cx, cy = np.meshgrid(c, c, indexing="ij")
    centers = np.column_stack([cx.ravel(), cy.ravel()])
    keep = f > 0.0
    return centers[keep], f[keep]


def ee_rate_curve(cfg: SimConfig, k_values) -> np.ndarray:
    """lambda_ee(|k1|) along +x for a Fermi-Dirac occupancy (numpy reference quadrature)."""
    params = cfg.params
    screening = ScreeningParams.from_density(equilibrium_density(cfg.eps_F, params), params)
    centers, f = fermi_dirac_grid(cfg)
    return np.array([intra_rate_cells(np.array([k, 0.0]), centers, f, cfg.grid.delta_k,
                                      screening, cfg.ee, params) for k in k_values])


def cmd_rates(args) -> int:
    cfg, extra = _load(args)
    out = Path(args.out or extra.get("out") or "rates_out")
    out.mkdir(parents=True, exist_ok=True)
    table = PhononRateTable.build(cfg.params, max_energy=args.max_energy, spacing=args.spacing)
    rows = np.column_stack([table.energies, table.rates.T])
    path = out / "phonon_rates.csv"
    io.write_csv(path, io.PHONON_COLUMNS, rows, cfg.hash(), cfg.seed)
    print(f"wrote {path}")
    if args.ee:
        # |k1| = 0 is skipped: the chirality angle is undefined there
        k = np.linspace(args.ee_k_max / args.ee_points, args.ee_k_max, args.ee_points)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lam = ee_rate_curve(cfg, k)
        path = out / "ee_rates.csv"
        io.write_csv(path, io.EE_COLUMNS, np.column_stack([k, cfg.params.gamma * k, lam]),
                     cfg.hash(), cfg.seed)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    sizes = {}
    if args.quick:
        sizes = {"n_quads": 10_000, "n_candidates": 20, "n_kernel": 20, "n_balance": 2_000,
                 "n_entropy": 100_000}
    results = run_property_suite(seed=args.seed if args.seed is not None else 0, **sizes)
    for r in results:
        print(r.line())
        if not r.passed and r.witness:
            print(f"  witness: {json.dumps(r.witness)}")
    summary = {"passed": all(r.passed for r in results),
               "checks": [{"name": r.name, "passed": r.passed, "value": r.value,
                           "threshold": r.threshold, "witness": r.witness} for r in results]}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analysis_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        print(f"wrote {out / 'analysis_summary.json'}")
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphene-dsmc",
                                     description="Monte Carlo electron transport in suspended graphene")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", metavar="PATH", help="JSON configuration file")
        p.add_argument("--out", metavar="DIR", help="output directory")
        if seed:
            p.add_argument("--seed", type=_u64, metavar="U64", help="override the RNG seed")

    p = sub.add_parser("run", help="run one simulation")
    common(p)
    p.add_argument("--no-ee", action="store_true", help="disable e-e scattering")
    p.add_argument("--mode", choices=("serial", "parallel"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="steady-velocity reduction with vs without e-e")
    p.add_argument("runs", nargs="*", metavar="RUN_DIR")
    common(p)
    p.add_argument("--mode", choices=("serial", "parallel"))
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("rates", help="dump phonon and e-e rate tables")
    common(p, seed=False)
    p.add_argument("--ee", action="store_true", help="also dump lambda_ee vs |k1|")
    p.add_argument("--max-energy", type=float, default=1.5)
    p.add_argument("--spacing", type=float, default=1e-3)
    p.add_argument("--ee-k-max", type=float, default=0.8)
    p.add_argument("--ee-points", type=int, default=41)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("analyze", help="property checks of the collision operator")
    p.add_argument("--seed", type=_u64, metavar="U64")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--quick", action="store_true", help="smaller sample sizes")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (ConfigFileError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
