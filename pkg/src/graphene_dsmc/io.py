"""CSV and metadata writers/readers for run outputs.

Every file starts with ``# config_hash=<hash> seed=<seed>``; CSV numbers use
17 significant digits so a file reproduces the doubles bit for bit.
"""

from __future__ import annotations

import csv
import json
from importlib import metadata as _md
from pathlib import Path

import numpy as np

from .engine import RunResult, SimConfig

TIMESERIES_COLUMNS = ("t_ps", "Vx_nm_per_ps", "Vy_nm_per_ps", "W_eV", "rho_per_nm2")
SNAPSHOT_COLUMNS = ("i", "j", "kx_center", "ky_center", "f")
PHONON_COLUMNS = ("eps_eV", "ac", "opt_abs", "opt_em", "K_abs", "K_em")
EE_COLUMNS = ("k_abs_per_nm", "eps_eV", "lambda_ee_per_ps")

TIMESERIES_FILE = "timeseries.csv"
SNAPSHOT_FILE = "snapshot.csv"
METADATA_FILE = "metadata.txt"


def code_version() -> str:
    try:
        return _md.version("artifact")
    except _md.PackageNotFoundError:
        return "unknown"


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def header_line(config_hash: str, seed: int) -> str:
    return f"# config_hash={config_hash} seed={seed}\n"


def write_csv(path, columns, rows, config_hash: str, seed: int, int_columns=()) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(header_line(config_hash, seed))
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(str(int(v)) if i in int_columns else fmt(v)
                              for i, v in enumerate(row)) + "\n")


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Returns (header key/values, column names, data array)."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing '# config_hash=...' header line")
        header = dict(part.split("=", 1) for part in first[1:].split())
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return header, columns, np.array(rows, dtype=float).reshape(-1, len(columns))


def write_metadata(path, cfg: SimConfig, diagnostics: dict, extra: dict | None = None) -> None:
    lines = [header_line(cfg.hash(), cfg.seed).rstrip("\n"),
             f"config_hash={cfg.hash()}",
             f"seed={cfg.seed}",
             f"code_version={code_version()}",
             f"mode={cfg.mode}",
             f"ee_enabled={str(cfg.ee_enabled).lower()}",
             "config_json=" + json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))]
    for key, value in (extra or {}).items():
        lines.append(f"{key}={fmt(value) if isinstance(value, (float, np.floating)) else value}")
    for key in sorted(diagnostics):
        value = diagnostics[key]
        lines.append(f"diag.{key}={fmt(value) if isinstance(value, float) else value}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_metadata(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key] = value
    return out


def write_run(out_dir, result: RunResult) -> dict:
    """Write the three run outputs into ``out_dir``; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    h = cfg.hash()
    paths = {"timeseries": out / TIMESERIES_FILE, "snapshot": out / SNAPSHOT_FILE,
             "metadata": out / METADATA_FILE}
    write_csv(paths["timeseries"], TIMESERIES_COLUMNS, result.timeseries.as_array(), h, cfg.seed)
    write_csv(paths["snapshot"], SNAPSHOT_COLUMNS, result.grid.snapshot_rows(), h, cfg.seed,
              int_columns=(0, 1))
    direction = -np.asarray(cfg.E) if any(cfg.E) else None
    extra = {"steady_V_nm_per_ps": result.timeseries.steady_velocity(direction),
             "max_f": max(result.timeseries.f_max),
             "pauli_bound": result.grid.pauli_bound()}
    write_metadata(paths["metadata"], cfg, result.diagnostics, extra)
    return paths


def load_run(run_dir) -> tuple[SimConfig, np.ndarray]:
    """Config and timeseries array (columns as TIMESERIES_COLUMNS) of a completed run."""
    run_dir = Path(run_dir)
    meta = read_metadata(run_dir / METADATA_FILE)
    cfg = SimConfig.from_dict(json.loads(meta["config_json"]))
    _, _, data = read_csv(run_dir / TIMESERIES_FILE)
    return cfg, data
