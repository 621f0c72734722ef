"""Deterministic CSV/JSON writers and readers for run outputs."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return repr(x) if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_csv(path, columns, rows) -> Path:
    """Write ``rows`` (iterables matching ``columns``) with shortest round-trip float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path) -> tuple[list, list]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [row for row in r]
    return header, rows


def read_columns(path) -> dict:
    """Numeric columns of a CSV as float arrays (non-numeric columns kept as strings)."""
    header, rows = read_csv(path)
    out = {}
    for k, name in enumerate(header):
        col = [row[k] for row in rows]
        try:
            out[name] = np.array([float(x) for x in col])
        except ValueError:
            out[name] = col
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def provenance(seed, N, eps, s) -> list:
    return [seed, N, eps, s, __version__]


PROVENANCE = ["seed", "N", "eps", "s", "version"]


def spectrum_rows(spec, seed, eps, s):
    """Rows ``(n, lambda, residual, l2norm, l4norm, l6norm)`` plus provenance."""
    from ..anderson import eigenfunction_lq_norms

    l4 = eigenfunction_lq_norms(spec, 4.0)
    l6 = eigenfunction_lq_norms(spec, 6.0)
    l2 = np.linalg.norm(spec.vectors, axis=0)
    for n in range(spec.K):
        yield [n + 1, spec.unshifted[n], spec.residuals[n], l2[n], l4[n], l6[n]] + provenance(
            seed, spec.grid.N, eps, s)


SPECTRUM_COLUMNS = ["n", "lambda", "residual", "l2norm", "l4norm", "l6norm"] + PROVENANCE


def write_spectrum_csv(path, spec, seed=None, eps=None, s=None) -> Path:
    return write_csv(path, SPECTRUM_COLUMNS, spectrum_rows(spec, seed, eps, s))


TRAJECTORY_COLUMNS = ["t", "mass", "energy", "h_sigma_norm", "linf_norm"] + PROVENANCE


def write_trajectory_csv(path, traj, seed=None, N=None, eps=None, s=None) -> Path:
    rows = ([st.t, st.mass, st.energy, st.h_sigma_norm, st.linf_norm] + provenance(seed, N, eps, s)
            for st in traj.states)
    return write_csv(path, TRAJECTORY_COLUMNS, rows)


def strichartz_columns(sigmas) -> list:
    return (["p", "q", "j", "seed", "N", "eps", "lhs", "control_lhs"]
            + [f"h_sigma_{s:g}" for s in sigmas] + ["s", "version", "kind"])


def write_strichartz_csv(path, samples, sigmas, s=None) -> Path:
    rows = ([x.p, x.q, x.j, x.seed, x.N, x.eps, x.lhs, x.control_lhs]
            + [x.rhs_norms[sg] for sg in sigmas] + [s, __version__, x.kind] for x in samples)
    return write_csv(path, strichartz_columns(sigmas), rows)
