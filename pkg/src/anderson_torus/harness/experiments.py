"""Experiment drivers behind ``run``.

Every experiment splits into independent tasks (one per realization, or per
realization and frequency block), each a pure function of the config and
its seed. Tasks may run in worker processes; results are merged in task
order, so the written files do not depend on the number of workers.
"""
from __future__ import annotations

import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..anderson import (
    Hamiltonian,
    converged_cutoff,
    eigensolve,
    eigenvalue_sandwich,
    ground_state_energy,
    lq_eigenfunction_slope,
    positivity_shift,
    projector_slope,
    weyl_slope,
)
from ..dispersive import block_datum, datum_rng, fit_loss, strichartz_norm
from ..noise import build_enhanced, renorm_constant, sample_white_noise, zero_enhanced
from ..paracalc import ParacontrolledMaps, contraction_factor, gamma, truncated_para
from ..pdesolve import (
    lwp_contraction_probe,
    nls_solve,
    self_convergence_order,
    wave_solve,
)
from ..spectral import Field, Grid, lp_partial_sum, random_field, sobolev_norm
from . import io
from .config import ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Task:
    index: int
    seed: int
    extra: tuple = ()


def _grid(cfg: ExperimentConfig) -> Grid:
    return Grid(cfg.N)


def _enhanced(cfg: ExperimentConfig, seed: int, eps: float | None = None):
    grid = _grid(cfg)
    if cfg.params.get("zero_noise"):
        return zero_enhanced(grid)
    return build_enhanced(sample_white_noise(grid, seed), cfg.eps_value if eps is None else eps)


def _hamiltonian(cfg: ExperimentConfig, seed: int, shift: bool = False) -> Hamiltonian:
    H = Hamiltonian.from_enhanced(_enhanced(cfg, seed))
    return H.with_shift(positivity_shift(H)) if shift else H


def _prov(cfg: ExperimentConfig, seed) -> list:
    return io.provenance(seed, cfg.N, cfg.eps_value, cfg.s)


# -- noise statistics -------------------------------------------------------------

def _noise_task(cfg, task):
    grid = _grid(cfg)
    noise = sample_white_noise(grid, task.seed)
    c = noise.xi.coeffs
    i, j = grid.index((1, 0))
    proj = float(np.sqrt(2.0) * c[i, j].real)  # <xi, (phi_(1,0) + phi_(-1,0)) / sqrt 2>
    eps_probe = float(cfg.params.get("eps_probe", 0.25))
    from ..noise import mollify
    from ..paracalc import resonant

    moll = mollify(noise, eps_probe).norm() ** 2
    enh = build_enhanced(noise, cfg.eps_value)
    res = resonant(enh.X1, enh.xi_eps)
    from ..spectral import to_point_values

    res_point = float(to_point_values(res)[0, 0])
    wick_mean = float(enh.wick_resonant.coeffs[0, 0].real / (2 * np.pi))  # spatial average
    return {"row": [noise.xi.norm() ** 2, proj, moll, res_point, wick_mean, enh.c_eps] + _prov(cfg, task.seed)}


def _noise_summary(cfg, results, out):
    rows = [r["row"] for r in results]
    io.write_csv(out / "noise_stats.csv",
                 ["l2sq", "projection", "mollified_l2sq", "resonant_at_origin", "wick_mean", "c_eps"]
                 + io.PROVENANCE, rows)
    grid = _grid(cfg)
    if not rows:
        return {"count": 0}
    a = np.array([r[:6] for r in rows], dtype=float)
    eps_probe = float(cfg.params.get("eps_probe", 0.25))
    from ..noise import cutoff_mask

    n_probe = int(np.sum(cutoff_mask(grid, eps_probe) & grid.active))
    n = a.shape[0]
    se = lambda x: float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return {
        "count": n,
        "active_modes": grid.n_active,
        "mean_l2sq_ratio": float(a[:, 0].mean() / grid.n_active),
        "projection_variance": float(np.var(a[:, 1], ddof=1)) if n > 1 else float("nan"),
        "mollified_l2sq_ratio": float(a[:, 2].mean() / n_probe),
        "modes_in_probe_disc": n_probe,
        "resonant_mean": float(a[:, 3].mean()), "resonant_se": se(a[:, 3]),
        "c_eps": float(a[0, 5]),
        "wick_mean": float(a[:, 4].mean()), "wick_se": se(a[:, 4]),
    }


# -- renormalization ------------------------------------------------------------

def _renorm_eps(cfg, key, default):
    return [2.0 ** (-k) for k in cfg.params.get(key, default)]


def _renorm_task(cfg, task):
    grid = _grid(cfg)
    noise = sample_white_noise(grid, task.seed)
    rows = []
    for eps in _renorm_eps(cfg, "lambda_eps_exponents", [2, 3, 4, 5, 6]):
        enh = build_enhanced(noise, eps)
        lam_r = ground_state_energy(Hamiltonian.from_enhanced(enh))
        lam_raw = ground_state_energy(Hamiltonian.from_enhanced(enh, renormalize=False))
        rows.append([eps, lam_r, lam_raw, enh.c_eps] + _prov(cfg, task.seed))
    return {"rows": rows}


def _renorm_summary(cfg, results, out):
    eps_list = _renorm_eps(cfg, "eps_exponents", [3, 4, 5, 6, 7])
    consts = [renorm_constant(e) for e in eps_list]
    x = np.log(1.0 / np.array(eps_list))
    slope = float(np.polyfit(x, consts, 1)[0])
    io.write_csv(out / "renorm_constants.csv", ["eps_value", "log_inv_eps", "c_eps"] + io.PROVENANCE,
                 [[e, xi, c] + _prov(cfg, None) for e, xi, c in zip(eps_list, x, consts)])
    rows = [r for res in results for r in res["rows"]]
    io.write_csv(out / "renorm_lambda1.csv", ["eps_run", "lambda1_renorm", "lambda1_raw", "c_eps_grid"]
                 + io.PROVENANCE, rows)
    summary = {"slope": slope, "target_slope": 1.0 / (2 * np.pi), "eps": eps_list, "c_eps": consts}
    if rows:
        ne = len(_renorm_eps(cfg, "lambda_eps_exponents", [2, 3, 4, 5, 6]))
        R = np.array([r[:4] for r in rows], dtype=float).reshape(-1, ne, 4)
        d_ren = np.abs(np.diff(R[:, :, 1], axis=1))
        d_raw = np.diff(R[:, :, 2], axis=1)
        d_c = np.diff(R[:, :, 3], axis=1)
        mean_d_ren = d_ren.mean(axis=0)
        summary.update({
            "mean_abs_diff_renorm": mean_d_ren,
            "cauchy": bool(np.all(np.diff(mean_d_ren) < 0)),
            "raw_drift_over_c_diff": (d_raw / d_c).mean(axis=0),
        })
    return summary


# -- eigen / weyl / sandwich / lq ------------------------------------------------------

def _eigen_task(cfg, task):
    H = _hamiltonian(cfg, task.seed)
    spec = eigensolve(H, cfg.K or 50)
    rows = list(io.spectrum_rows(spec, task.seed, cfg.eps_value, cfg.s))
    ortho = float(np.abs(spec.vectors.T @ spec.vectors - np.eye(spec.K)).max())
    return {"rows": rows, "max_residual": float(spec.residuals.max()), "orthonormality": ortho}


def _eigen_summary(cfg, results, out):
    io.write_csv(out / "spectrum.csv", io.SPECTRUM_COLUMNS, [r for res in results for r in res["rows"]])
    return {"max_residual": max((r["max_residual"] for r in results), default=0.0),
            "max_orthonormality_error": max((r["orthonormality"] for r in results), default=0.0)}


def _weyl_K(lam_max):
    return int(1.25 * math.pi * lam_max) + 60


def _weyl_task(cfg, task):
    lam_max = float(cfg.params.get("lambda_max", 100.0))
    H = _hamiltonian(cfg, task.seed)
    spec = eigensolve(H, cfg.K or _weyl_K(lam_max))
    slope = weyl_slope(spec, lam_max)
    grid_l = np.linspace(0.0, lam_max, 201)
    counts = np.searchsorted(spec.unshifted, grid_l, side="right")
    return {"slope": slope, "seed": task.seed,
            "rows": [[lam, c] + _prov(cfg, task.seed) for lam, c in zip(grid_l, counts)]}


def _weyl_summary(cfg, results, out):
    io.write_csv(out / "weyl_counting.csv", ["lambda", "count"] + io.PROVENANCE,
                 [r for res in results for r in res["rows"]])
    slopes = [r["slope"] for r in results]
    io.write_csv(out / "weyl_slopes.csv", ["index", "slope"] + io.PROVENANCE,
                 [[i, r["slope"]] + _prov(cfg, r["seed"]) for i, r in enumerate(results)])
    lam_max = float(cfg.params.get("lambda_max", 100.0))
    control = weyl_slope(eigensolve(Hamiltonian.free(_grid(cfg)), _weyl_K(lam_max)), lam_max)
    return {"mean_slope": float(np.mean(slopes)) if slopes else float("nan"),
            "slopes": slopes, "zero_noise_slope": control, "target": math.pi}


def _sandwich_task(cfg, task):
    H = _hamiltonian(cfg, task.seed)
    k_small, k_big = cfg.params.get("K_values", [50, 100])
    spec = eigensolve(H, k_big)
    delta = float(cfg.params.get("delta", 0.5))
    out = []
    for k in (k_small, k_big):
        m1, m2 = eigenvalue_sandwich(spec, delta=delta, n_max=k)
        m1_delta, _ = eigenvalue_sandwich(spec, delta=delta, n_max=k, lower_delta=True)
        out.append([k, m1, m2, m1_delta, delta] + _prov(cfg, task.seed))
    return {"rows": out}


def _relative_changes(results, col):
    changes = []
    for res in results:
        a, b = res["rows"][0][col], res["rows"][1][col]
        changes.append(abs(b - a) / max(abs(b), 1e-12))
    return changes


def _sandwich_summary(cfg, results, out):
    rows = [r for res in results for r in res["rows"]]
    io.write_csv(out / "sandwich.csv", ["K", "m1", "m2", "m1_delta", "delta"] + io.PROVENANCE, rows)
    m1, m2, m1d = (_relative_changes(results, c) for c in (1, 2, 3))
    changes = [max(a, b) for a, b in zip(m1, m2)]
    changes_delta = [max(a, b) for a, b in zip(m1d, m2)]
    finite = all(np.all(np.isfinite(r[1:4])) for r in rows)
    return {"finite": finite,
            "max_relative_change": max(changes, default=0.0),
            "relative_changes": changes,
            "max_relative_change_m1": max(m1, default=0.0),
            "max_relative_change_m2": max(m2, default=0.0),
            "max_relative_change_lower_delta": max(changes_delta, default=0.0)}


def _lq_task(cfg, task):
    H = _hamiltonian(cfg, task.seed, shift=True)
    windows = cfg.params.get("windows", list(range(5, 81, 5)))
    n_eig = int(cfg.params.get("n_eigenfunctions", 100))
    K = max(n_eig + 5, _weyl_K(max(windows) + 1 - H.shift + 1.0))
    spec = eigensolve(H, cfg.K or K)
    q = float(cfg.q)
    e_slope = lq_eigenfunction_slope(spec, q, n_use=n_eig)
    p_slope, norms = projector_slope(spec, windows, q, rng=np.random.default_rng(task.seed & 0xFFFFFFFF))
    return {"row": [q, e_slope, p_slope] + _prov(cfg, task.seed),
            "windows": [[w, n] + _prov(cfg, task.seed) for w, n in zip(windows, norms)]}


def _lq_summary(cfg, results, out):
    rows = [r["row"] for r in results]
    io.write_csv(out / "lq_slopes.csv", ["q", "eigenfunction_slope", "projector_slope"] + io.PROVENANCE, rows)
    io.write_csv(out / "projector_norms.csv", ["lambda", "norm"] + io.PROVENANCE,
                 [w for r in results for w in r["windows"]])
    e = [r[1] for r in rows]
    p = [r[2] for r in rows]
    return {"eigenfunction_slopes": e, "projector_slopes": p,
            "max_eigenfunction_slope": max(e, default=float("nan")),
            "max_projector_slope": max(p, default=float("nan")),
            "target": 0.5 - 1.0 / cfg.q}


# -- gamma diagnostics -------------------------------------------------------------

def _gamma_task(cfg, task):
    enh = _enhanced(cfg, task.seed)
    grid = enh.grid
    rng = np.random.default_rng(np.random.SeedSequence([task.seed, 11]))
    maps = ParacontrolledMaps(enh, s=cfg.s)
    u_sharp = random_field(grid, rng, decay=2.0)
    u_sharp = u_sharp / u_sharp.norm()
    v, info = gamma(maps, u_sharp, return_info=True)
    factor = contraction_factor(maps, rng, n_starts=int(cfg.params.get("n_starts", 20)))
    beta = float(cfg.params.get("beta", 0.5))
    n_fields = int(cfg.params.get("n_fields", 50))
    fields = [random_field(grid, rng) for _ in range(n_fields)]
    fields = [f / f.norm() for f in fields]
    rows = []
    for k in cfg.params.get("s_exponents", [4, 5, 6, 7, 8, 9, 10]):
        s = 2.0 ** (-k)
        m = ParacontrolledMaps(enh, s=s)
        ratio = max(sobolev_norm(truncated_para(m, f, m.X), beta) for f in fields)
        rows.append([s, m.j_s, ratio] + _prov(cfg, task.seed))
    return {"rows": rows, "residual": info["residual"], "iterations": info["iterations"],
            "contraction": factor, "seed": task.seed}


def _gamma_summary(cfg, results, out):
    rows = [r for res in results for r in res["rows"]]
    io.write_csv(out / "phi_ratio.csv", ["s_value", "j_s", "ratio"] + io.PROVENANCE, rows)
    io.write_csv(out / "gamma.csv", ["index", "residual", "iterations", "contraction"] + io.PROVENANCE,
                 [[i, r["residual"], r["iterations"], r["contraction"]] + _prov(cfg, r["seed"])
                  for i, r in enumerate(results)])
    slopes, monotone = [], True
    for res in results:
        s = np.array([r[0] for r in res["rows"]])
        ratio = np.array([r[2] for r in res["rows"]])
        monotone &= bool(np.all(np.diff(ratio) <= 1e-12 * ratio[0]))
        keep = ratio > 0
        slopes.append(float(np.polyfit(np.log(s[keep]), np.log(ratio[keep]), 1)[0]) if keep.sum() >= 2 else float("nan"))
    alpha, beta = 0.9, float(cfg.params.get("beta", 0.5))
    return {"max_residual": max((r["residual"] for r in results), default=0.0),
            "max_contraction": max((r["contraction"] for r in results), default=0.0),
            "slopes": slopes, "min_slope": min(slopes, default=float("nan")),
            "slope_floor": (alpha - beta) / 4 - 0.15, "monotone": monotone}


# -- Strichartz ---------------------------------------------------------------------

def _strichartz_tasks(cfg):
    return [Task(i, seed, (j,)) for i, seed in enumerate(cfg.seed_list()) for j in cfg.scales]


def _propagator(cfg, seed, kind):
    H = _hamiltonian(cfg, seed, shift=(kind == "wave"))
    mode = cfg.params.get("propagator", "auto")
    if mode == "chebyshev" or (mode == "auto" and cfg.N > 32):
        return H
    return eigensolve(H)


def _strichartz_task(cfg, task, kind):
    (j,) = task.extra
    op = _propagator(cfg, task.seed, kind)
    grid = op.grid
    T = float(cfg.T)
    nodes = int(cfg.params.get("nodes", 128))
    rtol = float(cfg.tolerances.get("quadrature_rtol", 1e-3))
    u = block_datum(grid, j, datum_rng(task.seed, j))
    res = strichartz_norm(op, u, cfg.p, cfg.q, T, nodes=nodes, rtol=rtol, kind=kind, return_info=True)
    sigmas = cfg.params.get("sigmas", [0.0, 0.25, 0.5, 1.0])
    row = {"p": cfg.p, "q": cfg.q, "j": j, "seed": task.seed, "N": cfg.N, "eps": cfg.eps_value,
           "lhs": res.value, "nodes": res.nodes, "rhs": [sobolev_norm(u, s) for s in sigmas]}
    return row


def _strichartz_summary(cfg, results, out, kind):
    from ..dispersive import StrichartzSample

    sigmas = cfg.params.get("sigmas", [0.0, 0.25, 0.5, 1.0])
    samples = [StrichartzSample(p=r["p"], q=r["q"], j=r["j"], lhs=r["lhs"],
                                rhs_norms=dict(zip(sigmas, r["rhs"])), seed=r["seed"], N=r["N"],
                                eps=r["eps"], kind=kind) for r in results]
    io.write_strichartz_csv(out / f"strichartz_{kind}.csv", samples, sigmas, s=cfg.s)
    p, q = cfg.p, cfg.q
    target = 1.0 / p if kind == "schrodinger" else 1.5 - 2.0 / p - 1.0 / q
    summary = {"kind": kind, "p": p, "q": q, "samples": len(samples), "target_loss": target,
               "embedding_exponent": 1.0 - 2.0 / q}
    if len({x.j for x in samples}) >= 3:
        fit = fit_loss([x.j for x in samples], [x.lhs for x in samples])
        summary.update({"slope": fit.slope, "intercept": fit.intercept, "stderr": fit.stderr,
                        "ci_low": fit.ci[0], "ci_high": fit.ci[1], "n": fit.n})
    io.write_json(out / f"strichartz_{kind}_fit.json", summary)
    return summary


# -- evolution --------------------------------------------------------------------------

def _initial_data(cfg, seed, real):
    grid = _grid(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    u = lp_partial_sum(random_field(grid, rng, real=real), int(cfg.params.get("data_block", 2)) + 1)
    return u * (float(cfg.params.get("amplitude", 1.0)) / u.norm())


def _evolution_task(cfg, task, kind):
    H = _hamiltonian(cfg, task.seed, shift=(kind == "wave"))
    spec = eigensolve(H, method=cfg.params.get("eigen_method", "dense" if cfg.N <= 64 else "auto"))
    T, dt = float(cfg.T), float(cfg.dt)
    stride = int(cfg.params.get("record_every", 10))
    if kind == "nls":
        u0 = _initial_data(cfg, task.seed, real=False)
        traj = nls_solve(spec, u0, T, dt, record_every=stride)
        solve = lambda h, T_=0.5: nls_solve(spec, u0, T_, h, record_every=10**9).final.u
    else:
        u0 = _initial_data(cfg, task.seed, real=True)
        traj = wave_solve(spec, u0, Field.zeros(u0.grid), T, dt, record_every=stride)
        solve = lambda h, T_=0.5: wave_solve(spec, u0, Field.zeros(u0.grid), T_, h, record_every=10**9).final.u
    result = {"rows": [[st.t, st.mass, st.energy, st.h_sigma_norm, st.linf_norm] + _prov(cfg, task.seed)
                       for st in traj.states],
              "mass_drift": traj.drift("mass"), "energy_drift": traj.drift("energy"),
              "energy0": traj.states[0].energy, "max_loss": traj.max_loss}
    dt0 = cfg.params.get("order_dt0")
    if dt0:
        order, diffs = self_convergence_order(solve, float(dt0), levels=int(cfg.params.get("order_levels", 4)))
        result.update({"order": order, "order_diffs": diffs})
    return result


def _evolution_summary(cfg, results, out, kind):
    for i, r in enumerate(results):
        io.write_csv(out / f"trajectory_{kind}_{i:03d}.csv", io.TRAJECTORY_COLUMNS, r["rows"])
    if not results:
        io.write_csv(out / f"trajectory_{kind}_000.csv", io.TRAJECTORY_COLUMNS, [])
    keys = ["mass_drift", "energy_drift", "energy0", "max_loss", "order", "order_diffs"]
    return {"realizations": [{k: r[k] for k in keys if k in r} for r in results],
            "max_mass_drift": max((r["mass_drift"] for r in results), default=0.0),
            "max_energy_drift": max((r["energy_drift"] for r in results), default=0.0)}


# -- contraction probe ----------------------------------------------------------------

def _contraction_task(cfg, task):
    H = _hamiltonian(cfg, task.seed, shift=True)
    spec = eigensolve(H)
    grid = spec.grid
    rng = np.random.default_rng(np.random.SeedSequence([task.seed, 13]))
    u = lp_partial_sum(random_field(grid, rng, real=False), 3)
    u = u / u.norm()
    sigma = float(cfg.params.get("sigma", 0.75))
    rows = []
    for amp in cfg.params.get("amplitudes", [1e-3, 0.25, 0.5, 1.0, 2.0]):
        r = lwp_contraction_probe(spec, u * amp, sigma, p=cfg.p, rng=rng)
        rows.append([amp, sobolev_norm(u * amp, sigma), r.C_tilde, r.R, r.T, r.lipschitz] + _prov(cfg, task.seed))
    return {"rows": rows}


def _contraction_summary(cfg, results, out):
    rows = [r for res in results for r in res["rows"]]
    io.write_csv(out / "contraction.csv", ["amplitude", "h_sigma_norm", "C_tilde", "R", "T", "lipschitz"]
                 + io.PROVENANCE, rows)
    exps, small = [], []
    for res in results:
        a = np.array([r[:6] for r in res["rows"]], dtype=float)
        exps.append(float(-np.polyfit(np.log(a[:, 1] ** 2), np.log(a[:, 4]), 1)[0]))
        small.append(float(a[np.argmin(a[:, 0]), 5]))
    return {"scaling_exponents": exps, "target_exponent": cfg.p / (cfg.p - 2),
            "small_data_lipschitz": small, "max_lipschitz": max((r[5] for r in rows), default=0.0)}


# -- dispatch ---------------------------------------------------------------------------

def _default_tasks(cfg):
    return [Task(i, s) for i, s in enumerate(cfg.seed_list())]


REGISTRY = {
    "noise-stats": (_default_tasks, _noise_task, _noise_summary),
    "renorm": (_default_tasks, _renorm_task, _renorm_summary),
    "eigen": (_default_tasks, _eigen_task, _eigen_summary),
    "weyl": (_default_tasks, _weyl_task, _weyl_summary),
    "sandwich": (_default_tasks, _sandwich_task, _sandwich_summary),
    "lq-slopes": (_default_tasks, _lq_task, _lq_summary),
    "gamma-diagnostics": (_default_tasks, _gamma_task, _gamma_summary),
    "strichartz-schrodinger": (_strichartz_tasks, lambda c, t: _strichartz_task(c, t, "schrodinger"),
                               lambda c, r, o: _strichartz_summary(c, r, o, "schrodinger")),
    "strichartz-wave": (_strichartz_tasks, lambda c, t: _strichartz_task(c, t, "wave"),
                        lambda c, r, o: _strichartz_summary(c, r, o, "wave")),
    "nls": (_default_tasks, lambda c, t: _evolution_task(c, t, "nls"),
            lambda c, r, o: _evolution_summary(c, r, o, "nls")),
    "wave": (_default_tasks, lambda c, t: _evolution_task(c, t, "wave"),
             lambda c, r, o: _evolution_summary(c, r, o, "wave")),
    "contraction": (_default_tasks, _contraction_task, _contraction_summary),
}


def _run_one(args):
    cfg_dict, task = args
    cfg = ExperimentConfig(**cfg_dict)
    _, worker, _ = REGISTRY[cfg.experiment]
    try:
        return {"ok": True, "result": worker(cfg, task)}
    except Exception as exc:  # recorded per realization; the run continues
        logger.warning("task %d (seed %d) failed: %s", task.index, task.seed, exc)
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}",
                "trace": traceback.format_exc(limit=3)}


@dataclass
class RunResult:
    out_dir: Path
    summary: dict
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def run_experiment(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> RunResult:
    """Execute ``cfg`` and write data files, ``summary.json`` and ``run.json`` into the output directory.

    ``summary.json`` and the data files are deterministic; the wall-clock
    timestamp lives only in ``run.json``.
    """
    import datetime

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from None
    make_tasks, _, summarize = REGISTRY[cfg.experiment]
    tasks = make_tasks(cfg)
    payload = [(cfg.to_dict(), t) for t in tasks]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_run_one, payload))
    else:
        outcomes = [_run_one(p) for p in payload]
    good = [o["result"] for o in outcomes if o["ok"]]
    failures = [{"index": t.index, "seed": t.seed, "extra": list(t.extra), "error": o["error"]}
                for t, o in zip(tasks, outcomes) if not o["ok"]]
    summary = summarize(cfg, good, out)
    summary = {"experiment": cfg.experiment, "version": __version__, "config": cfg.to_dict(),
               "failures": failures, "results": summary}
    io.write_json(out / "summary.json", summary)
    io.write_json(out / "config.json", cfg.to_dict())
    io.write_json(out / "run.json", {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
                                     "threads": threads, "version": __version__})
    return RunResult(out_dir=out, summary=summary, failures=failures)
