"""Schrodinger and wave propagators of H and Strichartz-norm measurements.

Propagators accept either a :class:`~anderson_torus.anderson.Spectrum`
(exact evaluation in the truncated eigenbasis) or a
:class:`~anderson_torus.anderson.Hamiltonian` (Chebyshev expansion driven by
matrix-free applications of H). The second route serves grids where the
eigenbasis covering the data is out of reach, e.g. N = 256.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
import scipy.special as sps
import scipy.stats as sst

from .anderson import Hamiltonian, Spectrum, apply_H
from .exceptions import ConvergenceError
from .paracalc import ParacontrolledMaps, gamma, phi_s
from .spectral import (
    TWO_PI,
    Field,
    Grid,
    _pad,
    laplacian_apply,
    lp_project,
    random_field,
    sobolev_norm,
    unpack_coeffs,
)

SERIES_CUTOFF = 1e-8


# -- scalar spectral multipliers -------------------------------------------

def wave_cos(t: float, lam: np.ndarray) -> np.ndarray:
    """``cos(t sqrt(lam))``, continued to ``cosh`` for negative ``lam``."""
    lam = np.asarray(lam, dtype=float)
    w = np.sqrt(np.abs(lam))
    return np.where(lam >= 0, np.cos(t * w), np.cosh(t * w))


def wave_sinc(t: float, lam: np.ndarray) -> np.ndarray:
    """``sin(t sqrt(lam)) / sqrt(lam)`` with a Taylor branch for ``|lam| < 1e-8``."""
    lam = np.asarray(lam, dtype=float)
    small = np.abs(lam) < SERIES_CUTOFF
    w = np.sqrt(np.where(small, 1.0, np.abs(lam)))
    big = np.where(lam >= 0, np.sin(t * w), np.sinh(t * w)) / w
    return np.where(small, t - t**3 * lam / 6.0, big)


def wave_dsinc(t: float, lam: np.ndarray) -> np.ndarray:
    """Time derivative of ``cos(t sqrt(lam))``: ``-sqrt(lam) sin(t sqrt(lam))``."""
    return -np.asarray(lam, dtype=float) * wave_sinc(t, lam)


# -- Chebyshev machinery ----------------------------------------------------

class _ChebyshevOperator:
    """Affine rescaling of H onto [-1, 1] acting on coefficient arrays."""

    BUFFER = 32

    def __init__(self, H: Hamiltonian):
        self.H = H
        a, b = H.spectral_bounds
        pad = 1e-3 * (b - a) + 1e-8
        a, b = a - pad, b + pad
        self.center = 0.5 * (a + b)
        self.radius = 0.5 * (b - a)
        self.matvecs = 0

    def apply(self, c: np.ndarray) -> np.ndarray:
        self.matvecs += 1
        return (self.H.apply_coeffs(c) - self.center * c) / self.radius

    def series(self, c: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """``sum_k coeffs[k, i] T_k(Ht) c`` for every column ``i``.

        ``coeffs`` has shape (K,) or (K, m); the result has shape ``c.shape``
        or ``(m,) + c.shape``. Chebyshev vectors are buffered and folded into
        the outputs with one matrix product per buffer.
        """
        coeffs = np.asarray(coeffs)
        single = coeffs.ndim == 1
        C = coeffs[:, None] if single else coeffs
        K, m = C.shape
        shape = c.shape
        out = np.zeros((m, c.size), dtype=np.complex128)
        buf = np.empty((min(self.BUFFER, K), c.size), dtype=np.complex128)
        t_prev = t_cur = None
        k = 0
        while k < K:
            nb = min(buf.shape[0], K - k)
            for i in range(nb):
                if k + i == 0:
                    t_new = c
                elif k + i == 1:
                    t_new = self.apply(c)
                else:
                    t_new = 2.0 * self.apply(t_cur) - t_prev
                t_prev, t_cur = t_cur, t_new
                buf[i] = t_new.ravel()
            out += C[k:k + nb].T @ buf[:nb]
            k += nb
        out = out.reshape((m,) + shape)
        return out[0] if single else out


def _exp_coefficients(taus, radius: float, center: float, tol: float = 1e-15) -> np.ndarray:
    """Coefficients of ``exp(i tau x)`` in ``T_k((x - center)/radius)``, one column per ``tau``.

    ``exp(i tau (c + r y)) = exp(i tau c) sum_k eps_k i^k J_k(tau r) T_k(y)``.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    big = float(np.abs(taus).max()) * radius
    kmax = int(big + 12.0 * big ** (1.0 / 3.0) + 40)
    k = np.arange(kmax + 1)
    J = sps.jv(k[:, None], taus[None, :] * radius)
    C = np.where(k == 0, 1.0, 2.0)[:, None] * (1j ** k)[:, None] * J
    C *= np.exp(1j * taus * center)[None, :]
    keep = np.nonzero(np.abs(C).max(axis=1) > tol)[0]
    return C[: keep[-1] + 1] if keep.size else C[:1]


def _function_coefficients(fun, op: _ChebyshevOperator, tol: float = 1e-15) -> np.ndarray:
    """Chebyshev interpolation coefficients of ``fun`` on the spectrum interval.

    ``fun`` maps a 1D array of abscissae to shape (n,) or (n, m); the
    result has shape (K, m).
    """
    deg = 64
    while True:
        x = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        vals = np.asarray(fun(op.center + op.radius * x))
        if vals.ndim == 1:
            vals = vals[:, None]
        c = sfft.dct(vals, type=2, axis=0) / (deg + 1)
        c[0] *= 0.5
        scale = max(np.abs(c).max(), 1e-300)
        if np.abs(c[-8:]).max() <= tol * scale or deg >= 1 << 16:
            keep = np.nonzero(np.abs(c).max(axis=1) > tol * scale)[0]
            return c[: keep[-1] + 1]
        deg *= 2


def _chebyshev_schrodinger(H: Hamiltonian, c: np.ndarray, times: np.ndarray,
                           chunk: int = 32) -> np.ndarray:
    """``exp(i t H) c`` for ascending ``times >= 0``, stepping from chunk to chunk."""
    cheb = _ChebyshevOperator(H)
    out = np.empty((times.size,) + c.shape, dtype=np.complex128)
    state, t0 = c.astype(np.complex128), 0.0
    for lo in range(0, times.size, chunk):
        tt = times[lo:lo + chunk]
        C = _exp_coefficients(tt - t0, cheb.radius, cheb.center)
        out[lo:lo + tt.size] = cheb.series(state, C)
        state, t0 = out[lo + tt.size - 1], float(tt[-1])
    return out


# -- propagators --------------------------------------------------------------

def schrodinger_prop(op: Spectrum | Hamiltonian, u: Field, t: float) -> Field:
    """``exp(i t H) u``."""
    if isinstance(op, Spectrum):
        a = op.coefficients(u)
        return op.synthesize(np.exp(1j * t * op.eigenvalues) * a)
    cheb = _ChebyshevOperator(op)
    C = _exp_coefficients([t], cheb.radius, cheb.center)
    return Field(u.grid, cheb.series(u.coeffs.astype(np.complex128), C[:, 0]), real=False)


def sharpened_prop(maps: ParacontrolledMaps, spec: Spectrum, u: Field, t: float) -> Field:
    """``exp(i t H#) u = Gamma^-1 exp(i t H) Gamma u``."""
    return phi_s(maps, schrodinger_prop(spec, gamma(maps, u), t))


def wave_prop(op: Spectrum | Hamiltonian, u0: Field, u1: Field, t: float,
              velocity: bool = False):
    """``cos(t sqrt H) u0 + sin(t sqrt H)/sqrt H u1``; with ``velocity`` also returns ``d/dt``."""
    if isinstance(op, Spectrum):
        lam = op.eigenvalues
        a0 = op.coefficients(u0)
        a1 = op.coefficients(u1)
        u = op.synthesize(wave_cos(t, lam) * a0 + wave_sinc(t, lam) * a1)
        if not velocity:
            return u
        return u, op.synthesize(wave_dsinc(t, lam) * a0 + wave_cos(t, lam) * a1)
    cheb = _ChebyshevOperator(op)
    cc = _function_coefficients(lambda x: wave_cos(t, x), cheb)[:, 0]
    cs = _function_coefficients(lambda x: wave_sinc(t, x), cheb)[:, 0]
    c = cheb.series(u0.coeffs.astype(np.complex128), cc) + cheb.series(u1.coeffs.astype(np.complex128), cs)
    u = Field(u0.grid, c, real=u0.real and u1.real)
    if not velocity:
        return u
    cd = _function_coefficients(lambda x: wave_dsinc(t, x), cheb)[:, 0]
    v = cheb.series(u0.coeffs.astype(np.complex128), cd) + cheb.series(u1.coeffs.astype(np.complex128), cc)
    return u, Field(u0.grid, v, real=u0.real and u1.real)


def wave_energy_linear(spec: Spectrum, u: Field, v: Field) -> float:
    """``1/2 ||v||^2 + 1/2 <u, H u>`` in the eigenbasis."""
    a = spec.coefficients(u)
    return 0.5 * v.norm() ** 2 + 0.5 * float(np.sum(spec.eigenvalues * np.abs(a) ** 2))


def duhamel_residual(maps: ParacontrolledMaps, spec: Spectrum, u: Field, t: float,
                     nodes: int = 64) -> float:
    """L2 residual of the group-difference identity

    ``(exp(itG) - exp(itL)) u = i int_0^t exp(i(t-s)L) (G - L) exp(isG) u ds``

    with ``G = Gamma^-1 H Gamma``, ``L = -Laplacian`` and the integral by
    composite Simpson on ``nodes`` intervals.
    """
    if nodes % 2:
        raise ValueError("Simpson quadrature needs an even number of intervals")
    H = spec.hamiltonian
    if H is None:
        raise ValueError("spectrum carries no Hamiltonian")
    grid = u.grid
    ksq = grid.ksq

    def free(w: Field, tau: float) -> Field:
        return Field(grid, np.exp(1j * tau * ksq) * w.coeffs, real=False)

    s = np.linspace(0.0, t, nodes + 1)
    wts = np.ones(nodes + 1)
    wts[1:-1:2], wts[2:-1:2] = 4.0, 2.0
    wts *= (t / nodes) / 3.0
    acc = np.zeros((grid.N, grid.N), dtype=np.complex128)
    for sk, wk in zip(s, wts):
        w = sharpened_prop(maps, spec, u, sk)
        Gw = phi_s(maps, apply_H(H, gamma(maps, w)))
        Lw = -laplacian_apply(w)
        acc += wk * free(Gw - Lw, t - sk).coeffs
    lhs = sharpened_prop(maps, spec, u, t) - free(u, t)
    return float(np.linalg.norm(lhs.coeffs - 1j * acc))


# -- Strichartz norms ---------------------------------------------------------

def _simpson(values: np.ndarray, T: float) -> float:
    n = values.size - 1
    w = np.ones(n + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return float((T / n) / 3.0 * np.dot(w, values))


def _lq_of_coeffs(grid: Grid, C: np.ndarray, q: float) -> np.ndarray:
    """``L^q`` norms of a stack of coefficient arrays (padded-grid quadrature)."""
    M = grid.padded_size
    out = np.empty(C.shape[0])
    for lo in range(0, C.shape[0], 16):
        vals = np.abs((M * M / TWO_PI) * sfft.ifft2(_pad(C[lo:lo + 16], M), axes=(-2, -1)))
        if np.isinf(q):
            out[lo:lo + 16] = vals.max(axis=(-2, -1))
        else:
            out[lo:lo + 16] = ((TWO_PI / M) ** 2 * np.sum(vals**q, axis=(-2, -1))) ** (1.0 / q)
    return out


def _eigen_stack(spec: Spectrum, A: np.ndarray) -> np.ndarray:
    """Coefficient arrays of the fields with eigen-coefficients in the rows of ``A``."""
    grid = spec.grid
    C = unpack_coeffs(grid, np.real(A) @ spec.vectors.T).astype(np.complex128)
    if np.iscomplexobj(A):
        C += 1j * unpack_coeffs(grid, np.imag(A) @ spec.vectors.T)
    return C


def _schrodinger_samples(op, u: Field, times: np.ndarray, q: float) -> np.ndarray:
    """``||exp(i t H) u||_q`` at ascending ``times >= 0``."""
    grid = u.grid
    out = np.empty(times.size)
    if isinstance(op, Spectrum):
        a = op.coefficients(u)
        for lo in range(0, times.size, 32):
            A = np.exp(1j * np.outer(times[lo:lo + 32], op.eigenvalues)) * a
            out[lo:lo + 32] = _lq_of_coeffs(grid, _eigen_stack(op, A), q)
        return out
    C = _chebyshev_schrodinger(op, u.coeffs, times)
    return _lq_of_coeffs(grid, C, q)


def _wave_samples(op, u0: Field, u1: Field, times: np.ndarray, q: float) -> np.ndarray:
    """``||cos(t sqrt H) u0 + sin(t sqrt H)/sqrt H u1||_q`` at ``times``."""
    grid = u0.grid
    out = np.empty(times.size)
    if isinstance(op, Spectrum):
        lam = op.eigenvalues
        a0, a1 = op.coefficients(u0), op.coefficients(u1)
        for lo in range(0, times.size, 32):
            A = np.stack([wave_cos(t, lam) * a0 + wave_sinc(t, lam) * a1
                          for t in times[lo:lo + 32]])
            out[lo:lo + 32] = _lq_of_coeffs(grid, _eigen_stack(op, A), q)
        return out
    cheb = _ChebyshevOperator(op)
    has_velocity = bool(np.any(u1.coeffs))
    for lo in range(0, times.size, 64):
        tt = times[lo:lo + 64]
        cc = _function_coefficients(lambda x: np.stack([wave_cos(t, x) for t in tt], axis=-1), cheb)
        C = cheb.series(u0.coeffs.astype(np.complex128), cc)
        if has_velocity:
            cs = _function_coefficients(lambda x: np.stack([wave_sinc(t, x) for t in tt], axis=-1), cheb)
            C = C + cheb.series(u1.coeffs.astype(np.complex128), cs)
        out[lo:lo + tt.size] = _lq_of_coeffs(grid, C, q)
    return out


@dataclass
class StrichartzNorm:
    value: float
    nodes: int
    history: list


def strichartz_norm(op: Spectrum | Hamiltonian, u: Field, p: float, q: float, T: float = 1.0,
                    nodes: int = 128, rtol: float = 1e-3, max_nodes: int = 2048,
                    kind: str = "schrodinger", u1: Field | None = None,
                    return_info: bool = False):
    """``(int_0^T ||U(t) u||_q^p dt)^(1/p)`` by composite Simpson with node doubling.

    ``kind='wave'`` uses ``U(t) = cos(t sqrt H)`` (plus ``sin(t sqrt H)/sqrt H u1``).
    Doubling stops once the relative change falls below ``rtol``; the first
    comparison is between ``nodes`` and ``2 nodes`` intervals.
    """
    if not (1 <= p < np.inf and 1 <= q < np.inf):
        raise ValueError("p and q must lie in [1, inf)")
    if nodes < 2 or nodes % 2:
        raise ValueError("nodes must be an even integer >= 2")
    if u1 is None:
        u1 = Field.zeros(u.grid)

    def samples(times):
        if kind == "schrodinger":
            return _schrodinger_samples(op, u, times, q)
        if kind == "wave":
            return _wave_samples(op, u, u1, times, q)
        raise ValueError(f"unknown propagator kind {kind!r}")

    def value(vals):
        return _simpson(vals**p, T) ** (1.0 / p)

    # refinement only evaluates the new midpoints
    n = 2 * nodes
    vals = samples(np.linspace(0.0, T, n + 1))
    history = [(nodes, value(vals[::2])), (n, value(vals))]
    while abs(history[-1][1] - history[-2][1]) > rtol * abs(history[-1][1]):
        if 2 * n > max_nodes:
            raise ConvergenceError(
                f"Strichartz quadrature not converged at {n} time intervals "
                f"(values {[round(v, 8) for _, v in history]})", iterations=n)
        mids = samples(T * (np.arange(n) + 0.5) / n)
        merged = np.empty(2 * n + 1)
        merged[::2], merged[1::2] = vals, mids
        vals, n = merged, 2 * n
        history.append((n, value(vals)))
    res = StrichartzNorm(value=history[-1][1], nodes=history[-1][0], history=history)
    return res if return_info else res.value


@dataclass
class StrichartzSample:
    p: float
    q: float
    j: int
    lhs: float
    rhs_norms: dict
    seed: int | None = None
    N: int | None = None
    eps: float | None = None
    kind: str = "schrodinger"
    control_lhs: float | None = None

    def __post_init__(self):
        if self.lhs < 0:
            raise ValueError("lhs must be nonnegative")

    @property
    def is_strichartz_pair(self) -> bool:
        return abs(2.0 / self.p + 2.0 / self.q - 1.0) <= 1e-12


def block_datum(grid: Grid, j: int, rng: np.random.Generator) -> Field:
    """Real Gaussian coefficients on Littlewood-Paley block ``j``, unit L2 norm."""
    u = lp_project(random_field(grid, rng), j)
    nrm = u.norm()
    if nrm == 0:
        raise ValueError(f"block {j} is empty on N={grid.N}")
    return u / nrm


def datum_rng(seed: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(j) + 2, 7]))


@dataclass
class LossFit:
    slope: float
    intercept: float
    stderr: float
    ci: tuple
    n: int


def fit_loss(js, lhs, confidence: float = 0.95) -> LossFit:
    """Regress ``log lhs`` on ``j log 2``; the slope estimates the Sobolev loss."""
    x = np.asarray(js, dtype=float) * math.log(2.0)
    y = np.log(np.asarray(lhs, dtype=float))
    if np.unique(x).size < 3:
        raise ValueError("need at least 3 distinct scales")
    r = sst.linregress(x, y)
    dof = max(x.size - 2, 1)
    half = sst.t.ppf(0.5 + confidence / 2, dof) * r.stderr
    return LossFit(slope=float(r.slope), intercept=float(r.intercept), stderr=float(r.stderr),
                   ci=(float(r.slope - half), float(r.slope + half)), n=int(x.size))


def strichartz_exponent_fit(op_for_seed, p: float, q: float, scales, seeds, T: float = 1.0,
                            kind: str = "schrodinger", sigmas=(0.0, 0.25, 0.5, 1.0),
                            nodes: int = 128, rtol: float = 1e-3, meta=None, control: bool = True):
    """Fit the Sobolev loss of ``||U(t) u||_{L^p_t L^q_x}`` over frequency blocks.

    ``op_for_seed(seed)`` returns the Spectrum or Hamiltonian of one noise
    realization. Returns ``(LossFit, [StrichartzSample, ...])``. With
    ``control`` each seed also records the norm of a block ``-1`` datum.
    """
    scales = list(scales)
    if len(set(scales)) < 3:
        raise ValueError("need at least 3 scales")
    meta = meta or {}
    samples = []
    for seed in seeds:
        op = op_for_seed(seed)
        grid = op.grid
        control_lhs = None
        if control:
            low = block_datum(grid, -1, datum_rng(seed, -1))
            control_lhs = strichartz_norm(op, low, p, q, T, nodes=nodes, rtol=rtol, kind=kind)
        for j in scales:
            u = block_datum(grid, j, datum_rng(seed, j))
            lhs = strichartz_norm(op, u, p, q, T, nodes=nodes, rtol=rtol, kind=kind)
            samples.append(StrichartzSample(
                p=p, q=q, j=j, lhs=lhs, rhs_norms={s: sobolev_norm(u, s) for s in sigmas},
                seed=seed, N=grid.N, eps=meta.get("eps"), kind=kind, control_lhs=control_lhs))
    fit = fit_loss([s.j for s in samples], [s.lhs for s in samples])
    return fit, samples
