"""The renormalized Anderson Hamiltonian ``H_eps = -Laplacian + xi_eps + c_eps`` and its spectrum.

With ``Laplacian X = xi`` the divergent expectation ``E[X_eps xi_eps]`` equals
``-c_eps``; subtracting it adds the nonnegative lattice sum ``c_eps``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
import scipy.sparse.linalg as sla_sparse

from .exceptions import ConvergenceError, SpectralRangeError, TailEnergyError
from .lanczos import block_lanczos
from .noise import EnhancedNoise
from .spectral import (
    TWO_PI,
    Field,
    Grid,
    _pad,
    _truncate,
    lq_norm,
    pack_coeffs,
    unpack_coeffs,
)

DENSE_MAX_N = 32
DENSE_SOLVE_MAX_N = 64
TAIL_TOL = 1e-8
LOBPCG_MAX_K = 8


def converged_cutoff(N: int) -> float:
    """Eigenvalues below ``0.5 (N/3)^2`` are trusted for statistics."""
    return 0.5 * (N / 3.0) ** 2


@dataclass(frozen=True)
class Hamiltonian:
    """``H u = -Laplacian u + potential * u + shift * u`` with a dealiased product."""

    potential: Field
    shift: float = 0.0
    enhanced: EnhancedNoise | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.potential.real:
            raise ValueError("the potential must be a real field")

    @classmethod
    def from_enhanced(cls, enhanced: EnhancedNoise, renormalize: bool = True,
                      shift: float = 0.0) -> "Hamiltonian":
        V = enhanced.xi_eps
        if renormalize:
            # c_eps = -E[X1 xi] >= 0, so "xi - E[X xi]" adds it
            V = V + Field.constant(V.grid, enhanced.c_eps)
        return cls(potential=V, shift=float(shift), enhanced=enhanced)

    @classmethod
    def free(cls, grid: Grid, shift: float = 0.0) -> "Hamiltonian":
        return cls(potential=Field.zeros(grid), shift=float(shift))

    def with_shift(self, shift: float) -> "Hamiltonian":
        return Hamiltonian(potential=self.potential, shift=float(shift), enhanced=self.enhanced)

    @property
    def grid(self) -> Grid:
        return self.potential.grid

    @property
    def dim(self) -> int:
        return self.grid.n_active

    @cached_property
    def potential_values(self) -> np.ndarray:
        """Potential on the padded (dealiasing) collocation grid."""
        M = self.grid.padded_size
        return ((M * M / TWO_PI) * sfft.ifft2(_pad(self.potential.coeffs, M))).real

    @cached_property
    def spectral_bounds(self) -> tuple[float, float]:
        """Interval containing the spectrum (Galerkin bounds of each term)."""
        V = self.potential_values
        kmax = float(self.grid.ksq[self.grid.active].max())
        return float(V.min()) + self.shift, kmax + float(V.max()) + self.shift

    def apply_coeffs(self, c: np.ndarray) -> np.ndarray:
        """Apply to coefficient arrays of shape ``(..., N, N)``."""
        grid = self.grid
        M = grid.padded_size
        vals = sfft.ifft2(_pad(c, M), axes=(-2, -1)) * self.potential_values
        Vc = _truncate(sfft.fft2(vals, axes=(-2, -1)), grid.N)
        out = (grid.ksq + self.shift) * c + Vc
        out[..., ~grid.active] = 0.0
        return out

    def matvec_packed(self, X: np.ndarray) -> np.ndarray:
        """Apply to packed real vectors stored as columns of ``X``."""
        g = self.grid
        c = unpack_coeffs(g, np.asarray(X).T)
        return pack_coeffs(g, self.apply_coeffs(c)).T


def apply_H(H: Hamiltonian, u: Field) -> Field:
    if u.grid != H.grid:
        raise ValueError(f"grid mismatch: N={u.grid.N} vs N={H.grid.N}")
    return Field(u.grid, H.apply_coeffs(u.coeffs), real=u.real)


def active_modes(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Integer frequencies of the active modes, ordered by (|n|^2, n1, n2)."""
    k1 = grid.k1[grid.active]
    k2 = grid.k2[grid.active]
    order = np.lexsort((k2, k1, k1**2 + k2**2))
    return k1[order], k2[order]


def dense_matrix(H: Hamiltonian) -> np.ndarray:
    """Matrix ``<phi_m, H phi_n>`` over the active modes, built from the convolution formula."""
    grid = H.grid
    if grid.N > DENSE_MAX_N:
        raise ValueError(f"dense_matrix is limited to N <= {DENSE_MAX_N}, got N={grid.N}")
    k1, k2 = active_modes(grid)
    d1 = k1[:, None] - k1[None, :]
    d2 = k2[:, None] - k2[None, :]
    h = grid.N // 2
    ok = (np.abs(d1) < h) & (np.abs(d2) < h)
    Vhat = H.potential.coeffs
    A = np.where(ok, Vhat[d1 % grid.N, d2 % grid.N], 0.0) / TWO_PI
    A[np.diag_indices_from(A)] += k1**2 + k2**2 + H.shift
    return A


def dense_real_matrix(H: Hamiltonian) -> np.ndarray:
    """Real symmetric matrix of ``H`` in the packed real basis (assembled by columns)."""
    if H.grid.N > DENSE_SOLVE_MAX_N:
        raise ValueError(f"dense solve is limited to N <= {DENSE_SOLVE_MAX_N}, got N={H.grid.N}")
    d = H.dim
    A = np.empty((d, d))
    eye = np.eye(d)
    for lo in range(0, d, 256):
        A[:, lo:lo + 256] = H.matvec_packed(eye[:, lo:lo + 256])
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class Spectrum:
    """Lowest ``K`` eigenpairs; eigenvectors are columns of packed real vectors."""

    grid: Grid
    eigenvalues: np.ndarray
    vectors: np.ndarray
    method: str
    residuals: np.ndarray
    shift: float = 0.0
    hamiltonian: Hamiltonian | None = field(default=None, compare=False, repr=False)

    @property
    def K(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def complete(self) -> bool:
        return self.K == self.grid.n_active

    @property
    def unshifted(self) -> np.ndarray:
        return self.eigenvalues - self.shift

    @property
    def reliable_max(self) -> float:
        """Upper end of the range where every eigenvalue is known and trusted (unshifted)."""
        top = np.inf if self.complete else float(self.unshifted[-1])
        return min(top, converged_cutoff(self.grid.N))

    def eigenvector(self, n: int) -> Field:
        return Field(self.grid, unpack_coeffs(self.grid, self.vectors[:, n]), real=True)

    def project(self, u: Field) -> np.ndarray:
        """Coefficients ``<e_n, u>`` (complex for complex fields)."""
        if u.grid != self.grid:
            raise ValueError(f"grid mismatch: N={u.grid.N} vs N={self.grid.N}")
        if u.real:
            return self.vectors.T @ pack_coeffs(self.grid, u.coeffs)
        P = np.stack([pack_coeffs(self.grid, u.real_part.coeffs),
                      pack_coeffs(self.grid, u.imag_part.coeffs)], axis=1)
        a = self.vectors.T @ P
        return a[:, 0] + 1j * a[:, 1]

    def synthesize(self, a: np.ndarray) -> Field:
        a = np.asarray(a)
        if np.isrealobj(a):
            return Field(self.grid, unpack_coeffs(self.grid, self.vectors @ a), real=True)
        X = self.vectors @ np.stack([a.real, a.imag], axis=1)
        c = unpack_coeffs(self.grid, X[:, 0]) + 1j * unpack_coeffs(self.grid, X[:, 1])
        return Field(self.grid, c, real=False)

    def tail_energy(self, u: Field) -> float:
        """Relative squared norm of ``u`` outside the computed eigenspace."""
        nrm2 = u.norm() ** 2
        if nrm2 == 0:
            return 0.0
        a = self.project(u)
        return max(0.0, 1.0 - float(np.vdot(a, a).real) / nrm2)

    def coefficients(self, u: Field, tol: float = TAIL_TOL) -> np.ndarray:
        """Eigen-coefficients of ``u``, refusing fields with too much tail energy."""
        a = self.project(u)
        nrm2 = u.norm() ** 2
        if nrm2 > 0:
            tail = max(0.0, 1.0 - float(np.vdot(a, a).real) / nrm2)
            if tail > tol:
                raise TailEnergyError(
                    f"field has relative tail energy {tail:.3e} outside the computed span "
                    f"(K={self.K}); tolerance {tol:.1e}", tail)
        return a

    def __repr__(self):
        return f"Spectrum(N={self.grid.N}, K={self.K}, method={self.method!r}, shift={self.shift:g})"


def eigensolve(H: Hamiltonian, K: int | None = None, method: str = "auto", tol: float = 1e-10,
               block_size: int = 16, seed: int = 0) -> Spectrum:
    """Lowest ``K`` eigenpairs of ``H`` (all of them when ``K`` is None).

    ``method='auto'`` picks the dense solver up to N=32, preconditioned
    LOBPCG for a handful of eigenpairs, the dense solver again up to N=64 and
    block Lanczos with full reorthogonalization beyond.
    """
    dim = H.dim
    K = dim if K is None else int(K)
    if K < 1:
        raise ValueError("K must be >= 1")
    K = min(K, dim)
    if method == "auto":
        if H.grid.N <= DENSE_MAX_N:
            method = "dense"
        elif K <= LOBPCG_MAX_K:
            method = "lobpcg"
        else:
            method = "dense" if H.grid.N <= DENSE_SOLVE_MAX_N else "lanczos"
    if method == "dense":
        A = dense_real_matrix(H)
        w, V = sla.eigh(A, subset_by_index=(0, K - 1))
    elif method == "lanczos":
        res = block_lanczos(H.matvec_packed, dim, K, block_size=block_size, tol=tol,
                            max_dim=dim if dim <= 4096 else None,
                            rng=np.random.default_rng(seed))
        w, V = res.eigenvalues, res.eigenvectors
        # one Rayleigh-Ritz cleanup keeps the returned basis orthonormal to round-off
        Qv, _ = np.linalg.qr(V)
        w, Y = np.linalg.eigh(Qv.T @ H.matvec_packed(Qv))
        V = Qv @ Y
    elif method == "lobpcg":
        w, V = _lobpcg(H, K, tol, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    R = H.matvec_packed(V) - V * w
    resid = np.linalg.norm(R, axis=0)
    bad = resid > 1e-8 * (1.0 + np.abs(w))
    if bad.any():
        raise ConvergenceError(f"{int(bad.sum())} eigenpairs exceed the residual bound "
                               f"(max {resid.max():.3e})", residual=float(resid.max()))
    return Spectrum(grid=H.grid, eigenvalues=w, vectors=V, method=method, residuals=resid,
                    shift=H.shift, hamiltonian=H)


def _packed_ksq(grid: Grid) -> np.ndarray:
    i1, i2 = grid._half
    k = grid.ksq[i1, i2].astype(float)
    return np.concatenate([[0.0], k, k])


def _lobpcg(H: Hamiltonian, K: int, tol: float, seed: int):
    """LOBPCG preconditioned by ``(|n|^2 + c)^-1`` (diagonal in the packed basis)."""
    dim = H.dim
    lo, _ = H.spectral_bounds
    diag = _packed_ksq(H.grid) + max(1.0, 1.0 - lo + H.shift)
    A = sla_sparse.LinearOperator((dim, dim), matvec=lambda x: H.matvec_packed(x.reshape(dim, -1)),
                                  matmat=H.matvec_packed, dtype=np.float64)
    M = sla_sparse.LinearOperator((dim, dim), matvec=lambda x: x.reshape(dim, -1) / diag[:, None],
                                  matmat=lambda X: X / diag[:, None], dtype=np.float64)
    rng = np.random.default_rng(seed)
    m = K + min(8, max(2, K // 2))
    X = rng.standard_normal((dim, m)) / np.sqrt(diag)[:, None]
    w, V = sla_sparse.lobpcg(A, X, M=M, largest=False, tol=tol, maxiter=500, verbosityLevel=0)
    order = np.argsort(w)[:K]
    w, V = w[order], V[:, order]
    # Rayleigh-Ritz on the returned block for an orthonormal, sorted result
    Qv, _ = np.linalg.qr(V)
    w, Y = np.linalg.eigh(Qv.T @ H.matvec_packed(Qv))
    return w, Qv @ Y


def ground_state_energy(H: Hamiltonian, tol: float = 1e-9) -> float:
    return float(eigensolve(H, 1, tol=tol).eigenvalues[0])


def positivity_shift(H: Hamiltonian) -> float:
    """``max(0, 1 - lambda_1)`` for the unshifted operator."""
    lam1 = ground_state_energy(H.with_shift(0.0))
    return max(0.0, 1.0 - lam1)


def laplacian_eigenvalues(count: int) -> np.ndarray:
    """The ``count`` smallest eigenvalues of the flat-torus Laplacian, with multiplicity."""
    r = int(math.isqrt(max(count, 1))) + 2
    while True:
        n = np.arange(-r, r + 1)
        ksq = np.sort((n[:, None] ** 2 + n[None, :] ** 2).ravel())
        if ksq.size >= count and ksq[count - 1] <= r * r:
            return ksq[:count].astype(float)
        r *= 2


def weyl_counting(spec: Spectrum, lam: float) -> int:
    """``#{n : lambda_n <= lam}`` for the unshifted eigenvalues."""
    if lam >= spec.reliable_max and not (spec.complete and lam < np.inf):
        raise SpectralRangeError(f"lambda={lam} is beyond the reliable range "
                                 f"(< {spec.reliable_max:.4g})")
    return int(np.searchsorted(spec.unshifted, lam, side="right"))


def weyl_slope(spec: Spectrum, lam_max: float | None = None, lam_min: float = 0.0,
               n_points: int = 512) -> float:
    """Least-squares slope of the counting function on ``[lam_min, lam_max]``."""
    top = spec.reliable_max if lam_max is None else lam_max
    if top > spec.reliable_max:
        raise SpectralRangeError(f"lam_max={top} exceeds the reliable range "
                                 f"({spec.reliable_max:.4g})")
    lam = np.linspace(lam_min, top, n_points, endpoint=False)
    counts = np.searchsorted(spec.unshifted, lam, side="right")
    slope, _ = np.polyfit(lam, counts, 1)
    return float(slope)


def eigenvalue_sandwich(spec: Spectrum, laplacian_eigs=None, delta: float = 0.5,
                        n_max: int | None = None, lower_delta: bool = False) -> tuple[float, float]:
    """Smallest ``(m1, m2)`` with ``lam_n - m1 <= lam_n(Xi) <= (1+delta) lam_n + m2``.

    With ``lower_delta`` the lower bound becomes ``(1-delta) lam_n - m1``, the
    form that follows from the quadratic-form comparison.  Without it, m1 is
    set by the widest noise splitting of a degenerate Laplacian cluster seen so
    far, so it keeps growing until the first highly degenerate shell is inside
    the fitted range.  Only eigenvalues inside the reliable range are used.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    lam_xi = spec.unshifted
    lam_xi = lam_xi[lam_xi < spec.reliable_max]
    if n_max is not None:
        lam_xi = lam_xi[:n_max]
    if laplacian_eigs is None:
        laplacian_eigs = laplacian_eigenvalues(lam_xi.size)
    lap = np.asarray(laplacian_eigs, dtype=float)[:lam_xi.size]
    lam_xi = lam_xi[:lap.size]
    low = (1.0 - delta) * lap if lower_delta else lap
    m1 = float(np.max(low - lam_xi))
    m2 = float(np.max(lam_xi - (1.0 + delta) * lap))
    return m1, m2


def _window(spec: Spectrum, lam: float) -> np.ndarray:
    if lam + 1.0 - spec.shift > spec.reliable_max and not spec.complete:
        raise SpectralRangeError(f"window [{lam}, {lam + 1}) is not inside the reliable range")
    ev = spec.eigenvalues
    return (ev >= lam) & (ev < lam + 1.0)


def spectral_projector(spec: Spectrum, lam: float, u: Field) -> Field:
    """``Pi_lam u``: projection onto eigenvalues in ``[lam, lam + 1)`` (shifted spectrum)."""
    sel = _window(spec, lam)
    a = spec.project(u)
    return spec.synthesize(np.where(sel, a, 0.0))


def projector_lq_norm(spec: Spectrum, lam: float, q: float = 4.0, n_starts: int = 8,
                      steps: int = 30, rng: np.random.Generator | None = None) -> float:
    """Estimate ``sup ||Pi_lam u||_q / ||u||_2`` by projected gradient ascent.

    The supremum is attained on the window's eigenspace, so the search runs
    over unit coefficient vectors there, starting from every eigenvector and
    ``n_starts`` random combinations.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    idx = np.nonzero(_window(spec, lam))[0]
    if idx.size == 0:
        return 0.0
    g = spec.grid
    M = g.padded_size
    # padded point values of each window eigenfunction
    c = unpack_coeffs(g, spec.vectors[:, idx].T)
    E = ((M * M / TWO_PI) * sfft.ifft2(_pad(c, M), axes=(-2, -1))).real.reshape(idx.size, -1)
    w = (TWO_PI / M) ** 2

    def value(x):
        f = x @ E
        return (w * np.sum(np.abs(f) ** q)) ** (1.0 / q)

    starts = list(np.eye(idx.size)) + [rng.standard_normal(idx.size) for _ in range(n_starts)]
    best = 0.0
    for x in starts:
        x = x / np.linalg.norm(x)
        for _ in range(steps):
            f = x @ E
            grad = E @ (np.abs(f) ** (q - 2) * f)
            nx = grad / np.linalg.norm(grad)
            if np.linalg.norm(nx - x) < 1e-10:
                x = nx
                break
            x = nx
        best = max(best, value(x))
    return float(best)


def fractional_apply(spec: Spectrum, beta: float, u: Field) -> Field:
    """``H^(beta/2) u`` through the eigenbasis (needs a positive spectrum)."""
    if spec.eigenvalues[0] <= 0:
        raise ValueError("fractional powers need a positive spectrum; apply a positivity shift")
    a = spec.coefficients(u)
    return spec.synthesize(spec.eigenvalues ** (0.5 * beta) * a)


@dataclass(frozen=True)
class FloorOperators:
    """``floor(H)`` and ``B e_n = floor(sqrt(lambda_n)) e_n`` on the computed span."""

    spec: Spectrum

    @property
    def floor_eigenvalues(self) -> np.ndarray:
        return np.floor(self.spec.eigenvalues)

    @property
    def b_eigenvalues(self) -> np.ndarray:
        ev = self.spec.eigenvalues
        if ev[0] < 0:
            raise ValueError("B needs a nonnegative spectrum")
        return np.floor(np.sqrt(ev))

    def floor_apply(self, u: Field) -> Field:
        return self.spec.synthesize(self.floor_eigenvalues * self.spec.coefficients(u))

    def b_apply(self, u: Field) -> Field:
        return self.spec.synthesize(self.b_eigenvalues * self.spec.coefficients(u))

    def floor_remainder(self, u: Field) -> Field:
        """``(H - floor(H)) u``."""
        ev = self.spec.eigenvalues
        return self.spec.synthesize((ev - np.floor(ev)) * self.spec.coefficients(u))

    def sqrt_remainder(self, u: Field) -> Field:
        """``(sqrt(H) - B) u``."""
        ev = self.spec.eigenvalues
        return self.spec.synthesize((np.sqrt(ev) - self.b_eigenvalues) * self.spec.coefficients(u))

    def floor_group(self, u: Field, t: float) -> Field:
        """``exp(i t floor(H)) u``."""
        return self.spec.synthesize(np.exp(1j * t * self.floor_eigenvalues) * self.spec.coefficients(u))


def floor_ops(spec: Spectrum) -> FloorOperators:
    return FloorOperators(spec)


def eigenfunction_lq_norms(spec: Spectrum, q: float, indices=None) -> np.ndarray:
    idx = range(spec.K) if indices is None else indices
    return np.array([lq_norm(spec.eigenvector(n), q) for n in idx])


def lq_eigenfunction_slope(spec: Spectrum, q: float, n_use: int | None = None,
                           min_count: int = 20) -> float:
    """Least-squares slope of ``log ||e_n||_q`` against ``log sqrt(lambda_n)``.

    Uses positive eigenvalues inside the reliable range.
    """
    if not 2.0 < q < np.inf:
        raise ValueError("q must lie in (2, inf)")
    ev = spec.eigenvalues
    sel = np.nonzero((ev > 0) & (spec.unshifted < spec.reliable_max))[0]
    if n_use is not None:
        sel = sel[:n_use]
    if sel.size < min_count:
        raise ValueError(f"need at least {min_count} usable eigenfunctions, have {sel.size}")
    norms = eigenfunction_lq_norms(spec, q, sel)
    slope, _ = np.polyfit(np.log(np.sqrt(ev[sel])), np.log(norms), 1)
    return float(slope)


def projector_slope(spec: Spectrum, windows, q: float = 4.0, rng=None) -> tuple[float, np.ndarray]:
    """Regression slope of the window-wise ``L^2 -> L^q`` norms against ``sqrt(lam + 1)``."""
    windows = np.asarray(list(windows), dtype=float)
    norms = np.array([projector_lq_norm(spec, lam, q, rng=rng) for lam in windows])
    keep = norms > 0
    slope, _ = np.polyfit(np.log(np.sqrt(windows[keep] + 1.0)), np.log(norms[keep]), 1)
    return float(slope), norms


def representation_residual(maps, H: Hamiltonian, u_sharp: Field, beta: float = -0.5) -> float:
    """Relative size of the remainder in ``H Gamma u# ~ L u# + P_xi u# + Pi(u#, xi)``.

    The operator is applied directly on ``Gamma u#``; the three leading
    paracontrolled terms are subtracted and the remainder is measured in
    ``H^beta`` against ``H Gamma u#``. Values below one indicate that the
    leading terms carry the bulk of the operator.
    """
    from .paracalc import gamma, para, resonant
    from .spectral import laplacian_apply, sobolev_norm

    xi = maps.enhanced.xi_eps
    Hv = apply_H(H, gamma(maps, u_sharp))
    lead = -laplacian_apply(u_sharp) + para(xi, u_sharp) + resonant(u_sharp, xi)
    den = sobolev_norm(Hv, beta)
    return sobolev_norm(Hv - lead, beta) / den if den > 0 else 0.0
