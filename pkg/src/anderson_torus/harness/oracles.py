"""Independent reference computations behind ``oracle <suite>``.

Each check compares a library routine against a slower, structurally
different computation (dense linear algebra, direct sums, an ODE solver)
and reports the discrepancy next to its tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from ..anderson import Hamiltonian, active_modes, dense_matrix, eigensolve
from ..dispersive import schrodinger_prop
from ..noise import build_enhanced, renorm_constant, sample_white_noise
from ..pdesolve import nls_solve, wave_solve
from ..spectral import Field, Grid, TWO_PI, dealiased_product, random_field, to_point_values

SUITES = ("dense", "convolution", "lattice", "dft", "ode")


@dataclass(frozen=True)
class OracleCheck:
    suite: str
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)


def direct_convolution(u: Field, v: Field) -> np.ndarray:
    """Coefficients of ``u v`` on the active modes by the O(N^4) double sum.

    In the basis ``e^{i n x} / 2 pi`` the product has coefficients
    ``(1 / 2 pi) sum_m u_m v_{n-m}``.
    """
    g = u.grid
    N = g.N
    f = g.freqs
    out = np.zeros((N, N), dtype=np.complex128)
    cu, cv = u.coeffs, v.coeffs
    idx = {int(k): i for i, k in enumerate(f)}
    act = np.argwhere(g.active)
    for a1, a2 in act:
        ua = cu[a1, a2]
        if ua == 0:
            continue
        m1, m2 = int(f[a1]), int(f[a2])
        for b1, b2 in act:
            n1, n2 = m1 + int(f[b1]), m2 + int(f[b2])
            if n1 in idx and n2 in idx:
                i, j = idx[n1], idx[n2]
                if g.active[i, j]:
                    out[i, j] += ua * cv[b1, b2]
    return out / TWO_PI


def direct_point_values(u: Field, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``sum_n c_n e^{i n . x} / 2 pi`` evaluated point by point."""
    g = u.grid
    k1, k2 = g.k1, g.k2
    phase = np.exp(1j * (np.multiply.outer(x, k1) + np.multiply.outer(y, k2)))
    return np.tensordot(phase, u.coeffs, axes=([-2, -1], [0, 1])) / TWO_PI


def lattice_sum(eps: float) -> float:
    """``(2 pi)^-2 sum 1/|n|^2`` over ``0 < |n| <= 1/eps`` by explicit enumeration."""
    r = int(math.floor(1.0 / eps + 1e-9))
    terms = []
    for n1 in range(-r, r + 1):
        for n2 in range(-r, r + 1):
            k = n1 * n1 + n2 * n2
            if 0 < k and k * eps * eps <= 1.0 + 1e-12:
                terms.append(1.0 / k)
    return math.fsum(terms) / TWO_PI**2


def _dense_suite(seed: int) -> list[OracleCheck]:
    out = []
    for N in (8, 16):
        H = Hamiltonian.from_enhanced(build_enhanced(sample_white_noise(Grid(N), seed), 2.0 / N))
        A = dense_matrix(H)
        w_ref, V_ref = np.linalg.eigh(A)
        spec = eigensolve(H, 20, method="lanczos")
        err = float(np.max(np.abs(spec.eigenvalues - w_ref[:20]) / np.maximum(1.0, np.abs(w_ref[:20]))))
        out.append(OracleCheck("dense", f"lanczos_vs_dense_N{N}", err, 1e-8))
        full = eigensolve(H, method="dense")
        u = random_field(H.grid, np.random.default_rng(seed), real=False)
        t = 0.7
        k1, k2 = active_modes(H.grid)
        sel = (k1 % N, k2 % N)
        got = schrodinger_prop(full, u, t).coeffs[sel]
        ref = sla.expm(1j * t * A) @ u.coeffs[sel]
        out.append(OracleCheck("dense", f"propagator_vs_expm_N{N}",
                               float(np.linalg.norm(got - ref) / np.linalg.norm(ref)), 1e-8))
        cheb = schrodinger_prop(H, u, t).coeffs[sel]
        out.append(OracleCheck("dense", f"chebyshev_vs_expm_N{N}",
                               float(np.linalg.norm(cheb - ref) / np.linalg.norm(ref)), 1e-8))
    return out


def _convolution_suite(seed: int) -> list[OracleCheck]:
    rng = np.random.default_rng(seed)
    out = []
    for N in (6, 8):
        g = Grid(N)
        u, v = random_field(g, rng, real=False), random_field(g, rng, real=False)
        ref = direct_convolution(u, v)
        got = dealiased_product(u, v).coeffs
        out.append(OracleCheck("convolution", f"dealiased_product_N{N}",
                               float(np.abs(got - ref).max() / np.abs(ref).max()), 1e-12))
    return out


def _lattice_suite(seed: int) -> list[OracleCheck]:
    out = []
    for k in range(1, 7):
        eps = 2.0 ** (-k)
        ref = lattice_sum(eps)
        out.append(OracleCheck("lattice", f"renorm_constant_eps2^-{k}",
                               abs(renorm_constant(eps) - ref) / ref, 1e-12))
    return out


def _dft_suite(seed: int) -> list[OracleCheck]:
    rng = np.random.default_rng(seed)
    out = []
    for N in (8, 16):
        g = Grid(N)
        u = random_field(g, rng, real=False)
        for padded in (False, True):
            x, y = g.points(padded=padded)
            ref = direct_point_values(u, x, y)
            got = to_point_values(u, padded=padded)
            out.append(OracleCheck("dft", f"point_values_N{N}{'_padded' if padded else ''}",
                                   float(np.abs(got - ref).max() / np.abs(ref).max()), 1e-12))
    return out


def _ode_suite(seed: int) -> list[OracleCheck]:
    """Spatially constant data under zero noise reduce both equations to ODEs."""
    g = Grid(8)
    out = []
    free = eigensolve(Hamiltonian.free(g), method="dense")
    amp = 0.8 + 0.3j
    u0 = Field.constant(g, amp)
    T = 1.0
    traj = nls_solve(free, u0, T, 1e-3, record_every=1000)
    # the point value obeys u' = i |u|^2 u; the zero-mode coefficient is 2 pi u
    exact = TWO_PI * amp * np.exp(1j * abs(amp) ** 2 * T)
    err = abs(traj.final.u.coeffs[0, 0] - exact) / abs(TWO_PI * amp)
    out.append(OracleCheck("ode", "nls_constant_exact", float(err), 1e-8))

    shifted = eigensolve(Hamiltonian.free(g, shift=1.0), method="dense")
    c0 = 0.9
    a_traj = wave_solve(shifted, Field.constant(g, c0), Field.zeros(g), T, 1e-3, record_every=1000)
    # the point value obeys u'' = -u - u^3 (shift 1 plays the mass term)
    sol = solve_ivp(lambda t, y: [y[1], -y[0] - y[0] ** 3], (0.0, T), [c0, 0.0],
                    method="DOP853", rtol=1e-12, atol=1e-14)
    err = abs(a_traj.final.u.coeffs[0, 0].real / TWO_PI - sol.y[0, -1])
    out.append(OracleCheck("ode", "wave_constant_vs_solve_ivp", float(err), 1e-6))
    return out


_SUITE_FUNCS = {"dense": _dense_suite, "convolution": _convolution_suite, "lattice": _lattice_suite,
                "dft": _dft_suite, "ode": _ode_suite}


def run_oracles(suite: str = "all", seed: int = 0) -> list[OracleCheck]:
    if suite == "all":
        names = SUITES
    elif suite in _SUITE_FUNCS:
        names = (suite,)
    else:
        raise ValueError(f"unknown oracle suite {suite!r}; choose from {', '.join(SUITES)} or all")
    return [c for name in names for c in _SUITE_FUNCS[name](seed)]
