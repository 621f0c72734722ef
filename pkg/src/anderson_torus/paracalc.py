"""Bony paraproducts and the paracontrolled parametrization of the operator domain.

Paraproducts use the sharp Littlewood-Paley blocks of :mod:`spectral` with a
gap of two blocks::

    para(f, g)     = sum_j S_{j-2} f * Delta_j g       (S_k = sum of blocks < k)
    resonant(f, g) = sum_{|i-j| <= 2} Delta_i f * Delta_j g

so that ``para(f, g) + para(g, f) + resonant(f, g)`` is exactly the
dealiased product. All block products are accumulated in point values on the
padded grid and transformed back once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import GammaConvergenceError
from .noise import EnhancedNoise
from .spectral import (
    Field,
    Grid,
    _pad,
    besov_sup_norm,
    dealiased_product,
    from_point_values,
    inverse_laplacian,
    laplacian_apply,
)


def _check_grids(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError(f"grid mismatch: N={grid.N} vs N={f.grid.N}")
    return grid


def _block_values(u: Field) -> np.ndarray:
    """Padded point values of each block, stacked for j = -1..jmax."""
    grid = u.grid
    M = grid.padded_size
    nb = grid.jmax + 2
    c = np.zeros((nb, grid.N, grid.N), dtype=np.complex128)
    b = grid.blocks
    for k in range(nb):
        c[k] = np.where(b == k - 1, u.coeffs, 0.0)
    vals = (M * M / (2 * np.pi)) * np.fft.ifft2(_pad(c, M))
    return vals.real if u.real else vals


def _para_values(fb: np.ndarray, gb: np.ndarray) -> np.ndarray:
    # S_{j-2} f = blocks -1..j-3, i.e. stacked rows 0..j-2
    cum = np.cumsum(fb, axis=0)
    out = np.zeros(fb.shape[1:], dtype=np.result_type(fb, gb))
    for row in range(3, fb.shape[0]):  # row = j + 1, first non-empty term at j = 2
        out += cum[row - 3] * gb[row]
    return out


def _resonant_values(fb: np.ndarray, gb: np.ndarray) -> np.ndarray:
    nb = fb.shape[0]
    out = np.zeros(fb.shape[1:], dtype=np.result_type(fb, gb))
    for i in range(nb):
        lo, hi = max(0, i - 2), min(nb, i + 3)
        out += fb[i] * gb[lo:hi].sum(axis=0)
    return out


def para(f: Field, g: Field) -> Field:
    """Paraproduct ``P_f g`` (low frequencies of f times high frequencies of g)."""
    grid = _check_grids(f, g)
    return from_point_values(grid, _para_values(_block_values(f), _block_values(g)),
                             real=f.real and g.real)


def resonant(f: Field, g: Field) -> Field:
    """Resonant term ``Pi(f, g)`` (comparable frequencies)."""
    grid = _check_grids(f, g)
    return from_point_values(grid, _resonant_values(_block_values(f), _block_values(g)),
                             real=f.real and g.real)


def bony_decomposition(f: Field, g: Field) -> tuple[Field, Field, Field]:
    """``(P_f g, Pi(f, g), P_g f)`` from a single set of block transforms."""
    grid = _check_grids(f, g)
    fb, gb = _block_values(f), _block_values(g)
    real = f.real and g.real
    return (from_point_values(grid, _para_values(fb, gb), real=real),
            from_point_values(grid, _resonant_values(fb, gb), real=real),
            from_point_values(grid, _para_values(gb, fb), real=real))


def intertwined_para(f: Field, g: Field) -> Field:
    """``P~_f g`` with ``L P~_f g = P_f L g`` for ``L = -Laplacian``.

    The zero mode, which ``L`` cannot see, is copied from ``para(f, g)``.
    """
    _check_grids(f, g)
    Lg = -laplacian_apply(g)
    out = -inverse_laplacian(para(f, Lg))
    zero = para(f, g).coeffs[0, 0]
    if zero != 0:
        c = out.coeffs.copy()
        c[0, 0] = zero
        out = Field(out.grid, c, real=out.real)
    return out


def truncation_block(s: float) -> int:
    """Lowest output block kept by the truncated paraproduct: ``ceil(log2 s^(-1/2))``."""
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s must lie in (0, 1], got {s}")
    return max(0, math.ceil(0.5 * math.log2(1.0 / s) - 1e-12))


@dataclass(frozen=True)
class ParacontrolledMaps:
    """Truncated paraproduct data for the maps Phi^s and Gamma."""

    enhanced: EnhancedNoise
    s: float = 1.0 / 16
    gamma_tol: float = 1e-12
    gamma_max_iter: int = 500

    def __post_init__(self):
        truncation_block(self.s)

    @property
    def grid(self) -> Grid:
        return self.enhanced.grid

    @property
    def j_s(self) -> int:
        return truncation_block(self.s)

    @cached_property
    def X(self) -> Field:
        return self.enhanced.X1 + self.enhanced.X2

    @cached_property
    def _LX_blocks(self) -> np.ndarray:
        return _block_values(-laplacian_apply(self.X))

    @cached_property
    def _keep(self) -> np.ndarray:
        return self.grid.blocks >= self.j_s


def truncated_para(maps: ParacontrolledMaps, f: Field, g: Field) -> Field:
    """``P~^s_f g``: the intertwined paraproduct restricted to output blocks ``>= j_s``."""
    grid = _check_grids(f, g)
    if g is maps.X:
        vals = _para_values(_block_values(f), maps._LX_blocks)
        inner = from_point_values(grid, vals, real=f.real)
        full = -inverse_laplacian(inner)
    else:
        full = intertwined_para(f, g)
    keep = grid.blocks >= truncation_block(maps.s)
    return Field(grid, np.where(keep, full.coeffs, 0.0), real=full.real)


def phi_s(maps: ParacontrolledMaps, u: Field) -> Field:
    """``Phi^s(u) = u - P~^s_u (X1 + X2)``."""
    return u - truncated_para(maps, u, maps.X)


def gamma(maps: ParacontrolledMaps, u_sharp: Field, return_info: bool = False):
    """Solve ``v = u_sharp + P~^s_v (X1 + X2)`` by fixed-point iteration.

    Raises :class:`GammaConvergenceError` if the increments stop shrinking or
    ``gamma_max_iter`` is exhausted; the error carries the observed
    contraction factor.
    """
    scale = max(1.0, u_sharp.norm())
    tol = maps.gamma_tol * scale
    v = u_sharp
    prev_step = None
    factor = 0.0
    for it in range(1, maps.gamma_max_iter + 1):
        v_new = u_sharp + truncated_para(maps, v, maps.X)
        step = (v_new - v).norm()
        v = v_new
        if prev_step is not None and prev_step > 0:
            factor = step / prev_step
            if factor >= 1.0 and step > tol:
                raise GammaConvergenceError(
                    f"Gamma iteration does not contract (factor {factor:.3g} at iteration {it})",
                    factor, step, it)
        if step <= 0.1 * tol:
            break
        prev_step = step
    else:
        raise GammaConvergenceError(
            f"Gamma iteration did not reach tol {tol:.2e} in {maps.gamma_max_iter} iterations "
            f"(contraction factor {factor:.3g})", factor, step, maps.gamma_max_iter)
    residual = (v - (u_sharp + truncated_para(maps, v, maps.X))).norm()
    if return_info:
        return v, {"iterations": it, "contraction_factor": factor, "residual": residual}
    return v


def contraction_factor(maps: ParacontrolledMaps, rng: np.random.Generator, n_starts: int = 20,
                       power_steps: int = 12) -> float:
    """Lower estimate of the L2 operator norm of ``v -> P~^s_v X``.

    Largest amplification seen along power iterations from random starts; the
    map can be nilpotent on band-limited noise, so the last iterate alone is
    not used.
    """
    from .spectral import random_field

    best = 0.0
    for _ in range(n_starts):
        v = random_field(maps.grid, rng, decay=1.0)
        v = v / v.norm()
        for _ in range(power_steps):
            w = truncated_para(maps, v, maps.X)
            rate = w.norm()
            best = max(best, rate)
            if rate == 0:
                break
            v = w / rate
    return best


def corrector_C(u: Field, X: Field, xi: Field) -> Field:
    """``C(u, X, xi) = Pi(P~_u X, xi) - u Pi(X, xi)``, evaluated literally."""
    _check_grids(u, X, xi)
    return resonant(intertwined_para(u, X), xi) - dealiased_product(u, resonant(X, xi))


def swap_S(f: Field, g: Field, h: Field) -> Field:
    """``S(f, g, h) = P_h P~_f g - P_f P_h g``."""
    _check_grids(f, g, h)
    return para(h, intertwined_para(f, g)) - para(f, para(h, g))


def corrector_ratio(u: Field, X: Field, xi: Field, alpha: float = 0.9) -> float:
    """Regularity-gain diagnostic for the corrector at Holder exponents (alpha, alpha, alpha-2)."""
    num = besov_sup_norm(corrector_C(u, X, xi), 3 * alpha - 2)
    den = besov_sup_norm(u, alpha) * besov_sup_norm(X, alpha) * besov_sup_norm(xi, alpha - 2)
    return num / den if den > 0 else 0.0


def swap_ratio(f: Field, g: Field, h: Field, alpha: float = 0.9) -> float:
    """Diagnostic for the swap operator at exponents (alpha, alpha, alpha-2)."""
    num = besov_sup_norm(swap_S(f, g, h), 3 * alpha - 2)
    den = besov_sup_norm(f, alpha) * besov_sup_norm(g, alpha) * besov_sup_norm(h, alpha - 2)
    return num / den if den > 0 else 0.0


def block_support(u: Field, tol: float = 1e-12) -> list[int]:
    """Blocks on which ``u`` has coefficients above ``tol`` (relative)."""
    scale = max(np.abs(u.coeffs).max(), 1e-300)
    b = u.grid.blocks
    return sorted({int(j) for j in np.unique(b[np.abs(u.coeffs) > tol * scale]) if j >= -1})


__all__ = [
    "GammaConvergenceError", "ParacontrolledMaps", "bony_decomposition", "block_support",
    "contraction_factor", "corrector_C", "corrector_ratio", "gamma", "intertwined_para",
    "para", "phi_s", "resonant", "swap_S", "swap_ratio", "truncated_para",
    "truncation_block",
]
