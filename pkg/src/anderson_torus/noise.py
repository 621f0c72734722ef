"""White noise on the torus, its Fourier mollification and Wick renormalization."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import (
    TWO_PI,
    Field,
    Grid,
    inverse_laplacian,
)

CONVENTION_VERSION = "onb-exp/2pi;nyquist-zero;sharp-cutoff;v1"


@dataclass(frozen=True)
class NoiseRealization:
    seed: int
    xi: Field

    @property
    def grid(self) -> Grid:
        return self.xi.grid


@dataclass(frozen=True)
class EnhancedNoise:
    """Mollified noise together with ``X1``, ``X2`` and the Wick-ordered resonant product."""

    xi_eps: Field
    eps: float
    c_eps: float
    X1: Field
    X2: Field
    wick_resonant: Field
    seed: int | None = None

    @property
    def grid(self) -> Grid:
        return self.xi_eps.grid


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    return eps


def sample_white_noise(grid: Grid, seed: int) -> NoiseRealization:
    """Draw the Fourier coefficients of white noise.

    The zero mode is a real standard normal; each +-n pair carries a complex
    Gaussian with independent real and imaginary parts of variance 1/2.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), grid.N]))
    N = grid.N
    g = rng.standard_normal((2, N, N))
    # symmetrizing (c(n) + conj c(-n)) / 2 halves the variance of each part
    c = g[0] + 1j * g[1]
    c[0, 0] = g[0, 0, 0]
    xi = Field(grid, c, real=True)
    return NoiseRealization(seed=int(seed), xi=xi)


def cutoff_mask(grid: Grid, eps: float) -> np.ndarray:
    eps = _check_eps(eps)
    # |n| <= 1/eps  <=>  |n|^2 * eps^2 <= 1, with a tiny slack for eps = 2^-k
    return grid.ksq * eps * eps <= 1.0 + 1e-12


def mollify(noise: NoiseRealization | Field, eps: float) -> Field:
    """Sharp Fourier cutoff keeping the modes with ``|n| <= 1/eps``."""
    xi = noise.xi if isinstance(noise, NoiseRealization) else noise
    mask = cutoff_mask(xi.grid, eps)
    return Field(xi.grid, np.where(mask, xi.coeffs, 0.0), real=xi.real)


def renorm_constant(eps: float, grid: Grid | None = None) -> float:
    """Lattice sum of ``(2 pi)^-2 |n|^-2`` over ``0 < |n| <= 1/eps``.

    This is ``-E[X_eps xi_eps]`` for ``Laplacian X_eps = xi_eps``, equivalently
    the pointwise variance-type expectation ``E[((-Laplacian)^-1 xi_eps) xi_eps]``;
    it is nonnegative and grows like ``log(1/eps) / (2 pi)``.

    With ``grid`` the sum runs over the grid's active modes only, which is the
    exact expectation for noise sampled on that grid.
    """
    eps = _check_eps(eps)
    if grid is not None:
        ksq = grid.ksq[cutoff_mask(grid, eps) & grid.active]
    else:
        r = int(np.floor(1.0 / eps + 1e-9))
        n = np.arange(-r, r + 1)
        ksq = (n[:, None] ** 2 + n[None, :] ** 2).ravel()
        ksq = ksq[ksq * eps * eps <= 1.0 + 1e-12]
    ksq = ksq[ksq > 0].astype(np.float64)
    # sort before summing so the value is independent of enumeration order
    return float(np.sum(np.sort(1.0 / ksq)[::-1]) / TWO_PI**2)


def build_enhanced(noise: NoiseRealization | Field, eps: float) -> EnhancedNoise:
    from .paracalc import para, resonant

    xi_eps = mollify(noise, eps)
    grid = xi_eps.grid
    c_eps = renorm_constant(eps, grid)
    # Laplacian X1 = xi (mean removed), so E[X1 xi] = -c_eps and the
    # renormalized resonant product adds c_eps back
    X1 = inverse_laplacian(xi_eps)
    wick = resonant(X1, xi_eps) + Field.constant(grid, c_eps)
    X2 = inverse_laplacian(para(xi_eps, X1) + wick)
    seed = noise.seed if isinstance(noise, NoiseRealization) else None
    return EnhancedNoise(xi_eps=xi_eps, eps=float(eps), c_eps=c_eps, X1=X1, X2=X2,
                         wick_resonant=wick, seed=seed)


def zero_enhanced(grid: Grid, eps: float = 1.0) -> EnhancedNoise:
    """Enhanced data of the identically zero noise (no renormalization)."""
    z = Field.zeros(grid)
    return EnhancedNoise(xi_eps=z, eps=float(eps), c_eps=0.0, X1=z, X2=z, wick_resonant=z)


# -- persistence -----------------------------------------------------------

def save_noise(path, noise: NoiseRealization, eps: float | None = None) -> Path:
    """Write a coefficient dump (``.npz``) with an (N, seed, eps, convention) header."""
    path = Path(path)
    header = {"N": noise.grid.N, "seed": noise.seed, "eps": eps, "convention": CONVENTION_VERSION}
    np.savez(path, header=json.dumps(header, sort_keys=True), coeffs=noise.xi.coeffs)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def load_noise(path) -> tuple[NoiseRealization, dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        coeffs = data["coeffs"]
    if header.get("convention") != CONVENTION_VERSION:
        raise ValueError(f"unsupported coefficient convention {header.get('convention')!r}")
    grid = Grid(int(header["N"]))
    return NoiseRealization(seed=int(header["seed"]), xi=Field(grid, coeffs, real=True)), header
