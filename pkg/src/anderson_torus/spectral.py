"""Fourier representation of functions on the flat torus [0, 2pi)^2.

Coefficients are stored in FFT order on an ``N x N`` array and refer to the
orthonormal basis ``phi_n(x) = exp(i n.x) / (2 pi)``, so that Plancherel reads
``||u||_2^2 = sum |c_n|^2`` with no volume factors.

The Nyquist row and column (frequency ``-N/2`` on either axis) is kept at zero
for every field. The remaining "active" frequencies are closed under negation,
which makes complex conjugation an exact involution on coefficient arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi


def _good_size(m: int) -> int:
    m = sfft.next_fast_len(m)
    while m % 2:
        m = sfft.next_fast_len(m + 1)
    return m


@dataclass(frozen=True)
class Grid:
    """Integer frequency lattice ``{-N/2, ..., N/2-1}^2`` of the 2-torus."""

    N: int

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 4 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 4, got {self.N!r}")

    @cached_property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.N, 1.0 / self.N).astype(np.int64)

    @cached_property
    def k1(self) -> np.ndarray:
        return np.broadcast_to(self.freqs[:, None], (self.N, self.N))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.broadcast_to(self.freqs[None, :], (self.N, self.N))

    @cached_property
    def ksq(self) -> np.ndarray:
        """Integer ``|n|^2`` per coefficient."""
        return self.k1**2 + self.k2**2

    @cached_property
    def active(self) -> np.ndarray:
        """Boolean mask of non-Nyquist frequencies."""
        nyq = self.N // 2
        return (self.k1 != -nyq) & (self.k2 != -nyq)

    @property
    def n_active(self) -> int:
        return (self.N - 1) ** 2

    @cached_property
    def padded_size(self) -> int:
        """Even FFT-friendly size >= 3N/2 used for dealiased products."""
        return _good_size((3 * self.N + 1) // 2)

    @cached_property
    def blocks(self) -> np.ndarray:
        """Littlewood-Paley block index per coefficient (sharp cutoffs).

        Block -1 holds ``|n|^2 <= 1``; block ``j >= 0`` holds
        ``4^j < |n|^2 <= 4^(j+1)``.
        """
        ksq = self.ksq
        out = np.full(ksq.shape, -1, dtype=np.int64)
        m = ksq > 1
        bl = np.frompyfunc(lambda v: int(v - 1).bit_length(), 1, 1)(ksq[m]).astype(np.int64)
        out[m] = (bl + 1) // 2 - 1
        out[~self.active] = -2  # Nyquist frequencies belong to no block
        return out

    @property
    def jmax(self) -> int:
        return int(self.blocks.max())

    def index(self, n) -> tuple[int, int]:
        """Array index of the integer frequency ``n = (n1, n2)``."""
        n1, n2 = int(n[0]), int(n[1])
        h = self.N // 2
        if not (-h < n1 < h and -h < n2 < h):
            raise ValueError(f"frequency {n} is not an active mode of N={self.N}")
        return n1 % self.N, n2 % self.N

    def reflect(self, c: np.ndarray) -> np.ndarray:
        """Array ``c(-n)`` in FFT order."""
        return np.roll(np.flip(c, axis=(-2, -1)), 1, axis=(-2, -1))

    @cached_property
    def _half(self) -> tuple[np.ndarray, np.ndarray]:
        # one representative per +-n pair: n1 > 0, or n1 == 0 and n2 > 0
        k1, k2 = self.k1, self.k2
        sel = self.active & ((k1 > 0) | ((k1 == 0) & (k2 > 0)))
        i1, i2 = np.nonzero(sel)
        order = np.lexsort((k2[i1, i2], k1[i1, i2], self.ksq[i1, i2]))
        return i1[order], i2[order]

    def points(self, padded: bool = False) -> tuple[np.ndarray, np.ndarray]:
        M = self.padded_size if padded else self.N
        x = TWO_PI * np.arange(M) / M
        return np.meshgrid(x, x, indexing="ij")


class Field:
    """Immutable coefficient array on a :class:`Grid`."""

    __slots__ = ("grid", "coeffs", "real")

    def __init__(self, grid: Grid, coeffs, real: bool | None = None):
        c = np.array(coeffs, dtype=np.complex128)
        if c.shape != (grid.N, grid.N):
            raise ValueError(f"coefficient shape {c.shape} does not match N={grid.N}")
        c[~grid.active] = 0.0
        if real is None:
            real = bool(np.allclose(c, np.conj(grid.reflect(c)), rtol=0, atol=1e-13 * (1 + np.abs(c).max())))
        if real:
            c = 0.5 * (c + np.conj(grid.reflect(c)))
        c.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "real", bool(real))

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros((grid.N, grid.N)), real=True)

    @classmethod
    def constant(cls, grid: Grid, value: complex) -> "Field":
        """Field equal to ``value`` everywhere (coefficient ``2 pi value`` at n=0)."""
        c = np.zeros((grid.N, grid.N), dtype=np.complex128)
        c[0, 0] = TWO_PI * value
        return cls(grid, c, real=np.isreal(value))

    @classmethod
    def mode(cls, grid: Grid, n, amplitude: complex = 1.0) -> "Field":
        """Single basis function ``amplitude * phi_n``."""
        c = np.zeros((grid.N, grid.N), dtype=np.complex128)
        c[grid.index(n)] = amplitude
        return cls(grid, c, real=False if tuple(n) != (0, 0) else None)

    def _check(self, other: "Field"):
        if not isinstance(other, Field):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError(f"grid mismatch: N={self.grid.N} vs N={other.grid.N}")

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Field(self.grid, self.coeffs + other.coeffs, real=self.real and other.real)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Field(self.grid, self.coeffs - other.coeffs, real=self.real and other.real)

    def __neg__(self):
        return Field(self.grid, -self.coeffs, real=self.real)

    def __mul__(self, scalar):
        if isinstance(scalar, Field):
            return NotImplemented
        return Field(self.grid, self.coeffs * scalar, real=self.real and bool(np.isreal(scalar)))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.grid.reflect(self.coeffs)), real=self.real)

    @property
    def real_part(self) -> "Field":
        c = self.coeffs
        return Field(self.grid, 0.5 * (c + np.conj(self.grid.reflect(c))), real=True)

    @property
    def imag_part(self) -> "Field":
        c = self.coeffs
        return Field(self.grid, -0.5j * (c - np.conj(self.grid.reflect(c))), real=True)

    def inner(self, other: "Field") -> complex:
        """``<self, other>`` with conjugation on the first slot."""
        self._check(other)
        return complex(np.vdot(self.coeffs, other.coeffs))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def mean(self) -> complex:
        """Spatial average (zero mode divided by 2 pi)."""
        return complex(self.coeffs[0, 0] / TWO_PI)

    def __repr__(self):
        return f"Field(N={self.grid.N}, real={self.real}, L2={self.norm():.6g})"


def to_point_values(u: Field, padded: bool = False) -> np.ndarray:
    """Values of ``u`` at the collocation points ``2 pi j / M``."""
    N = u.grid.N
    if not padded:
        vals = (N * N / TWO_PI) * sfft.ifft2(u.coeffs)
    else:
        M = u.grid.padded_size
        vals = (M * M / TWO_PI) * sfft.ifft2(_pad(u.coeffs, M))
    return vals.real.copy() if u.real else vals


def from_point_values(grid: Grid, values, real: bool | None = None) -> Field:
    """Inverse of :func:`to_point_values` for arrays of shape ``N x N`` or padded ``M x M``."""
    values = np.asarray(values)
    M = values.shape[0]
    if values.shape != (M, M) or M not in (grid.N, grid.padded_size):
        raise ValueError(f"point array shape {values.shape} fits neither N nor padded grid")
    c = (TWO_PI / (M * M)) * sfft.fft2(values)
    if M != grid.N:
        c = _truncate(c, grid.N)
    if real is None:
        real = bool(np.isrealobj(values))
    return Field(grid, c, real=real)


def _pad(c: np.ndarray, M: int) -> np.ndarray:
    N = c.shape[-1]
    h = N // 2
    out = np.zeros(c.shape[:-2] + (M, M), dtype=np.complex128)
    out[..., :h, :h] = c[..., :h, :h]
    out[..., :h, M - h:] = c[..., :h, h:]
    out[..., M - h:, :h] = c[..., h:, :h]
    out[..., M - h:, M - h:] = c[..., h:, h:]
    return out


def _truncate(c: np.ndarray, N: int) -> np.ndarray:
    M = c.shape[-1]
    h = N // 2
    out = np.empty(c.shape[:-2] + (N, N), dtype=np.complex128)
    out[..., :h, :h] = c[..., :h, :h]
    out[..., :h, h:] = c[..., :h, M - h:]
    out[..., h:, :h] = c[..., M - h:, :h]
    out[..., h:, h:] = c[..., M - h:, M - h:]
    return out


def padded_values(u: Field) -> np.ndarray:
    return to_point_values(u, padded=True)


def from_padded(grid: Grid, values, real: bool | None = None) -> Field:
    return from_point_values(grid, values, real=real)


def lp_project(u: Field, j: int) -> Field:
    """Littlewood-Paley block ``Delta_j u`` (sharp frequency indicator)."""
    if j < -1:
        raise ValueError("block index must be >= -1")
    return Field(u.grid, np.where(u.grid.blocks == j, u.coeffs, 0.0), real=u.real)


def lp_partial_sum(u: Field, j: int) -> Field:
    """``S_j u``: sum of the blocks with index strictly below ``j``."""
    b = u.grid.blocks
    return Field(u.grid, np.where((b < j) & (b >= -1), u.coeffs, 0.0), real=u.real)


def sobolev_norm(u: Field, beta: float) -> float:
    w = (1.0 + u.grid.ksq) ** (0.5 * beta)
    return float(np.linalg.norm(w * u.coeffs))


def lq_norm(u: Field, q: float) -> float:
    """``L^q`` norm; Parseval for q=2, padded-grid quadrature otherwise."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if q == 2:
        return u.norm()
    vals = np.abs(to_point_values(u, padded=True))
    if np.isinf(q):
        return float(vals.max())
    M = u.grid.padded_size
    return float(((TWO_PI / M) ** 2 * np.sum(vals**q)) ** (1.0 / q))


def besov_sup_norm(u: Field, beta: float) -> float:
    """Block-sup proxy for the Holder norm: ``max_j 2^(j beta) ||Delta_j u||_inf``."""
    best = 0.0
    for j in range(-1, u.grid.jmax + 1):
        blk = lp_project(u, j)
        if not blk.coeffs.any():
            continue
        best = max(best, 2.0 ** (j * beta) * lq_norm(blk, np.inf))
    return best


def laplacian_apply(u: Field) -> Field:
    return Field(u.grid, -u.grid.ksq * u.coeffs, real=u.real)


def inverse_laplacian(u: Field) -> Field:
    """Mean-zero inverse of the Laplacian (zero mode mapped to 0)."""
    ksq = u.grid.ksq
    inv = np.zeros(ksq.shape)
    np.divide(-1.0, ksq, out=inv, where=ksq > 0)
    return Field(u.grid, inv * u.coeffs, real=u.real)


def dealiased_product(u: Field, v: Field) -> Field:
    """Pointwise product on the padded grid, truncated back to ``N x N``.

    Equals the exact coefficient convolution restricted to the active modes.
    """
    if u.grid != v.grid:
        raise ValueError(f"grid mismatch: N={u.grid.N} vs N={v.grid.N}")
    prod = padded_values(u) * padded_values(v)
    return from_point_values(u.grid, prod, real=u.real and v.real)


# -- real packing ----------------------------------------------------------
# Real fields are isometric to R^((N-1)^2) through the basis
# {phi_0, sqrt2 Re phi_n, sqrt2 Im phi_n : n in half lattice}.

SQRT2 = np.sqrt(2.0)


def pack_real(u: Field) -> np.ndarray:
    if not u.real:
        raise ValueError("pack_real needs a real field")
    return pack_coeffs(u.grid, u.coeffs)


def pack_coeffs(grid: Grid, c: np.ndarray) -> np.ndarray:
    """Pack conjugate-symmetric coefficient arrays (last two axes) to real vectors."""
    i1, i2 = grid._half
    h = c[..., i1, i2]
    return np.concatenate([c[..., 0, 0].real[..., None], SQRT2 * h.real, SQRT2 * h.imag], axis=-1)


def unpack_coeffs(grid: Grid, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    i1, i2 = grid._half
    m = i1.size
    c = np.zeros(x.shape[:-1] + (grid.N, grid.N), dtype=np.complex128)
    h = (x[..., 1:1 + m] + 1j * x[..., 1 + m:]) / SQRT2
    c[..., 0, 0] = x[..., 0]
    c[..., i1, i2] = h
    c[..., (-i1) % grid.N, (-i2) % grid.N] = np.conj(h)
    return c


def unpack_real(grid: Grid, x: np.ndarray) -> Field:
    return Field(grid, unpack_coeffs(grid, x), real=True)


def random_field(grid: Grid, rng: np.random.Generator, real: bool = True, decay: float = 0.0) -> Field:
    """Gaussian coefficients with weight ``(1+|n|^2)^(-decay/2)``."""
    w = (1.0 + grid.ksq) ** (-0.5 * decay)
    c = rng.standard_normal((grid.N, grid.N)) + 1j * rng.standard_normal((grid.N, grid.N))
    f = Field(grid, w * c, real=False)
    return f.real_part if real else f
