"""Local solvers for the cubic NLS ``i u_t + H u = -|u|^2 u`` and wave ``u_tt + H u = -u^3``.

Both solvers keep the state as coefficients in the eigenbasis of H, so the
linear flow is an exact diagonal rotation. The cubic term is evaluated in
point values on the padded grid, truncated back to the grid and projected
onto the eigenbasis; the mass lost in that round trip is monitored each step.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .anderson import Spectrum
from .exceptions import BlowupError, ContractionError, TailEnergyError
from .spectral import TWO_PI, Field, _pad, _truncate, sobolev_norm

logger = logging.getLogger(__name__)

LOSS_TOL = 1e-6


@dataclass(frozen=True)
class EvolutionState:
    t: float
    u: Field
    mass: float
    energy: float
    h_sigma_norm: float
    linf_norm: float
    v: Field | None = None


@dataclass
class Trajectory:
    states: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    max_loss: float = 0.0
    steps: int = 0

    @property
    def final(self) -> EvolutionState:
        return self.states[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.states])

    def drift(self, name: str) -> float:
        """``max_t |x(t) - x(0)| / t_final``."""
        x = self.column(name)
        span = self.states[-1].t - self.states[0].t
        return float(np.abs(x - x[0]).max() / span) if span > 0 else 0.0


class _EigenIO:
    """Moves between eigen-coefficients, grid coefficients and padded point values."""

    def __init__(self, spec: Spectrum, loss_tol: float):
        self.spec = spec
        self.grid = spec.grid
        self.M = self.grid.padded_size
        self.loss_tol = loss_tol

    def to_values(self, a: np.ndarray) -> np.ndarray:
        return self.field_values(self.spec.synthesize(a))

    def field_values(self, u: Field) -> np.ndarray:
        vals = (self.M * self.M / TWO_PI) * sfft.ifft2(_pad(u.coeffs, self.M))
        return vals.real if u.real else vals

    def from_values(self, vals: np.ndarray, reference_mass: float | None = None):
        """Project padded point values back; returns (coefficients, relative loss)."""
        M = self.M
        c = _truncate((TWO_PI / (M * M)) * sfft.fft2(vals), self.grid.N)
        c[~self.grid.active] = 0.0
        real = np.isrealobj(vals)
        u = Field(self.grid, c, real=real)
        a = self.spec.project(u)
        if real:
            a = a.real
        full = (TWO_PI / M) ** 2 * float(np.sum(np.abs(vals) ** 2)) if reference_mass is None else reference_mass
        kept = float(np.vdot(a, a).real)
        loss = max(0.0, 1.0 - kept / full) if full > 0 else 0.0
        return a, loss

    def field(self, a: np.ndarray) -> Field:
        return self.spec.synthesize(a)


def _quiet_overflow(fn):
    """Silence overflow warnings; non-finite states are reported as :class:`BlowupError`."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args, **kwargs)
    return wrapper


def _check_finite(a, last: EvolutionState | None, t: float):
    if not np.all(np.isfinite(a)):
        raise BlowupError(f"non-finite state at t={t:.6g}", last_state=last)


# -- NLS ------------------------------------------------------------------------

def nls_energy(spec: Spectrum, u: Field, focusing: bool = False, parts: bool = False):
    """``1/2 <u, H u> + 1/4 int |u|^4`` with the unshifted H.

    ``parts=True`` returns ``(energy, kinetic, quartic, shift_term)`` where
    ``shift_term = shift/2 * ||u||^2`` is the amount a shifted operator would add.
    """
    a = spec.coefficients(u)
    w = np.abs(a) ** 2
    kinetic = 0.5 * float(np.sum(spec.unshifted * w))
    sign = -1.0 if focusing else 1.0
    M = u.grid.padded_size
    vals = (M * M / TWO_PI) * sfft.ifft2(_pad(u.coeffs, M))
    quartic = sign * 0.25 * (TWO_PI / M) ** 2 * float(np.sum(np.abs(vals) ** 4))
    energy = kinetic + quartic
    if parts:
        return energy, kinetic, quartic, 0.5 * spec.shift * float(np.sum(w))
    return energy


def _nls_state(io: _EigenIO, a, t, sigma, focusing) -> EvolutionState:
    u = io.field(a)
    vals = io.field_values(u)
    M = io.M
    kinetic = 0.5 * float(np.sum(io.spec.unshifted * np.abs(a) ** 2))
    quartic = (-1.0 if focusing else 1.0) * 0.25 * (TWO_PI / M) ** 2 * float(np.sum(np.abs(vals) ** 4))
    return EvolutionState(t=float(t), u=u, mass=float(np.vdot(a, a).real), energy=kinetic + quartic,
                          h_sigma_norm=sobolev_norm(u, sigma), linf_norm=float(np.abs(vals).max()))


@_quiet_overflow
def nls_solve(spec: Spectrum, u0: Field, T: float, dt: float, *, nonlinear: bool = True,
              focusing: bool = False, sigma: float = 1.0, record_every: int = 1,
              checkpoint_stride: int | None = None, loss_tol: float = LOSS_TOL) -> Trajectory:
    """Strang splitting: half nonlinear phase, exact linear step, half nonlinear phase.

    The nonlinear substep ``u <- u exp(+-i dt/2 |u|^2)`` rotates point values
    on the padded grid (``+`` for the defocusing sign). Raises
    :class:`BlowupError` on non-finite values and :class:`TailEnergyError`
    when one substep loses more than ``loss_tol`` of the mass.
    """
    if dt <= 0 or T < 0:
        raise ValueError("dt must be positive and T nonnegative")
    io = _EigenIO(spec, loss_tol)
    a = spec.coefficients(u0).astype(np.complex128)
    n_steps = int(round(T / dt))
    if not math.isclose(n_steps * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    rot = np.exp(1j * dt * spec.unshifted)
    sign = -1.0 if focusing else 1.0
    traj = Trajectory()
    state = _nls_state(io, a, 0.0, sigma, focusing)
    traj.states.append(state)
    if checkpoint_stride:
        traj.checkpoints.append((0.0, state.u))

    def kick(a, tau):
        vals = io.to_values(a)
        mass = (TWO_PI / io.M) ** 2 * float(np.sum(np.abs(vals) ** 2))
        vals = vals * np.exp(sign * 1j * tau * np.abs(vals) ** 2)
        a, loss = io.from_values(vals, reference_mass=mass)
        traj.max_loss = max(traj.max_loss, loss)
        if loss > loss_tol:
            raise TailEnergyError(f"re-projection lost {loss:.3e} of the mass at t={t:.6g} "
                                  f"(tolerance {loss_tol:.1e})", loss)
        return a

    # the closing half kick of one step and the opening half kick of the next
    # are fused into a single full kick unless the state is recorded in between
    t = 0.0
    if nonlinear and n_steps:
        a = kick(a, 0.5 * dt)
    for step in range(1, n_steps + 1):
        a = rot * a
        t = step * dt
        synced = step % record_every == 0 or step == n_steps or (
            checkpoint_stride and step % checkpoint_stride == 0)
        if nonlinear:
            a = kick(a, 0.5 * dt if synced else dt)
        _check_finite(a, state, t)
        if synced:
            if step % record_every == 0 or step == n_steps:
                state = _nls_state(io, a, t, sigma, focusing)
                traj.states.append(state)
            if checkpoint_stride and step % checkpoint_stride == 0:
                traj.checkpoints.append((t, io.field(a)))
            if nonlinear and step < n_steps:
                a = kick(a, 0.5 * dt)
    traj.steps = n_steps
    return traj


# -- wave -----------------------------------------------------------------------

def _positive_eigenvalues(spec: Spectrum) -> np.ndarray:
    lam = spec.eigenvalues
    if lam.min() <= 0:
        raise ValueError("the wave solver needs a positive operator; apply the positivity shift")
    return lam


def wave_energy(spec: Spectrum, state_or_u, v: Field | None = None, nonlinear: bool = True) -> float:
    """``1/2 ||v||^2 + 1/2 <u, H u> + 1/4 int u^4`` (shifted, positive H)."""
    if isinstance(state_or_u, EvolutionState):
        u, v = state_or_u.u, state_or_u.v
    else:
        u = state_or_u
    a = spec.coefficients(u).real
    b = spec.coefficients(v).real
    e = 0.5 * float(np.sum(b**2)) + 0.5 * float(np.sum(spec.eigenvalues * a**2))
    if nonlinear:
        M = u.grid.padded_size
        vals = ((M * M / TWO_PI) * sfft.ifft2(_pad(u.coeffs, M))).real
        e += 0.25 * (TWO_PI / M) ** 2 * float(np.sum(vals**4))
    return e


def _wave_state(io: _EigenIO, a, b, t, sigma, nonlinear) -> EvolutionState:
    lam = io.spec.eigenvalues
    u = io.field(a)
    vals = io.field_values(u)
    e = 0.5 * float(np.sum(b**2)) + 0.5 * float(np.sum(lam * a**2))
    if nonlinear:
        e += 0.25 * (TWO_PI / io.M) ** 2 * float(np.sum(vals**4))
    return EvolutionState(t=float(t), u=u, v=io.field(b), mass=float(np.sum(a**2)), energy=e,
                          h_sigma_norm=sobolev_norm(u, sigma), linf_norm=float(np.abs(vals).max()))


@_quiet_overflow
def wave_solve(spec: Spectrum, u0: Field, u1: Field, T: float, dt: float, *, nonlinear: bool = True,
               sigma: float = 1.0, record_every: int = 1, checkpoint_stride: int | None = None,
               loss_tol: float = LOSS_TOL) -> Trajectory:
    """Trigonometric integrator (impulse form): half kick, exact linear flow, half kick.

    With ``g = -u^3`` this is the symmetric Deuflhard scheme
    ``u+ = cos(hW) u + W^-1 sin(hW) v + h^2/2 sinc(hW) g(u)``,
    which is second order and reduces to the exact linear propagator when
    ``nonlinear`` is False.
    """
    if dt <= 0 or T < 0:
        raise ValueError("dt must be positive and T nonnegative")
    lam = _positive_eigenvalues(spec)
    io = _EigenIO(spec, loss_tol)
    a = spec.coefficients(u0).real.copy()
    b = spec.coefficients(u1).real.copy()
    n_steps = int(round(T / dt))
    if not math.isclose(n_steps * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    w = np.sqrt(lam)
    cs, sn = np.cos(dt * w), np.sin(dt * w)
    traj = Trajectory()
    state = _wave_state(io, a, b, 0.0, sigma, nonlinear)
    traj.states.append(state)
    if checkpoint_stride:
        traj.checkpoints.append((0.0, state.u))

    def force(a):
        vals = io.to_values(a)
        g = -(vals**3)
        ref = (TWO_PI / io.M) ** 2 * float(np.sum(g**2))
        return io.from_values(g, reference_mass=ref)

    g, _ = force(a) if nonlinear else (None, 0.0)
    for step in range(1, n_steps + 1):
        if nonlinear:
            b = b + 0.5 * dt * g
        a, b = cs * a + (sn / w) * b, -w * sn * a + cs * b
        if nonlinear:
            g, loss = force(a)
            traj.max_loss = max(traj.max_loss, loss)
            b = b + 0.5 * dt * g
        t = step * dt
        _check_finite(a, state, t)
        _check_finite(b, state, t)
        if step % record_every == 0 or step == n_steps:
            state = _wave_state(io, a, b, t, sigma, nonlinear)
            traj.states.append(state)
        if checkpoint_stride and step % checkpoint_stride == 0:
            traj.checkpoints.append((t, io.field(a)))
    traj.steps = n_steps
    return traj


def self_convergence_order(solve, dt: float, levels: int = 3) -> tuple[float, list]:
    """Observed order from final states at ``dt, dt/2, dt/4, ...``.

    ``solve(dt)`` returns the final :class:`Field`. Uses successive
    differences, so no reference solution is needed:
    ``p = log2(|u_h - u_{h/2}| / |u_{h/2} - u_{h/4}|)``.
    """
    finals = [solve(dt / 2**k) for k in range(levels)]
    diffs = [(finals[k] - finals[k + 1]).norm() for k in range(levels - 1)]
    orders = [math.log2(diffs[k] / diffs[k + 1]) for k in range(len(diffs) - 1)]
    return float(orders[-1]), diffs


def reference_errors(solve, dt: float, levels: int = 2, ref_factor: int = 8) -> tuple[float, list]:
    """Errors at ``dt / 2^k`` against a ``dt / ref_factor`` reference; order from the first two."""
    ref = solve(dt / ref_factor)
    errs = [(solve(dt / 2**k) - ref).norm() for k in range(levels)]
    return float(math.log2(errs[0] / errs[1])), errs


# -- local well-posedness probe -------------------------------------------------

@dataclass
class ContractionProbe:
    C_tilde: float
    R: float
    T: float
    lipschitz: float
    radius_used: float
    T_checked: float
    linear_constant: float
    nonlinear_constant: float


def _phi12(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2`` with series near 0."""
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    e = np.exp(zs)
    p1 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24, (e - 1) / zs)
    p2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120, (e - 1 - zs) / zs**2)
    return p1, p2


def _duhamel(spec: Spectrum, io: _EigenIO, times: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Eigen-coefficients of ``i int_0^t exp(i(t-s)H) |u|^2 u(s) ds`` at every node.

    The nonlinearity is interpolated linearly between nodes and the
    oscillatory factor is integrated exactly (exponential quadrature), so
    large ``h * lambda`` does not spoil the rule.
    """
    lam = spec.unshifted
    F = np.empty_like(A)
    for k in range(times.size):
        vals = io.to_values(A[k])
        F[k], _ = io.from_values(np.abs(vals) ** 2 * vals)
    out = np.zeros_like(A)
    for k in range(1, times.size):
        h = times[k] - times[k - 1]
        p1, p2 = _phi12(1j * h * lam)
        # int_0^h e^{i(h - tau) lam} (linear interpolant of F) dtau
        step = h * ((p1 - p2) * F[k - 1] + p2 * F[k])
        out[k] = np.exp(1j * h * lam) * out[k - 1] + step
    return 1j * out


def _xt_norm(spec: Spectrum, A: np.ndarray, sigma: float) -> float:
    """``sup_t ||u(t)||_{H^sigma}`` over the time nodes."""
    return max(sobolev_norm(spec.synthesize(a), sigma) for a in A)


def lwp_contraction_probe(spec: Spectrum, u0: Field, sigma: float, p: float = 4.0, *,
                          n_samples: int = 8, T_ref: float = 0.1, nodes: int = 129,
                          rng: np.random.Generator | None = None) -> ContractionProbe:
    """Measure the Duhamel constant, derive ``(R, T)`` and test Picard contraction.

    ``C~`` is the largest of: 1, the growth ``||exp(itH)w||_X / ||w||_{H^sigma}``
    and ``||D(w)||_X / (T_ref^(1-2/p) ||w||_X^3)`` over random data in the
    eigenbasis span, with ``D`` the cubic Duhamel term and ``X = C([0, T_ref], H^sigma)``.
    Then ``R = 2 C~ ||u0||_{H^sigma}``, ``T = (1 / (3 R^2 C~))^(p/(p-2))``, and
    Picard iterations on ``[0, min(T, T_ref)]`` give the observed Lipschitz factor.
    """
    if sigma <= 0.5:
        raise ValueError("the probe requires sigma > 1/2")
    if p <= 2:
        raise ValueError("p must exceed 2")
    rng = rng if rng is not None else np.random.default_rng(0)
    io = _EigenIO(spec, LOSS_TOL)
    lam = spec.unshifted
    grid = spec.grid

    times = np.linspace(0.0, T_ref, nodes)
    lin_c, nl_c = 1.0, 0.0
    probes = [spec.project(u0)] if u0.norm() > 0 else []
    for _ in range(n_samples):
        probes.append(rng.standard_normal(spec.K) + 1j * rng.standard_normal(spec.K))
    for a0 in probes:
        a0 = np.asarray(a0, dtype=np.complex128)
        a0 = a0 / sobolev_norm(spec.synthesize(a0), sigma)
        A = np.exp(1j * np.outer(times, lam)) * a0
        x = _xt_norm(spec, A, sigma)
        lin_c = max(lin_c, x)
        D = _duhamel(spec, io, times, A)
        nl_c = max(nl_c, _xt_norm(spec, D, sigma) / (T_ref ** (1 - 2 / p) * x**3))
    C = max(lin_c, nl_c, 1.0)
    norm0 = sobolev_norm(u0, sigma)
    if norm0 == 0:
        return ContractionProbe(C_tilde=C, R=0.0, T=math.inf, lipschitz=0.0, radius_used=0.0, T_checked=0.0,
                                linear_constant=lin_c, nonlinear_constant=nl_c)
    R = 2.0 * C * norm0
    T = (1.0 / (3.0 * R**2 * C)) ** (p / (p - 2))

    T_check = min(T, T_ref)
    times = np.linspace(0.0, T_check, nodes)
    a0 = spec.coefficients(u0).astype(np.complex128)
    lin = np.exp(1j * np.outer(times, lam)) * a0
    iterates = [lin]
    for _ in range(2):
        iterates.append(lin + _duhamel(spec, io, times, iterates[-1]))
    radius = max(_xt_norm(spec, it, sigma) for it in iterates)
    # Lipschitz factor of the Picard map between the first iterate and
    # perturbations of it that stay inside the ball of radius R
    lip = 0.0
    for _ in range(2):
        d = rng.standard_normal(spec.K) + 1j * rng.standard_normal(spec.K)
        d = 0.25 * R * d / sobolev_norm(spec.synthesize(d), sigma)
        w1, w2 = iterates[1], iterates[1] + np.exp(1j * np.outer(times, lam)) * d
        gap = _xt_norm(spec, w2 - w1, sigma)
        img = _xt_norm(spec, _duhamel(spec, io, times, w2) - _duhamel(spec, io, times, w1), sigma)
        lip = max(lip, img / gap)
    if lip >= 1.0 or radius > R * (1 + 1e-9):
        raise ContractionError(f"Picard map not contracting on [0, {T_check:.3g}]: factor {lip:.3g}, "
                               f"radius {radius:.3g} vs R={R:.3g}", lip)
    return ContractionProbe(C_tilde=C, R=R, T=T, lipschitz=lip, radius_used=radius, T_checked=T_check,
                            linear_constant=lin_c, nonlinear_constant=nl_c)
