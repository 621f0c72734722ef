import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from anderson_torus.anderson import Hamiltonian, eigensolve, positivity_shift
from anderson_torus.dispersive import schrodinger_prop, wave_prop
from anderson_torus.exceptions import BlowupError, ContractionError, TailEnergyError
from anderson_torus.noise import build_enhanced, sample_white_noise
from anderson_torus.pdesolve import (
    lwp_contraction_probe,
    nls_energy,
    nls_solve,
    reference_errors,
    self_convergence_order,
    wave_energy,
    wave_solve,
)
from anderson_torus.spectral import Field, Grid, lq_norm, random_field, sobolev_norm, to_point_values


def _smooth(g, rng, amp=0.5, real=False):
    u = random_field(g, rng, real=real, decay=3.0)
    return amp * u / u.norm()


@pytest.fixture(scope="module")
def spec16():
    g = Grid(16)
    return eigensolve(Hamiltonian.from_enhanced(build_enhanced(sample_white_noise(g, 21), 2.0 / 16)))


@pytest.fixture(scope="module")
def positive16(spec16):
    H = spec16.hamiltonian
    return eigensolve(H.with_shift(positivity_shift(H)))


def test_nls_energy_examples(spec16, rng):
    g = spec16.grid
    assert nls_energy(spec16, Field.zeros(g)) == 0.0
    e = spec16.eigenvector(0)
    expected = 0.5 * spec16.unshifted[0] + 0.25 * lq_norm(e, 4) ** 4
    assert nls_energy(spec16, e) == pytest.approx(expected, rel=1e-12)
    u = _smooth(g, rng)
    assert nls_energy(spec16, np.exp(0.7j) * u) == pytest.approx(nls_energy(spec16, u), rel=1e-12)
    energy, kinetic, quartic, shift_term = nls_energy(spec16, u, parts=True)
    assert energy == pytest.approx(kinetic + quartic) and shift_term == 0.0


def test_nls_constant_data_is_exact():
    g = Grid(16)
    spec = eigensolve(Hamiltonian.free(g))
    c = 0.6 - 0.3j
    traj = nls_solve(spec, Field.constant(g, c), T=1.0, dt=0.01)
    for s in traj.states[::10]:
        exact = c * np.exp(1j * abs(c) ** 2 * s.t)
        np.testing.assert_allclose(to_point_values(s.u), exact, atol=1e-8)


def test_nls_linear_limit(spec16, rng):
    u0 = _smooth(spec16.grid, rng)
    traj = nls_solve(spec16, u0, T=0.5, dt=0.05, nonlinear=False)
    # the solver rotates by the unshifted spectrum; so does schrodinger_prop here
    ref = schrodinger_prop(spec16, u0, 0.5)
    assert (traj.final.u - ref).norm() <= 1e-10


def test_nls_conservation(spec16, rng):
    u0 = _smooth(spec16.grid, rng)
    traj = nls_solve(spec16, u0, T=1.0, dt=1e-3, record_every=50)
    assert traj.drift("mass") <= 1e-8
    assert traj.drift("energy") <= 1e-5
    assert traj.steps == 1000 and len(traj.states) == 21
    assert traj.max_loss <= 1e-6


def test_nls_gauge_invariance(spec16, rng):
    u0 = _smooth(spec16.grid, rng)
    a = nls_solve(spec16, u0, T=0.2, dt=0.01).final.u
    b = nls_solve(spec16, np.exp(1.1j) * u0, T=0.2, dt=0.01).final.u
    assert (b - np.exp(1.1j) * a).norm() <= 1e-10


def test_nls_second_order(spec16, rng):
    u0 = _smooth(spec16.grid, rng, amp=1.0)

    def solve(dt):
        return nls_solve(spec16, u0, T=0.5, dt=dt, record_every=10**9).final.u

    # dt = 0.05 is still pre-asymptotic for this datum; from 0.01 on the order is clean
    order, _ = reference_errors(solve, 0.01, levels=2, ref_factor=8)
    assert order == pytest.approx(2.0, abs=0.2)
    order, diffs = self_convergence_order(solve, 0.01, levels=3)
    assert order == pytest.approx(2.0, abs=0.2) and diffs[1] < diffs[0]


def test_nls_input_checks_and_failures(spec16, rng):
    u0 = _smooth(spec16.grid, rng)
    with pytest.raises(ValueError):
        nls_solve(spec16, u0, T=1.0, dt=0.0)
    with pytest.raises(ValueError):
        nls_solve(spec16, u0, T=1.0, dt=0.3)
    with pytest.raises(TailEnergyError):
        nls_solve(spec16, 50 * u0, T=0.1, dt=0.01)
    with pytest.raises((BlowupError, TailEnergyError)):
        nls_solve(spec16, 1e160 * u0, T=0.1, dt=0.01, loss_tol=np.inf)


def test_blowup_keeps_last_state(positive16, rng):
    u0 = _smooth(positive16.grid, rng, real=True, amp=1e80)
    with pytest.raises(BlowupError) as err:
        wave_solve(positive16, u0, Field.zeros(positive16.grid), T=1.0, dt=0.1, loss_tol=np.inf)
    assert err.value.last_state is not None and err.value.last_state.t == 0.0


def test_checkpoints(spec16, rng):
    u0 = _smooth(spec16.grid, rng)
    traj = nls_solve(spec16, u0, T=0.1, dt=0.01, checkpoint_stride=5, record_every=2)
    assert [round(t, 12) for t, _ in traj.checkpoints] == [0.0, 0.05, 0.1]
    # fusing half kicks between unrecorded steps changes the result only at
    # the level of the re-projection loss
    plain = nls_solve(spec16, u0, T=0.1, dt=0.01)
    assert (traj.final.u - plain.final.u).norm() <= 1e-9


def test_wave_linear_limit(positive16, rng):
    g = positive16.grid
    u0, u1 = _smooth(g, rng, real=True), _smooth(g, rng, real=True)
    traj = wave_solve(positive16, u0, u1, T=0.5, dt=0.05, nonlinear=False)
    ref_u, ref_v = wave_prop(positive16, u0, u1, 0.5, velocity=True)
    assert (traj.final.u - ref_u).norm() <= 1e-10
    assert (traj.final.v - ref_v).norm() <= 1e-10
    back = wave_solve(positive16, traj.final.u, -traj.final.v, T=0.5, dt=0.05, nonlinear=False)
    assert (back.final.u - u0).norm() <= 1e-10


def test_wave_constant_data_matches_ode():
    g = Grid(16)
    spec = eigensolve(Hamiltonian.free(g, shift=1.0))
    c0, c1 = 0.8, -0.2
    traj = wave_solve(spec, Field.constant(g, c0), Field.constant(g, c1), T=1.0, dt=1e-3, record_every=100)
    sol = solve_ivp(lambda t, y: [y[1], -y[0] - y[0] ** 3], (0, 1), [c0, c1], method="DOP853",
                    rtol=1e-13, atol=1e-13, dense_output=True)
    for s in traj.states:
        assert to_point_values(s.u)[0, 0] == pytest.approx(sol.sol(s.t)[0], abs=1e-6)


def test_wave_energy_and_order(positive16, rng):
    g = positive16.grid
    u0, u1 = _smooth(g, rng, real=True), _smooth(g, rng, real=True)
    traj = wave_solve(positive16, u0, u1, T=1.0, dt=1e-3, record_every=50)
    assert traj.drift("energy") <= 1e-4
    assert wave_energy(positive16, traj.final) == pytest.approx(traj.final.energy, rel=1e-12)

    def solve(dt):
        return wave_solve(positive16, u0, u1, T=0.5, dt=dt, record_every=10**9).final.u

    order, _ = self_convergence_order(solve, 0.05, levels=3)
    assert order == pytest.approx(2.0, abs=0.2)


def test_wave_needs_positive_operator(rng):
    g = Grid(8)
    spec = eigensolve(Hamiltonian(potential=Field.constant(g, -0.5)))
    with pytest.raises(ValueError):
        wave_solve(spec, _smooth(g, rng, real=True), Field.zeros(g), T=0.1, dt=0.01)


def test_contraction_probe_small_data(spec16, rng):
    g = spec16.grid
    zero = lwp_contraction_probe(spec16, Field.zeros(g), sigma=1.0)
    assert zero.T == math.inf and zero.lipschitz == 0.0
    u0 = _smooth(g, rng, amp=1.0)
    u0 = 1e-3 * u0 / u0.norm()
    probe = lwp_contraction_probe(spec16, u0, sigma=1.0)
    assert probe.lipschitz < 0.1
    assert probe.R == pytest.approx(2 * probe.C_tilde * sobolev_norm(u0, 1.0))
    assert probe.T == pytest.approx((1 / (3 * probe.R**2 * probe.C_tilde)) ** 2)
    with pytest.raises(ValueError):
        lwp_contraction_probe(spec16, u0, sigma=0.5)
    with pytest.raises(ValueError):
        lwp_contraction_probe(spec16, u0, sigma=1.0, p=2.0)


def test_contraction_probe_scaling(spec16, rng):
    g = spec16.grid
    u = _smooth(g, rng, amp=1.0)
    Ts = [lwp_contraction_probe(spec16, a * u, sigma=1.0, rng=np.random.default_rng(0)).T for a in (1e-3, 2e-3)]
    # T ~ ||u0||^(-2 p / (p - 2)); doubling the data divides T by 2^4 for p = 4
    assert math.log2(Ts[0] / Ts[1]) / 2 == pytest.approx(2.0, rel=0.3)


def test_contraction_failure_is_reported(spec16, rng, monkeypatch):
    # on the derived T the map always contracts, so the failure path is
    # exercised by inflating the Duhamel term after C~ has been measured
    import anderson_torus.pdesolve as pde

    real = pde._duhamel
    calls = {"n": 0}

    def inflated(*args):
        calls["n"] += 1
        out = real(*args)
        return out if calls["n"] <= 9 else 1e12 * out

    monkeypatch.setattr(pde, "_duhamel", inflated)
    u = _smooth(spec16.grid, rng, amp=1.0)
    with pytest.raises(ContractionError) as err:
        lwp_contraction_probe(spec16, 1e-2 * u, sigma=1.0)
    assert err.value.lipschitz >= 1.0 or "radius" in str(err.value)
