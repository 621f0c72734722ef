import math

import numpy as np
import pytest
import scipy.linalg as sla

from anderson_torus.anderson import (
    Hamiltonian,
    active_modes,
    dense_matrix,
    eigensolve,
    positivity_shift,
)
from anderson_torus.dispersive import (
    StrichartzSample,
    block_datum,
    datum_rng,
    duhamel_residual,
    fit_loss,
    schrodinger_prop,
    sharpened_prop,
    strichartz_exponent_fit,
    strichartz_norm,
    wave_energy_linear,
    wave_prop,
    wave_sinc,
)
from anderson_torus.exceptions import ConvergenceError
from anderson_torus.noise import build_enhanced, sample_white_noise, zero_enhanced
from anderson_torus.paracalc import ParacontrolledMaps
from anderson_torus.spectral import TWO_PI, Field, Grid, lq_norm, random_field


@pytest.fixture(scope="module")
def spec16(hamiltonian16):
    return eigensolve(hamiltonian16)


@pytest.fixture(scope="module")
def positive16(hamiltonian16):
    return eigensolve(hamiltonian16.with_shift(positivity_shift(hamiltonian16)))


def test_schrodinger_identity_and_free_modes():
    g = Grid(16)
    spec = eigensolve(Hamiltonian.free(g))
    u = Field.mode(g, (2, 1))
    np.testing.assert_allclose(schrodinger_prop(spec, u, 0.0).coeffs, u.coeffs, atol=1e-12)
    t = 0.37
    np.testing.assert_allclose(schrodinger_prop(spec, u, t).coeffs, (np.exp(5j * t) * u).coeffs, atol=1e-12)


def test_schrodinger_matches_dense_exponential():
    g = Grid(8)
    H = Hamiltonian.from_enhanced(build_enhanced(sample_white_noise(g, 5), 2.0 / 8))
    spec = eigensolve(H)
    k1, k2 = active_modes(g)
    sel = (k1 % g.N, k2 % g.N)
    u = random_field(g, np.random.default_rng(2), real=False)
    for t in (0.1, 1.0, 3.0):
        ref = sla.expm(1j * t * dense_matrix(H)) @ u.coeffs[sel]
        np.testing.assert_allclose(schrodinger_prop(spec, u, t).coeffs[sel], ref, atol=1e-8 * u.norm())
        # the Chebyshev route agrees with the eigenbasis
        np.testing.assert_allclose(schrodinger_prop(H, u, t).coeffs[sel], ref, atol=1e-8 * u.norm())


def test_unitarity_and_group_law(spec16, rng):
    u = random_field(spec16.grid, rng, real=False)
    s, t = 0.3, 0.55
    ut = schrodinger_prop(spec16, u, t)
    assert ut.norm() == pytest.approx(u.norm(), rel=1e-10)
    lhs = schrodinger_prop(spec16, u, s + t)
    rhs = schrodinger_prop(spec16, ut, s)
    assert (lhs - rhs).norm() <= 1e-10 * u.norm()


def test_sharpened_group(rng):
    g = Grid(32)
    enh = build_enhanced(sample_white_noise(g, 3), 2.0 / 32)
    maps = ParacontrolledMaps(enh, s=1.0 / 16)
    spec = eigensolve(Hamiltonian.from_enhanced(enh))
    u = random_field(g, rng, decay=2.0)
    u = u / u.norm()
    np.testing.assert_allclose(sharpened_prop(maps, spec, u, 0.0).coeffs, u.coeffs, atol=1e-9)
    lhs = sharpened_prop(maps, spec, u, 0.5)
    rhs = sharpened_prop(maps, spec, sharpened_prop(maps, spec, u, 0.2), 0.3)
    assert (lhs - rhs).norm() <= 1e-8

    free = eigensolve(Hamiltonian.free(g))
    zmaps = ParacontrolledMaps(zero_enhanced(g), s=1.0 / 16)
    np.testing.assert_allclose(sharpened_prop(zmaps, free, u, 0.4).coeffs,
                               schrodinger_prop(free, u, 0.4).coeffs, atol=1e-12)


def test_wave_sinc_series_branch():
    lam = np.array([0.0, 1e-10, 1e-8 * 1.0001, 4.0])
    t = 0.7
    got = wave_sinc(t, lam)
    assert got[0] == t
    assert got[1] == pytest.approx(math.sin(t * 1e-5) / 1e-5, rel=1e-14)
    assert got[2] == pytest.approx(math.sin(t * math.sqrt(lam[2])) / math.sqrt(lam[2]), rel=1e-12)
    assert got[3] == pytest.approx(math.sin(1.4) / 2.0)


def test_wave_prop_basics(positive16, rng):
    g = positive16.grid
    z = Field.zeros(g)
    u0 = random_field(g, rng)
    np.testing.assert_allclose(wave_prop(positive16, u0, z, 0.0).coeffs, u0.coeffs, atol=1e-12)
    e = positive16.eigenvector(3)
    lam = positive16.eigenvalues[3]
    np.testing.assert_allclose(wave_prop(positive16, e, z, 0.8).coeffs,
                               (math.cos(0.8 * math.sqrt(lam)) * e).coeffs, atol=1e-12)


def test_wave_energy_and_time_reversal(positive16, rng):
    g = positive16.grid
    u0, u1 = random_field(g, rng), random_field(g, rng)
    e0 = wave_energy_linear(positive16, u0, u1)
    for t in np.linspace(0.1, 1.0, 5):
        u, v = wave_prop(positive16, u0, u1, t, velocity=True)
        assert wave_energy_linear(positive16, u, v) == pytest.approx(e0, rel=1e-8)
    u, v = wave_prop(positive16, u0, u1, 0.6, velocity=True)
    b0, b1 = wave_prop(positive16, u, v, -0.6, velocity=True)
    assert (b0 - u0).norm() <= 1e-8 * u0.norm() and (b1 - u1).norm() <= 1e-8 * u1.norm()


def test_wave_chebyshev_matches_eigenbasis(rng):
    g = Grid(16)
    H0 = Hamiltonian.from_enhanced(build_enhanced(sample_white_noise(g, 9), 2.0 / 16))
    H = H0.with_shift(positivity_shift(H0))
    spec = eigensolve(H)
    u0, u1 = random_field(g, rng), random_field(g, rng)
    a, av = wave_prop(spec, u0, u1, 0.9, velocity=True)
    b, bv = wave_prop(H, u0, u1, 0.9, velocity=True)
    assert (a - b).norm() <= 1e-9 * u0.norm()
    assert (av - bv).norm() <= 1e-8 * (u0.norm() + u1.norm()) * 10


def test_duhamel_residual():
    g = Grid(16)
    u = random_field(g, np.random.default_rng(4), decay=2.0)
    free = eigensolve(Hamiltonian.free(g))
    zmaps = ParacontrolledMaps(zero_enhanced(g), s=1.0 / 16)
    assert duhamel_residual(zmaps, free, u, 0.2) <= 1e-12

    g = Grid(32)
    enh = build_enhanced(sample_white_noise(g, 3), 2.0 / 32)
    maps = ParacontrolledMaps(enh, s=1.0 / 16)
    spec = eigensolve(Hamiltonian.from_enhanced(enh))
    u = random_field(g, np.random.default_rng(5), decay=2.0)
    u = u / u.norm()
    r64 = duhamel_residual(maps, spec, u, 0.1, nodes=64)
    r128 = duhamel_residual(maps, spec, u, 0.1, nodes=128)
    assert r64 < 1e-4
    assert r128 < r64 / 4  # Simpson converges at fourth order once resolved
    with pytest.raises(ValueError):
        duhamel_residual(maps, spec, u, 0.1, nodes=63)


def test_duhamel_residual_small_time_scaling():
    g = Grid(16)
    enh = build_enhanced(sample_white_noise(g, 3), 2.0 / 16)
    maps = ParacontrolledMaps(enh, s=1.0 / 16)
    spec = eigensolve(Hamiltonian.from_enhanced(enh))
    u = random_field(g, np.random.default_rng(6), decay=2.0)
    r = [duhamel_residual(maps, spec, u, t, nodes=4) for t in (0.02, 0.01)]
    # a fixed number of Simpson intervals leaves a residual of order t^5
    assert r[0] / r[1] > 8


def test_strichartz_norm_of_eigenfunction(spec16):
    e = spec16.eigenvector(2)
    for p, q, T in ((4, 4, 1.0), (2, 6, 0.5)):
        expected = T ** (1 / p) * lq_norm(e, q)
        assert strichartz_norm(spec16, e, p, q, T) == pytest.approx(expected, rel=1e-10)


def test_strichartz_norm_of_constant():
    g = Grid(8)
    spec = eigensolve(Hamiltonian.free(g))
    u = Field.constant(g, 1.0 / TWO_PI)  # unit L2 norm
    # ||u||_q = (2 pi)^(2/q) / (2 pi)
    assert strichartz_norm(spec, u, 4, 4, 1.0) == pytest.approx(TWO_PI ** 0.5 / TWO_PI, rel=1e-12)


def test_strichartz_refinement(spec16, rng):
    u = block_datum(spec16.grid, 2, rng)
    info = strichartz_norm(spec16, u, 4, 4, 1.0, return_info=True)
    assert info.nodes >= 256
    (n1, v1), (n2, v2) = info.history[-2:]
    assert abs(v2 - v1) <= 1e-3 * v2
    with pytest.raises(ValueError):
        strichartz_norm(spec16, u, 0.5, 4)
    with pytest.raises(ValueError):
        strichartz_norm(spec16, u, 4, 4, nodes=3)
    with pytest.raises(ConvergenceError):
        strichartz_norm(spec16, block_datum(spec16.grid, 3, rng), 4, 4, 50.0, nodes=2, rtol=1e-12, max_nodes=8)


def test_strichartz_chebyshev_route_agrees(hamiltonian16, spec16, rng):
    u = block_datum(spec16.grid, 2, rng)
    a = strichartz_norm(spec16, u, 4, 4, 1.0)
    b = strichartz_norm(hamiltonian16, u, 4, 4, 1.0)
    assert a == pytest.approx(b, rel=2e-3)


def test_block_data():
    g = Grid(32)
    u = block_datum(g, 3, datum_rng(11, 3))
    assert u.norm() == pytest.approx(1.0)
    assert np.all(u.coeffs[g.blocks != 3] == 0)
    np.testing.assert_array_equal(u.coeffs, block_datum(g, 3, datum_rng(11, 3)).coeffs)
    with pytest.raises(ValueError):
        block_datum(Grid(4), 3, datum_rng(0, 3))


def test_sample_invariants():
    s = StrichartzSample(p=4, q=4, j=2, lhs=1.0, rhs_norms={0.0: 1.0})
    assert s.is_strichartz_pair
    assert not StrichartzSample(p=3, q=4, j=2, lhs=1.0, rhs_norms={}).is_strichartz_pair
    with pytest.raises(ValueError):
        StrichartzSample(p=4, q=4, j=2, lhs=-1.0, rhs_norms={})


def test_fit_loss_recovers_a_power_law():
    js = np.repeat(np.arange(2, 7), 3)
    lhs = 3.0 * 2.0 ** (0.3 * js)
    fit = fit_loss(js, lhs)
    assert fit.slope == pytest.approx(0.3, abs=1e-12)
    assert fit.ci[0] <= 0.3 <= fit.ci[1] + 1e-12
    with pytest.raises(ValueError):
        fit_loss([1, 1, 2], [1, 2, 3])


def test_exponent_fit_zero_noise():
    g = Grid(32)
    spec = eigensolve(Hamiltonian.free(g))
    fit, samples = strichartz_exponent_fit(lambda seed: spec, 4, 4, [1, 2, 3], seeds=[0, 1])
    assert fit.slope <= 0.25 + 0.1
    assert len(samples) == 6
    # the block -1 control does not depend on j
    per_seed = {s.seed: s.control_lhs for s in samples}
    assert all(s.control_lhs == per_seed[s.seed] for s in samples)
    with pytest.raises(ValueError):
        strichartz_exponent_fit(lambda seed: spec, 4, 4, [1, 2], seeds=[0])
