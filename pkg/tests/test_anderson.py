import math

import numpy as np
import pytest

from anderson_torus.anderson import (
    Hamiltonian,
    active_modes,
    apply_H,
    converged_cutoff,
    dense_matrix,
    eigenfunction_lq_norms,
    eigensolve,
    eigenvalue_sandwich,
    floor_ops,
    fractional_apply,
    ground_state_energy,
    laplacian_eigenvalues,
    lq_eigenfunction_slope,
    positivity_shift,
    projector_lq_norm,
    representation_residual,
    spectral_projector,
    weyl_counting,
    weyl_slope,
)
from anderson_torus.exceptions import SpectralRangeError, TailEnergyError
from anderson_torus.noise import build_enhanced, sample_white_noise
from anderson_torus.paracalc import ParacontrolledMaps
from anderson_torus.spectral import Field, Grid, from_point_values, random_field, sobolev_norm


def _lattice_count(lam, radius=40):
    return sum(1 for a in range(-radius, radius + 1) for b in range(-radius, radius + 1) if a * a + b * b <= lam)


@pytest.fixture(scope="module")
def spec16(hamiltonian16):
    return eigensolve(hamiltonian16)


def test_free_operator_on_modes():
    g = Grid(16)
    H = Hamiltonian.free(g, shift=0.5)
    u = Field.mode(g, (2, -3))
    np.testing.assert_allclose(apply_H(H, u).coeffs, (13.5 * u).coeffs, atol=1e-13)


def test_apply_matches_dense_matrix(hamiltonian16, rng):
    A = dense_matrix(hamiltonian16)
    np.testing.assert_allclose(A, A.conj().T, atol=1e-12)
    g = hamiltonian16.grid
    k1, k2 = active_modes(g)
    sel = (k1 % g.N, k2 % g.N)
    u = random_field(g, rng, real=False)
    np.testing.assert_allclose(apply_H(hamiltonian16, u).coeffs[sel], A @ u.coeffs[sel], atol=1e-11)


def test_dense_matrix_of_free_operator_is_diagonal():
    g = Grid(8)
    A = dense_matrix(Hamiltonian.free(g))
    k1, k2 = active_modes(g)
    np.testing.assert_allclose(A, np.diag(k1**2 + k2**2))
    with pytest.raises(ValueError):
        dense_matrix(Hamiltonian.free(Grid(64)))


def test_operator_is_symmetric(hamiltonian16, rng):
    g = hamiltonian16.grid
    u, v = random_field(g, rng), random_field(g, rng)
    lhs = apply_H(hamiltonian16, u).inner(v)
    rhs = u.inner(apply_H(hamiltonian16, v))
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


def test_free_spectrum():
    spec = eigensolve(Hamiltonian.free(Grid(16), shift=2.0), 5)
    np.testing.assert_allclose(spec.eigenvalues, [2, 3, 3, 3, 3], atol=1e-10)
    np.testing.assert_allclose(spec.unshifted, [0, 1, 1, 1, 1], atol=1e-10)


def test_constant_potential_shifts_the_spectrum():
    g = Grid(16)
    H = Hamiltonian(potential=Field.constant(g, -0.75))
    np.testing.assert_allclose(eigensolve(H, 6).eigenvalues, np.array([0, 1, 1, 1, 1, 2]) - 0.75, atol=1e-10)


@pytest.mark.parametrize("method", ["lanczos", "lobpcg"])
def test_iterative_solvers_match_dense(hamiltonian16, method):
    K = 20 if method == "lanczos" else 6
    ref = eigensolve(hamiltonian16, K, method="dense")
    got = eigensolve(hamiltonian16, K, method=method)
    np.testing.assert_allclose(got.eigenvalues, ref.eigenvalues, rtol=1e-8, atol=1e-8)
    overlap = np.abs(got.vectors.T @ ref.vectors)
    # nondegenerate eigenvectors agree up to sign
    gaps = np.diff(ref.eigenvalues)
    for n in range(K - 1):
        if (n == 0 or gaps[n - 1] > 1e-6) and gaps[n] > 1e-6:
            assert overlap[n, n] == pytest.approx(1.0, abs=1e-7)


def test_spectrum_invariants(spec16):
    V = spec16.vectors
    np.testing.assert_allclose(V.T @ V, np.eye(spec16.K), atol=1e-10)
    assert np.all(spec16.residuals <= 1e-8 * (1 + np.abs(spec16.eigenvalues)))
    assert np.all(np.diff(spec16.eigenvalues) >= -1e-12)


def test_variational_bounds_for_a_cosine_potential():
    g = Grid(16)
    x, _ = g.points()
    V = from_point_values(g, np.cos(x))
    lam1 = ground_state_energy(Hamiltonian(potential=V))
    assert -1.0 < lam1 < 0.0  # min V < lambda_1 < mean V


def test_positivity_shift(hamiltonian16):
    shift = positivity_shift(hamiltonian16)
    assert ground_state_energy(hamiltonian16.with_shift(shift)) >= 1.0 - 1e-9
    assert positivity_shift(Hamiltonian.free(Grid(8), 0.0)) == pytest.approx(1.0)


def test_weyl_counting_matches_lattice():
    spec = eigensolve(Hamiltonian.free(Grid(32)), 200)
    for lam in (0.5, 4.5, 10.0, 25.5):
        assert weyl_counting(spec, lam) == _lattice_count(lam)
    np.testing.assert_allclose(laplacian_eigenvalues(200), np.sort(spec.unshifted)[:200], atol=1e-9)
    with pytest.raises(SpectralRangeError):
        weyl_counting(spec, 1000.0)
    with pytest.raises(SpectralRangeError):
        weyl_slope(spec, 1000.0)


def test_weyl_slope_zero_noise():
    spec = eigensolve(Hamiltonian.free(Grid(32)), 260)
    assert weyl_slope(spec, 50.0) == pytest.approx(math.pi, rel=0.05)


def test_converged_cutoff():
    assert converged_cutoff(48) == pytest.approx(0.5 * 16**2)


def test_sandwich_trivial_cases():
    g = Grid(16)
    m1, m2 = eigenvalue_sandwich(eigensolve(Hamiltonian.free(g), 60), delta=0.5)
    assert m1 == pytest.approx(0.0, abs=1e-9) and m2 == pytest.approx(0.0, abs=1e-9)
    c = 0.8
    m1, m2 = eigenvalue_sandwich(eigensolve(Hamiltonian(potential=Field.constant(g, c)), 60), delta=0.5)
    assert m1 == pytest.approx(-c, abs=1e-9) and m2 == pytest.approx(c, abs=1e-9)
    with pytest.raises(ValueError):
        eigenvalue_sandwich(eigensolve(Hamiltonian.free(g), 10), delta=1.5)


def test_sandwich_lower_delta_form():
    g = Grid(16)
    spec = eigensolve(Hamiltonian(potential=Field.constant(g, 0.8)), 60)
    # lambda_n + c >= (1 - delta) lambda_n - m1 is tightest at lambda_0 = 0
    m1, m2 = eigenvalue_sandwich(spec, delta=0.5, lower_delta=True)
    assert m1 == pytest.approx(-0.8, abs=1e-9) and m2 == pytest.approx(0.8, abs=1e-9)
    # a negative constant: the scaled lower bound needs no more than the shift
    spec = eigensolve(Hamiltonian(potential=Field.constant(g, -0.8)), 60)
    assert eigenvalue_sandwich(spec, delta=0.5, lower_delta=True)[0] == pytest.approx(0.8, abs=1e-9)


def test_projector_properties(spec16, rng):
    g = spec16.grid
    lam = 9.0
    in_window = np.nonzero((spec16.eigenvalues >= lam) & (spec16.eigenvalues < lam + 1))[0]
    assert in_window.size
    e = spec16.eigenvector(int(in_window[0]))
    np.testing.assert_allclose(spectral_projector(spec16, lam, e).coeffs, e.coeffs, atol=1e-12)
    outside = spec16.eigenvector(0)
    assert spectral_projector(spec16, lam, outside).norm() < 1e-12
    u = random_field(g, rng)
    p = spectral_projector(spec16, lam, u)
    np.testing.assert_allclose(spectral_projector(spec16, lam, p).coeffs, p.coeffs, atol=1e-12)
    assert p.norm() <= u.norm()
    v = random_field(g, rng)
    assert p.inner(v) == pytest.approx(u.inner(spectral_projector(spec16, lam, v)), abs=1e-10)
    assert projector_lq_norm(spec16, lam, 4.0) > 0


def test_fractional_powers(rng):
    g = Grid(16)
    H = Hamiltonian.from_enhanced(build_enhanced(sample_white_noise(g, 4), 2.0 / 16))
    spec = eigensolve(H.with_shift(positivity_shift(H)))
    e1 = spec.eigenvector(0)
    np.testing.assert_allclose(fractional_apply(spec, 0.5, e1).coeffs,
                               (spec.eigenvalues[0] ** 0.25 * e1).coeffs, atol=1e-12)
    u = random_field(g, rng)
    np.testing.assert_allclose(fractional_apply(spec, 0.0, u).coeffs, u.coeffs, atol=1e-12)
    ratios = []
    for _ in range(50):
        w = random_field(g, rng)
        ratios.append(sobolev_norm(w, 0.5) / fractional_apply(spec, 0.5, w).norm())
    assert max(ratios) / min(ratios) < 20
    with pytest.raises(ValueError):
        fractional_apply(eigensolve(H), 0.5, u)


def test_floor_operators(rng):
    g = Grid(8)
    spec = eigensolve(Hamiltonian.free(g, shift=3.7))
    ops = floor_ops(spec)
    assert ops.floor_eigenvalues[0] == 3 and ops.b_eigenvalues[0] == 1
    u = random_field(g, rng, real=False)
    assert ops.floor_remainder(u).norm() <= u.norm()
    assert ops.sqrt_remainder(u).norm() <= u.norm()
    np.testing.assert_allclose(ops.floor_group(u, 2 * np.pi).coeffs, u.coeffs, atol=1e-10)


def test_lq_slope_zero_noise_is_flat():
    spec = eigensolve(Hamiltonian.free(Grid(32)), 150)
    assert abs(lq_eigenfunction_slope(spec, 4.0, n_use=100)) < 0.1
    with pytest.raises(ValueError):
        lq_eigenfunction_slope(spec, 2.0)
    norms = eigenfunction_lq_norms(spec, 2.0, indices=range(5))
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_tail_energy_guard(spec16, rng):
    g = spec16.grid
    small = eigensolve(Hamiltonian.free(g), 5)
    with pytest.raises(TailEnergyError):
        small.coefficients(random_field(g, rng))
    a = spec16.coefficients(random_field(g, rng))
    assert a.shape == (spec16.K,)


def test_representation_remainder_is_smaller_than_the_operator():
    g = Grid(32)
    enh = build_enhanced(sample_white_noise(g, 3), 2.0 / 32)
    H = Hamiltonian.from_enhanced(enh)
    maps = ParacontrolledMaps(enh, s=1.0 / 16)
    rng = np.random.default_rng(0)
    for _ in range(3):
        u = random_field(g, rng, decay=2.0)
        assert representation_residual(maps, H, u / u.norm()) < 0.2
