import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from toponet import NetworkConfig
from toponet.drive import open_resonances, solve_driven_cylinder
from toponet.fluct import (
    SIGMA,
    FluctuationOperator,
    assemble_D,
    bogoliubov_response,
    fiber_bog_matrices,
    input_output_matrix,
    is_stable,
    propagation_matrix,
    stability_roots,
)
from toponet.fpcavity import FPParams, fp_slope, fp_solve, fp_steady_state
from toponet.kerrsteady import continuation_sweep, cylinder_circuit, homotopy_in_chi, solve_steady
from toponet.rootfind import Rect

CFG = NetworkConfig(Nx=8, Ny=4, theta0=np.pi / 2, geometry="Cylinder", r_BM=0.9, chi=1.0)
KX = 0.26


@pytest.fixture(scope="module")
def circuit():
    return cylinder_circuit(CFG, 1, KX)


@pytest.fixture(scope="module")
def state(circuit):
    return homotopy_in_chi(circuit, 0.3, 1.0)


@pytest.fixture(scope="module")
def linear_state(circuit):
    return solve_steady(circuit.with_chi(0.0), 0.3, 1.0)


def random_bogoliubov(rng):
    A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    B = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    return np.block([[A, B], [-B.conj(), -A.conj()]])


def test_zero_chi_matrices_vanish(linear_state):
    for fm in fiber_bog_matrices(linear_state, 0.7):
        assert np.all(fm.Mbar == 0)


def test_matrix_structure_at_drive_momentum(state):
    op = FluctuationOperator(state)
    for fm in op.fiber_matrices():
        M = fm.Mbar
        if fm.kind == "pair":
            np.testing.assert_allclose(M[2:, 2:], -M[:2, :2].conj(), atol=1e-15)
            np.testing.assert_allclose(M[2:, :2], -M[:2, 2:].conj(), atol=1e-15)
        elif fm.kind == "stub":
            np.testing.assert_allclose(M[1, 1], -M[0, 0].conj(), atol=1e-15)


def test_pair_matrix_explicit_form(state):
    # at p = kx all Bloch factors cancel and the matrix is the plain two-field form
    op = FluctuationOperator(state)
    c = state.circuit
    f, b = op.pairs[0]
    al = state.amplitudes[f] / c.post_phase[f]
    be = state.amplitudes[b] / c.post_phase[b]
    ac, bc = np.conj(al), np.conj(be)
    M = c.chi_eff * np.array(
        [
            [abs(al) ** 2, 2 * bc * al, al**2, 2 * al * be],
            [2 * ac * be, abs(be) ** 2, 2 * al * be, be**2],
            [-(ac**2), -2 * ac * bc, -abs(al) ** 2, -2 * ac * be],
            [-2 * ac * bc, -(bc**2), -2 * al * bc, -abs(be) ** 2],
        ]
    )
    np.testing.assert_allclose(op.Mpair[0], M, atol=1e-14)


def test_free_propagation():
    P = propagation_matrix(np.zeros((4, 4)), 0.7 - 0.1j, 1.3)
    np.testing.assert_allclose(P, np.diag(np.exp(1j * (0.7 - 0.1j) * 1.3 * np.array([1, -1, 1, -1]))), atol=1e-14)


def test_commuting_case():
    M = np.diag([0.3, -0.2, -0.3, 0.2]).astype(complex)
    w, L = 0.45, 1.0
    P = propagation_matrix(M, w, L)
    np.testing.assert_allclose(P, expm(SIGMA * w * L) @ expm(-SIGMA @ M * L), atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_propagator_conjugation_symmetry(seed, w):
    """Swapping field and conjugate blocks maps P(w) onto conj P(-w)."""
    M = 0.5 * random_bogoliubov(np.random.default_rng(seed))
    K = np.block([[np.zeros((2, 2)), np.eye(2)], [np.eye(2), np.zeros((2, 2))]])
    np.testing.assert_allclose(K @ propagation_matrix(M, w) @ K, propagation_matrix(M, -w).conj(), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-0.5, 0.5))
def test_eig_path_matches_expm(seed, w, wi):
    M = random_bogoliubov(np.random.default_rng(seed))
    E = SIGMA @ ((w + 1j * wi) * np.eye(4) - M)
    np.testing.assert_allclose(propagation_matrix(M, w + 1j * wi), expm(E), rtol=1e-8, atol=1e-8)


def test_zero_chi_roots_are_shifted_resonances(linear_state):
    E = open_resonances(CFG, 1, KX)
    wd = linear_state.omega_d
    images = np.concatenate([E - wd, -(E.conj() - wd)])
    images = (images.real + np.pi) % (2 * np.pi) - np.pi + 1j * images.imag
    res = stability_roots(linear_state, region=Rect(-np.pi, np.pi, -0.5, 0.5))
    inside = images[np.abs(images.imag) < 0.5]
    assert res.count == len(inside) == len(res.roots)
    for z in inside:
        assert min(abs(res.roots - z)) < 1e-10
    assert res.stable


def test_determinant_singular_at_roots(state):
    res = stability_roots(state, region=Rect(-np.pi, np.pi, -0.3, 0.3))
    assert len(res.roots) == res.count > 0
    for z in res.roots[:10]:
        s = np.linalg.svd(assemble_D(state, z), compute_uv=False)
        assert s[-1] < 1e-8 * s[0]


def test_static_fluctuations_match_fold(circuit):
    curve = continuation_sweep(circuit, 0.22, (0.01, 6.0))
    assert curve.folds
    s = np.linalg.svd(assemble_D(curve.states[curve.folds[0]], 0.0), compute_uv=False)
    assert s[-1] < 1e-7 * s[0]
    s = np.linalg.svd(assemble_D(curve.states[1], 0.0), compute_uv=False)
    assert s[-1] > 1e-4 * s[0]


def test_is_stable_matches_roots(state):
    res = stability_roots(state)
    stable, counts = is_stable(state, return_counts=True)
    assert stable == res.stable
    assert counts[0] == int(np.sum(res.roots.imag >= -1e-8))
    assert state.stable is stable


def test_fp_negative_slope_unstable():
    p = FPParams(omega_d=3 * np.pi / 4, r_BM=0.9)
    s = [s for s in fp_solve(1.0, p) if fp_slope(s.y, p) < 0][0]
    assert not is_stable(fp_steady_state(s, p))


def test_zero_chi_response(linear_state):
    grid = np.linspace(-1, 1, 21)
    fields, sp = bogoliubov_response(linear_state, 0.5, 1.0, 0.0, grid)
    np.testing.assert_allclose(sp.S_plus, 1.0, atol=1e-10)
    np.testing.assert_allclose(sp.S_minus, 0.0, atol=1e-12)
    for f in fields:
        assert np.all(f.delta_a_q_conj == 0)
    # the probe sees the linear reflection at frequency omega_d + omega_f and momentum p
    wd = linear_state.omega_d
    for w, M in zip(grid[::5], sp.M_IO[::5]):
        ref = solve_driven_cylinder(CFG, 1, 0.5, wd + w, A_in=1.0)
        assert M[0, 0] == pytest.approx(ref.A_out, abs=1e-10)


def test_bosonic_relation(state):
    grid = np.linspace(-2, 2, 201)
    _, sp = bogoliubov_response(state, 0.52, 1.0, 0.0, grid)
    assert np.abs(sp.bosonic_defect).max() < 1e-8
    assert sp.S_minus.max() > 1e-3


def test_linearity_in_probe(state):
    op = FluctuationOperator(state, 0.4)
    x1, y1 = op.solve(0.3, 1.0, 0.2)
    x2, y2 = op.solve(0.3, 2.0, 0.4)
    np.testing.assert_allclose(x2, 2 * x1, atol=1e-12)
    np.testing.assert_allclose(y2, 2 * y1, atol=1e-12)


def test_momentum_pairing(state):
    op = FluctuationOperator(state, 0.1)
    assert op.q == pytest.approx(2 * KX - 0.1)
    f, _ = bogoliubov_response(state, 0.1, 1.0, 0.0, [0.2])
    assert f[0].q_x == pytest.approx(2 * KX - 0.1)


def test_input_output_matrix_columns(state):
    M = input_output_matrix(state, 0.25, 0.52)
    op = FluctuationOperator(state, 0.52)
    x, y = op.solve(0.25, 0.0, 1.0)
    assert M[1, 1] == pytest.approx(op.output(0.25, x, y, 0.0, 1.0)[1])
