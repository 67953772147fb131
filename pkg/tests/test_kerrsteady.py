import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toponet import NetworkConfig
from toponet.drive import solve_driven_cylinder
from toponet.kerrsteady import (
    ConvergenceError,
    KerrCircuit,
    SteadyState,
    continuation_sweep,
    cylinder_circuit,
    homotopy_in_chi,
    kerr_phase_matrix,
    linear_solution,
    observables,
    real_jacobian,
    solve_steady,
    states_at_total,
    steady_residual,
)
from toponet.netmodel import D, R, U, IndexMap


@pytest.fixture(scope="module")
def small():
    cfg = NetworkConfig(Nx=12, Ny=6, theta0=np.pi / 2, geometry="Cylinder", r_BM=0.9, chi=1.0)
    return cylinder_circuit(cfg, 1, 0.26)


@pytest.fixture(scope="module")
def cyl24():
    cfg = NetworkConfig(Nx=24, Ny=12, theta0=np.pi / 2, geometry="Cylinder", r_BM=0.9, chi=1.0)
    return cylinder_circuit(cfg, 1, 0.26)


def test_requires_cylinder():
    with pytest.raises(ValueError):
        cylinder_circuit(NetworkConfig(Nx=4, Ny=4, geometry="Torus"), 1, 0.0)


def test_fiber_validation():
    with pytest.raises(ValueError):
        KerrCircuit(routing=lambda p: np.eye(2), fibers=[(0, -1)], twist=[0], drive=np.zeros(2), chi=1.0)
    with pytest.raises(ValueError):
        KerrCircuit(routing=lambda p: np.eye(1), fibers=[(0, -3)], twist=[0], drive=np.zeros(1), chi=1.0)


def test_intensity_matrix(small):
    idx = IndexMap(6)
    rng = np.random.default_rng(0)
    a = rng.standard_normal(24) + 1j * rng.standard_normal(24)
    N = kerr_phase_matrix(small, a)
    for n in range(1, 7):
        r, l = idx.index(R, n), idx.index("l", n)
        assert N[r] == pytest.approx(abs(a[r]) ** 2 + 2 * abs(a[l]) ** 2)
    # folded bottom stub and linear top link
    assert N[idx.index(U, 6)] == pytest.approx(3 * abs(a[idx.index(U, 6)]) ** 2)
    assert N[idx.index(D, 1)] == 0
    assert small.chi_eff == pytest.approx(1 / 12)


def test_dark_state(small):
    assert np.all(steady_residual(small, np.zeros(24), 0.3, 0.0) == 0)


def test_linear_limit_matches_driven_network(small):
    lin = small.with_chi(0.0)
    cfg = small.config
    for w in [0.05, 0.22, 1.3]:
        a = linear_solution(lin, w, 0.7)
        assert np.linalg.norm(steady_residual(lin, a, w, 0.7)) < 1e-12
        ref = solve_driven_cylinder(cfg, 1, 0.26, w, A_in=0.7)
        np.testing.assert_allclose(a, ref.amplitudes, atol=1e-10)
        assert lin.output(a, 0.7, w) == pytest.approx(ref.A_out, abs=1e-10)


def test_zero_chi_solve_from_zero(small):
    lin = small.with_chi(0.0)
    st_ = solve_steady(lin, 0.4, 1.1, np.zeros(24))
    np.testing.assert_allclose(st_.amplitudes, linear_solution(lin, 0.4, 1.1), atol=1e-10)


def test_perturbative_newton(small):
    w, A = 0.4, 0.1  # |chi| |A|^2 = 0.01, off resonance
    st_ = solve_steady(small, w, A, linear_solution(small, w, A))
    assert st_.iterations <= 5 and st_.residual_norm < 1e-10


def test_gauge_covariance(small):
    st_ = homotopy_in_chi(small, 0.3, 1.2)
    phi = 0.77
    rotated = st_.amplitudes * np.exp(1j * phi)
    assert np.linalg.norm(steady_residual(small, rotated, 0.3, 1.2 * np.exp(1j * phi))) < 1e-10
    again = solve_steady(small, 0.3, 1.2 * np.exp(1j * phi), rotated)
    assert again.N_p == pytest.approx(st_.N_p, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-np.pi, np.pi))
def test_jacobian_against_differences(seed, w):
    cfg = NetworkConfig(Nx=8, Ny=4, theta0=np.pi / 2, geometry="Cylinder", r_BM=0.8, chi=-2.0)
    c = cylinder_circuit(cfg, -1, 0.5)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    Jm = real_jacobian(c, a, w)
    h = 1e-6
    x = np.concatenate([a.real, a.imag])
    F = lambda x: (lambda f: np.concatenate([f.real, f.imag]))(steady_residual(c, x[:16] + 1j * x[16:], w, 0.9))
    fd = np.empty_like(Jm)
    for j in range(32):
        e = np.zeros(32)
        e[j] = h
        fd[:, j] = (F(x + e) - F(x - e)) / (2 * h)
    assert np.abs(fd - Jm).max() / np.abs(Jm).max() < 1e-6


def test_linear_limit_first_order(small):
    w, A = 0.22, 1.0
    n0 = np.sum(np.abs(linear_solution(small.with_chi(0.0), w, A)) ** 2)
    d = [solve_steady(small.with_chi(chi), w, A, linear_solution(small.with_chi(0.0), w, A)).N_p - n0 for chi in (1e-3, 1e-4)]
    assert d[1] / d[0] == pytest.approx(0.1, rel=0.02)


def test_nonconvergence_reported(small):
    with pytest.raises(ConvergenceError) as err:
        solve_steady(small.with_chi(50.0), 0.22, 3.0, np.zeros(24), max_iter=3)
    assert err.value.last is not None


def test_linear_continuation(small):
    curve = continuation_sweep(small.with_chi(0.0), 0.22, (0.1, 2.0))
    assert curve.folds == [] and curve.max_coexisting() == 1
    # unscaled columns at chi = 0: N_p proportional to |A_in|^2
    ratio = curve.total / curve.drive
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)


def test_large_cylinder_curve_multivalued_with_folds(cyl24):
    curve = continuation_sweep(cyl24, 0.22, (0.01, 3.2))
    assert not curve.truncated and len(curve.folds) >= 2
    assert curve.max_coexisting() >= 3
    assert np.all(np.diff(curve.branch) >= 0)
    # fold consistency: real Jacobian singular at every refined fold
    smin = [np.linalg.svd(real_jacobian(cyl24, s.amplitudes, 0.22), compute_uv=False)[-1] for s in curve.states]
    med = np.median(smin)
    for i in curve.folds:
        assert smin[i] < 1e-6 * med
    for s in curve.states:
        assert s.residual_norm < 1e-10


def test_edge_state_chirality(cyl24):
    curve = continuation_sweep(cyl24, 0.22, (0.01, 3.2))
    (s,) = states_at_total(curve, 5.0)
    assert abs(cyl24.chi) * s.N_p == pytest.approx(5.0, abs=1e-10)
    N, table = observables(s)
    assert table.shape == (4, 12)
    # right-moving intensity on the top row dominates every other entry
    assert np.unravel_index(table.argmax(), table.shape) == (0, 0)


def test_observables_scaling(small):
    a = linear_solution(small.with_chi(0.0), 0.3, 1.0)
    s1 = SteadyState(a, 0.3, 1.0, small, 0.0)
    s2 = SteadyState(2 * a, 0.3, 2.0, small, 0.0)
    assert observables(s2)[0] == pytest.approx(4 * observables(s1)[0])
    assert observables(SteadyState(0 * a, 0.3, 0.0, small, 0.0))[0] == 0
