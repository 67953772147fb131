import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toponet.rootfind import LogDet, Rect, RootFindError, find_roots, logdet, winding_count


def poly_matrix(zeros):
    zeros = np.asarray(zeros, dtype=complex)
    return lambda z: np.diag(z - zeros)


def test_logdet_matches_det():
    rng = np.random.default_rng(1)
    K = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    ph, la = logdet(K)
    assert ph * np.exp(la) == pytest.approx(np.linalg.det(K), rel=1e-12)


def test_logdet_no_overflow():
    K = 1e30 * np.eye(200)
    ph, la = logdet(K)
    assert ph == 1 and la == pytest.approx(200 * np.log(1e30))


def test_rect_validation():
    with pytest.raises(ValueError):
        Rect(1, 0, 0, 1)


def test_count_and_locate():
    zeros = [0.3 + 0.2j, -1.1 - 0.4j, 2.0 + 1.5j, 5.0]
    roots, n = find_roots(poly_matrix(zeros), Rect(-np.pi, np.pi, -2, 2))
    assert n == 3
    np.testing.assert_allclose(sorted(roots, key=lambda z: z.real), [-1.1 - 0.4j, 0.3 + 0.2j, 2.0 + 1.5j], atol=1e-10)


def test_zeros_on_midlines():
    # symmetric placements put zeros exactly on naive bisection lines
    zeros = [0.0, 0.0 + 1j, -1.0, 1.0 - 1j]
    roots, n = find_roots(poly_matrix(zeros), Rect(-2, 2, -2, 2))
    assert n == 4 and len(roots) == 4
    for z in zeros:
        assert min(abs(np.array(roots) - z)) < 1e-9


def test_double_root():
    roots, n = find_roots(lambda z: np.diag([z - 0.5, z - 0.5, z + 1]), Rect(-2, 2, -1, 1))
    assert n == 3
    assert sum(abs(r - 0.5) < 1e-6 for r in roots) == 2


def test_cluster_near_edge_not_aliased():
    # many zeros just below a long edge; the nested counts must stay consistent
    zeros = np.linspace(-3, 3, 25) - 1e-6j
    f = LogDet(poly_matrix(zeros))
    assert winding_count(f, Rect(-np.pi, np.pi, 0.0, 2.0)) == 0
    assert winding_count(f, Rect(-np.pi, np.pi, -1e-5, 2.0)) == 25


def test_entire_function():
    # det = e^{iz} - 1/2 has zeros z = 2 pi n + i ln 2
    f = lambda z: np.array([[np.exp(1j * z) - 0.5]])
    roots, n = find_roots(f, Rect(-1, 7, -1, 2))
    assert n == 2
    np.testing.assert_allclose(roots, [1j * np.log(2), 2 * np.pi + 1j * np.log(2)], atol=1e-10)


def test_zero_on_contour_raises():
    with pytest.raises((ZeroDivisionError, RootFindError)):
        winding_count(LogDet(poly_matrix([1.0])), Rect(1.0, 2.0, -1, 1))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(-2.9, 2.9), st.floats(-1.9, 1.9)), min_size=1, max_size=6))
def test_random_zeros_recovered(pts):
    zeros = np.array([complex(a, b) for a, b in pts])
    # well-separated zeros only; clusters are covered above
    if len(zeros) > 1 and min(abs(a - b) for i, a in enumerate(zeros) for b in zeros[i + 1 :]) < 1e-3:
        return
    roots, n = find_roots(poly_matrix(zeros), Rect(-3, 3, -2, 2))
    assert n == len(zeros) == len(roots)
    for z in zeros:
        assert min(abs(np.array(roots) - z)) < 1e-8
