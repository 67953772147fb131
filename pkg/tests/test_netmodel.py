import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toponet import Geometry, NetworkConfig, Sector, IndexMap, node_smatrix
from toponet.netmodel import (
    apply_imperfections,
    assemble_closed,
    assemble_plane,
    assemble_realspace,
    closed_operator,
    kx_grid,
    loss_factors,
    row_flux_phases,
)


def infnorm(M):
    return np.abs(M).sum(axis=1).max()


def node_from_beamsplitters(r_bs, polarization):
    """Eliminate the inner ring of the two-beamsplitter node for one linear polarization.

    c_s are the ring amplitudes.  V-polarized light sees the beamsplitter
    reflection with opposite sign and the sigma_z plates on two ports.
    """
    r, t = r_bs, np.sqrt(1 - r_bs**2)
    if polarization == "V":
        r = -r
    sign_in = np.array([-1, -1, 1, 1]) if polarization == "V" else np.ones(4)
    sign_out = np.array([1, 1, -1, -1]) if polarization == "V" else np.ones(4)
    cr, cu, cl, cd, br, bu, bl, bd = range(8)
    S = np.zeros((4, 4), dtype=complex)
    for k in range(4):
        ar, au, al, ad = np.eye(4)[k] * sign_in
        eqs = [
            ({cr: 1, cu: -1j * r}, t * ar),
            ({bu: 1, cu: -t}, 1j * r * ar),
            ({bl: 1, cl: -t}, 1j * r * ad),
            ({cd: 1, cl: -1j * r}, t * ad),
            ({br: 1, cd: -t}, 1j * r * au),
            ({cl: 1, cd: -1j * r}, t * au),
            ({cu: 1, cr: -1j * r}, t * al),
            ({bd: 1, cr: -t}, 1j * r * al),
        ]
        A = np.zeros((8, 8), dtype=complex)
        b = np.zeros(8, dtype=complex)
        for i, (coef, rhs) in enumerate(eqs):
            for j, v in coef.items():
                A[i, j] = v
            b[i] = rhs
        S[:, k] = np.linalg.solve(A, b)[4:] * sign_out
    return S


class TestNode:
    def test_default_is_balanced(self):
        node = node_smatrix(np.sqrt(2) - 1)
        assert node.r_node == pytest.approx(1 / np.sqrt(2), abs=1e-15)
        assert node.t_node == pytest.approx(1 / np.sqrt(2), abs=1e-15)

    def test_limits(self):
        n0 = node_smatrix(0.0)
        assert (n0.r_node, n0.t_node) == (0.0, 1.0)
        # pure pass-through r<->d, u<->l
        assert n0.matrix[3, 0] == 1 and n0.matrix[0, 3] == 1
        assert n0.matrix[2, 1] == 1 and n0.matrix[1, 2] == 1
        n1 = node_smatrix(1.0)
        assert (n1.r_node, n1.t_node) == (1.0, 0.0)
        assert n1.matrix[0, 1] == 1j and n1.matrix[1, 0] == 1j

    @pytest.mark.parametrize("bad", [-0.1, 1.1, np.nan])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            node_smatrix(bad)

    def test_unitary_zero_diagonal_on_grid(self):
        for r_bs in np.linspace(0, 1, 100):
            node = node_smatrix(r_bs)
            m = node.matrix
            assert infnorm(m.conj().T @ m - np.eye(4)) < 1e-12
            assert np.all(np.diag(m) == 0)
            assert node.r_node**2 + node.t_node**2 == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("pol", ["H", "V"])
    @pytest.mark.parametrize("r_bs", [0.1, np.sqrt(2) - 1, 0.7, 0.95])
    def test_matches_ring_elimination(self, r_bs, pol):
        assert np.abs(node_from_beamsplitters(r_bs, pol) - node_smatrix(r_bs).matrix).max() < 1e-13

    def test_sector_decoupling(self):
        # two-polarization node followed by the horizontal-fiber Jones
        # matrices; right movers see exp(i n th sigma_y), left movers its
        # transpose (reciprocity).
        n, th = 3, 0.83
        sy = np.array([[0, -1j], [1j, 0]])
        w, V = np.linalg.eigh(sy)
        J = V @ np.diag(np.exp(1j * n * th * w)) @ V.conj().T
        jones = [J, np.eye(2), J.T, np.eye(2)]
        S8 = np.kron(node_smatrix(0.3).matrix, np.eye(2))
        for s in range(4):
            S8[2 * s:2 * s + 2] = jones[s] @ S8[2 * s:2 * s + 2]
        # circular basis: eigenvectors of sigma_y on every port; eigenvalue
        # -1 (column 0) is the sigma = +1 sector
        C = np.kron(np.eye(4), V)
        Sc = C.conj().T @ S8 @ C
        assert np.abs(Sc[0::2, 1::2]).max() < 1e-14 and np.abs(Sc[1::2, 0::2]).max() < 1e-14
        node = node_smatrix(0.3).matrix
        for block, sigma in ((Sc[0::2, 0::2], 1), (Sc[1::2, 1::2], -1)):
            ph = np.diag([np.exp(-1j * sigma * n * th), 1, np.exp(1j * sigma * n * th), 1])
            assert np.abs(block - ph @ node).max() < 1e-14


class TestIndexMap:
    @given(st.integers(1, 7), st.integers(1, 7))
    def test_round_trip(self, Ny, Nx):
        for idx in (IndexMap(Ny), IndexMap(Ny, Nx)):
            for k in range(idx.size):
                assert idx.index(*idx.label(k)) == k

    def test_d_block_position(self):
        idx = IndexMap(5)
        assert idx.index("d", 1) == 3 * 5  # 1-based 3 Ny + 1

    def test_bounds(self):
        with pytest.raises(IndexError):
            IndexMap(3).index("r", 4)
        with pytest.raises(IndexError):
            IndexMap(3, 2).index("r", 1, 3)


class TestAssembly:
    def test_ny1_torus_unitary(self):
        cfg = NetworkConfig(Nx=4, Ny=1, theta0=0.0, geometry="Torus")
        asm = assemble_closed(cfg, 1, 0.0)
        assert infnorm(asm.T.conj().T @ asm.T - np.eye(4)) == 0
        assert infnorm(asm.S0.conj().T @ asm.S0 - np.eye(4)) < 1e-12

    def test_cylinder_spectrum_on_unit_circle(self):
        cfg = NetworkConfig(Nx=8, Ny=4, geometry="Cylinder")
        asm = assemble_closed(cfg, 1, 0.26)
        assert asm.S0.shape == (16, 16)
        lam = np.linalg.eigvals(closed_operator(asm))
        assert np.abs(np.abs(lam) - 1).max() < 1e-12

    @pytest.mark.parametrize("geometry", ["Torus", "Cylinder", "Plane"])
    @pytest.mark.parametrize("sector", [1, -1])
    def test_unitarity_every_geometry(self, geometry, sector):
        cfg = NetworkConfig(Nx=3, Ny=4, theta0=0.7, geometry=geometry)
        if geometry == "Plane":
            asms = [assemble_plane(cfg, sector)]
        else:
            asms = [assemble_closed(cfg, sector, kx) for kx in kx_grid(3)]
        for asm in asms:
            n = asm.S0.shape[0]
            assert infnorm(asm.S0.conj().T @ asm.S0 - np.eye(n)) < 1e-12
            assert infnorm(asm.T.conj().T @ asm.T - np.eye(n)) < 1e-12

    def test_kx_grid(self):
        np.testing.assert_allclose(kx_grid(4), [-np.pi, -np.pi / 2, 0, np.pi / 2])

    def test_wrong_geometry(self):
        with pytest.raises(ValueError):
            assemble_closed(NetworkConfig(Nx=2, Ny=2, geometry="Plane"), 1, 0.0)
        with pytest.raises(ValueError):
            assemble_plane(NetworkConfig(Nx=2, Ny=2, geometry="Torus"), 1)

    def test_single_node_plane_by_hand(self):
        # one node, four mirrors: outputs come straight back into the
        # opposite port; the one-step map swaps (r, l) and (u, d) through
        # B = [[t, i r], [i r, t]] (eigenvalues exp(+-i pi/4)), so it squares
        # to B^2 and E = +-pi/4, +-3pi/4.
        cfg = NetworkConfig(Nx=1, Ny=1, theta0=0.0, geometry="Plane")
        lam = np.linalg.eigvals(closed_operator(assemble_plane(cfg, 1)))
        E = np.sort(np.angle(lam))
        np.testing.assert_allclose(E, [-3 * np.pi / 4, -np.pi / 4, np.pi / 4, 3 * np.pi / 4], atol=1e-12)

    @pytest.mark.parametrize("sector", [1, -1])
    def test_two_row_torus_against_elementwise_network(self, sector):
        # Element-by-element real-space propagation on a 2 x Nx torus; its
        # spectrum is the union of the per-kx spectra.
        Nx, Ny, th, r_bs = 5, 2, np.pi / 2, np.sqrt(2) - 1
        node = node_smatrix(r_bs).matrix
        ports = [(s, n, m) for s in range(4) for n in range(Ny) for m in range(Nx)]
        pos = {p: i for i, p in enumerate(ports)}
        U = np.zeros((len(ports), len(ports)), dtype=complex)
        for n in range(Ny):
            phase = sector * (n + 1) * th
            for m in range(Nx):
                for s_in in range(4):
                    col = pos[(s_in, n, m)]
                    b = node[:, s_in]
                    # b_r travels right, b_u up, b_l left, b_d down
                    U[pos[(0, n, (m + 1) % Nx)], col] += np.exp(-1j * phase) * b[0]
                    U[pos[(1, (n - 1) % Ny, m)], col] += b[1]
                    U[pos[(2, n, (m - 1) % Nx)], col] += np.exp(1j * phase) * b[2]
                    U[pos[(3, (n + 1) % Ny, m)], col] += b[3]
        oracle = np.sort_complex(np.round(np.linalg.eigvals(U), 10))
        cfg = NetworkConfig(Nx=Nx, Ny=Ny, theta0=th, geometry="Torus", r_bs=r_bs)
        ours = np.concatenate([np.linalg.eigvals(closed_operator(assemble_closed(cfg, sector, kx))) for kx in kx_grid(Nx)])
        ours = np.sort_complex(np.round(ours, 10))
        np.testing.assert_allclose(ours, oracle, atol=1e-9)

    def test_realspace_cylinder_matches_bloch_union(self):
        cfg = NetworkConfig(Nx=4, Ny=3, theta0=np.pi / 2, geometry="Cylinder")
        rs = np.linalg.eigvals(closed_operator(assemble_realspace(cfg, 1)))
        bl = np.concatenate([np.linalg.eigvals(closed_operator(assemble_closed(cfg, 1, k))) for k in kx_grid(4)])
        # every real-space eigenvalue has a Bloch partner and vice versa
        dist = np.abs(rs[:, None] - bl[None, :])
        assert dist.min(axis=1).max() < 1e-10 and dist.min(axis=0).max() < 1e-10


class TestImperfections:
    def test_identity_without_imperfections(self):
        cfg = NetworkConfig(Nx=4, Ny=3)
        asm = assemble_closed(cfg, 1, 0.1)
        assert apply_imperfections(asm, cfg) is asm

    def test_loss_contracts(self):
        cfg = NetworkConfig(Nx=4, Ny=5, loss_eta=0.9)
        asm = apply_imperfections(assemble_closed(cfg, 1, 0.3), cfg)
        assert asm.lossy
        assert np.abs(np.linalg.eigvals(closed_operator(asm))).max() < 1

    def test_loss_factor_counts(self):
        h, v = loss_factors(0.81)
        assert h == pytest.approx(0.9**4) and v == pytest.approx(0.9**3)
        h3, _ = loss_factors(0.81, plates_per_fiber=3)
        assert h3 == pytest.approx(0.9**6)

    def test_seeded_disorder_is_deterministic(self):
        cfg = NetworkConfig(Nx=4, Ny=6, disorder_delta=0.2, rng_seed=11)
        a = apply_imperfections(assemble_closed(cfg, 1, 0.0), cfg)
        b = apply_imperfections(assemble_closed(cfg, 1, 0.0), cfg)
        assert np.array_equal(a.S0, b.S0)
        c = apply_imperfections(assemble_closed(cfg, 1, 0.0), cfg.replace(rng_seed=12))
        assert not np.array_equal(a.S0, c.S0)

    def test_disorder_keeps_unitarity_and_bounds(self):
        cfg = NetworkConfig(Nx=3, Ny=4, disorder_delta=0.2, rng_seed=3, geometry="Plane")
        asm = apply_imperfections(assemble_plane(cfg, -1), cfg)
        assert asm.disordered and not asm.lossy
        assert infnorm(asm.S0.conj().T @ asm.S0 - np.eye(48)) < 1e-12

    def test_row_flux_is_cumulative(self):
        d = np.array([0.1, -0.2, 0.05])
        np.testing.assert_allclose(row_flux_phases(3, 1.0, d), [1.1, 1.9, 2.95])
        np.testing.assert_allclose(row_flux_phases(3, 1.0), [1, 2, 3])


def test_sector_parse():
    assert Sector.parse("+") is Sector.PLUS and Sector.parse(-1) is Sector.MINUS
    with pytest.raises(ValueError):
        Sector.parse(0)


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from(list(Geometry)),
    st.sampled_from([1, -1]),
    st.integers(1, 4),
    st.integers(1, 4),
    st.floats(0, 2 * np.pi),
    st.floats(0, 1),
    st.floats(-np.pi, np.pi),
)
def test_closed_operator_unitary(geometry, sector, Nx, Ny, theta0, r_bs, kx):
    cfg = NetworkConfig(Nx=Nx, Ny=Ny, theta0=theta0, r_bs=r_bs, geometry=geometry)
    asm = assemble_plane(cfg, sector) if geometry is Geometry.PLANE else assemble_closed(cfg, sector, kx)
    M = closed_operator(asm)
    assert infnorm(M.conj().T @ M - np.eye(M.shape[0])) < 1e-12
