"""Linear scattering operators of the fiber network.

Amplitudes are the node *input* fields ``a_{s,n(,m)}`` for the four directions
``s = r, u, l, d`` (right, up, left, down moving).  Rows are numbered from the
top boundary ``n = 1`` to the bottom ``n = Ny``; up-moving light goes from row
``n`` to row ``n - 1``.

For every geometry the closed network obeys ``S0 a = exp(-i E L) T a``:
``S0`` holds the node scattering, the birefringent flux phases and the Bloch
phases; ``T`` collects the shifted neighbour amplitudes and the boundary
closures.  The eigenvalues of ``T^{-1} S0`` are ``exp(-i E L)``.
"""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from .config import Geometry, NetworkConfig

__all__ = [
    "Sector",
    "DIRECTIONS",
    "NodeSMatrix",
    "IndexMap",
    "LinearAssembly",
    "node_smatrix",
    "row_flux_phases",
    "assemble_closed",
    "assemble_plane",
    "apply_imperfections",
    "closed_operator",
    "kx_grid",
    "loss_factors",
]

DIRECTIONS = ("r", "u", "l", "d")
R, U, LEFT, D = range(4)


class Sector(enum.IntEnum):
    """Circular polarization sector; the two sectors see opposite flux."""

    PLUS = 1
    MINUS = -1

    @classmethod
    def parse(cls, value) -> "Sector":
        if isinstance(value, str):
            value = {"+": 1, "+1": 1, "plus": 1, "-": -1, "-1": -1, "minus": -1}.get(value.lower(), value)
        try:
            return cls(int(value))
        except (ValueError, TypeError):
            raise ValueError(f"polarization sector must be +1 or -1, got {value!r}") from None


@dataclasses.dataclass(frozen=True)
class NodeSMatrix:
    r_node: float
    t_node: float
    matrix: np.ndarray  # 4x4, (r, u, l, d) basis, b = matrix @ a


def node_smatrix(r_bs: float) -> NodeSMatrix:
    """Scattering matrix of one node built from two beamsplitters of reflection ``r_bs``.

    The inner ring cavity turns the beamsplitter reflection into
    ``r_node = 2 r_bs / (1 + r_bs^2)``; the output rows are::

        b_r = i r a_u + t a_d      b_u = i r a_r + t a_l
        b_l = t a_u + i r a_d      b_d = t a_r + i r a_l
    """
    if not 0.0 <= r_bs <= 1.0 or not math.isfinite(r_bs):
        raise ValueError(f"r_bs must lie in [0, 1], got {r_bs!r}")
    r = 2.0 * r_bs / (1.0 + r_bs**2)
    t = (1.0 - r_bs**2) / (1.0 + r_bs**2)
    m = np.zeros((4, 4), dtype=complex)
    m[R, U], m[R, D] = 1j * r, t
    m[U, R], m[U, LEFT] = 1j * r, t
    m[LEFT, U], m[LEFT, D] = t, 1j * r
    m[D, R], m[D, LEFT] = t, 1j * r
    return NodeSMatrix(r, t, m)


class IndexMap:
    """Flat index of ``(s, n[, m])`` in the block order r, u, l, d.

    Rows ``n`` and columns ``m`` are 1-based as in the physics notation; flat
    indices are 0-based.  Without ``Nx`` the map describes the per-``kx``
    (cylinder/torus) basis with ``4 Ny`` entries.
    """

    def __init__(self, Ny: int, Nx: int | None = None):
        self.Ny = Ny
        self.Nx = Nx
        self.block = Ny * (Nx or 1)
        self.size = 4 * self.block

    def __len__(self):
        return self.size

    def index(self, s, n: int, m: int | None = None) -> int:
        s = DIRECTIONS.index(s) if isinstance(s, str) else int(s)
        if not 1 <= n <= self.Ny:
            raise IndexError(f"row {n} outside 1..{self.Ny}")
        if self.Nx is None:
            return s * self.Ny + n - 1
        if m is None or not 1 <= m <= self.Nx:
            raise IndexError(f"column {m} outside 1..{self.Nx}")
        return s * self.block + (n - 1) * self.Nx + (m - 1)

    def label(self, k: int):
        if not 0 <= k < self.size:
            raise IndexError(k)
        s, rest = divmod(k, self.block)
        if self.Nx is None:
            return DIRECTIONS[s], rest + 1
        n, m = divmod(rest, self.Nx)
        return DIRECTIONS[s], n + 1, m + 1

    def rows(self) -> np.ndarray:
        """1-based row number of every flat index."""
        k = np.arange(self.size) % self.block
        return k + 1 if self.Nx is None else k // self.Nx + 1


@dataclasses.dataclass(frozen=True)
class LinearAssembly:
    S0: np.ndarray
    T: np.ndarray
    geometry: Geometry
    sector: Sector
    Ny: int
    Nx: int
    kx: float | None = None
    lossy: bool = False
    disordered: bool = False
    # False when the plane's side-mirror stubs carry no flux phase
    stub_flux: bool = True

    @property
    def index(self) -> IndexMap:
        return IndexMap(self.Ny, None if self.kx is not None else self.Nx)


def kx_grid(Nx: int) -> np.ndarray:
    """Allowed quasi-momenta ``-pi + 2 pi j / Nx``."""
    return -np.pi + 2.0 * np.pi * np.arange(Nx) / Nx


def row_flux_phases(Ny: int, theta0: float, deltas=None) -> np.ndarray:
    """Phase of the birefringent triple in each row, ``n theta0`` for n = 1..Ny.

    ``deltas`` perturbs the flux of each plaquette; the row phase is the
    cumulative flux so that the plaquette between rows ``n-1`` and ``n`` carries
    ``theta0 + deltas[n-1]``.  Accepts shape ``(Ny,)`` or ``(Ny, Nx)``.
    """
    n = np.arange(1, Ny + 1, dtype=float)
    if deltas is None:
        return n * theta0
    deltas = np.asarray(deltas, dtype=float)
    base = np.cumsum(theta0 + deltas, axis=0)
    return base


def loss_factors(loss_eta: float, plates_per_fiber: int = 1):
    """Amplitude factors for (horizontal, vertical) links.

    Each element traversal contributes ``sqrt(loss_eta)``.  Horizontal links
    count 2 beamsplitter passages, the fiber and the birefringent plate
    triple; vertical links count 2 beamsplitter passages and the fiber.  The
    triple is one element by default; ``plates_per_fiber=3`` counts its
    plates separately.
    """
    a = math.sqrt(loss_eta)
    return a ** (3 + plates_per_fiber), a**3


def _node_rows(snode: np.ndarray, phase_r, phase_l):
    """Per-node S0 rows: node matrix with the flux/Bloch phase on the r and l outputs."""
    rows = snode.copy()
    rows[R] *= phase_r
    rows[LEFT] *= phase_l
    return rows


def assemble_closed(config: NetworkConfig, sector, kx: float, top_reflection: complex = 1.0) -> LinearAssembly:
    """Per-``kx`` operators ``S0(kx)`` and ``T`` of the closed torus or cylinder.

    ``T a`` stacks ``(a_{r,n}, a_{u,n-1}, a_{l,n}, a_{d,n+1})``.  The torus wraps
    rows cyclically; the cylinder closes with perfect mirrors,
    ``a_{u,0} = a_{d,1}`` and ``a_{d,Ny+1} = a_{u,Ny}``.  ``top_reflection``
    sets the reflection of the top mirror (a unit-modulus value keeps the
    network closed).  Imperfections are not applied here.
    """
    if config.geometry is Geometry.PLANE:
        raise ValueError("plane geometry: use assemble_plane")
    sector = Sector.parse(sector)
    Ny = config.Ny
    idx = IndexMap(Ny)
    snode = node_smatrix(config.r_bs).matrix
    phi = row_flux_phases(Ny, config.theta0)
    S0 = np.zeros((4 * Ny, 4 * Ny), dtype=complex)
    T = np.zeros_like(S0)
    for n in range(1, Ny + 1):
        rows = _node_rows(
            snode,
            np.exp(-1j * kx - 1j * sector * phi[n - 1]),
            np.exp(1j * kx + 1j * sector * phi[n - 1]),
        )
        cols = [idx.index(s, n) for s in range(4)]
        for s in range(4):
            S0[idx.index(s, n), cols] = rows[s]
        T[idx.index(R, n), idx.index(R, n)] = 1.0
        T[idx.index(LEFT, n), idx.index(LEFT, n)] = 1.0
        # up-moving output of row n feeds a_{u,n-1}
        if n > 1:
            T[idx.index(U, n), idx.index(U, n - 1)] = 1.0
        elif config.geometry is Geometry.TORUS:
            T[idx.index(U, n), idx.index(U, Ny)] = 1.0
        else:
            T[idx.index(U, n), idx.index(D, 1)] = 1.0 / top_reflection
        # down-moving output of row n feeds a_{d,n+1}
        if n < Ny:
            T[idx.index(D, n), idx.index(D, n + 1)] = 1.0
        elif config.geometry is Geometry.TORUS:
            T[idx.index(D, n), idx.index(D, 1)] = 1.0
        else:
            T[idx.index(D, n), idx.index(U, Ny)] = 1.0
    return LinearAssembly(S0, T, config.geometry, sector, Ny, config.Nx, kx=float(kx))


def assemble_plane(config: NetworkConfig, sector, stub_flux: bool = False) -> LinearAssembly:
    """Real-space ``4 Nx Ny`` operators of the closed plane (unit mirrors on all edges).

    The side mirrors close a stub that light crosses twice in opposite
    directions, so the plates in it cancel and by default the reflected
    horizontal outputs of the first and last column carry no flux phase.
    This keeps the network reciprocal (sector -1 is the transpose of
    sector +1). ``stub_flux=True`` applies the phase on every horizontal
    output instead.
    """
    if config.geometry is not Geometry.PLANE:
        raise ValueError(f"assemble_plane needs Plane geometry, got {config.geometry.value}")
    return _assemble_realspace(config, Sector.parse(sector), stub_flux=stub_flux)


def _assemble_realspace(config: NetworkConfig, sector: Sector, flux=None, stub_flux=False) -> LinearAssembly:
    Ny, Nx = config.Ny, config.Nx
    idx = IndexMap(Ny, Nx)
    snode = node_smatrix(config.r_bs).matrix
    if flux is None:
        flux = np.repeat(row_flux_phases(Ny, config.theta0)[:, None], Nx, axis=1)
    periodic_x = config.geometry is not Geometry.PLANE
    torus = config.geometry is Geometry.TORUS
    S0 = np.zeros((idx.size, idx.size), dtype=complex)
    T = np.zeros_like(S0)
    for n in range(1, Ny + 1):
        for m in range(1, Nx + 1):
            ph = sector * flux[n - 1, m - 1]
            pr, pl = np.exp(-1j * ph), np.exp(1j * ph)
            if not (periodic_x or stub_flux):
                pr = 1.0 if m == Nx else pr
                pl = 1.0 if m == 1 else pl
            rows = _node_rows(snode, pr, pl)
            cols = [idx.index(s, n, m) for s in range(4)]
            for s in range(4):
                S0[idx.index(s, n, m), cols] = rows[s]
            # right output -> a_{r,n,m+1}
            if m < Nx:
                T[idx.index(R, n, m), idx.index(R, n, m + 1)] = 1.0
            elif periodic_x:
                T[idx.index(R, n, m), idx.index(R, n, 1)] = 1.0
            else:
                T[idx.index(R, n, m), idx.index(LEFT, n, Nx)] = 1.0
            # left output -> a_{l,n,m-1}
            if m > 1:
                T[idx.index(LEFT, n, m), idx.index(LEFT, n, m - 1)] = 1.0
            elif periodic_x:
                T[idx.index(LEFT, n, m), idx.index(LEFT, n, Nx)] = 1.0
            else:
                T[idx.index(LEFT, n, m), idx.index(R, n, 1)] = 1.0
            # up output -> a_{u,n-1,m}
            if n > 1:
                T[idx.index(U, n, m), idx.index(U, n - 1, m)] = 1.0
            elif torus:
                T[idx.index(U, n, m), idx.index(U, Ny, m)] = 1.0
            else:
                T[idx.index(U, n, m), idx.index(D, 1, m)] = 1.0
            # down output -> a_{d,n+1,m}
            if n < Ny:
                T[idx.index(D, n, m), idx.index(D, n + 1, m)] = 1.0
            elif torus:
                T[idx.index(D, n, m), idx.index(D, 1, m)] = 1.0
            else:
                T[idx.index(D, n, m), idx.index(U, Ny, m)] = 1.0
    return LinearAssembly(S0, T, config.geometry, sector, Ny, Nx, kx=None, stub_flux=periodic_x or stub_flux)


def assemble_realspace(config: NetworkConfig, sector) -> LinearAssembly:
    """Real-space assembly for any geometry (torus and cylinder without Bloch reduction)."""
    return _assemble_realspace(config, Sector.parse(sector))


def _draw_deltas(config: NetworkConfig, shape):
    rng = np.random.default_rng(config.rng_seed)
    return rng.uniform(-config.disorder_delta, config.disorder_delta, size=shape)


def apply_imperfections(assembly: LinearAssembly, config: NetworkConfig, plates_per_fiber: int = 1) -> LinearAssembly:
    """Return the assembly with flux disorder and element losses applied to the S0 rows.

    Disorder draws one phase deviation per horizontal fiber from the seeded
    generator.  A per-``kx`` assembly has one fiber per row (translation
    invariance along x is kept); a real-space assembly has one per fiber.
    Losses scale the horizontal (r, l) and vertical (u, d) rows by the
    factors of :func:`loss_factors`.
    """
    if config.disorder_delta == 0.0 and config.loss_eta == 1.0:
        return assembly
    S0 = assembly.S0.copy()
    idx = assembly.index
    rows = idx.rows()
    blk = np.arange(idx.size) // idx.block
    if config.disorder_delta > 0.0:
        sec = int(assembly.sector)
        if assembly.kx is not None:
            deltas = _draw_deltas(config, (assembly.Ny,))
            extra = row_flux_phases(assembly.Ny, config.theta0, deltas) - row_flux_phases(assembly.Ny, config.theta0)
            e = extra[rows - 1]
        else:
            deltas = _draw_deltas(config, (assembly.Ny, assembly.Nx))
            extra = row_flux_phases(assembly.Ny, config.theta0, deltas) - row_flux_phases(assembly.Ny, config.theta0)[:, None]
            cols = np.arange(idx.size) % idx.block % assembly.Nx
            e = extra[rows - 1, cols]
            if not assembly.stub_flux:
                e = np.where(((blk == R) & (cols == assembly.Nx - 1)) | ((blk == LEFT) & (cols == 0)), 0.0, e)
        S0[blk == R] *= np.exp(-1j * sec * e[blk == R])[:, None]
        S0[blk == LEFT] *= np.exp(1j * sec * e[blk == LEFT])[:, None]
    if config.loss_eta != 1.0:
        h, v = loss_factors(config.loss_eta, plates_per_fiber)
        S0[(blk == R) | (blk == LEFT)] *= h
        S0[(blk == U) | (blk == D)] *= v
    return dataclasses.replace(
        assembly,
        S0=S0,
        lossy=assembly.lossy or config.loss_eta != 1.0,
        disordered=assembly.disordered or config.disorder_delta > 0.0,
    )


def closed_operator(assembly: LinearAssembly) -> np.ndarray:
    """``T^{-1} S0``, whose eigenvalues are ``exp(-i E L)``."""
    return np.linalg.solve(assembly.T, assembly.S0)
