"""Eigenanalysis of the closed linear network: spectra, bands, gaps, edge modes."""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np
import scipy.linalg

from .config import Geometry, NetworkConfig
from .netmodel import (
    IndexMap,
    LinearAssembly,
    Sector,
    apply_imperfections,
    assemble_closed,
    closed_operator,
)

__all__ = [
    "EigenMode",
    "BandStructure",
    "EDGE_ROWS",
    "EDGE_THRESHOLD",
    "fold_energy",
    "energies_from_eigenvalues",
    "closed_spectrum",
    "band_structure",
    "effective_hamiltonian",
    "edge_weight",
    "find_gaps",
    "bulk_gaps",
    "hopping_profile",
]

EDGE_ROWS = 2
EDGE_THRESHOLD = 0.6


@dataclasses.dataclass
class EigenMode:
    energy: complex
    vector: np.ndarray
    sector: Sector
    kx: float | None
    edge_weight_top: float = 0.0
    edge_weight_bottom: float = 0.0

    @property
    def lifetime(self) -> float:
        """``1 / |Im E|`` (infinite for a lossless mode)."""
        im = abs(self.energy.imag)
        return np.inf if im == 0 else 1.0 / im

    @property
    def is_edge(self) -> bool:
        return max(self.edge_weight_top, self.edge_weight_bottom) > EDGE_THRESHOLD


@dataclasses.dataclass
class BandStructure:
    kx_grid: np.ndarray
    modes: list  # per kx: list of EigenMode
    sector: Sector
    gaps: list = dataclasses.field(default_factory=list)
    L: float = 1.0

    def energies(self) -> np.ndarray:
        """Array ``(n_kx, n_modes)`` of complex energies."""
        return np.array([[m.energy for m in ms] for ms in self.modes])

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        top = np.array([[m.edge_weight_top for m in ms] for ms in self.modes])
        bot = np.array([[m.edge_weight_bottom for m in ms] for ms in self.modes])
        return top, bot


def fold_energy(E, L: float = 1.0):
    """Map real parts into ``(-pi/L, pi/L]``."""
    E = np.asarray(E)
    period = 2.0 * np.pi / L
    re = np.real(E)
    folded = re - period * np.ceil((re - np.pi / L) / period)
    # ceil puts exact +pi/L at +pi/L and -pi/L at +pi/L
    if np.iscomplexobj(E):
        return folded + 1j * np.imag(E)
    return folded


def energies_from_eigenvalues(lam, L: float = 1.0):
    """``E = i ln(lam) / L`` with the real part folded to ``(-pi/L, pi/L]``."""
    lam = np.asarray(lam, dtype=complex)
    return fold_energy(1j * np.log(lam) / L, L)


def _row_weights(vectors: np.ndarray, index: IndexMap, rows: int):
    Ny = index.Ny
    if rows > Ny:
        raise ValueError(f"rows={rows} exceeds Ny={Ny}")
    r = index.rows()
    p = np.abs(vectors) ** 2
    norm = p.sum(axis=0)
    top = p[r <= rows].sum(axis=0) / norm
    bot = p[r > Ny - rows].sum(axis=0) / norm
    return top, bot


def edge_weight(mode, rows: int = EDGE_ROWS, index: IndexMap | None = None):
    """Fraction of a mode's weight in the top and bottom ``rows`` rows (all directions).

    ``mode`` is an :class:`EigenMode` or a bare vector; a bare vector needs
    ``index``.
    """
    vec = mode.vector if isinstance(mode, EigenMode) else np.asarray(mode)
    if index is None:
        index = IndexMap(len(vec) // 4)
    top, bot = _row_weights(vec[:, None], index, rows)
    return float(top[0]), float(bot[0])


def closed_spectrum(assembly: LinearAssembly, L: float = 1.0, rows: int = EDGE_ROWS) -> list[EigenMode]:
    """Eigenmodes of ``T^{-1} S0 a = exp(-i E L) a`` sorted by ``Re E``.

    Falls back to the complex Schur form when the eigenvector basis is
    numerically defective; the fallback is reported with a warning and the
    Schur vectors are returned as (orthonormal) mode vectors.
    """
    M = closed_operator(assembly)
    lam, vecs = np.linalg.eig(M)
    cond = np.linalg.cond(vecs)
    if not np.isfinite(cond) or cond > 1e10:
        warnings.warn(f"nearly defective closed operator (cond {cond:.2e}); using Schur vectors", RuntimeWarning)
        Tm, Z = scipy.linalg.schur(M, output="complex")
        lam, vecs = np.diag(Tm).copy(), Z
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    E = energies_from_eigenvalues(lam, L)
    order = np.argsort(E.real, kind="stable")
    index = assembly.index
    top, bot = _row_weights(vecs, index, rows) if index.Ny >= rows else (np.zeros(len(E)), np.zeros(len(E)))
    return [
        EigenMode(complex(E[j]), vecs[:, j], assembly.sector, assembly.kx, float(top[j]), float(bot[j]))
        for j in order
    ]


def band_structure(config: NetworkConfig, sector, kx_grid, L: float | None = None, imperfect: bool = True) -> BandStructure:
    """Closed spectra of a torus or cylinder over a grid of quasi-momenta."""
    if config.geometry is Geometry.PLANE:
        raise ValueError("band_structure needs Torus or Cylinder geometry")
    kx_grid = np.asarray(kx_grid, dtype=float)
    if kx_grid.size == 0:
        raise ValueError("empty kx grid")
    L = config.L if L is None else L
    sector = Sector.parse(sector)
    modes = []
    for kx in kx_grid:
        asm = assemble_closed(config, sector, kx)
        if imperfect:
            asm = apply_imperfections(asm, config)
        modes.append(closed_spectrum(asm, L))
    band = BandStructure(kx_grid, modes, sector, L=L)
    band.gaps = find_gaps(band)
    return band


def effective_hamiltonian(assembly: LinearAssembly, L: float = 1.0) -> np.ndarray:
    """``H = i ln(T^{-1} S0) / L`` with the principal matrix logarithm.

    For a unitary operator the logarithm is taken through the complex Schur
    form, which is diagonal for normal matrices, so ``H`` is Hermitian to
    rounding.  Eigenvalues close to the branch cut at ``-1`` are warned about.
    """
    if assembly.lossy:
        raise ValueError("effective Hamiltonian requires a lossless assembly")
    M = closed_operator(assembly)
    Tm, Z = scipy.linalg.schur(M, output="complex")
    lam = np.diag(Tm)
    off = np.abs(np.triu(Tm, 1)).max() if len(lam) > 1 else 0.0
    if off > 1e-8:
        H = 1j * scipy.linalg.logm(M) / L
    else:
        H = (Z * (1j * np.log(lam) / L)) @ Z.conj().T
    dist = np.min(np.abs(np.angle(lam) - np.pi * np.sign(np.angle(lam) + 1e-300)))
    if dist < 1e-8:
        warnings.warn(f"eigenvalue within {dist:.1e} of the logarithm branch cut", RuntimeWarning)
    return H


def hopping_profile(H: np.ndarray, Ny: int) -> np.ndarray:
    """Largest |H| element between rows separated by ``d = 0 .. Ny-1`` (per-kx basis)."""
    index = IndexMap(Ny)
    rows = index.rows()
    dist = np.abs(rows[:, None] - rows[None, :])
    return np.array([np.abs(H[dist == d]).max() for d in range(Ny)])


def _circular_gaps(values: np.ndarray, tolerance: float, L: float):
    period = 2.0 * np.pi / L
    v = np.sort(fold_energy(np.asarray(values, dtype=float), L))
    if v.size == 0:
        return [(-np.pi / L, np.pi / L)]
    gaps = []
    diffs = np.diff(v)
    for a, b, d in zip(v[:-1], v[1:], diffs):
        if d > 2.0 * tolerance:
            gaps.append((float(a), float(b)))
    wrap = v[0] + period - v[-1]
    if wrap > 2.0 * tolerance:
        gaps.append((float(v[-1]), float(v[0] + period)))
    return gaps


def find_gaps(band, tolerance: float | None = None, exclude_edge: bool = False, min_width: float = 0.0, L: float | None = None):
    """Maximal circular intervals of ``Re E`` free of modes.

    ``band`` is a :class:`BandStructure` or an array of real energies.  A gap
    is reported as ``(lower, upper)``; the gap that wraps through ``pi/L`` has
    ``upper > pi/L``.  ``exclude_edge`` drops edge-localized modes first so a
    cylinder yields its bulk gaps.  Gaps narrower than ``min_width`` are
    discarded.
    """
    if isinstance(band, BandStructure):
        L = band.L
        E = band.energies().real
        if exclude_edge:
            top, bot = band.weights()
            E = E[np.maximum(top, bot) <= EDGE_THRESHOLD]
    else:
        L = 1.0 if L is None else L
        E = np.asarray(band, dtype=float)
    if tolerance is None:
        tolerance = 1e-6 * 2.0 * np.pi / L
    gaps = _circular_gaps(E.ravel(), tolerance, L)
    return [g for g in gaps if g[1] - g[0] > min_width]


def bulk_gaps(band: BandStructure, min_width: float):
    """Gaps wider than ``min_width`` after removing edge modes."""
    return find_gaps(band, exclude_edge=True, min_width=min_width)
