"""Driven linear response of the open cylinder and the open plane."""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np
import scipy.linalg

from .config import Geometry, NetworkConfig
from .netmodel import (
    D,
    LEFT,
    R,
    IndexMap,
    Sector,
    apply_imperfections,
    assemble_closed,
    assemble_plane,
    closed_operator,
)

__all__ = [
    "DrivenSolution",
    "PhaseScan",
    "TransmissionScan",
    "cylinder_operator",
    "solve_driven_cylinder",
    "reflection_phase_scan",
    "resolved_phase_scan",
    "phase_window",
    "reflection_phase_shift",
    "plane_operator",
    "solve_driven_plane",
    "transmission_scan",
    "boundary_weight",
    "find_peaks",
    "open_resonances",
]


class SingularSystemError(np.linalg.LinAlgError):
    """The driven linear system is singular (closed lossless resonance)."""


@dataclasses.dataclass
class DrivenSolution:
    amplitudes: np.ndarray
    omega_d: float
    A_in: complex
    kx: float | None = None
    A_out: complex | None = None
    A_R: complex | None = None
    A_T: complex | None = None
    index: IndexMap | None = None

    def intensity_map(self) -> np.ndarray:
        """``|a_{s,n(,m)} / A_in|^2`` reshaped to ``(4, Ny[, Nx])``."""
        p = np.abs(self.amplitudes / self.A_in) ** 2
        if self.index.Nx is None:
            return p.reshape(4, self.index.Ny)
        return p.reshape(4, self.index.Ny, self.index.Nx)


def reflection_phase_shift(r_BM: float) -> float:
    """``arg((1 + i r) / (1 - i r)) = 2 arctan r``: the on-resonance reflection phase."""
    return float(np.angle((1 + 1j * r_BM) / (1 - 1j * r_BM)))


def cylinder_operator(config: NetworkConfig, sector, kx: float) -> np.ndarray:
    """``T^{-1} S0(kx)`` of the closed cylinder with imperfections applied."""
    if config.geometry is not Geometry.CYLINDER:
        raise ValueError(f"driven cylinder needs Cylinder geometry, got {config.geometry.value}")
    return closed_operator(apply_imperfections(assemble_closed(config, sector, kx), config))


def _solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """LU solve; a singular but consistent system (a dark mode that the drive
    cannot reach) falls back to the minimum-norm solution."""
    lu = scipy.linalg.lu_factor(A, check_finite=False)
    if np.min(np.abs(np.diag(lu[0]))) > 1e-13 * np.abs(A).max():
        return scipy.linalg.lu_solve(lu, b, check_finite=False)
    x = scipy.linalg.lstsq(A, b, cond=1e-12, check_finite=False)[0]
    if np.linalg.norm(A @ x - b) > 1e-9 * max(np.linalg.norm(b), 1e-300):
        raise SingularSystemError("driven system is singular at a resonance the drive couples to")
    return x


def solve_driven_cylinder(config: NetworkConfig, sector, kx: float, omega_d: float, A_in: complex = 1.0, operator=None) -> DrivenSolution:
    """Linear driven cylinder: ``R_BM M a = e^{-i w L} a - t e^{-i w L/2} A_in e_{d,1}``.

    ``M = T^{-1} S0(kx)`` places the top-boundary relation in the ``(d, 1)``
    row, where the top mirror replaces the unit entry of ``R_BM`` by
    ``i r_BM``.  ``operator`` reuses a precomputed ``M`` in frequency scans.
    """
    L = config.L
    M = cylinder_operator(config, sector, kx) if operator is None else operator
    Ny = config.Ny
    d1 = 3 * Ny
    RM = M.copy()
    RM[d1] *= 1j * config.r_BM
    n = RM.shape[0]
    rhs = np.zeros(n, dtype=complex)
    rhs[d1] = config.t_BM * np.exp(-0.5j * omega_d * L) * A_in
    a = _solve(np.exp(-1j * omega_d * L) * np.eye(n) - RM, rhs)
    if config.r_BM == 0:
        A_out = config.t_BM * np.exp(0.5j * omega_d * L) * (M[d1] @ a)
    else:
        A_out = (config.t_BM * np.exp(-0.5j * omega_d * L) * a[d1] - A_in) / (1j * config.r_BM)
    return DrivenSolution(a, float(omega_d), complex(A_in), kx=float(kx), A_out=complex(A_out), index=IndexMap(Ny))


def phase_window(delta, r_BM: float):
    """``Delta - (pi + 2 arctan r_BM)`` wrapped into ``(-pi, pi]``."""
    x = np.asarray(delta) - (np.pi + 2.0 * np.arctan(r_BM))
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


@dataclasses.dataclass
class PhaseScan:
    omega: np.ndarray
    A_out: np.ndarray
    delta: np.ndarray  # continuously unwrapped arg(A_out / A_in)
    window: np.ndarray  # delta - (pi + 2 arctan r_BM), wrapped to (-pi, pi]
    derivative: np.ndarray  # d delta / d omega by central differences
    derivative_exact: np.ndarray  # Im(A_out' / A_out) from the resolvent
    kx: float
    sector: Sector

    def rows(self):
        return list(zip(self.omega, self.delta, self.derivative))


def _resolvent_entries(RM: np.ndarray, i_in: int, outs, omega: np.ndarray, L: float, derivative: bool = True):
    """``G_o(w) = [(z - RM)^{-1}]_{o, i_in}`` and ``dG_o/dw`` with ``z = exp(-i w L)``.

    One eigendecomposition serves the whole grid (the response is a sum of
    poles in ``z``); an ill-conditioned eigenbasis or a grid point on a pole
    falls back to one LU per frequency.
    """
    outs = list(outs)
    z = np.exp(-1j * omega * L)
    dz = -1j * L * z
    w, V = np.linalg.eig(RM)
    if np.linalg.cond(V) < 1e8:
        Vi = np.linalg.inv(V)
        den = z[None, :] - w[:, None]
        n = RM.shape[0]
        e = np.zeros((n, 1), dtype=complex)
        e[i_in] = 1.0

        def solve(B):
            # eigenbasis solve of (z - RM) X = B per column, refined against
            # the true residual so the error does not scale with cond(V)
            X = V @ ((Vi @ B) / den)
            for _ in range(2):
                X = X + V @ ((Vi @ (B - (z * X - RM @ X))) / den)
            return X

        with np.errstate(divide="ignore", invalid="ignore"):
            X = solve(np.broadcast_to(e, (n, z.size)))
            dX = solve(-dz * X) if derivative else np.zeros_like(X)
        G, dG = X[outs], dX[outs]
        if np.all(np.isfinite(G)) and np.all(np.isfinite(dG)):
            return G, dG
    n = RM.shape[0]
    G = np.empty((len(outs), omega.size), dtype=complex)
    dG = np.empty_like(G)
    e = np.zeros(n, dtype=complex)
    e[i_in] = 1.0
    for j, (zj, dzj) in enumerate(zip(z, dz)):
        K = zj * np.eye(n) - RM
        x = _solve(K, e)
        dx = _solve(K, -dzj * x) if derivative else np.zeros_like(x)
        G[:, j] = x[outs]
        dG[:, j] = dx[outs]
    return G, dG


def _cylinder_response(config: NetworkConfig, M: np.ndarray, omega: np.ndarray):
    """``A_out / A_in`` and its exact frequency derivative on a grid."""
    L, r, t = config.L, config.r_BM, config.t_BM
    d1 = 3 * config.Ny
    RM = M.copy()
    RM[d1] *= 1j * r
    G, dG = _resolvent_entries(RM, d1, [d1], omega, L)
    z = np.exp(-1j * omega * L)
    dz = -1j * L * z
    if r > 0:
        # t e^{-iwL/2} a_{d,1} = t^2 z G
        out = (t * t * z * G[0] - 1.0) / (1j * r)
        dout = t * t * (dz * G[0] + z * dG[0]) / (1j * r)
    else:
        # the mirror is fully transparent: A_out is the up-moving output itself
        Gm, dGm = _resolvent_entries(RM, d1, range(RM.shape[0]), omega, L)
        row = M[d1]
        out = t * t * (row @ Gm)
        dout = t * t * (row @ dGm)
    return out, dout


def reflection_phase_scan(config: NetworkConfig, sector, kx: float, omega_grid, A_in: complex = 1.0) -> PhaseScan:
    """Reflected phase ``Delta(omega_d)`` of the driven cylinder and its derivative.

    ``delta`` is unwrapped continuously along the grid and ``window`` is the
    wrapped quantity ``Delta - (pi + 2 arctan r_BM)``, which wraps by 2 pi at
    each closed-network resonance (from +pi to -pi for increasing omega in
    the ``exp(-i omega L)`` convention).  ``derivative`` is the central
    difference of ``delta``; ``derivative_exact`` is the analytic derivative,
    immune to resonances narrower than the grid step.
    """
    omega = np.asarray(omega_grid, dtype=float)
    if omega.ndim != 1 or omega.size < 3:
        raise ValueError("omega grid needs at least 3 points")
    if not (np.all(np.diff(omega) > 0) or np.all(np.diff(omega) < 0)):
        raise ValueError("omega grid must be strictly monotone")
    M = cylinder_operator(config, sector, kx)
    ratio, dratio = _cylinder_response(config, M, omega)
    raw = np.angle(ratio)
    exact = np.imag(dratio / ratio)
    delta = np.unwrap(raw)
    deriv = np.gradient(delta, omega)
    # a step of more than pi/2 where the exact derivative is small means
    # the phase moved faster than the grid can follow
    step = np.abs(np.diff(delta))
    slow = np.maximum(np.abs(exact[:-1]), np.abs(exact[1:])) * np.abs(np.diff(omega)) < np.pi / 8
    if np.any((step > np.pi / 2) & slow):
        warnings.warn("omega grid too coarse to unwrap the reflection phase away from resonances", RuntimeWarning)
    return PhaseScan(omega, ratio * A_in, delta, phase_window(delta, config.r_BM), deriv, exact, float(kx), Sector.parse(sector))


def resolved_phase_scan(config: NetworkConfig, sector, kx: float, lo: float, hi: float, n: int = 200, max_step: float = 0.5, max_rounds: int = 60) -> PhaseScan:
    """Reflection phase on ``[lo, hi]`` with a grid fine enough to follow every resonance.

    The grid is seeded around each open resonance in the interval and then
    bisected until the phase advance between neighbours, estimated from the
    exact derivative, stays below ``max_step`` radians.
    """
    parts = [np.linspace(lo, hi, n)]
    for p in open_resonances(config, sector, kx):
        if lo < p.real < hi:
            parts.append(p.real + abs(p.imag) * np.linspace(-20.0, 20.0, 81))
    grid = np.unique(np.clip(np.concatenate(parts), lo, hi))
    for _ in range(max_rounds):
        scan = reflection_phase_scan(config, sector, kx, grid)
        ex = np.abs(scan.derivative_exact)
        bad = np.flatnonzero(np.maximum(ex[1:], ex[:-1]) * np.diff(grid) > max_step)
        if bad.size == 0:
            return scan
        grid = np.sort(np.concatenate([grid, 0.5 * (grid[bad] + grid[bad + 1])]))
    raise RuntimeError(f"phase not resolved on [{lo}, {hi}] after {max_rounds} refinements")


def open_resonances(config: NetworkConfig, sector, kx: float) -> np.ndarray:
    """Complex resonance frequencies of the driven cylinder, sorted by real part.

    These are the poles of ``A_out / A_in``: ``exp(-i omega L)`` runs over the
    eigenvalues of the operator with the partial mirror in place.  The
    imaginary part is minus the half-width set by leakage through the mirror.
    """
    RM = cylinder_operator(config, sector, kx).copy()
    RM[3 * config.Ny] *= 1j * config.r_BM
    lam = np.linalg.eigvals(RM)
    lam = lam[np.abs(lam) > 1e-14]
    w = 1j * np.log(lam) / config.L
    w = np.angle(np.exp(1j * w.real * config.L)) / config.L + 1j * w.imag
    return w[np.argsort(w.real)]


def find_peaks(y: np.ndarray, min_height: float | None = None) -> np.ndarray:
    """Indices of strict local maxima of ``y`` above ``min_height``."""
    y = np.asarray(y)
    inner = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    if min_height is not None:
        inner = inner[y[inner] > min_height]
    return inner


def plane_operator(config: NetworkConfig, sector) -> np.ndarray:
    return closed_operator(apply_imperfections(assemble_plane(config, sector), config))


def solve_driven_plane(config: NetworkConfig, sector, omega_d: float, A_in: complex = 1.0, operator=None) -> DrivenSolution:
    """Open plane driven through the mirror at node (1, 1), detected at (Ny, Nx).

    The two partially transmitting mirrors replace the unit entries of the
    ``r_{1,1}`` and ``l_{Ny,Nx}`` rows of ``R_BM`` by ``i r_BM``.
    """
    L = config.L
    M = plane_operator(config, sector) if operator is None else operator
    idx = IndexMap(config.Ny, config.Nx)
    i_in = idx.index(R, 1, 1)
    i_out = idx.index(LEFT, config.Ny, config.Nx)
    RM = M.copy()
    RM[i_in] *= 1j * config.r_BM
    RM[i_out] *= 1j * config.r_BM
    n = RM.shape[0]
    rhs = np.zeros(n, dtype=complex)
    rhs[i_in] = config.t_BM * np.exp(-0.5j * omega_d * L) * A_in
    a = _solve(np.exp(-1j * omega_d * L) * np.eye(n) - RM, rhs)
    ph = config.t_BM * np.exp(-0.5j * omega_d * L)
    if config.r_BM == 0:
        back = config.t_BM * np.exp(0.5j * omega_d * L)
        A_R = back * (M[i_in] @ a)
        A_T = back * (M[i_out] @ a)
    else:
        A_R = (ph * a[i_in] - A_in) / (1j * config.r_BM)
        A_T = ph * a[i_out] / (1j * config.r_BM)
    return DrivenSolution(a, float(omega_d), complex(A_in), A_R=complex(A_R), A_T=complex(A_T), index=idx)


@dataclasses.dataclass
class TransmissionScan:
    omega: np.ndarray
    transmission: np.ndarray  # |A_T / A_in|^2
    reflection: np.ndarray  # |A_R / A_in|^2
    sector: Sector


def transmission_scan(config: NetworkConfig, sector, omega_grid) -> TransmissionScan:
    """``|A_T/A_in|^2`` and ``|A_R/A_in|^2`` of the open plane on a frequency grid."""
    omega = np.asarray(omega_grid, dtype=float)
    M = plane_operator(config, sector)
    idx = IndexMap(config.Ny, config.Nx)
    i_in, i_out = idx.index(R, 1, 1), idx.index(LEFT, config.Ny, config.Nx)
    r, t, L = config.r_BM, config.t_BM, config.L
    if r == 0:
        sols = [solve_driven_plane(config, sector, w, operator=M) for w in omega]
        T = np.array([abs(s.A_T) ** 2 for s in sols])
        Rr = np.array([abs(s.A_R) ** 2 for s in sols])
        return TransmissionScan(omega, T, Rr, Sector.parse(sector))
    RM = M.copy()
    RM[i_in] *= 1j * r
    RM[i_out] *= 1j * r
    G, _ = _resolvent_entries(RM, i_in, [i_in, i_out], omega, L, derivative=False)
    z = np.exp(-1j * omega * L)
    A_R = (t * t * z * G[0] - 1.0) / (1j * r)
    A_T = t * t * z * G[1] / (1j * r)
    return TransmissionScan(omega, np.abs(A_T) ** 2, np.abs(A_R) ** 2, Sector.parse(sector))


def boundary_weight(solution: DrivenSolution, width: int = 1) -> float:
    """Fraction of internal intensity on nodes within ``width`` of the plane's outer edge.

    For a cylinder solution, the fraction on the top and bottom ``width`` rows.
    """
    p = solution.intensity_map().sum(axis=0)
    if p.ndim == 1:
        Ny = p.size
        mask = (np.arange(Ny) < width) | (np.arange(Ny) >= Ny - width)
        return float(p[mask].sum() / p.sum())
    Ny, Nx = p.shape
    n, m = np.meshgrid(np.arange(Ny), np.arange(Nx), indexing="ij")
    mask = (n < width) | (n >= Ny - width) | (m < width) | (m >= Nx - width)
    return float(p[mask].sum() / p.sum())
