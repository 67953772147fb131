"""Kerr-nonlinear steady states of driven fiber circuits.

A circuit is a set of arrival amplitudes ``a_j`` (fields reaching a junction
at the end of a fiber segment of length ``ell``) together with the linear
routing ``J`` that maps arrivals onto the starts of the next segments.  Each
segment adds the intensity-dependent phase ``exp(i (omega - chi' N_j) ell)``
with ``N_j = |a_j|^2 + 2 |a_partner|^2`` (self- and cross-phase modulation of
the two counter-propagating fields sharing a fiber).  The steady equations
are the zeros of

    F(a) = J a + u e^{-i omega tau} A - e^{-i (omega - chi' N) ell} a.

The driven cylinder and the nonlinear Fabry-Perot cavity are both instances
(see :func:`cylinder_circuit` and ``fpcavity.fp_circuit``).
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Callable

import numpy as np

from .config import Geometry, NetworkConfig
from .netmodel import D, LEFT, R, U, IndexMap, Sector, apply_imperfections, assemble_closed, closed_operator, row_flux_phases, _draw_deltas

__all__ = [
    "ConvergenceError",
    "KerrCircuit",
    "SteadyState",
    "ContinuationCurve",
    "cylinder_circuit",
    "kerr_phase_matrix",
    "steady_residual",
    "real_jacobian",
    "linear_solution",
    "solve_steady",
    "homotopy_in_chi",
    "continuation_sweep",
    "observables",
    "states_at_total",
    "states_at_drive",
    "row_weight",
]


class ConvergenceError(RuntimeError):
    """Newton or continuation failed; ``last`` holds the final iterate."""

    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


@dataclasses.dataclass
class KerrCircuit:
    """Fiber circuit with Kerr segments.

    ``routing(p)`` returns ``J`` at Bloch momentum ``p`` (constant for
    circuits without translation symmetry).  ``fibers`` lists the arrival
    pairs sharing a fiber as ``(forward, backward)``.  A backward entry of
    -1 marks a folded Kerr stub whose field counter-propagates with itself
    (``N = 3 |a|^2``); -2 marks a linear link without Kerr medium.
    ``twist`` is 1 for fibers whose two ends sit in neighbouring columns of a
    Bloch-reduced network.  ``post_phase`` is the constant phase applied
    after propagation (the plate phase on backward fibers); it only fixes the
    frame used for fluctuations.
    """

    routing: Callable[[float], np.ndarray]
    fibers: np.ndarray
    twist: np.ndarray
    drive: np.ndarray
    chi: float
    chi_scale: float = 1.0
    kx: float = 0.0
    length: float = 1.0
    drive_delay: float = 0.0
    out_direct: complex = 0.0
    out_row: Callable[[float], np.ndarray] | None = None
    out_delay: float = 0.0
    post_phase: np.ndarray | None = None
    index: IndexMap | None = None
    r_BM: float | None = None
    config: NetworkConfig | None = None
    sector: Sector | None = None

    def __post_init__(self):
        self.fibers = np.asarray(self.fibers, dtype=int).reshape(-1, 2)
        self.twist = np.asarray(self.twist, dtype=float)
        self.drive = np.asarray(self.drive, dtype=complex)
        n = self.drive.size
        if self.post_phase is None:
            self.post_phase = np.ones(n, dtype=complex)
        # each arrival belongs to exactly one fiber
        used = np.concatenate([self.fibers[:, 0], self.fibers[self.fibers[:, 1] >= 0, 1]])
        if np.any(self.fibers[:, 1] < -2):
            raise ValueError("backward arrival must be an index, -1 or -2")
        if sorted(used.tolist()) != list(range(n)):
            raise ValueError("every arrival must belong to exactly one fiber")
        # coefficient matrix of N = C |a|^2
        C = np.zeros((n, n))
        for f, b in self.fibers:
            if b == -1:
                C[f, f] = 3.0
            elif b == -2:
                pass
            else:
                C[f, f] = C[b, b] = 1.0
                C[f, b] = C[b, f] = 2.0
        self.coupling = C
        self._J = {}

    @property
    def size(self) -> int:
        return self.drive.size

    def J(self, p: float | None = None) -> np.ndarray:
        p = self.kx if p is None else float(p)
        if p not in self._J:
            self._J[p] = np.asarray(self.routing(p), dtype=complex)
        return self._J[p]

    @property
    def chi_eff(self) -> float:
        """Coefficient in front of the intensity in the segment phase."""
        return self.chi * self.chi_scale

    def with_chi(self, chi: float) -> "KerrCircuit":
        new = dataclasses.replace(self, chi=float(chi))
        new._J = self._J
        return new

    def output(self, a, A_in, omega, p=None) -> complex:
        """Outgoing field at the drive port for the steady state ``a``."""
        if self.out_row is None:
            return complex("nan")
        p = self.kx if p is None else p
        return self.out_direct * A_in + np.exp(1j * omega * self.out_delay) * (self.out_row(p) @ a)


@dataclasses.dataclass
class SteadyState:
    amplitudes: np.ndarray
    omega_d: float
    A_in: complex
    circuit: KerrCircuit
    residual_norm: float
    iterations: int = 0
    stable: bool | None = None

    @property
    def kx(self):
        return self.circuit.kx

    @property
    def chi(self):
        return self.circuit.chi

    @property
    def r_BM(self):
        return self.circuit.r_BM

    @property
    def N_p(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    @property
    def A_out(self) -> complex:
        return self.circuit.output(self.amplitudes, self.A_in, self.omega_d)


@dataclasses.dataclass
class ContinuationCurve:
    """Points ``(|chi| |A_in|^2, |chi| N_p)`` along a traced branch.

    For ``chi = 0`` the columns are the unscaled ``|A_in|^2`` and ``N_p``.

    ``branch`` increments at every fold; ``folds`` indexes the refined fold
    points.  ``truncated`` is set when the step size underflowed.
    """

    drive: np.ndarray
    total: np.ndarray
    states: list
    branch: np.ndarray
    folds: list
    truncated: bool = False

    def max_coexisting(self, grid=None) -> int:
        """Largest number of states sharing one drive value."""
        x = self.drive
        if grid is None:
            lo, hi = x.min(), x.max()
            grid = np.linspace(lo, hi, 400)[1:-1]
        crossings = np.zeros(len(grid), dtype=int)
        for i in range(len(x) - 1):
            a, b = sorted((x[i], x[i + 1]))
            crossings += (grid >= a) & (grid < b)
        return int(crossings.max()) if len(grid) else 0


def _pinned_flux(config: NetworkConfig, sector: Sector) -> np.ndarray:
    deltas = _draw_deltas(config, (config.Ny,)) if config.disorder_delta > 0 else None
    return sector * row_flux_phases(config.Ny, config.theta0, deltas)


def cylinder_circuit(config: NetworkConfig, sector, kx: float, chi: float | None = None) -> KerrCircuit:
    """Kerr circuit of the cylinder driven through its top mirrors at momentum ``kx``.

    The normalized Bloch ansatz puts ``chi / Nx`` in front of the intensity.
    The segment through the driven top mirror (arrival d,1) is a linear
    link; the segment closed by the bottom mirror (arrival u,Ny) folds back
    on itself and carries ``3 |a|^2``.
    """
    if config.geometry is not Geometry.CYLINDER:
        raise ValueError(f"the driven Kerr network needs Cylinder geometry, got {config.geometry.value}")
    sector = Sector.parse(sector)
    Ny, L = config.Ny, config.L
    idx = IndexMap(Ny)
    d1 = idx.index(D, 1)
    r, t = config.r_BM, config.t_BM

    def bare(p):
        return closed_operator(apply_imperfections(assemble_closed(config, sector, p), config))

    def routing(p):
        M = bare(p).copy()
        M[d1] *= 1j * r
        return M

    def out_row(p):
        return t * bare(p)[d1]

    fibers, twist = [], []
    for n in range(1, Ny + 1):
        fibers.append((idx.index(R, n), idx.index(LEFT, n)))
        twist.append(1)
    for n in range(1, Ny):
        fibers.append((idx.index(U, n), idx.index(D, n + 1)))
        twist.append(0)
    fibers += [(d1, -2), (idx.index(U, Ny), -1)]
    twist += [0, 0]
    post = np.ones(idx.size, dtype=complex)
    post[[idx.index(LEFT, n) for n in range(1, Ny + 1)]] = np.exp(1j * _pinned_flux(config, sector))
    drive = np.zeros(idx.size, dtype=complex)
    drive[d1] = t
    chi = config.chi if chi is None else chi
    return KerrCircuit(
        routing=routing,
        fibers=fibers,
        twist=twist,
        drive=drive,
        chi=chi,
        chi_scale=1.0 / config.Nx,
        kx=float(kx),
        length=L,
        drive_delay=L / 2,
        out_direct=1j * r,
        out_row=out_row,
        out_delay=L / 2,
        post_phase=post,
        index=idx,
        r_BM=r,
        config=config,
        sector=sector,
    )


def kerr_phase_matrix(circuit: KerrCircuit, a) -> np.ndarray:
    """Diagonal of the intensity matrix, ``N_j = |a_j|^2 + 2 |a_partner|^2``."""
    return circuit.coupling @ (np.abs(a) ** 2)


def _segment_phase(circuit, a, omega):
    N = kerr_phase_matrix(circuit, a)
    return np.exp(-1j * (omega - circuit.chi_eff * N) * circuit.length)


def steady_residual(circuit: KerrCircuit, a, omega_d: float, A_in: complex) -> np.ndarray:
    """``J a + u e^{-i omega tau} A_in - e^{-i (omega - chi' N) ell} a``; zero on steady states."""
    a = np.asarray(a, dtype=complex)
    E = _segment_phase(circuit, a, omega_d)
    return circuit.J() @ a + circuit.drive * np.exp(-1j * omega_d * circuit.drive_delay) * A_in - E * a


def wirtinger(circuit: KerrCircuit, a, omega_d: float):
    """``(dF/da, dF/da*)`` of the steady residual."""
    E = _segment_phase(circuit, a, omega_d)
    g = 1j * circuit.chi_eff * circuit.length * E * a
    C = circuit.coupling
    A = circuit.J() - np.diag(E) - g[:, None] * C * np.conj(a)[None, :]
    B = -g[:, None] * C * a[None, :]
    return A, B


def real_jacobian(circuit: KerrCircuit, a, omega_d: float) -> np.ndarray:
    """Jacobian of ``(Re F, Im F)`` with respect to ``(Re a, Im a)``."""
    A, B = wirtinger(circuit, a, omega_d)
    P, Q = A + B, 1j * (A - B)
    return np.block([[P.real, Q.real], [P.imag, Q.imag]])


def _split(z):
    return np.concatenate([z.real, z.imag])


def _join(x):
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def linear_solution(circuit: KerrCircuit, omega_d: float, A_in: complex) -> np.ndarray:
    """Steady state at ``chi = 0``: ``(e^{-i omega ell} - J) a = u e^{-i omega tau} A``."""
    K = np.exp(-1j * omega_d * circuit.length) * np.eye(circuit.size) - circuit.J()
    rhs = circuit.drive * np.exp(-1j * omega_d * circuit.drive_delay) * A_in
    x, *_ = np.linalg.lstsq(K, rhs, rcond=None) if np.linalg.cond(K) > 1e14 else (np.linalg.solve(K, rhs),)
    return x


def solve_steady(circuit: KerrCircuit, omega_d: float, A_in: complex, guess=None, tol: float = 1e-10, max_iter: int = 60) -> SteadyState:
    """Damped Newton on the real-imaginary split of the steady equations.

    The map involves ``|a|^2`` and is not complex differentiable, so the
    Newton step uses the real ``2n x 2n`` Jacobian built from the Wirtinger
    derivatives.  Raises :class:`ConvergenceError` with the last iterate.
    """
    a = linear_solution(circuit, omega_d, A_in) if guess is None else np.array(guess, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise ValueError("guess must be finite")
    F = steady_residual(circuit, a, omega_d, A_in)
    norm = np.linalg.norm(F)
    for it in range(max_iter + 1):
        if norm < tol:
            return SteadyState(a, omega_d, A_in, circuit, float(norm), it)
        if it == max_iter:
            break
        Jr = real_jacobian(circuit, a, omega_d)
        try:
            step = _join(np.linalg.solve(Jr, -_split(F)))
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian: state sits on a fold", SteadyState(a, omega_d, A_in, circuit, float(norm), it))
        lam = 1.0
        while lam > 1e-4:
            trial = a + lam * step
            Ft = steady_residual(circuit, trial, omega_d, A_in)
            nt = np.linalg.norm(Ft)
            if nt < (1 - 0.25 * lam) * norm or nt < tol:
                break
            lam *= 0.5
        a, F, norm = trial, Ft, nt
    raise ConvergenceError(f"Newton did not converge (residual {norm:.3e})", SteadyState(a, omega_d, A_in, circuit, float(norm), max_iter))


def homotopy_in_chi(circuit: KerrCircuit, omega_d: float, A_in: complex, steps: int = 8, tol: float = 1e-10) -> SteadyState:
    """Follow the linear solution from ``chi = 0`` to the circuit's ``chi``."""
    target = circuit.chi
    a = linear_solution(circuit, omega_d, A_in)
    s, h = 0.0, 1.0 / steps
    while s < 1.0:
        h = min(h, 1.0 - s)
        try:
            st = solve_steady(circuit.with_chi((s + h) * target), omega_d, A_in, a, tol=tol, max_iter=20)
        except ConvergenceError:
            h *= 0.5
            if h < 1e-6:
                raise ConvergenceError("chi homotopy stalled")
            continue
        a, s = st.amplitudes, s + h
        if st.iterations <= 4:
            h *= 1.5
    return solve_steady(circuit, omega_d, A_in, a, tol=tol)


def _augmented(circuit, x, lam, omega, phase):
    a = _join(x)
    F = steady_residual(circuit, a, omega, lam * phase)
    Jx = real_jacobian(circuit, a, omega)
    Jl = _split(circuit.drive * np.exp(-1j * omega * circuit.drive_delay) * phase)
    return _split(F), Jx, Jl


def _tangent(Jx, Jl, prev):
    n = Jx.shape[0]
    G = np.zeros((n + 1, n + 1))
    G[:n, :n], G[:n, n], G[n] = Jx, Jl, prev
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    t = np.linalg.solve(G, rhs)
    return t / np.linalg.norm(t)


def _correct(circuit, z_pred, t, omega, phase, tol, max_iter=12):
    z = z_pred.copy()
    n = z.size - 1
    for it in range(max_iter):
        F, Jx, Jl = _augmented(circuit, z[:n], z[n], omega, phase)
        g = np.append(F, t @ (z - z_pred))
        if np.linalg.norm(g) < tol:
            return z, it
        G = np.zeros((n + 1, n + 1))
        G[:n, :n], G[:n, n], G[n] = Jx, Jl, t
        z = z - np.linalg.solve(G, g)
    F, _, _ = _augmented(circuit, z[:n], z[n], omega, phase)
    if np.linalg.norm(np.append(F, t @ (z - z_pred))) < tol:
        return z, max_iter
    return None, max_iter


def continuation_sweep(
    circuit: KerrCircuit,
    omega_d: float,
    drive_range,
    h0: float = 0.02,
    h_max: float = 0.5,
    h_min: float = 1e-7,
    max_points: int = 5000,
    tol: float = 1e-12,
    refine_folds: bool = True,
    phase: complex = 1.0,
) -> ContinuationCurve:
    """Trace steady states versus drive amplitude through folds.

    ``drive_range = (A_min, A_max)`` bounds ``|A_in|``.  The branch is seeded
    by a homotopy in ``chi`` at ``A_min`` and then followed by
    pseudo-arclength continuation in ``(a, |A_in|)`` until ``|A_in|`` leaves
    the range.  Folds (sign changes of ``d|A_in|/ds``) are refined by
    bisection so the real Jacobian is singular there to high accuracy.
    """
    lo, hi = map(float, drive_range)
    if not (np.isfinite(lo) and np.isfinite(hi)) or not 0 <= lo < hi:
        raise ValueError("drive_range must be finite with 0 <= min < max")
    phase = complex(phase) / abs(phase)
    st = homotopy_in_chi(circuit, omega_d, lo * phase)
    n2 = 2 * circuit.size
    z = np.append(_split(st.amplitudes), lo)
    F, Jx, Jl = _augmented(circuit, z[:n2], lo, omega_d, phase)
    t = np.append(-np.linalg.solve(Jx, Jl), 1.0)
    t /= np.linalg.norm(t)
    pts, branch, folds = [z], [0], []
    h, truncated, b = h0, False, 0
    while len(pts) < max_points:
        z_new, iters = _correct(circuit, z + h * t, t, omega_d, phase, tol)
        if z_new is None:
            h *= 0.5
            if h < h_min:
                truncated = True
                warnings.warn("continuation step underflow; branch truncated", RuntimeWarning)
                break
            continue
        if (z_new[n2] > hi or z_new[n2] < lo) and h > h0:
            # leave the range only with a short step; long steps overshoot turning points
            h *= 0.5
            continue
        _, Jx, Jl = _augmented(circuit, z_new[:n2], z_new[n2], omega_d, phase)
        t_new = _tangent(Jx, Jl, t)
        if np.sign(t_new[n2]) != np.sign(t[n2]) and t[n2] != 0:
            if refine_folds:
                zf = _refine_fold(circuit, z, t, h, omega_d, phase, tol)
                if zf is not None:
                    pts.append(zf)
                    branch.append(b)
                    folds.append(len(pts) - 1)
            else:
                folds.append(len(pts) - 1)
            b += 1
        z, t = z_new, t_new
        pts.append(z)
        branch.append(b)
        if z[n2] > hi or z[n2] < lo:
            break
        if iters <= 3:
            h = min(1.3 * h, h_max)
    Z = np.array(pts)
    lam = Z[:, n2]
    states = []
    for zz in Z:
        a = _join(zz[:n2])
        res = np.linalg.norm(steady_residual(circuit, a, omega_d, zz[n2] * phase))
        states.append(SteadyState(a, omega_d, zz[n2] * phase, circuit, float(res)))
    chi = abs(circuit.chi) or 1.0
    total = np.array([s.N_p for s in states]) * chi
    return ContinuationCurve(chi * lam**2, total, states, np.array(branch), folds, truncated)


def _refine_fold(circuit, z, t, h, omega, phase, tol, iters=60):
    """Bisect the arclength step for the point where ``d|A_in|/ds`` vanishes."""
    n2 = z.size - 1
    a_s, b_s = 0.0, h
    best = None
    for _ in range(iters):
        s = 0.5 * (a_s + b_s)
        zs, _ = _correct(circuit, z + s * t, t, omega, phase, tol)
        if zs is None:
            return best
        _, Jx, Jl = _augmented(circuit, zs[:n2], zs[n2], omega, phase)
        ts = _tangent(Jx, Jl, t)
        best = zs
        if abs(ts[n2]) < 1e-12 or b_s - a_s < 1e-14:
            break
        if np.sign(ts[n2]) == np.sign(t[n2]):
            a_s = s
        else:
            b_s = s
    return best


def states_at_total(curve: ContinuationCurve, target: float, tol: float = 1e-10) -> list[SteadyState]:
    """Steady states on ``curve`` with ``|chi| N_p`` exactly equal to ``target``.

    Every bracketing pair of consecutive points seeds a Newton solve of the
    steady equations augmented by the intensity condition, with the drive
    amplitude as extra unknown.
    """
    out = []
    tot = curve.total
    for i in np.flatnonzero((tot[:-1] - target) * (tot[1:] - target) <= 0):
        s0, s1 = curve.states[i], curve.states[i + 1]
        w = (target - tot[i]) / (tot[i + 1] - tot[i]) if tot[i + 1] != tot[i] else 0.0
        c = s0.circuit
        phase = s0.A_in / abs(s0.A_in) if s0.A_in != 0 else 1.0
        a = (1 - w) * s0.amplitudes + w * s1.amplitudes
        lam = (1 - w) * abs(s0.A_in) + w * abs(s1.A_in)
        chi = abs(c.chi) or 1.0
        for _ in range(30):
            F, Jx, Jl = _augmented(c, _split(a), lam, s0.omega_d, phase)
            g = np.append(F, chi * np.sum(np.abs(a) ** 2) - target)
            if np.linalg.norm(g) < tol:
                break
            n2 = Jx.shape[0]
            G = np.zeros((n2 + 1, n2 + 1))
            G[:n2, :n2], G[:n2, n2] = Jx, Jl
            G[n2, :n2] = 2 * chi * _split(a)
            d = np.linalg.solve(G, -g)
            a, lam = a + _join(d[:n2]), lam + d[n2]
        else:
            continue
        res = float(np.linalg.norm(steady_residual(c, a, s0.omega_d, lam * phase)))
        out.append(SteadyState(a, s0.omega_d, lam * phase, c, res))
    return out


def states_at_drive(curve: ContinuationCurve, drive: float, tol: float = 1e-10) -> list[SteadyState]:
    """Every state on ``curve`` at the drive ``|chi| |A_in|^2 = drive``.

    Each bracketing pair of curve points seeds Newton at the fixed drive.
    """
    out = []
    x = curve.drive
    for i in np.flatnonzero((x[:-1] - drive) * (x[1:] - drive) <= 0):
        s0, s1 = curve.states[i], curve.states[i + 1]
        w = (drive - x[i]) / (x[i + 1] - x[i]) if x[i + 1] != x[i] else 0.0
        c = s0.circuit
        chi = abs(c.chi) or 1.0
        phase = s0.A_in / abs(s0.A_in) if s0.A_in != 0 else 1.0
        guess = (1 - w) * s0.amplitudes + w * s1.amplitudes
        try:
            st = solve_steady(c, s0.omega_d, np.sqrt(drive / chi) * phase, guess, tol=tol)
        except ConvergenceError:
            continue
        if not any(np.linalg.norm(st.amplitudes - o.amplitudes) < 1e-6 * (1 + np.linalg.norm(o.amplitudes)) for o in out):
            out.append(st)
    return out


def observables(state: SteadyState):
    """Total intensity ``N_p`` and the table ``|chi| |a_{s,n}|^2``.

    For a circuit with an index map the table has shape ``(4, Ny)`` in the
    r, u, l, d block order; otherwise it is the flat vector.
    """
    inten = abs(state.circuit.chi) * np.abs(state.amplitudes) ** 2
    idx = state.circuit.index
    if idx is not None and idx.Nx is None:
        inten = inten.reshape(4, idx.Ny)
    return state.N_p, inten


def row_weight(state: SteadyState, width: int = 1) -> float:
    """Fraction of the intensity on the top and bottom ``width`` rows of a cylinder state."""
    _, table = observables(state)
    if table.ndim != 2:
        raise ValueError("row_weight needs a cylinder state")
    rows = table.sum(axis=0)
    Ny = rows.size
    mask = (np.arange(Ny) < width) | (np.arange(Ny) >= Ny - width)
    total = rows.sum()
    return float(rows[mask].sum() / total) if total > 0 else 0.0
