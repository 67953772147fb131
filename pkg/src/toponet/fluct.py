"""Bogoliubov fluctuations around Kerr steady states.

A probe at frequency ``omega_d + omega_f`` and momentum ``p`` couples, through
the Kerr terms, to the conjugate component at ``omega_d - omega_f`` and
momentum ``q = 2 kx - p``.  The unknowns are the arrival fluctuations
``(da_p, da_q*)``.  Every fiber carrying a forward and a backward field
propagates the 4-vector ``(df, db, df*, db*)`` with

    psi(ell) = exp(Sigma (omega_f - Mbar) ell) psi(0),   Sigma = i diag(1, -1, 1, -1),

written in frames that remove the steady propagation phase.  Collecting these
relations gives a matrix ``K(omega_f)`` that is entire in ``omega_f``; its
zeros are the fluctuation eigenfrequencies and a steady state is stable when
all of them lie in the lower half plane.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np
import scipy.linalg

from .kerrsteady import KerrCircuit, SteadyState, kerr_phase_matrix
from .rootfind import LogDet, Rect, find_roots, winding_count

__all__ = [
    "SIGMA",
    "FiberBogMatrix",
    "FluctuationOperator",
    "FluctuationState",
    "SqueezingSpectra",
    "StabilityResult",
    "fiber_bog_matrices",
    "propagation_matrix",
    "assemble_D",
    "stability_roots",
    "is_stable",
    "input_output_matrix",
    "bogoliubov_response",
]

SIGMA = 1j * np.diag([1.0, -1.0, 1.0, -1.0])
_SIGN = np.array([1.0, -1.0, 1.0, -1.0])
STABILITY_MARGIN = 1e-8


@dataclasses.dataclass
class FiberBogMatrix:
    """Linearized Kerr coupling of one fiber.

    ``kind`` is ``"pair"`` (4x4, forward and backward field), ``"stub"``
    (2x2, folded self-coupled segment) or ``"link"`` (2x2 zero, linear).
    """

    Mbar: np.ndarray
    Sigma: np.ndarray
    kind: str
    arrivals: tuple


def _expm_batch(E: np.ndarray, cond_max: float = 1e4) -> np.ndarray:
    """``expm`` of a stack of small matrices via eigendecomposition, with a Pade fallback."""
    w, V = np.linalg.eig(E)
    cond = np.linalg.cond(V)
    ok = np.isfinite(cond) & (cond < cond_max)
    out = np.empty_like(E, dtype=complex)
    if ok.any():
        Vo = V[ok]
        out[ok] = (Vo * np.exp(w[ok])[:, None, :]) @ np.linalg.inv(Vo)
    for i in np.flatnonzero(~ok):
        out[i] = scipy.linalg.expm(E[i])
    return out


def propagation_matrix(fm: FiberBogMatrix | np.ndarray, omega_f: complex, L: float = 1.0) -> np.ndarray:
    """``exp(Sigma (omega_f - Mbar) L)`` for one fiber (4x4) or a self-coupled stub (2x2)."""
    if isinstance(fm, FiberBogMatrix):
        M, S = fm.Mbar, fm.Sigma
    else:
        M = np.asarray(fm, dtype=complex)
        S = SIGMA if M.shape == (4, 4) else 1j * np.eye(M.shape[0])
    E = S @ (omega_f * np.eye(M.shape[0]) - M) * L
    return _expm_batch(E[None])[0]


class FluctuationOperator:
    """``K(omega_f)``, drive vectors and output rows for one steady state and probe momentum."""

    def __init__(self, state: SteadyState, p_x: float | None = None):
        c: KerrCircuit = state.circuit
        a = np.asarray(state.amplitudes, dtype=complex)
        self.state, self.circuit = state, c
        self.omega_d = float(state.omega_d)
        self.p = c.kx if p_x is None else float(p_x)
        self.q = 2 * c.kx - self.p
        n, ell, chi = c.size, c.length, c.chi_eff
        self.n, self.ell = n, ell
        k = self.omega_d - chi * kerr_phase_matrix(c, a)
        pi = c.post_phase
        eik = np.exp(1j * k * ell)
        Z = np.zeros((n, n), dtype=complex)
        Jp, Jq = c.J(self.p), c.J(self.q)
        # frame-normalized start and arrival fluctuations as rows acting on (da_p, da_q*)
        Sp = np.hstack([(eik / pi)[:, None] * Jp, Z])
        Ap = np.hstack([np.diag(1 / pi), Z])
        Sc = np.hstack([Z, (np.conj(eik) / np.conj(pi))[:, None] * np.conj(Jq)])
        Ac = np.hstack([Z, np.diag(1 / np.conj(pi))])
        dp = eik / pi * c.drive
        dc = np.conj(eik) / np.conj(pi) * np.conj(c.drive)
        zero = np.zeros(n, dtype=complex)

        F = c.fibers
        pairs, stubs, links = F[F[:, 1] >= 0], F[F[:, 1] == -1, 0], F[F[:, 1] == -2, 0]
        tw = c.twist[F[:, 1] >= 0]
        self.pairs, self.stubs, self.links = pairs, stubs, links
        j1, j2 = pairs[:, 0], pairs[:, 1]
        al, be = a[j1] / pi[j1], a[j2] / pi[j2]
        eta = np.exp(1j * (c.kx - self.p) * tw)
        etb = np.exp(-1j * (c.kx - np.conj(self.p)) * tw)
        A2, B2 = np.abs(al) ** 2, np.abs(be) ** 2
        ac, bc = np.conj(al), np.conj(be)
        M = np.empty((len(pairs), 4, 4), dtype=complex)
        M[:, 0] = np.stack([A2, 2 * eta * bc * al, al**2, 2 * eta * al * be], axis=1)
        M[:, 1] = np.stack([2 * etb * ac * be, B2, 2 * etb * al * be, be**2], axis=1)
        M[:, 2] = -np.stack([ac**2, 2 * eta * ac * bc, A2, 2 * eta * ac * be], axis=1)
        M[:, 3] = -np.stack([2 * etb * ac * bc, bc**2, 2 * etb * bc * al, B2], axis=1)
        self.Mpair = chi * M
        s = a[stubs] / pi[stubs]
        Ms = np.empty((len(stubs), 2, 2), dtype=complex)
        Ms[:, 0, 0], Ms[:, 0, 1] = np.abs(s) ** 2, s**2
        Ms[:, 1, 0], Ms[:, 1, 1] = -np.conj(s) ** 2, -np.abs(s) ** 2
        self.Mstub = 3 * chi * Ms

        # psi(0) and psi(ell) of every fiber as linear maps of the unknowns
        self._pair0 = np.stack([Sp[j1], Ap[j2], Sc[j1], Ac[j2]], axis=1)
        self._pairL = np.stack([Ap[j1], Sp[j2], Ac[j1], Sc[j2]], axis=1)
        self._dpair0 = np.stack([dp[j1], zero[j2], dc[j1], zero[j2]], axis=1)
        self._dpairL = np.stack([zero[j1], dp[j2], zero[j1], dc[j2]], axis=1)
        self._dpair_is_p = np.array([1, 1, 0, 0], dtype=bool)
        one = np.concatenate([stubs, links])
        self._one0 = np.stack([Sp[one], Sc[one]], axis=1)
        self._oneL = np.stack([Ap[one], Ac[one]], axis=1)
        self._done = np.stack([dp[one], dc[one]], axis=1)
        self._n_stub = len(stubs)

        tau, tau_o = c.drive_delay, c.out_delay
        self._tau, self._tau_o = tau, tau_o
        if c.out_row is not None:
            self._wp = c.out_row(self.p)
            self._wq = np.conj(c.out_row(self.q))
        else:
            self._wp = self._wq = None

    def fiber_matrices(self) -> list[FiberBogMatrix]:
        out = [FiberBogMatrix(M, SIGMA, "pair", (int(f), int(b))) for M, (f, b) in zip(self.Mpair, self.pairs)]
        out += [FiberBogMatrix(M, 1j * np.eye(2), "stub", (int(f), -1)) for M, f in zip(self.Mstub, self.stubs)]
        out += [FiberBogMatrix(np.zeros((2, 2), complex), 1j * np.eye(2), "link", (int(f), -2)) for f in self.links]
        return out

    def _propagators(self, omega_f):
        ell = self.ell
        Ep = (SIGMA[None] @ (omega_f * np.eye(4)[None] - self.Mpair)) * ell
        Pp = _expm_batch(Ep) if len(Ep) else np.zeros((0, 4, 4), complex)
        m = self._one0.shape[0]
        P1 = np.zeros((m, 2, 2), dtype=complex)
        if self._n_stub:
            Es = 1j * (omega_f * np.eye(2)[None] - self.Mstub) * ell
            P1[: self._n_stub] = _expm_batch(Es)
        P1[self._n_stub :] = np.exp(1j * omega_f * ell) * np.eye(2)
        return Pp, P1

    def matrix(self, omega_f: complex) -> np.ndarray:
        """``K(omega_f)`` (``2n x 2n``); entire in ``omega_f``."""
        Pp, P1 = self._propagators(omega_f)
        rows_p = Pp @ self._pair0 - self._pairL
        rows_1 = P1 @ self._one0 - self._oneL
        return np.concatenate([rows_p.reshape(-1, 2 * self.n), rows_1.reshape(-1, 2 * self.n)])

    __call__ = matrix

    def rhs(self, omega_f: complex, dA_plus: complex = 1.0, dA_minus_conj: complex = 0.0) -> np.ndarray:
        """Right-hand side of ``K z = rhs`` for probe amplitudes ``dA+`` and ``(dA-)*``."""
        wd = self.omega_d
        gp = np.exp(-1j * (wd + omega_f) * self._tau) * dA_plus
        gc = np.exp(1j * (wd - omega_f) * self._tau) * dA_minus_conj
        Pp, P1 = self._propagators(omega_f)
        scale4 = np.where(self._dpair_is_p, gp, gc)
        d0 = self._dpair0 * scale4[None, :]
        dL = self._dpairL * scale4[None, :]
        rp = -(np.einsum("mab,mb->ma", Pp, d0) - dL)
        d1 = self._done * np.array([gp, gc])[None, :]
        r1 = -np.einsum("mab,mb->ma", P1, d1)
        return np.concatenate([rp.ravel(), r1.ravel()])

    def solve(self, omega_f, dA_plus=1.0, dA_minus_conj=0.0):
        K = self.matrix(omega_f)
        b = self.rhs(omega_f, dA_plus, dA_minus_conj)
        cond = np.linalg.cond(K)
        if not np.isfinite(cond) or cond > 1e14:
            warnings.warn(f"omega_f = {omega_f} sits on a fluctuation eigenfrequency (cond {cond:.2e})", RuntimeWarning)
        z = np.linalg.solve(K, b)
        return z[: self.n], z[self.n :]

    def output(self, omega_f, dap, daq, dA_plus=1.0, dA_minus_conj=0.0):
        """``(dA_out+, (dA_out-)*)`` at the drive port."""
        if self._wp is None:
            raise ValueError("circuit has no output port")
        c = complex(self.circuit.out_direct)
        wd, to = self.omega_d, self._tau_o
        plus = c * dA_plus + np.exp(1j * (wd + omega_f) * to) * (self._wp @ dap)
        minus = np.conj(c) * dA_minus_conj + np.exp(-1j * (wd - omega_f) * to) * (self._wq @ daq)
        return plus, minus


def fiber_bog_matrices(state: SteadyState, p_x: float | None = None) -> list[FiberBogMatrix]:
    """Per-fiber Bogoliubov coupling matrices (prefactor ``chi'`` included)."""
    return FluctuationOperator(state, p_x).fiber_matrices()


def assemble_D(state: SteadyState, omega_f: complex, p_x: float | None = None) -> np.ndarray:
    """Fluctuation matrix ``K(omega_f)`` of ``state`` at probe momentum ``p_x``."""
    return FluctuationOperator(state, p_x).matrix(omega_f)


@dataclasses.dataclass
class StabilityResult:
    roots: np.ndarray
    count: int
    region: Rect
    stable: bool
    p_x: float

    @property
    def max_imag(self) -> float:
        return float(self.roots.imag.max()) if len(self.roots) else -np.inf


def _default_region(ell):
    return Rect(-np.pi / ell, np.pi / ell, -2.0 / ell, 2.0 / ell)


def stability_roots(state: SteadyState, p_x: float | None = None, region: Rect | None = None, tol: float = 1e-10) -> StabilityResult:
    """All fluctuation eigenfrequencies in ``region`` (default ``|Re| <= pi/L``, ``|Im| <= 2/L``).

    ``stable`` holds when every root has ``Im < -1e-8/L``.
    """
    op = FluctuationOperator(state, p_x)
    ell = op.ell
    region = _default_region(ell) if region is None else region
    roots, count = find_roots(LogDet(op.matrix), region, tol=tol)
    roots = np.array(roots, dtype=complex)
    stable = bool(np.all(roots.imag < -STABILITY_MARGIN / ell))
    return StabilityResult(roots, count, region, stable, op.p)


def is_stable(state: SteadyState, p_values=None, im_max: float | None = None, return_counts: bool = False):
    """Stability from the number of fluctuation zeros with ``Im >= -1e-8/L``.

    Counts zeros in ``(-pi/L, pi/L] x [-1e-8/L, im_max]`` for every probe
    momentum in ``p_values`` (default: the drive momentum only) and records
    the verdict on ``state.stable``.
    """
    c = state.circuit
    ell = c.length
    p_values = [c.kx] if p_values is None else list(p_values)
    im_max = 2.0 / ell if im_max is None else im_max
    region = Rect(-np.pi / ell, np.pi / ell, -STABILITY_MARGIN / ell, im_max)
    counts = []
    for p in p_values:
        op = FluctuationOperator(state, p)
        counts.append(winding_count(LogDet(op.matrix), region))
    stable = all(n == 0 for n in counts)
    state.stable = stable
    return (stable, counts) if return_counts else stable


@dataclasses.dataclass
class FluctuationState:
    delta_a_p: np.ndarray
    delta_a_q_conj: np.ndarray
    omega_f: float
    p_x: float
    q_x: float


@dataclasses.dataclass
class SqueezingSpectra:
    omega_f: np.ndarray
    S_plus: np.ndarray
    S_minus: np.ndarray
    M_IO: np.ndarray

    @property
    def bosonic_defect(self) -> np.ndarray:
        return self.S_plus**2 - self.S_minus**2 - 1.0


def input_output_matrix(state: SteadyState, omega_f: float, p_x: float | None = None, op: FluctuationOperator | None = None) -> np.ndarray:
    """2x2 map from ``(dA_in+, (dA_in-)*)`` to ``(dA_out+, (dA_out-)*)``."""
    op = FluctuationOperator(state, p_x) if op is None else op
    out = np.empty((2, 2), dtype=complex)
    for col, (dp, dm) in enumerate(((1.0, 0.0), (0.0, 1.0))):
        x, y = op.solve(omega_f, dp, dm)
        out[:, col] = op.output(omega_f, x, y, dp, dm)
    return out


def bogoliubov_response(state: SteadyState, p_x: float | None, dA_plus: complex, dA_minus: complex, omega_grid):
    """Driven fluctuations and squeezing spectra over ``omega_grid``.

    Returns the list of :class:`FluctuationState` (one per frequency) for the
    given probe and the :class:`SqueezingSpectra` ``S+ = |M_IO[0,0]|``,
    ``S- = |M_IO[1,0]|``.
    """
    if state.stable is False:
        warnings.warn("steady state is unstable; the driven response is formal", RuntimeWarning)
    op = FluctuationOperator(state, p_x)
    grid = np.asarray(omega_grid, dtype=float)
    fields, mio = [], np.empty((len(grid), 2, 2), dtype=complex)
    for i, w in enumerate(grid):
        x, y = op.solve(w, dA_plus, np.conj(dA_minus))
        fields.append(FluctuationState(x, y, float(w), op.p, op.q))
        mio[i] = input_output_matrix(state, w, op=op)
    return fields, SqueezingSpectra(grid, np.abs(mio[:, 0, 0]), np.abs(mio[:, 1, 0]), mio)
