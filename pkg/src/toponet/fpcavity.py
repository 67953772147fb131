"""Nonlinear Fabry-Perot cavity: a single Kerr fiber between a partially
transmitting mirror and a perfect mirror.

The intracavity intensity obeys the closed form

    x = y / (1 - r^2) * [1 + r^2 + 2 r sin(2 omega_d L - 6 y L)],

with ``y = chi |a_r|^2`` and ``x = chi |A_in|^2``.  The cavity serves as the
analytic reference for the generic Kerr circuit and fluctuation code.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg
import scipy.optimize

from .kerrsteady import KerrCircuit, SteadyState, steady_residual
from .rootfind import LogDet, Rect, find_roots

__all__ = [
    "FPParams",
    "FPState",
    "fp_input_intensity",
    "fp_slope",
    "fp_solve",
    "fp_closed_frequency",
    "fp_circuit",
    "fp_steady_state",
    "fp_propagator",
    "fp_D_matrix",
    "fp_stability",
]


@dataclasses.dataclass(frozen=True)
class FPParams:
    omega_d: float
    r_BM: float = 0.9
    theta0: float = 0.0
    chi: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.r_BM < 1.0:
            raise ValueError("r_BM must lie in [0, 1)")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def t_BM(self) -> float:
        return float(np.sqrt(1.0 - self.r_BM**2))


@dataclasses.dataclass
class FPState:
    a_r: complex
    a_l: complex
    y: float
    x: float
    A_in: complex
    A_out: complex
    k: float
    slope: float
    stable: bool | None = None

    @property
    def positive_slope(self) -> bool:
        return self.slope > 0


def fp_input_intensity(y, params: FPParams):
    """Drive intensity ``x = chi |A_in|^2`` that sustains ``y = chi |a_r|^2``."""
    y = np.asarray(y, dtype=float)
    r, L = params.r_BM, params.L
    return y / (1 - r**2) * (1 + r**2 + 2 * r * np.sin(2 * params.omega_d * L - 6 * y * L))


def fp_slope(y, params: FPParams):
    """``dx/dy`` of the closed form."""
    y = np.asarray(y, dtype=float)
    r, L = params.r_BM, params.L
    ph = 2 * params.omega_d * L - 6 * y * L
    return (1 + r**2 + 2 * r * np.sin(ph) - 12 * r * y * L * np.cos(ph)) / (1 - r**2)


def _state_from_y(y, A_in, params: FPParams) -> FPState:
    r, t, L, th = params.r_BM, params.t_BM, params.L, params.theta0
    if params.chi == 0:
        k = params.omega_d
    else:
        k = params.omega_d - 3 * y
    a_r = t * A_in * np.exp(-1j * th) / (np.exp(-1j * k * L) - 1j * r * np.exp(1j * k * L))
    a_l = np.exp(1j * th) * np.exp(1j * k * L) * a_r
    A_out = (np.exp(1j * k * L) + 1j * r * np.exp(-1j * k * L)) / (np.exp(-1j * k * L) - 1j * r * np.exp(1j * k * L)) * A_in
    # keep the polished root; chi |a_r|^2 agrees with it to rounding
    yy = y if params.chi != 0 else 0.0
    return FPState(complex(a_r), complex(a_l), float(yy), float(params.chi * abs(A_in) ** 2), complex(A_in), complex(A_out), float(k), float(fp_slope(yy, params)))


def fp_solve(A_in: complex, params: FPParams, n_grid: int = 2000) -> list[FPState]:
    """Every steady state sustained by the drive ``A_in``, ordered by intensity.

    Roots of ``fp_input_intensity(y) = chi |A_in|^2`` are bracketed on the
    monotone segments of the closed form over ``[0, x (1 + r)/(1 - r)]`` and
    polished with Brent's method.  The bound contains every root because the
    bracket in the closed form is at least ``(1 - r)^2``.  The folds (zeros of
    the slope) are located on a grid with at least ``n_grid`` points and at
    least 60 per period ``pi/(3L)`` of the oscillating term, so root pairs
    closer than the grid step near a fold are not lost.
    """
    x = params.chi * abs(A_in) ** 2
    if params.chi == 0 or x == 0:
        return [_state_from_y(0.0, A_in, params)]
    r, L = params.r_BM, params.L
    y_max = x * (1 + r) / (1 - r) * (1 + 1e-9)
    n = max(n_grid, int(np.ceil(abs(y_max) / (np.pi / (3 * L)) * 60)) + 1)
    ys = np.linspace(0.0, y_max, n)
    slope = lambda s: float(fp_slope(s, params))
    g = lambda s: float(fp_input_intensity(s, params)) - x
    sl = fp_slope(ys, params)
    knots = [ys[0]]
    for i in np.flatnonzero(sl[:-1] * sl[1:] < 0):
        knots.append(scipy.optimize.brentq(slope, ys[i], ys[i + 1], xtol=1e-15, rtol=1e-15))
    knots.append(ys[-1])
    roots = []
    for a, b in zip(knots[:-1], knots[1:]):
        ga, gb = g(a), g(b)
        if ga == 0:
            roots.append(a)
        elif ga * gb < 0:
            roots.append(scipy.optimize.brentq(g, a, b, xtol=1e-15, rtol=1e-15))
    if g(knots[-1]) == 0:
        roots.append(knots[-1])
    # polish on the defining relation so that x is reproduced to round-off
    out = []
    for y in roots:
        y = scipy.optimize.newton(lambda s: float(fp_input_intensity(s, params)) - x, y, fprime=lambda s: float(fp_slope(s, params)), tol=1e-15, maxiter=20, disp=False)
        out.append(_state_from_y(float(y), A_in, params))
    out.sort(key=lambda s: abs(s.y))
    return out


def fp_closed_frequency(n: int, intensity: float, params: FPParams) -> float:
    """Good-cavity resonance ``n pi/L - pi/(4L) + 3 chi |a_r|^2``."""
    L = params.L
    return n * np.pi / L - np.pi / (4 * L) + 3 * params.chi * intensity


def fp_circuit(params: FPParams) -> KerrCircuit:
    """The cavity as a generic Kerr circuit with arrivals ``(a_r, a_l)``."""
    r, t, th = params.r_BM, params.t_BM, params.theta0
    J = np.array([[0.0, 1j * r * np.exp(-1j * th)], [np.exp(1j * th), 0.0]])
    out = np.array([0.0, t], dtype=complex)
    return KerrCircuit(
        routing=lambda p: J,
        fibers=[(0, 1)],
        twist=[0],
        drive=np.array([t * np.exp(-1j * th), 0.0]),
        chi=params.chi,
        length=params.L,
        out_direct=1j * r,
        out_row=lambda p: out,
        post_phase=np.array([1.0, np.exp(1j * th)]),
        r_BM=r,
    )


def fp_steady_state(state: FPState, params: FPParams) -> SteadyState:
    """Embed a cavity state as a steady state of :func:`fp_circuit`."""
    c = fp_circuit(params)
    a = np.array([state.a_r, state.a_l])
    res = float(np.linalg.norm(steady_residual(c, a, params.omega_d, state.A_in)))
    return SteadyState(a, params.omega_d, state.A_in, c, res)


def fp_propagator(state: FPState, params: FPParams, omega_f: complex) -> np.ndarray:
    """``P_s = exp(Sigma (omega_f - U_s^+ M_s U_s) L)`` of the cavity fiber."""
    L, chi, k = params.L, params.chi, state.k
    I = abs(state.a_r) ** 2
    e, ec = np.exp(1j * k * L), np.exp(-1j * k * L)
    Ms = chi * I * np.array(
        [
            [1, 2 * ec, 1, 2 * e],
            [2 * e, 1, 2 * e, e**2],
            [-1, -2 * ec, -1, -2 * e],
            [-2 * ec, -(ec**2), -2 * ec, -1],
        ]
    )
    g = np.exp(2j * np.angle(state.a_r))
    Us = np.diag([1, 1, g, g])
    Sigma = 1j * np.diag([1.0, -1.0, 1.0, -1.0])
    E = Sigma @ (omega_f * np.eye(4) - Us.conj().T @ Ms @ Us) * L
    w, V = np.linalg.eig(E)
    if np.linalg.cond(V) < 1e4:
        return (V * np.exp(w)) @ np.linalg.inv(V)
    return scipy.linalg.expm(E)


def fp_D_matrix(state: FPState, params: FPParams, omega_f: complex) -> np.ndarray:
    """Cavity fluctuation matrix ``U_a U_theta - U_b U~_theta^{-1} U_k R_BM``.

    Multiplying the scattering relation through by ``U_b U~_theta^{-1}`` gives
    a matrix that is entire in ``omega_f`` with the same zeros as the
    determinant built from ``U_b^{-1}``.
    """
    P = fp_propagator(state, params, omega_f)
    th, r, k, L = params.theta0, params.r_BM, state.k, params.L
    Ub = np.array(
        [
            [P[0, 0], 0, P[0, 2], 0],
            [-P[1, 0], 1, -P[1, 2], 0],
            [P[2, 0], 0, P[2, 2], 0],
            [-P[3, 0], 0, -P[3, 2], 1],
        ]
    )
    Ua = np.array(
        [
            [1, -P[0, 1], 0, -P[0, 3]],
            [0, P[1, 1], 0, P[1, 3]],
            [0, -P[2, 1], 1, -P[2, 3]],
            [0, P[3, 1], 0, P[3, 3]],
        ]
    )
    Uth = np.diag([1, np.exp(-1j * th), 1, np.exp(1j * th)])
    Uth_t = np.diag([np.exp(1j * th), 1, np.exp(-1j * th), 1])
    Uk = np.diag([np.exp(1j * k * L)] * 2 + [np.exp(-1j * k * L)] * 2)
    Rbm = np.array([[0, 1j * r, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1j * r], [0, 0, 1, 0]])
    return Ua @ Uth - Ub @ np.linalg.inv(Uth_t) @ Uk @ Rbm


def fp_stability(state: FPState, params: FPParams, region: Rect | None = None, tol: float = 1e-10):
    """``(stable, roots)`` from the zeros of the cavity fluctuation determinant.

    The default window is ``|Re| <= pi/L``, ``|Im| <= 2/L``.  Stable means
    every zero in the window has ``Im < -1e-8/L``.
    """
    L = params.L
    region = Rect(-np.pi / L, np.pi / L, -2.0 / L, 2.0 / L) if region is None else region
    roots, _ = find_roots(LogDet(lambda w: fp_D_matrix(state, params, w)), region, tol=tol)
    roots = np.array(roots, dtype=complex)
    stable = bool(np.all(roots.imag < -1e-8 / L))
    state.stable = stable
    return stable, roots
