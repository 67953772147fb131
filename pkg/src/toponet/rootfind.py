"""Zeros of analytic determinants in rectangles of the complex plane.

The determinant of an entire matrix function is tracked as ``(phase, log|det|)``
from LU factorization so that large matrices never overflow.  Zeros are
counted with the argument principle on adaptively sampled rectangle edges,
isolated by recursive subdivision and polished with Newton steps on the
logarithmic derivative.
"""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

__all__ = ["Rect", "RootFindError", "LogDet", "logdet", "winding_count", "find_roots"]


class RootFindError(RuntimeError):
    """Inconsistent winding numbers that refinement could not resolve."""


@dataclasses.dataclass(frozen=True)
class Rect:
    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def __post_init__(self):
        if not (self.re_lo < self.re_hi and self.im_lo < self.im_hi):
            raise ValueError("rectangle must have positive width and height")

    @property
    def corners(self):
        return (
            complex(self.re_lo, self.im_lo),
            complex(self.re_hi, self.im_lo),
            complex(self.re_hi, self.im_hi),
            complex(self.re_lo, self.im_hi),
        )

    @property
    def size(self) -> float:
        return max(self.re_hi - self.re_lo, self.im_hi - self.im_lo)

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))

    def contains(self, z, pad: float = 0.0) -> bool:
        return self.re_lo - pad <= z.real <= self.re_hi + pad and self.im_lo - pad <= z.imag <= self.im_hi + pad

    def split(self, frac: float = 0.5):
        """Two halves along the longer side, cut at ``frac`` of its length."""
        if self.re_hi - self.re_lo >= self.im_hi - self.im_lo:
            m = self.re_lo + frac * (self.re_hi - self.re_lo)
            return Rect(self.re_lo, m, self.im_lo, self.im_hi), Rect(m, self.re_hi, self.im_lo, self.im_hi)
        m = self.im_lo + frac * (self.im_hi - self.im_lo)
        return Rect(self.re_lo, self.re_hi, self.im_lo, m), Rect(self.re_lo, self.re_hi, m, self.im_hi)


def logdet(K: np.ndarray):
    """``(unit phase, log|det K|)`` of a square matrix."""
    sign, logabs = np.linalg.slogdet(K)
    return complex(sign), float(logabs)


class LogDet:
    """Cached ``z -> (phase, log|det|)`` for a matrix-valued function."""

    def __init__(self, matrix: Callable[[complex], np.ndarray]):
        self.matrix = matrix
        self._cache: dict = {}
        self._dcache: dict = {}
        self.evaluations = 0

    @staticmethod
    def _key(z):
        return (round(z.real, 15), round(z.imag, 15))

    def __call__(self, z: complex):
        key = self._key(z)
        hit = self._cache.get(key)
        if hit is None:
            self.evaluations += 1
            hit = logdet(self.matrix(complex(z)))
            self._cache[key] = hit
        return hit

    def slope(self, z: complex) -> float:
        """``|d/dz log det|`` from a forward difference (cached, for step control)."""
        key = self._key(z)
        hit = self._dcache.get(key)
        if hit is None:
            h = 1e-8 * max(1.0, abs(z))
            p0, l0 = self(z)
            self.evaluations += 1
            p1, l1 = logdet(self.matrix(complex(z + h)))
            if p0 == 0 or p1 == 0:
                hit = np.inf
            else:
                hit = abs(complex(l1 - l0, np.angle(p1 / p0))) / h
            self._dcache[key] = hit
        return hit

    def log_derivative(self, z: complex, h: float = 1e-6) -> complex:
        """``d/dz log det`` by a central difference of the unwrapped logarithm."""
        p1, l1 = logdet(self.matrix(z + h))
        p0, l0 = logdet(self.matrix(z - h))
        dphase = np.angle(p1 / p0) if p0 != 0 and p1 != 0 else 0.0
        return complex(l1 - l0, dphase) / (2 * h)


def _edge_phase(f, z0, z1, max_dphase, min_len, budget):
    """Accumulated arg change of ``f`` along the segment, bisected adaptively.

    A segment is accepted when the phase and modulus change little across
    it and it is shorter than ``1/|d log det/dz|`` at both ends.  The last
    rule resolves clusters of zeros close to the segment, whose combined
    phase change could otherwise alias to a multiple of ``2 pi``.
    """
    stack = [(z0, z1)]
    total = 0.0
    while stack:
        a, b = stack.pop()
        pa, la = f(a)
        pb, lb = f(b)
        if pa == 0 or pb == 0:
            raise ZeroDivisionError("determinant vanishes on the contour")
        d = np.angle(pb / pa)
        h = abs(b - a)
        if h > min_len and (abs(d) > max_dphase or abs(lb - la) > 2.0 or h * max(f.slope(a), f.slope(b)) > 1.0):
            if f.evaluations > budget:
                raise RootFindError("contour sampling budget exhausted")
            m = 0.5 * (a + b)
            stack.append((m, b))
            stack.append((a, m))
            continue
        total += d
    return total


def winding_count(f: LogDet, rect: Rect, n_edge: int = 16, max_dphase: float = 0.6, budget: int = 200000) -> int:
    """Number of zeros of ``det`` inside ``rect`` (argument principle)."""
    c = rect.corners
    total = 0.0
    min_len = 1e-13 * max(1.0, rect.size)
    for k in range(4):
        a, b = c[k], c[(k + 1) % 4]
        pts = a + (b - a) * np.linspace(0.0, 1.0, n_edge + 1)
        for s in range(n_edge):
            total += _edge_phase(f, pts[s], pts[s + 1], max_dphase, min_len, budget)
    w = total / (2 * np.pi)
    n = int(round(w))
    if abs(w - n) > 0.05 or n < 0:
        raise RootFindError(f"non-integer winding {w:.4f} on {rect}")
    return n


def _newton(f: LogDet, z, rect: Rect, tol, max_iter=40, floor=1e-6):
    """Newton on ``log det``; returns ``None`` if the iterate leaves ``rect``.

    Near ill-conditioned zeros rounding noise stops quadratic convergence;
    once steps stall below ``floor`` the best iterate (smallest ``|det|``)
    is accepted.
    """
    scale = max(1.0, abs(z))
    best, best_l = None, np.inf
    prev = np.inf
    h = 1e-7 * scale
    for _ in range(max_iter):
        g = f.log_derivative(z, h=h)
        if g == 0 or not np.isfinite(g):
            break
        step = 1.0 / g
        z = z - step
        if not rect.contains(z, pad=rect.size):
            return None
        lz = f(z)[1]
        if lz < best_l:
            best, best_l = z, lz
        if abs(step) < tol * scale:
            return z
        if abs(step) < floor * scale and abs(step) > 0.5 * prev:
            return best
        prev = abs(step)
        # difference step well inside the distance to the zero
        h = min(1e-7 * scale, max(1e-2 * prev, 1e-12 * scale))
    if best is not None and prev < floor * scale:
        return best
    return None


def find_roots(
    matrix: Callable[[complex], np.ndarray] | LogDet,
    rect: Rect,
    tol: float = 1e-10,
    n_edge: int = 16,
    max_depth: int = 60,
    budget: int = 200000,
):
    """All zeros of ``det matrix(z)`` in ``rect``, with multiplicity.

    Rectangles with winding 0 are dropped; a rectangle holding a single zero
    is polished by Newton from its center; otherwise it is split in two
    along its longer side.  Clusters narrower than ``tol`` are reported as a
    repeated root.  Returns ``(roots, count)`` where ``count`` is the winding
    number of the full rectangle.
    """
    f = matrix if isinstance(matrix, LogDet) else LogDet(matrix)
    total = winding_count(f, rect, n_edge, budget=budget)
    roots: list[complex] = []
    stack = [(rect, total, 0)]
    while stack:
        r, n, depth = stack.pop()
        if n == 0:
            continue
        if n == 1:
            z = _newton(f, r.center, r, tol)
            if z is not None and r.contains(z, pad=1e-12):
                roots.append(z)
                continue
        if r.size < tol or depth >= max_depth:
            roots.extend([r.center] * n)
            continue
        # cut slightly off center: symmetric spectra put zeros on the midlines
        for frac in (0.4871, 0.5317, 0.4419):
            a, b = r.split(frac)
            try:
                na = winding_count(f, a, max(4, n_edge // 2), budget=budget)
                nb = winding_count(f, b, max(4, n_edge // 2), budget=budget)
            except (ZeroDivisionError, RootFindError):
                continue
            if na + nb == n:
                break
        else:
            if r.size < 1e-6 * max(1.0, abs(r.center)):
                # below the determinant's rounding floor: report the cluster
                roots.extend([r.center] * n)
                continue
            raise RootFindError(f"winding counts of sub-rectangles disagree on {r}")
        stack.append((a, na, depth + 1))
        stack.append((b, nb, depth + 1))
    roots.sort(key=lambda z: (z.real, z.imag))
    return roots, total
