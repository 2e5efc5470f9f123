"""Exact piecewise-polynomial algebra on [0, inf).

Functions are zero on the negative half-line.  Coefficients are stored in
ascending powers of (x - left breakpoint of the cell), which keeps Horner
evaluation well conditioned; the last cell extends to infinity.  These
objects carry the atomic part of the jump measure through repeated
convolution: convolving any piecewise polynomial with a step-function tail
is again piecewise polynomial, with breakpoints shifted by atom locations.
"""

from __future__ import annotations

import numpy as np

_BREAK_TOL = 1e-12


def _poly_eval(coeffs: np.ndarray, t):
    out = np.zeros_like(np.asarray(t, dtype=float))
    for c in coeffs[::-1]:
        out = out * t + c
    return out


def _poly_shift(coeffs: np.ndarray, d: float) -> np.ndarray:
    """Rebase p(t) to p(u + d) via repeated synthetic (Horner) division."""
    c = np.array(coeffs, dtype=float)
    n = c.size
    for i in range(n - 1):
        for j in range(n - 2, i - 1, -1):
            c[j] += d * c[j + 1]
    return c


class PiecewisePoly:
    """Immutable piecewise polynomial; breaks[0] == 0."""

    __slots__ = ("breaks", "coeffs")

    def __init__(self, breaks, coeffs):
        breaks = np.asarray(breaks, dtype=float)
        if breaks[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if np.any(np.diff(breaks) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        if len(coeffs) != breaks.size:
            raise ValueError("need one coefficient row per cell (last cell is unbounded)")
        self.breaks = breaks
        self.coeffs = coeffs

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls) -> "PiecewisePoly":
        return cls([0.0], [[0.0]])

    @classmethod
    def constant(cls, value: float) -> "PiecewisePoly":
        return cls([0.0], [[float(value)]])

    @classmethod
    def step_tail(cls, locations, masses, q: float) -> "PiecewisePoly":
        """The function q + sum_a m_a 1_{(0, a]}(x) as a piecewise constant."""
        locations = list(locations)
        masses = list(masses)
        breaks = [0.0] + locations
        total = float(np.sum(masses)) + float(q)
        vals = [total]
        for m in masses:
            total -= m
            vals.append(total)
        return cls(breaks, [[v] for v in vals])

    # -- evaluation ------------------------------------------------------------

    def _cell_index(self, x: np.ndarray, left_limit: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breaks, x, side="right") - 1
        # snap to a breakpoint when within tolerance, then honor the side
        near = np.searchsorted(self.breaks, x + _BREAK_TOL * np.maximum(1.0, np.abs(x)), side="right") - 1
        snapped = near > idx
        idx = np.where(snapped, near, idx)
        on_break = snapped | (np.take(self.breaks, np.clip(idx, 0, self.breaks.size - 1)) == x)
        idx = np.where(on_break & left_limit, idx - 1, idx)
        return idx

    def eval(self, x, side_left: bool = True):
        """Evaluate; at a breakpoint, side_left picks the cell ending there."""
        x_arr = np.asarray(x, dtype=float)
        scalar = np.ndim(x) == 0
        x_arr = np.atleast_1d(x_arr)
        left = np.full(x_arr.shape, bool(side_left))
        idx = self._cell_index(x_arr, left)
        out = np.zeros_like(x_arr)
        valid = idx >= 0
        # x at or below 0 from the left is 0 by convention
        valid &= ~(left & (x_arr <= _BREAK_TOL))
        for i in np.unique(idx[valid]):
            sel = valid & (idx == i)
            t = x_arr[sel] - self.breaks[i]
            out[sel] = _poly_eval(self.coeffs[i], t)
        return float(out[0]) if scalar else out

    def __call__(self, x):
        return self.eval(x, side_left=True)

    @property
    def degree(self) -> int:
        return max(c.size for c in self.coeffs) - 1

    # -- algebra ----------------------------------------------------------------

    def scale(self, factor: float) -> "PiecewisePoly":
        return PiecewisePoly(self.breaks, [c * factor for c in self.coeffs])

    def shift(self, a: float) -> "PiecewisePoly":
        """x -> f(x - a) for a > 0 (zero on [0, a))."""
        if a <= 0:
            raise ValueError("shift requires a > 0")
        breaks = np.concatenate([[0.0], self.breaks + a])
        coeffs = [np.zeros(1)] + [c.copy() for c in self.coeffs]
        return PiecewisePoly(breaks, coeffs)

    def add(self, other: "PiecewisePoly") -> "PiecewisePoly":
        breaks = np.union1d(self.breaks, other.breaks)
        # merge near-duplicates
        keep = np.concatenate([[True], np.diff(breaks) > _BREAK_TOL * np.maximum(1.0, breaks[1:])])
        breaks = breaks[keep]
        coeffs = []
        for o in breaks:
            ca = self._coeffs_at(o)
            cb = other._coeffs_at(o)
            n = max(ca.size, cb.size)
            row = np.zeros(n)
            row[: ca.size] += ca
            row[: cb.size] += cb
            coeffs.append(row)
        return PiecewisePoly(breaks, coeffs)

    def __add__(self, other):
        return self.add(other)

    def _coeffs_at(self, origin: float) -> np.ndarray:
        """The polynomial valid on [origin, next break), rebased to origin."""
        i = int(np.searchsorted(self.breaks, origin + _BREAK_TOL * max(1.0, abs(origin)), side="right") - 1)
        if i < 0:
            return np.zeros(1)
        return _poly_shift(self.coeffs[i], origin - self.breaks[i])

    def antiderivative(self) -> "PiecewisePoly":
        """F(x) = int_0^x f, continuous, F(0) = 0."""
        coeffs = []
        acc = 0.0
        for i, c in enumerate(self.coeffs):
            anti = np.concatenate([[acc], c / np.arange(1, c.size + 1)])
            coeffs.append(anti)
            if i + 1 < self.breaks.size:
                acc = float(_poly_eval(anti, self.breaks[i + 1] - self.breaks[i]))
        return PiecewisePoly(self.breaks, coeffs)

    def derivative(self) -> "PiecewisePoly":
        coeffs = []
        for c in self.coeffs:
            if c.size == 1:
                coeffs.append(np.zeros(1))
            else:
                coeffs.append(c[1:] * np.arange(1, c.size))
        return PiecewisePoly(self.breaks, coeffs)

    def truncate(self, x_max: float) -> "PiecewisePoly":
        """Drop breakpoints beyond x_max; result is only valid on [0, x_max]."""
        keep = self.breaks <= x_max * (1.0 + 1e-12)
        if np.all(keep):
            return self
        n = int(np.sum(keep))
        return PiecewisePoly(self.breaks[:n], self.coeffs[:n])

    def convolve_step_tail(self, locations, masses, q: float, x_max: float | None = None) -> "PiecewisePoly":
        """Convolution with q + sum m_a 1_{(0,a]}: sum m_a (F(x) - F(x-a)) + q F(x)."""
        F = self.antiderivative()
        if x_max is not None:
            F = F.truncate(x_max)
        out = F.scale(q) if q else PiecewisePoly.zero()
        for a, m in zip(locations, masses):
            term = F.add(F.shift(a).scale(-1.0)).scale(m)
            if x_max is not None:
                term = term.truncate(x_max)
            out = out.add(term)
            if x_max is not None:
                out = out.truncate(x_max)
        return out
