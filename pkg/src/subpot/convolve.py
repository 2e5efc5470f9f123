"""Iterated convolutions of the (tail + killing) kernel and atom-sum sets.

The kernel f = tbar + q splits into a piecewise-constant part pc (atoms
plus the constant q) and a smooth tail part s (stable / tempered family).
The n-fold convolution expands binomially,

    f^{*n} = sum_j C(n, j) pc^{*(n-j)} * s^{*j},

where pc^{*i} is an exact piecewise polynomial (degree i-1, breakpoints on
the i-fold atom sums), s^{*j} is closed form (powers and exponentials are
stable under self-convolution), and the cross terms reduce to cell
integrals of a polynomial against the weight v^{p} e^{-b v}.  Those cells
are delimited by the polynomial's breakpoints -- integration never crosses
a kink -- and are evaluated by Gauss-Jacobi (singular first cell) and
Gauss-Legendre rules that are exact for the polynomial factor.

Evaluations are pure; the per-order ladders are memoized with an exclusive
writer during construction and are safe for concurrent readers afterwards.
"""

from __future__ import annotations

import math
from bisect import bisect_left, insort
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.special import gamma as _gamma
from scipy.special import gammainc as _gammainc
from scipy.special import gammaln as _gammaln
from scipy.special import roots_jacobi

from .errors import BudgetExceededError
from .model import AtomicPart, LevyModel, Side
from .piecewise import PiecewisePoly

DEFAULT_SUM_BUDGET = 10**7
_VALUE_TOL = 1e-12
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


# ---------------------------------------------------------------------------
# atom-sum sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomSumEntry:
    value: float
    exact: Optional[Fraction]
    min_jumps: int
    representations: int  # ordered tuples of length min_jumps reaching value


@dataclass(frozen=True)
class AtomSumSet:
    """All sums of at most k atom locations that land in (0, x_max].

    ``representations`` counts ordered tuples of min_jumps atoms.  Values
    are deduplicated exactly when every atom location is rational, with a
    1e-12 relative tolerance otherwise.
    """

    k: int
    x_max: float
    entries: tuple
    exact_mode: bool

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries], dtype=float)

    def member(self, x, exact: Optional[Fraction] = None) -> Optional[AtomSumEntry]:
        if self.exact_mode and exact is not None:
            for e in self.entries:
                if e.exact == exact:
                    return e
            return None
        x = float(x)
        vals = self.values
        i = int(np.searchsorted(vals, x))
        for j in (i - 1, i, i + 1):
            if 0 <= j < len(self.entries) and abs(self.entries[j].value - x) <= _VALUE_TOL * max(1.0, abs(x)):
                return self.entries[j]
        return None

    def min_jumps(self, x, exact: Optional[Fraction] = None) -> Optional[int]:
        e = self.member(x, exact=exact)
        return None if e is None else e.min_jumps


class _FloatCanon:
    """Canonicalize float sums within a relative tolerance."""

    def __init__(self):
        self._sorted = []

    def canonical(self, v: float) -> float:
        i = bisect_left(self._sorted, v)
        for j in (i - 1, i):
            if 0 <= j < len(self._sorted) and abs(self._sorted[j] - v) <= _VALUE_TOL * max(1.0, abs(v)):
                return self._sorted[j]
        insort(self._sorted, v)
        return v


def atom_sums(atomic: AtomicPart, k: int, x_max: float, budget: int = DEFAULT_SUM_BUDGET) -> AtomSumSet:
    """Breadth-first enumeration of the k-fold atom-sum set, pruned at x_max."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if x_max <= 0:
        raise ValueError("x_max must be > 0")
    exact_mode = atomic.all_rational
    if atomic.is_empty:
        return AtomSumSet(k=k, x_max=x_max, entries=(), exact_mode=exact_mode)

    if exact_mode:
        atoms = list(atomic.exact_locations)
        limit = Fraction(x_max).limit_denominator(10**15) if not isinstance(x_max, Fraction) else x_max
        tol_ok = lambda v: v <= limit or float(v) <= x_max * (1 + 1e-12)
    else:
        atoms = list(atomic.locations)
        tol_ok = lambda v: v <= x_max * (1 + 1e-12)
    canon = _FloatCanon()

    first_seen = {}   # key -> (level, value_float, exact, ordered reps at that level)
    counts_prev = {}  # key -> ordered-representation count at previous level
    spent = 0
    for a in atoms:
        if not tol_ok(a):
            continue
        key = a if exact_mode else canon.canonical(float(a))
        counts_prev[key] = counts_prev.get(key, 0) + 1
        if key not in first_seen:
            first_seen[key] = (1, float(a), a if exact_mode else None, 1)

    level = 1
    while level < k and counts_prev:
        level += 1
        counts_next = {}
        for key, cnt in counts_prev.items():
            for a in atoms:
                spent += 1
                if spent > budget:
                    raise BudgetExceededError(level, budget)
                v = key + a
                if not tol_ok(v):
                    continue
                nk = v if exact_mode else canon.canonical(float(v))
                counts_next[nk] = counts_next.get(nk, 0) + cnt
        for nk, cnt in counts_next.items():
            if nk not in first_seen:
                first_seen[nk] = (level, float(nk), nk if exact_mode else None, cnt)
        counts_prev = counts_next

    entries = sorted(
        (
            AtomSumEntry(value=val, exact=ex, min_jumps=lvl, representations=reps)
            for key, (lvl, val, ex, reps) in first_seen.items()
        ),
        key=lambda e: e.value,
    )
    return AtomSumSet(k=k, x_max=float(x_max), entries=tuple(entries), exact_mode=exact_mode)


# ---------------------------------------------------------------------------
# convolution engine
# ---------------------------------------------------------------------------


class ConvolutionEngine:
    """Evaluates (tbar + q)^{*n} and its running integral on [0, x_max]."""

    def __init__(self, model: LevyModel, x_max: float, budget: int = DEFAULT_SUM_BUDGET):
        if x_max <= 0:
            raise ValueError("x_max must be > 0")
        self.model = model
        self.x_max = float(x_max)
        self.budget = int(budget)
        atomic = model.atomic
        self._pc_trivial = atomic.is_empty and model.q == 0.0
        self._pc = PiecewisePoly.step_tail(atomic.locations, atomic.masses, model.q)
        self._pc_pow = {1: self._pc}
        self._pc_run = {}
        self._sum_sets = {}
        self._jacobi = {}
        ac = model.ac
        if ac.is_none:
            self._A = 0.0
        else:
            self._A = ac.C * _gamma(1.0 - ac.alpha)

    # -- public surface ------------------------------------------------------

    def power(self, n: int, x: float, side: Side = Side.LEFT) -> float:
        """(tbar + q)^{*n}(x); side selects the one-sided limit for n = 1.

        Convolutions of order n >= 2 are continuous, so the side argument is
        ignored there.
        """
        self._check_x(x)
        if n < 1:
            raise ValueError("n must be >= 1")
        if n == 1:
            return self.model.tail(x, side) + self.model.q
        total = 0.0
        for j in range(n + 1):
            i = n - j
            term = self._term_power(i, j, x)
            if term != 0.0:
                total += math.comb(n, j) * term
        return total

    def running(self, n: int, x: float) -> float:
        """(1 * (tbar + q)^{*n})(x); the n = 0 convention is the constant 1."""
        if n == 0:
            return 1.0
        self._check_x(x)
        total = 0.0
        for j in range(n + 1):
            i = n - j
            term = self._term_running(i, j, x)
            if term != 0.0:
                total += math.comb(n, j) * term
        return total

    def mass_scale(self, x: float) -> float:
        """m(x) = (1 * (tbar + q))(x) / drift, the series contraction factor."""
        if x <= 0:
            return 0.0
        return self.running(1, min(x, self.x_max)) / self.model.drift

    def kinks(self, n: int) -> np.ndarray:
        """Potential non-smoothness points of order-n convolutions in (0, x_max]."""
        if self.model.atomic.is_empty:
            return np.empty(0)
        return self.sum_set(n).values

    def sum_set(self, k: int) -> AtomSumSet:
        if k not in self._sum_sets:
            self._sum_sets[k] = atom_sums(self.model.atomic, k, self.x_max, self.budget)
        return self._sum_sets[k]

    # -- internals -------------------------------------------------------------

    def _check_x(self, x: float):
        if x <= 0:
            raise ValueError(f"convolution argument must be > 0, got {x!r}")
        if x > self.x_max * (1 + 1e-12):
            raise ValueError(f"x={x!r} beyond engine horizon {self.x_max!r}")

    def pc_power(self, i: int) -> PiecewisePoly:
        if i not in self._pc_pow:
            prev = self.pc_power(i - 1)
            atomic = self.model.atomic
            nxt = prev.convolve_step_tail(atomic.locations, atomic.masses, self.model.q, x_max=self.x_max)
            if nxt.breaks.size * max(1, nxt.degree) > self.budget:
                raise BudgetExceededError(i, self.budget)
            self._pc_pow[i] = nxt
        return self._pc_pow[i]

    def pc_running(self, i: int) -> PiecewisePoly:
        if i not in self._pc_run:
            self._pc_run[i] = self.pc_power(i).antiderivative()
        return self._pc_run[i]

    def _ac_exponents(self, j: int):
        alpha = self.model.ac.alpha
        p = j * (1.0 - alpha) - 1.0
        log_k = j * math.log(self._A) - _gammaln(j * (1.0 - alpha))
        return p, math.exp(log_k)

    def _term_power(self, i: int, j: int, x: float) -> float:
        if j == 0:
            if self._pc_trivial:
                return 0.0
            return self.pc_power(i).eval(x) if i >= 1 else 0.0
        if self.model.ac.is_none:
            return 0.0
        p, K = self._ac_exponents(j)
        if i == 0:
            val = K * x**p
            if self.model.ac.kind == "tempered":
                val *= math.exp(-self.model.ac.b * x)
            return val
        if self._pc_trivial:
            return 0.0
        return self._cross(self.pc_power(i), j, x)

    def _term_running(self, i: int, j: int, x: float) -> float:
        if j == 0:
            if self._pc_trivial:
                return 0.0
            return self.pc_running(i).eval(x) if i >= 1 else 0.0
        if self.model.ac.is_none:
            return 0.0
        if i == 0:
            return self._ac_running(j, x)
        if self._pc_trivial:
            return 0.0
        return self._cross(self.pc_running(i), j, x)

    def _ac_running(self, j: int, x: float) -> float:
        ac = self.model.ac
        s = j * (1.0 - ac.alpha)
        if ac.kind == "stable":
            _, K = self._ac_exponents(j)
            return K * x**s / s
        log_a = j * math.log(self._A) - s * math.log(ac.b)
        return math.exp(log_a) * float(_gammainc(s, ac.b * x))

    def _jacobi_rule(self, p: float):
        key = round(p, 12)
        if key not in self._jacobi:
            nodes, weights = roots_jacobi(20, 0.0, p)
            self._jacobi[key] = (nodes, weights)
        return self._jacobi[key]

    def _cross(self, pp: PiecewisePoly, j: int, x: float) -> float:
        """int_0^x pp(x - v) * K v^p e^{-b v} dv with cells split at pp's kinks."""
        ac = self.model.ac
        p, K = self._ac_exponents(j)
        b = ac.b if ac.kind == "tempered" else 0.0
        edges = [0.0, x]
        for br in pp.breaks:
            v = x - br
            if _VALUE_TOL < v < x - _VALUE_TOL:
                edges.append(v)
        edges = np.unique(np.asarray(edges))
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            total += self._cross_cell(pp, x, lo, hi, p, b)
        return K * total

    def _cross_cell(self, pp, x, lo, hi, p, b) -> float:
        if hi - lo <= 0:
            return 0.0
        if lo == 0.0:
            cap = hi if b == 0.0 else min(hi, 8.0 / b)
            nodes, weights = self._jacobi_rule(p)
            half = 0.5 * cap
            v = half * (nodes + 1.0)
            phi = pp.eval(x - v)
            if b > 0.0:
                phi = phi * np.exp(-b * v)
            val = half ** (p + 1.0) * float(np.dot(weights, phi))
            if cap < hi:
                val += self._cross_cell(pp, x, cap, hi, p, b)
            return val
        # smooth region: geometric splits keep the v^p factor well resolved
        if hi / lo > 8.0:
            mid = lo * 8.0
            return self._cross_cell(pp, x, lo, mid, p, b) + self._cross_cell(pp, x, mid, hi, p, b)
        if b > 0.0 and (hi - lo) > 8.0 / b:
            mid = lo + 8.0 / b
            return self._cross_cell(pp, x, lo, mid, p, b) + self._cross_cell(pp, x, mid, hi, p, b)
        half = 0.5 * (hi - lo)
        v = lo + half * (_GL_NODES + 1.0)
        integrand = pp.eval(x - v) * v**p
        if b > 0.0:
            integrand = integrand * np.exp(-b * v)
        return half * float(np.dot(_GL_WEIGHTS, integrand))
