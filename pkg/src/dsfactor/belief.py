"""Mass functions and the Dempster-Shafer operations on them.

A ``MassFunction`` may hold negative masses. Removal and conditioning
routinely produce such pseudo-belief functions and they are kept as they
are; ``classify`` reports what kind of valuation a result is.

Commonality arithmetic works on subset-indexed numpy arrays (entry ``mask``
holds the value for the set whose tuples are the set bits of ``mask``), so
it is limited to frames of at most ``EXPLICIT_CAPACITY`` elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Mapping

import numpy as np

from .frames import (
    ExplicitSubset,
    FocalSet,
    FrameError,
    ProductFocalSet,
    Scope,
    ScopeMismatch,
    canonical,
    disjoint_any,
    extend_any,
    focal_key,
    intersect_any,
    project_any,
    subset_any,
)

NORMAL_TOL = 1e-9
# Moebius inversion leaves float noise on sets that carry no mass.
ZERO_TOL = 1e-12


class RemovalError(ValueError):
    """Removal is undefined: no set where both commonalities are nonzero."""


@dataclass(frozen=True)
class ValuationClass:
    proper: bool
    normal: bool
    positive_normal: bool
    zero: bool

    def as_dict(self) -> dict[str, bool]:
        return {
            "proper": self.proper,
            "normal": self.normal,
            "positive_normal": self.positive_normal,
            "zero": self.zero,
        }


class MassFunction:
    """Mass assignment over the nonempty subsets of a product frame.

    ``assignments`` maps focal sets (``ProductFocalSet`` or
    ``ExplicitSubset``) to masses. Sets that admit a product form are stored
    as products, zero masses are dropped. ``decimals`` optionally keeps the
    exact decimal text each mass was read from, for lossless serialization.
    """

    def __init__(
        self,
        scope: Scope,
        assignments: Mapping[FocalSet, float] | Iterable[tuple[FocalSet, float]] = (),
        decimals: Mapping[FocalSet, str] | None = None,
    ):
        self.scope = scope
        items = assignments.items() if isinstance(assignments, Mapping) else assignments
        masses: dict[FocalSet, float] = {}
        for focal, value in items:
            if focal.scope != scope:
                raise ScopeMismatch(f"focal set over {focal.scope.names}, mass function over {scope.names}")
            key = canonical(focal)
            masses[key] = masses.get(key, 0.0) + float(value)
        self._masses = {
            k: masses[k] for k in sorted(masses, key=focal_key) if masses[k] != 0.0
        }
        self.decimals = None
        if decimals is not None:
            self.decimals = {canonical(k): str(v) for k, v in decimals.items()}

    def __repr__(self):
        body = ", ".join(f"{k!r}: {v:.6g}" for k, v in self._masses.items())
        return f"MassFunction({self.scope.names}, {{{body}}})"

    def __eq__(self, other):
        if not isinstance(other, MassFunction):
            return NotImplemented
        return self.scope == other.scope and self._masses == other._masses

    def __len__(self):
        return len(self._masses)

    def __iter__(self) -> Iterator[FocalSet]:
        return iter(self._masses)

    def __getitem__(self, focal: FocalSet) -> float:
        return self._masses.get(canonical(focal), 0.0)

    def items(self):
        """Focal sets and masses in canonical order."""
        return self._masses.items()

    @property
    def total(self) -> float:
        s = 0.0
        for v in self._masses.values():
            s += v
        return s

    @property
    def representation_mode(self) -> str:
        if all(isinstance(k, ProductFocalSet) for k in self._masses):
            return "product"
        return "explicit"

    @cached_property
    def valuation_class(self) -> ValuationClass:
        return classify(self)

    def to_array(self) -> np.ndarray:
        """Masses as a subset-indexed array of length ``2**|frame|``."""
        self.scope.check_capacity()
        out = np.zeros(1 << self.scope.size)
        for focal, value in self._masses.items():
            mask = focal.mask
            out[mask] += value
        return out


def vacuous(scope: Scope) -> MassFunction:
    return MassFunction(scope, {scope.full_set(): 1.0})


def zero_valuation(scope: Scope) -> MassFunction:
    return MassFunction(scope, {})


def extend(m: MassFunction, target: Scope) -> MassFunction:
    """Vacuous extension of ``m`` to a larger scope."""
    if m.scope == target:
        return m
    return MassFunction(target, [(extend_any(k, target), v) for k, v in m.items()])


def classify(m: MassFunction) -> ValuationClass:
    if not len(m):
        return ValuationClass(proper=True, normal=False, positive_normal=False, zero=True)
    proper = all(v >= 0 for _, v in m.items())
    normal = abs(m.total - 1.0) <= NORMAL_TOL
    positive = normal and m[m.scope.full_set()] > 0
    return ValuationClass(proper=proper, normal=normal, positive_normal=positive, zero=False)


def _check_arg(m: MassFunction, a: FocalSet | None) -> None:
    if a is None:
        raise FrameError("the empty set is not a valid argument")
    if a.scope != m.scope:
        raise ScopeMismatch(f"set over {a.scope.names}, mass function over {m.scope.names}")


def bel_of(m: MassFunction, a: FocalSet) -> float:
    _check_arg(m, a)
    return sum((v for k, v in m.items() if subset_any(k, a)), 0.0)


def pl_of(m: MassFunction, a: FocalSet) -> float:
    _check_arg(m, a)
    return sum((v for k, v in m.items() if not disjoint_any(k, a)), 0.0)


def q_of(m: MassFunction, a: FocalSet) -> float:
    _check_arg(m, a)
    return sum((v for k, v in m.items() if subset_any(a, k)), 0.0)


# --- subset-lattice transforms -------------------------------------------


def _superset_transform(values: np.ndarray, n: int, sign: float) -> np.ndarray:
    """In-place-free zeta (sign=+1) or Moebius (sign=-1) transform over supersets."""
    a = np.array(values, dtype=float).reshape((2,) * n)
    for axis in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[axis] = 0
        hi[axis] = 1
        a[tuple(lo)] += sign * a[tuple(hi)]
    return a.reshape(-1)


def superset_sum(values: np.ndarray, n: int) -> np.ndarray:
    return _superset_transform(values, n, 1.0)


def superset_moebius(values: np.ndarray, n: int) -> np.ndarray:
    return _superset_transform(values, n, -1.0)


@dataclass(frozen=True, eq=False)
class CommonalityTable:
    """Commonality values over every subset of the product frame.

    ``values[0]`` (the empty set) holds the total mass and is otherwise
    ignored; the nonempty entries determine the mass function.
    """

    scope: Scope
    values: np.ndarray

    def __getitem__(self, a: FocalSet) -> float:
        return float(self.values[a.mask])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values[1:])


def q_table(m: MassFunction) -> CommonalityTable:
    m.scope.check_capacity()
    return CommonalityTable(m.scope, superset_sum(m.to_array(), m.scope.size))


def _masses_from_q(values: np.ndarray, n: int) -> np.ndarray:
    out = superset_moebius(values, n)
    out[0] = 0.0
    return out


def _mass_function_from_array(scope: Scope, arr: np.ndarray) -> MassFunction:
    nz = np.flatnonzero(np.abs(arr) > ZERO_TOL)
    return MassFunction(scope, [(ExplicitSubset(scope, int(i)), float(arr[i])) for i in nz if i])


def mass_from_q(q: CommonalityTable) -> MassFunction:
    """Moebius inversion; negative masses are preserved."""
    q.scope.check_capacity()
    return _mass_function_from_array(q.scope, _masses_from_q(q.values, q.scope.size))


def _normalized(scope: Scope, unnormalized_q: np.ndarray) -> CommonalityTable:
    n = scope.size
    total = _masses_from_q(unnormalized_q, n)[1:].sum()
    if abs(total) < ZERO_TOL:
        return CommonalityTable(scope, np.zeros_like(unnormalized_q))
    values = unnormalized_q / total
    values[0] = 1.0
    return CommonalityTable(scope, values)


# --- combination ---------------------------------------------------------


def combine(m1: MassFunction, m2: MassFunction) -> MassFunction:
    """Dempster's rule. Operands over different scopes are extended first.

    Total conflict yields the zero valuation (no focal sets), never an
    exception.
    """
    scope = m1.scope.union(m2.scope)
    a, b = extend(m1, scope), extend(m2, scope)
    acc: dict[FocalSet, float] = {}
    for k1, v1 in a.items():
        for k2, v2 in b.items():
            inter = intersect_any(k1, k2)
            if inter is not None:
                acc[inter] = acc.get(inter, 0.0) + v1 * v2
    keys = sorted(acc, key=focal_key)
    norm = 0.0
    for k in keys:
        norm += acc[k]
    if abs(norm) < ZERO_TOL:
        return zero_valuation(scope)
    return MassFunction(scope, {k: acc[k] / norm for k in keys})


def combine_q(q1: CommonalityTable, q2: CommonalityTable) -> CommonalityTable:
    if q1.scope != q2.scope:
        raise ScopeMismatch("combine_q needs tables over the same scope; extend first")
    return _normalized(q1.scope, q1.values * q2.values)


def marginalize(m: MassFunction, keep: Iterable[str] | Scope) -> MassFunction:
    target = keep if isinstance(keep, Scope) else m.scope.sub(keep)
    if target == m.scope:
        return m
    acc: dict[FocalSet, float] = {}
    for k, v in m.items():
        p = project_any(k, target)
        acc[p] = acc.get(p, 0.0) + v
    return MassFunction(target, acc)


def remove(q1: CommonalityTable, q2: CommonalityTable) -> CommonalityTable:
    """Removal: ``c * q1 / q2`` where ``q2`` is nonzero, 0 elsewhere.

    ``c`` makes the induced mass sum to one. The induced mass may be
    negative. An induced total of zero gives the zero valuation.
    """
    if q1.scope != q2.scope:
        raise ScopeMismatch("remove needs tables over the same scope; extend first")
    v1, v2 = q1.values, q2.values
    ok = v2 != 0
    ok[0] = False
    if not np.any(ok & (v1 != 0)):
        raise RemovalError("divisor commonality vanishes wherever the dividend is nonzero")
    ratio = np.zeros_like(v1)
    np.divide(v1, v2, out=ratio, where=ok)
    return _normalized(q1.scope, ratio)


def condition(m: MassFunction, on: Iterable[str] | Scope) -> MassFunction:
    """``m`` with its marginal on ``on`` removed (possibly a pseudo-belief function)."""
    m.scope.check_capacity()
    marginal = extend(marginalize(m, on), m.scope)
    return mass_from_q(remove(q_table(m), q_table(marginal)))


@dataclass(frozen=True)
class Eq4Check:
    holds: bool
    max_abs_deviation: float
    route_deviation: float
    reconstructed: MassFunction


def _extended_q(m: MassFunction, names: Iterable[str]) -> CommonalityTable:
    return q_table(extend(marginalize(m, names), m.scope))


def verify_eq4(
    m: MassFunction,
    r: Iterable[str],
    s: Iterable[str],
    v: Iterable[str],
    tol: float = 1e-6,
) -> Eq4Check:
    """Check that ``m`` is rebuilt from its (r,v) and (s,v) conditionals and v-marginal.

    Two routes are computed: conditionals combined with the v-marginal, and
    the (r,v) and (s,v) marginals combined with the v-marginal removed. They
    must agree; ``route_deviation`` reports by how much they do not.
    """
    r, s, v = set(r), set(s), set(v)
    if not (r and s and v) or r & s or r & v or s & v or r | s | v != set(m.scope.names):
        raise FrameError("r, s, v must be disjoint nonempty sets covering the scope")
    m.scope.check_capacity()
    n = m.scope.size
    q_rv = _extended_q(m, r | v)
    q_sv = _extended_q(m, s | v)
    q_v = _extended_q(m, v)

    route_conditional = combine_q(combine_q(remove(q_rv, q_v), remove(q_sv, q_v)), q_v)
    route_removal = remove(combine_q(q_rv, q_sv), q_v)

    target = m.to_array()
    rebuilt = _masses_from_q(route_conditional.values, n)
    other = _masses_from_q(route_removal.values, n)
    dev = float(np.max(np.abs(rebuilt[1:] - target[1:])))
    route_dev = float(np.max(np.abs(rebuilt[1:] - other[1:])))
    return Eq4Check(
        holds=dev <= tol,
        max_abs_deviation=dev,
        route_deviation=route_dev,
        reconstructed=_mass_function_from_array(m.scope, rebuilt),
    )


def max_abs_difference(m1: MassFunction, m2: MassFunction) -> float:
    if m1.scope != m2.scope:
        raise ScopeMismatch("mass functions over different scopes")
    keys = set(m1) | set(m2)
    return max((abs(m1[k] - m2[k]) for k in keys), default=0.0)
