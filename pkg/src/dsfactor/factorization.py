"""The F-measure and the two factorization identities built on it.

For a partition of the variables into dimensions r, s and v, the F-measure
matches masses exactly on the (r, s) block and accumulates them over
supersets on the v block. It stays non-negative for proper masses, which is
what makes ordinary frequency tests applicable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterable

from .belief import MassFunction, classify
from .frames import FrameError, ProductFocalSet, Scope, product_subsets

DEFAULT_TOL = 1e-9
# Relative deviation is only reported where the reference side exceeds this.
REL_FLOOR = 1e-12


class FactorizationError(ValueError):
    pass


@dataclass(frozen=True)
class DimensionPartition:
    r: tuple[str, ...]
    s: tuple[str, ...]
    v: tuple[str, ...]

    @classmethod
    def of(cls, scope: Scope, r: Iterable[str], s: Iterable[str], v: Iterable[str]) -> "DimensionPartition":
        r, s, v = set(r), set(s), set(v)
        if not (r and s and v):
            raise FrameError("r, s and v must all be nonempty")
        if r & s or r & v or s & v:
            raise FrameError("r, s and v must be disjoint")
        if r | s | v != set(scope.names):
            raise FrameError(f"r, s and v must cover the scope {list(scope.names)}")
        order = scope.names
        pick = lambda names: tuple(n for n in order if n in names)  # noqa: E731
        return cls(pick(r), pick(s), pick(v))

    @property
    def rs(self) -> tuple[str, ...]:
        return self.r + self.s


@dataclass
class FTable:
    scope: Scope
    partition: DimensionPartition
    entries: dict[tuple[ProductFocalSet, ProductFocalSet], float]

    def __getitem__(self, key: tuple[ProductFocalSet, ProductFocalSet]) -> float:
        return self.entries.get(key, 0.0)

    @property
    def rs_scope(self) -> Scope:
        return self.scope.sub(self.partition.rs)

    @property
    def v_scope(self) -> Scope:
        return self.scope.sub(self.partition.v)

    def v_parts(self) -> list[ProductFocalSet]:
        return sorted({v for _, v in self.entries}, key=ProductFocalSet.sort_key)

    def cell(self, rs: dict[str, Iterable[str]], v: dict[str, Iterable[str]]) -> float:
        """Look up an entry by label mappings, e.g. ``cell({"X": "p", "Y": "r"}, {"Z": "ab"})``."""
        return self[
            ProductFocalSet.from_mapping(self.rs_scope, rs),
            ProductFocalSet.from_mapping(self.v_scope, v),
        ]


def _split(focal: ProductFocalSet, rs_scope: Scope, v_scope: Scope):
    return focal.project(rs_scope), focal.project(v_scope)


def f_measure(m: MassFunction, part: DimensionPartition) -> FTable:
    """F(RS, V) = sum of m(RS x B) over v-parts B containing V."""
    cls = classify(m)
    if not cls.proper:
        raise FactorizationError("the F-measure is only defined here for proper mass functions")
    scope = m.scope
    rs_scope, v_scope = scope.sub(part.rs), scope.sub(part.v)
    by_rs: dict[ProductFocalSet, list[tuple[ProductFocalSet, float]]] = {}
    for focal, mass in m.items():
        if not isinstance(focal, ProductFocalSet):
            raise FactorizationError(f"focal set {focal!r} is not a product across (r∪s, v)")
        rs, vpart = _split(focal, rs_scope, v_scope)
        by_rs.setdefault(rs, []).append((vpart, mass))

    # Every nonzero cell has V inside some focal v-part.
    candidates: set[ProductFocalSet] = set()
    for entries in by_rs.values():
        for vpart, _ in entries:
            for parts in product_subsets(vpart.labels()):
                candidates.add(ProductFocalSet(v_scope, parts))
    vs = sorted(candidates, key=ProductFocalSet.sort_key)

    table: dict[tuple[ProductFocalSet, ProductFocalSet], float] = {}
    for rs in sorted(by_rs, key=ProductFocalSet.sort_key):
        for V in vs:
            total = 0.0
            for vpart, mass in by_rs[rs]:
                if V.issubset(vpart):
                    total += mass
            if total != 0.0:
                table[(rs, V)] = total
    return FTable(scope, part, table)


@dataclass
class FMarginal:
    """F with the r block, the s block, or both summed out."""

    drop: str
    entries: dict

    def __getitem__(self, key) -> float:
        return self.entries.get(key, 0.0)


def f_marginal(F: FTable, drop: str) -> FMarginal:
    """``drop="s"`` gives F^{r,.,v}, ``drop="r"`` gives F^{.,s,v}, ``drop="rs"`` gives F^{..v}.

    Keys are ``(R, V)``, ``(S, V)`` or ``V`` respectively.
    """
    if drop not in ("r", "s", "rs"):
        raise ValueError(f"drop must be 'r', 's' or 'rs', not {drop!r}")
    keep_scope = None
    if drop == "s":
        keep_scope = F.scope.sub(F.partition.r)
    elif drop == "r":
        keep_scope = F.scope.sub(F.partition.s)
    out: dict = {}
    for (rs, V), value in F.entries.items():
        key = V if keep_scope is None else (rs.project(keep_scope), V)
        out[key] = out.get(key, 0.0) + value
    return FMarginal(drop, out)


@dataclass(frozen=True)
class CellDeviation:
    rs_part: ProductFocalSet
    v_part: ProductFocalSet
    observed: float
    expected: float

    @property
    def deviation(self) -> float:
        return abs(self.observed - self.expected)


@dataclass
class FactorizationReport:
    identity_tested: str
    variant: str
    tolerance: float
    max_abs_deviation: float
    max_rel_deviation: float
    holds: bool
    per_cell_deviations: list[CellDeviation] = field(default_factory=list)

    def worst(self) -> CellDeviation | None:
        return max(self.per_cell_deviations, key=lambda c: c.deviation, default=None)

    def cell(self, rs_part: ProductFocalSet, v_part: ProductFocalSet) -> CellDeviation | None:
        for c in self.per_cell_deviations:
            if c.rs_part == rs_part and c.v_part == v_part:
                return c
        return None


def _report(identity: str, variant: str, cells: list[CellDeviation], tol: float) -> FactorizationReport:
    max_abs = max((c.deviation for c in cells), default=0.0)
    max_rel = max(
        (c.deviation / abs(c.expected) for c in cells if abs(c.expected) >= REL_FLOOR), default=0.0
    )
    return FactorizationReport(identity, variant, tol, max_abs, max_rel, max_abs <= tol, cells)


def check_noninfluence(F: FTable, m_rs: MassFunction, tol: float = DEFAULT_TOL) -> FactorizationReport:
    """Test F(RS, V) = m_rs(RS) * F^{..v}(V) on every cell nonzero on either side."""
    rs_scope = F.rs_scope
    if m_rs.scope != rs_scope:
        raise FactorizationError(
            f"marginal is over {m_rs.scope.names}, expected the r∪s block {rs_scope.names}"
        )
    fv = f_marginal(F, "rs")
    rs_parts = {k for k, _ in m_rs.items()} | {rs for rs, _ in F.entries}
    cells = []
    for rs in sorted(rs_parts, key=ProductFocalSet.sort_key):
        for V in sorted(fv.entries, key=ProductFocalSet.sort_key):
            lhs, rhs = F[(rs, V)], m_rs[rs] * fv[V]
            if lhs == 0.0 and rhs == 0.0:
                continue
            cells.append(CellDeviation(rs, V, lhs, rhs))
    return _report("noninfluence", "paper_verbatim", cells, tol)


VARIANTS = ("normalized", "paper_verbatim")


def check_cond_independence(
    F: FTable, variant: str = "normalized", tol: float = DEFAULT_TOL
) -> FactorizationReport:
    """Test whether the r and s blocks of F factor at each v-part.

    ``paper_verbatim``: F(R×S, V) = F^{r,.,v}(R, V) · F^{.,s,v}(S, V).
    ``normalized``: F(R×S, V) · F^{..v}(V) = F^{r,.,v}(R, V) · F^{.,s,v}(S, V),
    reported as observed F against the product divided by F^{..v}(V).
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    r_scope = F.scope.sub(F.partition.r)
    s_scope = F.scope.sub(F.partition.s)
    rs_scope = F.rs_scope
    fr, fs, fv = f_marginal(F, "s"), f_marginal(F, "r"), f_marginal(F, "rs")

    cells = []
    for V in F.v_parts():
        total = fv[V]
        if variant == "normalized" and total == 0.0:
            continue
        Rs = sorted({R for (R, W) in fr.entries if W == V}, key=ProductFocalSet.sort_key)
        Ss = sorted({S for (S, W) in fs.entries if W == V}, key=ProductFocalSet.sort_key)
        for R, S in product(Rs, Ss):
            rs = ProductFocalSet(rs_scope, [R.part(n) if n in r_scope else S.part(n) for n in rs_scope.names])
            lhs = F[(rs, V)]
            rhs = fr[(R, V)] * fs[(S, V)]
            if variant == "normalized":
                rhs /= total
            if lhs == 0.0 and rhs == 0.0:
                continue
            cells.append(CellDeviation(rs, V, lhs, rhs))
    return _report("conditional_independence", variant, cells, tol)


@dataclass(frozen=True)
class RatioViolation:
    rs_parts: tuple[ProductFocalSet, ProductFocalSet]
    v_parts: tuple[ProductFocalSet, ProductFocalSet]
    ratios: tuple[float, float]
    masses: tuple[float, float, float, float]


def ratio_obstruction(
    m: MassFunction, part: DimensionPartition, rtol: float = 1e-9
) -> list[RatioViolation]:
    """Proportionality constraints a proper factorization would impose, and which fail.

    For two rs-parts and two v-parts that both rs-parts carry, a product of
    an (r∪s)-valuation and a v-valuation forces
    m(RS1×V1)/m(RS1×V2) = m(RS2×V1)/m(RS2×V2).
    """
    rs_scope, v_scope = m.scope.sub(part.rs), m.scope.sub(part.v)
    table: dict[ProductFocalSet, dict[ProductFocalSet, float]] = {}
    for focal, mass in m.items():
        if not isinstance(focal, ProductFocalSet):
            raise FactorizationError(f"focal set {focal!r} is not product-form")
        rs, vpart = _split(focal, rs_scope, v_scope)
        table.setdefault(rs, {})[vpart] = mass

    violations = []
    rs_sorted = sorted(table, key=ProductFocalSet.sort_key)
    for rs1, rs2 in combinations(rs_sorted, 2):
        common = sorted(set(table[rs1]) & set(table[rs2]), key=ProductFocalSet.sort_key)
        for v1, v2 in combinations(common, 2):
            a, b = table[rs1][v1], table[rs1][v2]
            c, d = table[rs2][v1], table[rs2][v2]
            ratio1, ratio2 = a / b, c / d
            if abs(ratio1 - ratio2) > rtol * max(abs(ratio1), abs(ratio2)):
                violations.append(RatioViolation((rs1, rs2), (v1, v2), (ratio1, ratio2), (a, b, c, d)))
    return violations
