"""Variables, product frames and product-form focal sets.

Two set representations live here. ``ProductFocalSet`` stores one value
subset per variable and is closed under intersection and projection.
``ExplicitSubset`` is a bitmask over the enumerated product frame and is
used wherever a set may not be a Cartesian product (Moebius transforms,
removal results).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

#: Largest product frame for which subset-indexed arrays are built.
EXPLICIT_CAPACITY = 24


class FrameError(ValueError):
    """Raised for malformed variables or sets."""


class CapacityError(FrameError):
    """The product frame is too large for explicit (bitmask) mode."""


class ScopeMismatch(FrameError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    frame: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "frame", tuple(self.frame))
        if not self.name:
            raise FrameError("variable name must be nonempty")
        if not self.frame:
            raise FrameError(f"variable {self.name!r} has an empty frame")
        if len(set(self.frame)) != len(self.frame):
            raise FrameError(f"variable {self.name!r} has duplicate frame labels")

    @cached_property
    def positions(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.frame)}

    def sort_labels(self, labels: Iterable[str]) -> tuple[str, ...]:
        return tuple(sorted(labels, key=self.positions.__getitem__))


@dataclass(frozen=True)
class Scope:
    """An ordered collection of distinct variables.

    The order is the declaration order and every derived scope keeps it.
    """

    variables: tuple[Variable, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise FrameError(f"duplicate variable names in scope: {names}")

    @classmethod
    def of(cls, *variables: Variable) -> "Scope":
        return cls(tuple(variables))

    def __iter__(self):
        return iter(self.variables)

    def __len__(self):
        return len(self.variables)

    def __contains__(self, name) -> bool:
        return name in self.index

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @cached_property
    def index(self) -> dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    def variable(self, name: str) -> Variable:
        try:
            return self.variables[self.index[name]]
        except KeyError:
            raise FrameError(f"unknown variable {name!r}") from None

    def sub(self, names: Iterable[str]) -> "Scope":
        """Sub-scope holding ``names`` in this scope's canonical order."""
        wanted = set(names)
        unknown = wanted - set(self.names)
        if unknown:
            raise FrameError(f"unknown variable(s) {sorted(unknown)}")
        if not wanted:
            raise FrameError("sub-scope must be nonempty")
        return Scope(tuple(v for v in self.variables if v.name in wanted))

    def union(self, other: "Scope") -> "Scope":
        merged = list(self.variables)
        for v in other.variables:
            if v.name in self.index:
                if self.variable(v.name) != v:
                    raise ScopeMismatch(f"variable {v.name!r} declared with different frames")
            else:
                merged.append(v)
        return Scope(tuple(merged))

    def issubscope(self, other: "Scope") -> bool:
        return all(v.name in other.index and other.variable(v.name) == v for v in self.variables)

    @cached_property
    def size(self) -> int:
        """Cardinality of the product frame."""
        n = 1
        for v in self.variables:
            n *= len(v.frame)
        return n

    def check_capacity(self) -> None:
        if self.size > EXPLICIT_CAPACITY:
            raise CapacityError(
                f"product frame has {self.size} elements; explicit mode supports at most "
                f"{EXPLICIT_CAPACITY}"
            )

    @cached_property
    def tuples(self) -> tuple[tuple[str, ...], ...]:
        """Enumerated product frame; tuple ``i`` is bit ``i`` of an explicit mask."""
        self.check_capacity()
        return tuple(itertools.product(*(v.frame for v in self.variables)))

    @cached_property
    def tuple_index(self) -> dict[tuple[str, ...], int]:
        return {t: i for i, t in enumerate(self.tuples)}

    @property
    def full_mask(self) -> int:
        return (1 << self.size) - 1

    def full_set(self) -> "ProductFocalSet":
        return ProductFocalSet(self, tuple(frozenset(v.frame) for v in self.variables))


class ProductFocalSet:
    """A Cartesian product of one nonempty value subset per variable."""

    __slots__ = ("scope", "parts", "_hash")

    def __init__(self, scope: Scope, parts: Sequence[Iterable[str]]):
        parts = tuple(frozenset(p) for p in parts)
        if len(parts) != len(scope):
            raise FrameError(f"expected {len(scope)} parts, got {len(parts)}")
        for var, part in zip(scope.variables, parts):
            if not part:
                raise FrameError(f"empty part for variable {var.name!r}")
            bad = part - set(var.frame)
            if bad:
                raise FrameError(f"unknown label(s) {sorted(bad)} for variable {var.name!r}")
        self.scope = scope
        self.parts = parts
        self._hash = hash((scope, parts))

    @classmethod
    def from_mapping(cls, scope: Scope, mapping: dict[str, Iterable[str]]) -> "ProductFocalSet":
        missing = set(scope.names) - set(mapping)
        if missing:
            raise FrameError(f"missing part(s) for {sorted(missing)}")
        extra = set(mapping) - set(scope.names)
        if extra:
            raise FrameError(f"unknown variable(s) {sorted(extra)}")
        return cls(scope, [mapping[name] for name in scope.names])

    def __eq__(self, other):
        if not isinstance(other, ProductFocalSet):
            return NotImplemented
        return self.scope == other.scope and self.parts == other.parts

    def __hash__(self):
        return self._hash

    def part(self, name: str) -> frozenset[str]:
        return self.parts[self.scope.index[name]]

    def labels(self) -> tuple[tuple[str, ...], ...]:
        """Parts as label tuples sorted by frame order."""
        return tuple(v.sort_labels(p) for v, p in zip(self.scope.variables, self.parts))

    def sort_key(self) -> tuple:
        return tuple(
            tuple(sorted(v.positions[x] for x in p)) for v, p in zip(self.scope.variables, self.parts)
        )

    def as_dict(self) -> dict[str, list[str]]:
        return {name: list(lbls) for name, lbls in zip(self.scope.names, self.labels())}

    def __str__(self):
        return "×".join("{" + ",".join(lbls) + "}" for lbls in self.labels())

    def __repr__(self):
        return f"ProductFocalSet({self})"

    @property
    def cardinality(self) -> int:
        n = 1
        for p in self.parts:
            n *= len(p)
        return n

    def _require_same_scope(self, other: "ProductFocalSet") -> None:
        if self.scope != other.scope:
            raise ScopeMismatch(f"scopes differ: {self.scope.names} vs {other.scope.names}")

    def project(self, names: Iterable[str] | Scope) -> "ProductFocalSet":
        target = names if isinstance(names, Scope) else self.scope.sub(names)
        if not target.issubscope(self.scope):
            raise FrameError(f"cannot project {self.scope.names} onto {target.names}")
        return ProductFocalSet(target, [self.part(n) for n in target.names])

    def intersect(self, other: "ProductFocalSet") -> "ProductFocalSet | None":
        """Dimension-wise intersection; ``None`` stands for the empty set."""
        self._require_same_scope(other)
        parts = [a & b for a, b in zip(self.parts, other.parts)]
        if any(not p for p in parts):
            return None
        return ProductFocalSet(self.scope, parts)

    def extend(self, target: Scope) -> "ProductFocalSet":
        """Vacuous extension: new variables take their whole frame."""
        if not self.scope.issubscope(target):
            raise FrameError(f"target scope {target.names} lacks variables of {self.scope.names}")
        return ProductFocalSet(
            target,
            [self.part(v.name) if v.name in self.scope else frozenset(v.frame) for v in target.variables],
        )

    def issubset(self, other: "ProductFocalSet") -> bool:
        self._require_same_scope(other)
        return all(a <= b for a, b in zip(self.parts, other.parts))

    def isdisjoint(self, other: "ProductFocalSet") -> bool:
        self._require_same_scope(other)
        return any(not (a & b) for a, b in zip(self.parts, other.parts))

    def relation(self, other: "ProductFocalSet") -> str:
        """One of ``equal``, ``subset``, ``superset``, ``disjoint``, ``overlapping``."""
        if self == other:
            return "equal"
        if self.isdisjoint(other):
            return "disjoint"
        if self.issubset(other):
            return "subset"
        if other.issubset(self):
            return "superset"
        return "overlapping"

    def enumerate(self) -> "ExplicitSubset":
        index = self.scope.tuple_index
        mask = 0
        for t in itertools.product(*(v.sort_labels(p) for v, p in zip(self.scope.variables, self.parts))):
            mask |= 1 << index[t]
        return ExplicitSubset(self.scope, mask)

    @property
    def mask(self) -> int:
        return self.enumerate().mask


def project_focal(a: ProductFocalSet, names: Iterable[str]) -> ProductFocalSet:
    return a.project(names)


def intersect_focal(a: ProductFocalSet, b: ProductFocalSet) -> ProductFocalSet | None:
    return a.intersect(b)


def vacuous_extend_focal(a: ProductFocalSet, target: Scope) -> ProductFocalSet:
    return a.extend(target)


def focal_relation(a: ProductFocalSet, b: ProductFocalSet) -> str:
    return a.relation(b)


def enumerate_tuples(a: ProductFocalSet) -> "ExplicitSubset":
    return a.enumerate()


class ExplicitSubset:
    """An arbitrary nonempty subset of a product frame, stored as a bitmask."""

    __slots__ = ("scope", "mask")

    def __init__(self, scope: Scope, mask: int):
        scope.check_capacity()
        if mask <= 0 or mask > scope.full_mask:
            raise FrameError("explicit subset mask out of range (empty sets are not representable)")
        self.scope = scope
        self.mask = mask

    @classmethod
    def from_tuples(cls, scope: Scope, tuples: Iterable[Sequence[str]]) -> "ExplicitSubset":
        index = scope.tuple_index
        mask = 0
        for t in tuples:
            try:
                mask |= 1 << index[tuple(t)]
            except KeyError:
                raise FrameError(f"tuple {tuple(t)} is not in the frame of {scope.names}") from None
        return cls(scope, mask)

    def __eq__(self, other):
        if not isinstance(other, ExplicitSubset):
            return NotImplemented
        return self.scope == other.scope and self.mask == other.mask

    def __hash__(self):
        return hash((self.scope, self.mask))

    def __repr__(self):
        return f"ExplicitSubset({self.tuples()})"

    def __len__(self):
        return self.mask.bit_count()

    def tuples(self) -> list[tuple[str, ...]]:
        frame = self.scope.tuples
        return [frame[i] for i in range(len(frame)) if self.mask >> i & 1]

    def sort_key(self) -> int:
        return self.mask

    def issubset(self, other: "ExplicitSubset") -> bool:
        return self.mask & ~other.mask == 0

    def intersect(self, other: "ExplicitSubset") -> "ExplicitSubset | None":
        if self.scope != other.scope:
            raise ScopeMismatch(f"scopes differ: {self.scope.names} vs {other.scope.names}")
        mask = self.mask & other.mask
        return ExplicitSubset(self.scope, mask) if mask else None

    def project(self, names: Iterable[str] | Scope) -> "ExplicitSubset":
        target = names if isinstance(names, Scope) else self.scope.sub(names)
        idx = [self.scope.index[n] for n in target.names]
        return ExplicitSubset.from_tuples(target, {tuple(t[i] for i in idx) for t in self.tuples()})

    def extend(self, target: Scope) -> "ExplicitSubset":
        if not self.scope.issubscope(target):
            raise FrameError(f"target scope {target.names} lacks variables of {self.scope.names}")
        idx = [target.index[n] for n in self.scope.names]
        mine = set(self.tuples())
        return ExplicitSubset.from_tuples(
            target, [t for t in target.tuples if tuple(t[i] for i in idx) in mine]
        )

    def as_product(self) -> ProductFocalSet | None:
        """The equivalent product-form set, or ``None`` if this set is not a product."""
        ts = self.tuples()
        parts = [frozenset(t[i] for t in ts) for i in range(len(self.scope))]
        candidate = ProductFocalSet(self.scope, parts)
        return candidate if candidate.cardinality == len(ts) else None


FocalSet = ProductFocalSet | ExplicitSubset


def focal_key(a: FocalSet) -> tuple:
    """Canonical ordering key: product sets first, then explicit sets by mask."""
    if isinstance(a, ProductFocalSet):
        return (0, a.sort_key())
    return (1, a.sort_key())


def as_explicit(a: FocalSet) -> ExplicitSubset:
    return a.enumerate() if isinstance(a, ProductFocalSet) else a


def canonical(a: FocalSet) -> FocalSet:
    """Prefer the product representation whenever the set admits one."""
    if isinstance(a, ExplicitSubset):
        product = a.as_product()
        if product is not None:
            return product
    return a


def intersect_any(a: FocalSet, b: FocalSet) -> FocalSet | None:
    if isinstance(a, ProductFocalSet) and isinstance(b, ProductFocalSet):
        return a.intersect(b)
    out = as_explicit(a).intersect(as_explicit(b))
    return None if out is None else canonical(out)


def subset_any(a: FocalSet, b: FocalSet) -> bool:
    if isinstance(a, ProductFocalSet) and isinstance(b, ProductFocalSet):
        return a.issubset(b)
    return as_explicit(a).issubset(as_explicit(b))


def disjoint_any(a: FocalSet, b: FocalSet) -> bool:
    if isinstance(a, ProductFocalSet) and isinstance(b, ProductFocalSet):
        return a.isdisjoint(b)
    return as_explicit(a).mask & as_explicit(b).mask == 0


def project_any(a: FocalSet, target: Scope) -> FocalSet:
    return canonical(a.project(target))


def extend_any(a: FocalSet, target: Scope) -> FocalSet:
    return canonical(a.extend(target))


def product_subsets(label_sets: Sequence[Sequence[str]]) -> list[tuple[frozenset[str], ...]]:
    """Every tuple of nonempty subsets, one subset drawn from each label set."""
    per_var = [
        [frozenset(c) for k in range(1, len(labels) + 1) for c in itertools.combinations(labels, k)]
        for labels in label_sets
    ]
    return list(itertools.product(*per_var))
