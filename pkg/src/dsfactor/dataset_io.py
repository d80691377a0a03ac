"""Model and record files, empirical masses and seeded record generation.

Model file (JSON)::

    {"variables": [{"name": "X", "frame": ["p", "q"]}, ...],
     "focals": [{"X": ["p"], "Y": ["r"], "Z": ["a", "b"], "mass": "0.160"}, ...],
     "impossible": [{"X": ["p"], "Y": ["r"]}, ...]}

A focal entry that is not a Cartesian product is written as
``{"tuples": [["p", "r", "a"], ...], "mass": "..."}``.

Records file (JSON Lines): an optional header object carrying
``"variables"`` (and optionally ``"generator"`` and ``"impossible"``),
followed by one object per record mapping each variable to a nonempty
label list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from importlib import resources
from typing import Any, Iterable

import numpy as np

from .belief import MassFunction, classify
from .frames import ExplicitSubset, FrameError, ProductFocalSet, Scope, Variable, canonical

RESERVED_KEYS = ("mass", "tuples")


class DataError(ValueError):
    """A model or records document could not be read."""


class PseudoModelError(ValueError):
    """Sampling needs a proper, normal mass function."""


@dataclass(frozen=True)
class RecordSet:
    scope: Scope
    records: tuple[ProductFocalSet, ...]
    impossible: tuple[dict[str, tuple[str, ...]], ...] = ()
    header: dict[str, Any] = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def _parse_variables(raw) -> Scope:
    if not isinstance(raw, list) or not raw:
        raise DataError('"variables" must be a nonempty list')
    variables = []
    for entry in raw:
        try:
            name, frame = entry["name"], entry["frame"]
        except (TypeError, KeyError):
            raise DataError(f"malformed variable declaration: {entry!r}") from None
        if name in RESERVED_KEYS:
            raise DataError(f"variable name {name!r} is reserved")
        if not isinstance(frame, list) or not all(isinstance(x, str) for x in frame):
            raise DataError(f"frame of {name!r} must be a list of strings")
        try:
            variables.append(Variable(str(name), tuple(frame)))
        except FrameError as exc:
            raise DataError(str(exc)) from None
    try:
        return Scope(tuple(variables))
    except FrameError as exc:
        raise DataError(str(exc)) from None


def _variables_doc(scope: Scope) -> list[dict]:
    return [{"name": v.name, "frame": list(v.frame)} for v in scope]


def _parse_mass(raw) -> Decimal:
    try:
        value = raw if isinstance(raw, Decimal) else Decimal(str(raw))
    except InvalidOperation:
        raise DataError(f"malformed mass {raw!r}") from None
    if isinstance(raw, bool) or not value.is_finite():
        raise DataError(f"malformed mass {raw!r}")
    return value


def _parse_impossible(raw, scope: Scope) -> tuple[dict[str, tuple[str, ...]], ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise DataError('"impossible" must be a list')
    out = []
    for entry in raw:
        if not isinstance(entry, dict) or not entry:
            raise DataError(f"malformed impossible entry {entry!r}")
        parsed = {}
        for name, labels in entry.items():
            var = scope.variable(name) if name in scope else None
            if var is None:
                raise DataError(f"impossible entry names unknown variable {name!r}")
            if not isinstance(labels, list) or not labels or set(labels) - set(var.frame):
                raise DataError(f"impossible entry has bad labels for {name!r}: {labels!r}")
            parsed[name] = var.sort_labels(labels)
        out.append(parsed)
    return tuple(out)


def _parse_focal(entry, scope: Scope):
    if not isinstance(entry, dict) or "mass" not in entry:
        raise DataError(f"focal entry without mass: {entry!r}")
    mass = _parse_mass(entry["mass"])
    try:
        if "tuples" in entry:
            focal = ExplicitSubset.from_tuples(scope, [tuple(t) for t in entry["tuples"]])
        else:
            focal = ProductFocalSet.from_mapping(
                scope, {k: v for k, v in entry.items() if k != "mass"}
            )
    except FrameError as exc:
        raise DataError(f"bad focal set {entry!r}: {exc}") from None
    return focal, mass


def parse_model_document(text: str) -> tuple[MassFunction, tuple[dict[str, tuple[str, ...]], ...]]:
    """Parse a model file, returning the mass function and its impossible list."""
    try:
        doc = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise DataError(f"not a JSON document: {exc}") from None
    if not isinstance(doc, dict):
        raise DataError("model document must be an object")
    scope = _parse_variables(doc.get("variables"))
    focals = doc.get("focals")
    if not isinstance(focals, list):
        raise DataError('"focals" must be a list')
    masses: dict = {}
    decimals: dict = {}
    for entry in focals:
        focal, mass = _parse_focal(entry, scope)
        key = canonical(focal)
        if key in masses:
            raise DataError(f"duplicate focal set {key!r}")
        masses[key] = float(mass)
        decimals[key] = str(entry["mass"]) if isinstance(entry["mass"], str) else str(mass)
    m = MassFunction(scope, masses, decimals=decimals)
    return m, _parse_impossible(doc.get("impossible"), scope)


def parse_model(text: str) -> MassFunction:
    return parse_model_document(text)[0]


def decimal_masses(m: MassFunction) -> dict:
    """Exact decimal value of every mass (from the source text where known)."""
    out = {}
    for k, v in m.items():
        if m.decimals is not None and k in m.decimals:
            out[k] = Decimal(m.decimals[k])
        else:
            out[k] = Decimal(repr(v))
    return out


def _mass_text(m: MassFunction, focal) -> str:
    if m.decimals is not None and focal in m.decimals and float(m.decimals[focal]) == m[focal]:
        return m.decimals[focal]
    return repr(m[focal])


def model_document(m: MassFunction, impossible: Iterable[dict] = ()) -> dict:
    focals = []
    for k, _ in m.items():
        if isinstance(k, ProductFocalSet):
            entry: dict[str, Any] = k.as_dict()
        else:
            entry = {"tuples": [list(t) for t in k.tuples()]}
        entry["mass"] = _mass_text(m, k)
        focals.append(entry)
    doc: dict[str, Any] = {
        "variables": _variables_doc(m.scope),
        "class": classify(m).as_dict(),
        "representation": m.representation_mode,
        "focals": focals,
    }
    impossible = [{k: list(v) for k, v in e.items()} for e in impossible]
    if impossible:
        doc["impossible"] = impossible
    return doc


def serialize_model(m: MassFunction, impossible: Iterable[dict] = ()) -> str:
    return json.dumps(model_document(m, impossible), indent=2, ensure_ascii=False) + "\n"


def load_counterexample() -> MassFunction:
    """The bundled three-variable model that factorizes only through pseudo-beliefs."""
    text = resources.files("dsfactor.data").joinpath("counterexample.json").read_text("utf-8")
    return parse_model(text)


# --- records -------------------------------------------------------------


def _infer_scope(rows: list[dict]) -> Scope:
    order: list[str] = []
    frames: dict[str, list[str]] = {}
    for row in rows:
        for name, labels in row.items():
            if name not in frames:
                order.append(name)
                frames[name] = []
            for label in labels if isinstance(labels, list) else []:
                if label not in frames[name]:
                    frames[name].append(label)
    return Scope(tuple(Variable(n, tuple(frames[n])) for n in order))


def parse_records(text: str, scope: Scope | None = None) -> RecordSet:
    """Parse a JSON Lines records document.

    The scope comes from the header line if there is one, else from
    ``scope``, else it is inferred from the labels in order of appearance.
    """
    header: dict[str, Any] = {}
    impossible_raw = None
    rows: list[tuple[int, dict]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise DataError(f"line {lineno}: expected an object")
        if "variables" in obj:
            if rows or header:
                raise DataError(f"line {lineno}: header must be the first line")
            header = obj
            try:
                scope = _parse_variables(obj["variables"])
            except DataError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            impossible_raw = obj.get("impossible")
            continue
        rows.append((lineno, obj))

    if scope is None:
        if not rows:
            return RecordSet(Scope(()), ())
        scope = _infer_scope([r for _, r in rows])

    records = []
    for lineno, obj in rows:
        if set(obj) != set(scope.names):
            raise DataError(
                f"line {lineno}: expected variables {list(scope.names)}, got {sorted(obj)}"
            )
        for name, labels in obj.items():
            if not isinstance(labels, list) or not labels:
                raise DataError(f"line {lineno}: empty or non-list cell for {name!r}")
        try:
            records.append(ProductFocalSet.from_mapping(scope, obj))
        except FrameError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    return RecordSet(scope, tuple(records), _parse_impossible(impossible_raw, scope), header)


def serialize_records(records: RecordSet, generator: dict | None = None) -> str:
    header: dict[str, Any] = {"variables": _variables_doc(records.scope)}
    if generator is not None:
        header["generator"] = generator
    if records.impossible:
        header["impossible"] = [{k: list(v) for k, v in e.items()} for e in records.impossible]
    lines = [json.dumps(header, separators=(",", ":"), ensure_ascii=False)]
    for rec in records:
        lines.append(json.dumps(rec.as_dict(), separators=(",", ":"), ensure_ascii=False))
    return "\n".join(lines) + "\n"


def empirical_mass(records: RecordSet) -> MassFunction:
    """Relative frequency of each distinct record, read as a focal set."""
    n = len(records)
    if n == 0:
        raise DataError("cannot estimate a mass function from an empty record set")
    counts: dict[ProductFocalSet, int] = {}
    for rec in records:
        counts[rec] = counts.get(rec, 0) + 1
    return MassFunction(records.scope, {k: c / n for k, c in counts.items()})


def generator_info(seed: int, n: int) -> dict[str, Any]:
    return {
        "prng": "numpy.random.PCG64",
        "numpy": np.__version__,
        "method": "inverse-cdf over focal sets in canonical order",
        "seed": seed,
        "n": n,
    }


def generate_records(m: MassFunction, n: int, seed: int) -> RecordSet:
    """Draw ``n`` i.i.d. focal sets with probability equal to their mass."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    cls = classify(m)
    if not (cls.proper and cls.normal):
        raise PseudoModelError("records can only be sampled from a proper, normal mass function")
    focals = [k for k, _ in m.items()]
    if not all(isinstance(k, ProductFocalSet) for k in focals):
        raise PseudoModelError("records must be product-form; the model has non-product focal sets")
    cum = np.cumsum([v for _, v in m.items()])
    cum /= cum[-1]
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = np.searchsorted(cum, rng.random(n), side="right")
    np.minimum(idx, len(focals) - 1, out=idx)
    return RecordSet(m.scope, tuple(focals[i] for i in idx), header={"generator": generator_info(seed, n)})
