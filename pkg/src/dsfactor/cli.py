"""Command-line interface.

Exit codes: 0 success or hypothesis accepted, 1 usage error, 2 data or
parse error, 3 inconsistent combination (zero valuation), 4 pseudo-belief
result without ``--allow-pseudo``, 5 hypothesis rejected, 6 sample-size
gate failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .belief import (
    MassFunction,
    RemovalError,
    classify,
    combine,
    condition,
    marginalize,
    q_of,
    verify_eq4,
)
from .dataset_io import (
    DataError,
    PseudoModelError,
    generate_records,
    generator_info,
    model_document,
    parse_model_document,
    parse_records,
    serialize_model,
    serialize_records,
)
from .evidential_stats import (
    DEFAULT_THRESHOLD,
    StatsError,
    UntestableError,
    build_contingency,
    fit_loglinear,
    sample_size_gate,
    standardized_residuals,
    stepwise_conditional_test,
    suggest_recoding,
)
from .factorization import (
    DEFAULT_TOL,
    DimensionPartition,
    FactorizationError,
    check_cond_independence,
    check_noninfluence,
    f_measure,
    ratio_obstruction,
)
from .frames import CapacityError, FrameError, ProductFocalSet, product_subsets

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INCONSISTENT = 3
EXIT_PSEUDO = 4
EXIT_REJECT = 5
EXIT_GATE = 6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- helpers -------------------------------------------------------------


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _digest(paths: Sequence[str]) -> dict[str, str]:
    return {p: hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in paths}


def _names(raw: str) -> list[str]:
    return [n.strip() for n in raw.split(",") if n.strip()]


def _partition(scope, args) -> DimensionPartition:
    try:
        return DimensionPartition.of(scope, _names(args.r), _names(args.s), _names(args.v))
    except FrameError as exc:
        raise UsageError(str(exc)) from None


def _focal(f: ProductFocalSet) -> dict[str, list[str]]:
    return f.as_dict()


def _num(x) -> float | None:
    x = float(x)
    return None if math.isnan(x) else x


def _emit(doc: dict[str, Any], out: str | None) -> None:
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")


def _write_text(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _echo(argv: Sequence[str]) -> list[str]:
    return ["dsfactor", *argv]


# --- algebra -------------------------------------------------------------


def _load_model(path: str):
    return parse_model_document(_read(path))


def _keep_decimals(result, *sources):
    """Reuse a source's decimal text wherever the result mass is bit-equal to it."""
    texts = {}
    for src in sources:
        for k, text in (src.decimals or {}).items():
            if k in result and float(text) == result[k]:
                texts.setdefault(k, text)
    if not texts:
        return result
    return MassFunction(result.scope, dict(result.items()), decimals=texts)


def cmd_algebra(args, argv) -> int:
    m, impossible = _load_model(args.model)
    op = args.op
    if op == "classify":
        doc = {"class": classify(m).as_dict(), "total_mass": m.total, "focal_sets": len(m)}
        _write_text(json.dumps(doc, indent=2) + "\n", args.output)
        return EXIT_OK
    if op == "qtable":
        scope = m.scope
        entries = []
        for parts in product_subsets([v.frame for v in scope]):
            a = ProductFocalSet(scope, parts)
            q = q_of(m, a)
            if q != 0.0:
                entries.append({**a.as_dict(), "q": q})
        doc = {
            "variables": model_document(m)["variables"],
            "class": classify(m).as_dict(),
            "domain": "product-form subsets",
            "commonality": entries,
        }
        _write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", args.output)
        return EXIT_OK
    if op == "combine":
        other, _ = _load_model(args.other)
        result = _keep_decimals(combine(m, other), m, other)
        if classify(result).zero:
            sys.stderr.write("combination is inconsistent (total conflict): zero valuation\n")
            _write_text(serialize_model(result), args.output)
            return EXIT_INCONSISTENT
    elif op == "marginalize":
        try:
            result = _keep_decimals(marginalize(m, _names(args.keep)), m)
        except FrameError as exc:
            raise UsageError(str(exc)) from None
    elif op == "condition":
        try:
            names = m.scope.sub(_names(args.on)).names
        except FrameError as exc:
            raise UsageError(str(exc)) from None
        result = condition(m, names)
        cls = classify(result)
        if cls.zero:
            return EXIT_INCONSISTENT
        if not cls.proper and not args.allow_pseudo:
            sys.stderr.write("conditioning produced negative masses; rerun with --allow-pseudo to keep them\n")
            return EXIT_PSEUDO
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(op)
    _write_text(serialize_model(result), args.output)
    return EXIT_OK


# --- factorization -------------------------------------------------------


def _cells(report) -> list[dict]:
    return [
        {
            "rs_part": _focal(c.rs_part),
            "v_part": _focal(c.v_part),
            "observed": c.observed,
            "expected": c.expected,
            "deviation": c.deviation,
        }
        for c in report.per_cell_deviations
    ]


def _fact_report(rep) -> dict:
    return {
        "identity": rep.identity_tested,
        "variant": rep.variant,
        "tolerance": rep.tolerance,
        "holds": rep.holds,
        "max_abs_deviation": rep.max_abs_deviation,
        "max_rel_deviation": rep.max_rel_deviation,
        "cells": _cells(rep),
    }


def cmd_verify_factorization(args, argv) -> int:
    m, _ = _load_model(args.model)
    part = _partition(m.scope, args)
    tol = args.tol
    doc: dict[str, Any] = {
        "command": _echo(argv),
        "version": __version__,
        "inputs": _digest([args.model]),
        "partition": {"r": list(part.r), "s": list(part.s), "v": list(part.v)},
        "class": classify(m).as_dict(),
    }
    try:
        eq4 = verify_eq4(m, part.r, part.s, part.v, tol)
        doc["eq4"] = {
            "holds": eq4.holds,
            "max_abs_deviation": eq4.max_abs_deviation,
            "route_deviation": eq4.route_deviation,
        }
    except (CapacityError, RemovalError) as exc:
        eq4 = None
        doc["eq4"] = {"holds": None, "skipped": str(exc)}

    F = f_measure(m, part)
    doc["f_measure"] = [
        {"rs_part": _focal(rs), "v_part": _focal(v), "F": value} for (rs, v), value in F.entries.items()
    ]
    non = check_noninfluence(F, marginalize(m, part.rs), tol)
    ci = {var: check_cond_independence(F, var, tol) for var in ("normalized", "paper_verbatim")}
    obstruction = ratio_obstruction(m, part)
    doc["noninfluence"] = _fact_report(non)
    doc["conditional_independence"] = {var: _fact_report(rep) for var, rep in ci.items()}
    doc["ratio_obstruction"] = [
        {
            "rs_parts": [_focal(a) for a in v.rs_parts],
            "v_parts": [_focal(b) for b in v.v_parts],
            "ratios": list(v.ratios),
            "masses": list(v.masses),
        }
        for v in obstruction
    ]

    selected = {
        "eq4": None if eq4 is None else eq4.holds,
        "noninfluence": non.holds,
        "cond_independence": ci[args.variant].holds,
    }[args.identity]
    doc["selected"] = {"identity": args.identity, "variant": args.variant, "holds": selected}
    _emit(doc, args.output)

    print(f"eq4 decomposition:        {doc['eq4'].get('holds')}")
    print(f"non-influence of v:       {non.holds} (max dev {non.max_abs_deviation:.3g})")
    for var, rep in ci.items():
        print(f"cond. independence [{var}]: {rep.holds} (max dev {rep.max_abs_deviation:.3g})")
    print(f"ratio obstructions:       {len(obstruction)}")
    if selected is None:
        return EXIT_DATA
    return EXIT_OK if selected else EXIT_REJECT


# --- statistics ----------------------------------------------------------


def _z_levels(args, scope, part):
    if not args.z_levels:
        return None
    try:
        raw = json.loads(args.z_levels)
        v_scope = scope.sub(part.v)
        return [ProductFocalSet.from_mapping(v_scope, entry) for entry in raw]
    except (json.JSONDecodeError, TypeError, AttributeError, FrameError) as exc:
        raise UsageError(f"bad --z-levels: {exc}") from None


def _table_doc(table) -> dict:
    return {
        "x_levels": [_focal(x) for x in table.x_levels],
        "y_levels": [_focal(y) for y in table.y_levels],
        "z_levels": [_focal(z) for z in table.z_levels],
        "counts": table.counts.tolist(),
        "structural_zeros": table.structural_zeros.tolist(),
        "n_records": table.n_records,
        "level_sizes": table.level_sizes.tolist(),
    }


def _gate_doc(gate) -> dict:
    return {
        "n_xy": gate.n_xy,
        "levels": [
            {"level": _focal(lv.level), "n": lv.n, "lower": lv.lower, "upper": lv.upper, "verdict": lv.verdict}
            for lv in gate.levels
        ],
        "recode_recommended": gate.recode_recommended,
    }


def _load_records(path: str):
    return parse_records(_read(path))


def cmd_test_structure(args, argv) -> int:
    records = _load_records(args.records)
    if not len(records):
        raise DataError("records file is empty")
    part = _partition(records.scope, args)
    z_levels = _z_levels(args, records.scope, part)
    table = build_contingency(records.records, part, z_levels, records.impossible)
    gate = sample_size_gate(table)
    doc: dict[str, Any] = {
        "command": _echo(argv),
        "version": __version__,
        "inputs": _digest([args.records]),
        "partition": {"r": list(part.r), "s": list(part.s), "v": list(part.v)},
        "threshold": args.threshold,
        "gate": _gate_doc(gate),
        "contingency": _table_doc(table),
    }
    try:
        fit = fit_loglinear(table)
    except UntestableError as exc:
        doc["error"] = str(exc)
        _emit(doc, args.output)
        print(f"untestable: {exc}", file=sys.stderr)
        return EXIT_DATA
    residuals = standardized_residuals(table, fit)
    accepted = fit.accepts(args.threshold)
    doc["fit"] = {
        "chi2": fit.chi2,
        "df": fit.df,
        "p_value": fit.p_value,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "f": fit.f,
        "delta_x": fit.delta_x.tolist(),
        "delta_y": fit.delta_y.tolist(),
        "delta_z": fit.delta_z.tolist(),
        "delta_xy": fit.delta_xy.tolist(),
        "fitted": fit.fitted.tolist(),
        "excluded_cells": [list(c) for c in fit.excluded_cells],
    }
    doc["residuals"] = [[[_num(x) for x in row] for row in plane] for plane in residuals.values.tolist()]
    doc["verdict"] = {"accepted": accepted, "rule": f"p >= {args.threshold}"}
    if not accepted:
        rec = suggest_recoding(table, fit, args.max_groups, args.threshold)
        doc["recoding_suggestion"] = {
            "heuristic": True,
            "groups": [[_focal(table.z_levels[l]) for l in g] for g in rec.groups],
            "group_indices": rec.groups,
            "merges": [{"a": a, "b": b, "distance": d} for a, b, d in rec.merges],
            "residual_ranking": rec.residual_ranking,
            "empty_levels": rec.empty_levels,
        }
    _emit(doc, args.output)

    print(f"levels: {len(table.z_levels)}  N_xy: {gate.n_xy}  gate: {'ok' if gate.ok else 'FAILED'}")
    for lv in gate.levels:
        print(f"  {lv.level}: n={lv.n} window=[{lv.lower}, {lv.upper}] {lv.verdict}")
    print(f"chi2={fit.chi2:.6g} df={fit.df} p={fit.p_value:.6g} -> {'accept' if accepted else 'reject'}")
    if not gate.ok:
        return EXIT_GATE
    return EXIT_OK if accepted else EXIT_REJECT


def cmd_test_stepwise(args, argv) -> int:
    records = _load_records(args.records)
    if not len(records):
        raise DataError("records file is empty")
    part = _partition(records.scope, args)
    z_levels = _z_levels(args, records.scope, part)
    result = stepwise_conditional_test(records.records, part, z_levels, records.impossible, args.threshold)
    levels = []
    for lv in result.levels:
        entry = {"level": _focal(lv.level), "n": lv.n, "testable": lv.testable}
        if lv.testable:
            entry.update(chi2=lv.chi2, df=lv.df, p_value=lv.p_value, accepted=lv.accepts(args.threshold))
        else:
            entry["status"] = "untestable"
            entry["reason"] = lv.reason
        levels.append(entry)
    doc = {
        "command": _echo(argv),
        "version": __version__,
        "inputs": _digest([args.records]),
        "partition": {"r": list(part.r), "s": list(part.s), "v": list(part.v)},
        "threshold": args.threshold,
        "levels": levels,
        "verdict": {"accepted": result.verdict},
    }
    _emit(doc, args.output)
    for lv in result.levels:
        if lv.testable:
            flag = "accept" if lv.accepts(args.threshold) else "REJECT"
            print(f"{lv.level}: n={lv.n} chi2={lv.chi2:.6g} df={lv.df} p={lv.p_value:.6g} {flag}")
        else:
            print(f"{lv.level}: n={lv.n} untestable ({lv.reason})")
    return EXIT_OK if result.verdict else EXIT_REJECT


def cmd_generate(args, argv) -> int:
    m, impossible = _load_model(args.model)
    if args.n < 0:
        raise UsageError("-n must be nonnegative")
    try:
        records = generate_records(m, args.n, args.seed)
    except PseudoModelError as exc:
        raise DataError(str(exc)) from None
    if impossible:
        records = type(records)(records.scope, records.records, impossible, records.header)
    text = serialize_records(records, generator_info(args.seed, args.n)) if args.n else ""
    Path(args.output).write_text(text, encoding="utf-8")
    return EXIT_OK


# --- entry point ---------------------------------------------------------


def _add_partition(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r", required=True, help="comma-separated variables of the r block")
    p.add_argument("--s", required=True, help="comma-separated variables of the s block")
    p.add_argument("--v", required=True, help="comma-separated variables of the v block")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsfactor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    alg = sub.add_parser("algebra", help="belief-function algebra on model files")
    alg_sub = alg.add_subparsers(dest="op", required=True, parser_class=_Parser)
    p = alg_sub.add_parser("combine", help="Dempster combination of two models")
    p.add_argument("model")
    p.add_argument("other")
    p = alg_sub.add_parser("marginalize")
    p.add_argument("model")
    p.add_argument("--keep", required=True)
    p = alg_sub.add_parser("condition")
    p.add_argument("model")
    p.add_argument("--on", required=True)
    p.add_argument("--allow-pseudo", action="store_true")
    p = alg_sub.add_parser("qtable")
    p.add_argument("model")
    p = alg_sub.add_parser("classify")
    p.add_argument("model")
    for name in ("combine", "marginalize", "condition", "qtable", "classify"):
        alg_sub.choices[name].add_argument("-o", "--output")
    alg.set_defaults(func=cmd_algebra)

    p = sub.add_parser("verify-factorization", help="exact factorization checks on a model")
    p.add_argument("model")
    _add_partition(p)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--identity", choices=("eq4", "noninfluence", "cond_independence"), default="cond_independence")
    p.add_argument("--variant", choices=("normalized", "paper_verbatim"), default="normalized")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_verify_factorization)

    p = sub.add_parser("test-structure", help="log-linear [XY][Z] test on records")
    p.add_argument("records")
    _add_partition(p)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--z-levels", help='JSON list of v-part mappings, e.g. \'[{"Z": ["a", "b"]}]\'')
    p.add_argument("--max-groups", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_test_structure)

    p = sub.add_parser("test-stepwise", help="per-level (X, Y) independence tests")
    p.add_argument("records")
    _add_partition(p)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--z-levels")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_test_stepwise)

    p = sub.add_parser("generate", help="sample records from a model")
    p.add_argument("model")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"dsfactor: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FrameError, FactorizationError, StatsError, RemovalError) as exc:
        print(f"dsfactor: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
