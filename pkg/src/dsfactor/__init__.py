"""Dempster-Shafer belief functions and factorization tests from set-valued data."""

from .belief import (
    CommonalityTable,
    MassFunction,
    RemovalError,
    ValuationClass,
    bel_of,
    classify,
    combine,
    combine_q,
    condition,
    extend,
    marginalize,
    mass_from_q,
    pl_of,
    q_of,
    q_table,
    remove,
    vacuous,
    verify_eq4,
)
from .frames import ExplicitSubset, ProductFocalSet, Scope, Variable

__version__ = "0.1.0"
