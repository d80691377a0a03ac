import numpy as np
import pytest

from dsfactor.belief import MassFunction
from dsfactor.dataset_io import load_counterexample
from dsfactor.frames import ProductFocalSet, Scope, Variable, product_subsets


@pytest.fixture(scope="session")
def fixture_model():
    return load_counterexample()


@pytest.fixture(scope="session")
def fixture_scope(fixture_model):
    return fixture_model.scope


def pfs(scope, *parts):
    """Build a product set from strings, one per variable: ``pfs(scope, "p", "st", "ab")``."""
    return ProductFocalSet(scope, [set(p) for p in parts])


def random_mass(rng, scope, n_focal=None, explicit=False):
    """Random proper normal mass function over ``scope``.

    With ``explicit=True`` the focal sets are arbitrary subsets of the frame,
    otherwise products.
    """
    from dsfactor.frames import ExplicitSubset

    if explicit:
        size = scope.size
        n_focal = n_focal or int(rng.integers(1, min(6, 2**size - 1) + 1))
        masks = rng.choice(np.arange(1, 2**size), size=n_focal, replace=False)
        focals = [ExplicitSubset(scope, int(m)) for m in masks]
    else:
        choices = product_subsets([v.frame for v in scope])
        n_focal = n_focal or int(rng.integers(1, min(6, len(choices)) + 1))
        idx = rng.choice(len(choices), size=n_focal, replace=False)
        focals = [ProductFocalSet(scope, choices[i]) for i in idx]
    weights = rng.dirichlet(np.ones(len(focals)))
    return MassFunction(scope, dict(zip(focals, weights)))


def small_scope(names="AB", sizes=(2, 2)):
    return Scope(tuple(Variable(n, tuple(f"{n.lower()}{i}" for i in range(k))) for n, k in zip(names, sizes)))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda l: int(l.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
