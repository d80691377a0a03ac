"""Frequency tests for factorizing a belief function from set-valued records.

Records are tallied into a three-way table F[i, j, k]. Indices i and j are
the observed r- and s-parts; a record counts at every z-level k its v-part
contains, so one record can count at several z-levels. The table is
tested against the log-linear model [XY][Z] (the (X, Y) association does
not change across z-levels) fitted by iterative proportional fitting.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .factorization import DimensionPartition
from .frames import ProductFocalSet

DEFAULT_THRESHOLD = 0.1
GATE_LOWER = 6
GATE_UPPER = 25
IPF_MAX_ITER = 1000
IPF_TOL = 1e-8


class StatsError(ValueError):
    pass


class UntestableError(StatsError):
    """Not enough degrees of freedom for a chi-square test."""


class ConvergenceError(StatsError):
    pass


class FittedZeroWarning(UserWarning):
    """A cell with positive count got a fitted value of zero and was dropped."""


@dataclass
class ContingencyTable:
    x_levels: list[ProductFocalSet]
    y_levels: list[ProductFocalSet]
    z_levels: list[ProductFocalSet]
    counts: np.ndarray
    structural_zeros: np.ndarray
    n_records: int
    # (i, j) pairs never observed, treated as structural zeros across all k.
    dropped_pairs: list[tuple[int, int]] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.counts.shape

    @property
    def level_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=(0, 1))


def _matches(entry: dict[str, tuple[str, ...]], x, y, z) -> bool:
    for name, labels in entry.items():
        for level in (x, y, z):
            if name in level.scope:
                if level.part(name) != frozenset(labels):
                    return False
                break
    return True


def build_contingency(
    records: Iterable[ProductFocalSet],
    part: DimensionPartition,
    z_levels: Sequence[ProductFocalSet] | None = None,
    impossible: Iterable[dict[str, Sequence[str]]] = (),
) -> ContingencyTable:
    """Tally records into F[i, j, k] using superset counting on the v block.

    ``z_levels`` defaults to the distinct observed v-parts. ``impossible``
    lists structural zeros as label mappings over any of the variables; a
    variable left out matches every level.
    """
    tally = Counter(records)
    if not tally:
        raise StatsError("empty record set")
    scope = next(iter(tally)).scope
    r_scope, s_scope, v_scope = scope.sub(part.r), scope.sub(part.s), scope.sub(part.v)
    split = [
        (rec.project(r_scope), rec.project(s_scope), rec.project(v_scope), n) for rec, n in tally.items()
    ]

    x_levels = sorted({x for x, _, _, _ in split}, key=ProductFocalSet.sort_key)
    y_levels = sorted({y for _, y, _, _ in split}, key=ProductFocalSet.sort_key)
    if z_levels is None:
        z_levels = sorted({z for _, _, z, _ in split}, key=ProductFocalSet.sort_key)
    z_levels = list(z_levels)
    if not z_levels:
        raise StatsError("no z-levels")
    xi = {x: i for i, x in enumerate(x_levels)}
    yi = {y: j for j, y in enumerate(y_levels)}

    counts = np.zeros((len(x_levels), len(y_levels), len(z_levels)), dtype=np.int64)
    seen = np.zeros((len(x_levels), len(y_levels)), dtype=bool)
    for x, y, z, n in split:
        i, j = xi[x], yi[y]
        seen[i, j] = True
        for k, level in enumerate(z_levels):
            if level.issubset(z):
                counts[i, j, k] += n

    structural = np.zeros(counts.shape, dtype=bool)
    entries = [{n: tuple(v) for n, v in e.items()} for e in impossible]
    for entry in entries:
        for i, x in enumerate(x_levels):
            for j, y in enumerate(y_levels):
                for k, z in enumerate(z_levels):
                    if _matches(entry, x, y, z):
                        structural[i, j, k] = True
    if np.any(counts[structural]):
        raise StatsError("records fall into cells declared impossible")
    dropped = [(int(i), int(j)) for i, j in zip(*np.nonzero(~seen)) if not structural[i, j].all()]
    for i, j in dropped:
        structural[i, j, :] = True
    return ContingencyTable(
        x_levels, y_levels, z_levels, counts, structural, sum(tally.values()), dropped
    )


@dataclass(frozen=True)
class GateLevel:
    level: ProductFocalSet
    n: int
    lower: int
    upper: int

    @property
    def verdict(self) -> str:
        if self.n < self.lower:
            return "too_small"
        if self.n > self.upper:
            return "too_large"
        return "ok"


@dataclass(frozen=True)
class GateReport:
    n_xy: int
    levels: tuple[GateLevel, ...]

    @property
    def ok(self) -> bool:
        return all(lv.verdict == "ok" for lv in self.levels)

    @property
    def recode_recommended(self) -> bool:
        return not self.ok


def gate_bounds(n_xy: int) -> tuple[int, int]:
    return GATE_LOWER * n_xy, GATE_UPPER * n_xy


def sample_size_gate(table: ContingencyTable) -> GateReport:
    """Check each z-level's record count against the closed window [6·N_xy, 25·N_xy]."""
    nx, ny, _ = table.shape
    n_xy = nx * ny - int(table.structural_zeros.all(axis=2).sum())
    lo, hi = gate_bounds(n_xy)
    sizes = table.level_sizes
    return GateReport(
        n_xy, tuple(GateLevel(z, int(n), lo, hi) for z, n in zip(table.z_levels, sizes))
    )


def degrees_of_freedom(n_x: int, n_y: int, k: int, n_structural_zeros: int = 0) -> int:
    """Cells minus the intercept, main effects and the XY interaction, minus one per structural zero."""
    df = (
        n_x * n_y * k
        - 1
        - (n_x - 1)
        - (n_y - 1)
        - (k - 1)
        - (n_x - 1) * (n_y - 1)
        - n_structural_zeros
    )
    if df <= 0:
        raise UntestableError(f"nonpositive degrees of freedom ({df})")
    return df


def chi_square_pvalue(chi2: float, df: int) -> float:
    """Upper-tail chi-square probability, Q(df/2, chi2/2)."""
    if not np.isfinite(chi2) or chi2 < 0:
        raise ValueError(f"chi2 must be finite and nonnegative, got {chi2}")
    if int(df) != df or df < 1:
        raise ValueError(f"df must be a positive integer, got {df}")
    return float(special.gammaincc(df / 2.0, chi2 / 2.0))


@dataclass
class LogLinearFit:
    fitted: np.ndarray
    f: float
    delta_x: np.ndarray
    delta_y: np.ndarray
    delta_z: np.ndarray
    delta_xy: np.ndarray
    chi2: float
    df: int
    p_value: float
    residuals: np.ndarray
    converged: bool
    iterations: int
    excluded_cells: list[tuple[int, int, int]] = field(default_factory=list)

    def accepts(self, threshold: float = DEFAULT_THRESHOLD) -> bool:
        return self.p_value >= threshold


def _ipf(observed: np.ndarray, admissible: np.ndarray, max_iter: int, tol: float):
    obs_xy = observed.sum(axis=2)
    obs_z = observed.sum(axis=(0, 1))
    fitted = admissible.astype(float)
    for it in range(1, max_iter + 1):
        cur = fitted.sum(axis=2)
        fitted *= np.divide(obs_xy, cur, out=np.zeros_like(cur), where=cur > 0)[:, :, None]
        cur = fitted.sum(axis=(0, 1))
        fitted *= np.divide(obs_z, cur, out=np.zeros_like(cur), where=cur > 0)[None, None, :]
        err_xy = np.abs(fitted.sum(axis=2) - obs_xy) / np.maximum(obs_xy, 1.0)
        err_z = np.abs(fitted.sum(axis=(0, 1)) - obs_z) / np.maximum(obs_z, 1.0)
        if max(err_xy.max(), err_z.max()) <= tol:
            return fitted, it, True
    return fitted, max_iter, False


def _effect_codes(n: int) -> np.ndarray:
    """Sum-to-zero coding: row ``i`` codes level ``i`` with ``n - 1`` columns."""
    codes = np.zeros((n, n - 1))
    codes[: n - 1] = np.eye(n - 1)
    codes[n - 1] = -1.0
    return codes


def _contrasts(log_fitted: np.ndarray, usable: np.ndarray):
    nx, ny, k = log_fitted.shape
    cx, cy, cz = _effect_codes(nx), _effect_codes(ny), _effect_codes(k)
    cxy = np.einsum("ia,jb->ijab", cx, cy).reshape(nx, ny, -1)
    rows, target = [], []
    for i, j, l in zip(*np.nonzero(usable)):
        rows.append(np.concatenate(([1.0], cx[i], cy[j], cz[l], cxy[i, j])))
        target.append(log_fitted[i, j, l])
    coef = np.linalg.lstsq(np.array(rows), np.array(target), rcond=None)[0]
    sizes = np.cumsum([1, nx - 1, ny - 1, k - 1])
    f, bx, by, bz, bxy = np.split(coef, sizes)
    return float(f[0]), cx @ bx, cy @ by, cz @ bz, cxy @ bxy


def _residuals(observed: np.ndarray, fitted: np.ndarray, usable: np.ndarray) -> np.ndarray:
    res = np.full(observed.shape, np.nan)
    res[usable] = (observed[usable] - fitted[usable]) / np.sqrt(fitted[usable])
    return res


def fit_loglinear(
    table: ContingencyTable, max_iter: int = IPF_MAX_ITER, tol: float = IPF_TOL
) -> LogLinearFit:
    """Maximum-likelihood fit of ln E F[i,j,k] = f + dx_i + dy_j + dz_k + dxy_ij."""
    observed = table.counts.astype(float)
    if not np.any(observed > 0):
        raise StatsError("table has no positive counts")
    admissible = ~table.structural_zeros
    fitted, iterations, converged = _ipf(observed, admissible, max_iter, tol)
    if not converged:
        raise ConvergenceError(f"IPF did not converge within {max_iter} iterations")

    lost = admissible & (fitted <= 0) & (observed > 0)
    excluded = [tuple(int(a) for a in idx) for idx in zip(*np.nonzero(lost))]
    if excluded:
        warnings.warn(
            f"{len(excluded)} cell(s) with positive counts have zero fitted value; "
            "excluded from chi-square with one degree of freedom each",
            FittedZeroWarning,
            stacklevel=2,
        )
    nx, ny, k = table.shape
    df = degrees_of_freedom(nx, ny, k, int(table.structural_zeros.sum()) + len(excluded))

    usable = admissible & (fitted > 0)
    residuals = _residuals(observed, fitted, usable)
    chi2 = float(np.sum(residuals[usable] ** 2))
    with np.errstate(divide="ignore"):
        logs = np.log(fitted)
    f, dx, dy, dz, dxy = _contrasts(logs, usable)
    return LogLinearFit(
        fitted=fitted,
        f=f,
        delta_x=dx,
        delta_y=dy,
        delta_z=dz,
        delta_xy=dxy,
        chi2=chi2,
        df=df,
        p_value=chi_square_pvalue(chi2, df),
        residuals=residuals,
        converged=converged,
        iterations=iterations,
        excluded_cells=excluded,
    )


@dataclass
class ResidualTable:
    values: np.ndarray
    undefined: list[tuple[int, int, int]]

    def argmax(self) -> tuple[int, int, int]:
        return tuple(int(a) for a in np.unravel_index(np.nanargmax(np.abs(self.values)), self.values.shape))


def standardized_residuals(table: ContingencyTable, fit: LogLinearFit) -> ResidualTable:
    """(F - F̂)/sqrt(F̂) per cell; cells with F̂ = 0 are listed as undefined."""
    if fit.fitted.shape != table.counts.shape:
        raise StatsError("fit does not belong to this table")
    usable = ~table.structural_zeros & (fit.fitted > 0)
    values = _residuals(table.counts.astype(float), fit.fitted, usable)
    undefined = [tuple(int(a) for a in idx) for idx in zip(*np.nonzero(~usable))]
    return ResidualTable(values, undefined)


@dataclass
class RecodingSuggestion:
    """Heuristic regrouping of z-levels; not a statistical procedure."""

    groups: list[list[int]]
    merges: list[tuple[list[int], list[int], float]]
    residual_ranking: list[int]
    empty_levels: list[int]
    heuristic: bool = True


def suggest_recoding(
    table: ContingencyTable,
    fit: LogLinearFit,
    max_groups: int | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> RecodingSuggestion:
    """Greedily merge z-levels whose (X, Y) distributions are closest in L1.

    Merging continues while there are more than ``max_groups`` groups or
    some group is below the lower sample-size bound. Ties are broken by the
    residual ranking (largest max |residual| first), then by level index.
    """
    nx, ny, k = table.shape
    gate = sample_size_gate(table)
    max_res = np.array(
        [np.nanmax(np.abs(fit.residuals[:, :, l]), initial=0.0) for l in range(k)]
    )
    ranking = sorted(range(k), key=lambda l: (-max_res[l], l))
    rank_pos = {l: p for p, l in enumerate(ranking)}
    sizes = table.level_sizes
    empty = [l for l in range(k) if sizes[l] == 0]

    if fit.p_value >= threshold and gate.ok and (max_groups is None or k <= max_groups):
        return RecodingSuggestion([[l] for l in range(k)], [], ranking, empty)

    lower, _ = gate_bounds(gate.n_xy)
    counts = table.counts.astype(float)
    groups = [[l] for l in ranking if l not in empty]

    def pooled(g):
        return counts[:, :, g].sum(axis=2)

    def needs_merge():
        if len(groups) <= 1:
            return False
        if max_groups is not None and len(groups) > max_groups:
            return True
        return any(pooled(g).sum() < lower for g in groups)

    merges = []
    while needs_merge():
        best = None
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                pa, pb = pooled(groups[a]), pooled(groups[b])
                dist = float(np.abs(pa / pa.sum() - pb / pb.sum()).sum())
                ga, gb = groups[a], groups[b]
                key = (
                    round(dist, 12),
                    sorted((min(rank_pos[l] for l in ga), min(rank_pos[l] for l in gb))),
                    sorted((min(ga), min(gb))),
                )
                if best is None or key < best[0]:
                    best = (key, a, b, dist)
        _, a, b, dist = best
        merges.append((sorted(groups[a]), sorted(groups[b]), dist))
        groups[a] = sorted(groups[a] + groups[b])
        del groups[b]

    if empty:
        if groups:
            smallest = min(range(len(groups)), key=lambda g: (pooled(groups[g]).sum(), min(groups[g])))
            groups[smallest] = sorted(groups[smallest] + empty)
        else:
            groups = [list(empty)]
    groups = sorted((sorted(g) for g in groups), key=min)
    return RecodingSuggestion(groups, merges, ranking, empty)


@dataclass
class LevelTest:
    level: ProductFocalSet
    n: int
    testable: bool
    chi2: float | None = None
    df: int | None = None
    p_value: float | None = None
    reason: str | None = None

    def accepts(self, threshold: float = DEFAULT_THRESHOLD) -> bool:
        return self.testable and self.p_value >= threshold


@dataclass
class StepwiseResult:
    levels: list[LevelTest]
    threshold: float

    @property
    def testable_levels(self) -> list[LevelTest]:
        return [lv for lv in self.levels if lv.testable]

    @property
    def verdict(self) -> bool:
        """True when every testable level accepts independence."""
        return all(lv.accepts(self.threshold) for lv in self.testable_levels)


def _two_way_test(counts: np.ndarray, structural: np.ndarray) -> tuple[float, int] | str:
    rows = counts.sum(axis=1) > 0
    cols = counts.sum(axis=0) > 0
    if rows.sum() < 2 or cols.sum() < 2:
        return "fewer than two nonzero rows or columns"
    obs = counts[np.ix_(rows, cols)].astype(float)
    admissible = ~structural[np.ix_(rows, cols)]
    df = (obs.shape[0] - 1) * (obs.shape[1] - 1) - int((~admissible).sum())
    if df <= 0:
        return f"nonpositive degrees of freedom ({df})"
    fitted = admissible.astype(float)
    r_obs, c_obs = obs.sum(axis=1), obs.sum(axis=0)
    for _ in range(IPF_MAX_ITER):
        cur = fitted.sum(axis=1)
        fitted *= np.divide(r_obs, cur, out=np.zeros_like(cur), where=cur > 0)[:, None]
        cur = fitted.sum(axis=0)
        fitted *= np.divide(c_obs, cur, out=np.zeros_like(cur), where=cur > 0)[None, :]
        if np.max(np.abs(fitted.sum(axis=1) - r_obs) / r_obs) <= IPF_TOL:
            break
    else:
        raise ConvergenceError("quasi-independence fit did not converge")
    usable = admissible & (fitted > 0)
    chi2 = float((((obs - fitted) ** 2)[usable] / fitted[usable]).sum())
    return chi2, df


def stepwise_conditional_test(
    records: Iterable[ProductFocalSet],
    part: DimensionPartition,
    z_levels: Sequence[ProductFocalSet] | None = None,
    impossible: Iterable[dict[str, Sequence[str]]] = (),
    threshold: float = DEFAULT_THRESHOLD,
) -> StepwiseResult:
    """Chi-square test of (X, Y) independence within each z-level."""
    table = build_contingency(records, part, z_levels, impossible)
    results = []
    for k, level in enumerate(table.z_levels):
        counts = table.counts[:, :, k]
        outcome = _two_way_test(counts, table.structural_zeros[:, :, k])
        n = int(counts.sum())
        if isinstance(outcome, str):
            results.append(LevelTest(level, n, testable=False, reason=outcome))
        else:
            chi2, df = outcome
            results.append(LevelTest(level, n, True, chi2, df, chi_square_pvalue(chi2, df)))
    return StepwiseResult(results, threshold)
