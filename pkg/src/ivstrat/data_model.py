"""Observed and potential-outcome data representations.

Two views of an experiment live here. ObservedSample is what an analyst
actually sees: per-unit assignment z, uptake d, outcome y, and a stratum
label. ScienceTable is the full potential-outcome table (y0, y1, d0, d1,
stratum) used by the analytic oracles and the data-generating process;
revealing it under an assignment vector produces an ObservedSample.

Strata are always caller-provided labels. Internally they are re-coded to
dense integers 0..G-1 in order of first appearance, with the original labels
retained for reporting. All containers are immutable after construction and
safe to share across threads.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np


# ---------------------------------------------------------------------------
# Error vocabulary, shared by every module to avoid import cycles.


class EstimationError(Exception):
    """Base class for all data and estimation failures in this package."""


class NonBinary(EstimationError):
    pass


class NonFinite(EstimationError):
    pass


class EmptyArm(EstimationError):
    def __init__(self, stratum: Hashable, z: int):
        self.stratum = stratum
        self.z = z
        super().__init__(f"stratum {stratum!r} has no units with z={z}")


class LengthMismatch(EstimationError):
    pass


class UnknownStratum(EstimationError):
    pass


class DefierPresent(EstimationError):
    pass


class ExclusionViolation(EstimationError):
    pass


class ZeroCompliance(EstimationError):
    pass


class AllStrataDropped(EstimationError):
    pass


class TooFewUnits(EstimationError):
    pass


class TooSmall(EstimationError):
    pass


class DegenerateVariance(EstimationError):
    pass


class RankDeficient(EstimationError):
    pass


class NoCompliers(EstimationError):
    pass


class NoCompliersInArm(EstimationError):
    def __init__(self, z: int):
        self.z = z
        super().__init__(f"no compliers assigned to z={z}")


class TwoSidedInput(EstimationError):
    pass


class NonIntegralArm(EstimationError):
    pass


class Infeasible(EstimationError):
    pass


class InfeasibleCompliance(EstimationError):
    pass


class MalformedRow(EstimationError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class MissingColumn(EstimationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing column {name!r}")


class EmptyFile(EstimationError):
    pass


class EmptyBin(EstimationError):
    pass


# Compliance type codes. With binary monotone uptake, d0 + d1 identifies the
# type, so the codes are chosen to equal that sum.
NEVER_TAKER = 0
COMPLIER = 1
ALWAYS_TAKER = 2

COMPLIANCE_NAMES = {NEVER_TAKER: "never-taker", COMPLIER: "complier", ALWAYS_TAKER: "always-taker"}


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _dense_codes(strata: Sequence[Hashable]) -> tuple[np.ndarray, tuple[Hashable, ...]]:
    """Map arbitrary labels to 0..G-1 in order of first appearance."""
    labels: list[Hashable] = []
    index: dict[Hashable, int] = {}
    codes = np.empty(len(strata), dtype=np.intp)
    for i, s in enumerate(strata):
        code = index.get(s)
        if code is None:
            code = len(labels)
            index[s] = code
            labels.append(s)
        codes[i] = code
    return codes, tuple(labels)


@dataclass(frozen=True)
class ObservedUnit:
    """A single observed record: assignment, uptake, outcome, stratum label."""

    z: int
    d: int
    y: float
    stratum: Hashable = 0


@dataclass(frozen=True, eq=False)
class ObservedSample:
    """Observed data held column-wise, with strata as dense integer codes.

    Construct through from_arrays or from_units; both re-code the stratum
    labels densely. Invariants (binary z/d, finite y, nonempty arms in each
    stratum, N >= 4) are enforced by validate, not by construction.
    Identity semantics (eq=False) let stratum_moments memoize per sample.
    """

    z: np.ndarray
    d: np.ndarray
    y: np.ndarray
    strata: np.ndarray
    stratum_labels: tuple[Hashable, ...]

    @classmethod
    def from_arrays(cls, z, d, y, strata=None) -> "ObservedSample":
        z = np.asarray(z, dtype=np.int8)
        d = np.asarray(d, dtype=np.int8)
        y = np.asarray(y, dtype=np.float64)
        if strata is None:
            strata = np.zeros(len(z), dtype=np.intp)
        if not (len(z) == len(d) == len(y) == len(strata)):
            raise LengthMismatch("z, d, y, strata must have equal length")
        codes, labels = _dense_codes(list(strata))
        return cls(_frozen(z), _frozen(d), _frozen(y), _frozen(codes), labels)

    @classmethod
    def from_units(cls, units: Iterable[ObservedUnit]) -> "ObservedSample":
        units = list(units)
        return cls.from_arrays(
            [u.z for u in units],
            [u.d for u in units],
            [u.y for u in units],
            [u.stratum for u in units],
        )

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def n1(self) -> int:
        return int(np.sum(self.z == 1))

    @property
    def n0(self) -> int:
        return int(np.sum(self.z == 0))

    @property
    def num_strata(self) -> int:
        return len(self.stratum_labels)

    @property
    def units(self) -> tuple[ObservedUnit, ...]:
        return tuple(
            ObservedUnit(int(z), int(d), float(y), self.stratum_labels[g])
            for z, d, y, g in zip(self.z, self.d, self.y, self.strata)
        )

    @property
    def strata_index(self) -> dict[Hashable, np.ndarray]:
        return {
            label: np.flatnonzero(self.strata == code)
            for code, label in enumerate(self.stratum_labels)
        }


def validate(sample: ObservedSample) -> ObservedSample:
    """Check sample invariants and return the sample with dense stratum codes.

    Raises NonBinary if z or d leave {0,1}, NonFinite for non-finite y,
    TooFewUnits for N < 4, and EmptyArm(g, z) if any stratum lacks units on
    either arm (which also covers an empty arm overall).
    """
    sample = ObservedSample.from_arrays(sample.z, sample.d, sample.y, [
        sample.stratum_labels[g] for g in sample.strata
    ])
    if not np.isin(sample.z, (0, 1)).all():
        raise NonBinary("z must be 0 or 1")
    if not np.isin(sample.d, (0, 1)).all():
        raise NonBinary("d must be 0 or 1")
    if not np.isfinite(sample.y).all():
        raise NonFinite("y must be finite")
    if sample.n < 4:
        raise TooFewUnits(f"need at least 4 units, got {sample.n}")
    counts1 = np.bincount(sample.strata[sample.z == 1], minlength=sample.num_strata)
    counts0 = np.bincount(sample.strata[sample.z == 0], minlength=sample.num_strata)
    for code, label in enumerate(sample.stratum_labels):
        if counts1[code] == 0:
            raise EmptyArm(label, 1)
        if counts0[code] == 0:
            raise EmptyArm(label, 0)
    return sample


@dataclass(frozen=True)
class ScienceTable:
    """The complete potential-outcome table for a finite population.

    Construction rejects defiers (d1 < d0) and any unit violating the
    exclusion restriction (d0 == d1 but y1 != y0). Compliance type is the
    derived quantity d0 + d1, see NEVER_TAKER / COMPLIER / ALWAYS_TAKER.
    """

    y0: np.ndarray
    y1: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    strata: np.ndarray
    stratum_labels: tuple[Hashable, ...]

    @classmethod
    def from_arrays(cls, y0, y1, d0, d1, strata=None) -> "ScienceTable":
        y0 = np.asarray(y0, dtype=np.float64)
        y1 = np.asarray(y1, dtype=np.float64)
        d0 = np.asarray(d0, dtype=np.int8)
        d1 = np.asarray(d1, dtype=np.int8)
        if strata is None:
            strata = np.zeros(len(y0), dtype=np.intp)
        if not (len(y0) == len(y1) == len(d0) == len(d1) == len(strata)):
            raise LengthMismatch("y0, y1, d0, d1, strata must have equal length")
        if not (np.isin(d0, (0, 1)).all() and np.isin(d1, (0, 1)).all()):
            raise NonBinary("d0 and d1 must be 0 or 1")
        if not (np.isfinite(y0).all() and np.isfinite(y1).all()):
            raise NonFinite("potential outcomes must be finite")
        if np.any(d1 < d0):
            raise DefierPresent("monotonicity requires d1 >= d0 for every unit")
        noncomplier = d0 == d1
        if np.any(y0[noncomplier] != y1[noncomplier]):
            raise ExclusionViolation("units with d0 == d1 must have y1 == y0")
        codes, labels = _dense_codes(list(strata))
        return cls(_frozen(y0), _frozen(y1), _frozen(d0), _frozen(d1), _frozen(codes), labels)

    @property
    def n(self) -> int:
        return len(self.y0)

    @property
    def num_strata(self) -> int:
        return len(self.stratum_labels)

    @property
    def compliance_type(self) -> np.ndarray:
        return (self.d0 + self.d1).astype(np.int8)

    @property
    def is_complier(self) -> np.ndarray:
        return (self.d1 == 1) & (self.d0 == 0)

    @property
    def pi_c(self) -> float:
        return float(np.mean(self.is_complier))

    @property
    def pi_a(self) -> float:
        return float(np.mean(self.d0 == 1))

    @property
    def pi_n(self) -> float:
        return float(np.mean(self.d1 == 0))

    @property
    def one_sided(self) -> bool:
        return not np.any(self.d0 == 1)

    @property
    def itt(self) -> float:
        return float(np.mean(self.y1 - self.y0))

    @property
    def cace(self) -> float:
        mask = self.is_complier
        if not mask.any():
            raise NoCompliers("table has no compliers, CACE undefined")
        return float(np.mean(self.y1[mask] - self.y0[mask]))


def science_to_observed(table: ScienceTable, assignment) -> ObservedSample:
    """Reveal observed data under a binary assignment vector.

    y = z*y1 + (1-z)*y0 and d = z*d1 + (1-z)*d0, with strata carried over.
    The result is not validated; run validate before estimation.
    """
    z = np.asarray(assignment, dtype=np.int8)
    if len(z) != table.n:
        raise LengthMismatch(f"assignment has length {len(z)}, table has {table.n}")
    if not np.isin(z, (0, 1)).all():
        raise NonBinary("assignment must be 0 or 1")
    treated = z == 1
    y = np.where(treated, table.y1, table.y0)
    d = np.where(treated, table.d1, table.d0).astype(np.int8)
    return ObservedSample(
        _frozen(z), _frozen(d), _frozen(y.astype(np.float64)),
        table.strata, table.stratum_labels,
    )


@dataclass(frozen=True)
class StratumSummary:
    """Per-stratum counts, arm means, f-hat, ITT-hat, and sample (co)variances.

    The (co)variance fields use the n_z - 1 denominator and are None whenever
    the relevant arm has fewer than 2 units.
    """

    g: Hashable
    n_g: int
    n_g1: int
    n_g0: int
    ybar1: float
    ybar0: float
    dbar1: float
    dbar0: float
    itt_hat: float
    f_hat: float
    s2_y1: float | None
    s2_y0: float | None
    s2_d1: float | None
    s2_d0: float | None
    s_yd1: float | None
    s_yd0: float | None


@dataclass(frozen=True)
class StratumMoments:
    """Vectorized per-stratum moments, indexed by dense stratum code.

    Undefined entries ((co)variances on arms with fewer than 2 units) are nan
    rather than None so downstream code can stay in array form.
    """

    n_g: np.ndarray
    n_g1: np.ndarray
    n_g0: np.ndarray
    ybar1: np.ndarray
    ybar0: np.ndarray
    dbar1: np.ndarray
    dbar0: np.ndarray
    s2_y1: np.ndarray
    s2_y0: np.ndarray
    s2_d1: np.ndarray
    s2_d0: np.ndarray
    s_yd1: np.ndarray
    s_yd0: np.ndarray

    @property
    def f_hat(self) -> np.ndarray:
        return self.dbar1 - self.dbar0

    @property
    def itt_hat(self) -> np.ndarray:
        return self.ybar1 - self.ybar0


@functools.lru_cache(maxsize=128)
def stratum_moments(sample: ObservedSample) -> StratumMoments:
    """Compute all per-stratum, per-arm moments in one vectorized pass.

    Two-pass (mean, then centered products) so the s2 and s_yd terms do not
    suffer the cancellation of a sums-of-squares shortcut. Memoized on sample
    identity because several estimators and their standard errors share it.
    """
    g = sample.num_strata
    cell = sample.strata * 2 + sample.z  # stratum-by-arm cell index
    ncells = 2 * g
    counts = np.bincount(cell, minlength=ncells).astype(np.float64)
    sum_y = np.bincount(cell, weights=sample.y, minlength=ncells)
    sum_d = np.bincount(cell, weights=sample.d.astype(np.float64), minlength=ncells)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_y = sum_y / counts
        mean_d = sum_d / counts
    ry = sample.y - mean_y[cell]
    rd = sample.d - mean_d[cell]
    ss_y = np.bincount(cell, weights=ry * ry, minlength=ncells)
    ss_d = np.bincount(cell, weights=rd * rd, minlength=ncells)
    ss_yd = np.bincount(cell, weights=ry * rd, minlength=ncells)
    dof = counts - 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        s2_y = np.where(dof >= 1, ss_y / dof, np.nan)
        s2_d = np.where(dof >= 1, ss_d / dof, np.nan)
        s_yd = np.where(dof >= 1, ss_yd / dof, np.nan)
    ctrl, trt = slice(0, ncells, 2), slice(1, ncells, 2)
    return StratumMoments(
        n_g=(counts[ctrl] + counts[trt]).astype(np.intp),
        n_g1=counts[trt].astype(np.intp),
        n_g0=counts[ctrl].astype(np.intp),
        ybar1=mean_y[trt],
        ybar0=mean_y[ctrl],
        dbar1=mean_d[trt],
        dbar0=mean_d[ctrl],
        s2_y1=s2_y[trt],
        s2_y0=s2_y[ctrl],
        s2_d1=s2_d[trt],
        s2_d0=s2_d[ctrl],
        s_yd1=s_yd[trt],
        s_yd0=s_yd[ctrl],
    )


def _maybe(x: float) -> float | None:
    return None if np.isnan(x) else float(x)


def summarize_stratum(sample: ObservedSample, g: Hashable) -> StratumSummary:
    """Build the StratumSummary for stratum label g.

    Raises UnknownStratum if g is not a stratum label of the sample.
    """
    try:
        code = sample.stratum_labels.index(g)
    except ValueError:
        raise UnknownStratum(f"no stratum labeled {g!r}") from None
    m = stratum_moments(sample)
    return StratumSummary(
        g=g,
        n_g=int(m.n_g[code]),
        n_g1=int(m.n_g1[code]),
        n_g0=int(m.n_g0[code]),
        ybar1=float(m.ybar1[code]),
        ybar0=float(m.ybar0[code]),
        dbar1=float(m.dbar1[code]),
        dbar0=float(m.dbar0[code]),
        itt_hat=float(m.itt_hat[code]),
        f_hat=float(m.f_hat[code]),
        s2_y1=_maybe(m.s2_y1[code]),
        s2_y0=_maybe(m.s2_y0[code]),
        s2_d1=_maybe(m.s2_d1[code]),
        s2_d0=_maybe(m.s2_d0[code]),
        s_yd1=_maybe(m.s_yd1[code]),
        s_yd0=_maybe(m.s_yd0[code]),
    )


def stratum_summaries(sample: ObservedSample) -> tuple[StratumSummary, ...]:
    """All stratum summaries in dense code order."""
    return tuple(summarize_stratum(sample, g) for g in sample.stratum_labels)


@dataclass(frozen=True)
class EstimateReport:
    """One estimator's result row.

    se_bloom and se_delta are None when the method does not define them or
    the sample is too small to compute them. For TSLS_DUMMY the se_bloom slot
    carries the conventional homoskedastic 2SLS standard error, and for
    ORACLE the Neyman SE of the complier difference in means; each is that
    method's single nominal SE. p_value, when present, is the two-sided
    normal tail of estimate / se_bloom.
    """

    method: str
    estimate: float
    f_hat: float
    n_used: int
    strata_kept: frozenset
    se_bloom: float | None = None
    se_delta: float | None = None
    p_value: float | None = None
