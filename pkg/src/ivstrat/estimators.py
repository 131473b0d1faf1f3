"""Point estimators of the complier average causal effect.

All estimators consume a validated ObservedSample and return an
EstimateReport. The stratified family shares one computational core, the
weighted-ITT ratio sum(N_g itt_g) / sum(N_g f_g) over a kept set of strata;
the estimators differ only in which strata they keep:

* iv_within     keeps strata with f_g != 0 (zero-compliance strata carry no
                information about the effect and are dropped),
* iv_across     keeps everything (ratio of post-stratified averages),
* iv_dss        keeps strata with estimated compliance >= a threshold,
* iv_dsf        keeps strata whose first-stage F statistic passes a cutoff,
* iv_pwiv       precision-weights per-stratum IV estimates instead.

oracle_complier_dim benchmarks against the infeasible difference in means
among true compliers, and tsls_weighted / tsls_dummies are the two-stage
least squares comparators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable

import numpy as np

from .data_model import (
    AllStrataDropped,
    DegenerateVariance,
    EmptyArm,
    EstimateReport,
    LengthMismatch,
    NoCompliersInArm,
    NonBinary,
    ObservedSample,
    RankDeficient,
    ScienceTable,
    StratumMoments,
    StratumSummary,
    TooFewUnits,
    TooSmall,
    ZeroCompliance,
    stratum_moments,
)
from .variance import (
    arm_moments,
    se_bloom_ps,
    se_bloom_unstrat,
    se_delta_ps,
    se_delta_unstrat,
    se_pwiv,
)

__all__ = [
    "EstimatorConfig",
    "METHODS",
    "itt_hat",
    "f_hat",
    "iv_unstratified",
    "iv_within",
    "iv_across",
    "iv_dss",
    "first_stage_f",
    "iv_dsf",
    "iv_pwiv",
    "oracle_complier_dim",
    "tsls_weighted",
    "tsls_dummies",
    "estimate",
]


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning knobs for the stratum-dropping estimators."""

    dss_threshold: float = 0.02
    dsf_f_min: float = 10.0

    def __post_init__(self) -> None:
        if not (0.0 < self.dss_threshold < 1.0) or not math.isfinite(self.dss_threshold):
            raise ValueError("dss_threshold must lie in (0, 1)")
        if not (self.dsf_f_min > 0.0) or not math.isfinite(self.dsf_f_min):
            raise ValueError("dsf_f_min must be positive and finite")


_DEFAULT_CONFIG = EstimatorConfig()


def itt_hat(sample: ObservedSample) -> float:
    """Intent-to-treat estimate: difference of outcome means by arm."""
    m = arm_moments(sample)
    return float(m["ybar1"] - m["ybar0"])


def f_hat(sample: ObservedSample) -> float:
    """Estimated compliance: difference of uptake means by arm."""
    m = arm_moments(sample)
    return float(m["dbar1"] - m["dbar0"])


def _all_labels(sample: ObservedSample) -> frozenset:
    return frozenset(sample.stratum_labels)


def iv_unstratified(sample: ObservedSample) -> EstimateReport:
    """Standard IV ratio itt_hat / f_hat, ignoring strata."""
    m = arm_moments(sample)
    f = float(m["dbar1"] - m["dbar0"])
    if f == 0.0:
        raise ZeroCompliance("f_hat is zero; the IV ratio is undefined")
    est = float(m["ybar1"] - m["ybar0"]) / f
    return EstimateReport(
        method="UNSTRAT",
        estimate=est,
        f_hat=f,
        n_used=sample.n,
        strata_kept=_all_labels(sample),
        se_bloom=_try_se(se_bloom_unstrat, sample),
        se_delta=_try_se(se_delta_unstrat, sample),
    )


def _try_se(fn, *args) -> float | None:
    try:
        return fn(*args)
    except (TooFewUnits, DegenerateVariance):
        return None


def _weighted_itt(
    sample: ObservedSample, m: StratumMoments, kept: np.ndarray, method: str
) -> EstimateReport:
    """Weighted-ITT ratio over the kept strata, with renormalized SEs.

    Evaluates sum(w_g itt_g) / sum(w_g f_g) with w_g = N_g / N_kept, which
    equals the compliance-weighted average of per-stratum IV estimates but
    stays finite when some kept f_g are tiny.
    """
    n_kept = float(m.n_g[kept].sum())
    w = m.n_g[kept] / n_kept
    f_ps = float(np.sum(w * m.f_hat[kept]))
    if f_ps == 0.0:
        raise ZeroCompliance("kept strata have zero combined compliance")
    est = float(np.sum(w * m.itt_hat[kept])) / f_ps
    kept_labels = frozenset(sample.stratum_labels[g] for g in kept)
    return EstimateReport(
        method=method,
        estimate=est,
        f_hat=f_ps,
        n_used=int(m.n_g[kept].sum()),
        strata_kept=kept_labels,
        se_bloom=_try_se(se_bloom_ps, sample, kept_labels),
        se_delta=_try_se(se_delta_ps, sample, kept_labels, est),
    )


def iv_within(sample: ObservedSample) -> EstimateReport:
    """Compliance-weighted average of per-stratum IV estimates.

    Strata with f_g = 0 are dropped; negative f_g strata are retained with
    their negative weight so the ratio form stays algebraically equivalent.
    """
    m = stratum_moments(sample)
    kept = np.flatnonzero(m.f_hat != 0.0)
    if kept.size == 0:
        raise ZeroCompliance("every stratum has zero estimated compliance")
    return _weighted_itt(sample, m, kept, "IV_W")


def iv_across(sample: ObservedSample) -> EstimateReport:
    """Ratio of post-stratified averages; never drops strata."""
    m = stratum_moments(sample)
    return _weighted_itt(sample, m, np.arange(sample.num_strata), "IV_A")


def iv_dss(sample: ObservedSample, config: EstimatorConfig = _DEFAULT_CONFIG) -> EstimateReport:
    """Drop-small-strata: keep strata with f_g >= dss_threshold.

    The threshold comparison also removes negative-f_g strata.
    """
    m = stratum_moments(sample)
    kept = np.flatnonzero(m.f_hat >= config.dss_threshold)
    if kept.size == 0:
        raise AllStrataDropped(
            f"no stratum has estimated compliance >= {config.dss_threshold}"
        )
    return _weighted_itt(sample, m, kept, "DSS")


def first_stage_f(summary: StratumSummary) -> float:
    """Homoskedastic one-regressor OLS F for d ~ z within one stratum.

    F = (N_g - 2) ESS / RSS with ESS = (N_g1 N_g0 / N_g) f_g^2 and RSS the
    within-arm residual sum of squares (a one-unit arm contributes 0).
    Returns 0.0 when f_g = 0 and +inf when the fit is perfect (RSS = 0).
    """
    if summary.n_g < 3:
        raise TooSmall(f"stratum {summary.g!r} has {summary.n_g} units; F needs at least 3")
    if summary.n_g1 == 0:
        raise EmptyArm(summary.g, 1)
    if summary.n_g0 == 0:
        raise EmptyArm(summary.g, 0)
    f = summary.f_hat
    if f == 0.0:
        return 0.0
    ess = summary.n_g1 * summary.n_g0 / summary.n_g * f * f
    rss = 0.0
    if summary.n_g1 >= 2:
        assert summary.s2_d1 is not None
        rss += (summary.n_g1 - 1) * summary.s2_d1
    if summary.n_g0 >= 2:
        assert summary.s2_d0 is not None
        rss += (summary.n_g0 - 1) * summary.s2_d0
    if rss == 0.0:
        return math.inf
    return (summary.n_g - 2) * ess / rss


def _first_stage_f_all(m: StratumMoments) -> np.ndarray:
    """Vector form of first_stage_f; nan where a stratum has N_g < 3."""
    f = m.f_hat
    with np.errstate(invalid="ignore", divide="ignore"):
        ess = m.n_g1 * m.n_g0 / m.n_g * f * f
        rss = np.where(m.n_g1 >= 2, (m.n_g1 - 1.0) * m.s2_d1, 0.0)
        rss = rss + np.where(m.n_g0 >= 2, (m.n_g0 - 1.0) * m.s2_d0, 0.0)
        stat = np.where(
            f == 0.0, 0.0, np.where(rss == 0.0, np.inf, (m.n_g - 2.0) * ess / rss)
        )
    return np.where(m.n_g < 3, np.nan, stat)


def iv_dsf(sample: ObservedSample, config: EstimatorConfig = _DEFAULT_CONFIG) -> EstimateReport:
    """Drop-small-F: keep strata whose first-stage F >= dsf_f_min.

    Strata too small for the F statistic (N_g < 3) are dropped along with
    the failing ones.
    """
    m = stratum_moments(sample)
    stat = _first_stage_f_all(m)
    with np.errstate(invalid="ignore"):
        kept = np.flatnonzero(stat >= config.dsf_f_min)
    if kept.size == 0:
        raise AllStrataDropped(f"no stratum has first-stage F >= {config.dsf_f_min}")
    return _weighted_itt(sample, m, kept, "DSF")


def iv_pwiv(sample: ObservedSample) -> EstimateReport:
    """Precision-weighted IV: average stratum IV estimates with weights
    f_g^2 / var(itt_g), the reciprocal per-stratum Bloom variances.

    Strata with f_g = 0 get zero weight (their IV estimate is undefined).
    Every stratum still needs two units per arm so its weight is defined.
    """
    m = stratum_moments(sample)
    se = se_pwiv(sample)  # runs the shared precondition checks
    var_itt_g = m.s2_y1 / m.n_g1 + m.s2_y0 / m.n_g0
    kept = np.flatnonzero(m.f_hat != 0.0)
    weights = m.f_hat[kept] ** 2 / var_itt_g[kept]
    cace_g = m.itt_hat[kept] / m.f_hat[kept]
    est = float(np.sum(weights * cace_g) / np.sum(weights))
    n_kept = float(m.n_g[kept].sum())
    f_ps = float(np.sum((m.n_g[kept] / n_kept) * m.f_hat[kept]))
    return EstimateReport(
        method="PWIV",
        estimate=est,
        f_hat=f_ps,
        n_used=int(m.n_g[kept].sum()),
        strata_kept=frozenset(sample.stratum_labels[g] for g in kept),
        se_bloom=se,
        se_delta=None,
    )


def oracle_complier_dim(table: ScienceTable, assignment) -> EstimateReport:
    """Infeasible benchmark: difference in observed means among compliers.

    Requires the science table, so it is available in simulations only.
    """
    z = np.asarray(assignment)
    if len(z) != table.n:
        raise LengthMismatch(f"assignment has length {len(z)}, table has {table.n}")
    if not np.isin(z, (0, 1)).all():
        raise NonBinary("assignment must be 0 or 1")
    compl = table.is_complier
    treated = compl & (z == 1)
    control = compl & (z == 0)
    n1, n0 = int(treated.sum()), int(control.sum())
    if n1 == 0:
        raise NoCompliersInArm(1)
    if n0 == 0:
        raise NoCompliersInArm(0)
    y1 = table.y1[treated]
    y0 = table.y0[control]
    est = float(np.mean(y1) - np.mean(y0))
    se = None
    if n1 >= 2 and n0 >= 2:
        se = math.sqrt(np.var(y1, ddof=1) / n1 + np.var(y0, ddof=1) / n0)
    kept = frozenset(
        table.stratum_labels[g] for g in np.unique(table.strata[compl])
    )
    return EstimateReport(
        method="ORACLE",
        estimate=est,
        f_hat=1.0,
        n_used=n1 + n0,
        strata_kept=kept,
        se_bloom=se,
        se_delta=None,
    )


def _unit_weights(sample: ObservedSample, m: StratumMoments) -> np.ndarray:
    # w_i = (N_g / N_{g,z}) (n_z / N) for the unit's stratum g and arm z
    codes = sample.strata
    treated = sample.z == 1
    n_gz = np.where(treated, m.n_g1[codes], m.n_g0[codes]).astype(np.float64)
    n_z = np.where(treated, sample.n1, sample.n0).astype(np.float64)
    return (m.n_g[codes] / n_gz) * (n_z / sample.n)


def _wls_slope(w: np.ndarray, x: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Weighted least squares of v on x with an intercept: (intercept, slope)."""
    sw = float(np.sum(w))
    xbar = float(np.sum(w * x)) / sw
    vbar = float(np.sum(w * v)) / sw
    sxx = float(np.sum(w * (x - xbar) ** 2))
    sxv = float(np.sum(w * (x - xbar) * (v - vbar)))
    slope = sxv / sxx
    return vbar - slope * xbar, slope


def tsls_weighted(sample: ObservedSample) -> float:
    """Two weighted one-regressor least-squares stages.

    Unit weights (N_g / N_{g,z})(n_z / N) make the first-stage slope equal
    the post-stratified compliance estimate and the second-stage slope equal
    iv_across; kept as an independent cross-check of that identity.
    """
    m = stratum_moments(sample)
    w = _unit_weights(sample, m)
    z = sample.z.astype(np.float64)
    a1, b1 = _wls_slope(w, z, sample.d.astype(np.float64))
    if b1 == 0.0:
        raise ZeroCompliance("first-stage slope is zero; the second stage is undefined")
    d_pred = a1 + b1 * z
    _, b2 = _wls_slope(w, d_pred, sample.y)
    return float(b2)


def _design(sample: ObservedSample, last: np.ndarray) -> np.ndarray:
    n, g = sample.n, sample.num_strata
    x = np.empty((n, g + 1))
    x[:, 0] = 1.0
    if g > 1:
        x[:, 1:g] = sample.strata[:, None] == np.arange(1, g)
    x[:, g] = last
    return x


def tsls_dummies(sample: ObservedSample) -> EstimateReport:
    """Conventional 2SLS with an intercept and G-1 stratum indicators.

    Stage one regresses d on the instrument plus indicators; stage two
    regresses y on predicted d plus indicators. The reported standard error
    is the homoskedastic 2SLS one, built from structural residuals that use
    actual (not predicted) uptake; it rides in the se_bloom slot.
    """
    n, g = sample.n, sample.num_strata
    x1 = _design(sample, sample.z.astype(np.float64))
    beta1, _, rank1, _ = np.linalg.lstsq(x1, sample.d.astype(np.float64), rcond=None)
    if rank1 < g + 1:
        raise RankDeficient("first-stage design matrix is rank deficient")
    d_pred = x1 @ beta1
    x2 = _design(sample, d_pred)
    beta2, _, rank2, _ = np.linalg.lstsq(x2, sample.y, rcond=None)
    if rank2 < g + 1:
        raise RankDeficient("second-stage design matrix is rank deficient")
    est = float(beta2[g])
    se = None
    dof = n - (g + 1)
    if dof >= 1:
        x_struct = _design(sample, sample.d.astype(np.float64))
        resid = sample.y - x_struct @ beta2
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * np.linalg.inv(x2.T @ x2)
        se = math.sqrt(max(float(cov[g, g]), 0.0))
    return EstimateReport(
        method="TSLS_DUMMY",
        estimate=est,
        f_hat=float(beta1[g]),
        n_used=n,
        strata_kept=_all_labels(sample),
        se_bloom=se,
        se_delta=None,
    )


METHODS = ("UNSTRAT", "IV_W", "IV_A", "DSS", "DSF", "PWIV", "TSLS_DUMMY", "TSLS_WEIGHTED")


def estimate(
    sample: ObservedSample, method: str, config: EstimatorConfig = _DEFAULT_CONFIG
) -> EstimateReport:
    """Run one estimator by tag. ORACLE needs the science table and is not
    dispatchable from observed data."""
    if method == "UNSTRAT":
        return iv_unstratified(sample)
    if method == "IV_W":
        return iv_within(sample)
    if method == "IV_A":
        return iv_across(sample)
    if method == "DSS":
        return iv_dss(sample, config)
    if method == "DSF":
        return iv_dsf(sample, config)
    if method == "PWIV":
        return iv_pwiv(sample)
    if method == "TSLS_DUMMY":
        return tsls_dummies(sample)
    if method == "TSLS_WEIGHTED":
        m = stratum_moments(sample)
        w = m.n_g / float(sample.n)
        return EstimateReport(
            method="TSLS_WEIGHTED",
            estimate=tsls_weighted(sample),
            f_hat=float(np.sum(w * m.f_hat)),
            n_used=sample.n,
            strata_kept=_all_labels(sample),
        )
    raise ValueError(f"unknown estimator tag {method!r}")
