"""Standard errors for instrumental-variable effect estimates.

Two families of plug-in variances for a ratio estimate itt_hat / f_hat:

* Bloom: treat the first stage as known and scale the Neyman variance of
  the intent-to-treat contrast by 1 / f_hat^2.
* Delta: first-order expansion of the ratio, which adds the sampling noise
  of f_hat and its covariance with itt_hat.

Each family comes in an unstratified form and a post-stratified form that
averages per-stratum pieces with (N_g / N)^2 weights. The post-stratified
functions accept the set of strata an estimator actually kept so that the
reported uncertainty matches the units that produced the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable

import numpy as np

from .data_model import (
    AllStrataDropped,
    DegenerateVariance,
    ObservedSample,
    StratumMoments,
    StratumSummary,
    TooFewUnits,
    UnknownStratum,
    ZeroCompliance,
    stratum_moments,
)

__all__ = [
    "VarianceComponents",
    "arm_moments",
    "variance_components",
    "var_itt_neyman",
    "se_bloom_unstrat",
    "se_delta_unstrat",
    "se_bloom_ps",
    "se_delta_ps",
    "se_pwiv",
]


@dataclass(frozen=True)
class VarianceComponents:
    """Plug-in variances of (itt_hat, f_hat) and their covariance."""

    var_itt_hat: float
    var_f_hat: float
    cov_itt_f_hat: float


def arm_moments(sample: ObservedSample) -> dict[str, float]:
    """Whole-sample per-arm means and sample (co)variances of y and d.

    Ignores strata. Accumulates through bincount so that a single-stratum
    sample reproduces these numbers bit for bit via stratum_moments.
    Variance entries are nan when an arm has fewer than two units.
    """
    z = sample.z
    counts = np.bincount(z, minlength=2).astype(np.float64)
    sum_y = np.bincount(z, weights=sample.y, minlength=2)
    sum_d = np.bincount(z, weights=sample.d.astype(np.float64), minlength=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_y = sum_y / counts
        mean_d = sum_d / counts
    ry = sample.y - mean_y[z]
    rd = sample.d - mean_d[z]
    ss_y = np.bincount(z, weights=ry * ry, minlength=2)
    ss_d = np.bincount(z, weights=rd * rd, minlength=2)
    ss_yd = np.bincount(z, weights=ry * rd, minlength=2)
    dof = counts - 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        s2_y = np.where(dof >= 1, ss_y / dof, np.nan)
        s2_d = np.where(dof >= 1, ss_d / dof, np.nan)
        s_yd = np.where(dof >= 1, ss_yd / dof, np.nan)
    return {
        "n1": counts[1],
        "n0": counts[0],
        "ybar1": mean_y[1],
        "ybar0": mean_y[0],
        "dbar1": mean_d[1],
        "dbar0": mean_d[0],
        "s2_y1": s2_y[1],
        "s2_y0": s2_y[0],
        "s2_d1": s2_d[1],
        "s2_d0": s2_d[0],
        "s_yd1": s_yd[1],
        "s_yd0": s_yd[0],
    }


def _require_two_per_arm(n1: float, n0: float, where: str = "") -> None:
    tag = f" in {where}" if where else ""
    if n1 < 2:
        raise TooFewUnits(f"need at least 2 treated units{tag} to estimate a variance")
    if n0 < 2:
        raise TooFewUnits(f"need at least 2 control units{tag} to estimate a variance")


def variance_components(sample: ObservedSample) -> VarianceComponents:
    """Unstratified plug-in components s2(1)/n1 + s2(0)/n0 for y, d, and yd.

    Raises TooFewUnits when either arm has fewer than two units.
    """
    m = arm_moments(sample)
    _require_two_per_arm(m["n1"], m["n0"])
    var_itt = m["s2_y1"] / m["n1"] + m["s2_y0"] / m["n0"]
    var_f = m["s2_d1"] / m["n1"] + m["s2_d0"] / m["n0"]
    cov = m["s_yd1"] / m["n1"] + m["s_yd0"] / m["n0"]
    return VarianceComponents(float(var_itt), float(var_f), float(cov))


def var_itt_neyman(x: ObservedSample | StratumSummary) -> float:
    """Neyman variance estimate s2_y(1)/n1 + s2_y(0)/n0.

    Accepts a whole sample (strata ignored) or one StratumSummary.
    Raises TooFewUnits when either arm has fewer than two units.
    """
    if isinstance(x, StratumSummary):
        _require_two_per_arm(x.n_g1, x.n_g0, where=f"stratum {x.g!r}")
        assert x.s2_y1 is not None and x.s2_y0 is not None
        return x.s2_y1 / x.n_g1 + x.s2_y0 / x.n_g0
    return variance_components(x).var_itt_hat


def _f_hat_unstrat(sample: ObservedSample) -> float:
    m = arm_moments(sample)
    return float(m["dbar1"] - m["dbar0"])


def se_bloom_unstrat(sample: ObservedSample) -> float:
    """Bloom standard error: sqrt(var_itt_neyman) / |f_hat|.

    Raises ZeroCompliance when f_hat is exactly zero and TooFewUnits when
    either arm cannot support a variance estimate.
    """
    f = _f_hat_unstrat(sample)
    if f == 0.0:
        raise ZeroCompliance("f_hat is zero; the Bloom variance is undefined")
    return math.sqrt(var_itt_neyman(sample) / (f * f))


def se_delta_unstrat(sample: ObservedSample) -> float:
    """Delta-method standard error of the unstratified IV ratio.

    var = var(itt)/f^2 + itt^2 var(f)/f^4 - 2 itt cov(itt, f)/f^3 with each
    component the usual plug-in sum over arms, evaluated in the factored
    form (1/f^2)[var(itt) + c^2 var(f) - 2 c cov] with c = itt/f so that the
    single-stratum case reproduces se_delta_ps bit for bit. The bracket is
    the Neyman variance of y - c d, so it is nonnegative.
    """
    m = arm_moments(sample)
    _require_two_per_arm(m["n1"], m["n0"])
    f = float(m["dbar1"] - m["dbar0"])
    if f == 0.0:
        raise ZeroCompliance("f_hat is zero; the delta variance is undefined")
    c = float(m["ybar1"] - m["ybar0"]) / f
    c_y = m["s2_y1"] / m["n1"] + m["s2_y0"] / m["n0"]
    c_d = m["s2_d1"] / m["n1"] + m["s2_d0"] / m["n0"]
    c_yd = m["s_yd1"] / m["n1"] + m["s_yd0"] / m["n0"]
    var = float(c_y + c * c * c_d - 2.0 * c * c_yd) / (f * f)
    return math.sqrt(max(var, 0.0))


def _kept_codes(sample: ObservedSample, kept_strata: Iterable[Hashable] | None) -> np.ndarray:
    if kept_strata is None:
        return np.arange(sample.num_strata)
    labels = list(sample.stratum_labels)
    codes = []
    for g in kept_strata:
        try:
            codes.append(labels.index(g))
        except ValueError:
            raise UnknownStratum(f"stratum {g!r} is not a stratum of this sample") from None
    if not codes:
        raise AllStrataDropped("kept_strata is empty")
    return np.array(sorted(set(codes)), dtype=np.intp)


def _kept_pieces(
    sample: ObservedSample, kept_strata: Iterable[Hashable] | None
) -> tuple[StratumMoments, np.ndarray, float, float]:
    """Shared front end of the post-stratified variances.

    Returns (moments, kept codes, N over kept strata, f_hat_ps over kept
    strata). Every kept stratum must have two units in each arm.
    """
    m = stratum_moments(sample)
    kept = _kept_codes(sample, kept_strata)
    for g in kept:
        _require_two_per_arm(m.n_g1[g], m.n_g0[g], where=f"stratum {sample.stratum_labels[g]!r}")
    n_kept = float(m.n_g[kept].sum())
    f_ps = float(np.sum((m.n_g[kept] / n_kept) * m.f_hat[kept]))
    return m, kept, n_kept, f_ps


def se_bloom_ps(sample: ObservedSample, kept_strata: Iterable[Hashable] | None = None) -> float:
    """Post-stratified Bloom standard error over the kept strata.

    var = (1/f_ps^2) sum_g (N_g/N)^2 [s2_yg(1)/N_g1 + s2_yg(0)/N_g0] with N
    and f_ps renormalized to the kept units. kept_strata of None keeps all.
    """
    m, kept, n_kept, f_ps = _kept_pieces(sample, kept_strata)
    if f_ps == 0.0:
        raise ZeroCompliance("post-stratified f_hat is zero over the kept strata")
    w2 = (m.n_g[kept] / n_kept) ** 2
    var_itt_g = m.s2_y1[kept] / m.n_g1[kept] + m.s2_y0[kept] / m.n_g0[kept]
    return math.sqrt(float(np.sum(w2 * var_itt_g)) / (f_ps * f_ps))


def se_delta_ps(
    sample: ObservedSample,
    kept_strata: Iterable[Hashable] | None = None,
    cace_hat: float | None = None,
) -> float:
    """Post-stratified delta-method standard error over the kept strata.

    Per stratum the bracket is var(itt_g) + cace^2 var(f_g) - 2 cace cov_g,
    i.e. the Neyman variance of y - cace * d, so each term is nonnegative.
    cace_hat defaults to the post-stratified ratio over the kept strata.
    """
    m, kept, n_kept, f_ps = _kept_pieces(sample, kept_strata)
    if f_ps == 0.0:
        raise ZeroCompliance("post-stratified f_hat is zero over the kept strata")
    if cace_hat is None:
        itt_ps = float(np.sum((m.n_g[kept] / n_kept) * m.itt_hat[kept]))
        cace_hat = itt_ps / f_ps
    w2 = (m.n_g[kept] / n_kept) ** 2
    var_itt_g = m.s2_y1[kept] / m.n_g1[kept] + m.s2_y0[kept] / m.n_g0[kept]
    var_f_g = m.s2_d1[kept] / m.n_g1[kept] + m.s2_d0[kept] / m.n_g0[kept]
    cov_g = m.s_yd1[kept] / m.n_g1[kept] + m.s_yd0[kept] / m.n_g0[kept]
    bracket = var_itt_g + cace_hat * cace_hat * var_f_g - 2.0 * cace_hat * cov_g
    var = float(np.sum(w2 * bracket)) / (f_ps * f_ps)
    return math.sqrt(max(var, 0.0))


def se_pwiv(sample: ObservedSample) -> float:
    """Standard error of the precision-weighted IV estimate: sqrt(1 / Z).

    Z sums f_g^2 / var(itt_g) over strata with nonzero f_g. Requires two
    units per arm in every stratum (TooFewUnits), a positive var(itt_g) in
    every weighted stratum (DegenerateVariance), and at least one stratum
    with nonzero f_g (AllStrataDropped).
    """
    m = stratum_moments(sample)
    for g in range(sample.num_strata):
        _require_two_per_arm(m.n_g1[g], m.n_g0[g], where=f"stratum {sample.stratum_labels[g]!r}")
    var_itt_g = m.s2_y1 / m.n_g1 + m.s2_y0 / m.n_g0
    f_g = m.f_hat
    nonzero = f_g != 0.0
    if not bool(np.any(nonzero)):
        raise AllStrataDropped("every stratum has zero estimated compliance")
    if bool(np.any(var_itt_g[nonzero] == 0.0)):
        bad = int(np.flatnonzero(nonzero & (var_itt_g == 0.0))[0])
        raise DegenerateVariance(
            f"stratum {sample.stratum_labels[bad]!r} has zero outcome variance; "
            "its precision weight is unbounded"
        )
    z_total = float(np.sum(f_g[nonzero] ** 2 / var_itt_g[nonzero]))
    return math.sqrt(1.0 / z_total)
