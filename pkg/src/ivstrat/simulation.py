"""Deterministic Monte Carlo engine for the estimator comparison study.

The data-generating process draws a stratified one-sided-noncompliance
population: equal-probability strata, per-unit compliance coins whose rates
optionally follow a geometric pattern over strata, stratum-shifted control
means that optionally explain 63% of outcome variance, and unit normal
total outcome variance. A concentration variant reparameterizes compliance
as (p r^3, p r^2, p r, p) across four strata so a single knob r moves the
design from uninformative (r = 1) to perfectly predictive (r = 0).

Determinism contract: every replication draws from its own counter-based
substream keyed by (seed, replication index), and aggregation reads
preallocated per-replication slots in index order, so results are byte
identical for any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data_model import (
    COMPLIER,
    EstimationError,
    InfeasibleCompliance,
    ObservedSample,
    ScienceTable,
    science_to_observed,
)
from .estimators import METHODS, EstimatorConfig, estimate, oracle_complier_dim

_VALID_TAGS = frozenset(METHODS) | {"ORACLE"}


def _check_tags(tags: Sequence[str]) -> None:
    unknown = [t for t in tags if t not in _VALID_TAGS]
    if unknown:
        raise ValueError(f"unknown estimator tags: {unknown}")

__all__ = [
    "RNG_FAMILY",
    "DEFAULT_ESTIMATORS",
    "ScenarioConfig",
    "ConcentrationConfig",
    "EstimatorMetrics",
    "ScenarioMetrics",
    "generate_science_table",
    "generate_concentration_table",
    "generate_random_strata",
    "run_scenario",
    "run_concentration",
    "run_grid",
    "default_grid",
]

RNG_FAMILY = "philox4x64"

DEFAULT_ESTIMATORS = (
    "UNSTRAT",
    "IV_W",
    "IV_A",
    "DSS",
    "DSF",
    "PWIV",
    "TSLS_DUMMY",
    "ORACLE",
)

# stratum pattern scale: between-stratum variance of centered consecutive
# integers 0..G-1 over equal strata is (G^2 - 1) / 12
def _pattern_scale(num_strata: int, between_var: float) -> float:
    spread = (num_strata * num_strata - 1.0) / 12.0
    return math.sqrt(between_var / spread)


def _check_treated_count(n: int, p_treat: float) -> int:
    n1 = p_treat * n
    if not 0.0 < p_treat < 1.0 or abs(n1 - round(n1)) > 1e-9:
        raise ValueError(f"p_treat * n = {n1} must be a whole number of treated units")
    n1 = round(n1)
    if not 0 < n1 < n:
        raise ValueError("both arms must be nonempty")
    return n1


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the factorial simulation design.

    tau, compliance_ratio, and outcome_r2 are calibration constants with
    documented defaults; heterogeneous_tau replaces tau with the declining
    per-stratum profile 0.8 - 0.2 g.
    """

    n: int = 2000
    target_pi_c: float = 0.10
    predicts_compliance: bool = False
    predicts_outcome: bool = False
    never_taker_shift: float = 0.0
    heterogeneous_tau: bool = False
    p_treat: float = 0.5
    replications: int = 1000
    seed: int = 0
    num_strata: int = 4
    tau: float = 0.5
    compliance_ratio: float = 0.1
    outcome_r2: float = 0.63
    random_strata_k: int | None = None
    estimators: tuple[str, ...] = DEFAULT_ESTIMATORS

    def __post_init__(self) -> None:
        if not 0.0 < self.target_pi_c < 1.0:
            raise ValueError("target_pi_c must lie in (0, 1)")
        if self.n < 4:
            raise ValueError("n must be at least 4")
        _check_treated_count(self.n, self.p_treat)
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.num_strata < 1:
            raise ValueError("num_strata must be at least 1")
        if not 0.0 < self.compliance_ratio <= 1.0:
            raise ValueError("compliance_ratio must lie in (0, 1]")
        if not 0.0 <= self.outcome_r2 < 1.0:
            raise ValueError("outcome_r2 must lie in [0, 1)")
        if self.random_strata_k is not None and self.random_strata_k < 1:
            raise ValueError("random_strata_k must be at least 1")
        _check_tags(self.estimators)

    @property
    def scenario_id(self) -> str:
        base = (
            f"n{self.n}_pi{self.target_pi_c:g}"
            f"_pc{int(self.predicts_compliance)}_py{int(self.predicts_outcome)}"
            f"_nt{self.never_taker_shift:g}_ht{int(self.heterogeneous_tau)}"
        )
        if self.random_strata_k is not None:
            base += f"_rk{self.random_strata_k}"
        return base


@dataclass(frozen=True)
class ConcentrationConfig:
    """Compliance-concentration design: stratum g of G gets compliance
    rate p * r^(G-1-g), with p solved so the weighted overall rate is
    target_p. r = 1 spreads compliers evenly; r = 0 puts them all in the
    final stratum."""

    r: float = 0.5
    target_p: float = 0.15
    weights: tuple[float, ...] = (0.35, 0.30, 0.20, 0.15)
    n: int = 2000
    never_taker_shift: float = 0.0
    heterogeneous_tau: bool = False
    predicts_outcome: bool = False
    p_treat: float = 0.5
    replications: int = 1000
    seed: int = 0
    tau: float = 0.5
    outcome_r2: float = 0.63
    estimators: tuple[str, ...] = DEFAULT_ESTIMATORS

    def __post_init__(self) -> None:
        if not 0.0 <= self.r <= 1.0:
            raise ValueError("r must lie in [0, 1]")
        if not 0.0 < self.target_p < 1.0:
            raise ValueError("target_p must lie in (0, 1)")
        if len(self.weights) < 1 or any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        _check_treated_count(self.n, self.p_treat)
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        _check_tags(self.estimators)
        self.base_rate  # fail construction on infeasible compliance

    @property
    def num_strata(self) -> int:
        return len(self.weights)

    @property
    def base_rate(self) -> float:
        """Top-stratum compliance rate p solving the overall-rate equation."""
        g = self.num_strata
        powers = self.r ** np.arange(g - 1, -1, -1, dtype=np.float64)
        denom = float(np.dot(self.weights, powers))
        p = self.target_p / denom
        if not 0.0 < p <= 1.0:
            raise InfeasibleCompliance(
                f"target_p={self.target_p} with r={self.r} needs top-stratum "
                f"compliance {p:.4g} outside (0, 1]"
            )
        return p

    @property
    def scenario_id(self) -> str:
        return f"r{self.r:g}_P{self.target_p:g}_n{self.n}"


def _assemble_table(
    strata: np.ndarray,
    comp_prob: np.ndarray,
    num_strata: int,
    predicts_outcome: bool,
    never_taker_shift: float,
    heterogeneous_tau: bool,
    tau: float,
    outcome_r2: float,
    rng: np.random.Generator,
) -> ScienceTable:
    n = len(strata)
    is_complier = rng.random(n) < comp_prob[strata]
    if predicts_outcome:
        scale = _pattern_scale(num_strata, outcome_r2)
        mu_g = scale * (np.arange(num_strata) - (num_strata - 1) / 2.0)
        noise_sd = math.sqrt(1.0 - outcome_r2)
    else:
        mu_g = np.zeros(num_strata)
        noise_sd = 1.0
    mu = mu_g[strata] + never_taker_shift * (~is_complier)
    y0 = mu + rng.normal(0.0, noise_sd, n)
    if heterogeneous_tau:
        tau_g = 0.8 - 0.2 * np.arange(num_strata, dtype=np.float64)
    else:
        tau_g = np.full(num_strata, tau)
    y1 = y0 + tau_g[strata] * is_complier
    d1 = is_complier.astype(np.int8)
    d0 = np.zeros(n, dtype=np.int8)
    return ScienceTable.from_arrays(y0=y0, y1=y1, d0=d0, d1=d1, strata=strata)


def generate_science_table(config: ScenarioConfig, rng: np.random.Generator) -> ScienceTable:
    """Draw one population table for a factorial-grid scenario.

    With predicts_compliance, stratum g's compliance rate is p * ratio^g,
    rescaled so the expected overall rate stays at target_pi_c; otherwise
    every unit complies with probability target_pi_c.
    """
    g = config.num_strata
    strata = rng.integers(0, g, size=config.n)
    if config.predicts_compliance:
        powers = config.compliance_ratio ** np.arange(g, dtype=np.float64)
        base = g * config.target_pi_c / float(powers.sum())
        comp_prob = base * powers
        if base > 1.0:
            raise InfeasibleCompliance(
                f"target_pi_c={config.target_pi_c} needs top-stratum compliance "
                f"{base:.4g} > 1 under ratio {config.compliance_ratio}"
            )
    else:
        comp_prob = np.full(g, config.target_pi_c)
    table = _assemble_table(
        strata,
        comp_prob,
        g,
        config.predicts_outcome,
        config.never_taker_shift,
        config.heterogeneous_tau,
        config.tau,
        config.outcome_r2,
        rng,
    )
    if config.random_strata_k is not None:
        table = generate_random_strata(table, config.random_strata_k, rng)
    return table


def generate_concentration_table(
    config: ConcentrationConfig, rng: np.random.Generator
) -> ScienceTable:
    """Draw one population table for the concentration sweep."""
    g = config.num_strata
    strata = rng.choice(g, size=config.n, p=np.asarray(config.weights))
    p = config.base_rate
    comp_prob = p * config.r ** np.arange(g - 1, -1, -1, dtype=np.float64)
    return _assemble_table(
        strata,
        comp_prob,
        g,
        config.predicts_outcome,
        config.never_taker_shift,
        config.heterogeneous_tau,
        config.tau,
        config.outcome_r2,
        rng,
    )


def generate_random_strata(
    table: ScienceTable, k: int, rng: np.random.Generator
) -> ScienceTable:
    """Relabel a table with k uniform random strata, unrelated to anything."""
    if k < 1:
        raise ValueError("k must be at least 1")
    labels = rng.integers(0, k, size=table.n)
    return ScienceTable.from_arrays(
        y0=table.y0, y1=table.y1, d0=table.d0, d1=table.d1, strata=labels
    )


@dataclass(frozen=True)
class EstimatorMetrics:
    """Monte Carlo performance summary for one estimator in one scenario."""

    estimator: str
    bias: float
    true_se: float
    rmse: float
    cal_bloom: float
    cal_delta: float
    rel_instab_bloom: float
    rel_instab_delta: float
    drop_rate: float
    fail_rate: float
    mean_n_used: float


@dataclass(frozen=True)
class ScenarioMetrics:
    """All estimator rows for one scenario plus its identifying metadata."""

    scenario_id: str
    n: int
    pi_c_target: float
    predicts_c: bool
    predicts_y: bool
    nt_shift: float
    het_tau: bool
    seed: int
    rng_family: str
    replications: int
    rows: tuple[EstimatorMetrics, ...]


def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(rep,))
    return np.random.Generator(np.random.Philox(ss))


def _draw_assignment(n: int, n1: int, rng: np.random.Generator) -> np.ndarray:
    z = np.zeros(n, dtype=np.int8)
    z[rng.permutation(n)[:n1]] = 1
    return z


@dataclass
class _RepStore:
    """Per-replication result slots, preallocated for index-order reads."""

    est: dict[str, np.ndarray]
    se_b: dict[str, np.ndarray]
    se_d: dict[str, np.ndarray]
    n_used: dict[str, np.ndarray]
    dropped: dict[str, np.ndarray]
    truth: np.ndarray

    @classmethod
    def empty(cls, tags: Sequence[str], reps: int) -> "_RepStore":
        def make() -> dict[str, np.ndarray]:
            return {t: np.full(reps, np.nan) for t in tags}

        return cls(
            est=make(),
            se_b=make(),
            se_d=make(),
            n_used=make(),
            dropped={t: np.zeros(reps, dtype=bool) for t in tags},
            truth=np.full(reps, np.nan),
        )


def _run_replication(
    store: _RepStore,
    rep: int,
    tags: Sequence[str],
    table: ScienceTable,
    sample: ObservedSample,
    z: np.ndarray,
    est_config: EstimatorConfig,
) -> None:
    if not np.any(table.compliance_type == COMPLIER):
        return  # truth undefined; every estimator slot stays nan
    store.truth[rep] = table.cace
    num_strata = sample.num_strata
    for tag in tags:
        try:
            if tag == "ORACLE":
                report = oracle_complier_dim(table, z)
            else:
                report = estimate(sample, tag, est_config)
        except EstimationError:
            continue
        if not math.isfinite(report.estimate):
            continue
        store.est[tag][rep] = report.estimate
        if report.se_bloom is not None:
            store.se_b[tag][rep] = report.se_bloom
        if report.se_delta is not None:
            store.se_d[tag][rep] = report.se_delta
        store.n_used[tag][rep] = report.n_used
        store.dropped[tag][rep] = len(report.strata_kept) < num_strata


def _sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else float("nan")


def _instability(se: np.ndarray, true_se: float) -> float:
    se = se[np.isfinite(se)]
    if len(se) < 2 or not math.isfinite(true_se) or true_se == 0.0:
        return float("nan")
    return _sd(se) / true_se


def _aggregate(
    store: _RepStore, tags: Sequence[str], reps: int
) -> tuple[EstimatorMetrics, ...]:
    baseline_b = float("nan")
    baseline_d = float("nan")
    if "UNSTRAT" in tags:
        est0 = store.est["UNSTRAT"]
        ok0 = np.isfinite(est0)
        se0 = _sd(est0[ok0])
        baseline_b = _instability(store.se_b["UNSTRAT"][ok0], se0)
        baseline_d = _instability(store.se_d["UNSTRAT"][ok0], se0)
    rows = []
    for tag in tags:
        est = store.est[tag]
        ok = np.isfinite(est)
        n_ok = int(ok.sum())
        fail_rate = 1.0 - n_ok / reps
        if n_ok == 0:
            nan = float("nan")
            rows.append(
                EstimatorMetrics(tag, nan, nan, nan, nan, nan, nan, nan, nan, 1.0, nan)
            )
            continue
        err = est[ok] - store.truth[ok]
        bias = float(np.mean(err))
        true_se = _sd(est[ok])
        rmse = math.sqrt(float(np.mean(err * err)))
        var_est = true_se * true_se
        se_b = store.se_b[tag][ok]
        se_d = store.se_d[tag][ok]
        se_b = se_b[np.isfinite(se_b)]
        se_d = se_d[np.isfinite(se_d)]
        cal_b = (
            math.sqrt(float(np.mean(se_b * se_b)) / var_est)
            if len(se_b) and var_est > 0.0
            else float("nan")
        )
        cal_d = (
            math.sqrt(float(np.mean(se_d * se_d)) / var_est)
            if len(se_d) and var_est > 0.0
            else float("nan")
        )
        inst_b = _instability(store.se_b[tag][ok], true_se) / baseline_b
        inst_d = _instability(store.se_d[tag][ok], true_se) / baseline_d
        rows.append(
            EstimatorMetrics(
                estimator=tag,
                bias=bias,
                true_se=true_se,
                rmse=rmse,
                cal_bloom=cal_b,
                cal_delta=cal_d,
                rel_instab_bloom=inst_b,
                rel_instab_delta=inst_d,
                drop_rate=float(np.mean(store.dropped[tag][ok])),
                fail_rate=fail_rate,
                mean_n_used=float(np.mean(store.n_used[tag][ok])),
            )
        )
    return tuple(rows)


def _run_reps(
    config,
    make_table: Callable[[np.random.Generator], ScienceTable],
    threads: int,
) -> _RepStore:
    tags = config.estimators
    reps = config.replications
    n1 = _check_treated_count(config.n, config.p_treat)
    est_config = EstimatorConfig()
    store = _RepStore.empty(tags, reps)

    def one(rep: int) -> None:
        rng = _rep_rng(config.seed, rep)
        table = make_table(rng)
        z = _draw_assignment(config.n, n1, rng)
        sample = science_to_observed(table, z)
        _run_replication(store, rep, tags, table, sample, z, est_config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(reps)))
    else:
        for rep in range(reps):
            one(rep)
    return store


def run_scenario(config: ScenarioConfig, threads: int = 1) -> ScenarioMetrics:
    """Run one factorial-grid scenario and aggregate its metrics.

    Per replication: fresh table, complete randomization of p_treat * n
    units, every configured estimator. Estimator failures are tallied, not
    fatal; bias and rmse are measured against each replication's own
    realized complier effect.
    """
    store = _run_reps(config, lambda rng: generate_science_table(config, rng), threads)
    return ScenarioMetrics(
        scenario_id=config.scenario_id,
        n=config.n,
        pi_c_target=config.target_pi_c,
        predicts_c=config.predicts_compliance,
        predicts_y=config.predicts_outcome,
        nt_shift=config.never_taker_shift,
        het_tau=config.heterogeneous_tau,
        seed=config.seed,
        rng_family=RNG_FAMILY,
        replications=config.replications,
        rows=_aggregate(store, config.estimators, config.replications),
    )


def run_concentration(config: ConcentrationConfig, threads: int = 1) -> ScenarioMetrics:
    """Run one point of the compliance-concentration sweep."""
    store = _run_reps(
        config, lambda rng: generate_concentration_table(config, rng), threads
    )
    return ScenarioMetrics(
        scenario_id=config.scenario_id,
        n=config.n,
        pi_c_target=config.target_p,
        predicts_c=config.r < 1.0,
        predicts_y=config.predicts_outcome,
        nt_shift=config.never_taker_shift,
        het_tau=config.heterogeneous_tau,
        seed=config.seed,
        rng_family=RNG_FAMILY,
        replications=config.replications,
        rows=_aggregate(store, config.estimators, config.replications),
    )


def run_grid(
    configs: Sequence[ScenarioConfig], threads: int = 1
) -> list[ScenarioMetrics]:
    """Run a collection of scenarios; one ScenarioMetrics per config."""
    return [run_scenario(c, threads=threads) for c in configs]


def default_grid(
    replications: int = 1000,
    seed: int = 0,
    n_values: Sequence[int] = (500, 1000, 2000),
    pi_c_values: Sequence[float] = (0.05, 0.075, 0.10),
    nt_shifts: Sequence[float] = (-0.5, 0.0, 0.5),
) -> list[ScenarioConfig]:
    """The full factorial grid; seeds are offset per scenario so no two
    scenarios share a replication stream."""
    configs = []
    idx = 0
    for n in n_values:
        for pi_c in pi_c_values:
            for predicts_c in (False, True):
                for predicts_y in (False, True):
                    for shift in nt_shifts:
                        for het in (False, True):
                            configs.append(
                                ScenarioConfig(
                                    n=n,
                                    target_pi_c=pi_c,
                                    predicts_compliance=predicts_c,
                                    predicts_outcome=predicts_y,
                                    never_taker_shift=shift,
                                    heterogeneous_tau=het,
                                    replications=replications,
                                    seed=seed + idx,
                                )
                            )
                            idx += 1
    return configs
