"""Shared sample and table builders for the test suite."""

from __future__ import annotations

import numpy as np

from ivstrat import ObservedSample, ScienceTable


def sample_a() -> ObservedSample:
    """Single stratum, 4 units, hand-checkable moments.

    itt = 1, f_hat = 0.5, IV = 2; s2_y1 = 2, s2_y0 = 2, s2_d1 = 0.5;
    var(ITT) plug-in = 2, Bloom SE = 2*sqrt(2), delta SE = 2.
    """
    return ObservedSample.from_arrays(
        z=[1, 1, 0, 0], d=[1, 0, 0, 0], y=[3.0, 1.0, 2.0, 0.0]
    )


def sample_two_strata() -> ObservedSample:
    """Stratum "x" is sample_a's data (itt 1, f_hat 0.5); stratum "w" has
    itt 2 and f_hat 0. IV-w keeps only "x" (estimate 2); IV-a keeps both
    (ITT_ps 1.5 over f_ps 0.25 = 6)."""
    return ObservedSample.from_arrays(
        z=[1, 1, 0, 0, 1, 1, 0, 0],
        d=[1, 0, 0, 0, 0, 0, 0, 0],
        y=[3.0, 1.0, 2.0, 0.0, 4.0, 2.0, 1.0, 1.0],
        strata=["x", "x", "x", "x", "w", "w", "w", "w"],
    )


def sample_pwiv() -> ObservedSample:
    """Two strata with d == z. Stratum 0: itt 1, var(ITT) plug-in 2;
    stratum 1: itt 2, var 4. Precision weights 1/2 and 1/4, so the
    weighted estimate is 4/3 and its SE sqrt(1/0.75)."""
    return ObservedSample.from_arrays(
        z=[1, 1, 0, 0, 1, 1, 0, 0],
        d=[1, 1, 0, 0, 1, 1, 0, 0],
        y=[3.0, 1.0, 2.0, 0.0, 5.0, 1.0, 1.0, 1.0],
        strata=[0, 0, 0, 0, 1, 1, 1, 1],
    )


def random_sample(
    rng: np.random.Generator,
    n_range: tuple[int, int] = (20, 200),
    g_range: tuple[int, int] = (1, 6),
    one_sided: bool | None = None,
    require_nonzero_f: bool = True,
) -> ObservedSample:
    """A valid random sample: every stratum has >= 2 units per arm, and
    (by default) every stratum f_hat is nonzero. Rejection-samples until
    the guarantees hold."""
    if one_sided is None:
        one_sided = bool(rng.integers(0, 2))
    while True:
        g = int(rng.integers(g_range[0], g_range[1] + 1))
        n = int(rng.integers(max(n_range[0], 8 * g), n_range[1] + 1))
        strata = np.repeat(np.arange(g), 8)  # floor of 4 per arm per stratum
        strata = np.concatenate([strata, rng.integers(0, g, n - len(strata))])
        z = np.zeros(n, dtype=int)
        for s in range(g):  # balanced coin flips within stratum
            idx = np.flatnonzero(strata == s)
            z[idx[rng.permutation(len(idx))[: len(idx) // 2]]] = 1
        pc = rng.uniform(0.3, 0.9, g)
        pa = np.zeros(g) if one_sided else rng.uniform(0.0, 0.4, g) * (1 - pc)
        u = rng.random(n)
        always = u < pa[strata]
        complier = (u >= pa[strata]) & (u < (pa + pc)[strata])
        d = np.where(always, 1, np.where(complier, z, 0))
        y = rng.normal(0, 1, n) + 0.8 * d + 0.3 * strata
        ok = True
        if require_nonzero_f:
            for s in range(g):
                m1 = d[(strata == s) & (z == 1)].mean()
                m0 = d[(strata == s) & (z == 0)].mean()
                if m1 == m0:
                    ok = False
                    break
        if ok:
            return ObservedSample.from_arrays(z=z, d=d, y=y, strata=strata)


def one_sided_table(
    n: int,
    n_c: int,
    delta: float,
    tau: float = 0.5,
    rng: np.random.Generator | None = None,
    noise: float = 0.0,
) -> ScienceTable:
    """One-sided table with exactly n_c compliers and control-mean gap
    Ybar_c(0) - Ybar_n(0) = delta (exact when noise = 0)."""
    ctype = np.zeros(n, dtype=int)
    ctype[:n_c] = 1
    y0 = np.where(ctype == 1, delta, 0.0)
    if noise > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        eps = rng.normal(0, noise, n)
        for grp in (0, 1):  # recenter so group means stay exact
            mask = ctype == grp
            if mask.any():
                eps[mask] -= eps[mask].mean()
        y0 = y0 + eps
    y1 = y0 + tau * ctype
    return ScienceTable.from_arrays(
        y0=y0, y1=y1, d0=np.zeros(n, dtype=int), d1=ctype
    )


def stratified_table(
    rng: np.random.Generator,
    n: int = 2000,
    num_strata: int = 4,
    compliers_per_stratum: tuple[int, ...] = (125, 50, 20, 5),
    tau: float = 0.5,
) -> ScienceTable:
    """Fixed-composition stratified one-sided table: equal stratum sizes,
    a declining complier count per stratum, stratum-shifted control means."""
    size = n // num_strata
    assert size * num_strata == n
    strata = np.repeat(np.arange(num_strata), size)
    ctype = np.zeros(n, dtype=int)
    for s, k in enumerate(compliers_per_stratum):
        ctype[s * size : s * size + k] = 1
    mu = 0.71 * (strata - (num_strata - 1) / 2.0)
    y0 = mu + rng.normal(0, 0.6, n)
    y1 = y0 + tau * ctype
    return ScienceTable.from_arrays(
        y0=y0, y1=y1, d0=np.zeros(n, dtype=int), d1=ctype, strata=strata
    )
