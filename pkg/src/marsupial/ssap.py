"""Sequential stochastic assignment thresholds and the deploy/skip rule.

With n stages remaining and k deployments left, the optimal single-carrier
policy deploys on a revealed reward x iff x exceeds the threshold a[n-k, n].
Threshold rows are built bottom-up from the prior: each a[i, n+1] is the
expected value collected by the row-n policy when the next reward lands
below, inside, or above the interval (a[i-1, n], a[i, n]].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .errors import InvariantError
from .prior import INF, RewardPrior

DEPLOY = True
SKIP = False

_SORT_SLACK = 1e-9


@dataclass(frozen=True)
class ThresholdTable:
    """Threshold rows for every stages-remaining count up to n_max.

    ``rows[n]`` has n+1 entries a[0..n, n] with the sentinels
    a[0, n] = -inf and a[n, n] = +inf; interior entries are finite and
    nondecreasing in i. Immutable; safe for concurrent reads.
    """

    prior: RewardPrior
    n_max: int
    rows: tuple[tuple[float, ...], ...]  # rows[0] is a placeholder

    def threshold(self, i: int, n: int) -> float:
        """a[i, n] for 1 <= n <= n_max, 0 <= i <= n."""
        if not 1 <= n <= self.n_max:
            raise ValueError(f"stages remaining {n} outside table range 1..{self.n_max}")
        return self.rows[n][i]


@lru_cache(maxsize=64)
def compute_thresholds(prior: RewardPrior, n_max: int) -> ThresholdTable:
    """Build the threshold table for all stages-remaining counts <= n_max.

    Quadratic in n_max; cached per (prior, n_max) so planners and baselines
    can share one table.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    rows: list[tuple[float, ...]] = [(), (-INF, INF)]
    for n in range(1, n_max):
        prev = rows[n]
        row = [-INF]
        for i in range(1, n + 1):
            lo = prev[i - 1]
            hi = prev[i]
            # Value below the interval: the reward is passed over and the
            # policy banks the continuation value lo. Mass exactly at lo is
            # worth lo either way, so it is folded in here (P(X <= lo)) to
            # keep the three terms a partition of the support.
            if lo == -INF:
                t1 = 0.0
            else:
                t1 = lo * (prior.cdf_below(lo) + prior.pmf(lo))
            t2 = prior.partial_expectation(lo, hi)
            t3 = 0.0 if hi == INF else hi * prior.cdf_above(hi)
            row.append(t1 + t2 + t3)
        row.append(INF)
        rows.append(tuple(row))
    table = ThresholdTable(prior=prior, n_max=n_max, rows=tuple(rows))
    _check_sorted(table)
    return table


def _check_sorted(table: ThresholdTable) -> None:
    for n in range(1, table.n_max + 1):
        row = table.rows[n]
        for i in range(n):
            if row[i] > row[i + 1] + _SORT_SLACK:
                raise InvariantError(
                    f"threshold row n={n} not sorted at i={i}: {row[i]} > {row[i + 1]}"
                )


def decide(table: ThresholdTable, x: float, n: int, k: int) -> bool:
    """Deploy/skip decision with n stages and k deployments remaining.

    k = 0 always skips; k >= n forces deployment at every remaining stage;
    otherwise deploy iff x strictly exceeds a[n-k, n] (ties skip).
    """
    if not 1 <= n <= table.n_max:
        raise ValueError(f"stages remaining {n} outside table range 1..{table.n_max}")
    if k <= 0:
        return SKIP
    if k >= n:
        return DEPLOY
    return DEPLOY if x > table.rows[n][n - k] else SKIP


def policy_value_single_robot(prior: RewardPrior, n_stages: int, deployments: int) -> float:
    """Exact expected total reward of the threshold policy, one robot, no conflicts.

    Forward dynamic programming over (stages remaining, deployments remaining)
    on the prior's finite support, following :func:`decide` exactly (including
    its tie rule), so it can be compared against the backward-induction optimum.
    """
    if not 1 <= deployments <= n_stages:
        raise ValueError(f"need 1 <= D <= N, got D={deployments}, N={n_stages}")
    table = compute_thresholds(prior, n_stages)
    mean = prior.mean()
    support = prior.support
    probs = prior.probs
    prev = [0.0] * (deployments + 1)
    for n in range(1, n_stages + 1):
        cur = [0.0] * (deployments + 1)
        for k in range(1, min(deployments, n) + 1):
            if k >= n:
                cur[k] = n * mean
                continue
            a = table.rows[n][n - k]
            stay = prev[k]
            go = prev[k - 1]
            acc = 0.0
            for x, p in zip(support, probs):
                acc += p * (x + go) if x > a else p * stay
            cur[k] = acc
        prev = cur
    return prev[deployments]
