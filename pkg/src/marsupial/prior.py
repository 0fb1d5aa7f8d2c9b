"""Discrete belief distributions over per-stage deployment rewards.

A :class:`RewardPrior` is a finite discrete distribution, either given
explicitly (support + probabilities) or materialized from a truncated
Poisson. It exposes the probability queries the threshold recurrence
needs (strict tail probabilities and half-open partial expectations)
plus seeded sampling for rollouts and scenario generation.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ScenarioFormatError

INF = float("inf")

_POISSON_SUPPORT_CAP = 200_000


@dataclass(frozen=True)
class RewardPrior:
    """Immutable discrete reward distribution.

    ``support`` is strictly ascending and non-negative; ``probs`` are the
    matching probabilities. For Poisson priors the support is truncated at
    the smallest count whose remaining tail mass is below ``tail_epsilon``
    (the mass is not renormalized, so sums are exact up to that bound).
    Instances are hashable and safe to share across threads; sampling takes
    a caller-owned ``numpy.random.Generator``.
    """

    kind: str  # "poisson" | "explicit"
    support: tuple[float, ...]
    probs: tuple[float, ...]
    rate: float | None = None
    tail_epsilon: float = 1e-12

    # -- cached lookup structures (not part of equality/hash) --

    @cached_property
    def _p_prefix(self) -> list[float]:
        """Prefix sums of probs; _p_prefix[i] = P(X < support[i])."""
        acc = 0.0
        out = [0.0]
        for p in self.probs:
            acc += p
            out.append(acc)
        return out

    @cached_property
    def _xp_prefix(self) -> list[float]:
        """Prefix sums of x*p for partial expectations."""
        acc = 0.0
        out = [0.0]
        for x, p in zip(self.support, self.probs):
            acc += x * p
            out.append(acc)
        return out

    @cached_property
    def _cum(self) -> list[float]:
        return self._p_prefix[1:]

    @cached_property
    def _support_arr(self) -> np.ndarray:
        return np.asarray(self.support, dtype=np.float64)

    @cached_property
    def _cum_arr(self) -> np.ndarray:
        return np.asarray(self._cum, dtype=np.float64)

    # -- queries --

    def pmf(self, x: float) -> float:
        """Probability mass at ``x`` (0 for values outside the support)."""
        if x < 0:
            raise ValueError(f"reward value must be non-negative, got {x}")
        i = bisect_left(self.support, x)
        if i < len(self.support) and self.support[i] == x:
            return self.probs[i]
        return 0.0

    def mean(self) -> float:
        """Expected reward over the materialized support."""
        return self._xp_prefix[-1]

    def total_mass(self) -> float:
        """Sum of all materialized probabilities (1 - truncated tail)."""
        return self._p_prefix[-1]

    def quantile(self, q: float) -> float:
        """Smallest support value v with CDF(v) >= q, for 0 < q < 1."""
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must be in (0, 1), got {q}")
        i = bisect_left(self._cum, q)
        if i >= len(self.support):  # q exceeds truncated total mass
            i = len(self.support) - 1
        return self.support[i]

    def partial_expectation(self, lo: float, hi: float) -> float:
        """Sum of x*f(x) over support values with lo < x <= hi.

        ``lo``/``hi`` may be +-inf; the interval is half-open on the left.
        """
        if lo > hi:
            raise ValueError(f"empty interval: lo={lo} > hi={hi}")
        xp = self._xp_prefix
        return xp[bisect_right(self.support, hi)] - xp[bisect_right(self.support, lo)]

    def cdf_below(self, a: float) -> float:
        """P(X < a), strictly below; 0 at a = -inf."""
        return self._p_prefix[bisect_left(self.support, a)]

    def cdf_above(self, a: float) -> float:
        """P(X > a), strictly above; 0 at a = +inf."""
        return self._p_prefix[-1] - self._p_prefix[bisect_right(self.support, a)]

    # -- sampling --

    def sample(self, rng: np.random.Generator, size=None):
        """Draw support values with probability pmf(x) via inverse CDF.

        Deterministic for a fixed generator state. Returns a float for
        ``size=None``, else an ndarray of the requested shape.
        """
        u = rng.random(size)
        idx = np.searchsorted(self._cum_arr, u, side="right")
        idx = np.minimum(idx, len(self.support) - 1)
        values = self._support_arr[idx]
        if size is None:
            return float(values)
        return values


def poisson_prior(rate: float, tail_epsilon: float = 1e-12) -> RewardPrior:
    """Materialize a Poisson(rate) pmf truncated to mass >= 1 - tail_epsilon."""
    if rate <= 0:
        raise ValueError(f"Poisson rate must be positive, got {rate}")
    if not 0 < tail_epsilon < 1:
        raise ValueError(f"tail_epsilon must be in (0, 1), got {tail_epsilon}")
    p = math.exp(-rate)
    if p == 0.0:
        raise ValueError(f"Poisson rate {rate} too large to materialize in float64")
    support = [0.0]
    probs = [p]
    cum = p
    x = 0
    while 1.0 - cum >= tail_epsilon:
        x += 1
        if x > _POISSON_SUPPORT_CAP:
            raise ValueError(f"Poisson support did not converge below cap for rate={rate}")
        p *= rate / x
        support.append(float(x))
        probs.append(p)
        cum += p
    return RewardPrior(
        kind="poisson",
        support=tuple(support),
        probs=tuple(probs),
        rate=float(rate),
        tail_epsilon=tail_epsilon,
    )


def explicit_prior(support, probs) -> RewardPrior:
    """Build an explicit finite prior; validates ordering and normalization."""
    support = tuple(float(x) for x in support)
    probs = tuple(float(p) for p in probs)
    if not support:
        raise ValueError("explicit prior needs a non-empty support")
    if len(support) != len(probs):
        raise ValueError(
            f"support and probs lengths differ: {len(support)} vs {len(probs)}"
        )
    if any(x < 0 for x in support):
        raise ValueError("support values must be non-negative")
    if any(b <= a for a, b in zip(support, support[1:])):
        raise ValueError("support must be strictly ascending")
    if any(p < 0 for p in probs):
        raise ValueError("probabilities must be non-negative")
    total = sum(probs)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities must sum to 1 within 1e-9, got {total!r}")
    return RewardPrior(kind="explicit", support=support, probs=probs)


def prior_from_spec(obj, path: str = "prior") -> RewardPrior:
    """Parse the scenario-file prior spec.

    Accepts {"poisson": {"lambda": r}} or
    {"explicit": {"support": [...], "probs": [...]}}.
    """
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ScenarioFormatError(
            f"{path}: expected a single-key object ('poisson' or 'explicit')"
        )
    (key, body), = obj.items()
    if key == "poisson":
        if not isinstance(body, dict) or "lambda" not in body:
            raise ScenarioFormatError(f"{path}.poisson: expected an object with 'lambda'")
        rate = body["lambda"]
        if not isinstance(rate, (int, float)) or isinstance(rate, bool) or rate <= 0:
            raise ScenarioFormatError(f"{path}.poisson.lambda: expected a positive number")
        tail = body.get("tail_epsilon", 1e-12)
        try:
            return poisson_prior(float(rate), float(tail))
        except ValueError as exc:
            raise ScenarioFormatError(f"{path}.poisson: {exc}") from exc
    if key == "explicit":
        if not isinstance(body, dict):
            raise ScenarioFormatError(f"{path}.explicit: expected an object")
        for field_name in ("support", "probs"):
            if not isinstance(body.get(field_name), list):
                raise ScenarioFormatError(f"{path}.explicit.{field_name}: expected a list")
        try:
            return explicit_prior(body["support"], body["probs"])
        except (TypeError, ValueError) as exc:
            raise ScenarioFormatError(f"{path}.explicit: {exc}") from exc
    raise ScenarioFormatError(f"{path}: unknown prior kind {key!r}")


def prior_to_spec(prior: RewardPrior) -> dict:
    """Inverse of :func:`prior_from_spec`."""
    if prior.kind == "poisson":
        spec: dict = {"poisson": {"lambda": prior.rate}}
        if prior.tail_epsilon != 1e-12:
            spec["poisson"]["tail_epsilon"] = prior.tail_epsilon
        return spec
    return {"explicit": {"support": list(prior.support), "probs": list(prior.probs)}}
