"""Random-utility route choice: MNL probabilities, likelihood, estimation.

Route utilities are mode-scaled generalized costs plus capacity shadow
prices,

    V_k = - sum_m theta_m * sum_{a in A_km} (c_a + w_a)

and choice probabilities follow the multinomial logit form.  The
log-likelihood is concave in theta (and in w for fixed theta), so the
dispersion parameters are estimated by projected gradient ascent with
exact analytic gradients.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .network import ChoiceSet, Network, Route
from .optimize import projected_ascent

THETA_MAX_DEFAULT = 1e3
_LOG_UNDERFLOW = -745.0


class EstimationError(ValueError):
    """Likelihood maximization cannot proceed on the given data."""


@dataclass(frozen=True)
class Dispersion:
    """Per-mode dispersion parameters scaling perceived cost differences."""

    theta: Mapping[int, float]

    def __post_init__(self):
        for m, v in self.theta.items():
            if v < 0:
                raise ValueError(f"theta[{m}] must be nonnegative, got {v}")

    def for_mode(self, mode: int) -> float:
        try:
            return float(self.theta[mode])
        except KeyError:
            raise EstimationError(f"no dispersion parameter for mode {mode}") from None

    @classmethod
    def tied(cls, value: float, modes: Sequence[int]) -> "Dispersion":
        return cls({int(m): float(value) for m in modes})


@dataclass(frozen=True)
class ShadowPriceVector:
    """Nonnegative link shadow prices for one interval; missing links are 0."""

    interval: int
    prices: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for a, w in self.prices.items():
            if w < 0:
                raise ValueError(f"negative shadow price {w} on link {a!r}")

    def price(self, link_id: str) -> float:
        return float(self.prices.get(link_id, 0.0))


def zero_prices(interval: int = 0) -> ShadowPriceVector:
    return ShadowPriceVector(interval, {})


@dataclass(frozen=True)
class ChoiceObservation:
    """One observed route choice; ``weight`` counts identical trips."""

    interval: int
    choice_set: ChoiceSet
    chosen: int
    weight: float = 1.0

    def __post_init__(self):
        if not 0 <= self.chosen < len(self.choice_set.routes):
            raise ValueError(
                f"chosen index {self.chosen} out of range for "
                f"{len(self.choice_set.routes)} routes"
            )
        if self.weight <= 0:
            raise ValueError(f"weight must be positive, got {self.weight}")


@dataclass(frozen=True)
class EstimationReport:
    log_likelihood: float
    iterations: int
    grad_norm: float
    converged: bool
    warnings: tuple[str, ...] = ()


def route_cost_with_prices(route: Route, w: ShadowPriceVector, network: Network) -> dict[int, float]:
    """Per-mode sums of (cost + shadow price) along the route."""
    out: dict[int, float] = {}
    for a in route.links:
        lk = network.link(a)
        out[lk.mode] = out.get(lk.mode, 0.0) + lk.cost + w.price(a)
    return out


def representative_utility(
    route: Route, theta: Dispersion, w: ShadowPriceVector, network: Network
) -> float:
    """V = - sum_m theta_m * sum_{a in A_km} (c_a + w_a)."""
    return -sum(
        theta.for_mode(m) * s for m, s in route_cost_with_prices(route, w, network).items()
    )


def choice_probabilities(
    choice_set: ChoiceSet, theta: Dispersion, w: ShadowPriceVector, network: Network
) -> np.ndarray:
    """MNL probabilities over the choice set (max-subtracted softmax)."""
    v = np.array(
        [representative_utility(rt, theta, w, network) for rt in choice_set.routes]
    )
    z = np.exp(v - np.max(v))
    p = z / z.sum()
    return p / p.sum()


def logsum_consumer_surplus(
    choice_set: ChoiceSet,
    theta: Dispersion,
    w: ShadowPriceVector,
    network: Network,
    normalize: bool = False,
    ref_mode: int = 0,
) -> float:
    """MNL logsum ln(sum exp V); optionally in generalized-cost units.

    Differences of this quantity between two shadow-price states measure
    the change in expected consumer surplus.  With ``normalize`` the
    logsum is divided by the reference mode's dispersion parameter.
    """
    v = np.array(
        [representative_utility(rt, theta, w, network) for rt in choice_set.routes]
    )
    m = float(np.max(v))
    ls = m + math.log(float(np.sum(np.exp(v - m))))
    if normalize:
        ref = theta.for_mode(ref_mode)
        if ref <= 0:
            raise EstimationError(f"reference theta for mode {ref_mode} must be positive")
        return ls / ref
    return ls


class _SetGroup:
    """Observations sharing one choice set, with precomputed route arrays."""

    __slots__ = ("base", "wmat", "counts", "n", "observations", "od")

    def __init__(self, choice_set, network, mode_cols, link_cols):
        routes = choice_set.routes
        self.base = np.zeros((len(routes), len(mode_cols)))
        self.wmat = np.zeros((len(routes), len(link_cols))) if link_cols else None
        for k, rt in enumerate(routes):
            for a in rt.links:
                lk = network.link(a)
                self.base[k, mode_cols[lk.mode]] += lk.cost
                if link_cols and a in link_cols:
                    self.wmat[k, link_cols[a]] += 1.0
        self.counts = np.zeros(len(routes))
        self.n = 0.0
        self.observations: list[ChoiceObservation] = []
        self.od = choice_set.od

    def add(self, obs: ChoiceObservation):
        self.counts[obs.chosen] += obs.weight
        self.n += obs.weight
        self.observations.append(obs)


class _Likelihood:
    """Grouped MNL log-likelihood with analytic gradients in theta and w.

    Modes and shadow-priced links are mapped to dense columns; the
    per-group arrays keep evaluation cost proportional to the number of
    distinct choice sets rather than observations.
    """

    def __init__(self, observations, network, w_links=()):
        self.network = network
        modes = sorted(
            {
                m
                for obs in observations
                for rt in obs.choice_set.routes
                for m in rt.mode_partition
            }
        )
        self.modes = modes
        self.mode_cols = {m: j for j, m in enumerate(modes)}
        self.w_links = tuple(w_links)
        self.link_cols = {a: j for j, a in enumerate(self.w_links)}
        self.link_modes = np.array(
            [self.mode_cols[network.link(a).mode] for a in self.w_links], dtype=int
        )
        groups: dict[int, _SetGroup] = {}
        for obs in observations:
            key = id(obs.choice_set)
            grp = groups.get(key)
            if grp is None:
                grp = _SetGroup(obs.choice_set, network, self.mode_cols, self.link_cols)
                groups[key] = grp
            grp.add(obs)
        self.groups = list(groups.values())

    def _theta_vec(self, theta: Dispersion) -> np.ndarray:
        return np.array([theta.for_mode(m) for m in self.modes])

    def _w_vec(self, w: ShadowPriceVector) -> np.ndarray:
        return np.array([w.price(a) for a in self.w_links])

    def _priced_costs(self, grp, w_vec):
        # S~[k, m] = cost sum per mode including shadow prices on priced links
        if self.w_links and grp.wmat is not None and np.any(w_vec):
            s = grp.base.copy()
            contrib = grp.wmat * w_vec
            for j in range(len(self.w_links)):
                s[:, self.link_modes[j]] += contrib[:, j]
            return s
        return grp.base

    @staticmethod
    def _softmax_terms(v):
        m = np.max(v)
        ez = np.exp(v - m)
        z = ez.sum()
        logp = (v - m) - math.log(z)
        return logp, ez / z

    def value(self, theta_vec: np.ndarray, w_vec: np.ndarray) -> float:
        total = 0.0
        for grp in self.groups:
            logp, _ = self._softmax_terms(-(self._priced_costs(grp, w_vec) @ theta_vec))
            total += float(grp.counts @ logp)
        return total

    def check_underflow(self, theta_vec, w_vec):
        for grp in self.groups:
            logp, _ = self._softmax_terms(-(self._priced_costs(grp, w_vec) @ theta_vec))
            for obs in grp.observations:
                if logp[obs.chosen] < _LOG_UNDERFLOW:
                    raise EstimationError(
                        f"probability of chosen route underflows to zero for "
                        f"observation (t={obs.interval}, od={grp.od}, chosen={obs.chosen})"
                    )

    def value_grad_theta(self, theta_vec, w_vec):
        total = 0.0
        grad = np.zeros(len(self.modes))
        for grp in self.groups:
            s = self._priced_costs(grp, w_vec)
            logp, p = self._softmax_terms(-(s @ theta_vec))
            total += float(grp.counts @ logp)
            grad += -(grp.counts @ s) + grp.n * (p @ s)
        return total, grad

    def value_grad_w(self, theta_vec, w_vec):
        total = 0.0
        grad = np.zeros(len(self.w_links))
        theta_per_link = theta_vec[self.link_modes] if self.w_links else np.zeros(0)
        for grp in self.groups:
            s = self._priced_costs(grp, w_vec)
            logp, p = self._softmax_terms(-(s @ theta_vec))
            total += float(grp.counts @ logp)
            if grp.wmat is not None and self.w_links:
                grad += -theta_per_link * (grp.counts @ grp.wmat - grp.n * (p @ grp.wmat))
        return total, grad

    def theta_problem(self, w_vec):
        """(value, value_grad) closures over theta with priced costs frozen."""
        frozen = [
            (self._priced_costs(grp, w_vec), grp.counts, grp.n) for grp in self.groups
        ]
        counts_s = [c @ s for s, c, _ in frozen]

        def value(theta_vec):
            total = 0.0
            for s, counts, _ in frozen:
                logp, _ = self._softmax_terms(-(s @ theta_vec))
                total += float(counts @ logp)
            return total

        def value_grad(theta_vec):
            total = 0.0
            grad = np.zeros(len(self.modes))
            for (s, counts, n), cs in zip(frozen, counts_s):
                logp, p = self._softmax_terms(-(s @ theta_vec))
                total += float(counts @ logp)
                grad += -cs + n * (p @ s)
            return total, grad

        return value, value_grad

    def w_problem(self, theta_vec):
        """(value, value_grad) closures over w with base utilities frozen."""
        theta_per_link = theta_vec[self.link_modes] if self.w_links else np.zeros(0)
        frozen = []
        for grp in self.groups:
            base_v = -(grp.base @ theta_vec)
            wmat = grp.wmat if grp.wmat is not None else np.zeros((len(grp.counts), 0))
            frozen.append((base_v, wmat, grp.counts @ wmat, grp.counts, grp.n))

        def value(w_vec):
            tw = theta_per_link * w_vec
            total = 0.0
            for base_v, wmat, _, counts, _ in frozen:
                logp, _ = self._softmax_terms(base_v - wmat @ tw)
                total += float(counts @ logp)
            return total

        def value_grad(w_vec):
            tw = theta_per_link * w_vec
            total = 0.0
            grad = np.zeros(len(self.w_links))
            for base_v, wmat, cw, counts, n in frozen:
                logp, p = self._softmax_terms(base_v - wmat @ tw)
                total += float(counts @ logp)
                grad += -theta_per_link * (cw - n * (p @ wmat))
            return total, grad

        return value, value_grad

    def touched_links(self) -> frozenset[str]:
        touched = set()
        for grp in self.groups:
            if grp.wmat is None:
                continue
            used = np.nonzero(grp.wmat.sum(axis=0))[0]
            touched.update(self.w_links[j] for j in used)
        return frozenset(touched)

    def all_singleton(self) -> bool:
        return all(len(grp.counts) == 1 for grp in self.groups)


def log_likelihood(
    observations: Sequence[ChoiceObservation],
    theta: Dispersion,
    w: ShadowPriceVector,
    network: Network,
) -> float:
    """Weighted sum of log chosen-route probabilities.

    Singleton choice sets contribute exactly zero.  Raises if a chosen
    route's probability underflows to zero.
    """
    if not observations:
        return 0.0
    lik = _Likelihood(observations, network, w_links=tuple(sorted(w.prices)))
    tv, wv = lik._theta_vec(theta), lik._w_vec(w)
    lik.check_underflow(tv, wv)
    return lik.value(tv, wv)


def grad_theta(
    observations: Sequence[ChoiceObservation],
    theta: Dispersion,
    w: ShadowPriceVector,
    network: Network,
) -> dict[int, float]:
    """Analytic gradient of the log-likelihood with respect to each theta_m."""
    if not observations:
        return {}
    lik = _Likelihood(observations, network, w_links=tuple(sorted(w.prices)))
    _, g = lik.value_grad_theta(lik._theta_vec(theta), lik._w_vec(w))
    return {m: float(g[j]) for m, j in lik.mode_cols.items()}


def grad_w(
    observations: Sequence[ChoiceObservation],
    theta: Dispersion,
    w: ShadowPriceVector,
    network: Network,
    links: Sequence[str] | None = None,
) -> dict[str, float]:
    """Analytic gradient with respect to the shadow prices of ``links``.

    Defaults to the links carried by ``w``; entries for other links are
    absent by complementary slackness.
    """
    if links is None:
        links = tuple(sorted(w.prices))
    if not observations or not links:
        return {}
    lik = _Likelihood(observations, network, w_links=tuple(links))
    _, g = lik.value_grad_w(lik._theta_vec(theta), lik._w_vec(w))
    return {a: float(g[j]) for a, j in lik.link_cols.items()}


def estimate_theta(
    observations: Sequence[ChoiceObservation],
    network: Network,
    w: ShadowPriceVector | None = None,
    tie_modes: bool = False,
    theta0: float = 0.1,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    theta_max: float = THETA_MAX_DEFAULT,
) -> tuple[Dispersion, EstimationReport]:
    """Maximum likelihood dispersion parameters from uncongested choices.

    With ``tie_modes`` a single theta is shared by every mode (the
    case-study configuration); otherwise one parameter per mode present
    in the data.  Estimates are projected onto [0, theta_max]; hitting
    the cap indicates perfectly separable data and is reported as a
    warning.
    """
    if not observations:
        raise EstimationError("no observations")
    if w is None:
        w = zero_prices()
    lik = _Likelihood(observations, network, w_links=tuple(sorted(w.prices)))
    if lik.all_singleton():
        raise EstimationError(
            "all choice sets are singletons; the likelihood is flat in theta"
        )
    wv = lik._w_vec(w)
    n_modes = len(lik.modes)
    if tie_modes:
        expand = np.ones((n_modes, 1))
    else:
        expand = np.eye(n_modes)
    raw_value, raw_value_grad = lik.theta_problem(wv)

    def value(x):
        return raw_value(expand @ x)

    def value_grad(x):
        f, g = raw_value_grad(expand @ x)
        return f, expand.T @ g

    x0 = np.full(expand.shape[1], float(theta0))
    res = projected_ascent(value, value_grad, x0, lower=0.0, upper=theta_max,
                           tol=tol, max_iter=max_iter)
    x_final = res.x
    notes = []
    # a zero supremum of the log-likelihood means every chosen route can be
    # made certain: the MLE diverges upward and is reported at the cap
    total_weight = sum(obs.weight for obs in observations)
    separable = res.value >= -1e-8 * max(total_weight, 1.0)
    if separable or np.any(x_final >= theta_max * (1 - 1e-12)):
        x_final = np.full_like(res.x, theta_max)
        msg = (
            f"theta estimate capped at {theta_max:g}; data appear perfectly "
            "separable (deterministic cost perception)"
        )
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    if not res.converged:
        notes.append(f"not converged after {res.iterations} iterations")
    full = expand @ x_final
    if tie_modes:
        theta = Dispersion({m.index: float(full[0]) for m in network.modes})
    else:
        theta = Dispersion({m: float(full[j]) for m, j in lik.mode_cols.items()})
    report = EstimationReport(
        log_likelihood=res.value,
        iterations=res.iterations,
        grad_norm=res.grad_norm,
        converged=res.converged,
        warnings=tuple(notes),
    )
    return theta, report
