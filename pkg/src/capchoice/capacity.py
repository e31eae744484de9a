"""Congestible capacity dynamics: forecasting, OLS fitting, binding detection.

Capacities evolve linearly in the mode-local flow aggregates around each
capacitated link,

    u_hat[a,t] = u[a,t-1] + b_IT * sum(in_tail) - b_OT * (x_a + sum(out_tail))
                 - b_IH * (x_a + sum(in_head)) + b_OH * sum(out_head)

where the link's own flow enters both negative terms.  Two fitting
granularities are supported: ``per-mode`` shares the four coefficients
across every capacitated link of a mode, while ``per-link`` fits each
link's equation independently after collapsing slots whose signed link
sets coincide (on two-link corridor cycles this reduces to the familiar
two-coefficient inbound/outbound form).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as _sstats

from .network import Network

SLOTS = ("IT", "OT", "IH", "OH")
SLOT_SIGNS = {"IT": 1, "OT": -1, "IH": -1, "OH": 1}

GRANULARITIES = ("per-mode", "per-link")


class FitError(ValueError):
    """Capacity regression could not be carried out as requested."""


class RankDeficiencyError(FitError):
    """Design matrix is rank deficient; ``columns`` names the offending ones."""

    def __init__(self, message: str, columns: Sequence[str]):
        super().__init__(message)
        self.columns = tuple(columns)


class ForecastError(ValueError):
    """Forecast inputs are incomplete for the requested network."""


@dataclass(frozen=True)
class FlowSnapshot:
    """Non-separable link flows observed (or assumed) for one interval."""

    interval: int
    flows: Mapping[str, float]

    def __post_init__(self):
        for a, x in self.flows.items():
            if x < 0:
                raise ValueError(f"negative flow {x} on link {a!r}")

    def flow(self, link_id: str) -> float:
        return float(self.flows.get(link_id, 0.0))


@dataclass(frozen=True)
class CapacityVector:
    """Per-link capacities for one interval, tagged with their provenance."""

    interval: int
    capacities: Mapping[str, float]
    provenance: str = "observed_time_average"

    def __post_init__(self):
        if self.provenance not in ("observed_time_average", "forecast"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        for a, u in self.capacities.items():
            if u < 0:
                raise ValueError(f"negative capacity {u} on link {a!r}")


@dataclass(frozen=True)
class CoefficientStat:
    value: float
    stderr: float = float("nan")
    p_value: float = float("nan")


@dataclass(frozen=True)
class TermGroup:
    """One collapsed regression term of a per-link capacity equation.

    ``members`` are the link ids whose flows are summed, ``sign`` the
    direction in which the sum enters the capacity update, and ``slots``
    the incidence slots folded into the term.
    """

    sign: int
    members: tuple[str, ...]
    slots: tuple[str, ...]
    coef: CoefficientStat

    @property
    def name(self) -> str:
        return ("+" if self.sign > 0 else "-") + "{" + ",".join(self.members) + "}"


@dataclass
class EfficiencyModel:
    """Fitted (or ground-truth) system efficiency coefficients.

    ``mode_betas`` maps mode index -> slot -> coefficient for the
    per-mode form; ``link_groups`` maps link id -> collapsed term groups
    for the per-link form.  ``sigma`` holds per-link residual standard
    deviations.
    """

    granularity: str
    mode_betas: dict[int, dict[str, CoefficientStat]] = field(default_factory=dict)
    link_groups: dict[str, tuple[TermGroup, ...]] = field(default_factory=dict)
    sigma: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        for a, s in self.sigma.items():
            if s < 0:
                raise ValueError(f"negative sigma {s} for link {a!r}")


def slot_link_sets(network: Network, link_id: str) -> dict[str, tuple[str, ...]]:
    """The four link sets whose flow sums drive ``link_id``'s capacity update.

    The link's own flow is part of the outbound-tail and inbound-head sets.
    """
    inc = network.incidence(link_id)
    return {
        "IT": inc.in_tail,
        "OT": (link_id,) + inc.out_tail,
        "IH": (link_id,) + inc.in_head,
        "OH": inc.out_head,
    }


def collapse_slots(network: Network, link_id: str) -> tuple[tuple[int, tuple[str, ...], tuple[str, ...]], ...]:
    """Merge incidence slots of one link that carry identical signed link sets.

    Returns (sign, members, slots) triples; slots with empty sets are
    dropped.  Slot merging is structural, so it holds for every flow
    snapshot; on corridor cycles it reproduces the two-term collapsed
    capacity equations with summed coefficients.
    """
    sets = slot_link_sets(network, link_id)
    groups: dict[tuple[int, tuple[str, ...]], list[str]] = {}
    for slot in SLOTS:
        members = tuple(sorted(sets[slot]))
        if not members:
            continue
        key = (SLOT_SIGNS[slot], members)
        groups.setdefault(key, []).append(slot)
    return tuple(
        (sign, members, tuple(slots)) for (sign, members), slots in groups.items()
    )


def per_mode_model(
    betas: Mapping[int, Mapping[str, float]],
    sigma: Mapping[str, float] | None = None,
) -> EfficiencyModel:
    """Ground-truth per-mode model from plain coefficient values."""
    mode_betas = {
        int(m): {slot: CoefficientStat(float(vals[slot])) for slot in SLOTS}
        for m, vals in betas.items()
    }
    return EfficiencyModel(
        granularity="per-mode", mode_betas=mode_betas, sigma=dict(sigma or {})
    )


def per_link_model(
    network: Network,
    inout: Mapping[str, tuple[float, float]],
    sigma: Mapping[str, float] | None = None,
) -> EfficiencyModel:
    """Ground-truth per-link model from (inbound, outbound) coefficient pairs.

    Each link must collapse to exactly one positive and one negative term
    group; ``inout[a] = (b_in, b_out)`` assigns the positive-signed group
    b_in and the negative-signed group b_out.
    """
    link_groups: dict[str, tuple[TermGroup, ...]] = {}
    for a, (b_in, b_out) in inout.items():
        triples = collapse_slots(network, a)
        pos = [g for g in triples if g[0] > 0]
        neg = [g for g in triples if g[0] < 0]
        if len(pos) != 1 or len(neg) != 1:
            raise FitError(
                f"link {a!r} does not collapse to one inbound and one outbound term "
                f"({len(pos)} positive, {len(neg)} negative); build the model by fitting"
            )
        groups = []
        for sign, members, slots in triples:
            value = b_in if sign > 0 else b_out
            groups.append(TermGroup(sign, members, slots, CoefficientStat(float(value))))
        link_groups[a] = tuple(groups)
    return EfficiencyModel(
        granularity="per-link", link_groups=link_groups, sigma=dict(sigma or {})
    )


def _slot_sums(network: Network, link_id: str, x: FlowSnapshot) -> dict[str, float]:
    sets = slot_link_sets(network, link_id)
    return {slot: sum(x.flow(a) for a in sets[slot]) for slot in SLOTS}


def _predict_delta(model: EfficiencyModel, network: Network, link_id: str, x: FlowSnapshot) -> float:
    link = network.link(link_id)
    if model.granularity == "per-mode":
        betas = model.mode_betas.get(link.mode)
        if betas is None:
            raise ForecastError(
                f"no fitted coefficients for mode {link.mode} (link {link_id!r})"
            )
        sums = _slot_sums(network, link_id, x)
        return sum(SLOT_SIGNS[s] * betas[s].value * sums[s] for s in SLOTS)
    groups = model.link_groups.get(link_id)
    if groups is None:
        raise ForecastError(f"no fitted coefficients for link {link_id!r}")
    return sum(
        g.sign * g.coef.value * sum(x.flow(a) for a in g.members) for g in groups
    )


def forecast_capacity(
    u_prev: CapacityVector,
    x_hat: FlowSnapshot,
    model: EfficiencyModel,
    network: Network,
    clamp: bool = True,
) -> CapacityVector:
    """One-step capacity forecast for every capacitated link.

    The point forecast omits the disturbance term.  Negative forecasts
    are clamped to zero unless ``clamp`` is disabled (the pre-clamp values
    are exactly linear in the flow snapshot).
    """
    out: dict[str, float] = {}
    for a in network.capacitated_links():
        if a not in u_prev.capacities:
            raise ForecastError(f"missing prior capacity for link {a!r}")
        u = float(u_prev.capacities[a]) + _predict_delta(model, network, a, x_hat)
        out[a] = max(u, 0.0) if clamp else u
    if clamp:
        return CapacityVector(x_hat.interval, out, provenance="forecast")
    # bypass the nonnegativity check for diagnostic pre-clamp values
    vec = object.__new__(CapacityVector)
    object.__setattr__(vec, "interval", x_hat.interval)
    object.__setattr__(vec, "capacities", out)
    object.__setattr__(vec, "provenance", "forecast")
    return vec


def binding_set(
    x_hat: FlowSnapshot,
    u_hat: CapacityVector,
    epsilon: float = 1e-6,
) -> frozenset[str]:
    """Links whose forecast flow reaches capacity within tolerance.

    Links where the clamp left the forecast below the flow are binding by
    the same rule.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return frozenset(
        a for a, u in u_hat.capacities.items() if x_hat.flow(a) >= u - epsilon
    )


def _ols(X: np.ndarray, y: np.ndarray, names: Sequence[str]):
    n, k = X.shape
    if n <= k:
        raise FitError(f"{n} observations cannot identify {k} coefficients")
    rank = np.linalg.matrix_rank(X)
    if rank < k:
        offending = []
        for j in range(k):
            reduced = np.delete(X, j, axis=1)
            if np.linalg.matrix_rank(reduced) == rank:
                offending.append(names[j])
        raise RankDeficiencyError(
            f"rank-deficient design matrix (rank {rank} < {k}); "
            f"collinear or degenerate column(s): {offending}",
            offending,
        )
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = n - k
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = np.where(se > 0, beta / se, np.inf)
    pvals = 2.0 * _sstats.t.sf(np.abs(tvals), dof)
    return beta, se, pvals, resid


def _warn_out_of_range(names: Iterable[str], values: Iterable[float]):
    for name, v in zip(names, values):
        if not -1.0 <= v <= 1.0:
            warnings.warn(
                f"efficiency coefficient {name} = {v:.4f} lies outside [-1, 1]",
                stacklevel=3,
            )


def fit_efficiency(
    records: Sequence[tuple[Mapping[str, float], FlowSnapshot, Mapping[str, float]]],
    mode: int,
    network: Network,
    granularity: str = "per-mode",
    min_records: int = 5,
) -> EfficiencyModel:
    """OLS fit of the capacity-update coefficients for one mode.

    ``records`` holds (previous capacities, flow snapshot, observed
    capacities) per interval.  The regression target is the capacity
    change u[a,t] - u[a,t-1].  Coefficient standard errors and p-values
    are attached to the returned fragment; per-link residual standard
    deviations populate ``sigma``.
    """
    if granularity not in GRANULARITIES:
        raise ValueError(f"unknown granularity {granularity!r}")
    caps = [a for a in network.links_of_mode(mode) if network.link(a).capacitated]
    if not caps:
        raise FitError(f"mode {mode} owns no capacitated links")
    if len(records) < min_records:
        raise FitError(
            f"{len(records)} intervals of data; at least {min_records} required"
        )

    deltas: dict[str, np.ndarray] = {}
    for a in caps:
        try:
            deltas[a] = np.array(
                [float(obs[a]) - float(prev[a]) for prev, _, obs in records]
            )
        except KeyError as exc:
            raise FitError(f"record missing capacity for link {a!r}") from exc

    if granularity == "per-mode":
        rows = []
        ys = []
        for a in caps:
            for (prev, x, obs), dy in zip(records, deltas[a]):
                sums = _slot_sums(network, a, x)
                rows.append([SLOT_SIGNS[s] * sums[s] for s in SLOTS])
                ys.append(dy)
        names = [f"beta_{s}" for s in SLOTS]
        beta, se, pv, resid = _ols(np.array(rows), np.array(ys), names)
        _warn_out_of_range(names, beta)
        mode_betas = {
            mode: {
                s: CoefficientStat(float(beta[j]), float(se[j]), float(pv[j]))
                for j, s in enumerate(SLOTS)
            }
        }
        sigma = {}
        n = len(records)
        for i, a in enumerate(caps):
            r = resid[i * n : (i + 1) * n]
            sigma[a] = float(np.sqrt(np.mean(r * r)))
        return EfficiencyModel("per-mode", mode_betas=mode_betas, sigma=sigma)

    link_groups: dict[str, tuple[TermGroup, ...]] = {}
    sigma = {}
    for a in caps:
        triples = collapse_slots(network, a)
        if not triples:
            raise FitError(f"link {a!r} has no incident flow terms to regress on")
        X = np.empty((len(records), len(triples)))
        for i, (_, x, _) in enumerate(records):
            for j, (sign, members, _) in enumerate(triples):
                X[i, j] = sign * sum(x.flow(m) for m in members)
        names = [
            ("+" if sign > 0 else "-") + "{" + ",".join(members) + "}"
            for sign, members, _ in triples
        ]
        beta, se, pv, resid = _ols(X, deltas[a], names)
        _warn_out_of_range((f"{a}:{nm}" for nm in names), beta)
        link_groups[a] = tuple(
            TermGroup(sign, members, slots, CoefficientStat(float(beta[j]), float(se[j]), float(pv[j])))
            for j, (sign, members, slots) in enumerate(triples)
        )
        dof = max(len(records) - len(triples), 1)
        sigma[a] = float(np.sqrt(float(resid @ resid) / dof))
    return EfficiencyModel("per-link", link_groups=link_groups, sigma=sigma)


def fit_efficiency_all(
    records: Sequence[tuple[Mapping[str, float], FlowSnapshot, Mapping[str, float]]],
    network: Network,
    granularity: str = "per-mode",
    min_records: int = 5,
) -> EfficiencyModel:
    """Fit every mode that owns capacitated links and merge the fragments."""
    merged = EfficiencyModel(granularity)
    for mode in network.capacitated_modes():
        frag = fit_efficiency(records, mode, network, granularity, min_records)
        merged.mode_betas.update(frag.mode_betas)
        merged.link_groups.update(frag.link_groups)
        merged.sigma.update(frag.sigma)
    return merged
