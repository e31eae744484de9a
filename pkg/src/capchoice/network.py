"""Directed multimodal networks, routes, and choice sets.

A network is a directed graph whose links are partitioned into modes
(index 0 is reserved for walking).  A link may carry a congestible
capacity channel: ``vehicle`` for available-unit capacities (bikes,
cars) or ``space`` for receiving capacities (docks, parking).  For every
link we precompute the four mode-local adjacency sets at its tail and
head nodes; the capacity dynamics are linear in flow sums over these
sets, with the link's own flow entering the outbound-tail and
inbound-head terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

CAPACITY_CHANNELS = ("none", "vehicle", "space")


class NetworkError(ValueError):
    """Inconsistent network definition (dangling node, duplicate id, ...)."""


class RouteError(ValueError):
    """Route references links that do not form a connected path."""


@dataclass(frozen=True)
class Mode:
    """A transport mode; index 0 denotes walking by convention."""

    index: int
    label: str

    def __post_init__(self):
        if self.index < 0:
            raise NetworkError(f"mode index must be nonnegative, got {self.index}")


@dataclass(frozen=True)
class Link:
    """A directed link with a fixed generalized cost.

    ``capacity_channel`` marks whether the link carries a congestible
    capacity and of which kind.  Virtual self-loops must be flagged
    explicitly.
    """

    id: str
    tail: str
    head: str
    mode: int
    cost: float
    capacity_channel: str = "none"
    self_loop: bool = False

    def __post_init__(self):
        if self.cost < 0:
            raise NetworkError(f"link {self.id!r}: cost must be nonnegative")
        if self.capacity_channel not in CAPACITY_CHANNELS:
            raise NetworkError(
                f"link {self.id!r}: unknown capacity channel {self.capacity_channel!r}"
            )
        if self.tail == self.head and not self.self_loop:
            raise NetworkError(
                f"link {self.id!r}: tail == head but not flagged as a self-loop"
            )

    @property
    def capacitated(self) -> bool:
        return self.capacity_channel != "none"


@dataclass(frozen=True)
class Incidence:
    """Mode-local adjacency of one link, excluding the link itself.

    ``in_tail`` holds same-mode links ending at the tail node, ``out_tail``
    same-mode links leaving the tail node, and analogously at the head.
    The owning link is excluded from all four tuples; the capacity
    dynamics re-add its flow to the outbound-tail and inbound-head sums.
    """

    in_tail: tuple[str, ...]
    out_tail: tuple[str, ...]
    in_head: tuple[str, ...]
    out_head: tuple[str, ...]


class Network:
    """Immutable directed multimodal graph with precomputed incidence.

    Construct through :func:`build_network`; instances are safe to share
    read-only across workers.
    """

    def __init__(self, nodes, links, modes, incidence):
        self._nodes = tuple(nodes)
        self._node_set = frozenset(self._nodes)
        self._links = dict(links)
        self._modes = tuple(modes)
        self._incidence = dict(incidence)

    @property
    def nodes(self) -> tuple[str, ...]:
        return self._nodes

    @property
    def modes(self) -> tuple[Mode, ...]:
        return self._modes

    @property
    def links(self) -> Mapping[str, Link]:
        return self._links

    def link(self, link_id: str) -> Link:
        try:
            return self._links[link_id]
        except KeyError:
            raise NetworkError(f"unknown link {link_id!r}") from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._node_set

    def incidence(self, link_id: str) -> Incidence:
        self.link(link_id)
        return self._incidence[link_id]

    def links_of_mode(self, mode: int) -> tuple[str, ...]:
        return tuple(a for a, lk in self._links.items() if lk.mode == mode)

    def capacitated_links(self) -> tuple[str, ...]:
        return tuple(a for a, lk in self._links.items() if lk.capacitated)

    def capacitated_modes(self) -> tuple[int, ...]:
        seen = []
        for lk in self._links.values():
            if lk.capacitated and lk.mode not in seen:
                seen.append(lk.mode)
        return tuple(sorted(seen))


def build_network(
    nodes: Iterable[str],
    links: Iterable[Link],
    modes: Sequence[Mode] | None = None,
) -> Network:
    """Assemble a :class:`Network`, validating references and computing incidence.

    Incidence sets are restricted to links of the owning link's mode and
    never contain the link itself.  When ``modes`` is omitted, a dense
    mode list 0..M is synthesized with index 0 labeled ``walk``.
    """
    node_ids = [str(n) for n in nodes]
    if len(set(node_ids)) != len(node_ids):
        raise NetworkError("duplicate node ids")
    node_set = set(node_ids)

    link_map: dict[str, Link] = {}
    for lk in links:
        if lk.id in link_map:
            raise NetworkError(f"duplicate link id {lk.id!r}")
        if lk.tail not in node_set:
            raise NetworkError(f"link {lk.id!r}: tail node {lk.tail!r} not declared")
        if lk.head not in node_set:
            raise NetworkError(f"link {lk.id!r}: head node {lk.head!r} not declared")
        link_map[lk.id] = lk

    if modes is None:
        max_mode = max((lk.mode for lk in link_map.values()), default=0)
        modes = tuple(
            Mode(i, "walk" if i == 0 else f"mode{i}") for i in range(max_mode + 1)
        )
    else:
        modes = tuple(modes)
        indices = [m.index for m in modes]
        if indices != list(range(len(modes))):
            raise NetworkError("mode indices must be dense 0..M in order")
        declared = set(indices)
        for lk in link_map.values():
            if lk.mode not in declared:
                raise NetworkError(f"link {lk.id!r}: undeclared mode {lk.mode}")

    incidence: dict[str, Incidence] = {}
    ordered = list(link_map.values())
    for lk in ordered:
        same_mode = [o for o in ordered if o.mode == lk.mode and o.id != lk.id]
        incidence[lk.id] = Incidence(
            in_tail=tuple(o.id for o in same_mode if o.head == lk.tail),
            out_tail=tuple(o.id for o in same_mode if o.tail == lk.tail),
            in_head=tuple(o.id for o in same_mode if o.head == lk.head),
            out_head=tuple(o.id for o in same_mode if o.tail == lk.head),
        )

    return Network(node_ids, link_map, modes, incidence)


@dataclass(frozen=True)
class Route:
    """An ordered, head-to-tail connected link sequence for one OD pair."""

    od: tuple[str, str]
    links: tuple[str, ...]
    mode_partition: Mapping[int, frozenset[str]] = field(hash=False)


def make_route(network: Network, od: tuple[str, str], link_ids: Sequence[str]) -> Route:
    """Build a route, computing its mode partition and validating connectivity."""
    link_ids = tuple(link_ids)
    partition: dict[int, set[str]] = {}
    for a in link_ids:
        if a not in network.links:
            raise RouteError(f"route references unknown link {a!r}")
        lk = network.link(a)
        partition.setdefault(lk.mode, set()).add(a)
    route = Route(
        od=(str(od[0]), str(od[1])),
        links=link_ids,
        mode_partition={m: frozenset(s) for m, s in sorted(partition.items())},
    )
    problem = validate_route(route, network)
    if problem is not None:
        raise RouteError(problem)
    return route


def validate_route(route: Route, network: Network) -> str | None:
    """Return a description of the first violation, or None if the route is valid."""
    r, s = route.od
    if not route.links:
        if r != s:
            return f"empty route for distinct OD ({r!r}, {s!r})"
        return None
    for a in route.links:
        if a not in network.links:
            return f"route references unknown link {a!r}"
    first = network.link(route.links[0])
    if first.tail != r:
        return f"first link {first.id!r} starts at {first.tail!r}, expected origin {r!r}"
    last = network.link(route.links[-1])
    if last.head != s:
        return f"last link {last.id!r} ends at {last.head!r}, expected destination {s!r}"
    for prev, nxt in zip(route.links, route.links[1:]):
        if network.link(prev).head != network.link(nxt).tail:
            return (
                f"broken junction between {prev!r} (head {network.link(prev).head!r}) "
                f"and {nxt!r} (tail {network.link(nxt).tail!r})"
            )
    seen: set[str] = set()
    for m, part in route.mode_partition.items():
        for a in part:
            if a not in route.links:
                return f"mode partition lists {a!r} which is not on the route"
            if network.link(a).mode != m:
                return f"link {a!r} assigned to mode {m} but has mode {network.link(a).mode}"
            seen.add(a)
    missing = [a for a in route.links if a not in seen]
    if missing:
        return f"mode partition omits link(s) {missing}"
    return None


def route_mode_costs(route: Route, network: Network) -> dict[int, float]:
    """Per-mode sums of link costs along the route; absent modes map to 0."""
    problem = validate_route(route, network)
    if problem is not None:
        raise RouteError(problem)
    out: dict[int, float] = {}
    for a in route.links:
        lk = network.link(a)
        out[lk.mode] = out.get(lk.mode, 0.0) + lk.cost
    return out


@dataclass(frozen=True)
class ChoiceSet:
    """The routes available to one OD pair, in a fixed order."""

    od: tuple[str, str]
    routes: tuple[Route, ...]

    def __post_init__(self):
        if not self.routes:
            raise RouteError(f"empty choice set for OD {self.od}")
        for rt in self.routes:
            if rt.od != self.od:
                raise RouteError(
                    f"route with OD {rt.od} in choice set for {self.od}"
                )

    def __len__(self) -> int:
        return len(self.routes)
