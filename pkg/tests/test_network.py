import dataclasses

import pytest
from hypothesis import given, strategies as st

from capchoice import (
    Link,
    Mode,
    NetworkError,
    RouteError,
    build_network,
    make_route,
    route_mode_costs,
    validate_route,
)


def test_fig2_incidence_collapse(fig2_net):
    inc = fig2_net.incidence("a")
    assert inc.in_tail == ("c",)
    assert inc.out_head == ("c",)
    # the stored sets exclude the link itself; its own flow enters the
    # dynamics through the outbound-tail / inbound-head sums
    assert inc.out_tail == ()
    assert inc.in_head == ()


def test_isolated_link_has_empty_incidence():
    net = build_network(["u", "v"], [Link("solo", "u", "v", mode=0, cost=1.0)])
    inc = net.incidence("solo")
    assert inc.in_tail == inc.out_tail == inc.in_head == inc.out_head == ()


def test_three_node_chain_incidence():
    net = build_network(
        ["1", "2", "3"],
        [Link("a", "1", "2", mode=0, cost=1.0), Link("b", "2", "3", mode=0, cost=1.0)],
    )
    assert net.incidence("a").in_head == ()
    assert net.incidence("a").out_head == ("b",)
    assert net.incidence("b").in_tail == ("a",)


def test_build_network_rejects_dangling_node():
    with pytest.raises(NetworkError, match="not declared"):
        build_network(["1"], [Link("a", "1", "2", mode=0, cost=1.0)])


def test_build_network_rejects_duplicate_link_id():
    links = [
        Link("a", "1", "2", mode=0, cost=1.0),
        Link("a", "2", "1", mode=0, cost=1.0),
    ]
    with pytest.raises(NetworkError, match="duplicate link id"):
        build_network(["1", "2"], links)


def test_link_invariants():
    with pytest.raises(NetworkError, match="nonnegative"):
        Link("a", "1", "2", mode=0, cost=-1.0)
    with pytest.raises(NetworkError, match="self-loop"):
        Link("a", "1", "1", mode=0, cost=1.0)
    Link("loop", "1", "1", mode=0, cost=0.0, self_loop=True)


def test_route_mode_costs_two_path_totals(sec4_net, sec4_sets):
    path1, path2 = sec4_sets[("1", "4")].routes
    assert sum(route_mode_costs(path1, sec4_net).values()) == pytest.approx(30.0)
    assert sum(route_mode_costs(path2, sec4_net).values()) == pytest.approx(35.0)


def test_route_mode_costs_empty_route(sec4_net):
    route = make_route(sec4_net, ("1", "1"), [])
    assert route_mode_costs(route, sec4_net) == {}


def test_route_mode_costs_two_mode_split():
    net = build_network(
        ["o", "p", "q", "d"],
        [
            Link("w1", "o", "p", mode=0, cost=3.0),
            Link("bk", "p", "q", mode=1, cost=9.0),
            Link("w2", "q", "d", mode=0, cost=2.0),
        ],
    )
    route = make_route(net, ("o", "d"), ["w1", "bk", "w2"])
    assert route_mode_costs(route, net) == {0: 5.0, 1: 9.0}


def test_validate_route_ok_and_gap(sec4_net):
    ok = make_route(sec4_net, ("1", "4"), ["drive-", "walkpark-"])
    assert validate_route(ok, sec4_net) is None
    with pytest.raises(RouteError, match="broken junction"):
        make_route(sec4_net, ("1", "4"), ["drive-", "walkend-"])


def test_validate_route_partition_mutation(sec4_net):
    route = make_route(sec4_net, ("1", "4"), ["drive-", "walkpark-"])
    broken = dataclasses.replace(route, mode_partition={1: frozenset({"drive-"})})
    problem = validate_route(broken, sec4_net)
    assert problem is not None and "omits" in problem


def test_route_unknown_link(sec4_net):
    with pytest.raises(RouteError, match="unknown link"):
        make_route(sec4_net, ("1", "4"), ["drive-", "nope"])


@st.composite
def small_graphs(draw):
    n_nodes = draw(st.integers(2, 5))
    n_links = draw(st.integers(1, 8))
    n_modes = draw(st.integers(1, 3))
    nodes = [str(i) for i in range(n_nodes)]
    links = []
    for i in range(n_links):
        tail = draw(st.sampled_from(nodes))
        head = draw(st.sampled_from(nodes))
        links.append(
            Link(
                f"l{i}",
                tail,
                head,
                mode=draw(st.integers(0, n_modes - 1)),
                cost=1.0,
                self_loop=tail == head,
            )
        )
    modes = tuple(Mode(i, f"m{i}") for i in range(n_modes))
    return build_network(nodes, links, modes)


@given(small_graphs())
def test_incidence_matches_brute_force_scan(net):
    for a, lk in net.links.items():
        same_mode = [o for o in net.links.values() if o.mode == lk.mode and o.id != a]
        inc = net.incidence(a)
        assert set(inc.in_tail) == {o.id for o in same_mode if o.head == lk.tail}
        assert set(inc.out_tail) == {o.id for o in same_mode if o.tail == lk.tail}
        assert set(inc.in_head) == {o.id for o in same_mode if o.head == lk.head}
        assert set(inc.out_head) == {o.id for o in same_mode if o.tail == lk.head}


def test_mode_partition_is_a_partition(sec4_net, sec4_sets):
    for cs in sec4_sets.values():
        for route in cs.routes:
            parts = list(route.mode_partition.values())
            union = set().union(*parts) if parts else set()
            assert union == set(route.links)
            assert sum(len(p) for p in parts) == len(set(route.links))


def test_build_network_deterministic(fig2_net):
    rebuilt = build_network(
        fig2_net.nodes, list(fig2_net.links.values()), fig2_net.modes
    )
    assert list(rebuilt.links) == list(fig2_net.links)
    for a in fig2_net.links:
        assert rebuilt.incidence(a) == fig2_net.incidence(a)
