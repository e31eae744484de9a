import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from capchoice import (
    ChoiceObservation,
    ChoiceSet,
    Dispersion,
    Link,
    Mode,
    ShadowPriceVector,
    build_network,
    make_route,
)
from capchoice.simulate import drive_bike_choice_sets, drive_bike_network, fig2_network

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

THETA_PAPER = 0.0905


@pytest.fixture(scope="session")
def fig2_net():
    return fig2_network()


@pytest.fixture(scope="session")
def sec4_net():
    return drive_bike_network()


@pytest.fixture(scope="session")
def sec4_sets(sec4_net):
    return drive_bike_choice_sets(sec4_net)


@pytest.fixture(scope="session")
def two_path(sec4_net, sec4_sets):
    """The two-path instance: costs 30 and 35, tied dispersion 0.0905."""
    theta = Dispersion.tied(THETA_PAPER, [m.index for m in sec4_net.modes])
    return sec4_net, sec4_sets[("1", "4")], theta


def weighted_two_path_obs(choice_set, n1, n2, t=1):
    return [
        ChoiceObservation(t, choice_set, 0, weight=float(n1)),
        ChoiceObservation(t, choice_set, 1, weight=float(n2)),
    ]


def grid_search_1d(objective, lo=0.0, hi=10.0, step=1e-4):
    """Brute-force maximizer over a 1-D grid; the shadow-price oracle."""
    grid = np.arange(lo, hi + step, step)
    values = np.array([objective(w) for w in grid])
    return float(grid[int(np.argmax(values))])


def two_path_loglik(n1, n2, w, theta=THETA_PAPER, c1=30.0, c2=35.0):
    """Hand-written binary-logit log-likelihood for the two-path instance.

    Path 1 carries the shadow price; kept free of any package code so the
    grid oracle stays independent of the implementation it checks.
    Accepts scalar or array ``w``.
    """
    v1, v2 = -theta * (c1 + np.asarray(w, dtype=float)), -theta * c2
    m = np.maximum(v1, v2)
    z = np.exp(v1 - m) + np.exp(v2 - m)
    return n1 * (v1 - m - np.log(z)) + n2 * (v2 - m - np.log(z))


def random_choice_instance(seed):
    """A seeded random network + observations + parameters for gradient checks."""
    rng = np.random.default_rng(seed)
    n_routes = int(rng.integers(2, 5))
    n_modes = int(rng.integers(1, 4))
    nodes = ["o", "d"] + [f"m{k}" for k in range(n_routes)]
    links = []
    for k in range(n_routes):
        links.append(Link(f"up{k}", "o", f"m{k}", mode=int(rng.integers(0, n_modes)),
                          cost=float(rng.uniform(1, 20)),
                          capacity_channel="vehicle" if rng.random() < 0.5 else "none"))
        links.append(Link(f"dn{k}", f"m{k}", "d", mode=int(rng.integers(0, n_modes)),
                          cost=float(rng.uniform(1, 20)),
                          capacity_channel="space" if rng.random() < 0.5 else "none"))
    modes = tuple(Mode(i, "walk" if i == 0 else f"mode{i}") for i in range(n_modes))
    net = build_network(nodes, links, modes)
    routes = tuple(
        make_route(net, ("o", "d"), [f"up{k}", f"dn{k}"]) for k in range(n_routes)
    )
    cs = ChoiceSet(("o", "d"), routes)
    theta = Dispersion({m.index: float(rng.uniform(0.02, 0.5)) for m in modes})
    priced = [lk.id for lk in links if rng.random() < 0.4]
    w = ShadowPriceVector(1, {a: float(rng.uniform(0.0, 5.0)) for a in priced})
    observations = [
        ChoiceObservation(1, cs, int(rng.integers(0, n_routes)),
                          weight=float(rng.integers(1, 4)))
        for _ in range(int(rng.integers(3, 9)))
    ]
    return net, cs, theta, w, observations
