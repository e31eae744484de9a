"""Route-choice learning for mobility services with congestible link capacities.

The package couples a multinomial logit route choice model with linear
capacity dynamics driven by non-separable link flows: dispersion
parameters and a system efficiency matrix are estimated offline, then a
per-interval online loop forecasts capacities, recovers nonnegative
shadow prices on binding links by constrained maximum likelihood, and
predicts route shares.
"""

from .capacity import (
    CapacityVector,
    CoefficientStat,
    EfficiencyModel,
    FitError,
    FlowSnapshot,
    ForecastError,
    RankDeficiencyError,
    TermGroup,
    binding_set,
    fit_efficiency,
    fit_efficiency_all,
    forecast_capacity,
    per_link_model,
    per_mode_model,
)
from .choice import (
    ChoiceObservation,
    Dispersion,
    EstimationError,
    EstimationReport,
    ShadowPriceVector,
    choice_probabilities,
    estimate_theta,
    grad_theta,
    grad_w,
    log_likelihood,
    logsum_consumer_surplus,
    representative_utility,
    zero_prices,
)
from .evaluate import (
    EvaluationError,
    ModelVariant,
    compare_models,
    match_score,
    nrmsd,
    standard_variants,
    surplus_monitor,
)
from .network import (
    ChoiceSet,
    Incidence,
    Link,
    Mode,
    Network,
    NetworkError,
    Route,
    RouteError,
    build_network,
    make_route,
    route_mode_costs,
    validate_route,
)
from .online import (
    IntervalRecord,
    IntervalResult,
    OnlineConfig,
    OnlineError,
    OnlineState,
    estimate_shadow_prices,
    initial_state,
    online_step,
    predict_route_shares,
    run_online,
)
from .simulate import (
    ScenarioConfig,
    SimulationError,
    SimulationResult,
    demand_shift_scenario,
    drive_bike_scenario,
    fig2_scenario,
    simulate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
