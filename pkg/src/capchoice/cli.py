"""Command line interface: simulate, fit-offline, run-online, ingest-trips,
evaluate, compare-models.

Every command takes ``--config`` (JSON) and ``--out`` (output directory);
identical configs and seeds produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluate as ev
from . import ingest as ing
from . import io as cio
from .capacity import CapacityVector, fit_efficiency_all
from .choice import Dispersion, ShadowPriceVector, estimate_theta
from .config import ConfigError, EngineConfig, load_config
from .ingest import parse_observation_frame
from .online import IntervalResult, StepDiagnostics, run_online
from .simulate import PRESETS, demand_shift_scenario, simulate


def _context(config: EngineConfig, args, data: Path):
    """(network, choice_sets) for estimation commands.

    With ``--network-dir`` the network comes from its CSV files and the
    choice sets are rebuilt from the observation frame's station pairs;
    otherwise the configured preset scenario supplies both.
    """
    network_dir = getattr(args, "network_dir", None)
    if network_dir:
        network = cio.load_network(
            Path(network_dir) / "nodes.csv", Path(network_dir) / "links.csv"
        )
        rows = cio.load_observation_frame(data / "observations.csv")
        choice_sets = ing.frame_choice_sets(network, rows)
        if not choice_sets:
            raise ConfigError("observations.csv yields no choice sets")
        return network, choice_sets
    scenario = _scenario(config)
    return scenario.network, scenario.choice_sets


def _scenario(config: EngineConfig):
    if config.scenario not in PRESETS:
        raise ConfigError(
            f"unknown scenario {config.scenario!r}; available: {sorted(PRESETS)}"
        )
    builder = PRESETS[config.scenario]
    kwargs = dict(
        theta=config.theta_true,
        seed=config.seed,
        intervals=config.intervals,
        noise_sigma=config.noise_sigma,
        reset_capacities=config.reset_capacities,
    )
    if config.u_initial is not None:
        kwargs["u_initial"] = {str(k): float(v) for k, v in config.u_initial.items()}
    scenario = builder(**kwargs)
    demand = config.demand_map()
    if demand is not None:
        scenario = demand_shift_scenario(scenario, demand)
    return scenario


def cmd_simulate(config: EngineConfig, out: Path, args) -> int:
    scenario = _scenario(config)
    result = simulate(scenario)
    cio.save_intervals(
        out / "intervals.csv", result.records, scenario.network, scenario.u_initial
    )
    rows = ing.observation_frame_from_records(
        scenario.network, scenario.choice_sets, result.records
    )
    cio.save_observation_frame(out / "observations.csv", rows)
    truth = {
        "label": scenario.label,
        "cost_only_shares": {
            f"{od[0]}->{od[1]}": list(shares)
            for od, shares in sorted(result.cost_only_shares.items())
        },
        "diversions": [[t, a] for t, a in result.diversions],
        "dropped": {
            f"{t}:{od[0]}->{od[1]}": n for (t, od), n in sorted(result.dropped.items())
        },
    }
    (out / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=2) + "\n")
    print(f"simulated {len(result.records)} intervals -> {out}")
    return 0


def cmd_fit_offline(config: EngineConfig, out: Path, args) -> int:
    data = Path(args.data)
    network, choice_sets = _context(config, args, data)
    initial, records = cio.load_intervals(data / "intervals.csv")
    if initial is None:
        raise ConfigError("intervals.csv lacks t=0 rows with initial capacities")
    triples = cio.fit_triples(initial, records, config.reset_capacities)
    efficiency = fit_efficiency_all(triples, network, config.granularity)

    theta_report = None
    if config.theta_fixed is not None:
        theta = Dispersion.tied(config.theta_fixed, [m.index for m in network.modes])
    else:
        rows = cio.load_observation_frame(data / "observations.csv")
        observations = parse_observation_frame(rows, choice_sets)
        theta, theta_report = estimate_theta(
            observations,
            network,
            tie_modes=config.tie_modes,
            tol=config.tol,
            max_iter=config.max_iter,
            theta_max=config.theta_max,
        )
    cio.save_offline(out / "offline.json", theta, efficiency, theta_report)
    print(f"offline artifacts -> {out / 'offline.json'}")
    return 0


def cmd_run_online(config: EngineConfig, out: Path, args) -> int:
    data = Path(args.data)
    network, choice_sets = _context(config, args, data)
    theta, efficiency = cio.load_offline(args.offline)
    initial, records = cio.load_intervals(data / "intervals.csv")
    if initial is None:
        raise ConfigError("intervals.csv lacks t=0 rows with initial capacities")
    rows = cio.load_observation_frame(data / "observations.csv")
    observations = parse_observation_frame(rows, choice_sets)
    by_t: dict[int, list] = {}
    for obs in observations:
        by_t.setdefault(obs.interval, []).append(obs)
    stream = [
        rec.__class__(rec.t, rec.flows, rec.capacities, tuple(by_t.get(rec.t, ())))
        for rec in records
    ]
    results, _ = run_online(
        theta, efficiency, initial, stream, network, choice_sets, config.online()
    )
    cio.save_online_results(out / "online_results.csv", results)
    cio.save_shares(out / "shares.csv", results)
    print(f"{len(results)} online intervals -> {out}")
    return 0


def cmd_ingest_trips(config: EngineConfig, out: Path, args) -> int:
    zones = ing.load_zones(args.zones)
    stations = ing.load_stations(args.stations)
    snet = ing.build_station_network(
        zones,
        stations,
        walk_speed_kmh=config.walk_speed_kmh,
        bike_speed_kmh=config.bike_speed_kmh,
        max_walk_m=config.max_walk_m,
    )
    trips, report = ing.parse_trips(args.trips, station_ids=[s.id for s in stations])
    agg = ing.aggregate_intervals(
        trips, snet.stations, interval_minutes=config.interval_minutes
    )
    od_list = sorted({(zo, zd) for (_, zo, zd) in agg.od_trips})
    choice_sets = {}
    skipped_ods = []
    for od in od_list:
        try:
            choice_sets.update(ing.build_choice_sets(snet, [od]))
        except ing.IngestError:
            skipped_ods.append(f"{od[0]}->{od[1]}")
    if not choice_sets:
        raise ConfigError("no OD has a feasible station pair within the walk radius")
    frame_rows, excluded = ing.emit_observation_frame(snet.network, choice_sets, agg)

    initial_bikes = {
        str(k): float(v) for k, v in (config.initial_bikes or {}).items()
    }
    inventory = ing.reconstruct_inventory(
        trips,
        initial_bikes,
        {s.id: s.rated_docks for s in stations},
        interval_minutes=config.interval_minutes,
        n_intervals=agg.n_intervals,
    )
    records = ing.interval_stream(snet, agg, inventory)
    initial = ing.initial_capacities(snet, initial_bikes)

    cio.save_network(snet.network, out / "nodes.csv", out / "links.csv")
    cio.save_observation_frame(out / "observations.csv", frame_rows)
    cio.save_intervals(out / "intervals.csv", records, snet.network, initial)
    summary = {
        "trips": report.kept,
        "skipped_malformed": report.malformed,
        "skipped_negative_duration": report.negative_duration,
        "skipped_external": report.external,
        "excluded_from_frame": excluded,
        "inventory_clip_events": inventory.clip_events,
        "intervals": agg.n_intervals,
        "ods": len(choice_sets),
        "ods_without_alternatives": skipped_ods,
    }
    (out / "ingest_report.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )
    print(f"ingested {report.kept} trips over {agg.n_intervals} intervals -> {out}")
    return 0


def cmd_evaluate(config: EngineConfig, out: Path, args) -> int:
    data = Path(args.data)
    network, choice_sets = _context(config, args, data)
    results_dir = Path(args.results)
    theta, efficiency = cio.load_offline(args.offline)
    initial, records = cio.load_intervals(data / "intervals.csv")
    online_rows = cio.read_csv_dicts(results_dir / "online_results.csv")

    observed: dict[str, list[float]] = {}
    forecast: dict[str, list[float]] = {}
    obs_by_t = {rec.t: rec for rec in records}
    for row in online_rows:
        t, a = int(row["t"]), row["link_id"]
        rec = obs_by_t.get(t)
        if rec is None or a not in rec.capacities.capacities:
            continue
        observed.setdefault(a, []).append(rec.capacities.capacities[a])
        forecast.setdefault(a, []).append(float(row["u_hat"]))
    metric_rows: list[tuple[str, str, float]] = []
    for a in sorted(observed):
        try:
            metric_rows.append(
                ("nrmsd", a, ev.nrmsd(observed[a], forecast[a], config.nrmsd_normalizer))
            )
        except ev.EvaluationError:
            continue

    frame_rows = cio.load_observation_frame(data / "observations.csv")
    observations = parse_observation_frame(frame_rows, choice_sets)
    share_rows = cio.read_csv_dicts(results_dir / "shares.csv")
    shares: dict[tuple[int, tuple[str, str]], dict[int, float]] = {}
    for row in share_rows:
        key = (int(row["t"]), (row["origin"], row["destination"]))
        shares.setdefault(key, {})[int(row["route_index"])] = float(row["probability"])
    predictions = []
    scored = []
    for obs in observations:
        probs = shares.get((obs.interval, obs.choice_set.od))
        if probs is None:
            continue
        predictions.append([probs[k] for k in range(len(obs.choice_set.routes))])
        scored.append(obs)
    if scored:
        series = ev.match_score(predictions, scored, config.match_window)
        metric_rows.append(("match_score", "overall", float(series[-1])))
    cio.save_metrics(out / "metrics.csv", metric_rows)

    by_t: dict[int, dict] = {}
    for row in online_rows:
        slot = by_t.setdefault(int(row["t"]), {"u": {}, "w": {}, "b": set()})
        slot["u"][row["link_id"]] = float(row["u_hat"])
        if row["binding"] == "1":
            slot["b"].add(row["link_id"])
        if float(row["w_hat"]) > 0:
            slot["w"][row["link_id"]] = float(row["w_hat"])
    pseudo = [
        IntervalResult(
            t=t,
            u_hat=CapacityVector(t, slot["u"], "forecast"),
            binding=frozenset(slot["b"]),
            w_hat=ShadowPriceVector(t, slot["w"]),
            predicted_shares={},
            realized=(),
            diagnostics=StepDiagnostics(0.0, 0, True, (), config.observation_lag),
        )
        for t, slot in sorted(by_t.items())
    ]
    surplus_rows = ev.surplus_monitor(pseudo, choice_sets, theta, network, ref_mode=0)
    cio.save_surplus(out / "surplus.csv", surplus_rows)
    print(f"metrics for {len(online_rows)} result rows -> {out}")
    return 0


def cmd_compare_models(config: EngineConfig, out: Path, args) -> int:
    data = Path(args.data)
    network, choice_sets = _context(config, args, data)
    theta, efficiency = cio.load_offline(args.offline)
    initial, records = cio.load_intervals(data / "intervals.csv")
    if initial is None:
        raise ConfigError("intervals.csv lacks t=0 rows with initial capacities")
    frame_rows = cio.load_observation_frame(data / "observations.csv")
    observations = parse_observation_frame(frame_rows, choice_sets)
    by_t: dict[int, list] = {}
    for obs in observations:
        by_t.setdefault(obs.interval, []).append(obs)
    stream = [
        rec.__class__(rec.t, rec.flows, rec.capacities, tuple(by_t.get(rec.t, ())))
        for rec in records
    ]
    rated = initial
    if config.rated_capacity is not None:
        rated = CapacityVector(
            0,
            {str(k): float(v) for k, v in config.rated_capacity.items()},
            "observed_time_average",
        )
    report = ev.compare_models(
        ev.standard_variants(config.theta),
        stream,
        network,
        choice_sets,
        initial,
        efficiency=efficiency,
        constant_capacity=rated,
        config=config.online(),
    )
    cio.save_model_comparison(out / "model_comparison.csv", report)
    for vid, score in sorted(report.final_scores().items()):
        print(f"{vid}: final match score {score:.2f}%")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-offline": cmd_fit_offline,
    "run-online": cmd_run_online,
    "ingest-trips": cmd_ingest_trips,
    "evaluate": cmd_evaluate,
    "compare-models": cmd_compare_models,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capchoice",
        description="Route-choice learning with congestible link capacities",
    )
    parser.add_argument("--config", help="JSON config file", default=None)
    parser.add_argument("--out", help="output directory", required=True)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="run a seeded scenario and write its data files")

    fit = sub.add_parser("fit-offline", help="estimate theta and the efficiency model")
    fit.add_argument("--data", required=True,
                     help="directory with intervals.csv and observations.csv")
    fit.add_argument("--network-dir", default=None,
                     help="directory with nodes.csv/links.csv (ingested data)")

    online = sub.add_parser("run-online", help="per-interval learning over a stream")
    online.add_argument("--data", required=True)
    online.add_argument("--offline", required=True, help="offline.json from fit-offline")
    online.add_argument("--network-dir", default=None)

    ingest = sub.add_parser("ingest-trips", help="build frames from trip records")
    ingest.add_argument("--trips", required=True)
    ingest.add_argument("--stations", required=True)
    ingest.add_argument("--zones", required=True)

    evaluate = sub.add_parser("evaluate", help="NRMSD, match score, surplus series")
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--results", required=True)
    evaluate.add_argument("--offline", required=True)
    evaluate.add_argument("--network-dir", default=None)

    compare = sub.add_parser("compare-models", help="four-variant comparison")
    compare.add_argument("--data", required=True)
    compare.add_argument("--offline", required=True)
    compare.add_argument("--network-dir", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config) if args.config else EngineConfig()
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](config, out, args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
