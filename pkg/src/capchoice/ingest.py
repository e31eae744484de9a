"""Trip-record pipeline: parsing, interval aggregation, choice-set building.

Reproduces the bikeshare case-study data preparation: trips are filtered
to the study stations, aggregated into fixed intervals at station and
zone level, and turned into one observation-frame row per (interval, OD,
pickup-station x drop-off-station alternative).  Station inventories are
reconstructed event-by-event to provide time-average pickup (bikes) and
drop-off (empty docks) capacities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import pandas as pd

from .capacity import CapacityVector, FlowSnapshot
from .choice import ChoiceObservation
from .network import ChoiceSet, Link, Mode, Network, Route, build_network, make_route
from .online import IntervalRecord

REQUIRED_TRIP_COLUMNS = ("starttime", "stoptime", "start station id", "end station id")

FRAME_COLUMNS = (
    "t",
    "Start CT",
    "End CT",
    "start.station id",
    "end.station id",
    "choice",
    "cost",
    "infreq",
    "outfreq",
    "out demand",
    "in demand",
)


class IngestError(ValueError):
    """Trip data cannot be parsed or assembled as requested."""


@dataclass(frozen=True)
class TripRecord:
    start_time: pd.Timestamp
    stop_time: pd.Timestamp
    start_station: str
    end_station: str
    duration: float

    def __post_init__(self):
        if self.stop_time < self.start_time:
            raise IngestError("trip stops before it starts")


@dataclass(frozen=True)
class Station:
    id: str
    lat: float
    lon: float
    zone: str
    rated_docks: int

    def __post_init__(self):
        if self.rated_docks <= 0:
            raise IngestError(f"station {self.id!r}: rated_docks must be positive")


@dataclass(frozen=True)
class Zone:
    id: str
    lat: float
    lon: float


@dataclass
class ParseReport:
    total_rows: int = 0
    kept: int = 0
    malformed: int = 0
    negative_duration: int = 0
    external: int = 0


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in kilometres."""
    rlat1, rlon1, rlat2, rlon2 = map(math.radians, (lat1, lon1, lat2, lon2))
    dlat = rlat2 - rlat1
    dlon = rlon2 - rlon1
    h = math.sin(dlat / 2) ** 2 + math.cos(rlat1) * math.cos(rlat2) * math.sin(dlon / 2) ** 2
    return 2.0 * 6371.0088 * math.asin(min(1.0, math.sqrt(h)))


def parse_trips(
    source,
    station_ids: Iterable[str] | None = None,
) -> tuple[list[TripRecord], ParseReport]:
    """Parse a published-format trips CSV, filtering to the study stations.

    Extra columns are ignored.  Malformed rows (unparseable timestamps or
    missing station ids) and rows stopping before they start are skipped
    and counted; trips with an endpoint outside ``station_ids`` are
    dropped as subnetwork-boundary flows.
    """
    frame = pd.read_csv(source, dtype=str)
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in REQUIRED_TRIP_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestError(f"trips file missing required column(s) {missing}")
    keep = set(str(s) for s in station_ids) if station_ids is not None else None

    report = ParseReport(total_rows=len(frame))
    trips: list[TripRecord] = []
    starts = pd.to_datetime(frame["starttime"], errors="coerce")
    stops = pd.to_datetime(frame["stoptime"], errors="coerce")
    for i in range(len(frame)):
        start, stop = starts.iloc[i], stops.iloc[i]
        s_id, e_id = frame["start station id"].iloc[i], frame["end station id"].iloc[i]
        if pd.isna(start) or pd.isna(stop) or pd.isna(s_id) or pd.isna(e_id):
            report.malformed += 1
            continue
        s_id, e_id = str(s_id).strip(), str(e_id).strip()
        if stop < start:
            report.negative_duration += 1
            continue
        if keep is not None and (s_id not in keep or e_id not in keep):
            report.external += 1
            continue
        trips.append(
            TripRecord(start, stop, s_id, e_id, float((stop - start).total_seconds()))
        )
    report.kept = len(trips)
    if not trips:
        raise IngestError("no valid trips after filtering")
    return trips, report


@dataclass
class IntervalAggregates:
    """Interval-indexed station and zone flow counts (intervals are 1-based)."""

    interval_minutes: int
    horizon_start: pd.Timestamp
    n_intervals: int
    station_out: dict[tuple[int, str], int] = field(default_factory=dict)
    station_in: dict[tuple[int, str], int] = field(default_factory=dict)
    zone_out: dict[tuple[int, str], int] = field(default_factory=dict)
    zone_in: dict[tuple[int, str], int] = field(default_factory=dict)
    od_trips: dict[tuple[int, str, str], list[tuple[str, str]]] = field(default_factory=dict)


def aggregate_intervals(
    trips: Sequence[TripRecord],
    stations: Mapping[str, Station],
    interval_minutes: int = 30,
    horizon_start: pd.Timestamp | None = None,
    n_intervals: int | None = None,
) -> IntervalAggregates:
    """Count station in/out frequencies and zone OD demand per interval.

    Departures are indexed by the trip's start interval, arrivals by its
    stop interval.  Trips outside an explicitly configured horizon raise;
    otherwise the horizon extends to cover all events.
    """
    if horizon_start is None:
        horizon_start = min(t.start_time for t in trips).normalize()
    delta = pd.Timedelta(minutes=interval_minutes)

    def interval_of(ts):
        return int((ts - horizon_start) // delta) + 1

    max_t = 0
    for trip in trips:
        if trip.start_station not in stations or trip.end_station not in stations:
            raise IngestError(
                f"trip references unknown station "
                f"{trip.start_station!r} or {trip.end_station!r}"
            )
        t_start, t_stop = interval_of(trip.start_time), interval_of(trip.stop_time)
        if t_start < 1 or (n_intervals is not None and t_stop > n_intervals):
            raise IngestError(
                f"trip at {trip.start_time} falls outside the configured horizon"
            )
        max_t = max(max_t, t_stop)

    agg = IntervalAggregates(
        interval_minutes=interval_minutes,
        horizon_start=horizon_start,
        n_intervals=n_intervals if n_intervals is not None else max_t,
    )
    for trip in trips:
        t_start, t_stop = interval_of(trip.start_time), interval_of(trip.stop_time)
        zs = stations[trip.start_station].zone
        ze = stations[trip.end_station].zone
        agg.station_out[(t_start, trip.start_station)] = (
            agg.station_out.get((t_start, trip.start_station), 0) + 1
        )
        agg.station_in[(t_stop, trip.end_station)] = (
            agg.station_in.get((t_stop, trip.end_station), 0) + 1
        )
        agg.zone_out[(t_start, zs)] = agg.zone_out.get((t_start, zs), 0) + 1
        agg.zone_in[(t_stop, ze)] = agg.zone_in.get((t_stop, ze), 0) + 1
        agg.od_trips.setdefault((t_start, zs, ze), []).append(
            (trip.start_station, trip.end_station)
        )
    return agg


def pickup_link(station_id: str) -> str:
    return f"pk:{station_id}"


def dropoff_link(station_id: str) -> str:
    return f"dp:{station_id}"


def ride_link(i: str, j: str) -> str:
    return f"rd:{i}:{j}"


def walk_link(src: str, dst: str) -> str:
    return f"w:{src}:{dst}"


@dataclass(frozen=True)
class StationNetwork:
    """Station/zone network plus the spatial metadata it was built from."""

    network: Network
    zones: Mapping[str, Zone]
    stations: Mapping[str, Station]
    zone_candidates: Mapping[str, tuple[str, ...]]
    walk_speed_kmh: float
    bike_speed_kmh: float


def build_station_network(
    zones: Sequence[Zone],
    stations: Sequence[Station],
    walk_speed_kmh: float = 5.0,
    bike_speed_kmh: float = 12.0,
    max_walk_m: float = 800.0,
) -> StationNetwork:
    """Zone-centroid / station graph with virtual pickup and drop-off links.

    Walk access links connect each zone centroid to stations within the
    walk radius; pickup links carry the vehicle (bikes) channel, drop-off
    links the space (docks) channel, and ride links connect every ordered
    station pair.  Costs are minutes from straight-line distances at the
    configured speeds.
    """
    zone_map = {z.id: z for z in zones}
    station_map = {s.id: s for s in stations}
    if len(zone_map) != len(zones):
        raise IngestError("duplicate zone ids")
    if len(station_map) != len(stations):
        raise IngestError("duplicate station ids")

    nodes = [z.id for z in zones]
    links: list[Link] = []
    for s in stations:
        nodes.extend([f"{s.id}:w", f"{s.id}:b"])
        links.append(Link(pickup_link(s.id), f"{s.id}:w", f"{s.id}:b", mode=1,
                          cost=0.0, capacity_channel="vehicle"))
        links.append(Link(dropoff_link(s.id), f"{s.id}:b", f"{s.id}:w", mode=1,
                          cost=0.0, capacity_channel="space"))

    candidates: dict[str, list[str]] = {z.id: [] for z in zones}
    for z in zones:
        for s in stations:
            dist_km = haversine_km(z.lat, z.lon, s.lat, s.lon)
            if dist_km * 1000.0 <= max_walk_m:
                minutes = dist_km / walk_speed_kmh * 60.0
                links.append(Link(walk_link(z.id, s.id), z.id, f"{s.id}:w",
                                  mode=0, cost=minutes))
                links.append(Link(walk_link(s.id, z.id), f"{s.id}:w", z.id,
                                  mode=0, cost=minutes))
                candidates[z.id].append(s.id)
    for i in stations:
        for j in stations:
            if i.id == j.id:
                continue
            minutes = haversine_km(i.lat, i.lon, j.lat, j.lon) / bike_speed_kmh * 60.0
            links.append(Link(ride_link(i.id, j.id), f"{i.id}:b", f"{j.id}:b",
                              mode=1, cost=minutes))

    net = build_network(nodes, links, (Mode(0, "walk"), Mode(1, "bike")))
    return StationNetwork(
        network=net,
        zones=zone_map,
        stations=station_map,
        zone_candidates={z: tuple(sorted(c)) for z, c in candidates.items()},
        walk_speed_kmh=walk_speed_kmh,
        bike_speed_kmh=bike_speed_kmh,
    )


def station_pair_route(
    snet: StationNetwork, od: tuple[str, str], pickup: str, dropoff: str
) -> Route:
    o, d = od
    return make_route(
        snet.network,
        od,
        [
            walk_link(o, pickup),
            pickup_link(pickup),
            ride_link(pickup, dropoff),
            dropoff_link(dropoff),
            walk_link(dropoff, d),
        ],
    )


def build_choice_sets(
    snet: StationNetwork,
    od_list: Sequence[tuple[str, str]],
) -> dict[tuple[str, str], ChoiceSet]:
    """Pickup x drop-off station alternatives for each zone OD pair.

    Candidate stations are those within the walk radius used to build the
    network; alternatives are ordered by (pickup, dropoff) id.
    """
    out: dict[tuple[str, str], ChoiceSet] = {}
    for od in od_list:
        o, d = od
        picks = snet.zone_candidates.get(o, ())
        drops = snet.zone_candidates.get(d, ())
        routes = []
        for i in picks:
            for j in drops:
                if i == j:
                    continue
                routes.append(station_pair_route(snet, od, i, j))
        if not routes:
            raise IngestError(f"no feasible station pair for OD {od}")
        out[od] = ChoiceSet(od, tuple(routes))
    return out


@dataclass
class InventoryTrace:
    """Per-interval time-average bikes per station, with clip accounting."""

    interval_minutes: int
    horizon_start: pd.Timestamp
    n_intervals: int
    avg_bikes: dict[tuple[int, str], float]
    clip_events: int
    final_bikes: dict[str, float]


def reconstruct_inventory(
    trips: Sequence[TripRecord],
    initial_bikes: Mapping[str, float],
    rated_docks: Mapping[str, int],
    interval_minutes: int = 30,
    horizon_start: pd.Timestamp | None = None,
    n_intervals: int | None = None,
) -> InventoryTrace:
    """Event-driven station inventory with per-interval time averages.

    Departures remove a bike at the trip start, arrivals add one at the
    trip stop; levels are clipped to [0, rated_docks] with clip events
    counted.  The per-interval value is the time average of the piecewise
    constant level, so one mid-interval departure from a 10-bike station
    averages 9.5.
    """
    if horizon_start is None:
        if not trips:
            raise IngestError("horizon_start required when there are no trips")
        horizon_start = min(t.start_time for t in trips).normalize()
    for sid, docks in rated_docks.items():
        if docks <= 0:
            raise IngestError(f"station {sid!r}: rated_docks must be positive")

    events: dict[str, list[tuple[pd.Timestamp, int]]] = {s: [] for s in rated_docks}
    last_event = horizon_start
    for trip in trips:
        for sid in (trip.start_station, trip.end_station):
            if sid not in rated_docks:
                raise IngestError(f"trip references unknown station {sid!r}")
        events[trip.start_station].append((trip.start_time, -1))
        events[trip.end_station].append((trip.stop_time, +1))
        last_event = max(last_event, trip.stop_time)

    delta = pd.Timedelta(minutes=interval_minutes)
    if n_intervals is None:
        n_intervals = max(1, int(math.ceil((last_event - horizon_start) / delta)))
    horizon_end = horizon_start + n_intervals * delta

    avg: dict[tuple[int, str], float] = {}
    clip_events = 0
    final: dict[str, float] = {}
    seconds = delta.total_seconds()
    for sid in sorted(rated_docks):
        level = float(initial_bikes.get(sid, rated_docks[sid] / 2.0))
        level = min(max(level, 0.0), float(rated_docks[sid]))
        area = [0.0] * (n_intervals + 1)

        def accumulate(start, end, value):
            cur = start
            while cur < end:
                t = int((cur - horizon_start) // delta) + 1
                bound = min(horizon_start + t * delta, end)
                if 1 <= t <= n_intervals:
                    area[t] += value * (bound - cur).total_seconds()
                cur = bound

        prev_ts = horizon_start
        for ts, change in sorted(events[sid], key=lambda e: (e[0], e[1])):
            ts = min(max(ts, horizon_start), horizon_end)
            accumulate(prev_ts, ts, level)
            new_level = level + change
            clipped = min(max(new_level, 0.0), float(rated_docks[sid]))
            if clipped != new_level:
                clip_events += 1
            level = clipped
            prev_ts = ts
        accumulate(prev_ts, horizon_end, level)
        for t in range(1, n_intervals + 1):
            avg[(t, sid)] = area[t] / seconds
        final[sid] = level
    return InventoryTrace(
        interval_minutes=interval_minutes,
        horizon_start=horizon_start,
        n_intervals=n_intervals,
        avg_bikes=avg,
        clip_events=clip_events,
        final_bikes=final,
    )


def interval_stream(
    snet: StationNetwork,
    agg: IntervalAggregates,
    inventory: InventoryTrace,
) -> list[IntervalRecord]:
    """Per-interval flow and capacity records for the estimation modules.

    Pickup-link capacity is the time-average bike count; drop-off-link
    capacity is rated docks minus that average.  Observations are left
    empty; attach them from the observation frame when needed.
    """
    if inventory.n_intervals < agg.n_intervals:
        raise IngestError("inventory trace shorter than the aggregation horizon")
    ride_counts: dict[tuple[int, str], int] = {}
    for (t, _, _), pairs in agg.od_trips.items():
        for i, j in pairs:
            key = (t, ride_link(i, j))
            ride_counts[key] = ride_counts.get(key, 0) + 1

    records = []
    for t in range(1, agg.n_intervals + 1):
        flows: dict[str, float] = {}
        for sid in sorted(snet.stations):
            out_c = agg.station_out.get((t, sid), 0)
            in_c = agg.station_in.get((t, sid), 0)
            if out_c:
                flows[pickup_link(sid)] = float(out_c)
            if in_c:
                flows[dropoff_link(sid)] = float(in_c)
        for (tt, lid), count in sorted(ride_counts.items()):
            if tt == t:
                flows[lid] = float(count)
        caps: dict[str, float] = {}
        for sid in sorted(snet.stations):
            bikes = inventory.avg_bikes[(t, sid)]
            docks = float(snet.stations[sid].rated_docks)
            caps[pickup_link(sid)] = bikes
            caps[dropoff_link(sid)] = docks - bikes
        records.append(
            IntervalRecord(
                t=t,
                flows=FlowSnapshot(t, flows),
                capacities=CapacityVector(t, caps, "observed_time_average"),
            )
        )
    return records


def initial_capacities(
    snet: StationNetwork, initial_bikes: Mapping[str, float] | None = None
) -> CapacityVector:
    initial_bikes = initial_bikes or {}
    caps = {}
    for sid in sorted(snet.stations):
        st = snet.stations[sid]
        bikes = float(initial_bikes.get(sid, st.rated_docks / 2.0))
        caps[pickup_link(sid)] = bikes
        caps[dropoff_link(sid)] = float(st.rated_docks) - bikes
    return CapacityVector(0, caps, "observed_time_average")


def route_station_pair(route: Route) -> tuple[str, str]:
    """Identify a route by its pickup/drop-off pair (first/last link as fallback)."""
    pk = next((a for a in route.links if a.startswith("pk:")), None)
    dp = next((a for a in route.links if a.startswith("dp:")), None)
    if pk is not None and dp is not None:
        return pk.split(":", 1)[1], dp.split(":", 1)[1]
    return route.links[0], route.links[-1]


def _route_cost(route: Route, network: Network) -> float:
    return sum(network.link(a).cost for a in route.links)


def emit_observation_frame(
    network: Network,
    choice_sets: Mapping[tuple[str, str], ChoiceSet],
    agg: IntervalAggregates,
    include_unchosen_ods: bool = False,
) -> tuple[list[dict], int]:
    """Observation-frame rows plus the count of excluded trips.

    Each observed trip contributes one block of the OD's alternatives
    with ``choice`` = 1 on the station pair it realized (trips map to
    their actual stations, the nearest by construction of the choice
    set).  Trips whose pair is not among the OD's alternatives are
    excluded and counted.  With ``include_unchosen_ods``, ODs without
    trips emit one all-zero block per interval.
    """
    rows: list[dict] = []
    excluded = 0
    pair_cache: dict[tuple[str, str], list[tuple[str, str]]] = {
        od: [route_station_pair(rt) for rt in cs.routes]
        for od, cs in choice_sets.items()
    }
    cost_cache: dict[tuple[str, str], list[float]] = {
        od: [_route_cost(rt, network) for rt in cs.routes]
        for od, cs in choice_sets.items()
    }

    def emit_block(t, od, chosen_pair):
        o, d = od
        for (i, j), cost in zip(pair_cache[od], cost_cache[od]):
            rows.append({
                "t": t,
                "Start CT": o,
                "End CT": d,
                "start.station id": i,
                "end.station id": j,
                "choice": 1 if (i, j) == chosen_pair else 0,
                "cost": cost,
                "infreq": agg.station_in.get((t, j), 0),
                "outfreq": agg.station_out.get((t, i), 0),
                "out demand": agg.zone_out.get((t, o), 0),
                "in demand": agg.zone_in.get((t, d), 0),
            })

    emitted: set[tuple[int, tuple[str, str]]] = set()
    for (t, zo, zd) in sorted(agg.od_trips):
        od = (zo, zd)
        pairs = agg.od_trips[(t, zo, zd)]
        if od not in choice_sets:
            excluded += len(pairs)
            continue
        valid = set(pair_cache[od])
        counts: dict[tuple[str, str], int] = {}
        for pair in pairs:
            if pair not in valid:
                excluded += 1
                continue
            counts[pair] = counts.get(pair, 0) + 1
        for pair in sorted(counts):
            for _ in range(counts[pair]):
                emit_block(t, od, pair)
        if counts:
            emitted.add((t, od))
    if include_unchosen_ods:
        for t in range(1, agg.n_intervals + 1):
            for od in sorted(choice_sets):
                if (t, od) not in emitted:
                    emit_block(t, od, None)
    return rows, excluded


def parse_observation_frame(
    rows: Sequence[Mapping],
    choice_sets: Mapping[tuple[str, str], ChoiceSet],
) -> list[ChoiceObservation]:
    """Rebuild weighted choice observations from frame rows.

    Rows are grouped by (t, Start CT, End CT); within a group every
    ``len(routes)`` consecutive rows form one block carrying at most one
    ``choice`` = 1.  Identical chosen alternatives merge into a single
    observation with summed weight; all-zero blocks are skipped.
    """
    grouped: dict[tuple[int, str, str], list[Mapping]] = {}
    order: list[tuple[int, str, str]] = []
    for row in rows:
        key = (int(row["t"]), str(row["Start CT"]), str(row["End CT"]))
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(row)

    observations: list[ChoiceObservation] = []
    for key in order:
        t, o, d = key
        od = (o, d)
        cs = choice_sets.get(od)
        if cs is None:
            raise IngestError(f"frame references OD {od} without a choice set")
        pairs = [route_station_pair(rt) for rt in cs.routes]
        index_of = {p: k for k, p in enumerate(pairs)}
        block_rows = grouped[key]
        size = len(cs.routes)
        if len(block_rows) % size != 0:
            raise IngestError(
                f"(t={t}, od={od}): {len(block_rows)} rows is not a multiple of "
                f"the {size}-alternative choice set"
            )
        weights: dict[int, float] = {}
        for b in range(len(block_rows) // size):
            block = block_rows[b * size : (b + 1) * size]
            chosen = [
                r for r in block if int(r["choice"]) == 1
            ]
            if len(chosen) > 1:
                raise IngestError(f"(t={t}, od={od}): block with multiple choices")
            if not chosen:
                continue
            pair = (str(chosen[0]["start.station id"]), str(chosen[0]["end.station id"]))
            if pair not in index_of:
                raise IngestError(
                    f"(t={t}, od={od}): chosen pair {pair} not in the choice set"
                )
            k = index_of[pair]
            weights[k] = weights.get(k, 0.0) + 1.0
        for k in sorted(weights):
            observations.append(ChoiceObservation(t, cs, k, weight=weights[k]))
    return observations


def observation_frame_from_records(
    network: Network,
    choice_sets: Mapping[tuple[str, str], ChoiceSet],
    records: Sequence[IntervalRecord],
) -> list[dict]:
    """Frame rows equivalent to simulator records (weights become blocks).

    Station frequencies are read off the per-interval link flows of the
    identifying pair links; zone demand is the total served weight of the
    OD in that interval.
    """
    rows: list[dict] = []
    for rec in records:
        by_od: dict[tuple[str, str], list[ChoiceObservation]] = {}
        for obs in rec.observations:
            by_od.setdefault(obs.choice_set.od, []).append(obs)
        for od in sorted(by_od):
            cs = choice_sets[od]
            pairs = [route_station_pair(rt) for rt in cs.routes]
            costs = [_route_cost(rt, network) for rt in cs.routes]
            total = sum(o.weight for o in by_od[od])
            for obs in sorted(by_od[od], key=lambda o: o.chosen):
                for _ in range(int(round(obs.weight))):
                    for k, ((i, j), cost) in enumerate(zip(pairs, costs)):
                        route = cs.routes[k]
                        rows.append({
                            "t": rec.t,
                            "Start CT": od[0],
                            "End CT": od[1],
                            "start.station id": i,
                            "end.station id": j,
                            "choice": 1 if k == obs.chosen else 0,
                            "cost": cost,
                            "infreq": int(rec.flows.flow(route.links[-1])),
                            "outfreq": int(rec.flows.flow(route.links[0])),
                            "out demand": int(total),
                            "in demand": int(total),
                        })
    return rows


def frame_choice_sets(
    network: Network,
    rows: Sequence[Mapping],
) -> dict[tuple[str, str], ChoiceSet]:
    """Rebuild station-pair choice sets from frame rows and link naming.

    Each OD's alternatives are taken, in order, from its first block of
    rows; the route for a (pickup, dropoff) pair follows the walk /
    pickup / ride / drop-off / walk naming convention of the station
    network builder.
    """
    out: dict[tuple[str, str], ChoiceSet] = {}
    seen_pairs: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for row in rows:
        od = (str(row["Start CT"]), str(row["End CT"]))
        pair = (str(row["start.station id"]), str(row["end.station id"]))
        if od in out:
            continue
        pairs = seen_pairs.setdefault(od, [])
        if pair in pairs:
            routes = tuple(
                make_route(network, od, [
                    walk_link(od[0], i), pickup_link(i), ride_link(i, j),
                    dropoff_link(j), walk_link(j, od[1]),
                ])
                for i, j in pairs
            )
            out[od] = ChoiceSet(od, routes)
        else:
            pairs.append(pair)
    for od, pairs in seen_pairs.items():
        if od not in out and pairs:
            routes = tuple(
                make_route(network, od, [
                    walk_link(od[0], i), pickup_link(i), ride_link(i, j),
                    dropoff_link(j), walk_link(j, od[1]),
                ])
                for i, j in pairs
            )
            out[od] = ChoiceSet(od, routes)
    return out


def load_zones(source) -> list[Zone]:
    frame = pd.read_csv(source, dtype=str)
    required = {"id", "lat", "lon"}
    if not required <= set(frame.columns):
        raise IngestError(f"zones file must have columns {sorted(required)}")
    return [
        Zone(str(r["id"]).strip(), float(r["lat"]), float(r["lon"]))
        for _, r in frame.iterrows()
    ]


def load_stations(source) -> list[Station]:
    frame = pd.read_csv(source, dtype=str)
    required = {"id", "lat", "lon", "zone", "rated_docks"}
    if not required <= set(frame.columns):
        raise IngestError(f"stations file must have columns {sorted(required)}")
    return [
        Station(
            str(r["id"]).strip(),
            float(r["lat"]),
            float(r["lon"]),
            str(r["zone"]).strip(),
            int(float(r["rated_docks"])),
        )
        for _, r in frame.iterrows()
    ]
