"""Seeded synthetic zones, stations, and trips for pipeline and scale tests.

The geometry mimics a midtown grid: 17 zone centroids and 41 stations in
a ~3 km box, with trips drawn between stations weighted toward shorter
rides.  All draws are deterministic in the seed.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from capchoice.ingest import Station, Zone

BASE_LAT, BASE_LON = 40.750, -73.985
KM_PER_DEG_LAT = 111.32
KM_PER_DEG_LON = 84.3  # at ~40.75N


def make_zones_stations(seed=0, n_zones=17, n_stations=41):
    rng = np.random.default_rng(seed)
    zones = []
    cols = 5
    for z in range(n_zones):
        r, c = divmod(z, cols)
        lat = BASE_LAT + (r * 0.75) / KM_PER_DEG_LAT
        lon = BASE_LON + (c * 0.6) / KM_PER_DEG_LON
        zones.append(Zone(str(10000 + z * 100), lat, lon))
    stations = []
    for s in range(n_stations):
        lat = BASE_LAT + float(rng.uniform(-0.3, 3.0)) / KM_PER_DEG_LAT
        lon = BASE_LON + float(rng.uniform(-0.3, 2.7)) / KM_PER_DEG_LON
        nearest = min(
            zones, key=lambda z: (z.lat - lat) ** 2 + (z.lon - lon) ** 2
        )
        stations.append(
            Station(str(300 + s), lat, lon, nearest.id, int(rng.integers(20, 45)))
        )
    return zones, stations


def make_trips_frame(stations, n_trips=1000, seed=0,
                     start="2018-07-18 07:00:00", hours=5.0, bike_kmh=12.0):
    rng = np.random.default_rng(seed)
    start = pd.Timestamp(start)
    ids = [s.id for s in stations]
    coords = {s.id: (s.lat, s.lon) for s in stations}
    rows = []
    for _ in range(n_trips):
        i, j = rng.choice(len(ids), size=2, replace=False)
        si, sj = ids[int(i)], ids[int(j)]
        t0 = start + pd.Timedelta(seconds=float(rng.uniform(0, hours * 3600)))
        (la1, lo1), (la2, lo2) = coords[si], coords[sj]
        dist_km = float(
            np.hypot((la2 - la1) * KM_PER_DEG_LAT, (lo2 - lo1) * KM_PER_DEG_LON)
        )
        seconds = max(60.0, dist_km / bike_kmh * 3600.0 * float(rng.uniform(0.8, 1.3)))
        t1 = t0 + pd.Timedelta(seconds=seconds)
        rows.append({
            "tripduration": int(seconds),
            "starttime": t0.isoformat(sep=" "),
            "stoptime": t1.isoformat(sep=" "),
            "start station id": si,
            "start station latitude": la1,
            "start station longitude": lo1,
            "end station id": sj,
            "end station latitude": la2,
            "end station longitude": lo2,
            "bikeid": int(rng.integers(10000, 99999)),
        })
    return pd.DataFrame(rows)


def write_fixture(tmpdir, seed=0, n_trips=1000):
    zones, stations = make_zones_stations(seed=seed)
    trips = make_trips_frame(stations, n_trips=n_trips, seed=seed)
    zpath, spath, tpath = tmpdir / "zones.csv", tmpdir / "stations.csv", tmpdir / "trips.csv"
    pd.DataFrame(
        [{"id": z.id, "lat": z.lat, "lon": z.lon} for z in zones]
    ).to_csv(zpath, index=False)
    pd.DataFrame(
        [
            {"id": s.id, "lat": s.lat, "lon": s.lon, "zone": s.zone,
             "rated_docks": s.rated_docks}
            for s in stations
        ]
    ).to_csv(spath, index=False)
    trips.to_csv(tpath, index=False)
    return zpath, spath, tpath, zones, stations
