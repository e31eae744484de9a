"""Deterministic CSV and JSON readers/writers for every file interface.

Floats are written with shortest-roundtrip repr so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .capacity import (
    CapacityVector,
    CoefficientStat,
    EfficiencyModel,
    FlowSnapshot,
    TermGroup,
)
from .choice import Dispersion, EstimationReport
from .ingest import FRAME_COLUMNS
from .network import Link, Mode, Network, build_network
from .online import IntervalRecord, IntervalResult


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv_dicts(path) -> list[dict]:
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


# -- network files ---------------------------------------------------------

def save_network(network: Network, nodes_path, links_path) -> None:
    write_csv(nodes_path, ["id", "lat", "lon"], [[n, "", ""] for n in network.nodes])
    write_csv(
        links_path,
        ["id", "tail", "head", "mode", "cost", "capacity_channel"],
        [
            [lk.id, lk.tail, lk.head, lk.mode, lk.cost, lk.capacity_channel]
            for lk in network.links.values()
        ],
    )


def load_network(nodes_path, links_path) -> Network:
    nodes = [row["id"] for row in read_csv_dicts(nodes_path)]
    links = []
    for row in read_csv_dicts(links_path):
        links.append(
            Link(
                id=row["id"],
                tail=row["tail"],
                head=row["head"],
                mode=int(row["mode"]),
                cost=float(row["cost"]),
                capacity_channel=row.get("capacity_channel") or "none",
                self_loop=row["tail"] == row["head"],
            )
        )
    return build_network(nodes, links)


# -- interval records ------------------------------------------------------

def save_intervals(
    path,
    records: Sequence[IntervalRecord],
    network: Network,
    initial: CapacityVector | None = None,
) -> None:
    """Write (t, link_id, flow, capacity_observed) rows; t=0 rows hold the
    initial capacities."""
    caps = set(network.capacitated_links())
    rows = []
    if initial is not None:
        for a in sorted(initial.capacities):
            rows.append([0, a, 0.0, initial.capacities[a]])
    for rec in records:
        link_ids = sorted(set(rec.flows.flows) | set(rec.capacities.capacities))
        for a in link_ids:
            cap = rec.capacities.capacities.get(a) if a in caps else None
            rows.append([rec.t, a, rec.flows.flow(a), cap])
    write_csv(path, ["t", "link_id", "flow", "capacity_observed"], rows)


def load_intervals(path) -> tuple[CapacityVector | None, list[IntervalRecord]]:
    by_t: dict[int, tuple[dict, dict]] = {}
    for row in read_csv_dicts(path):
        t = int(row["t"])
        flows, caps = by_t.setdefault(t, ({}, {}))
        flows[row["link_id"]] = float(row["flow"])
        if row["capacity_observed"] != "":
            caps[row["link_id"]] = float(row["capacity_observed"])
    initial = None
    if 0 in by_t:
        _, caps0 = by_t.pop(0)
        initial = CapacityVector(0, caps0, "observed_time_average")
    records = []
    for t in sorted(by_t):
        flows, caps = by_t[t]
        records.append(
            IntervalRecord(
                t=t,
                flows=FlowSnapshot(t, flows),
                capacities=CapacityVector(t, caps, "observed_time_average"),
            )
        )
    return initial, records


def fit_triples(
    initial: CapacityVector,
    records: Sequence[IntervalRecord],
    reset_capacities: bool = False,
):
    """(u_prev, flows, u_obs) regression triples from an interval stream."""
    out = []
    for i, rec in enumerate(records):
        if i == 0 or reset_capacities:
            prev = dict(initial.capacities)
        else:
            prev = dict(records[i - 1].capacities.capacities)
        out.append((prev, rec.flows, dict(rec.capacities.capacities)))
    return out


# -- observation frame ------------------------------------------------------

def save_observation_frame(path, rows: Sequence[Mapping]) -> None:
    write_csv(path, FRAME_COLUMNS, [[row[c] for c in FRAME_COLUMNS] for row in rows])


def load_observation_frame(path) -> list[dict]:
    return read_csv_dicts(path)


# -- fitted model JSON -------------------------------------------------------

def _stat_to_json(stat: CoefficientStat) -> dict:
    return {"value": stat.value, "stderr": stat.stderr, "p_value": stat.p_value}


def _stat_from_json(blob) -> CoefficientStat:
    return CoefficientStat(
        float(blob["value"]), float(blob["stderr"]), float(blob["p_value"])
    )


def efficiency_to_json(model: EfficiencyModel) -> dict:
    return {
        "granularity": model.granularity,
        "mode_betas": {
            str(m): {slot: _stat_to_json(s) for slot, s in slots.items()}
            for m, slots in model.mode_betas.items()
        },
        "link_groups": {
            a: [
                {
                    "sign": g.sign,
                    "members": list(g.members),
                    "slots": list(g.slots),
                    **_stat_to_json(g.coef),
                }
                for g in groups
            ]
            for a, groups in model.link_groups.items()
        },
        "sigma": dict(model.sigma),
    }


def efficiency_from_json(blob: Mapping) -> EfficiencyModel:
    return EfficiencyModel(
        granularity=blob["granularity"],
        mode_betas={
            int(m): {slot: _stat_from_json(s) for slot, s in slots.items()}
            for m, slots in blob.get("mode_betas", {}).items()
        },
        link_groups={
            a: tuple(
                TermGroup(
                    sign=int(g["sign"]),
                    members=tuple(g["members"]),
                    slots=tuple(g["slots"]),
                    coef=CoefficientStat(
                        float(g["value"]), float(g["stderr"]), float(g["p_value"])
                    ),
                )
                for g in groups
            )
            for a, groups in blob.get("link_groups", {}).items()
        },
        sigma={a: float(s) for a, s in blob.get("sigma", {}).items()},
    )


def report_to_json(report: EstimationReport | None) -> dict | None:
    if report is None:
        return None
    return {
        "log_likelihood": report.log_likelihood,
        "iterations": report.iterations,
        "grad_norm": report.grad_norm,
        "converged": report.converged,
        "warnings": list(report.warnings),
    }


def save_offline(path, theta: Dispersion, efficiency: EfficiencyModel,
                 theta_report: EstimationReport | None = None) -> None:
    blob = {
        "theta": {str(m): v for m, v in theta.theta.items()},
        "theta_report": report_to_json(theta_report),
        "efficiency": efficiency_to_json(efficiency),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(blob, sort_keys=True, indent=2) + "\n")


def load_offline(path) -> tuple[Dispersion, EfficiencyModel]:
    blob = json.loads(Path(path).read_text())
    theta = Dispersion({int(m): float(v) for m, v in blob["theta"].items()})
    return theta, efficiency_from_json(blob["efficiency"])


# -- online outputs ----------------------------------------------------------

def save_online_results(path, results: Sequence[IntervalResult]) -> None:
    rows = []
    for res in results:
        for a in sorted(res.u_hat.capacities):
            rows.append([
                res.t,
                a,
                res.u_hat.capacities[a],
                1 if a in res.binding else 0,
                res.w_hat.prices.get(a, 0.0),
            ])
    write_csv(path, ["t", "link_id", "u_hat", "binding", "w_hat"], rows)


def save_shares(path, results: Sequence[IntervalResult]) -> None:
    rows = []
    for res in results:
        for od in sorted(res.predicted_shares):
            for k, p in enumerate(res.predicted_shares[od]):
                rows.append([res.t, od[0], od[1], k, p])
    write_csv(path, ["t", "origin", "destination", "route_index", "probability"], rows)


def save_model_comparison(path, report) -> None:
    rows = []
    for vid in sorted(report.outcomes):
        for t, score, loglik in report.outcomes[vid].interval_scores:
            rows.append([vid, t, score, loglik])
    write_csv(path, ["variant", "interval", "match_score", "loglik"], rows)


def save_surplus(path, rows: Sequence[Mapping]) -> None:
    write_csv(
        path,
        ["t", "od", "route", "base_cost", "effective_cost", "delta_cs"],
        [
            [r["t"], r["od"], r["route"], r["base_cost"], r["effective_cost"], r["delta_cs"]]
            for r in rows
        ],
    )


def save_metrics(path, rows: Sequence[tuple[str, str, float]]) -> None:
    write_csv(path, ["metric", "key", "value"], rows)
