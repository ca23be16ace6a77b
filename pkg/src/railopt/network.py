"""Microscopic control-area model: track circuits, routes, block sections.

A network file is JSON; routes enumerate their track circuits explicitly and
state their block sections as contiguous, 0-based inclusive index ranges.
All derived topology (predecessors, successors, switch flags, block-section
references, signal flags) is recomputed from the routes, never stored.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

UP, DOWN = "up", "down"

# synthetic boundary sentinels; never valid track-circuit ids
TC_ENTRY = "tc0"
TC_EXIT = "tc_inf"


class NetworkError(ValueError):
    """Malformed network file or broken referential integrity."""


def _natkey(s):
    return [int(p) if p.isdigit() else p for p in re.split(r"(\d+)", s)]


@dataclass(frozen=True)
class DirectionAttrs:
    length_m: float
    vmax_kmh: float


@dataclass(frozen=True)
class TrackCircuitAttrs:
    id: str
    is_platform: bool = False
    has_switch: bool = False
    up: DirectionAttrs | None = None
    down: DirectionAttrs | None = None

    def direction(self, d):
        return self.up if d == UP else self.down


@dataclass(frozen=True)
class Route:
    id: str
    direction: str
    tcs: tuple[str, ...]
    block_sections: tuple[tuple[int, int], ...]  # inclusive index ranges
    entry: str
    exit: str

    @property
    def entry_tc(self):
        return self.tcs[0]

    @property
    def exit_tc(self):
        return self.tcs[-1]


@dataclass(frozen=True)
class RouteTopology:
    """Per-(route, tc) derived quantities used by every constraint builder."""
    pred: dict[tuple[str, str], str]
    succ: dict[tuple[str, str], str]
    pred_set: dict[tuple[str, str], tuple[str, ...]]
    sw_open: dict[tuple[str, str], bool]
    sw_close: dict[tuple[str, str], bool]
    bs: dict[tuple[str, str], int]
    ref: dict[tuple[str, str], str]
    sig: dict[tuple[str, str], bool]

    def block_tcs(self, route: Route, bs_index: int):
        lo, hi = route.block_sections[bs_index]
        return route.tcs[lo:hi + 1]


@dataclass(frozen=True)
class Network:
    name: str
    track_circuits: dict[str, TrackCircuitAttrs]
    routes: tuple[Route, ...]
    topology: RouteTopology
    entry_points: tuple[str, ...]
    exit_points: tuple[str, ...]
    stations: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def route(self, route_id) -> Route:
        for r in self.routes:
            if r.id == route_id:
                return r
        raise KeyError(route_id)

    def routes_between(self, entry, exit):
        return [r for r in self.routes if r.entry == entry and r.exit == exit]


def derive_topology(routes: tuple[Route, ...]) -> RouteTopology:
    pred, succ, pred_set = {}, {}, {}
    bs, ref, sig = {}, {}, {}
    for r in routes:
        for i, tc in enumerate(r.tcs):
            key = (r.id, tc)
            pred[key] = r.tcs[i - 1] if i > 0 else TC_ENTRY
            succ[key] = r.tcs[i + 1] if i < len(r.tcs) - 1 else TC_EXIT
            pred_set[key] = tuple(r.tcs[:i])
        for b, (lo, hi) in enumerate(r.block_sections):
            for i in range(lo, hi + 1):
                key = (r.id, r.tcs[i])
                bs[key] = b
                ref[key] = r.tcs[lo]
                sig[key] = i == hi  # the final section is signal-terminated too

    # Switch flags: per direction, compare distinct successors/predecessors of
    # a tc across all routes of that direction passing through it.
    succs_by_dir: dict[tuple[str, str], set] = {}
    preds_by_dir: dict[tuple[str, str], set] = {}
    for r in routes:
        for tc in r.tcs:
            k = (r.direction, tc)
            succs_by_dir.setdefault(k, set()).add(succ[(r.id, tc)])
            preds_by_dir.setdefault(k, set()).add(pred[(r.id, tc)])
    sw_open, sw_close = {}, {}
    for r in routes:
        for tc in r.tcs:
            k = (r.direction, tc)
            ns, np_ = len(succs_by_dir[k]), len(preds_by_dir[k])
            sw_open[(r.id, tc)] = ns > np_
            sw_close[(r.id, tc)] = np_ > ns
    return RouteTopology(pred, succ, pred_set, sw_open, sw_close, bs, ref, sig)


def _derive_stations(track_circuits, routes):
    """Group parallel platform tcs into stations.

    Two platforms belong to the same station when they share an adjacent tc
    on the same geographic side; up routes run west-to-east, so an up
    predecessor and a down successor both sit to the west."""
    platforms = [tc for tc, a in track_circuits.items() if a.is_platform]
    west = {tc: set() for tc in platforms}
    east = {tc: set() for tc in platforms}
    for r in routes:
        for i, tc in enumerate(r.tcs):
            if tc not in west:
                continue
            before = r.tcs[i - 1] if i > 0 else None
            after = r.tcs[i + 1] if i < len(r.tcs) - 1 else None
            w, e = (before, after) if r.direction == UP else (after, before)
            if w is not None:
                west[tc].add(w)
            if e is not None:
                east[tc].add(e)

    def same_station(a, b):
        return bool(west[a] & west[b]) or bool(east[a] & east[b])

    groups: list[set[str]] = []
    for tc in sorted(platforms, key=_natkey):
        merged = None
        for g in groups:
            if any(same_station(tc, other) for other in g):
                g.add(tc)
                merged = g
                break
        if merged is None:
            groups.append({tc})
    # a late tc can bridge two earlier groups
    changed = True
    while changed:
        changed = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if any(same_station(a, b) for a in groups[i] for b in groups[j]):
                    groups[i] |= groups.pop(j)
                    changed = True
                    break
            if changed:
                break
    groups.sort(key=lambda g: _natkey(min(g, key=_natkey)))
    return {f"S{i + 1}": tuple(sorted(g, key=_natkey)) for i, g in enumerate(groups)}


def validate_network(network: Network):
    """Invariant check; each violation names the offending entity."""
    violations = []
    for tc, attrs in network.track_circuits.items():
        if attrs.up is None and attrs.down is None:
            violations.append(f"track circuit {tc}: no direction present")
        for d in (UP, DOWN):
            da = attrs.direction(d)
            if da is not None and (da.length_m <= 0 or da.vmax_kmh <= 0):
                violations.append(f"track circuit {tc}: non-positive {d} length/vmax")
    for r in network.routes:
        if len(set(r.tcs)) != len(r.tcs):
            dup = next(tc for tc in r.tcs if r.tcs.count(tc) > 1)
            violations.append(f"route {r.id}: duplicated track circuit {dup}")
        for tc in r.tcs:
            attrs = network.track_circuits.get(tc)
            if attrs is None:
                violations.append(f"route {r.id}: unknown track circuit {tc}")
            elif attrs.direction(r.direction) is None:
                violations.append(
                    f"route {r.id}: track circuit {tc} lacks direction {r.direction}")
        covered = []
        for lo, hi in r.block_sections:
            covered.extend(range(lo, hi + 1))
        if covered != list(range(len(r.tcs))):
            violations.append(f"route {r.id}: block sections do not partition contiguously")
    return violations


def _build(name, track_circuits, routes) -> Network:
    topology = derive_topology(routes)
    entries = tuple(dict.fromkeys(r.entry for r in routes))
    exits = tuple(dict.fromkeys(r.exit for r in routes))
    return Network(name, track_circuits, routes, topology, entries, exits,
                   _derive_stations(track_circuits, routes))


def _parse_dir(obj, tc_id, d):
    if obj is None:
        return None
    try:
        return DirectionAttrs(float(obj["length_m"]), float(obj["vmax_kmh"]))
    except (KeyError, TypeError, ValueError) as e:
        raise NetworkError(f"track circuit {tc_id}: bad {d} attributes: {e}") from e


def parse_network(text: str) -> Network:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetworkError(f"not valid JSON: {e}") from e
    for fld in ("name", "track_circuits", "routes"):
        if fld not in raw:
            raise NetworkError(f"missing top-level field {fld!r}")
    tcs = {}
    for item in raw["track_circuits"]:
        if "id" not in item:
            raise NetworkError("track circuit without id")
        tc_id = str(item["id"])
        if tc_id in tcs:
            raise NetworkError(f"duplicate track circuit {tc_id}")
        tcs[tc_id] = TrackCircuitAttrs(
            tc_id,
            bool(item.get("platform", False)),
            bool(item.get("switch", False)),
            _parse_dir(item.get("up"), tc_id, UP),
            _parse_dir(item.get("down"), tc_id, DOWN),
        )
    routes = []
    for item in raw["routes"]:
        try:
            rid = str(item["id"])
            direction = item["direction"]
            tc_list = [str(t) for t in item["tcs"]]
            sections = tuple((int(lo), int(hi)) for lo, hi in item["block_sections"])
            entry, exit_ = str(item["entry"]), str(item["exit"])
        except (KeyError, TypeError, ValueError) as e:
            raise NetworkError(f"route {item.get('id', '?')}: bad schema: {e}") from e
        if direction not in (UP, DOWN):
            raise NetworkError(f"route {rid}: direction must be up or down")
        if not tc_list:
            raise NetworkError(f"route {rid}: empty route")
        for tc in tc_list:
            if tc not in tcs:
                raise NetworkError(f"route {rid}: dangling track circuit reference {tc}")
        routes.append(Route(rid, direction, tuple(tc_list), sections, entry, exit_))
    net = _build(str(raw["name"]), tcs, tuple(routes))
    problems = validate_network(net)
    if problems:
        raise NetworkError("; ".join(problems))
    return net


def serialize_network(network: Network) -> str:
    raw = {
        "name": network.name,
        "track_circuits": [
            {
                "id": tc,
                "platform": a.is_platform,
                "switch": a.has_switch,
                **({"up": {"length_m": a.up.length_m, "vmax_kmh": a.up.vmax_kmh}}
                   if a.up else {}),
                **({"down": {"length_m": a.down.length_m, "vmax_kmh": a.down.vmax_kmh}}
                   if a.down else {}),
            }
            for tc, a in sorted(network.track_circuits.items(), key=lambda kv: _natkey(kv[0]))
        ],
        "routes": [
            {
                "id": r.id,
                "direction": r.direction,
                "tcs": list(r.tcs),
                "block_sections": [list(b) for b in r.block_sections],
                "entry": r.entry,
                "exit": r.exit,
            }
            for r in network.routes
        ],
    }
    return json.dumps(raw, indent=2) + "\n"


def builtin_network(name: str) -> Network:
    """Bundled evaluation networks. 'A': 17 tcs / 8 routes; 'B': 17 tcs / 12 routes."""
    files = {"A": "network_a.json", "B": "network_b.json", "fig3": "network_fig3.json"}
    if name not in files:
        raise NetworkError(f"unknown built-in network {name!r} (expected one of {sorted(files)})")
    text = resources.files("railopt.data").joinpath(files[name]).read_text()
    return parse_network(text)


def load_network(name_or_path: str) -> Network:
    """Resolve a builtin name ('A', 'B', 'fig3') or a filesystem path."""
    try:
        return builtin_network(name_or_path)
    except NetworkError:
        pass
    try:
        with open(name_or_path) as fh:
            return parse_network(fh.read())
    except FileNotFoundError:
        raise NetworkError(f"unknown network {name_or_path!r}: not a builtin nor a file")
