"""Trains, timetables and scenario generation.

The nominal (undelayed) schedule assumes constant-speed traversal capped by
each track circuit's local limit; dwell time is added on the platform of the
train's dwell station that the particular route passes.  Initial trains
(already inside the area) get their allowed routes truncated to the suffix
starting at their current location.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace

from .network import Network, Route, load_network, _natkey

KMH = 1.0 / 3.6  # km/h -> m/s


class ScenarioError(ValueError):
    pass


class GeneratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConstants:
    formation_s: float = 15.0
    release_s: float = 5.0
    overlap_s: float = 90.0

    def __post_init__(self):
        if min(self.formation_s, self.release_s, self.overlap_s) < 0:
            raise ScenarioError("formation/release/overlap times must be >= 0")


@dataclass(frozen=True)
class Train:
    id: str
    v_kmh: float
    length_m: float
    weight: float
    init_s: float
    tc_in: str
    tc_ex: str
    routes_allowed: tuple[str, ...]
    dwell: tuple[str, float] | None = None  # (station, seconds)
    initial_at: str | None = None

    @property
    def is_initial(self):
        return self.initial_at is not None

    def validate(self):
        if self.v_kmh <= 0 or self.length_m <= 0 or self.weight <= 0:
            raise ScenarioError(f"train {self.id}: v, length and weight must be positive")
        if self.init_s < 0:
            raise ScenarioError(f"train {self.id}: init must be >= 0")
        if not self.routes_allowed:
            raise ScenarioError(f"train {self.id}: no allowed routes")


@dataclass(frozen=True)
class RouteView:
    """Effective geometry and nominal times of one allowed route of one train.

    For initial trains this is the suffix from the current location, with the
    first (possibly partial) block re-referenced to the suffix head.
    """
    route_id: str
    direction: str
    tcs: tuple[str, ...]
    ds: dict[str, float]
    cl: dict[str, float]
    entry: dict[str, float]      # nominal entry time per tc
    bs: dict[str, int]
    ref: dict[str, str]
    sig: dict[str, bool]
    sw_open: dict[str, bool]
    sw_close: dict[str, bool]
    exit_time: float             # nominal time the tail leaves the area

    def pred(self, tc):
        i = self.tcs.index(tc)
        return self.tcs[i - 1] if i > 0 else None

    def succ(self, tc):
        i = self.tcs.index(tc)
        return self.tcs[i + 1] if i < len(self.tcs) - 1 else None

    def preds(self, tc):
        return self.tcs[:self.tcs.index(tc)]

    def ebs(self, tc):
        return self.bs[tc] == self.bs[self.tcs[0]]

    def block_tcs(self, bs_index):
        return tuple(tc for tc in self.tcs if self.bs[tc] == bs_index)

    def shat_r(self, tc, constants):  # undelayed reservation start
        return self.entry[self.ref[tc]] - constants.formation_s

    def ehat_r(self, tc, constants):  # undelayed reservation end
        return self.entry[self.ref[tc]] + self.cl[tc] + constants.release_s


@dataclass(frozen=True)
class TrainNominal:
    views: dict[str, RouteView]   # route id -> view
    timetable_route: str
    exit_s: float                 # scheduled exit = fastest unimpeded traversal


@dataclass(frozen=True)
class Scenario:
    network: Network
    trains: tuple[Train, ...]
    constants: ModelConstants
    nominal: dict[str, TrainNominal]
    big_m: float
    seed: int | None = None

    def train(self, tid) -> Train:
        for t in self.trains:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def views(self, tid) -> dict[str, RouteView]:
        return self.nominal[tid].views

    def tcs_of(self, tid):
        """TC^t: every track circuit reachable by some allowed route."""
        out: dict[str, None] = {}
        for view in self.nominal[tid].views.values():
            for tc in view.tcs:
                out[tc] = None
        return tuple(out)

    def exit_s(self, tid):
        return self.nominal[tid].exit_s

    def shared_tcs(self, t1, t2):
        s2 = set(self.tcs_of(t2))
        return tuple(tc for tc in self.tcs_of(t1) if tc in s2)


def _effective_speed(v_kmh, vmax_kmh):
    return min(v_kmh, vmax_kmh) * KMH


def _view_for_route(network: Network, route: Route, train: Train,
                    dwell_platforms, start_tc=None) -> RouteView:
    topo = network.topology
    tcs = route.tcs
    if start_tc is not None:
        if start_tc not in tcs:
            raise ScenarioError(
                f"train {train.id}: current location {start_tc} not on route {route.id}")
        tcs = tcs[tcs.index(start_tc):]
    ds, cl, entry = {}, {}, {}
    t_cursor = train.init_s
    for tc in tcs:
        attrs = network.track_circuits[tc].direction(route.direction)
        if attrs is None:
            raise ScenarioError(
                f"train {train.id}: route {route.id} uses {tc} in absent direction")
        v = _effective_speed(train.v_kmh, attrs.vmax_kmh)
        stay = attrs.length_m / v
        if train.dwell and tc in dwell_platforms:
            stay += train.dwell[1]
        ds[tc] = stay
        entry[tc] = t_cursor
        t_cursor += stay
    # re-base block sections onto the (possibly truncated) tc list
    raw_bs = {tc: topo.bs[(route.id, tc)] for tc in tcs}
    order = sorted(set(raw_bs.values()))
    bs = {tc: order.index(b) for tc, b in raw_bs.items()}
    ref = {}
    for tc in tcs:
        first = next(c for c in tcs if bs[c] == bs[tc])
        ref[tc] = first
    # clearing time: measured from block entry until the tail (length_m
    # behind the head) leaves tc, including any dwell up to that point
    for tc in tcs:
        attrs = network.track_circuits[tc].direction(route.direction)
        v = _effective_speed(train.v_kmh, attrs.vmax_kmh)
        run_from_ref = entry[tc] - entry[ref[tc]]
        cl[tc] = run_from_ref + ds[tc] + train.length_m / v
    sig = {tc: topo.sig[(route.id, tc)] for tc in tcs}
    return RouteView(
        route.id, route.direction, tcs, ds, cl, entry, bs, ref, sig,
        {tc: topo.sw_open[(route.id, tc)] for tc in tcs},
        {tc: topo.sw_close[(route.id, tc)] for tc in tcs},
        t_cursor,
    )


def compute_nominal(network: Network, train: Train, constants: ModelConstants) -> TrainNominal:
    train.validate()
    dwell_platforms = ()
    if train.dwell is not None:
        station, secs = train.dwell
        if station not in network.stations:
            raise ScenarioError(f"train {train.id}: unknown dwell station {station}")
        if secs < 0:
            raise ScenarioError(f"train {train.id}: negative dwell")
        dwell_platforms = network.stations[station]
    views = {}
    for rid in train.routes_allowed:
        route = network.route(rid)
        views[rid] = _view_for_route(network, route, train, dwell_platforms,
                                     start_tc=train.initial_at)
    # timetable route: fastest unimpeded traversal, ties by lowest route id
    timetable = min(views, key=lambda rid: (views[rid].exit_time, _natkey(rid)))
    return TrainNominal(views, timetable, views[timetable].exit_time)


def _check_routes(network: Network, train: Train):
    for rid in train.routes_allowed:
        route = network.route(rid)
        if train.initial_at is not None:
            if train.initial_at not in route.tcs:
                raise ScenarioError(
                    f"train {train.id}: route {rid} misses location {train.initial_at}")
        else:
            if route.entry_tc != train.tc_in or route.exit_tc != train.tc_ex:
                raise ScenarioError(
                    f"train {train.id}: route {rid} does not run {train.tc_in}->{train.tc_ex}")


def make_scenario(network: Network, trains, constants: ModelConstants | None = None,
                  seed=None) -> Scenario:
    constants = constants or ModelConstants()
    trains = tuple(trains)
    seen = set()
    for t in trains:
        if t.id in seen:
            raise ScenarioError(f"duplicate train id {t.id}")
        seen.add(t.id)
        _check_routes(network, t)
    nominal = {t.id: compute_nominal(network, t, constants) for t in trains}
    horizon = max((n.exit_s for n in nominal.values()), default=1.0)
    dwells = sum(t.dwell[1] for t in trains if t.dwell)
    big_m = 10.0 * math.ceil(horizon + dwells + constants.overlap_s
                             + constants.formation_s + constants.release_s)
    return Scenario(network, trains, constants, nominal, float(big_m), seed)


# -- serialization ------------------------------------------------------------

def serialize_scenario(scenario: Scenario) -> str:
    raw = {
        "network_name": scenario.network.name,
        "constants": {
            "formation_s": scenario.constants.formation_s,
            "release_s": scenario.constants.release_s,
            "overlap_s": scenario.constants.overlap_s,
        },
        "trains": [],
    }
    if scenario.seed is not None:
        raw["seed"] = scenario.seed
    for t in scenario.trains:
        item = {
            "id": t.id, "v_kmh": t.v_kmh, "length_m": t.length_m,
            "weight": t.weight, "init_s": t.init_s,
            "entry_tc": t.tc_in, "exit_tc": t.tc_ex,
            "routes_allowed": list(t.routes_allowed),
        }
        if t.dwell is not None:
            item["dwell"] = {"station": t.dwell[0], "seconds": t.dwell[1]}
        if t.initial_at is not None:
            item["initial_at"] = t.initial_at
        raw["trains"].append(item)
    return json.dumps(raw, indent=2) + "\n"


def parse_scenario(text: str, network: Network | None = None) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"not valid JSON: {e}") from e
    if network is None:
        try:
            network = load_network(str(raw.get("network_name", "")))
        except Exception as e:
            raise ScenarioError(f"cannot resolve network: {e}") from e
    c = raw.get("constants", {})
    constants = ModelConstants(
        float(c.get("formation_s", 15.0)),
        float(c.get("release_s", 5.0)),
        float(c.get("overlap_s", 90.0)),
    )
    trains = []
    for item in raw.get("trains", []):
        try:
            dwell = None
            if item.get("dwell") is not None:
                dwell = (str(item["dwell"]["station"]), float(item["dwell"]["seconds"]))
            trains.append(Train(
                str(item["id"]), float(item["v_kmh"]), float(item["length_m"]),
                float(item["weight"]), float(item["init_s"]),
                str(item["entry_tc"]), str(item["exit_tc"]),
                tuple(str(r) for r in item["routes_allowed"]),
                dwell,
                str(item["initial_at"]) if item.get("initial_at") is not None else None,
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f"train {item.get('id', '?')}: bad schema: {e}") from e
    return make_scenario(network, trains, constants, raw.get("seed"))


# -- random generation --------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    n_trains: int = 3
    v_bounds: tuple[float, float] = (50.0, 160.0)
    length_bounds: tuple[float, float] = (100.0, 300.0)
    weight_bounds: tuple[float, float] = (0.1, 100.0)
    init_bounds: tuple[float, float] = (0.0, 50.0)
    dwell_bounds: tuple[float, float] = (0.0, 180.0)
    p_dwell: float = 0.25
    p_initial: float = 0.20
    max_routes: int | None = None
    max_resample: int = 400
    certify_time_limit: float = 5.0

    def __post_init__(self):
        if self.n_trains < 1:
            raise ScenarioError("n_trains must be at least 1")
        for lo, hi in (self.v_bounds, self.length_bounds, self.weight_bounds,
                       self.init_bounds, self.dwell_bounds):
            if lo > hi:
                raise ScenarioError("generator bounds must be ordered")
        if not (0 <= self.p_dwell <= 1 and 0 <= self.p_initial <= 1):
            raise ScenarioError("probabilities must be in [0, 1]")
        if self.max_routes is not None and self.max_routes < 1:
            raise ScenarioError("max_routes must be at least 1")


def _draw_train(rng: random.Random, network: Network, config: GeneratorConfig, idx):
    od_pairs = sorted({(r.entry, r.exit) for r in network.routes})
    entry, exit_ = od_pairs[rng.randrange(len(od_pairs))]
    routes = sorted((r.id for r in network.routes_between(entry, exit_)), key=_natkey)
    v = rng.uniform(*config.v_bounds)
    length = rng.uniform(*config.length_bounds)
    weight = rng.uniform(*config.weight_bounds)
    init = rng.uniform(*config.init_bounds)
    initial_at = None
    if rng.random() < config.p_initial:
        candidates: dict[str, None] = {}
        for rid in routes:
            for tc in network.route(rid).tcs:
                candidates[tc] = None
        location = sorted(candidates, key=_natkey)[rng.randrange(len(candidates))]
        initial_at = location
        init = 0.0
        routes = [rid for rid in routes if location in network.route(rid).tcs]
    if config.max_routes is not None and len(routes) > config.max_routes:
        routes = sorted(rng.sample(routes, config.max_routes), key=_natkey)
    dwell = None
    if rng.random() < config.p_dwell:
        reachable = []
        for station, platforms in network.stations.items():
            psel = set(platforms)
            route_objs = [network.route(rid) for rid in routes]
            def _suffix(r):
                tcs = r.tcs
                if initial_at is not None:
                    tcs = tcs[tcs.index(initial_at):]
                return tcs
            if all(psel & set(_suffix(r)) for r in route_objs):
                reachable.append(station)
        if reachable:
            station = reachable[rng.randrange(len(reachable))]
            dwell = (station, rng.uniform(*config.dwell_bounds))
    route0 = network.route(routes[0])
    tcs0 = route0.tcs if initial_at is None else route0.tcs[route0.tcs.index(initial_at):]
    return Train(f"t{idx + 1}", v, length, weight, init, tcs0[0], tcs0[-1],
                 tuple(routes), dwell, initial_at)


def _initially_deadlocked(scenario: Scenario) -> bool:
    """Aggressive pre-filter for structurally dead draws: a train's overlap
    claim on the block after its entry block starts at its fixed entry time
    (no signal lies before it where the train could be held), so a train
    standing in that zone from time zero usually cannot be separated from the
    claim whatever the orders.  Rejecting such draws before the expensive
    certificate solve trades a little generator bias for a large speedup;
    drawn scenarios are still certified by an actual solve afterwards."""
    standing = [t for t in scenario.trains if t.initial_at is not None]
    if not standing:
        return False
    for t in scenario.trains:
        nexts = set()
        for view in scenario.views(t.id).values():
            first_bs = view.bs[view.tcs[0]]
            for tc in view.tcs:
                if view.bs[tc] != first_bs:
                    nexts.add(tc)
                    break
        for t2 in standing:
            if t2.id == t.id:
                continue
            held = set()
            for view2 in scenario.views(t2.id).values():
                held.update(view2.block_tcs(view2.bs[view2.tcs[0]]))
            if nexts & held:
                return True
    return False


def generate_scenario(network: Network, config: GeneratorConfig, seed: int,
                      constants: ModelConstants | None = None,
                      certify: bool | str = True) -> Scenario:
    """Uniform draws within config bounds; the emitted scenario is certified
    feasible under the overlap-extended model (resampling on failure), or
    only under the reference model when certify="reference".
    Deterministic for a fixed (network, config, seed)."""
    rng = random.Random(seed)
    constants = constants or ModelConstants()
    for _attempt in range(config.max_resample):
        trains = [_draw_train(rng, network, config, i) for i in range(config.n_trains)]
        try:
            scenario = make_scenario(network, trains, constants, seed)
        except ScenarioError:
            continue
        if not certify:
            return scenario
        if _initially_deadlocked(scenario) and certify != "reference":
            continue
        from . import formulation, milp
        # feasibility certificates only: depth-first search with a huge
        # relative gap stops at the first incumbent; the cheaper reference
        # model rejects structurally infeasible draws before the extended
        # solve.  Draws whose certificate does not finish within the time
        # limit are resampled like infeasible ones.
        cfg = milp.SolverConfig(time_limit=config.certify_time_limit,
                                rel_gap=1e9, node_selection="depth_first")
        model, _ = formulation.build_reference_model(scenario)
        sol = milp.solve(model, cfg)
        if sol.status not in ("Optimal", "Feasible") or not sol.assignment:
            continue
        if certify == "reference":
            return scenario
        model, _ = formulation.build_extended_model(scenario)
        sol = milp.solve(model, cfg)
        if sol.status in ("Optimal", "Feasible") and sol.assignment:
            return scenario
    raise GeneratorError(
        f"no feasible scenario within {config.max_resample} attempts (seed {seed})")
