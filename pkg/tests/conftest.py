import json

import pytest

from railopt import network, scenario


FIG3_SCENARIO = {
    "network_name": "fig3",
    "trains": [
        {"id": "t1", "v_kmh": 120, "length_m": 200, "weight": 1.0, "init_s": 0,
         "entry_tc": "tc1", "exit_tc": "tc9", "routes_allowed": ["dn1", "dn3"],
         "dwell": {"station": "S2", "seconds": 120}},
        {"id": "t2", "v_kmh": 120, "length_m": 200, "weight": 1.0, "init_s": 60,
         "entry_tc": "tc1", "exit_tc": "tc9", "routes_allowed": ["dn2", "dn4"]},
        {"id": "t3", "v_kmh": 120, "length_m": 200, "weight": 1.0, "init_s": 30,
         "entry_tc": "tc9", "exit_tc": "tc1", "routes_allowed": ["up1", "up2"]},
    ],
}


@pytest.fixture(scope="session")
def fig3_net():
    return network.builtin_network("fig3")


@pytest.fixture(scope="session")
def fig3_scenario(fig3_net):
    return scenario.parse_scenario(json.dumps(FIG3_SCENARIO), fig3_net)


@pytest.fixture(scope="session")
def fig3_two_train(fig3_net):
    """The same corridor with only the two down trains (cheap to solve)."""
    raw = {"network_name": "fig3",
           "trains": [dict(t) for t in FIG3_SCENARIO["trains"][:2]]}
    return scenario.parse_scenario(json.dumps(raw), fig3_net)


def single_train_scenario(net, rid_list, dwell=None, v_kmh=120.0):
    view_net = net
    first = view_net.route(rid_list[0])
    raw = {"network_name": net.name, "trains": [{
        "id": "t1", "v_kmh": v_kmh, "length_m": 200, "weight": 1.0,
        "init_s": 0, "entry_tc": first.tcs[0], "exit_tc": first.tcs[-1],
        "routes_allowed": list(rid_list)}]}
    if dwell:
        raw["trains"][0]["dwell"] = {"station": dwell[0], "seconds": dwell[1]}
    return scenario.parse_scenario(json.dumps(raw), net)
