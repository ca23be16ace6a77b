"""Scenario construction, nominal timings, serialization and generation.

The nominal-timing values pinned below were computed by hand from the network
geometry (length / min(v, vmax), plus dwell and the formation/release margins)
and are frozen here as regression anchors.
"""

import json
import math

import pytest

from railopt import network, scenario
from railopt.scenario import (
    GeneratorConfig, GeneratorError, ModelConstants, ScenarioError, Train,
    generate_scenario, make_scenario, parse_scenario, serialize_scenario,
)


class TestNominalTimings:
    """Hand-computed traversal of fig3 route dn1 for train t1 (120 km/h,
    200 m, 120 s dwell at station S2)."""

    def test_entry_times(self, fig3_scenario):
        view = fig3_scenario.views("t1")["dn1"]
        assert view.tcs == ("tc1", "tc7", "tc6", "tc5", "tc4", "tc2", "tc9")
        expected = {"tc1": 0.0, "tc7": 7.2, "tc6": 163.2, "tc5": 170.4,
                    "tc4": 213.6, "tc2": 220.8, "tc9": 256.8}
        for tc, t in expected.items():
            assert view.entry[tc] == pytest.approx(t), tc

    def test_running_and_clearing_times(self, fig3_scenario):
        view = fig3_scenario.views("t1")["dn1"]
        # dwell at the tc7 platform: 36 s running + 120 s stop
        assert view.ds["tc7"] == pytest.approx(156.0)
        # clearing measured from block entry, tail included
        assert view.cl["tc7"] == pytest.approx(174.0)
        assert view.cl["tc5"] == pytest.approx(57.6)
        assert view.cl["tc2"] == pytest.approx(61.2)

    def test_block_structure(self, fig3_scenario):
        view = fig3_scenario.views("t1")["dn1"]
        assert view.ref["tc5"] == "tc6"
        assert view.ref["tc2"] == "tc4"
        assert view.sig["tc6"] is False
        assert view.sig["tc4"] is False
        assert view.sig["tc5"] is True
        assert view.ebs("tc1") and not view.ebs("tc7")

    def test_reservation_window(self, fig3_scenario):
        view = fig3_scenario.views("t1")["dn1"]
        c = fig3_scenario.constants
        assert view.shat_r("tc7", c) == pytest.approx(7.2 - 15.0)
        assert view.ehat_r("tc7", c) == pytest.approx(7.2 + 174.0 + 5.0)

    def test_scheduled_exit_and_big_m(self, fig3_scenario):
        # scheduled exit = fastest unimpeded traversal over allowed routes
        assert fig3_scenario.exit_s("t1") == pytest.approx(242.4)
        assert fig3_scenario.big_m == pytest.approx(4730, abs=1)

    def test_shared_tcs(self, fig3_scenario):
        shared = fig3_scenario.shared_tcs("t1", "t3")
        assert "tc5" in shared and "tc4" in shared

    def test_initial_train_suffix_view(self, fig3_net):
        t = Train(id="x", v_kmh=120, length_m=200, weight=1, init_s=0,
                  tc_in="tc1", tc_ex="tc9", routes_allowed=("dn1",),
                  initial_at="tc6")
        sc = make_scenario(fig3_net, [t])
        view = sc.views("x")["dn1"]
        assert view.tcs[0] == "tc6"
        assert view.entry["tc6"] == 0.0


class TestMakeScenario:
    def test_duplicate_train_id(self, fig3_net):
        t = Train(id="x", v_kmh=120, length_m=200, weight=1, init_s=0,
                  tc_in="tc1", tc_ex="tc9", routes_allowed=("dn1",))
        with pytest.raises(ScenarioError):
            make_scenario(fig3_net, [t, t])

    def test_route_endpoint_mismatch(self, fig3_net):
        t = Train(id="x", v_kmh=120, length_m=200, weight=1, init_s=0,
                  tc_in="tc9", tc_ex="tc1", routes_allowed=("dn1",))
        with pytest.raises(ScenarioError):
            make_scenario(fig3_net, [t])

    def test_invalid_train_fields(self):
        with pytest.raises(ScenarioError):
            Train(id="x", v_kmh=-1, length_m=200, weight=1, init_s=0,
                  tc_in="tc1", tc_ex="tc9", routes_allowed=("dn1",)).validate()
        with pytest.raises(ScenarioError):
            ModelConstants(formation_s=-1)

    def test_default_constants(self, fig3_scenario):
        c = fig3_scenario.constants
        assert (c.formation_s, c.release_s, c.overlap_s) == (15.0, 5.0, 90.0)


class TestSerialization:
    def test_round_trip(self, fig3_scenario):
        text = serialize_scenario(fig3_scenario)
        again = parse_scenario(text)
        assert again.trains == fig3_scenario.trains
        assert again.network.name == fig3_scenario.network.name
        assert again.big_m == pytest.approx(fig3_scenario.big_m)
        for tid in ("t1", "t2", "t3"):
            assert again.exit_s(tid) == pytest.approx(fig3_scenario.exit_s(tid))

    def test_parse_with_explicit_network(self, fig3_scenario, fig3_net):
        text = serialize_scenario(fig3_scenario)
        again = parse_scenario(text, network=fig3_net)
        assert again.network is fig3_net

    def test_bad_payload(self):
        with pytest.raises(ScenarioError):
            parse_scenario("[]")
        with pytest.raises(ScenarioError):
            parse_scenario(json.dumps({"network": "fig3"}))


class TestGenerator:
    def test_deterministic(self):
        net = network.builtin_network("B")
        cfg = GeneratorConfig(n_trains=3)
        a = generate_scenario(net, cfg, seed=7, certify="reference")
        b = generate_scenario(net, cfg, seed=7, certify="reference")
        assert serialize_scenario(a) == serialize_scenario(b)
        c = generate_scenario(net, cfg, seed=8, certify="reference")
        assert serialize_scenario(a) != serialize_scenario(c)

    def test_bounds_respected(self):
        net = network.builtin_network("B")
        cfg = GeneratorConfig(n_trains=4, v_bounds=(80, 120),
                              length_bounds=(100, 400), init_bounds=(0, 30))
        sc = generate_scenario(net, cfg, seed=3, certify=False)
        assert len(sc.trains) == 4
        for t in sc.trains:
            assert 80 <= t.v_kmh <= 120
            assert 100 <= t.length_m <= 400
            assert t.is_initial or 0 <= t.init_s <= 30

    def test_max_routes(self):
        net = network.builtin_network("B")
        cfg = GeneratorConfig(n_trains=3, max_routes=2)
        sc = generate_scenario(net, cfg, seed=5, certify=False)
        assert all(len(t.routes_allowed) <= 2 for t in sc.trains)

    def test_config_validation(self):
        with pytest.raises(ScenarioError):
            GeneratorConfig(n_trains=0)
        with pytest.raises(ScenarioError):
            GeneratorConfig(n_trains=2, v_bounds=(120, 80))
        with pytest.raises(ScenarioError):
            GeneratorConfig(n_trains=2, max_routes=0)

    def test_certified_scenario_is_feasible(self):
        from railopt import formulation, milp
        net = network.builtin_network("B")
        sc = generate_scenario(net, GeneratorConfig(n_trains=3), seed=11,
                               certify="reference")
        model, _ = formulation.build_reference_model(sc)
        sol = milp.solve(model, milp.SolverConfig(time_limit=60))
        assert sol.status in ("Optimal", "Feasible")

    def test_exhaustion_raises(self):
        net = network.builtin_network("fig3")
        # 20 trains entering at time 0 on a single-track corridor cannot all
        # be placed; the resample loop must give up with a clear error
        cfg = GeneratorConfig(n_trains=20, init_bounds=(0, 0),
                              p_initial=1.0, max_resample=3)
        with pytest.raises(GeneratorError):
            generate_scenario(net, cfg, seed=1)
