"""Stage-1 relaxations, schedule reconstruction and the brute-force oracle.

Pinned values on the three-train corridor scenario (all confirmed by the
enumeration oracle and by hand before freezing):
  reference optimum 180.8 (routes t1:dn1, t2:dn2, t3:up2)
  stage-1 'suboptimal' estimate 130.4, whose routes reconstruct to 202.8
  stage-1 'global' estimate 180.8, matching the true reference optimum
"""

import pytest

from railopt import decomposition, formulation, milp
from railopt.decomposition import (
    InfeasibleOrderingError, OracleSizeError, StageOneResult,
    brute_force_oracle, build_global_model, build_suboptimal_model,
    extract_stage_one, reconstruct_schedule, suboptimality_witness,
)
from railopt.formulation import build_reference_model, extract_plan, verify_plan
from railopt.milp import SolverConfig
from railopt.scenario import GeneratorConfig, generate_scenario

from railopt import network

CFG = SolverConfig(time_limit=120)


def stage1(sc, build):
    model, sv = build(sc)
    sol = milp.solve(model, CFG)
    assert sol.status == "Optimal", sol.status
    return extract_stage_one(sc, sv, sol)


class TestOracle:
    def test_matches_reference_model(self, fig3_scenario):
        plan = brute_force_oracle(fig3_scenario)
        assert plan.objective == pytest.approx(180.8, abs=1e-4)
        assert verify_plan(fig3_scenario, plan)["ok"]

    def test_matches_extended_model(self, fig3_scenario):
        plan = brute_force_oracle(fig3_scenario, with_overlaps=True)
        assert plan.objective == pytest.approx(312.0, abs=1e-4)
        assert verify_plan(fig3_scenario, plan, with_overlaps=True)["ok"]

    def test_size_guard(self):
        net = network.builtin_network("B")
        sc = generate_scenario(net, GeneratorConfig(n_trains=5), seed=2,
                               certify=False)
        with pytest.raises(OracleSizeError):
            brute_force_oracle(sc)


class TestSuboptimalModel:
    def test_estimate_and_reconstruction(self, fig3_scenario):
        res = stage1(fig3_scenario, build_suboptimal_model)
        # the pairwise estimate undershoots because it ignores propagation
        assert res.objective == pytest.approx(130.4, abs=1e-4)
        assert res.routes == {"t1": "dn1", "t2": "dn4", "t3": "up2"}
        plan = reconstruct_schedule(fig3_scenario, res.routes, res.precedences)
        assert plan.objective == pytest.approx(202.8, abs=1e-4)
        assert verify_plan(fig3_scenario, plan)["ok"]

    def test_estimate_is_lower_bound_on_its_own_routes(self, fig3_scenario):
        res = stage1(fig3_scenario, build_suboptimal_model)
        plan = reconstruct_schedule(fig3_scenario, res.routes, res.precedences)
        assert res.objective <= plan.objective + 1e-6


class TestGlobalModel:
    def test_matches_reference_optimum(self, fig3_scenario):
        res = stage1(fig3_scenario, build_global_model)
        assert res.objective == pytest.approx(180.8, abs=1e-4)
        plan = reconstruct_schedule(fig3_scenario, res.routes, res.precedences)
        assert plan.objective == pytest.approx(180.8, abs=1e-4)

    @pytest.mark.parametrize("net_name,seed", [("A", 0), ("B", 0), ("B", 1)])
    def test_equivalence_on_random_scenarios(self, net_name, seed):
        net = network.builtin_network(net_name)
        sc = generate_scenario(net, GeneratorConfig(n_trains=3, max_routes=2),
                               seed=seed, certify="reference")
        model, vm = build_reference_model(sc)
        ref = milp.solve(model, CFG)
        assert ref.status == "Optimal"
        res = stage1(sc, build_global_model)
        assert res.objective == pytest.approx(ref.objective, abs=1e-4)
        plan = reconstruct_schedule(sc, res.routes, res.precedences)
        assert plan.objective == pytest.approx(ref.objective, abs=1e-4)
        assert verify_plan(sc, plan)["ok"]


class TestReconstruction:
    def test_round_trips_exact_solution(self, fig3_scenario):
        model, vm = build_reference_model(fig3_scenario)
        sol = milp.solve(model, CFG)
        plan = extract_plan(fig3_scenario, vm, sol)
        again = reconstruct_schedule(fig3_scenario, plan.routes, plan.precedence)
        assert again.objective == pytest.approx(plan.objective, abs=1e-4)

    def test_deadlocked_ordering_detected(self, fig3_scenario):
        # opposing trains on the single-track middle, each told to go first
        # at a tc the other must vacate to advance: a circular wait
        routes = {"t1": "dn1", "t3": "up2"}
        prec = {("t3", "t1", "tc6"): 1, ("t1", "t3", "tc6"): 0,
                ("t1", "t3", "tc5"): 1, ("t3", "t1", "tc5"): 0}
        with pytest.raises(InfeasibleOrderingError):
            reconstruct_schedule(fig3_scenario, routes, prec)


class TestStageOneResult:
    def test_json_round_trip(self, fig3_scenario):
        res = stage1(fig3_scenario, build_suboptimal_model)
        again = StageOneResult.from_json(res.to_json())
        assert again.routes == res.routes
        assert again.precedences == res.precedences
        assert again.objective == pytest.approx(res.objective)


class TestWitness:
    def test_suboptimality_witness_on_corridor(self, fig3_scenario):
        sub = stage1(fig3_scenario, build_suboptimal_model)
        glob = stage1(fig3_scenario, build_global_model)
        # the pairwise model scores its own choice 130.4 and the true optimum
        # higher, yet reconstruction reverses the ranking: a witness pair
        assert suboptimality_witness(fig3_scenario, sub, glob)
        assert not suboptimality_witness(fig3_scenario, glob, sub)
