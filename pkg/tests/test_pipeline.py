"""Two-stage pipeline: stage-1 choice, decision transfer, fallback, JSON."""

import pytest

from railopt import milp, pipeline
from railopt.formulation import verify_plan
from railopt.milp import SolverConfig
from railopt.pipeline import (
    PipelineConfig, PipelineError, run_reference, run_two_stage,
)

FAST = SolverConfig(time_limit=120)


def cfg(stage1, transfer, **kw):
    return PipelineConfig(stage1_model=stage1, transfer=transfer,
                          stage1_solver=FAST, stage2_solver=FAST, **kw)


class TestConfig:
    def test_rejects_unknown_names(self):
        with pytest.raises(PipelineError):
            PipelineConfig(stage1_model="bogus")
        with pytest.raises(PipelineError):
            PipelineConfig(transfer="bogus")

    def test_none_model_requires_plain_routes(self):
        with pytest.raises(PipelineError):
            PipelineConfig(stage1_model="none", transfer="warm_start")


class TestRunReference:
    def test_reference(self, fig3_scenario):
        res = run_reference(fig3_scenario, with_overlaps=False, solver_cfg=FAST)
        assert res.stage("reference").status == "Optimal"
        assert res.plan.objective == pytest.approx(180.8, abs=1e-4)
        assert not res.fallback_used

    def test_extended(self, fig3_scenario):
        res = run_reference(fig3_scenario, with_overlaps=True, solver_cfg=FAST)
        assert res.stage("extended").objective == pytest.approx(312.0, abs=1e-4)
        assert verify_plan(fig3_scenario, res.plan, with_overlaps=True)["ok"]


class TestTwoStage:
    @pytest.mark.parametrize("stage1,transfer", [
        ("global", "routes"),
        ("global", "routes+precedences"),
        ("global", "warm_start"),
        ("suboptimal", "routes"),
        ("suboptimal", "routes+precedences"),
        ("suboptimal", "warm_start"),
    ])
    def test_sandwich_bounds(self, fig3_scenario, stage1, transfer):
        """Every pipeline plan is feasible under the overlap rules and no
        better than the true extended optimum (312.0 on this scenario)."""
        res = run_two_stage(fig3_scenario, cfg(stage1, transfer))
        assert verify_plan(fig3_scenario, res.plan, with_overlaps=True)["ok"]
        assert res.plan.objective >= 312.0 - 1e-4
        assert res.response_time_s == pytest.approx(
            sum(s.runtime_s for s in res.stages), abs=1e-6)

    def test_global_routes_prec_matches_optimum(self, fig3_scenario):
        # precedences from the global stage-1 happen to be compatible here
        res = run_two_stage(fig3_scenario, cfg("global", "warm_start"))
        assert res.plan.objective == pytest.approx(312.0, abs=1e-4)
        assert not res.fallback_used

    def test_stage_names(self, fig3_scenario):
        res = run_two_stage(fig3_scenario, cfg("global", "routes"))
        names = [s.name for s in res.stages]
        assert names[0].startswith("stage1")
        assert any("stage2" in n or "fallback" in n for n in names[1:])

    def test_warm_start_used_or_dropped_cleanly(self, fig3_scenario):
        res = run_two_stage(fig3_scenario, cfg("global", "warm_start"))
        # either the start seeded the solver or a diagnostic explains why not
        assert verify_plan(fig3_scenario, res.plan, with_overlaps=True)["ok"]

    def test_fallback_on_infeasible_ordering(self, fig3_scenario, monkeypatch):
        # if the stage-1 ordering cannot be scheduled, the pipeline must fall
        # back to the plain extended solve and keep the stage-1 runtime
        from railopt import decomposition

        def boom(*a, **kw):
            raise decomposition.InfeasibleOrderingError("forced for test")

        monkeypatch.setattr(decomposition, "reconstruct_schedule", boom)
        res = run_two_stage(fig3_scenario, cfg("global", "routes"))
        assert res.fallback_used
        assert any("fallback" in s.name for s in res.stages)
        assert any("fallback" in d for d in res.diagnostics)
        assert verify_plan(fig3_scenario, res.plan, with_overlaps=True)["ok"]
        assert res.plan.objective == pytest.approx(312.0, abs=1e-4)
        assert res.response_time_s == pytest.approx(
            sum(s.runtime_s for s in res.stages), abs=1e-6)


class TestResultJson:
    def test_round_trip(self, fig3_scenario):
        res = run_two_stage(fig3_scenario, cfg("global", "routes"))
        again = pipeline.PipelineResult.from_json(res.to_json())
        assert again.plan.routes == res.plan.routes
        assert again.plan.objective == pytest.approx(res.plan.objective)
        assert [s.name for s in again.stages] == [s.name for s in res.stages]
        assert again.fallback_used == res.fallback_used

    def test_unknown_stage_lookup(self, fig3_scenario):
        res = run_reference(fig3_scenario, with_overlaps=False, solver_cfg=FAST)
        with pytest.raises(PipelineError):
            res.stage("nope")
