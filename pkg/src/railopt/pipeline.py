"""Multi-stage solving workflow.

A pipeline run solves a first-stage decomposed model (sub-optimal or
global), transfers its routing and ordering decisions into the extended
model — by fixing routes, fixing routes and precedences, or warm starting —
and solves the second stage.  Fixings can be incompatible with the overlap
constraints the first stage never saw; in that case the run falls back to
the plain extended model, and the first-stage runtime is still charged to
the total response time.  Single-stage reference runs share the same result
shape so benchmark code treats them uniformly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from . import decomposition, formulation, milp
from .formulation import TrafficPlan
from .scenario import Scenario

STAGE1_MODELS = ("suboptimal", "global", "none")
TRANSFERS = ("routes", "routes+precedences", "warm_start")


class PipelineError(ValueError):
    """Raised for invalid pipeline configurations or broken invariants."""


@dataclass(frozen=True)
class PipelineConfig:
    stage1_model: str = "global"
    transfer: str = "routes+precedences"
    stage1_solver: milp.SolverConfig = field(default_factory=milp.SolverConfig)
    stage2_solver: milp.SolverConfig = field(default_factory=milp.SolverConfig)

    def __post_init__(self):
        if self.stage1_model not in STAGE1_MODELS:
            raise PipelineError(f"unknown stage-1 model {self.stage1_model!r}")
        if self.transfer not in TRANSFERS:
            raise PipelineError(f"unknown transfer {self.transfer!r}")
        if self.stage1_model == "none" and self.transfer != "routes":
            raise PipelineError("stage1_model=none admits no decision transfer")


@dataclass(frozen=True)
class StageReport:
    name: str
    status: str
    objective: float
    runtime_s: float


@dataclass
class PipelineResult:
    plan: TrafficPlan
    stages: list[StageReport]
    fallback_used: bool
    response_time_s: float
    diagnostics: list[str] = field(default_factory=list)

    def stage(self, name):
        for s in self.stages:
            if s.name == name:
                return s
        raise PipelineError(f"no stage named {name!r}")

    def to_json(self):
        return json.dumps({
            "fallback_used": self.fallback_used,
            "response_time_s": self.response_time_s,
            "stages": [{"name": s.name, "status": s.status,
                        "objective": s.objective, "runtime_s": s.runtime_s}
                       for s in self.stages],
            "plan": _plan_to_obj(self.plan),
            "diagnostics": self.diagnostics,
        }, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        stages = [StageReport(s["name"], s["status"], float(s["objective"]),
                              float(s["runtime_s"])) for s in raw["stages"]]
        return cls(_plan_from_obj(raw["plan"]), stages,
                   bool(raw["fallback_used"]), float(raw["response_time_s"]),
                   list(raw.get("diagnostics", [])))


def _plan_to_obj(plan: TrafficPlan):
    return {
        "routes": plan.routes,
        "entry": [[t, tc, v] for (t, tc), v in sorted(plan.entry.items())],
        "delays": [[t, tc, v] for (t, tc), v in sorted(plan.delays.items())],
        "exit_delay": plan.exit_delay,
        "precedence": [[a, b, tc, v] for (a, b, tc), v in
                       sorted(plan.precedence.items())],
        "objective": plan.objective,
    }


def _plan_from_obj(raw):
    return TrafficPlan(
        dict(raw["routes"]),
        {(t, tc): float(v) for t, tc, v in raw["entry"]},
        {(t, tc): float(v) for t, tc, v in raw["delays"]},
        {t: float(v) for t, v in raw["exit_delay"].items()},
        {(a, b, tc): int(v) for a, b, tc, v in raw["precedence"]},
        float(raw["objective"]))


def _timed_solve(model, cfg, warm_start=None):
    t0 = time.perf_counter()
    sol = milp.solve(model, cfg, warm_start=warm_start)
    return sol, time.perf_counter() - t0


def _verified_plan(sc, vm, sol, with_overlaps):
    plan = formulation.extract_plan(sc, vm, sol)
    chk = formulation.verify_plan(sc, plan, with_overlaps=with_overlaps)
    if not chk["ok"]:
        raise PipelineError("solver plan fails verification: "
                            + "; ".join(chk["violations"][:3]))
    return plan


def run_reference(scenario: Scenario, with_overlaps: bool,
                  solver_cfg: milp.SolverConfig | None = None) -> PipelineResult:
    """Single solve of the reference (or overlap-extended) model."""
    cfg = solver_cfg or milp.SolverConfig()
    build = (formulation.build_extended_model if with_overlaps
             else formulation.build_reference_model)
    m, vm = build(scenario)
    sol, rt = _timed_solve(m, cfg)
    if sol.status not in ("Optimal", "Feasible") or not sol.assignment:
        raise PipelineError(
            f"reference solve ended {sol.status} on a certified scenario")
    plan = _verified_plan(scenario, vm, sol, with_overlaps)
    name = "extended" if with_overlaps else "reference"
    return PipelineResult(plan, [StageReport(name, sol.status, plan.objective, rt)],
                          fallback_used=False, response_time_s=rt,
                          diagnostics=list(sol.diagnostics))


# -- warm-start assembly -------------------------------------------------------

def plan_assignment(sc: Scenario, vm: formulation.VarMap,
                    plan: TrafficPlan) -> dict:
    """Extend a traffic plan to a complete extended-model assignment.

    Variables of unchosen routes sit at zero (the big-M gates force that);
    overlap bookkeeping variables take their implied values, and the free
    binaries (conflict selector c, overlap order yO) are chosen greedily to
    satisfy their disjunctions when possible.
    """
    c = sc.constants
    ep = c.formation_s
    asg: dict[str, float] = {}
    chosen = plan.routes
    for t in chosen:
        views = sc.views(t)
        for rid, view in views.items():
            on = rid == chosen[t]
            asg[f"x[{t},{rid}]"] = 1.0 if on else 0.0
            for i, tc in enumerate(view.tcs):
                asg[f"e[{t},{rid},{tc}]"] = plan.entry[(t, tc)] + ep if on else 0.0
                if (t, rid, tc) in vm.d:
                    if on:
                        nxt = view.tcs[i + 1]
                        asg[f"d[{t},{rid},{tc}]"] = (plan.entry[(t, nxt)]
                                                     - plan.entry[(t, tc)]
                                                     - view.ds[tc])
                    else:
                        asg[f"d[{t},{rid},{tc}]"] = 0.0
        view = views[chosen[t]]
        last = view.tcs[-1]
        asg[f"einf[{t}]"] = plan.entry[(t, last)] + view.ds[last] + ep
        asg[f"D[{t}]"] = plan.exit_delay[t]
        for tc in sc.tcs_of(t):
            if tc in view.tcs:
                e_ref = plan.entry[(t, view.ref[tc])] + ep
                asg[f"sR[{t},{tc}]"] = e_ref - c.formation_s
                asg[f"eR[{t},{tc}]"] = e_ref + view.cl[tc] + c.release_s
            else:
                asg[f"sR[{t},{tc}]"] = 0.0
                asg[f"eR[{t},{tc}]"] = 0.0
    for (a, b, tc) in vm.y:
        asg[f"y[{a},{b},{tc}]"] = float(plan.precedence.get((a, b, tc), 0))
    for (t, tc) in vm.eOver:
        view = sc.views(t)[chosen[t]]
        if tc in view.tcs:
            prev = view.pred(tc)
            e_over = plan.entry[(t, prev)] + ep + c.overlap_s
            s_o = plan.entry[(t, view.ref[prev])] + ep - c.formation_s
        else:
            e_over = s_o = 0.0
        s_r = asg[f"sR[{t},{tc}]"]
        asg[f"eOver[{t},{tc}]"] = e_over
        asg[f"sO[{t},{tc}]"] = s_o
        asg[f"z[{t},{tc}]"] = 1.0 if s_r > e_over + 1e-9 else 0.0
        asg[f"eO[{t},{tc}]"] = min(s_r, e_over)
    done_c = set()
    for (a, b, tc) in vm.c:
        if (a, b, tc) in done_c or (b, a, tc) in done_c:
            continue
        done_c.add((a, b, tc))
        picked = 0.0
        for cand in (0.0, 1.0):
            ok = True
            for t1, t2 in ((a, b), (b, a)):
                if plan.precedence.get((t1, t2, tc)) != 1:
                    continue
                if (t2, tc) not in vm.eO:
                    continue
                if cand == 1.0:
                    ok = asg[f"sR[{t1},{tc}]"] >= asg[f"eO[{t2},{tc}]"] - 1e-9
                else:
                    ok = asg[f"sO[{t2},{tc}]"] >= asg[f"eR[{t1},{tc}]"] - 1e-9
                if not ok:
                    break
            if ok:
                picked = cand
                break
        asg[f"c[{a},{b},{tc}]"] = picked
    done_yo = set()
    for (a, b, tc) in vm.yO:
        if (a, b, tc) in done_yo or (b, a, tc) in done_yo:
            continue
        done_yo.add((a, b, tc))
        # order the overlap intervals by their realized times; when they
        # genuinely overlap no choice is feasible and the default keeps the
        # reservation order (the solver will then reject the warm start)
        if asg[f"sO[{b},{tc}]"] >= asg[f"eO[{a},{tc}]"] - 1e-9:
            first = 0.0
        elif asg[f"sO[{a},{tc}]"] >= asg[f"eO[{b},{tc}]"] - 1e-9:
            first = 1.0
        else:
            first = float(plan.precedence.get((b, a, tc), 0))
        asg[f"yO[{a},{b},{tc}]"] = first
        asg[f"yO[{b},{a},{tc}]"] = 1.0 - first
    return asg


# -- two-stage runs ------------------------------------------------------------

def _build_stage1(sc: Scenario, which: str):
    if which == "suboptimal":
        return decomposition.build_suboptimal_model(sc)
    return decomposition.build_global_model(sc)


def _fallback(sc, cfg: PipelineConfig, stages, diagnostics, reason):
    diagnostics.append(f"fallback: {reason}")
    m, vm = formulation.build_extended_model(sc)
    sol, rt = _timed_solve(m, cfg.stage2_solver)
    if sol.status not in ("Optimal", "Feasible") or not sol.assignment:
        raise PipelineError(
            f"fallback solve ended {sol.status} on a certified scenario")
    plan = _verified_plan(sc, vm, sol, with_overlaps=True)
    stages.append(StageReport("fallback-extended", sol.status, plan.objective, rt))
    total = sum(s.runtime_s for s in stages)
    return PipelineResult(plan, stages, fallback_used=True,
                          response_time_s=total, diagnostics=diagnostics)


def run_two_stage(scenario: Scenario, config: PipelineConfig) -> PipelineResult:
    """Stage-1 decomposed solve, decision transfer, stage-2 extended solve.

    Infeasible stage-1 orderings (detected by schedule reconstruction) and
    overlap-incompatible fixings both trigger the fallback: the plain
    extended model is solved and the stage-1 runtime stays in the total.
    """
    sc = scenario
    if config.stage1_model == "none":
        return run_reference(sc, with_overlaps=True,
                             solver_cfg=config.stage2_solver)

    diagnostics: list[str] = []
    stages: list[StageReport] = []
    m1, sv1 = _build_stage1(sc, config.stage1_model)
    sol1, rt1 = _timed_solve(m1, config.stage1_solver)
    stages.append(StageReport(f"stage1-{config.stage1_model}", sol1.status,
                              sol1.objective, rt1))
    if sol1.status not in ("Optimal", "Feasible") or not sol1.assignment:
        return _fallback(sc, config, stages, diagnostics,
                         f"stage 1 ended {sol1.status}")
    stage1 = decomposition.extract_stage_one(sc, sv1, sol1)

    try:
        recon = decomposition.reconstruct_schedule(sc, stage1.routes,
                                                   stage1.precedences)
    except decomposition.InfeasibleOrderingError as exc:
        return _fallback(sc, config, stages, diagnostics,
                         f"stage-1 ordering infeasible ({exc})")

    m2, vm2 = formulation.build_extended_model(sc)
    warm = None
    if config.transfer == "routes":
        formulation.fix_routes(m2, vm2, stage1.routes)
    elif config.transfer == "routes+precedences":
        formulation.fix_routes(m2, vm2, stage1.routes)
        formulation.fix_precedences(m2, vm2, stage1.precedences)
    else:
        warm = plan_assignment(sc, vm2, recon)
    sol2, rt2 = _timed_solve(m2, config.stage2_solver, warm_start=warm)
    diagnostics.extend(sol2.diagnostics)
    stages.append(StageReport("stage2-extended", sol2.status, sol2.objective, rt2))
    if sol2.status not in ("Optimal", "Feasible") or not sol2.assignment:
        return _fallback(sc, config, stages, diagnostics,
                         f"stage 2 ended {sol2.status} under fixings")
    plan = _verified_plan(sc, vm2, sol2, with_overlaps=True)
    total = sum(s.runtime_s for s in stages)
    return PipelineResult(plan, stages, fallback_used=False,
                          response_time_s=total, diagnostics=diagnostics)
