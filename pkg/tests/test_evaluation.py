"""Evaluation metrics and the benchmark harness.

The metric examples below are hand-computed:
  P_obj = 100 * sum(f_prop) / sum(f_ref)
  P_run = (100/N) * sum(rt_prop_i / rt_ref_i)
"""

import pytest

from railopt import evaluation
from railopt.evaluation import (
    BenchRow, BenchmarkReport, EvaluationError, MetricPair, RunRow,
    compute_metrics, emit_plot_data, emit_report, evaluate_scenario,
    parse_report, run_benchmark,
)


def rows(*vals):
    return [RunRow(seed=i, objective=o, runtime_s=rt)
            for i, (o, rt) in enumerate(vals)]


class TestComputeMetrics:
    def test_identical_runs_score_100_100(self):
        ref = rows((10.0, 2.0), (30.0, 4.0))
        mp = compute_metrics(ref, ref)
        assert mp.p_obj == pytest.approx(100.0)
        assert mp.p_run == pytest.approx(100.0)
        assert mp.n == 2

    def test_hand_example_objective(self):
        # f: 15+15 vs 10+10 -> 150; rt: (1/2 + 1/4)/2 * 100 = 37.5
        prop = rows((15.0, 1.0), (15.0, 1.0))
        ref = rows((10.0, 2.0), (10.0, 4.0))
        mp = compute_metrics(prop, ref)
        assert mp.p_obj == pytest.approx(150.0)
        assert mp.p_run == pytest.approx(37.5)

    def test_runtime_average_is_per_scenario(self):
        # ratio average, NOT total/total: (100/2)*(4/2 + 1/4) = 112.5
        prop = rows((1.0, 4.0), (1.0, 1.0))
        ref = rows((1.0, 2.0), (1.0, 4.0))
        assert compute_metrics(prop, ref).p_run == pytest.approx(112.5)

    def test_all_zero_objectives_are_neutral(self):
        prop = rows((0.0, 1.0))
        ref = rows((0.0, 2.0))
        assert compute_metrics(prop, ref).p_obj == pytest.approx(100.0)

    def test_zero_reference_with_positive_proposed_is_undefined(self):
        with pytest.raises(EvaluationError):
            compute_metrics(rows((5.0, 1.0)), rows((0.0, 1.0)))

    def test_seed_alignment_enforced(self):
        prop = [RunRow(seed=1, objective=1.0, runtime_s=1.0)]
        ref = [RunRow(seed=2, objective=1.0, runtime_s=1.0)]
        with pytest.raises(EvaluationError):
            compute_metrics(prop, ref)

    def test_empty_and_mismatched_lengths(self):
        with pytest.raises(EvaluationError):
            compute_metrics([], [])
        with pytest.raises(EvaluationError):
            compute_metrics(rows((1.0, 1.0)), rows((1.0, 1.0), (1.0, 1.0)))

    def test_nonpositive_reference_runtime(self):
        with pytest.raises(EvaluationError):
            compute_metrics(rows((1.0, 1.0)), rows((1.0, 0.0)))

    def test_metric_pair_validation(self):
        with pytest.raises(EvaluationError):
            MetricPair(p_obj=100.0, p_run=100.0, n=0)


def bench_row(**kw):
    base = dict(network="A", trains=3, model="global", stage=1, transfer="",
                seed=0, f_ref=10.0, f_prop=10.0, rt_ref_s=2.0, rt_prop_s=1.0,
                fallback=False)
    base.update(kw)
    return BenchRow(**base)


class TestReport:
    def test_cells_group_by_configuration(self):
        rep = BenchmarkReport([
            bench_row(seed=0), bench_row(seed=1),
            bench_row(model="suboptimal", seed=0)])
        cells = rep.cells()
        assert len(cells) == 2
        assert len(cells[("A", 3, "global", 1, "")]) == 2

    def test_metrics_per_cell(self):
        rep = BenchmarkReport([
            bench_row(seed=0, f_prop=15.0, rt_prop_s=1.0),
            bench_row(seed=1, f_prop=15.0, rt_ref_s=4.0, rt_prop_s=1.0)])
        mp = rep.metrics()[("A", 3, "global", 1, "")]
        assert mp.p_obj == pytest.approx(150.0)
        assert mp.p_run == pytest.approx(37.5)

    def test_csv_round_trip_is_exact(self):
        rep = BenchmarkReport([
            bench_row(seed=0, f_prop=0.1 + 0.2, rt_prop_s=1 / 3),
            bench_row(stage=2, transfer="routes", fallback=True)])
        again = parse_report(emit_report(rep, "csv"))
        assert again.rows == rep.rows

    def test_bad_header_rejected(self):
        with pytest.raises(EvaluationError):
            parse_report("a,b,c\n1,2,3\n")

    def test_json_emission_shape(self):
        import json
        rep = BenchmarkReport([bench_row(), bench_row(seed=1)])
        data = json.loads(emit_report(rep, "json"))
        cell = data["A"]["3"]["global/stage1"]
        assert set(cell) == {"P_obj", "P_run", "N"}
        assert cell["N"] == 2

    def test_plot_data_has_config_labels(self):
        rep = BenchmarkReport([bench_row(stage=2, transfer="routes")])
        text = emit_plot_data(rep)
        assert "A/3t/global/stage2/routes" in text

    def test_empty_report_rejected(self):
        with pytest.raises(EvaluationError):
            emit_report(BenchmarkReport([]))


@pytest.mark.slow
class TestHarness:
    def test_evaluate_scenario_emits_six_rows(self):
        out = evaluate_scenario("B", 3, seed=0, time_limit=60)
        assert len(out) == 6
        keys = {(r.model, r.stage, r.transfer) for r in out}
        assert keys == {("suboptimal", 1, ""), ("global", 1, ""),
                        ("suboptimal", 2, "routes"),
                        ("suboptimal", 2, "routes+precedences"),
                        ("global", 2, "routes"),
                        ("global", 2, "routes+precedences")}
        for r in out:
            # stage 1 scores against the no-overlap reference, stage 2
            # against the extended reference; both dominate their reference
            assert r.f_prop >= r.f_ref - 1e-4
            assert r.rt_prop_s > 0 and r.rt_ref_s > 0

    def test_run_benchmark_is_deterministic_in_decisions(self):
        a = run_benchmark(["B"], [3], n_scenarios=1, seed_base=0, time_limit=60)
        b = run_benchmark(["B"], [3], n_scenarios=1, seed_base=0, time_limit=60)
        pick = lambda rep: [(r.key(), r.seed, r.f_ref, r.f_prop, r.fallback)
                            for r in rep.rows]
        assert pick(a) == pick(b)

    def test_run_benchmark_validation(self):
        with pytest.raises(EvaluationError):
            run_benchmark(["B"], [3], n_scenarios=0)
