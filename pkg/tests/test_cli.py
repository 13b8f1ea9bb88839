import json
import subprocess
import sys

import numpy as np
import pytest

from ssrd.cli import main

TINY_SCN = """
[scenario]
name = tinycli
horizon = 5
k = 2
n_paths = 30
seed = 4
demand_scale = 0.01

[regions]
id,name,area_km2,density_per_km2
0,a,10,500
1,b,20,300
2,c,5,900
3,d,15,420
"""


@pytest.fixture()
def tiny_scn(tmp_path):
    path = tmp_path / "tiny.scn"
    path.write_text(TINY_SCN)
    return str(path)


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCount:
    def test_paper_value(self, capsys):
        code, out, _ = run_cli(["count", "-N", "7", "-k", "2", "-T", "5"], capsys)
        assert code == 0
        assert out.strip() == "15120"

    def test_two_region_single_period(self, capsys):
        code, out, _ = run_cli(["count", "-N", "2", "-k", "2", "-T", "1"], capsys)
        assert code == 0
        assert out.strip() == "1"

    def test_infeasible_warns_and_prints_zero(self, capsys):
        code, out, err = run_cli(["count", "-N", "6", "-k", "1", "-T", "5"], capsys)
        assert code == 0
        assert out.strip() == "0"
        assert "warning" in err

    def test_missing_args_is_data_error(self, capsys):
        code, _, err = run_cli(["count", "-N", "6"], capsys)
        assert code == 3
        assert "error" in err


class TestEnumerate:
    def test_lists_singleton_orders(self, capsys):
        code, out, _ = run_cli(["enumerate", "-N", "3", "-k", "1", "-T", "3"], capsys)
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 6
        assert lines[0] == "[[0],[1],[2]]"

    def test_evaluate_writes_distribution(self, tiny_scn, tmp_path, capsys):
        out_csv = str(tmp_path / "dist.csv")
        code, out, _ = run_cli(["enumerate", "--scenario", tiny_scn,
                                "--evaluate", "--out", out_csv], capsys)
        assert code == 0
        assert "best_sequence = " in out
        assert "best_option_value = " in out
        rows = open(out_csv).read().strip().splitlines()
        assert rows[0] == "sequence,option_value"
        assert len(rows) == 1 + 66


class TestEvaluate:
    def test_prints_value_and_stops(self, tiny_scn, capsys):
        code, out, _ = run_cli(["evaluate", "--scenario", tiny_scn,
                                "--sequence", "[[0],[1],[2],[3]]"], capsys)
        assert code == 0
        assert "option_value = " in out
        assert "mean_stop_times = " in out
        assert "seed = 4" in out

    def test_infeasible_sequence_exit_4(self, tiny_scn, capsys):
        code, _, err = run_cli(["evaluate", "--scenario", tiny_scn,
                                "--sequence", "[[0,1,2],[3]]"], capsys)
        assert code == 4
        assert "not feasible" in err

    def test_bad_sequence_exit_3(self, tiny_scn, capsys):
        code, _, _ = run_cli(["evaluate", "--scenario", tiny_scn,
                              "--sequence", "oops"], capsys)
        assert code == 3

    def test_missing_scenario_file_exit_3(self, capsys):
        code, _, _ = run_cli(["evaluate", "--scenario", "/nope/missing.scn",
                              "--sequence", "[[0]]"], capsys)
        assert code == 3

    def test_dump_paths_npy(self, tiny_scn, tmp_path, capsys):
        dump = str(tmp_path / "paths.npy")
        code, _, _ = run_cli(["evaluate", "--scenario", tiny_scn,
                              "--sequence", "[[0,1],[2,3]]",
                              "--dump-paths", dump], capsys)
        assert code == 0
        arr = np.load(dump)
        assert arr.shape == (30, 6, 4, 4)

    def test_diagnostics_csv(self, tiny_scn, tmp_path, capsys):
        diag = str(tmp_path / "diag.csv")
        code, _, _ = run_cli(["evaluate", "--scenario", tiny_scn,
                              "--sequence", "[[0,1],[2,3]]",
                              "--diagnostics", diag], capsys)
        assert code == 0
        header = open(diag).readline().strip()
        assert header == "portfolio,t,mean_value,exercise_frac"


class TestMyopia:
    def test_modes_differ(self, tiny_scn, capsys):
        _, hi, _ = run_cli(["myopia", "--scenario", tiny_scn, "--mode", "high"], capsys)
        _, lo, _ = run_cli(["myopia", "--scenario", tiny_scn, "--mode", "low"], capsys)
        hi_flat = [r for p in json.loads(hi) for r in p]
        lo_flat = [r for p in json.loads(lo) for r in p]
        assert hi_flat == lo_flat[::-1]


class TestSweep:
    def test_k_grid_shape(self, tmp_path, capsys):
        out = str(tmp_path / "sw")
        code, _, _ = run_cli(["sweep", "--scenario", "beijing9",
                              "--n-paths", "20", "--axis", "k",
                              "--grid", "2,3,4,5,6", "--seeds", "2",
                              "--out", out], capsys)
        assert code == 0
        rows = open(out + "/sweep.csv").read().strip().splitlines()
        assert rows[0] == "axis,value,policy,mean_option_value,mc_se,n_seeds"
        assert len(rows) == 1 + 5 * 2  # grid x policies

    def test_empty_grid_rejected(self, tmp_path, capsys):
        code, _, err = run_cli(["sweep", "--scenario", "shanghai4",
                                "--axis", "k", "--grid", "", "--out",
                                str(tmp_path / "x")], capsys)
        assert code == 3
        assert "empty grid" in err

    def test_f_end_grid(self, tmp_path, capsys):
        out = str(tmp_path / "fe")
        code, _, _ = run_cli(["sweep", "--scenario", "shanghai4",
                              "--n-paths", "20", "--axis", "f_end",
                              "--grid", "0.8,1.0,1.25", "--seeds", "2",
                              "--policies", "myopia-h,myopia-l",
                              "--out", out], capsys)
        assert code == 0
        rows = open(out + "/sweep.csv").read().strip().splitlines()
        assert len(rows) == 1 + 3 * 2

    def test_spillover_monotone_with_crn(self, tmp_path, capsys):
        out = str(tmp_path / "sp")
        code, _, _ = run_cli(["sweep", "--scenario", "shanghai4",
                              "--n-paths", "40", "--axis", "spillover",
                              "--grid", "0.8,1.0,1.2", "--seeds", "3",
                              "--policies", "myopia-l", "--out", out], capsys)
        assert code == 0
        rows = open(out + "/sweep.csv").read().strip().splitlines()[1:]
        means = [float(r.split(",")[3]) for r in rows]
        assert means[0] <= means[1] <= means[2]


class TestMetricsCmd:
    def test_csv_schema(self, tiny_scn, capsys):
        code, out, _ = run_cli(["metrics", "--scenario", tiny_scn,
                                "--policies", "all-in,myopia-h,myopia-l"], capsys)
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == ("policy,option_value,e_npv,profitability,"
                            "zero_demand_terms,congestion_failures")
        assert len(lines) == 4
        assert lines[1].startswith("all-in,,")  # no option value for all-in


class TestExport:
    def test_matrices_written(self, tiny_scn, tmp_path, capsys):
        out = str(tmp_path / "exp")
        code, _, _ = run_cli(["export", "--scenario", tiny_scn,
                              "--seeds", "2", "--out", out], capsys)
        assert code == 0
        header = open(out + "/invest_times.csv").readline().strip()
        assert header == "policy,region,mean_invest_time"
        co = open(out + "/co_invest.csv").read().strip().splitlines()
        assert co[0] == "region_i,region_j,count"
        assert len(co) == 1 + 16


class TestCaseStudy:
    def test_shanghai_small(self, tmp_path, capsys):
        out = str(tmp_path / "cs")
        code, msg, _ = run_cli(["casestudy", "--city", "shanghai4",
                                "--seeds", "2", "--n-paths", "20",
                                "--out", out], capsys)
        assert code == 0
        rows = open(out + "/casestudy_shanghai4.csv").read().strip().splitlines()
        assert rows[0] == ("setting,policy,mean_option_value,mean_e_npv,"
                           "mean_profitability,n_seeds")
        # two settings x three policies
        assert len(rows) == 1 + 6

    def test_beijing9_smoke(self, tmp_path, capsys):
        out = str(tmp_path / "cs9")
        code, _, _ = run_cli(["casestudy", "--city", "beijing9", "--seeds", "1",
                              "--n-paths", "10", "--out", out], capsys)
        assert code == 0

    @pytest.mark.xfail(
        strict=True,
        reason="with costs pinned to 40%/15% of mean t0 demand the full-network "
               "threshold is ~17% of total t0 demand, so all-in deployment is "
               "profitable from t0 and staged schedules can only drop positive "
               "early ratio terms; the published ordering implies thresholds "
               "near total demand, which the stated cost calibration cannot "
               "produce at any demand scale")
    def test_nyc_staged_profitability_beats_allin(self):
        import ssrd
        from ssrd.datasets import NYC_PEAK_MULTIPLIER, build_named_scenario
        from ssrd.metrics import (CongestionParams, DeploymentSchedule,
                                  congestion_transform, profitability)
        from ssrd.sequences import myopia_sequence
        from ssrd.valuation import RoaEvaluator

        scen = build_named_scenario("nyc7", n_paths=40)
        tt = ssrd.travel_time_matrix(scen.regions, speed=19.31,
                                     peak_multiplier=NYC_PEAK_MULTIPLIER)
        params = CongestionParams()
        seq = myopia_sequence(scen, "low")
        evaluator = RoaEvaluator(scen)
        wins = 0
        for offset in range(20):
            seed = scen.seed + offset
            result = evaluator.evaluate(seq, seed=seed)
            paths, _ = congestion_transform(evaluator.paths_for(seq, seed), tt, params)
            staged = profitability(paths, DeploymentSchedule.from_roa(result),
                                   scen.costs, scen.rho).value
            allin = profitability(paths, DeploymentSchedule.all_in(7),
                                  scen.costs, scen.rho).value
            wins += staged >= allin
        assert wins > 10


class TestUsageErrors:
    def test_unknown_subcommand_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "ssrd.cli", "frobnicate"],
            capture_output=True, text=True)
        assert proc.returncode == 2

    def test_missing_required_flag_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "ssrd.cli", "myopia"],
            capture_output=True, text=True)
        assert proc.returncode == 2


class TestConfigOverride:
    def test_config_changes_spillover(self, tiny_scn, tmp_path, capsys):
        cfg = tmp_path / "over.cfg"
        cfg.write_text("spillover.strength = 1.2\nscenario.n_paths = 25\n")
        code, out, _ = run_cli(["evaluate", "--scenario", tiny_scn,
                                "--config", str(cfg),
                                "--sequence", "[[0,1],[2,3]]"], capsys)
        assert code == 0

    def test_unknown_config_key_rejected(self, tiny_scn, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("scenario.wat = 1\n")
        code, _, err = run_cli(["evaluate", "--scenario", tiny_scn,
                                "--config", str(cfg),
                                "--sequence", "[[0,1],[2,3]]"], capsys)
        assert code == 3
