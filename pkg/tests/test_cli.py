import json

import numpy as np
import pytest

from proptwin import (
    LogDistanceParams,
    load_model,
    log_distance_loss,
    parse_simple,
    predict,
    read_linkrun,
)
from proptwin.cli import main

GEN = LogDistanceParams(1.0, 47.0, 2.2)


def run_cli(args, capsys=None):
    code = main([str(a) for a in args])
    return code


def gen_and_ingest(out, seed=0, n=4000):
    assert run_cli(["gen-synth", "--out", out, "--seed", seed, "--n-samples", n]) == 0
    raw = out / "gen-synth" / "run" / "raw_trace.csv"
    assert run_cli(["ingest", "--raw", raw, "--out", out]) == 0
    return out / "ingest" / "run" / "samples.csv"


class TestPipeline:
    def test_closed_loop_rmse_against_generator(self, tmp_path):
        samples_csv = gen_and_ingest(tmp_path, n=6000)
        assert run_cli(["train", "--samples", samples_csv, "--out", tmp_path]) == 0
        model = load_model(tmp_path / "train" / "run" / "pathloss.model")
        samples = parse_simple(samples_csv)
        errs = [predict(model, s.distance) - log_distance_loss(s.distance, GEN) for s in samples]
        rmse = float(np.sqrt(np.mean(np.square(errs))))
        assert rmse <= 1.5

    def test_train_report_contents(self, tmp_path):
        samples_csv = gen_and_ingest(tmp_path, n=2000)
        assert run_cli(["train", "--samples", samples_csv, "--out", tmp_path,
                        "--scenario", "extrapolation"]) == 0
        report = json.loads((tmp_path / "train" / "run" / "report.json").read_text())
        assert report["scenario"] == "extrapolation"
        assert report["n_train"] + report["n_test"] == 2000
        assert report["train_rmse_db"] > 0
        assert report["train_range_m"][1] < 10.0

    def test_extrapolation_scenario_predicts_flat(self, tmp_path):
        samples_csv = gen_and_ingest(tmp_path, n=2000)
        assert run_cli(["train", "--samples", samples_csv, "--out", tmp_path,
                        "--scenario", "extrapolation"]) == 0
        model = load_model(tmp_path / "train" / "run" / "pathloss.model")
        hi = model.train_range[1]
        assert predict(model, 2 * hi) == predict(model, hi)

    def test_fit_fading_selects_normal_on_synth(self, tmp_path):
        samples_csv = gen_and_ingest(tmp_path, n=6000)
        assert run_cli(["fit-fading", "--samples", samples_csv, "--out", tmp_path]) == 0
        report = json.loads((tmp_path / "fit-fading" / "run" / "report.json").read_text())
        assert report["selected_family"] == "normal"
        sigma = report["selected_params"]["std"]
        assert sigma == pytest.approx(4.0, rel=0.15)
        assert "candidates" in report and "normal" in report["candidates"]
        cdf = (tmp_path / "fit-fading" / "run" / "fading_cdf.csv").read_text().splitlines()
        assert cdf[0] == "loss_db,cum_prob"
        assert len(cdf) == 1001

    def test_predict_grid_and_distances(self, tmp_path):
        assert run_cli(["predict", "--model", "friis:5220", "--distances", "1,10",
                        "--out", tmp_path]) == 0
        lines = (tmp_path / "predict" / "run" / "predictions.csv").read_text().splitlines()
        assert lines[0] == "distance_m,predicted_loss_db"
        d, loss = lines[2].split(",")
        assert float(d) == 10.0
        assert float(loss) == pytest.approx(66.80, abs=0.01)

        assert run_cli(["predict", "--model", "logdist:1,47,2.2", "--grid", "2:4:1",
                        "--out", tmp_path, "--name", "grid"]) == 0
        lines = (tmp_path / "predict" / "grid" / "predictions.csv").read_text().splitlines()
        assert len(lines) == 4  # header + 2,3,4

    def test_simulate_and_evaluate(self, tmp_path):
        traj = tmp_path / "traj.csv"
        rows = ["t_s,x,y,z"] + [f"{t}.0,{2.07 + t * 0.22},0,0" for t in range(101)]
        traj.write_text("\n".join(rows) + "\n")

        samples_csv = gen_and_ingest(tmp_path, n=4000)
        assert run_cli(["train", "--samples", samples_csv, "--out", tmp_path]) == 0
        assert run_cli(["fit-fading", "--samples", samples_csv, "--out", tmp_path]) == 0
        model = tmp_path / "train" / "run" / "pathloss.model"
        cdf = tmp_path / "fit-fading" / "run" / "fading_cdf.csv"
        assert run_cli(["simulate", "--model", model, "--cdf", cdf, "--trajectory", traj,
                        "--fixed", "0,0,0", "--out", tmp_path]) == 0
        linkrun_csv = tmp_path / "simulate" / "run" / "linkrun.csv"
        linkrun = read_linkrun(linkrun_csv)
        assert len(linkrun.rows) == 101
        assert linkrun.rows[0].goodput > 0

        assert run_cli(["evaluate", "--pred", linkrun_csv, "--ref", samples_csv,
                        "--out", tmp_path]) == 0
        out = tmp_path / "evaluate" / "run"
        for name in ("percentile_model.csv", "percentile_real.csv", "percentile_diff.csv",
                     "box_model.csv", "box_real.csv", "manifest.json"):
            assert (out / name).exists()


class TestDeterminism:
    def test_rerun_is_byte_identical(self, tmp_path):
        products = {}
        for run_name in ("one", "two"):
            out = tmp_path / run_name
            samples_csv = gen_and_ingest(out, seed=5, n=3000)
            assert run_cli(["train", "--samples", samples_csv, "--out", out, "--seed", 5]) == 0
            assert run_cli(["fit-fading", "--samples", samples_csv, "--out", out, "--seed", 5]) == 0
            traj = out / "traj.csv"
            traj.write_text("t_s,x,y,z\n" + "".join(
                f"{t}.0,{2.0 + 0.2 * t},0,0\n" for t in range(50)))
            assert run_cli(["simulate", "--model", out / "train" / "run" / "pathloss.model",
                            "--cdf", out / "fit-fading" / "run" / "fading_cdf.csv",
                            "--trajectory", traj, "--fixed", "0,0,0",
                            "--out", out, "--seed", 5]) == 0
            products[run_name] = {
                "model": (out / "train" / "run" / "pathloss.model").read_bytes(),
                "cdf": (out / "fit-fading" / "run" / "fading_cdf.csv").read_bytes(),
                "linkrun": (out / "simulate" / "run" / "linkrun.csv").read_bytes(),
            }
        assert products["one"] == products["two"]

    def test_manifests_equal_up_to_timestamp(self, tmp_path):
        manifests = []
        for run_name in ("one", "two"):
            out = tmp_path / run_name
            assert run_cli(["gen-synth", "--out", out, "--n-samples", 100]) == 0
            data = json.loads((out / "gen-synth" / "run" / "manifest.json").read_text())
            data.pop("created_utc")
            manifests.append(data)
        assert manifests[0] == manifests[1]

    def test_stream_id_changes_fading_sequence(self, tmp_path):
        traj = tmp_path / "traj.csv"
        traj.write_text("t_s,x,y,z\n" + "".join(f"{t}.0,5.0,0,0\n" for t in range(30)))
        runs = {}
        for stream_id in (0, 1):
            out = tmp_path / f"s{stream_id}"
            assert run_cli(["simulate", "--model", "friis:5220", "--trajectory", traj,
                            "--fixed", "0,0,0", "--fading-sigma", 4.0,
                            "--stream-id", stream_id, "--out", out]) == 0
            runs[stream_id] = (out / "simulate" / "run" / "linkrun.csv").read_bytes()
        assert runs[0] != runs[1]


class TestErrorPaths:
    def test_simple_file_to_ingest_suggests_train(self, tmp_path, capsys):
        bad = tmp_path / "samples.csv"
        bad.write_text("distance_m,path_loss_db\n1.0,50\n")
        assert run_cli(["ingest", "--raw", bad, "--out", tmp_path]) == 1
        err = capsys.readouterr().err
        assert err.startswith("proptwin: E_USAGE:")
        assert "train" in err

    def test_missing_column_names_expected_header(self, tmp_path, capsys):
        bad = tmp_path / "raw.csv"
        bad.write_text("t_s,tx_power_dbm,snr_db\n0,7,30\n")
        assert run_cli(["ingest", "--raw", bad, "--out", tmp_path]) == 1
        err = capsys.readouterr().err
        assert err.startswith("proptwin: E_PARSE:")
        assert "tx_x" in err  # names the full expected column set

    def test_parse_error_carries_file_and_line(self, tmp_path, capsys):
        bad = tmp_path / "samples.csv"
        bad.write_text("distance_m,path_loss_db\n1.0,oops\n")
        assert run_cli(["train", "--samples", bad, "--out", tmp_path]) == 1
        err = capsys.readouterr().err
        assert "samples.csv:2" in err

    def test_single_line_error_output(self, tmp_path, capsys):
        bad = tmp_path / "nope.csv"
        assert run_cli(["train", "--samples", bad, "--out", tmp_path]) == 1
        err = capsys.readouterr().err.strip()
        assert len(err.splitlines()) == 1
        assert err.startswith("proptwin: E_")

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus_key=1\n")
        assert run_cli(["gen-synth", "--out", tmp_path, "--config", cfg]) == 1
        assert "bogus_key" in capsys.readouterr().err


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_win(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n_samples=123\nseed=9\n")
        assert run_cli(["gen-synth", "--out", tmp_path, "--config", cfg]) == 0
        manifest = json.loads((tmp_path / "gen-synth" / "run" / "manifest.json").read_text())
        assert manifest["parameters"]["n_samples"] == 123
        assert manifest["parameters"]["seed"] == 9

        assert run_cli(["gen-synth", "--out", tmp_path, "--name", "flagwin",
                        "--config", cfg, "--n-samples", 77]) == 0
        manifest = json.loads((tmp_path / "gen-synth" / "flagwin" / "manifest.json").read_text())
        assert manifest["parameters"]["n_samples"] == 77
        assert manifest["parameters"]["seed"] == 9
