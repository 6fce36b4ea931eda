import csv
import json

import numpy as np
import pytest

from combood import dataio, metrics
from combood.cli import main
from combood.detector import ComboodDetector
from combood.synth import ScenarioSpec, generate


@pytest.fixture()
def scenario_dir(tmp_path):
    """A small far-OOD scenario written through the synth subcommand."""
    out = tmp_path / "scenario"
    code = main([
        "synth", "--out-dir", str(out), "--dim-extrema", "6", "--dim-embed", "8",
        "--n-train", "400", "--n-id-test", "150", "--n-ood-test", "150",
        "--shift", "8", "--cov-scale", "1", "--seed", "11",
    ])
    assert code == 0
    return out


def read_csv_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestSynth:
    def test_writes_matrices_and_manifest(self, scenario_dir):
        manifest = json.loads((scenario_dir / "manifest.json").read_text())
        assert manifest["spec"]["seed"] == 11
        for name in manifest["files"].values():
            assert (scenario_dir / name).exists()
        train = dataio.load_matrix(scenario_dir / "train_extrema.npy")
        assert (train.rows, train.cols) == (400, 6)

    def test_matches_library_generation(self, scenario_dir):
        spec = ScenarioSpec(6, 8, 400, 150, 150, 8.0, 1.0, seed=11)
        s = generate(spec)
        stored = dataio.load_matrix(scenario_dir / "ood_embed.npy").values
        np.testing.assert_array_equal(stored, s.ood_embed)


class TestFit:
    def test_fit_writes_loadable_archive(self, scenario_dir, tmp_path, capsys):
        det_path = tmp_path / "det.combood"
        code = main([
            "fit", "--train-extrema", str(scenario_dir / "train_extrema.npy"),
            "--train-embed", str(scenario_dir / "train_embed.npy"),
            "--out", str(det_path), "--k", "10",
        ])
        assert code == 0
        archive = dataio.load_detector(det_path)
        assert archive.knn.k == 10
        assert archive.threshold is not None  # default 0.1 split calibrates
        err = capsys.readouterr().err
        assert "config" in err  # resolved config echoed to stderr

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        code = main([
            "fit", "--train-extrema", str(tmp_path / "absent.npy"),
            "--train-embed", str(tmp_path / "absent.npy"),
            "--out", str(tmp_path / "out.combood"),
        ])
        assert code == 2
        assert "absent.npy" in capsys.readouterr().err

    def test_negative_reg_c_is_usage_error(self, scenario_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main([
                "fit", "--train-extrema", str(scenario_dir / "train_extrema.npy"),
                "--train-embed", str(scenario_dir / "train_embed.npy"),
                "--out", str(tmp_path / "out.combood"), "--reg-c", "-1",
            ])
        assert exc.value.code == 1

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["fit", "--does-not-exist", "x"])
        assert exc.value.code == 1

    def test_calibration_skippable(self, scenario_dir, tmp_path):
        det_path = tmp_path / "det.combood"
        code = main([
            "fit", "--train-extrema", str(scenario_dir / "train_extrema.npy"),
            "--train-embed", str(scenario_dir / "train_embed.npy"),
            "--out", str(det_path), "--k", "10", "--calibrate-split", "0",
        ])
        assert code == 0
        assert dataio.load_detector(det_path).threshold is None


class TestScore:
    @pytest.fixture()
    def det_path(self, scenario_dir, tmp_path):
        path = tmp_path / "det.combood"
        assert main([
            "fit", "--train-extrema", str(scenario_dir / "train_extrema.npy"),
            "--train-embed", str(scenario_dir / "train_embed.npy"),
            "--out", str(path), "--k", "10",
        ]) == 0
        return path

    def test_scores_with_decisions(self, scenario_dir, tmp_path, det_path):
        out = tmp_path / "scores.csv"
        code = main([
            "score", "--detector", str(det_path),
            "--test-extrema", str(scenario_dir / "id_extrema.npy"),
            "--test-embed", str(scenario_dir / "id_embed.npy"),
            "--out", str(out), "--threads", "2",
        ])
        assert code == 0
        rows = read_csv_rows(out)
        assert len(rows) == 150
        assert set(rows[0]) == {"id", "kc", "mc", "score", "decision"}
        assert all(r["decision"] in ("ID", "OOD") for r in rows)

    def test_byte_identical_to_library(self, scenario_dir, tmp_path, det_path):
        out = tmp_path / "scores.csv"
        assert main([
            "score", "--detector", str(det_path),
            "--test-extrema", str(scenario_dir / "ood_extrema.npy"),
            "--test-embed", str(scenario_dir / "ood_embed.npy"),
            "--out", str(out), "--threads", "1",
        ]) == 0
        det = dataio.load_detector(det_path).to_detector()
        expected = det.score_samples(
            dataio.load_matrix(scenario_dir / "ood_extrema.npy").values,
            dataio.load_matrix(scenario_dir / "ood_embed.npy").values,
        )
        rows = read_csv_rows(out)
        for i, row in enumerate(rows):
            assert float(row["kc"]) == expected[i, 0]
            assert float(row["mc"]) == expected[i, 1]
            assert float(row["score"]) == expected[i, 2]

    def test_thread_count_does_not_change_output(self, scenario_dir, tmp_path, det_path, monkeypatch):
        outs = []
        for threads, env in (("1", None), ("4", None), (None, "3")):
            out = tmp_path / f"scores_{threads or env}.csv"
            argv = [
                "score", "--detector", str(det_path),
                "--test-extrema", str(scenario_dir / "id_extrema.npy"),
                "--test-embed", str(scenario_dir / "id_embed.npy"),
                "--out", str(out),
            ]
            if threads:
                argv += ["--threads", threads]
            if env:
                monkeypatch.setenv("COMBOOD_THREADS", env)
            else:
                monkeypatch.delenv("COMBOOD_THREADS", raising=False)
            assert main(argv) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_uncalibrated_omits_decision_and_warns(self, scenario_dir, tmp_path, capsys):
        det_path = tmp_path / "uncal.combood"
        assert main([
            "fit", "--train-extrema", str(scenario_dir / "train_extrema.npy"),
            "--train-embed", str(scenario_dir / "train_embed.npy"),
            "--out", str(det_path), "--k", "10", "--calibrate-split", "0",
        ]) == 0
        out = tmp_path / "scores.csv"
        assert main([
            "score", "--detector", str(det_path),
            "--test-extrema", str(scenario_dir / "id_extrema.npy"),
            "--test-embed", str(scenario_dir / "id_embed.npy"),
            "--out", str(out),
        ]) == 0
        assert "uncalibrated" in capsys.readouterr().err
        assert set(read_csv_rows(out)[0]) == {"id", "kc", "mc", "score"}

    def test_row_count_mismatch_is_data_error(self, scenario_dir, tmp_path, det_path, capsys):
        code = main([
            "score", "--detector", str(det_path),
            "--test-extrema", str(scenario_dir / "id_extrema.npy"),
            "--test-embed", str(scenario_dir / "train_embed.npy"),
            "--out", str(tmp_path / "x.csv"),
        ])
        assert code == 2
        assert "equal row counts" in capsys.readouterr().err


class TestEvalAndBench:
    @pytest.fixture()
    def score_files(self, scenario_dir, tmp_path):
        det_path = tmp_path / "det.combood"
        assert main([
            "fit", "--train-extrema", str(scenario_dir / "train_extrema.npy"),
            "--train-embed", str(scenario_dir / "train_embed.npy"),
            "--out", str(det_path), "--k", "10",
        ]) == 0
        id_csv, ood_csv = tmp_path / "id.csv", tmp_path / "ood.csv"
        for kind, out in (("id", id_csv), ("ood", ood_csv)):
            assert main([
                "score", "--detector", str(det_path),
                "--test-extrema", str(scenario_dir / f"{kind}_extrema.npy"),
                "--test-embed", str(scenario_dir / f"{kind}_embed.npy"),
                "--out", str(out), "--threads", "1",
            ]) == 0
        return det_path, id_csv, ood_csv

    def test_eval_matches_library_metrics(self, score_files, tmp_path):
        _, id_csv, ood_csv = score_files
        report_path = tmp_path / "report.json"
        assert main([
            "eval", "--id-scores", str(id_csv), "--ood-scores", str(ood_csv),
            "--out", str(report_path),
        ]) == 0
        report = json.loads(report_path.read_text())
        id_scores = [float(r["score"]) for r in read_csv_rows(id_csv)]
        ood_scores = [float(r["score"]) for r in read_csv_rows(ood_csv)]
        expected = metrics.evaluate(id_scores, ood_scores, tpr=0.95)
        assert report == expected.to_dict()
        assert report["auroc"] >= 0.99  # far-OOD scenario separates cleanly

    def test_eval_rejects_csv_without_scores(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        code = main(["eval", "--id-scores", str(bad), "--ood-scores", str(bad),
                     "--out", str(tmp_path / "r.json")])
        assert code == 2

    def test_bench_reports_timing(self, score_files, scenario_dir, tmp_path):
        det_path, _, _ = score_files
        out = tmp_path / "bench.json"
        assert main([
            "bench", "--detector", str(det_path),
            "--test-extrema", str(scenario_dir / "id_extrema.npy"),
            "--test-embed", str(scenario_dir / "id_embed.npy"),
            "--out", str(out), "--repeats", "2",
        ]) == 0
        report = json.loads(out.read_text())
        assert report["n_samples"] == 150
        assert report["repeats"] == 2
        assert report["parallel_components"] is True
        assert report["mean_ms"] > 0


class TestSweep:
    def test_far_ood_sweep_shape(self, scenario_dir, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main([
            "sweep", "--train-extrema", str(scenario_dir / "train_extrema.npy"),
            "--id-extrema", str(scenario_dir / "id_extrema.npy"),
            "--ood-extrema", str(scenario_dir / "ood_extrema.npy"),
            "--out", str(out),
        ])
        assert code == 0
        rows = read_csv_rows(out)
        assert [float(r["c"]) for r in rows] == [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e6]
        aurocs = np.array([float(r["auroc"]) for r in rows])
        assert (aurocs >= 0.9).all()
        # flat region around the default regularization
        middle = aurocs[2:5]
        assert middle.max() - middle.min() < 0.05

    def test_single_value(self, scenario_dir, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main([
            "sweep", "--train-extrema", str(scenario_dir / "train_extrema.npy"),
            "--id-extrema", str(scenario_dir / "id_extrema.npy"),
            "--ood-extrema", str(scenario_dir / "ood_extrema.npy"),
            "--out", str(out), "--c-values", "1",
        ]) == 0
        assert len(read_csv_rows(out)) == 1

    def test_negative_value_rejected(self, scenario_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main([
                "sweep", "--train-extrema", str(scenario_dir / "train_extrema.npy"),
                "--id-extrema", str(scenario_dir / "id_extrema.npy"),
                "--ood-extrema", str(scenario_dir / "ood_extrema.npy"),
                "--out", str(tmp_path / "s.csv"), "--c-values", "1,-2",
            ])
        assert exc.value.code == 1
