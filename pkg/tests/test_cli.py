import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from poisbkg import PairedDataset, write_csv
from poisbkg.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


@pytest.fixture
def data_file(tmp_path):
    S = np.ones(100, int)
    S[:20] = 2
    path = tmp_path / "data.csv"
    write_csv(PairedDataset(S, np.ones(100, int)), path, sidecar=False)
    return path


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text("theta_values = [1.0]\nbeta_values = [1.0, 10.0]\nN_values = [15]\nM = 12\nmaster_seed = 3\n")
    return path


class TestFit:
    def test_joint(self, capsys, data_file):
        code, doc, _ = run(capsys, "fit", "--method", "joint", "--ts", "1", "--tb", "1", str(data_file))
        assert code == 0
        assert doc["theta_hat"] == pytest.approx(0.2)
        assert doc["background_hat"] == [pytest.approx(1.0)]
        assert doc["schema_version"] == 1
        assert doc["converged"] is True

    def test_wstat_on_empty_data(self, capsys, tmp_path):
        path = tmp_path / "z.csv"
        write_csv(PairedDataset(np.zeros(5, int), np.zeros(5, int)), path)
        code, doc, _ = run(capsys, "fit", "--method", "wstat", str(path))
        assert code == 0
        assert doc["theta_hat"] == 0.0 and doc["statistic"] == 0.0
        assert doc["at_boundary"] is True

    def test_fixed_with_empty_background_bin(self, capsys, tmp_path):
        path = tmp_path / "f.csv"
        write_csv(PairedDataset([3, 1, 2], [0, 2, 4]), path)
        code, doc, _ = run(capsys, "fit", "--method", "fixed", str(path))
        assert code == 0 and doc["theta_hat"] > 0

    def test_output_file(self, capsys, data_file, tmp_path):
        out = tmp_path / "r.json"
        code, doc, _ = run(capsys, "fit", "--method", "fixed", str(data_file), "-o", str(out))
        assert code == 0 and doc is None
        assert json.loads(out.read_text())["method"] == "fixed"

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "fit", "--method", "joint", str(tmp_path / "none.csv"))
        assert code == 4 and "error" in err

    def test_invalid_file(self, capsys, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,S,B\n0,1,1\n1,-3,1\n")
        code, _, err = run(capsys, "fit", "--method", "joint", str(path))
        assert code == 2 and "non-negative" in err

    def test_unknown_method(self, capsys, data_file):
        code, _, err = run(capsys, "fit", "--method", "chi2", str(data_file))
        assert code == 2 and "unknown method" in err

    def test_no_input(self, capsys):
        code, _, _ = run(capsys, "fit", "--method", "joint")
        assert code == 2


class TestMoments:
    def test_reference_row(self, capsys):
        code, doc, _ = run(capsys, "moments", "--mu", "1.0", "--bins", "100", "--df", "1")
        assert code == 0
        assert doc["kb"]["expectation"] == pytest.approx(112.7, rel=0.01)
        assert doc["kb"]["variance"] == pytest.approx(137.8, rel=0.02)

    def test_chi_squared(self, capsys):
        code, doc, _ = run(capsys, "moments", "--mu", "100", "--bins", "100", "--df", "1")
        assert (doc["chi_squared"]["expectation"], doc["chi_squared"]["variance"]) == (99.0, 198.0)

    def test_zscore(self, capsys):
        code, doc, _ = run(capsys, "moments", "--mu", "100", "--bins", "100", "--df", "1", "--observed", "99")
        assert doc["z_chi_squared"] == 0.0
        assert "z_kb" in doc

    @pytest.mark.parametrize("argv", [["--bins", "0"], ["--bins", "5", "--df", "-1"]])
    def test_invalid(self, capsys, argv):
        code, _, err = run(capsys, "moments", "--mu", "1.0", *argv)
        assert code == 2 and err

    def test_invalid_mean(self, capsys):
        code, _, _ = run(capsys, "moments", "--mu", "0", "--bins", "3")
        assert code == 2


class TestDf:
    def test_joint(self, capsys):
        code, doc, _ = run(capsys, "df", "--method", "joint", "--theta", "1", "--beta", "1", "--n", "100",
                           "--r", "1000")
        assert code == 0
        assert doc["df"] == pytest.approx(2.0, abs=0.3)
        assert doc["optimism"] == pytest.approx(2 * doc["df"] / 100)

    def test_wstat(self, capsys):
        code, doc, _ = run(capsys, "df", "--method", "wstat", "--theta", "1", "--beta", "10", "--r", "300")
        assert doc["df"] == pytest.approx(48.0, abs=3.0)

    def test_too_few_replicates(self, capsys):
        code, _, err = run(capsys, "df", "--method", "joint", "--theta", "1", "--beta", "1", "--r", "1")
        assert code == 2 and "replicates must be ≥ 2" in err

    def test_reproducible(self, capsys):
        argv = ["df", "--method", "fixed", "--theta", "1", "--beta", "1", "--r", "50", "--seed", "4"]
        assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


class TestSimulate:
    def test_outputs(self, capsys, small_config, tmp_path):
        out = tmp_path / "out"
        code, doc, _ = run(capsys, "simulate", str(small_config), "-o", str(out), "--ecdf", "--svg")
        assert code == 0 and doc["failed_cells"] == 0
        rows = list(csv.DictReader((out / "small.csv").open()))
        assert len(rows) == 2
        assert (out / "ecdf_cell00_wstat_theta_hat.csv").exists()
        assert (out / "ecdf_cell01_fixed_statistic.svg").exists()

    def test_seed_reproducible(self, capsys, small_config, tmp_path):
        for d in ("a", "b"):
            run(capsys, "simulate", str(small_config), "-o", str(tmp_path / d), "--seed", "7", "--keep-samples")
        for name in ("small.csv", "small_samples.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        run(capsys, "simulate", str(small_config), "-o", str(tmp_path / "c"), "--seed", "8")
        assert (tmp_path / "a" / "small.csv").read_bytes() != (tmp_path / "c" / "small.csv").read_bytes()

    def test_fit_reproduces_recorded_sample(self, capsys, small_config, tmp_path):
        run(capsys, "simulate", str(small_config), "-o", str(tmp_path), "--keep-samples")
        samples = tmp_path / "small_samples.json"
        for method in ("wstat", "joint", "fixed"):
            code, doc, _ = run(capsys, "fit", "--samples", str(samples), "--cell", "1", "--realization", "4",
                               "--method", method)
            assert code == 0 and doc["matches_recorded"] is True

    @pytest.mark.parametrize("name", ["grid_n100", "grid_n10.toml"])
    def test_shipped_config_by_name(self, capsys, tmp_path, name):
        code, doc, _ = run(capsys, "simulate", name, "-o", str(tmp_path), "--M", "2")
        assert code == 0 and doc["cells"] == 16
        stem = name.split(".")[0]
        assert len(list(csv.DictReader((tmp_path / f"{stem}.csv").open()))) == 16

    def test_config_error_has_line(self, capsys, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("theta_values = [1.0]\nbeta_values = [0.0]\n")
        code, _, err = run(capsys, "simulate", str(path), "-o", str(tmp_path))
        assert code == 2 and "bad.toml:2" in err

    def test_missing_config(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", str(tmp_path / "nope.toml"))
        assert code == 4

    def test_bad_jobs_env(self, capsys, small_config, tmp_path, monkeypatch):
        monkeypatch.setenv("POISBKG_JOBS", "many")
        code, _, err = run(capsys, "simulate", str(small_config), "-o", str(tmp_path))
        assert code == 2 and "POISBKG_JOBS" in err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "poisbkg.cli", "moments", "--mu", "3", "--bins", "10"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["n_bins"] == 10
