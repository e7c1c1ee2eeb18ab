"""CLI behavior: subcommands, exit codes, report format, determinism."""

import numpy as np
import pytest

from pimml.bench import REPORT_COLUMNS, REPORT_VERSION, main
from pimml.kernels import model_from_text
from pimml.layout import ingest_csv


def read_report(path):
    lines = path.read_text().splitlines()
    assert lines[0] == REPORT_VERSION
    assert lines[1] == ",".join(REPORT_COLUMNS)
    return [dict(zip(REPORT_COLUMNS, ln.split(","))) for ln in lines[2:]]


def strip_wall(rows):
    return [{k: v for k, v in r.items() if k != "wall_time_s"} for r in rows]


class TestGenData:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["gen-data", "--kind", "linreg", "--rows", "200", "--features", "4",
                "--seed", "7"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_rows_header_only(self, tmp_path):
        out = tmp_path / "z.csv"
        assert main(["gen-data", "--kind", "linreg", "--rows", "0", "--out", str(out)]) == 0
        assert out.read_text().strip() == ",".join([f"f{i}" for i in range(8)] + ["y"])

    def test_blobs_label_ids(self, tmp_path):
        out = tmp_path / "b.csv"
        assert main(["gen-data", "--kind", "blobs", "--rows", "300", "--k", "4",
                     "--out", str(out)]) == 0
        ds = ingest_csv(out)
        assert set(np.unique(ds.labels)) <= {0.0, 1.0, 2.0, 3.0}


class TestTrain:
    def test_kmeans_compare_parity(self, tmp_path):
        rep = tmp_path / "r.csv"
        rc = main(["train", "--algo", "kmeans", "--mode", "real", "--rows", "600",
                   "--features", "3", "--k", "3", "--cores", "4", "--iterations", "20",
                   "--compare", "--report", str(rep)])
        assert rc == 0
        rows = read_report(rep)
        assert rows[0]["parity"] == "assignments_match=1.0"

    def test_dtree_compare_parity(self, tmp_path):
        rep = tmp_path / "r.csv"
        rc = main(["train", "--algo", "dtree", "--mode", "real", "--rows", "800",
                   "--cores", "3", "--max-depth", "3", "--compare", "--report", str(rep)])
        assert rc == 0
        assert read_report(rep)[0]["parity"] == "trees_equal=1"

    def test_model_out_roundtrip(self, tmp_path):
        mpath = tmp_path / "m.txt"
        rc = main(["train", "--algo", "linreg", "--rows", "400", "--features", "3",
                   "--cores", "2", "--iterations", "10", "--model-out", str(mpath)])
        assert rc == 0
        model = model_from_text(mpath.read_text())
        assert model.weights.shape == (3,)

    def test_csv_input_with_scaling(self, tmp_path):
        data = tmp_path / "d.csv"
        main(["gen-data", "--kind", "linreg", "--rows", "300", "--features", "3",
              "--out", str(data)])
        rc = main(["train", "--algo", "linreg", "--data", str(data), "--cores", "2",
                   "--iterations", "5"])
        assert rc == 0

    def test_determinism_modulo_wall_time(self, tmp_path):
        reps = []
        for name in ("r1.csv", "r2.csv"):
            rep = tmp_path / name
            rc = main(["train", "--algo", "logreg", "--rows", "500", "--features", "4",
                       "--cores", "4", "--iterations", "15", "--seed", "3",
                       "--compare", "--report", str(rep)])
            assert rc == 0
            reps.append(read_report(rep))
        assert strip_wall(reps[0]) == strip_wall(reps[1])

    def test_seed_echoed(self, tmp_path):
        rep = tmp_path / "r.csv"
        main(["train", "--algo", "linreg", "--rows", "100", "--cores", "1",
              "--iterations", "1", "--report", str(rep)])
        assert read_report(rep)[0]["seed"] == "42"  # default seed


class TestExitCodes:
    def test_config_file_missing(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.ini"), "train",
                     "--algo", "linreg"]) == 2

    def test_bad_config_value(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[device]\ncores = banana\n")
        assert main(["--config", str(ini), "train", "--algo", "linreg"]) == 2

    def test_bad_mode_in_config(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[arith]\nmode = ternary\n")
        assert main(["--config", str(ini), "train", "--algo", "linreg"]) == 2

    def test_capacity_exceeded(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[device]\nbank_bytes = 4096\nscratchpad_bytes = 512\n")
        rc = main(["--config", str(ini), "train", "--algo", "linreg",
                   "--rows", "4096", "--features", "8", "--cores", "1"])
        assert rc == 3

    def test_fixed_point_overflow(self, tmp_path):
        data = tmp_path / "big.csv"
        rows = "\n".join("30000.0,30000.0,30000.0" for _ in range(64))
        data.write_text(rows + "\n")
        rc = main(["train", "--algo", "linreg", "--data", str(data), "--no-scale",
                   "--cores", "1", "--iterations", "1", "--mode", "fixed"])
        assert rc == 4

    def test_env_config(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PIMML_CONFIG", str(tmp_path / "absent.ini"))
        assert main(["train", "--algo", "linreg", "--rows", "10", "--cores", "1",
                     "--iterations", "1"]) == 2

    def test_config_applied(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[device]\ncores = 3\n[train]\niterations = 2\n")
        rep = tmp_path / "r.csv"
        rc = main(["--config", str(ini), "train", "--algo", "linreg",
                   "--rows", "100", "--report", str(rep)])
        assert rc == 0
        row = read_report(rep)[0]
        assert row["cores"] == "3" and row["iterations"] == "2"


class TestScale:
    def test_weak_sweep_emits_per_point(self, tmp_path):
        rep = tmp_path / "r.csv"
        rc = main(["scale", "--algo", "linreg", "--sweep", "weak",
                   "--cores-list", "1,2,4", "--rows-per-core", "128",
                   "--iterations", "2", "--report", str(rep)])
        assert rc == 0
        rows = read_report(rep)
        assert [r["cores"] for r in rows] == ["1", "2", "4"]
        compute = {r["max_compute_cycles"] for r in rows}
        assert len(compute) == 1  # weak-scaling invariance

    def test_descending_cores_rejected(self, tmp_path):
        rc = main(["scale", "--sweep", "weak", "--cores-list", "4,2"])
        assert rc == 2

    def test_overlap_invariant_on_all_records(self, tmp_path):
        rep = tmp_path / "r.csv"
        main(["scale", "--algo", "kmeans", "--sweep", "strong", "--cores-list", "1,4",
              "--rows", "512", "--k", "3", "--iterations", "5", "--report", str(rep)])
        for r in read_report(rep):
            assert int(r["overlapped_total_cycles"]) <= int(r["serialized_total_cycles"])


class TestLutCheck:
    def test_default_passes(self):
        assert main(["lut-check", "--samples", "100000"]) == 0

    def test_few_entries_still_within_bound(self):
        assert main(["lut-check", "--entries", "64", "--samples", "100000"]) == 0
