import io

import numpy as np
import pytest

from bisparse.cli import main
from bisparse.measurements import read_measurement_file, sample_map, sample_structured
from bisparse.projections import exact_project
from bisparse.symcore import read_matrix, write_matrix


def write_matrix_file(path, mat):
    with open(path, "w") as fh:
        write_matrix(mat, fh)


@pytest.fixture
def diag_matrix(tmp_path):
    path = tmp_path / "m.txt"
    write_matrix_file(path, np.diag([5.0, 3.0, 1.0]))
    return path


class TestProject:
    def test_exact_matches_module(self, tmp_path, diag_matrix, capsys):
        out = tmp_path / "out.txt"
        code = main([
            "project", "--op", "exact", "--s", "2", "--r", "1",
            "--input", str(diag_matrix), "--output", str(out),
        ])
        assert code == 0
        lines = out.read_text().split("\n")
        assert lines[0] == "1 2"  # 1-based support
        expected = exact_project(np.diag([5.0, 3.0, 1.0]), 2, 1)
        assert float(lines[1]) == pytest.approx(expected.objective)
        with open(out) as fh:
            fh.readline()
            fh.readline()
            mat = read_matrix(fh)
        assert np.allclose(mat, expected.matrix, atol=1e-12)
        assert "# seed none" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "project" in capsys.readouterr().out

    def test_unknown_subcommand_exits_two(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_unknown_flag_exits_two(self, diag_matrix):
        assert main(["project", "--op", "exact", "--s", "2", "--r", "1",
                     "--wat", "1", "--input", str(diag_matrix)]) == 2

    def test_malformed_matrix_names_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("2\n1.0 2.0\n2.0\n")
        code = main(["project", "--op", "tail-bisparse", "--s", "1",
                     "--input", str(bad)])
        assert code == 2
        assert "line 3" in capsys.readouterr().err

    def test_head_shrink_via_flags(self, tmp_path):
        mat = np.random.default_rng(0).standard_normal((6, 6))
        mat = (mat + mat.T) / 2
        src = tmp_path / "m.txt"
        write_matrix_file(src, mat)
        out = tmp_path / "o.txt"
        code = main(["project", "--op", "head-shrink", "--s", "2",
                     "--sprime", "1,2,3,4", "--input", str(src), "--output", str(out)])
        assert code == 0

    def test_hierarchical_op(self, tmp_path, diag_matrix):
        out = tmp_path / "o.txt"
        code = main(["project", "--op", "hierarchical", "--s", "2", "--t", "1",
                     "--input", str(diag_matrix), "--output", str(out)])
        assert code == 0


class TestMeasureRecover:
    def test_pipeline_roundtrip(self, tmp_path, capsys):
        x, _ = sample_structured(8, 2, 1, np.random.default_rng(42))
        xfile = tmp_path / "x.txt"
        write_matrix_file(xfile, x)
        meas = tmp_path / "meas.txt"
        code = main(["measure", "--kind", "dense-gaussian", "--m", "40",
                     "--seed", "7", "--input", str(xfile), "--output", str(meas)])
        assert code == 0
        assert "# seed 7" in capsys.readouterr().err
        with open(meas) as fh:
            mp, y = read_measurement_file(fh)
        assert np.allclose(y, mp.apply(x), atol=1e-12)

        rec = tmp_path / "rec.txt"
        code = main(["recover", "--algo", "exact-iht", "--s", "2", "--r", "1",
                     "--seed", "1", "--input", str(meas), "--output", str(rec)])
        assert code == 0
        lines = rec.read_text().split("\n")
        assert lines[0] == "converged 1"
        with open(rec) as fh:
            for _ in range(4):
                fh.readline()
            est = read_matrix(fh)
        assert np.linalg.norm(est - x) <= 1e-6

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_strict_flag_reports_failure(self, tmp_path):
        x, _ = sample_structured(8, 2, 1, np.random.default_rng(43))
        xfile = tmp_path / "x.txt"
        write_matrix_file(xfile, x)
        meas = tmp_path / "meas.txt"
        main(["measure", "--kind", "rank-one", "--m", "60", "--seed", "8",
              "--input", str(xfile), "--output", str(meas)])
        code = main(["recover", "--algo", "rank-one", "--s", "2", "--r", "1",
                     "--beta", "1e-6", "--max-iters", "50", "--strict",
                     "--seed", "1", "--input", str(meas), "--output", str(tmp_path / "r.txt")])
        assert code == 1

    def test_byte_stable_output(self, tmp_path):
        x, _ = sample_structured(6, 2, 1, np.random.default_rng(44))
        xfile = tmp_path / "x.txt"
        write_matrix_file(xfile, x)
        outs = []
        for name in ("a", "b"):
            meas = tmp_path / f"meas_{name}.txt"
            main(["measure", "--kind", "dense-gaussian", "--m", "21", "--seed", "5",
                  "--input", str(xfile), "--output", str(meas)])
            outs.append(meas.read_text())
        assert outs[0] == outs[1]


class TestRip:
    def test_estimate_output(self, tmp_path, capsys):
        out = tmp_path / "rip.txt"
        code = main(["rip", "--ensemble", "dense-gaussian", "--n", "10", "--m", "60",
                     "--s", "2", "--r", "1", "--trials", "50", "--seed", "3",
                     "--output", str(out)])
        assert code == 0
        text = out.read_text()
        assert text.startswith("mode l2")
        assert "delta_lower" in text

    def test_cross_term_flag(self, tmp_path):
        out = tmp_path / "rip.txt"
        code = main(["rip", "--ensemble", "dense-gaussian", "--n", "10", "--m", "60",
                     "--s", "2", "--r", "1", "--trials", "50", "--seed", "3",
                     "--cross-term", "--delta", "0.9", "--output", str(out)])
        assert code == 0
        assert "cross_within 1" in out.read_text()


class TestBench:
    SPEC = (
        "algo = exact-iht\n"
        "ensemble = dense-gaussian\n"
        "n = 6\n"
        "s = 2\n"
        "r = 1\n"
        "m = 21\n"
        "trials_per_cell = 2\n"
        "base_seed = 9\n"
    )

    def test_phase_run_and_byte_identical(self, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text(self.SPEC)
        csvs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            code = main(["bench", "--spec", str(spec), "--output", str(out)])
            assert code == 0
            csvs.append(out.read_bytes())
        assert csvs[0] == csvs[1]

    def test_aggregate_output(self, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text(self.SPEC)
        agg = tmp_path / "agg.csv"
        code = main(["bench", "--spec", str(spec), "--output", str(tmp_path / "o.csv"),
                     "--aggregate", str(agg)])
        assert code == 0
        assert agg.read_text().count("\n") == 2

    def test_rip_mode(self, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text(self.SPEC.replace("trials_per_cell = 2", "trials_per_cell = 30"))
        out = tmp_path / "rip.csv"
        code = main(["bench", "--spec", str(spec), "--mode", "rip", "--output", str(out)])
        assert code == 0
        assert out.read_text().startswith("ensemble,n,s,r,m,mode,")

    def test_seed_override(self, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text(self.SPEC)
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        main(["bench", "--spec", str(spec), "--output", str(a)])
        main(["bench", "--spec", str(spec), "--seed", "123", "--output", str(b)])
        assert a.read_text() != b.read_text()
