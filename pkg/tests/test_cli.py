"""End-to-end tests of the command-line interface."""

import json
import math

import numpy as np
import pytest

from lmsvtest.cli import EXIT_COMPUTATION, EXIT_FLAGGED, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSimulate:
    def test_writes_requested_rows(self, capsys, tmp_path):
        out = tmp_path / "x.csv"
        code, _, _ = run(
            capsys, "simulate", "--n", "500", "--hurst", "0.7", "--noise", "normal",
            "--seed", "1", "--out", str(out),
        )
        assert code == EXIT_OK
        assert len(out.read_text().strip().splitlines()) == 500

    def test_idempotent_given_seed(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            code, _, _ = run(
                capsys, "simulate", "--n", "100", "--hurst", "0.8",
                "--noise", "centered-pareto", "--alpha", "4", "--change", "mean",
                "--h", "1", "--tau", "0.5", "--seed", "11", "--out", str(path),
            )
            assert code == EXIT_OK
        assert a.read_text() == b.read_text()

    def test_latent_columns(self, capsys, tmp_path):
        out = tmp_path / "latent.csv"
        code, _, _ = run(
            capsys, "simulate", "--n", "50", "--hurst", "0.6", "--latent",
            "--seed", "3", "--out", str(out),
        )
        assert code == EXIT_OK
        rows = [line.split(",") for line in out.read_text().strip().splitlines()]
        assert all(len(r) == 3 for r in rows)
        y, eps, x = np.array(rows, dtype=float).T
        assert np.allclose(np.exp(y) * eps, x)

    def test_invalid_alpha_is_usage_error(self, capsys):
        code, _, err = run(
            capsys, "simulate", "--n", "10", "--hurst", "0.7",
            "--noise", "centered-pareto", "--alpha", "0.9", "--change", "mean",
        )
        assert code == EXIT_USAGE
        assert "alpha" in err

    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, _ = run(capsys, "simulate", "--n", "10", "--hurst", "0.7", "--bogus")
        assert code == EXIT_USAGE


@pytest.fixture()
def shifted_series(capsys, tmp_path):
    path = tmp_path / "shifted.csv"
    code, _, _ = run(
        capsys, "simulate", "--n", "500", "--hurst", "0.6", "--noise", "normal",
        "--change", "mean", "--h", "2", "--tau", "0.5", "--seed", "5",
        "--out", str(path),
    )
    assert code == EXIT_OK
    return path


class TestTest:
    def test_cusum_rejects_large_shift(self, capsys, shifted_series):
        code, out, _ = run(
            capsys, "test", "--input", str(shifted_series), "--family", "cusum",
            "--psi", "identity", "--problem", "mean", "--sigma", str(math.exp(1.0)),
        )
        assert code == EXIT_OK
        outcome = json.loads(out)
        assert outcome["reject"] is True
        assert abs(outcome["argmax_k"] - 250) < 50

    def test_constant_series_is_degenerate(self, capsys, tmp_path):
        path = tmp_path / "const.csv"
        path.write_text("\n".join(["5.0"] * 200) + "\n")
        code, out, _ = run(
            capsys, "test", "--input", str(path), "--family", "sn_cusum",
        )
        assert code == EXIT_OK
        assert json.loads(out)["degenerate"] is True

    def test_rank_families_invariant_under_exp(self, capsys, tmp_path, shifted_series):
        transformed = tmp_path / "exp.csv"
        values = [float(v) for v in shifted_series.read_text().strip().splitlines()]
        transformed.write_text("\n".join(f"{math.exp(v):.17g}" for v in values) + "\n")
        outs = []
        for path in (shifted_series, transformed):
            for family in ("wilcoxon", "sn_wilcoxon"):
                code, out, _ = run(
                    capsys, "test", "--input", str(path), "--family", family,
                )
                assert code == EXIT_OK
                outs.append(json.loads(out)["statistic"])
        assert outs[0] == pytest.approx(outs[2], rel=1e-12)
        assert outs[1] == pytest.approx(outs[3], rel=1e-12)

    def test_profile_export(self, capsys, tmp_path, shifted_series):
        profile = tmp_path / "profile.csv"
        code, _, _ = run(
            capsys, "test", "--input", str(shifted_series), "--family", "cusum",
            "--profile-out", str(profile),
        )
        assert code == EXIT_OK
        lines = profile.read_text().strip().splitlines()
        assert lines[0] == "k,value"
        assert len(lines) == 1 + 500

    def test_missing_input_is_computation_error(self, capsys, tmp_path):
        code, _, err = run(
            capsys, "test", "--input", str(tmp_path / "nope.csv"), "--family", "cusum",
        )
        assert code == EXIT_COMPUTATION


class TestCritvals:
    def test_writes_table(self, capsys, tmp_path):
        out = tmp_path / "bridge.json"
        code, _, _ = run(
            capsys, "critvals", "--family", "bridge", "--hurst", "0.5",
            "--paths", "2000", "--grid", "512", "--seed", "9", "--out", str(out),
        )
        assert code == EXIT_OK
        payload = json.loads(out.read_text())
        assert payload["family"] == "cusum_bridge_sup"
        assert 1.2 < payload["quantiles"]["0.950000"] < 1.5


class TestExperimentAndCompare:
    def test_desk_run_and_compare(self, capsys, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "problem": "mean",
            "noise": "normal",
            "hursts": [0.6],
            "lengths": [200],
            "shifts": [0.0, 1.0],
            "families": ["cusum", "sn_cusum"],
            "replications": 300,
            "seed": 13,
            "table_budget": [2000, 512],
        }))
        out_dir = tmp_path / "run"
        code, out, _ = run(
            capsys, "experiment", "--config", str(config), "--out-dir", str(out_dir),
        )
        assert code == EXIT_OK
        assert (out_dir / "cells.csv").exists()
        assert (out_dir / "report.csv").exists()
        assert (out_dir / "meta.json").exists()

        # Comparing against a mismatched reference grid is an error.
        code, _, err = run(
            capsys, "compare", "--report", str(out_dir / "cells.csv"),
            "--reference", "builtin:mean_normal",
        )
        assert code == EXIT_COMPUTATION

    def test_compare_self_is_clean(self, capsys, tmp_path):
        from lmsvtest import mc

        cells = mc.load_reference("mean_normal")
        path = tmp_path / "cells.csv"
        mc.cells_to_csv(cells, path)
        code, out, _ = run(
            capsys, "compare", "--report", str(path), "--reference", "builtin:mean_normal",
        )
        assert code == EXIT_OK
        assert "0 flagged" in out

    def test_bundled_desk_config_agrees_with_reference(self, capsys, tmp_path):
        # Full desk-scale mean-change run from the bundled config (24 report
        # rows), followed by a comparison against the published rates: no
        # cell may sit more than 3 combined standard errors away.
        from importlib import resources

        config = tmp_path / "table1_desk.json"
        config.write_text(
            (resources.files("lmsvtest.data") / "table1_desk.json").read_text()
        )
        out_dir = tmp_path / "desk"
        code, _, _ = run(
            capsys, "experiment", "--config", str(config), "--out-dir", str(out_dir),
        )
        assert code == EXIT_OK
        report_rows = (out_dir / "report.csv").read_text().strip().splitlines()
        assert len(report_rows) == 1 + 24

        code, out, _ = run(
            capsys, "compare", "--report", str(out_dir / "cells.csv"),
            "--reference", "builtin:mean_normal",
        )
        assert code == EXIT_OK, out

    def test_compare_flags_corruption(self, capsys, tmp_path):
        from lmsvtest import mc

        cells = mc.load_reference("mean_normal")
        bad = cells[0]
        cells[0] = mc.CellResult(
            problem=bad.problem, family=bad.family, hurst=bad.hurst, n=bad.n,
            alpha=bad.alpha, h=bad.h, tau=bad.tau, level=bad.level,
            replications=bad.replications,
            rejections=bad.rejections + round(0.2 * bad.replications),
        )
        path = tmp_path / "cells.csv"
        mc.cells_to_csv(cells, path)
        code, out, _ = run(
            capsys, "compare", "--report", str(path), "--reference", "builtin:mean_normal",
            "--out", str(tmp_path / "diff.csv"),
        )
        assert code == EXIT_FLAGGED
        assert "FLAGGED" in out
        assert (tmp_path / "diff.csv").exists()
