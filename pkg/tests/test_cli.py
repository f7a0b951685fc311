"""End-to-end tests of the command line interface (in-process)."""

import math
from pathlib import Path

import numpy as np
import pytest

from klpriv.cli import RunConfig, load_config_file, main


def _read_table(path):
    """Parse an output file into (header dict, column names, row lists)."""
    header, columns, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line.lstrip("# ").partition("=")
            header[key] = val
        elif columns is None:
            columns = line.split(",")
        else:
            rows.append(line.split(","))
    return header, columns, rows


def _metric_map(rows):
    """(scheme, metric) -> float value for bound/lazy style tables."""
    out = {}
    for row in rows:
        if len(row) == 3:
            out[(row[0], row[1])] = float(row[2])
        else:
            out[row[0]] = float(row[1])
    return out


class TestBound:
    def test_reference_values(self, tmp_path):
        out = tmp_path / "b.csv"
        rc = main(["bound", "--scheme", "lecun", "--d", "10", "--width", "100",
                   "--depth", "3", "--outputs", "1", "--time", "1.0", "--n", "100",
                   "--sigma2", "0.01", "--out", str(out)])
        assert rc == 0
        header, columns, rows = _read_table(out)
        assert columns == ["scheme", "metric", "value"]
        vals = _metric_map(rows)
        assert vals[("lecun", "B")] == pytest.approx(52.5, rel=1e-12)
        assert vals[("lecun", "table_B")] == pytest.approx(52.5, rel=1e-12)
        assert vals[("lecun", "kl_bound_linearized")] == pytest.approx(1.05, rel=1e-12)
        assert vals[("lecun", "dp_delta")] == pytest.approx(math.sqrt(1.05 / 2.0), rel=1e-12)
        assert header["klpriv-version"]
        assert header["scheme"] == "lecun"
        assert header["time"] == "1.0"

    def test_zero_horizon(self, tmp_path):
        out = tmp_path / "b.csv"
        rc = main(["bound", "--scheme", "he", "--time", "0", "--n", "10",
                   "--out", str(out)])
        assert rc == 0
        vals = _metric_map(_read_table(out)[2])
        assert vals[("he", "kl_bound_linearized")] == 0.0
        assert vals[("he", "dp_delta")] == 0.0

    def test_all_schemes(self, tmp_path):
        out = tmp_path / "b.csv"
        rc = main(["bound", "--scheme", "all", "--n", "16", "--out", str(out)])
        assert rc == 0
        schemes = {row[0] for row in _read_table(out)[2]}
        assert schemes == {"lecun", "he", "ntk", "xavier"}

    def test_stdout_when_no_out(self, capsys):
        rc = main(["bound", "--scheme", "ntk", "--n", "8"])
        assert rc == 0
        text = capsys.readouterr().out
        assert "kl_bound_linearized" in text
        assert text.startswith("# klpriv-version=")

    def test_moment_rows_with_x_sqnorm(self, tmp_path):
        out = tmp_path / "b.csv"
        rc = main(["bound", "--scheme", "he", "--d", "10", "--width", "100",
                   "--depth", "3", "--n", "16", "--x-sqnorm", "10.0",
                   "--out", str(out)])
        assert rc == 0
        vals = _metric_map(_read_table(out)[2])
        # at ||x||^2 = d the gradient moment equals B
        assert vals[("he", "expected_grad_norm_init")] == pytest.approx(
            vals[("he", "B")], rel=1e-12)
        assert vals[("he", "expected_output_sqnorm_init")] > 0

    def test_drift_rows_with_smoothness(self, tmp_path):
        out = tmp_path / "b.csv"
        rc = main(["bound", "--scheme", "lecun", "--n", "32", "--time", "0.5",
                   "--beta-smooth", "0.1", "--out", str(out)])
        assert rc == 0
        vals = _metric_map(_read_table(out)[2])
        for metric in ("kl_bound_dnn", "dnn_integral", "dnn_term_init_difference",
                       "dnn_term_fluctuation", "dnn_term_non_smoothness",
                       "dnn_exponential_regime"):
            assert ("lecun", metric) in vals
        assert vals[("lecun", "dnn_exponential_regime")] == 0.0
        assert vals[("lecun", "kl_bound_dnn")] >= vals[("lecun", "dnn_term_init_difference")] / (2 * 0.01)

    def test_invalid_arch_exits_2(self, capsys):
        assert main(["bound", "--depth", "1", "--n", "8"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_csv_data_requires_n(self, capsys, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x0,label\n1.0,1\n2.0,-1\n")
        assert main(["bound", "--data", f"csv:{p}"]) == 2


_FAST_ESTIMATE = ["--data", "synth:6", "--width", "6", "--depth", "2",
                  "--d", "4", "--steps", "4", "--runs", "2", "--eta", "0.05",
                  "--sigma2", "0.02"]


class TestEstimate:
    def test_zero_steps_single_row(self, tmp_path):
        out = tmp_path / "e.csv"
        rc = main(["estimate", "--data", "synth:6", "--width", "6", "--depth", "2",
                   "--d", "4", "--steps", "0", "--runs", "1", "--out", str(out)])
        assert rc == 0
        _, columns, rows = _read_table(out)
        assert columns == ["epochs", "kl_means", "kl_stds", "diverged"]
        assert len(rows) == 1
        assert rows[0] == ["0", "0.0", "0.0", "0"]

    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "e.csv"
        argv = ["estimate", *_FAST_ESTIMATE, "--out", str(out)]
        assert main(argv) == 0
        first = out.read_bytes()
        assert main(argv) == 0
        assert out.read_bytes() == first

    def test_embedded_config_reproduces_file(self, tmp_path):
        out = tmp_path / "e.csv"
        assert main(["estimate", *_FAST_ESTIMATE, "--out", str(out)]) == 0
        original = out.read_bytes()
        # the output file itself is a valid --config
        assert main(["estimate", "--config", str(out)]) == 0
        assert out.read_bytes() == original
        # so is the stripped header on its own
        cfg_file = tmp_path / "run.cfg"
        cfg_lines = [line.lstrip("# ") for line in original.decode().splitlines()
                     if line.startswith("#")]
        cfg_file.write_text("\n".join(cfg_lines) + "\n")
        out.unlink()
        assert main(["estimate", "--config", str(cfg_file)]) == 0
        assert out.read_bytes() == original

    def test_neighbor_detail_file(self, tmp_path):
        out = tmp_path / "e.csv"
        assert main(["estimate", *_FAST_ESTIMATE, "--out", str(out)]) == 0
        _, columns, rows = _read_table(str(out) + ".neighbors.csv")
        assert columns == ["run", "neighbor", "kl_final"]
        assert len(rows) == 2 * 6        # runs x remove-one neighbors

    def test_replay_halves_kl_exactly(self, tmp_path):
        out = tmp_path / "e.csv"
        assert main(["estimate", *_FAST_ESTIMATE, "--replay-sigma2", "0.04",
                     "--out", str(out)]) == 0
        _, _, rows = _read_table(out)
        _, _, replay_rows = _read_table(str(out) + ".replay.csv")
        assert len(rows) == len(replay_rows)
        for row, rrow in zip(rows, replay_rows):
            assert row[0] == rrow[0]
            assert float(rrow[1]) == pytest.approx(float(row[1]) / 2.0, rel=1e-15)

    def test_replay_requires_out(self, capsys):
        assert main(["estimate", *_FAST_ESTIMATE, "--replay-sigma2", "0.04"]) == 2

    def test_divergence_exit_code(self, tmp_path):
        out = tmp_path / "e.csv"
        rc = main(["estimate", "--data", "synth:4", "--width", "8", "--depth", "2",
                   "--d", "4", "--steps", "3", "--runs", "1", "--eta", "1e8",
                   "--sigma2", "0.01", "--out", str(out)])
        assert rc == 3
        _, _, rows = _read_table(out)
        assert rows[-1][3] == "1"
        assert rows[-1][1] == "inf"

    def test_linearized_training_path(self, tmp_path):
        out = tmp_path / "e.csv"
        rc = main(["estimate", *_FAST_ESTIMATE, "--linearize", "--out", str(out)])
        assert rc == 0
        _, _, rows = _read_table(out)
        assert float(rows[-1][1]) > 0.0

    def test_all_schemes_rejected(self):
        assert main(["estimate", *_FAST_ESTIMATE, "--scheme", "all"]) == 2

    def test_add_neighbor_uses_pool(self, tmp_path):
        out = tmp_path / "e.csv"
        rc = main(["estimate", *_FAST_ESTIMATE, "--neighbor", "add",
                   "--pool-size", "3", "--out", str(out)])
        assert rc == 0
        _, _, rows = _read_table(str(out) + ".neighbors.csv")
        assert len(rows) == 2 * 3


class TestMcVerify:
    def test_small_reference_passes(self, tmp_path, capsys):
        out = tmp_path / "m.csv"
        rc = main(["mc-verify", "--scheme", "all", "--d", "4", "--width", "8",
                   "--depth", "2", "--samples", "300", "--mc-n", "8",
                   "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "[mc-verify]" in printed and "FAIL" not in printed
        _, columns, rows = _read_table(out)
        assert columns == ["scheme", "check", "mean", "stderr", "samples",
                           "reference", "z", "violation"]
        assert len(rows) == 4 * 3
        assert all(row[7] == "0" for row in rows)
        zs = [abs(float(row[6])) for row in rows if row[1] != "linearized_grad_diff"]
        assert max(zs) <= 4.0

    def test_multi_output_drops_grad_diff_check(self, tmp_path):
        out = tmp_path / "m.csv"
        rc = main(["mc-verify", "--scheme", "ntk", "--d", "4", "--width", "8",
                   "--depth", "2", "--outputs", "3", "--samples", "200",
                   "--out", str(out)])
        assert rc == 0
        _, _, rows = _read_table(out)
        assert {row[1] for row in rows} == {"grad_norm_init", "output_sqnorm_init"}


class TestLazy:
    def test_interpolator_report(self, tmp_path):
        out = tmp_path / "l.csv"
        rc = main(["lazy", "--data", "synth:8", "--d", "16", "--width", "32",
                   "--depth", "2", "--steps", "0", "--ridge", "0",
                   "--out", str(out)])
        assert rc == 0
        vals = _metric_map(_read_table(out)[2])
        assert vals["rank_M0"] == 8
        assert vals["lambda_min"] > 0
        assert vals["R"] > 0
        assert vals["achieved_loss"] == pytest.approx(math.log(1 + 1 / 64), rel=1e-9)
        assert vals["loss_target"] == pytest.approx(1 / 64)
        assert vals["below_target"] == 1
        assert vals["alpha_gap"] == vals["achieved_loss"]
        assert vals["ridge_used"] == 0.0

    def test_training_rows(self, tmp_path):
        out = tmp_path / "l.csv"
        rc = main(["lazy", "--data", "synth:8", "--d", "16", "--width", "32",
                   "--depth", "2", "--steps", "50", "--eta", "0.05",
                   "--sigma2", "1e-4", "--ridge", "0", "--out", str(out)])
        assert rc == 0
        vals = _metric_map(_read_table(out)[2])
        for key in ("averaged_iterate_loss", "excess_vs_interpolator", "risk_bound"):
            assert key in vals and math.isfinite(vals[key])
        assert vals["risk_bound"] > 0

    def test_multi_output_rejected(self):
        assert main(["lazy", "--data", "synth:8", "--outputs", "2"]) == 2


class TestSweep:
    def test_grid_of_one_single_row(self, tmp_path):
        out = tmp_path / "s.csv"
        rc = main(["sweep", "--scheme", "lecun", "--widths", "8", "--depths", "2",
                   "--steps", "0", "--d", "4", "--n", "8", "--out", str(out)])
        assert rc == 0
        _, columns, rows = _read_table(out)
        assert columns == ["scheme", "width", "depth", "epoch", "metric", "value"]
        assert rows == [["lecun", "8", "2", "0", "kl_bound", "0.0"]]

    def test_analytic_bound_decreases_with_depth_lecun(self, tmp_path):
        # at m = d the constant scales like L / 2^(L-1), falling from L = 2 on
        out = tmp_path / "s.csv"
        rc = main(["sweep", "--scheme", "lecun", "--d", "8", "--widths", "8",
                   "--depths", "2,3,4", "--steps", "10", "--record-every", "10",
                   "--n", "16", "--out", str(out)])
        assert rc == 0
        _, _, rows = _read_table(out)
        finals = {int(r[2]): float(r[5]) for r in rows if r[3] == "10"}
        assert finals[2] > finals[3] > finals[4]

    def test_bound_increases_with_width_all_schemes(self, tmp_path):
        out = tmp_path / "s.csv"
        rc = main(["sweep", "--scheme", "all", "--d", "8", "--widths", "8,32",
                   "--depths", "3", "--steps", "10", "--record-every", "10",
                   "--n", "16", "--out", str(out)])
        assert rc == 0
        _, _, rows = _read_table(out)
        for scheme in ("lecun", "he", "ntk", "xavier"):
            by_width = {int(r[1]): float(r[5])
                        for r in rows if r[0] == scheme and r[3] == "10"}
            assert by_width[8] < by_width[32]

    def test_empirical_metric(self, tmp_path):
        out = tmp_path / "s.csv"
        rc = main(["sweep", "--metric", "empirical", "--scheme", "he",
                   "--widths", "6", "--depths", "2", "--d", "4",
                   "--data", "synth:6", "--steps", "3", "--runs", "2",
                   "--eta", "0.05", "--sigma2", "0.02", "--out", str(out)])
        assert rc == 0
        _, _, rows = _read_table(out)
        metrics = {r[4] for r in rows}
        assert metrics == {"kl_mean", "kl_std"}
        finals = [float(r[5]) for r in rows if r[4] == "kl_mean" and r[3] == "3"]
        assert finals and finals[0] > 0

    def test_cell_failure_recorded_and_sweep_continues(self, tmp_path, capsys):
        out = tmp_path / "s.csv"
        rc = main(["sweep", "--metric", "empirical", "--scheme", "he",
                   "--widths", "6,8", "--depths", "2", "--d", "4",
                   "--data", "synth:1", "--steps", "1", "--runs", "1",
                   "--out", str(out)])
        assert rc == 0
        assert "failed" in capsys.readouterr().err
        _, _, rows = _read_table(out)
        error_rows = [r for r in rows if r[4] == "error"]
        assert len(error_rows) == 2
        assert all(r[5] == "nan" for r in error_rows)

    def test_bad_grid_exits_2(self):
        assert main(["sweep", "--widths", "a,b", "--n", "8"]) == 2


class TestConfigFile:
    def test_flags_override_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("eta=0.5\nsteps=0\nn=8\nscheme=ntk\n")
        out = tmp_path / "b.csv"
        rc = main(["bound", "--config", str(cfg), "--eta", "0.25",
                   "--out", str(out)])
        assert rc == 0
        header, _, rows = _read_table(out)
        assert header["eta"] == "0.25"
        assert header["steps"] == "0"
        assert rows[0][0] == "ntk"

    def test_hyphen_keys_accepted(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("record-every=2\npool-size=4\n")
        loaded = load_config_file(str(cfg))
        assert loaded == {"record_every": 2, "pool_size": 4}

    def test_comments_and_blanks_ignored(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# a comment\n\nwidth=32\nklpriv_version=9.9\ncommand=bound\n")
        assert load_config_file(str(cfg)) == {"width": 32}

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("not_a_field=3\n")
        assert main(["bound", "--config", str(cfg), "--n", "8"]) == 2

    def test_malformed_line_exits_2(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("width 32\n")
        assert main(["bound", "--config", str(cfg), "--n", "8"]) == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["bound", "--config", str(tmp_path / "nope.cfg"), "--n", "8"]) == 2


class TestRunConfig:
    def test_header_is_sorted_and_complete(self):
        cfg = RunConfig(command="bound")
        items = cfg.header_items()
        keys = [k for k, _ in items]
        assert keys == sorted(keys)
        assert dict(items)["linearize"] == "0"
        assert dict(items)["out"] == ""

    def test_horizon_prefers_time(self):
        assert RunConfig(time=2.5, eta=0.1, steps=100).horizon == 2.5
        assert RunConfig(eta=0.1, steps=100).horizon == pytest.approx(10.0)

    def test_validate_rejects_bad_values(self):
        with pytest.raises(ValueError):
            RunConfig(scheme="bogus").validate()
        with pytest.raises(ValueError):
            RunConfig(eta=0.0).validate()
        with pytest.raises(ValueError):
            RunConfig(neighbor="swap").validate()
        with pytest.raises(ValueError):
            RunConfig(replay_sigma2=0.0).validate()


class TestTopLevel:
    def test_version_flag(self, capsys):
        assert main(["--version"]) == 0

    def test_unknown_command_fails(self):
        assert main(["frobnicate"]) != 0
