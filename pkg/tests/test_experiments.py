import csv
from pathlib import Path

import numpy as np
import pytest

from twolayer.cli import main
from twolayer.errors import InvalidConfig
from twolayer.experiments import (
    converge_rows,
    load_config,
    parse_config,
    sweep_columns,
    sweep_rows,
    surplus_variance,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """
command = "solve"

[model]
c_Y = 1.0
sigma = 0.0
kappa = 4.0
omega = 2.0

[problem]
q = 0.2
delta = 0.1
beta_A = 1.0
beta_S = 0.6
rho_tilde = 0.0
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestParsing:
    def test_minimal(self):
        cfg = parse_config(BASE)
        assert cfg.omega == 2.0 and cfg.problem().beta == pytest.approx(0.6)

    def test_rho_bar(self):
        cfg = parse_config(BASE.replace("rho_tilde = 0.0", "rho_bar = 0.4"))
        assert cfg.problem().rho == pytest.approx(0.4 * 0.1 / 0.2)

    def test_shipped_configs_parse(self):
        for path in sorted(CONFIGS.glob("*.toml")):
            cfg = load_config(path)
            cfg.problem()

    def test_appendix_matrix(self):
        cfg = load_config(CONFIGS / "fig1_case1.toml")
        assert np.array(cfg.T).shape == (6, 6) and cfg.T[1][5] == 5.0526

    @pytest.mark.parametrize("edit,needle", [
        (("omega = 2.0", "omega = -2.0"), "model.omega"),
        (("beta_S = 0.6", "beta_S = 1.6"), "problem.beta_S"),
        (("kappa = 4.0", "kappa = \"four\""), "model.kappa"),
        (("omega = 2.0", "alpha = [1.0]\nT = [[-2.0, 0.0]]"), "model.T"),
        (("omega = 2.0", "alpha = [0.5, 0.5]\nT = [\n  [-1.0, 2.0],\n  [0.0, -1.0],\n]"), "model.T"),
        (('command = "solve"', 'command = "plot"'), "command"),
    ])
    def test_field_diagnostics(self, edit, needle):
        with pytest.raises(InvalidConfig, match=needle) as info:
            parse_config(BASE.replace(*edit), "bad.toml")
        assert "bad.toml:" in str(info.value)

    def test_line_number_reported(self):
        text = BASE.replace("omega = 2.0", "alpha = [0.5, 0.5]\nT = [\n  [-1.0, 0.5],\n  [0.3],\n]")
        with pytest.raises(InvalidConfig, match=r"bad.toml:9: field 'model.T'"):
            parse_config(text, "bad.toml")

    def test_syntax_error(self):
        with pytest.raises(InvalidConfig, match="line"):
            parse_config("[model\nc_Y = 1")

    def test_unsorted_grid(self):
        with pytest.raises(InvalidConfig, match="sweep.grid"):
            parse_config(BASE + '\n[sweep]\nparameter = "beta"\ngrid = [0.5, 0.2]\n')

    def test_variance(self):
        cfg = parse_config(BASE)
        assert surplus_variance(cfg) == pytest.approx(2 * 4.0 / 2.0**2)


class TestCli:
    def test_solve_fig1_case1(self, tmp_path, capsys):
        assert main(["solve", "--config", str(CONFIGS / "fig1_case1.toml"), "--out", str(tmp_path)]) == 0
        assert "TwoLayer" in capsys.readouterr().out
        row = read_csv(tmp_path / "solve_summary.csv")[0]
        assert row["case"] == "TwoLayer" and float(row["a_star"]) == pytest.approx(1.74891, abs=1e-5)
        assert (tmp_path / "Gamma_curves.dat").read_text().count("# b=") == 5

    def test_solve_liquidation(self, tmp_path, capsys):
        text = (CONFIGS / "fig1_case1.toml").read_text().replace("rho_bar = 0.0", "rho_bar = 1.2")
        cfg = tmp_path / "liq.toml"
        cfg.write_text(text)
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        row = read_csv(tmp_path / "solve_summary.csv")[0]
        assert row["case"] == "Liquidate" and float(row["a_star"]) == 0 and float(row["b_star"]) == 0

    def test_residuals_echo_optimizer(self, tmp_path):
        from twolayer import solve, verify_smooth_fit

        cfg = load_config(CONFIGS / "fig1_case1.toml")
        p = cfg.problem()
        fit = verify_smooth_fit(p, solve(p))
        main(["solve", "--config", str(CONFIGS / "fig1_case1.toml"), "--out", str(tmp_path)])
        row = read_csv(tmp_path / "solve_summary.csv")[0]
        assert float(row["abs_Gamma"]) == pytest.approx(fit["abs_Gamma"], rel=1e-11)

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text(BASE.replace("beta_S = 0.6", "beta_S = 1.5"))
        assert main(["check", "--config", str(bad), "--out", str(tmp_path)]) == 2
        assert "problem.beta_S" in capsys.readouterr().err
        assert not (tmp_path / "check.csv").exists()

    def test_missing_config(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "nope.toml")]) == 2

    def test_numerical_error_exit_code(self, tmp_path, capsys, monkeypatch):
        from twolayer import experiments
        from twolayer.errors import NonDistinctRoots

        def boom(cfg, out=None):
            raise NonDistinctRoots("roots collide")

        monkeypatch.setitem(experiments.RUNNERS, "solve", boom)
        cfg = tmp_path / "ok.toml"
        cfg.write_text(BASE)
        assert main(["solve", "--config", str(cfg)]) == 3
        assert "perturb q" in capsys.readouterr().err

    def test_value_and_simulate(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(BASE + "\n[strategy]\na = 1.0\nb = 3.0\n\n[simulate]\nn_paths = 2000\nx0 = [2.0]\ntrace = true\n")
        assert main(["value", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        assert len(read_csv(tmp_path / "value.csv")) == 201
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--seed", "4"]) == 0
        row = read_csv(tmp_path / "simulate.csv")[0]
        assert row["seed"] == "4" and abs(float(row["z_score"])) < 4
        assert (tmp_path / "trace.csv").read_text().startswith("time,event_type,amount")

    def test_check_exponential(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text(BASE)
        assert main(["check", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "check.csv")
        assert {r["status"] for r in rows} == {"pass"}
        assert any(r["check"] == "generator_between_a_b" for r in rows)

    def test_sweep_is_deterministic(self, tmp_path):
        cfg = CONFIGS / "fig6_volatility.toml"
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
        one, two = (tmp_path / "a" / "sweep.csv").read_bytes(), (tmp_path / "b" / "sweep.csv").read_bytes()
        assert one == two
        assert one.decode().splitlines()[0] == ",".join(sweep_columns(load_config(cfg)))


class TestSweeps:
    def test_rho_sweep_monotone_in_rho(self):
        cfg = load_config(CONFIGS / "fig2_rho.toml")
        rows = [r for r, _ in sweep_rows(cfg)]
        assert [r[3] for r in rows][-3:] == ["RefractOnly", "RefractOnly", "Liquidate"]
        values = np.array([r[7:7 + len(cfg.sweep_x)] for r in rows], dtype=float)
        assert np.all(np.diff(values, axis=0) >= -1e-9)

    def test_beta_gap_shrinks(self):
        cfg = load_config(CONFIGS / "fig3_beta.toml")
        rows = converge_rows(cfg)
        gaps = [r[5] for r in rows]
        diffs = [r[8] for r in rows]
        assert gaps[0] > gaps[1] > gaps[2] and diffs[0] > diffs[1] > diffs[2]

    def test_beta_to_zero_limit_when_rho_bar_is_one(self):
        # b* reaches the beta-free limit once the zero-of-Gamma level drops below Z^{-1}(1/beta)
        from dataclasses import replace

        cfg = load_config(CONFIGS / "fig3_beta.toml")
        cfg = replace(cfg, rho_bar=1.0, converge_kind="beta_to_zero", converge_grid=(0.5, 0.3, 0.1, 0.05))
        rows = converge_rows(cfg)
        limit_gaps = [r[11] for r in rows]
        assert limit_gaps[0] > 0 and limit_gaps[-1] < 1e-9
        assert all(x >= y for x, y in zip(limit_gaps, limit_gaps[1:]))
        assert rows[-1][3] == 0.0

    def test_per_row_errors_are_recorded(self):
        cfg = parse_config(BASE + '\n[sweep]\nparameter = "delta"\ngrid = [-1.0, 0.1]\n')
        rows = [r for r, _ in sweep_rows(cfg)]
        assert rows[0][-1].startswith("InvalidProblem") and rows[1][-1] == ""

    def test_volatility_sweep_keeps_ratio(self):
        cfg = load_config(CONFIGS / "fig6_volatility.toml")
        c = cfg.with_parameter("omega_volatility", 0.5)
        assert c.kappa == pytest.approx(1.0) and surplus_variance(c) == pytest.approx(2 * 1.0 / 0.25)
