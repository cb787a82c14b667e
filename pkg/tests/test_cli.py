import csv
import math

import numpy as np
import pytest

from reservoir_sense import ProbeSpec, ReservoirSpec, theta_sweep
from reservoir_sense import scenarios
from reservoir_sense.cli import (COLUMNS, SCHEMA, main, read_config, read_manifest, resolve,
                                 run_scenario, run_sweep, sweep_axes)
from reservoir_sense.exceptions import ConfigError

SMALL = ["--t_max", "2", "--n_points", "21"]


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestExitCodes:
    def test_unknown_scenario(self, tmp_path):
        assert main(["run", "fig9", "--out", str(tmp_path)]) == 1

    def test_unknown_override(self, tmp_path):
        assert main(["run", "custom", "--flux", "1", "--out", str(tmp_path)]) == 1

    @pytest.mark.parametrize("key,val", [("theta", "7"), ("gamma", "-1"), ("temperature", "0"),
                                         ("n_points", "1.5"), ("target", "kappa")])
    def test_invalid_values(self, tmp_path, key, val):
        assert main(["run", "custom", f"--{key}", val, "--out", str(tmp_path)]) == 1

    def test_verify_only_for_custom(self, tmp_path):
        assert main(["run", "fig5", "--verify", "--out", str(tmp_path)]) == 1

    def test_sweep_needs_config(self):
        assert main(["sweep"]) == 1

    def test_success(self, tmp_path):
        assert main(["run", "custom", *SMALL, "--out", str(tmp_path)]) == 0
        assert (tmp_path / "custom.csv").exists() and (tmp_path / "custom.manifest").exists()


class TestConfig:
    def test_unknown_key_in_file(self, tmp_path):
        p = write(tmp_path, "c.ini", "[probe]\nflux = 1\n")
        with pytest.raises(ConfigError):
            read_config(p)

    def test_key_in_wrong_section(self, tmp_path):
        p = write(tmp_path, "c.ini", "[reservoir]\ntheta = 1\n")
        with pytest.raises(ConfigError):
            read_config(p)

    def test_layering(self, tmp_path):
        p = write(tmp_path, "c.ini", "[reservoir]\ngamma = 2\nOmega = 20\n")
        settings = read_config(p)[0]
        cfg = resolve("fig2", settings, {"Omega": 30.0})
        assert cfg["gamma"] == 2.0 and cfg["Omega"] == 30.0 and cfg["r"] == 2.5

    def test_linspace_lists(self, tmp_path):
        p = write(tmp_path, "c.ini", "[scan]\ntemperatures = linspace(1, 2, 3)\n")
        assert read_config(p)[0]["temperatures"] == [1.0, 1.5, 2.0]

    def test_sweep_axis_limits(self):
        with pytest.raises(ConfigError):
            sweep_axes({})
        with pytest.raises(ConfigError):
            sweep_axes({"gamma": "1", "Omega": "1", "theta": "0", "r": "1"})
        with pytest.raises(ConfigError):
            sweep_axes({"gamma": "linspace(1, 2, 10001)"})
        with pytest.raises(ConfigError):
            sweep_axes({"gamma": "linspace(1, 2, 1000)", "Omega": "linspace(5, 20, 101)"})

    def test_manifest_echoes_every_key(self, tmp_path):
        main(["run", "custom", *SMALL, "--out", str(tmp_path)])
        m = read_manifest(tmp_path / "custom.manifest")
        assert all(f"config.{k}" in m for k in SCHEMA)
        for k in ("timestamp", "version", "wall_time_s", "tol.pinv_rtol", "tol.matsubara_rtol"):
            assert k in m
        assert m["status"] == "ok"


class TestOutputs:
    GOLDEN = {
        "fig2": "r,T,t,F_gamma,F_Omega",
        "fig3": "theta,T,maxF_gamma,maxF_Omega,t_star_gamma,t_star_Omega",
        "fig4": "target,n_bar,zeta,maxF,t_star",
        "fig5": "T,target,sxx_inf,spp_inf,sxx_markov,spp_markov,F_inf_exact,F_inf_markov",
        "fig6": "scan,F0,omega_f,target,deltaF",
        "fig7": "T,t,sxx_exact,sxx_markov",
        "custom": "t,d_x,d_p,sxx,spp,sxp,F",
    }

    def test_golden_headers(self):
        assert {k: ",".join(v) for k, v in COLUMNS.items()} == self.GOLDEN

    def test_byte_reproducible(self, tmp_path):
        args = ["run", "fig2", "--temperatures", "5", "--t_max", "1", "--n_points", "11"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "fig2.csv").read_bytes()
        assert a == (tmp_path / "b" / "fig2.csv").read_bytes()
        assert a.splitlines()[0] == self.GOLDEN["fig2"].encode()

    def test_seventeen_digits(self, tmp_path):
        main(["run", "custom", *SMALL, "--r", "1", "--out", str(tmp_path)])
        rows = read_csv(tmp_path / "custom.csv")
        cell = rows[5][3]
        assert len(cell.replace(".", "").replace("-", "").split("e")[0].lstrip("0")) >= 15
        assert float(format(float(cell), ".17g")) == float(cell)

    def test_fig2_columns_start_at_zero(self, tmp_path):
        main(["run", "fig2", "--temperatures", "5", "--t_max", "1", "--n_points", "11",
              "--out", str(tmp_path)])
        rows = read_csv(tmp_path / "fig2.csv")
        assert float(rows[1][3]) == 0.0 and float(rows[1][4]) == 0.0
        m = read_manifest(tmp_path / "fig2.manifest")
        assert float(m["result.F_inf[r=2.5,T=5,gamma]"]) > 0

    def test_fig5_markov_columns_ignore_spectral_details(self, tmp_path):
        base = ["run", "fig5", "--temperatures", "1, 5"]
        main(base + ["--out", str(tmp_path / "a")])
        main(base + ["--gamma", "1", "--Omega", "20", "--out", str(tmp_path / "b")])
        a, b = read_csv(tmp_path / "a" / "fig5.csv"), read_csv(tmp_path / "b" / "fig5.csv")
        for ra, rb in zip(a[1:], b[1:]):
            assert ra[4:6] == rb[4:6]
            assert ra[2:4] != rb[2:4]

    def test_plot_files(self, tmp_path):
        main(["run", "fig7", "--temperatures", "1, 5", "--t_max", "1", "--n_points", "5",
              "--plot", "true", "--out", str(tmp_path)])
        dat = (tmp_path / "fig7.dat").read_text()
        assert dat.count("# T=") == 2
        assert "index 1" in (tmp_path / "fig7.gp").read_text()

    def test_partial_output_on_failure(self, tmp_path, monkeypatch):
        def boom(cfg, verify=False):
            raise FloatingPointError("injected")
        monkeypatch.setattr(scenarios, "job_custom", boom)
        code = run_scenario("custom", resolve("custom"), tmp_path, workers=1)
        assert code == 2
        assert not (tmp_path / "custom.csv").exists()
        m = read_manifest(tmp_path / "custom.manifest.partial")
        assert m["status"] == "error" and m["error_type"] == "FloatingPointError"
        assert (tmp_path / "custom.csv.partial").read_text().startswith("t,")

    def test_verify(self, tmp_path):
        assert main(["run", "custom", "--t_max", "2", "--n_points", "41", "--r", "2.5",
                     "--temperature", "5", "--verify", "--out", str(tmp_path)]) == 0
        m = read_manifest(tmp_path / "custom.manifest")
        assert float(m["result.oracle_max_rel_dev"]) < 1e-3


class TestSweep:
    def cfg(self, **over):
        return resolve("custom", dict({"t_max": 2.0, "n_points": 21, "r": 1.0}, **over))

    def test_row_order_independent_of_workers(self, tmp_path):
        axes = sweep_axes({"gamma": "1, 2", "temperature": "0.5, 2, 5"})
        outs = []
        for w in (1, 4):
            assert run_sweep(self.cfg(), axes, tmp_path / str(w), workers=w) == 0
            outs.append((tmp_path / str(w) / "sweep.csv").read_bytes())
        assert outs[0] == outs[1]
        rows = read_csv(tmp_path / "1" / "sweep.csv")
        assert [r[:2] for r in rows[1:]] == [[g, T] for g in ("1", "2")
                                             for T in ("0.5", "2", "5")]

    def test_single_point_matches_run(self, tmp_path):
        p = write(tmp_path, "s.ini", "[grid]\nt_max = 2\nn_points = 21\n[probe]\nr = 1\n"
                  "[numerics]\ntarget = gamma\n[sweep]\ntemperature = 3\n")
        assert main(["sweep", "--config", str(p), "--out", str(tmp_path / "s")]) == 0
        assert main(["run", "custom", "--t_max", "2", "--n_points", "21", "--r", "1",
                     "--target", "gamma", "--temperature", "3",
                     "--out", str(tmp_path / "r")]) == 0
        row = read_csv(tmp_path / "s" / "sweep.csv")[1]
        m = read_manifest(tmp_path / "r" / "custom.manifest")
        assert float(row[1]) == float(m["result.t_star"])
        assert float(row[2]) == float(m["result.F_star"])
        assert float(row[3]) == float(m["result.F_inf"])

    def test_failed_point_recorded(self, tmp_path):
        axes = sweep_axes({"temperature": "0.001, 2"})
        assert run_sweep(self.cfg(), axes, tmp_path) == 3
        rows = read_csv(tmp_path / "sweep.csv")
        assert rows[0][-1] == "error"
        assert "DomainError" in rows[1][-1] and math.isnan(float(rows[1][2]))
        assert rows[2][-1] == "" and float(rows[2][2]) > 0

    def test_theta_sweep_matches_api(self, tmp_path):
        thetas = np.linspace(0, math.pi, 64)
        cfg = resolve("custom", {"t_max": 1.5, "n_points": 16, "r": 2.5, "temperature": 3.0,
                                 "target": "gamma"})
        axes = sweep_axes({"theta": "linspace(0, 3.141592653589793, 64)"})
        assert run_sweep(cfg, axes, tmp_path) == 0
        F = [float(r[2]) for r in read_csv(tmp_path / "sweep.csv")[1:]]
        _, best, th_star = theta_sweep(ProbeSpec(r=2.5), ReservoirSpec(3, 10, 3), "gamma",
                                       thetas, np.linspace(0, 1.5, 16))
        assert np.allclose(F, [b.F_star for b in best], rtol=1e-12, atol=0)
        assert thetas[int(np.argmax(F))] == th_star
