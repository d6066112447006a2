import json

import numpy as np
import pytest

from fss.cli import main
from fss.scenario import load_scenario, parse_scenario

SMALL_SCENARIO = """\
[scenario]
name = smoke

[physics]
kind = two_level
gamma1 = 0.5 MHz
gamma2 = 2.0 MHz

[protocol trace]
kind = rabi
omega = 100 MHz
delta = 0 MHz
tau_start = 0 ns
tau_stop = 20 ns
tau_points = 21
"""


def run(args):
    return main([str(a) for a in args])


class TestValidate:
    def test_bundled_scenario_ok(self, capsys):
        assert run(["validate", "fig2b"]) == 0
        assert "ok" in capsys.readouterr().out

    def test_missing_unit_line_reported(self, tmp_path, capsys):
        bad = SMALL_SCENARIO.replace("omega = 100 MHz", "omega = 100")
        path = tmp_path / "bad.scenario"
        path.write_text(bad, encoding="utf-8")
        assert run(["validate", path]) == 2
        err = capsys.readouterr().err
        assert "line" in err and "omega" in err

    def test_wrong_unit_family(self, tmp_path, capsys):
        bad = SMALL_SCENARIO.replace("tau_stop = 20 ns", "tau_stop = 20 MHz")
        path = tmp_path / "bad2.scenario"
        path.write_text(bad, encoding="utf-8")
        assert run(["validate", path]) == 2

    def test_unknown_scenario(self, capsys):
        assert run(["validate", "nonexistent"]) == 2

    def test_shot_noise_requires_seed(self, tmp_path):
        bad = SMALL_SCENARIO + "\n[output]\ncounts_per_shot = 100\n"
        path = tmp_path / "noise.scenario"
        path.write_text(bad, encoding="utf-8")
        assert run(["validate", path]) == 2


class TestSimulate:
    def test_small_scenario(self, tmp_path, capsys):
        path = tmp_path / "smoke.scenario"
        path.write_text(SMALL_SCENARIO, encoding="utf-8")
        out = tmp_path / "out"
        assert run(["simulate", path, "--out", out, "--threads", "1"]) == 0
        csv = out / "smoke_trace.csv"
        assert csv.exists()
        lines = csv.read_text().splitlines()
        assert lines[0].startswith("# fss scenario=smoke")
        header = [l for l in lines if not l.startswith("#")][0]
        assert header == "tau_ns,signal"
        assert (out / "smoke.manifest.txt").exists()

    def test_byte_identical_rerun(self, tmp_path):
        path = tmp_path / "smoke.scenario"
        path.write_text(SMALL_SCENARIO, encoding="utf-8")
        for d in ("a", "b"):
            assert run(["simulate", path, "--out", tmp_path / d]) == 0
        a = (tmp_path / "a" / "smoke_trace.csv").read_bytes()
        b = (tmp_path / "b" / "smoke_trace.csv").read_bytes()
        assert a == b

    def test_empty_scan_header_only(self, tmp_path):
        empty = SMALL_SCENARIO.replace("tau_points = 21", "tau_points = 0")
        path = tmp_path / "empty.scenario"
        path.write_text(empty, encoding="utf-8")
        out = tmp_path / "out"
        assert run(["simulate", path, "--out", out]) == 0
        rows = [l for l in (out / "smoke_trace.csv").read_text().splitlines()
                if not l.startswith("#")]
        assert rows == ["tau_ns,signal"]

    def test_seeded_shot_noise_determinism(self, tmp_path):
        noisy = SMALL_SCENARIO + "\n[output]\ncounts_per_shot = 200\nseed = 7\n"
        path = tmp_path / "noisy.scenario"
        path.write_text(noisy, encoding="utf-8")
        for d in ("a", "b"):
            assert run(["simulate", path, "--out", tmp_path / d]) == 0
        a = (tmp_path / "a" / "smoke_trace.csv").read_bytes()
        assert a == (tmp_path / "b" / "smoke_trace.csv").read_bytes()
        assert run(["simulate", path, "--out", tmp_path / "c", "--seed", "8"]) == 0
        assert a != (tmp_path / "c" / "smoke_trace.csv").read_bytes()

    def test_scan2d_rejects_single_axis(self, tmp_path, capsys):
        path = tmp_path / "smoke.scenario"
        path.write_text(SMALL_SCENARIO, encoding="utf-8")
        assert run(["scan2d", path, "--out", tmp_path / "o"]) == 2


class TestFitCommand:
    def test_bundled_pumping_trace(self, capsys):
        from importlib import resources

        data = resources.files("fss") / "scenarios" / "data" / "pumping_trace.csv"
        rc = run(["fit", "exp_decay", str(data),
                  "-p", "amplitude=900", "-p", "tau=90", "-p", "offset=0", "--json"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        tau = doc["parameters"]["tau"]["value"]
        assert tau == pytest.approx(111.0, abs=2.0)

    def test_exact_recovery(self, tmp_path, capsys):
        x = np.linspace(0, 40, 60)
        y = 0.8 * np.sin(2e-3 * np.pi * 75.0 * x + 0.3) * np.exp(-((x / 30.0) ** 2))
        path = tmp_path / "d.csv"
        path.write_text("tau,contrast\n" + "\n".join(f"{a},{b}" for a, b in zip(x, y)),
                        encoding="utf-8")
        rc = run(["fit", "damped_ramsey", path, "-p", "amplitude=0.7",
                  "-p", "delta_mhz=70", "-p", "phase=0.1", "-p", "t2star_ns=25", "--json"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["parameters"]["delta_mhz"]["value"] == pytest.approx(75.0, rel=1e-6)

    def test_malformed_row_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n0,1\nnope,2\n", encoding="utf-8")
        assert run(["fit", "exp_decay", path, "-p", "amplitude=1",
                    "-p", "tau=1", "-p", "offset=0"]) == 3
        assert "row 3" in capsys.readouterr().err

    def test_missing_initial_params(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,y\n0,1\n1,0.5\n2,0.25\n", encoding="utf-8")
        assert run(["fit", "exp_decay", path, "-p", "amplitude=1"]) == 2


class TestCalc:
    def test_cyclicity(self, capsys):
        assert run(["calc", "cyclicity", "0.270", "111", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["cyclicity"] == pytest.approx(410.1, abs=1.0)
        assert doc["branching"] == pytest.approx(0.0024, abs=0.0002)

    def test_stark_ratio(self, capsys):
        assert run(["calc", "stark", "--eta", "20.22", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert abs(doc["stark_ratio"]) == pytest.approx(10.08, abs=0.02)

    def test_gfactor(self, capsys):
        assert run(["calc", "gfactor", "2.60", "6.5", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["g_factor"] == pytest.approx(0.0286, abs=0.0002)

    def test_larmor(self, capsys):
        assert run(["calc", "larmor", "6.5", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["larmor_75As_mhz"] == pytest.approx(47.4, abs=0.1)

    def test_linewidth(self, capsys):
        assert run(["calc", "linewidth", "--fwhm", "7", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["t2star_ns"] == pytest.approx(75.7, abs=0.1)

    def test_eta_from_slope(self, capsys):
        assert run(["calc", "eta", "--slope", "17.2", "--json"]) == 0
        assert json.loads(capsys.readouterr().out)["eta"] == pytest.approx(34.4, abs=0.1)

    def test_rabi(self, capsys):
        assert run(["calc", "rabi", "6", "0.3", "600", "--json"]) == 0
        assert json.loads(capsys.readouterr().out)["two_photon_rabi_mhz"] == pytest.approx(1.5)

    def test_domain_error_exit(self, capsys):
        assert run(["calc", "cyclicity", "2.0", "1.0"]) == 2


class TestListModels:
    def test_lists_models_and_scenarios(self, capsys):
        assert run(["list-models", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert "exp_decay" in doc["models"]
        assert "fig3a" in doc["scenarios"]
        assert len(doc["scenarios"]) >= 12


class TestScenarioParsing:
    def test_duplicate_key_rejected(self):
        from fss.errors import ConfigError

        text = SMALL_SCENARIO + "\n[output]\nseed = 1\nseed = 2\n"
        with pytest.raises(ConfigError) as err:
            parse_scenario(text)
        assert err.value.line is not None

    def test_unknown_key_rejected(self):
        from fss.errors import ConfigError

        with pytest.raises(ConfigError):
            parse_scenario(SMALL_SCENARIO.replace("gamma1", "gamma9"))

    def test_unit_conversion(self, tmp_path):
        text = SMALL_SCENARIO.replace("tau_stop = 20 ns", "tau_stop = 0.02 us")
        sc = parse_scenario(text)
        assert sc.protocols[0][1]["tau_stop"] == pytest.approx(20.0)

    def test_bundled_scenarios_all_parse(self):
        from fss.cli import bundled_scenarios, _resolve_scenario_path

        names = bundled_scenarios()
        assert len(names) >= 12
        for name in names:
            sc = load_scenario(_resolve_scenario_path(name))
            assert sc.protocols


class TestExitCodes:
    def test_non_convergence_exit_5(self, tmp_path, capsys):
        x = np.linspace(0, 40, 60)
        y = 0.8 * np.sin(2e-3 * np.pi * 75.0 * x) * np.exp(-((x / 30.0) ** 2))
        path = tmp_path / "d.csv"
        path.write_text("tau,contrast\n" + "\n".join(f"{a},{b}" for a, b in zip(x, y)),
                        encoding="utf-8")
        rc = run(["fit", "damped_ramsey", path, "-p", "amplitude=0.4",
                  "-p", "delta_mhz=40", "-p", "phase=0.5", "-p", "t2star_ns=10",
                  "--max-eval", "3"])
        assert rc == 5

    def test_threads_env_fallback(self, monkeypatch, tmp_path):
        monkeypatch.setenv("FSS_THREADS", "2")
        path = tmp_path / "smoke.scenario"
        path.write_text(SMALL_SCENARIO, encoding="utf-8")
        assert run(["simulate", path, "--out", tmp_path / "o"]) == 0
        monkeypatch.setenv("FSS_THREADS", "banana")
        assert run(["simulate", path, "--out", tmp_path / "o2"]) == 2

    def test_config_flag_alternative(self, tmp_path):
        path = tmp_path / "smoke.scenario"
        path.write_text(SMALL_SCENARIO, encoding="utf-8")
        assert run(["validate", "--config", path]) == 0
        assert run(["simulate", "--config", path, "--out", tmp_path / "o"]) == 0
        assert run(["simulate"]) == 2
