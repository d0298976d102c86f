import json
import math

import numpy as np
import pytest

from ghostimg import cli, harness, io
from ghostimg.harness import ExperimentConfig, preset_config
from ghostimg.scenario import ParameterError


# ------------------------------------------------------------------ config

def test_budget_enforced():
    with pytest.raises(ParameterError):
        ExperimentConfig("psf", frames=10_000, trials=1000)


def test_grid_limit():
    with pytest.raises(ParameterError):
        ExperimentConfig("psf", n=512)


def test_missing_pgm():
    with pytest.raises(ParameterError):
        ExperimentConfig("simulate-image", target={"shape": "pgm", "path": "/nonexistent.pgm"})


def test_unknown_config_keys():
    with pytest.raises(ParameterError):
        ExperimentConfig.from_dict({"kind": "psf", "frmaes": 10})


def test_bad_kind_and_sweep():
    with pytest.raises(ParameterError):
        ExperimentConfig("nonsense")
    with pytest.raises(ParameterError):
        ExperimentConfig("analytic-sweep", sweep={"variable": "wavelength"})


def test_config_round_trip(tmp_path):
    c = preset_config("contrast")
    p = tmp_path / "c.json"
    p.write_text(json.dumps(c.to_dict()))
    assert ExperimentConfig.from_json(p) == c


def test_duplicate_checks_rejected():
    r = harness.RunReport({})
    r.add(harness.bool_check("a", True))
    with pytest.raises(ValueError):
        r.add(harness.bool_check("a", True))


# ------------------------------------------------------------------ analytic sweep

def test_sweep_csv_is_byte_reproducible(tmp_path):
    paths = []
    for d in ("a", "b"):
        c = preset_config("analytic-sweep", out=str(tmp_path / d))
        assert harness.run(c).passed
        paths.append(tmp_path / d / "sweep.csv")
    assert paths[0].read_bytes() == paths[1].read_bytes()
    rows = io.read_csv(paths[0])
    assert len(rows) == 71
    assert set(harness.sweep_columns()) == set(rows[0])
    assert paths[0].read_bytes().count(b"\r\n") == 72


def test_sweep_high_brightness_spdc_first():
    c = preset_config("analytic-sweep", options={"brightness_omega": 1e4})
    r = harness.run(c)
    assert r.check("spdc_saturates_first").passed
    reach = r.results["reach_0.9_sat"]
    assert reach["Q"] < 1e8 and math.isinf(reach["C"])


def test_sweep_flags_spdc_far_field():
    r = harness.run(preset_config("analytic-sweep"))
    assert any(w.startswith("Q: far_field") for w in r.warnings)


def test_sweep_saturation_constant():
    r = harness.run(preset_config("analytic-sweep", options={"cn2": 0.0, "beta": 1.0}))
    assert r.check("saturation_snr_beta1").passed


def test_sweep_other_variables():
    for var in ("beta", "brightness_omega", "cn2"):
        r = harness.run(ExperimentConfig("analytic-sweep", sweep={"variable": var}))
        assert r.results["rows"] > 10


# ------------------------------------------------------------------ validation suites

def test_validation_reduced_samples():
    r = harness.run_validation(ExperimentConfig("validate-stats", options={"samples": 500}))
    assert r.passed, r.summary()


def test_validation_negative_control():
    def lossy(field, distance, wavelength, *a, **kw):
        out = harness.fraunhofer_propagate(field, distance, wavelength, *a, **kw)
        return harness.ComplexGrid(out.field * 0.999, out.spec)

    r = harness.run_validation(ExperimentConfig("validate-stats", options={"samples": 200}), lossy)
    assert not r.check("parseval").passed
    assert not r.passed


# ------------------------------------------------------------------ Monte Carlo experiments

def test_two_point_resolved_without_turbulence(tmp_path):
    c = ExperimentConfig("simulate-image", n=128, frames=2000, trials=1, seed=5, window=32,
                         single=True, out=str(tmp_path),
                         target={"shape": "two-point", "separation": 4.0},
                         options={"q": 5.0, "valley_max": 0.5})
    r = harness.run(c)
    assert r.passed and r.results["valley_to_peak"] < 0.2
    assert (tmp_path / "ac.pgm").exists() and (tmp_path / "report.json").exists()
    img, meta = io.read_raw(tmp_path / "ac.f64")
    assert img.shape == (32, 32) and meta["seed"] == 5


@pytest.mark.slow
def test_two_point_merged_with_turbulence():
    # rho_S = rho_R = a0/sqrt(3) doubles the PSF radius
    c = ExperimentConfig("simulate-image", n=128, frames=200, trials=100, seed=5, window=32,
                         single=True, target={"shape": "two-point", "separation": 4.0},
                         options={"q": 5.0, "rho_s_over_a0": 1 / math.sqrt(3),
                                  "valley_min": 0.5})
    r = harness.run(c)
    assert r.passed, r.summary()


def test_pgm_target(tmp_path):
    t = np.zeros((64, 64))
    t[30:34, 30:34] = 1.0
    p = io.write_pgm(tmp_path / "t.pgm", t, maxval=255)
    c = ExperimentConfig("simulate-image", n=64, frames=32, trials=1, seed=1, window=16,
                         target={"shape": "pgm", "path": str(p)}, options={"q": 3.0})
    run = harness.prepare(c)
    np.testing.assert_array_equal(run.t_map, t)
    assert harness.run(c).passed


# ------------------------------------------------------------------ io

def test_pgm_round_trip(tmp_path):
    a = np.linspace(0, 1, 12).reshape(3, 4)
    for maxval in (255, 65535):
        p = io.write_pgm(tmp_path / f"a{maxval}.pgm", a, maxval=maxval)
        np.testing.assert_allclose(io.read_pgm(p), a, atol=0.5 / maxval)


def test_ascii_pgm_with_comment(tmp_path):
    p = tmp_path / "b.pgm"
    p.write_text("P2\n# a comment\n2 2\n4\n0 1\n2 4\n")
    np.testing.assert_allclose(io.read_pgm(p), [[0, 0.25], [0.5, 1.0]])


def test_raw_and_csv_round_trip(tmp_path):
    a = np.random.default_rng(0).standard_normal((5, 7))
    io.write_raw(tmp_path / "a.f64", a, pitch=0.1)
    b, meta = io.read_raw(tmp_path / "a.f64")
    np.testing.assert_array_equal(a, b)
    assert meta["pitch"] == 0.1 and meta["byteorder"] == "little"
    rows = [{"x": 0.1 + 0.2, "y": "text, with comma", "z": [1, 2]}]
    io.write_csv(tmp_path / "t.csv", rows, ["x", "y", "z"])
    back = io.read_csv(tmp_path / "t.csv")
    assert float(back[0]["x"]) == 0.1 + 0.2
    assert back[0]["y"] == "text, with comma" and back[0]["z"] == "1;2"


# ------------------------------------------------------------------ CLI

def test_cli_analytic(tmp_path, capsys):
    rc = cli.main(["analytic", "--preset", "paper-sec5", "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    assert (tmp_path / "sweep.csv").exists()
    assert capsys.readouterr().out.strip() == "ok"


def test_cli_preset_only_for_analytic(capsys):
    assert cli.main(["psf", "--preset", "paper-sec5"]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_bad_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"kind": "psf", "frames": 10, "bogus": 1}))
    assert cli.main(["psf", "--config", str(p)]) == 2
    p.write_text(json.dumps({"kind": "contrast"}))
    assert cli.main(["psf", "--config", str(p)]) == 2
    p.write_text("{not json")
    assert cli.main(["psf", "--config", str(p)]) == 2


def test_cli_seed_range():
    assert cli.main(["analytic", "--seed", str(2 ** 64)]) == 2


def test_cli_failing_run_returns_one(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"kind": "simulate-image", "n": 64, "frames": 32, "seed": 1,
                             "window": 16, "target": {"shape": "two-point", "separation": 4.0},
                             "options": {"q": 3.0, "valley_max": -1.0}}))
    assert cli.main(["simulate", "--config", str(p), "--quiet"]) == 1
