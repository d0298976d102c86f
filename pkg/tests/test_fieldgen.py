import math

import numpy as np
import pytest
from scipy import stats

from ghostimg import fieldgen as fg
from ghostimg.fieldgen import (GridSpec, check_source_grid, pseudothermal_frame, pseudothermal_frames,
                               schell_fields, slm_frame, slm_phases, stream_seed)
from ghostimg.optics import fraunhofer_propagate
from ghostimg.scenario import ParameterError, Scenario


def desk(**kw):
    d = dict(wavelength=1.5e-6, source_radius=0.01, coherence_length=1e-3, coherence_time=1e-6,
             photon_flux=1e12, path_length=1000.0, cn2_reference=0.0, cn2_signal=0.0,
             cn2_target=0.0, quantum_efficiency=0.9, detector_bandwidth=1e9,
             notch_bandwidth=1e6, pixel_area=1e-6, bucket_area=3e-4, integration_time=1e-3)
    d.update(kw)
    return Scenario(**d)


SPEC = GridSpec(64, 1.0)


def test_grid_power_of_two():
    with pytest.raises(ParameterError):
        GridSpec(100, 1.0)
    with pytest.raises(ParameterError):
        GridSpec(64, 0.0)


def test_far_field_pitch():
    g = GridSpec(128, 2e-4).far_field(1.5e-6, 1000.0, "target")
    assert g.pitch == pytest.approx(1.5e-6 * 1000 / (128 * 2e-4), rel=1e-15)


def test_stream_seeds_independent_of_order():
    a = np.random.default_rng(stream_seed(7, 3, fg.SOURCE, 11)).random(4)
    b = np.random.default_rng(stream_seed(7, 3, fg.SOURCE, 11)).random(4)
    c = np.random.default_rng(stream_seed(7, 3, fg.SCREEN_S, 11)).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_frame_determinism():
    sc = desk()
    spec = GridSpec(256, 3e-4)
    a = pseudothermal_frame(spec, sc, stream_seed(1, 0, fg.SOURCE, 5))
    b = pseudothermal_frame(spec, sc, stream_seed(1, 0, fg.SOURCE, 5))
    np.testing.assert_array_equal(a.signal.field, b.signal.field)
    assert a.reference is a.signal


def test_infinite_coherence_gives_plane_wave():
    f = schell_fields(SPEC, math.inf, [0, 1])
    for k in range(2):
        assert np.allclose(f[k], f[k][0, 0])
    assert np.all(np.abs(f) > 0)


def test_schell_covariance():
    rho0 = 3.0
    f = schell_fields(SPEC, rho0, list(range(4000)))
    d = rho0 * math.sqrt(2 * math.log(2))     # exp(-d^2/2 rho0^2) = 1/2 at d ~ 3.53 px
    lag = int(round(d))
    c = np.mean(f[:, 20:44, 20:44] * np.conj(f[:, 20:44, 20 + lag:44 + lag]))
    expect = math.exp(-lag ** 2 / (2 * rho0 ** 2))
    assert abs(c.real - expect) < 0.02 and abs(c.imag) < 0.02
    var = np.mean(np.abs(f) ** 2)
    assert var == pytest.approx(1.0, abs=0.02)


def test_schell_phase_sensitive_correlation_vanishes():
    f = schell_fields(SPEC, 2.0, list(range(2000)))
    assert abs(np.mean(f * f)) < 0.02
    assert abs(np.mean(f[:, :, :-1] * f[:, :, 1:])) < 0.02


def test_single_precision_fields():
    f = schell_fields(SPEC, 2.0, [0, 1], dtype=np.complex64)
    assert f.dtype == np.complex64
    assert np.mean(np.abs(f) ** 2) == pytest.approx(1.0, abs=0.2)


def test_frame_power_matches_flux():
    sc = desk()
    spec = GridSpec(256, 3e-4)
    seeds = [stream_seed(2, 0, fg.SOURCE, k) for k in range(400)]
    p = pseudothermal_frames(spec, sc, seeds).power()
    assert p.mean() == pytest.approx(sc.photon_flux, rel=0.03)


def test_source_grid_checks():
    sc = desk()
    with pytest.raises(ParameterError):
        check_source_grid(GridSpec(64, 3e-4), sc)      # 1.9 cm < 6 a0
    with pytest.raises(ParameterError):
        check_source_grid(GridSpec(128, 5e-4), sc)     # pitch > rho0/3
    check_source_grid(GridSpec(128, 5e-4), sc, coherence=False)


def test_spdc_frame_refused():
    sc = desk(source_kind="spdc", coherence_time=1e-12)
    with pytest.raises(ParameterError):
        pseudothermal_frame(GridSpec(256, 3e-4), sc, 0)


def test_slm_same_seed_same_mask():
    a = slm_phases(SPEC, 4.0, [9])
    b = slm_phases(SPEC, 4.0, [9])
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= 0) & (a < 2 * math.pi))
    blocks = a[0].reshape(16, 4, 16, 4)
    assert np.all(blocks == blocks[:, :1, :, :1])


def test_slm_single_macropixel_is_plane_wave():
    theta = slm_phases(SPEC, 64.0, [3])[0]
    assert np.all(theta == theta[0, 0])


def test_slm_macropixel_below_pitch():
    with pytest.raises(ParameterError):
        slm_phases(SPEC, 0.5, [0])


def test_slm_frame_has_no_reference():
    f = slm_frame(GridSpec(256, 3e-4), desk(), 6e-4, 0)
    assert f.reference is None
    assert f.signal.power() == pytest.approx(desk().photon_flux, rel=1e-6)


def test_far_field_speckle_is_exponential():
    # far-field intensity of a Gaussian-Schell frame: exponential statistics
    sc = desk()
    spec = GridSpec(256, 3e-4)
    seeds = [stream_seed(4, 0, fg.SOURCE, k) for k in range(300)]
    out = fraunhofer_propagate(pseudothermal_frames(spec, sc, seeds), sc.path_length, sc.wavelength)
    i = out.intensity()[:, 128, 128]
    assert stats.kstest(i / i.mean(), "expon").pvalue > 0.01
