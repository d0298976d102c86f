import math

import numpy as np
import pytest

from ghostimg.atmosphere import apply_screen, fit_phase_covariance, gaussian_field, sample_screen
from ghostimg.fieldgen import ComplexGrid, GridSpec
from ghostimg.scenario import ParameterError

SPEC = GridSpec(64, 1.0)
RHO, S2, LR = 6.0, 0.1, 12.0


def screens(count, rho=RHO, s2=S2, lr=LR, seed0=0):
    return np.stack([sample_screen(SPEC, rho, s2, seed0 + i, logamp_radius=lr).perturbation
                     for i in range(count)])


def test_identity_screen():
    s = sample_screen(SPEC, math.inf, 0.0, 0)
    assert s.is_identity
    f = ComplexGrid(np.ones((64, 64), complex), SPEC)
    assert apply_screen(f, s) is f


def test_uniform_screen_scales_field():
    s = sample_screen(SPEC, RHO, S2, 3, logamp_radius=LR)
    f = ComplexGrid(np.full((64, 64), 2.0 + 0j), SPEC)
    np.testing.assert_allclose(apply_screen(f, s).field, 2.0 * s.perturbation, rtol=1e-15)


def test_grid_mismatch():
    s = sample_screen(SPEC, RHO, S2, 3, logamp_radius=LR)
    f = ComplexGrid(np.ones((64, 64), complex), GridSpec(64, 2.0))
    with pytest.raises(ParameterError):
        apply_screen(f, s)


def test_logamp_requires_radius():
    with pytest.raises(ParameterError):
        sample_screen(SPEC, RHO, 0.1, 0)


def test_seed_determinism():
    a = sample_screen(SPEC, RHO, S2, 42, logamp_radius=LR).perturbation
    b = sample_screen(SPEC, RHO, S2, 42, logamp_radius=LR).perturbation
    np.testing.assert_array_equal(a, b)


def test_phase_fit_residual():
    for s2, lr in ((0.0, math.inf), (S2, LR)):
        fit = fit_phase_covariance(RHO, s2, lr)
        assert fit.max_error < 0.01


def test_mutual_coherence_at_rho_m():
    e = screens(3000)
    d = int(RHO)
    c = np.mean(e[:, :, :-d] * np.conj(e[:, :, d:]))
    assert c.real == pytest.approx(math.exp(-0.5), abs=0.03)
    assert abs(c.imag) < 0.03


def test_mean_power_transmission():
    e = screens(3000)
    assert np.mean(np.abs(e) ** 2) == pytest.approx(1.0, abs=0.03)


def test_coherence_negative_control():
    # a screen with twice the coherence length must fail the rho_m check
    e = screens(1000, rho=2 * RHO)
    d = int(RHO)
    c = np.mean(e[:, :, :-d] * np.conj(e[:, :, d:])).real
    assert abs(c - math.exp(-0.5)) > 0.1


def test_gaussian_field_covariance_both_routes():
    # FFT synthesis (wide grid) and direct series (narrow grid)
    for radius in (4.0, 20.0):
        f = np.stack([gaussian_field(SPEC, 2.0, radius, np.random.default_rng(i))
                      for i in range(2000)])
        assert np.var(f) == pytest.approx(2.0, rel=0.08)
        lag = int(radius // 2)
        c = np.mean(f[:, :, :-lag] * f[:, :, lag:])
        assert c == pytest.approx(2.0 * math.exp(-(lag / radius) ** 2), rel=0.1)


def test_power_conserved_in_ensemble():
    rng = np.random.default_rng(0)
    field = ComplexGrid(rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64)), SPEC)
    p0 = field.power()
    out = [apply_screen(field, sample_screen(SPEC, RHO, S2, i, logamp_radius=LR)).power()
           for i in range(400)]
    assert np.mean(out) == pytest.approx(p0, rel=0.03)
