import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghostimg.fieldgen import ComplexGrid, GridSpec, pseudothermal_frames
from ghostimg.optics import (bar_target, bucket_flux, bucket_gram, disc_target, fraunhofer_propagate,
                             gram_flux, inverse_propagate, point_target, reflect, sample_target, two_point_target)
from ghostimg.scenario import ParameterError, Scenario, derive_geometry

LAM, L = 1.5e-6, 1000.0


def random_field(n=64, pitch=1e-3, seed=0, batch=()):
    rng = np.random.default_rng(seed)
    shape = tuple(batch) + (n, n)
    return ComplexGrid(rng.standard_normal(shape) + 1j * rng.standard_normal(shape),
                       GridSpec(n, pitch))


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([16, 64, 128]))
@settings(max_examples=20, deadline=None)
def test_parseval(seed, n):
    f = random_field(n, 1e-3, seed)
    out = fraunhofer_propagate(f, L, LAM)
    assert abs(out.power() / f.power() - 1) < 1e-10


def test_cascade_inverts():
    f = random_field(128, 1e-3, 1)
    fwd = fraunhofer_propagate(f, L, LAM)
    back = inverse_propagate(fwd, L, LAM)
    assert back.spec.pitch == pytest.approx(1e-3, rel=1e-12)
    err = np.abs(back.field - f.field).max() / np.abs(f.field).max()
    assert err < 1e-8


def test_gaussian_beam_width():
    n, dx, a0, z = 256, 1e-4, 9e-4, 5000.0
    spec = GridSpec(n, dx)
    e = np.exp(-spec.radius2() / a0 ** 2)
    out = fraunhofer_propagate(ComplexGrid(e, spec), z, LAM)
    i = out.intensity()
    r2 = out.spec.radius2()
    width = math.sqrt((i * r2).sum() / i.sum())   # intensity exp(-2 r^2/w^2) has <r^2> = w^2/2
    zr = math.pi * a0 ** 2 / LAM
    expect = a0 * math.sqrt(1 + (z / zr) ** 2) / math.sqrt(2)
    assert width == pytest.approx(expect, rel=0.01)


def test_sampling_relation_enforced():
    f = random_field(64, 1e-3)
    with pytest.raises(ParameterError):
        fraunhofer_propagate(f, L, LAM, GridSpec(64, 1e-2))


def test_batch_matches_single():
    f = random_field(64, 1e-3, 3, batch=(3,))
    b = fraunhofer_propagate(f, L, LAM)
    s = fraunhofer_propagate(ComplexGrid(f.field[1], f.spec), L, LAM)
    np.testing.assert_allclose(b.field[1], s.field, rtol=1e-12, atol=1e-18)


def test_target_coefficient_power():
    spec = GridSpec(64, 0.01, "target")
    t = np.full((64, 64), 0.5)
    tgt = sample_target(t, LAM, spec.pitch, 0)
    p = np.mean(np.abs(tgt.coefficients) ** 2)
    assert p == pytest.approx(LAM ** 2 * 0.5 / spec.pitch ** 2, rel=0.05)


def test_zero_target_reflects_nothing():
    spec = GridSpec(64, 0.01, "target")
    tgt = sample_target(np.zeros((64, 64)), LAM, spec.pitch, 0)
    f = ComplexGrid(np.ones((64, 64), complex), spec)
    assert np.all(reflect(f, tgt).field == 0)
    assert tgt.passivity_violation() == 0.0


def test_reflect_with_unit_coefficients():
    f = random_field(64, 0.01)
    out = reflect(f, np.ones((64, 64)))
    np.testing.assert_array_equal(out.field, f.field)


def test_target_validation():
    with pytest.raises(ParameterError):
        sample_target(np.full((8, 8), 1.5), LAM, 0.01, 0)
    f = random_field(64, 0.01)
    with pytest.raises(ParameterError):
        reflect(f, np.ones((32, 32)))


def test_bucket_flux_uniform_field():
    spec = GridSpec(256, 1e-3, "detector")
    f = ComplexGrid(np.full((256, 256), math.sqrt(3.0) + 0j), spec)
    area = math.pi * 0.05 ** 2
    assert bucket_flux(f, area) == pytest.approx(3.0 * area, rel=0.01)


def test_bucket_aperture_too_large():
    f = random_field(64, 1e-3)
    with pytest.raises(ParameterError):
        bucket_flux(f, math.pi * 0.04 ** 2)


def test_bucket_flux_inverse_square():
    # a point scatterer: flux in a fixed bucket falls as L^-2
    spec = GridSpec(128, 0.01, "target")
    f = ComplexGrid(point_target(spec).astype(complex), spec)
    lengths = np.array([500.0, 1000.0, 2000.0, 4000.0])
    flux = [bucket_flux(fraunhofer_propagate(f, z, LAM, plane="detector"), 1e-3) for z in lengths]
    slope = np.polyfit(np.log(lengths), np.log(flux), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.1)


def test_gram_matches_fft_route():
    tspec = GridSpec(64, 0.02, "target")
    bspec = tspec.far_field(LAM, L, "detector")
    support = disc_target(tspec, 0.1) > 0
    area = math.pi * (10 * bspec.pitch) ** 2
    g = bucket_gram(tspec, support, bspec, area, LAM, L)
    f = random_field(64, 0.02, 5, batch=(4,))
    field = np.where(support, f.field, 0)
    ref = bucket_flux(fraunhofer_propagate(ComplexGrid(field, tspec), L, LAM, bspec), area)
    v = field.reshape(4, -1)[:, support.ravel()]
    np.testing.assert_allclose(gram_flux(v, g), ref, rtol=1e-12)
    np.testing.assert_allclose(g, g.conj().T, rtol=0, atol=1e-14 * np.abs(g).max())


def test_target_shapes():
    spec = GridSpec(64, 1.0, "target")
    assert point_target(spec).sum() == 1
    assert two_point_target(spec, 6.0).sum() == 2
    d = disc_target(spec, 5.0)
    assert d.sum() * 1.0 == pytest.approx(math.pi * 25, rel=0.1)
    b = bar_target(spec, 8.0, bars=3)
    assert b.sum() > 0 and b.max() == 1


def test_ensemble_on_target_statistics():
    sc = Scenario(wavelength=LAM, source_radius=0.01, coherence_length=1e-3, coherence_time=1e-6,
                  photon_flux=1e12, path_length=L, cn2_reference=0.0, cn2_signal=0.0,
                  cn2_target=0.0, quantum_efficiency=0.9, detector_bandwidth=1e9,
                  notch_bandwidth=1e6, pixel_area=1e-6, bucket_area=3e-4, integration_time=1e-3)
    g = derive_geometry(sc)
    out = fraunhofer_propagate(pseudothermal_frames(GridSpec(256, 3e-4), sc, list(range(600))),
                               L, LAM)
    i = out.intensity().mean(0)
    # mean intensity exp(-2 r^2 / a_L^2): <r^2> = a_L^2 / 2 in the plane
    radius = math.sqrt(2 * (i * out.spec.radius2()).sum() / i.sum())
    assert radius == pytest.approx(g.a_l, rel=0.10)
    # intensity correlation |mu|^2 = exp(-d^2 / rho_L^2) near the axis
    c, lag = 128, 2
    a = out.field[:, c - 4:c + 4, c - 4:c + 4]
    b = out.field[:, c - 4:c + 4, c - 4 + lag:c + 4 + lag]
    mu = np.abs((a * b.conj()).mean(0)) / np.sqrt((np.abs(a) ** 2).mean(0) * (np.abs(b) ** 2).mean(0))
    d = lag * out.spec.pitch
    assert np.mean(mu ** 2) == pytest.approx(math.exp(-(d / g.rho_l) ** 2), rel=0.10)
