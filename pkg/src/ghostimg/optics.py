"""Fresnel propagation, rough-target reflection and bucket collection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .fieldgen import ComplexGrid, GridSpec, as_rng
from .scenario import ParameterError


@lru_cache(maxsize=32)
def _fresnel_factors(n: int, dx_in: float, dx_out: float, wavelength: float, distance: float):
    k = 2 * math.pi / wavelength
    sign = np.where(np.arange(n) % 2, -1.0, 1.0)   # folds the centring shifts
    if (n // 2) % 2:
        sign_out = -sign
    else:
        sign_out = sign
    x_in = (np.arange(n) - n // 2) * dx_in
    x_out = (np.arange(n) - n // 2) * dx_out
    q_in = sign * np.exp(0.5j * k * x_in ** 2 / distance)
    scale = dx_in ** 2 / (1j * wavelength * distance)
    q_out = sign_out * np.exp(0.5j * k * x_out ** 2 / distance)
    pre = np.outer(q_in, q_in)
    post = scale * np.outer(q_out, q_out)
    pre.setflags(write=False)
    post.setflags(write=False)
    return pre, post


def fresnel_factors(in_spec: GridSpec, out_spec: GridSpec, wavelength: float, distance: float):
    """Input and output phase arrays of the single-transform step.

    fraunhofer_propagate(E) == post * fft2(E * pre); exposed so callers can
    fold ``pre`` into other per-pixel factors and apply ``post`` only where
    the output is needed.
    """
    return _fresnel_factors(in_spec.n, in_spec.pitch, out_spec.pitch, wavelength, distance)


def fraunhofer_propagate(field: ComplexGrid, distance: float, wavelength: float,
                         out_spec: GridSpec | None = None, plane: str | None = None) -> ComplexGrid:
    """Single-transform Fresnel propagation over ``distance``.

    Both quadratic phase factors are kept, the exp(ikL) delay is dropped.
    The output pitch is fixed at wavelength * distance / (N * pitch_in),
    which makes the discrete transform unitary.
    """
    spec = field.spec
    dx_out = wavelength * distance / (spec.n * spec.pitch)
    if out_spec is None:
        out_spec = GridSpec(spec.n, dx_out, plane or "target")
    elif out_spec.n != spec.n or abs(out_spec.pitch / dx_out - 1) > 1e-9:
        raise ParameterError("output grid violates the discrete Fresnel sampling relation")
    pre, post = _fresnel_factors(spec.n, spec.pitch, out_spec.pitch, wavelength, distance)
    out = sfft.fft2(field.field * pre, axes=(-2, -1), overwrite_x=True)
    out *= post
    return ComplexGrid(out, out_spec)


def inverse_propagate(field: ComplexGrid, distance: float, wavelength: float,
                      plane: str = "source") -> ComplexGrid:
    """Undo fraunhofer_propagate over ``distance``; the step is unitary, so this is its adjoint."""
    spec = field.spec
    dx_in = wavelength * distance / (spec.n * spec.pitch)
    in_spec = GridSpec(spec.n, dx_in, plane)
    pre, post = _fresnel_factors(spec.n, dx_in, spec.pitch, wavelength, distance)
    out = sfft.ifft2(field.field / post, axes=(-2, -1))
    out /= pre
    return ComplexGrid(out, in_spec)


@dataclass(frozen=True, eq=False)
class SpeckleTarget:
    reflectivity: np.ndarray
    coefficients: np.ndarray
    wavelength: float
    pitch: float
    seed: object = None

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.reflectivity.shape[0], self.pitch, "target")

    def passivity_violation(self) -> float:
        """Fraction of illuminated pixels whose |T| exceeds one."""
        on = self.reflectivity > 0
        if not on.any():
            return 0.0
        return float(np.mean(np.abs(self.coefficients[on]) > 1))


def sample_target(t_map: np.ndarray, wavelength: float, pitch: float, seed) -> SpeckleTarget:
    """Delta-correlated circular Gaussian field-reflection coefficients.

    Per-pixel variance wavelength^2 * T / pitch^2.
    """
    t = np.asarray(t_map, dtype=float)
    if np.any(t < 0) or np.any(t > 1) or not np.all(np.isfinite(t)):
        raise ParameterError("reflectivity map must lie in [0, 1]")
    rng = as_rng(seed)
    z = rng.standard_normal((2,) + t.shape)
    sd = wavelength * np.sqrt(t / 2) / pitch
    return SpeckleTarget(t, sd * (z[0] + 1j * z[1]), wavelength, pitch, seed)


def reflect(field: ComplexGrid, target: SpeckleTarget | np.ndarray) -> ComplexGrid:
    coeff = target.coefficients if isinstance(target, SpeckleTarget) else np.asarray(target)
    if coeff.shape != field.field.shape[-2:]:
        raise ParameterError("target and field grids differ")
    if isinstance(target, SpeckleTarget) and abs(target.pitch / field.spec.pitch - 1) > 1e-9:
        raise ParameterError("target and field pitches differ")
    return ComplexGrid(field.field * coeff, field.spec)


@lru_cache(maxsize=32)
def disc_mask(n: int, pitch: float, area: float) -> np.ndarray:
    """Pixel-centred membership mask of a centred disc of the given area."""
    r = math.sqrt(area / math.pi)
    if r > 0.5 * n * pitch:
        raise ParameterError("aperture exceeds the grid")
    x = (np.arange(n) - n // 2) * pitch
    m = (x[None, :] ** 2 + x[:, None] ** 2) <= r * r
    m.setflags(write=False)
    return m


def bucket_flux(field: ComplexGrid, area: float) -> np.ndarray | float:
    """Photon flux through a centred disc aperture (photons/s)."""
    mask = disc_mask(field.spec.n, field.spec.pitch, float(area))
    e = field.field[..., mask]
    p = (e.real ** 2 + e.imag ** 2).sum(axis=-1) * field.spec.pitch ** 2
    return p if np.ndim(p) else float(p)


def bucket_gram(target_spec: GridSpec, support: np.ndarray, bucket_spec: GridSpec,
                area: float, wavelength: float, distance: float, chunk: int = 64) -> np.ndarray:
    """Hermitian matrix G with bucket flux = v^H G v for fields v on ``support``.

    Built by propagating unit impulses, so it reproduces bucket_flux of a
    full propagation exactly (up to rounding) while costing O(K^2) per
    frame for K support pixels.
    """
    idx = np.flatnonzero(np.asarray(support, bool).ravel())
    mask = disc_mask(bucket_spec.n, bucket_spec.pitch, float(area))
    n = target_spec.n
    cols = []
    for start in range(0, idx.size, chunk):
        sub = idx[start:start + chunk]
        imp = np.zeros((sub.size, n * n), dtype=complex)
        imp[np.arange(sub.size), sub] = 1.0
        out = fraunhofer_propagate(ComplexGrid(imp.reshape(-1, n, n), target_spec),
                                   distance, wavelength, bucket_spec)
        cols.append(out.field[:, mask])
    b = np.concatenate(cols, axis=0).T if cols else np.zeros((int(mask.sum()), 0), complex)
    g = (b.conj().T @ b) * bucket_spec.pitch ** 2
    return 0.5 * (g + g.conj().T)


def gram_flux(v: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """Quadratic-form bucket flux for a batch of support vectors v (B, K)."""
    return np.einsum("bi,bi->b", v.conj(), v @ gram.T).real


# Built-in reflectivity maps on a centred grid.

def disc_target(spec: GridSpec, radius: float, center=(0.0, 0.0)) -> np.ndarray:
    x = spec.axis()
    r2 = (x[None, :] - center[0]) ** 2 + (x[:, None] - center[1]) ** 2
    return (r2 <= radius ** 2).astype(float)


def point_target(spec: GridSpec, center=(0.0, 0.0)) -> np.ndarray:
    t = np.zeros((spec.n, spec.n))
    i = spec.n // 2 + int(round(center[1] / spec.pitch))
    j = spec.n // 2 + int(round(center[0] / spec.pitch))
    t[i, j] = 1.0
    return t


def two_point_target(spec: GridSpec, separation: float) -> np.ndarray:
    h = 0.5 * separation
    return point_target(spec, (-h, 0.0)) + point_target(spec, (h, 0.0))


def bar_target(spec: GridSpec, period: float, bars: int = 3, length: float | None = None) -> np.ndarray:
    """Vertical bars of width period/2, centred on the axis."""
    x = spec.axis()
    length = bars * period if length is None else length
    width = bars * period
    xs = x + 0.5 * width
    on_x = (xs >= 0) & (xs < width) & (np.mod(xs, period) < 0.5 * period)
    on_y = np.abs(x) <= 0.5 * length
    return (on_y[:, None] & on_x[None, :]).astype(float)
