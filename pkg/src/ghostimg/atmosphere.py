"""Thin turbulence screens e^(chi + i phi) with square-law mutual coherence."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy.optimize import least_squares

from .fieldgen import ComplexGrid, GridSpec, as_rng
from .scenario import ParameterError

# Bounds of the phase-covariance e^-1 radius, in units of rho_m.
PHASE_WIDTH_BOUNDS = (1.0, 20.0)
FIT_SPAN = 2.0          # fit separations in [0, FIT_SPAN * rho_m]
SPECTRAL_RANGE = 36.0   # drop Gaussian spectral weights below e^-36


@dataclass(frozen=True)
class PhaseFit:
    variance: float     # sigma_phi^2
    radius: float       # e^-1 radius of the phase covariance (m)
    max_error: float    # max |model - target| coherence over the fit span


@dataclass(frozen=True, eq=False)
class TurbulenceScreen:
    perturbation: np.ndarray | None   # None is the identity screen
    spec: GridSpec
    path: str
    coherence_length: float
    logamp_variance: float
    seed: object = None
    phase_fit: PhaseFit | None = None

    @property
    def is_identity(self) -> bool:
        return self.perturbation is None


def _coherence_model(d, var, width, s2, rchi):
    chi = 0.0 if s2 == 0 else s2 * (1 - np.exp(-(d / rchi) ** 2))
    return np.exp(-var * (1 - np.exp(-(d / width) ** 2)) - chi)


@lru_cache(maxsize=64)
def fit_phase_covariance(rho_m: float, sigma2: float = 0.0,
                         logamp_radius: float = math.inf) -> PhaseFit:
    """Gaussian phase covariance whose screen coherence best tracks exp(-d^2/2 rho_m^2).

    The fit is least squares in coherence over d in [0, 2 rho_m], with the
    logamplitude decorrelation included so the total mutual coherence is
    what gets matched.
    """
    d = np.linspace(0.0, FIT_SPAN * rho_m, 201)
    target = np.exp(-0.5 * (d / rho_m) ** 2)
    lo, hi = PHASE_WIDTH_BOUNDS

    def resid(p):
        var, wr = p
        return _coherence_model(d, var, wr * rho_m, sigma2, logamp_radius) - target

    w0 = 0.5 * (lo + hi)
    p0 = (0.5 * w0 ** 2, w0)
    res = least_squares(resid, p0, bounds=([0.0, lo], [np.inf, hi]), xtol=1e-14, ftol=1e-14)
    var, wr = res.x
    err = float(np.abs(resid(res.x)).max())
    return PhaseFit(float(var), float(wr * rho_m), err)


@lru_cache(maxsize=32)
def _direct_basis(n: int, pitch: float, radius: float):
    extent = n * pitch
    period = extent + 4 * radius
    m_max = int(math.ceil(math.sqrt(SPECTRAL_RANGE) * period / (math.pi * radius)))
    m = np.arange(-m_max, m_max + 1)
    x = (np.arange(n) - n // 2) * pitch
    basis = np.exp(2j * math.pi * np.outer(x, m) / period)
    f2 = (m[:, None] ** 2 + m[None, :] ** 2) / period ** 2
    w = np.exp(-math.pi ** 2 * radius ** 2 * f2)
    w /= w.sum()
    amp = np.sqrt(2 * w)
    basis.setflags(write=False)
    amp.setflags(write=False)
    return basis, amp


@lru_cache(maxsize=32)
def _fft_filter(n: int, pitch: float, radius: float):
    f = sfft.fftfreq(n, pitch)
    f2 = f[None, :] ** 2 + f[:, None] ** 2
    w = np.exp(-math.pi ** 2 * radius ** 2 * f2)
    w /= w.sum()
    amp = np.sqrt(2 * w) * n * n
    amp.setflags(write=False)
    return amp


def gaussian_field(spec: GridSpec, variance: float, radius: float, rng) -> np.ndarray:
    """Zero-mean real Gaussian field with covariance variance * exp(-d^2/radius^2).

    Grids much wider than the correlation radius use a periodic FFT
    synthesis. Otherwise a low-order Fourier series on a period padded by
    4 radii is summed directly, so long correlations are not wrapped.
    """
    rng = as_rng(rng)
    n = spec.n
    if variance == 0:
        return np.zeros((n, n))
    if spec.extent >= 8 * radius:
        amp = _fft_filter(n, spec.pitch, float(radius))
        z = rng.standard_normal((2, n, n))
        field = sfft.ifft2(amp * (z[0] + 1j * z[1]) / math.sqrt(2)).real
    else:
        basis, amp = _direct_basis(n, spec.pitch, float(radius))
        k = amp.shape[0]
        z = rng.standard_normal((2, k, k))
        c = amp * (z[0] + 1j * z[1]) / math.sqrt(2)
        field = (basis @ c @ basis.T).real
    return math.sqrt(variance) * field


def sample_screen(spec: GridSpec, rho_m: float, sigma2: float, seed, *,
                  logamp_radius: float | None = None, path: str = "S") -> TurbulenceScreen:
    """Random screen exp(chi + i phi) for one path.

    phi has a fitted Gaussian covariance (see fit_phase_covariance); chi is
    Gaussian with mean -sigma2, variance sigma2 and e^-1 correlation radius
    ``logamp_radius`` (normally sqrt(wavelength * L)).
    """
    if sigma2 < 0 or not rho_m > 0:
        raise ParameterError("need rho_m > 0 and sigma2 >= 0")
    no_phase = math.isinf(rho_m)
    if no_phase and sigma2 == 0:
        return TurbulenceScreen(None, spec, path, rho_m, 0.0, seed)
    if sigma2 > 0 and not (logamp_radius and logamp_radius > 0):
        raise ParameterError("logamp_radius required when sigma2 > 0")
    rng = as_rng(seed)
    psi = np.zeros((spec.n, spec.n), dtype=complex)
    fit = None
    if not no_phase:
        lr = logamp_radius if sigma2 > 0 else math.inf
        fit = fit_phase_covariance(float(rho_m), float(sigma2), float(lr))
        psi += 1j * gaussian_field(spec, fit.variance, fit.radius, rng)
    if sigma2 > 0:
        psi += gaussian_field(spec, sigma2, logamp_radius, rng) - sigma2
    return TurbulenceScreen(np.exp(psi), spec, path, rho_m, sigma2, seed, fit)


def apply_screen(field: ComplexGrid, screen: TurbulenceScreen) -> ComplexGrid:
    if screen.is_identity:
        return field
    if not field.spec.congruent(screen.spec):
        raise ParameterError("screen and field grids differ")
    return ComplexGrid(field.field * screen.perturbation, field.spec)
