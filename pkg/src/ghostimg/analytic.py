"""Closed-form mean image, resolution, contrast and SNR predictions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .scenario import DerivedGeometry, ParameterError, Scenario

SQRT_PI = math.sqrt(math.pi)
MIN_CELLS = 30.0


@dataclass(frozen=True)
class TargetSummary:
    """Integral target descriptors used by the contrast and SNR formulas."""

    area: float          # A_T = int T
    area_sq: float       # A'_T = int T^2
    local: float = 1.0   # T at the evaluation pixel

    def __post_init__(self):
        if self.area < 0 or self.area_sq < 0:
            raise ParameterError("target areas must be >= 0")
        if self.area_sq > self.area * (1 + 1e-12):
            raise ParameterError("A'_T cannot exceed A_T for 0 <= T <= 1")
        if not 0 <= self.local <= 1:
            raise ParameterError("local reflectivity must lie in [0, 1]")

    @classmethod
    def from_map(cls, t_map: np.ndarray, pitch: float, local: float | None = None):
        t = np.asarray(t_map, dtype=float)
        a = float(t.sum()) * pitch ** 2
        a2 = float((t * t).sum()) * pitch ** 2
        return cls(a, min(a2, a), float(t.max()) if local is None else local)


def circle_overlap(zeta, d):
    """Overlap area of two circles of diameter d whose centres are zeta apart."""
    z = np.asarray(zeta, dtype=float)
    if np.any(z < 0) or not d > 0:
        raise ParameterError("circle_overlap needs zeta >= 0 and d > 0")
    u = np.clip(z / d, 0.0, 1.0)
    out = 0.5 * d * d * (np.arccos(u) - u * np.sqrt(1.0 - u * u))
    out = np.where(z <= d, out, 0.0)
    return out if out.ndim else float(out)


def _gamma_integral(d: float, panels: int, order: int = 16) -> float:
    # Substituting nu = d cos(t) turns the overlap's square-root edge into a
    # smooth integrand on t in [0, pi/2].
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 0.5 * math.pi, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    c, s = np.cos(t), np.sin(t)
    nu = d * c
    overlap = 0.5 * d * d * (t - s * c)
    f = nu * np.exp(-0.5 * nu * nu) * overlap * d * s
    return float(np.dot(wt, f))


def speckle_averaging_gamma(beta: float, tol: float = 1e-10) -> float:
    """Bucket aperture-averaging factor for a bucket of beta source areas."""
    if not beta > 0:
        raise ParameterError("beta must be > 0")
    d = 4.0 * math.sqrt(beta)
    panels = 32   # 32 panels x 16 nodes = 512 nodes
    coarse = _gamma_integral(d, panels)
    while True:
        fine = _gamma_integral(d, 2 * panels)
        if abs(fine - coarse) <= tol * max(1.0, abs(fine)) or panels >= 4096:
            break
        panels *= 2
        coarse = fine
    return 2 * math.pi * fine / (4 * math.pi * beta) ** 2


def _alpha_for(geom: DerivedGeometry, source_kind: str) -> float:
    return geom.alpha_tilde if source_kind == "computational" else geom.alpha


def predicted_resolution(geom: DerivedGeometry, source_kind: str = "pseudothermal") -> float:
    """e^-1 radius of the mean-image point-spread function."""
    return geom.rho_l * math.sqrt(_alpha_for(geom, source_kind))


def _spdc_gain(sc: Scenario, geom: DerivedGeometry) -> float:
    return 0.25 * sc.detector_bandwidth * sc.coherence_time * (
        1 + 1 / (4 * SQRT_PI * geom.brightness))


@dataclass(frozen=True)
class ContrastPrediction:
    value: float
    low_brightness: float | None = None
    warnings: tuple[str, ...] = ()


def predicted_contrast(geom: DerivedGeometry, target: TargetSummary,
                       source_kind: str, scenario: Scenario) -> ContrastPrediction:
    if not target.area > 0:
        raise ParameterError("A_T must be > 0")
    cell = math.pi * geom.rho_l ** 2
    warnings = []
    if target.area < MIN_CELLS * cell:
        warnings.append(f"A_T spans {target.area / cell:.3g} resolution cells (< {MIN_CELLS:g}); "
                        "complete-resolution approximation questionable")
    c = cell / target.area
    low = None
    if source_kind == "spdc":
        c *= _spdc_gain(scenario, geom)
        if geom.brightness <= 0.01:
            low = (SQRT_PI / 16) * (scenario.detector_bandwidth / scenario.photon_flux) \
                * geom.a_l ** 2 / target.area
    return ContrastPrediction(c, low, tuple(warnings))


@dataclass(frozen=True)
class MeanImage:
    image: np.ndarray
    background: float
    prefactor: float


def _gauss_matrix(n: int, pitch: float, width: float) -> np.ndarray:
    x = (np.arange(n) - n // 2) * pitch
    return np.exp(-((x[:, None] - x[None, :]) / width) ** 2)


def centered_flip(a: np.ndarray) -> np.ndarray:
    """Point reflection through the origin of a centred grid (index n//2 is 0)."""
    return np.roll(np.flip(a, axis=(-2, -1)), (1, 1), axis=(-2, -1))


def predicted_mean_image(geom: DerivedGeometry, t_map: np.ndarray, pitch: float,
                         source_kind: str, scenario: Scenario) -> MeanImage:
    """Mean dc-coupled correlation on the grid of ``t_map`` (counts^2, q = 1)."""
    t = np.asarray(t_map, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ParameterError("t_map must be a square 2-D array")
    if np.any(t < 0) or np.any(t > 1):
        raise ParameterError("t_map values must lie in [0, 1]")
    alpha = _alpha_for(geom, source_kind)
    width = geom.rho_l * math.sqrt(alpha)
    if pitch > width / 4:
        raise ParameterError(f"pitch {pitch:.3g} m exceeds a quarter of the PSF radius {width:.3g} m")
    n = t.shape[0]

    # Kernel mass captured inside the grid for every pixel of target support.
    x = (np.arange(n) - n // 2) * pitch
    lo, hi = x[0] - 0.5 * pitch, x[-1] + 0.5 * pitch
    frac = 0.5 * (erf((hi - x) / width) - erf((lo - x) / width))
    support = t > 0
    if support.any():
        iy, ix = np.nonzero(support)
        mass = (frac[iy] * frac[ix]).min()
        if mass < 0.999:
            raise ParameterError(f"grid captures only {mass:.4f} of the PSF for some target pixels")

    sc = scenario
    prefactor = (sc.quantum_efficiency ** 2 * sc.pixel_area * sc.bucket_area / sc.path_length ** 2
                 * (2 * sc.photon_flux / (math.pi * geom.a_l ** 2)) ** 2)
    c0 = prefactor * float(t.sum()) * pitch ** 2
    src = t
    gain = 1.0
    if source_kind == "spdc":
        src = centered_flip(t)
        gain = _spdc_gain(sc, geom)
    g = _gauss_matrix(n, pitch, width)
    conv = g @ src @ g.T * pitch ** 2
    image = c0 + prefactor * gain / alpha * conv
    return MeanImage(image, c0, prefactor)


@dataclass(frozen=True)
class SnrAsymptotes:
    sat: float
    high: float
    low: float


@dataclass(frozen=True)
class SnrBreakdown:
    total: float
    source: float
    path: float
    detect: float
    mix: float
    sat: float
    high: float
    low: float
    source_kind: str
    warnings: tuple[str, ...] = field(default=())

    def as_row(self, prefix: str) -> dict:
        keys = ("total", "source", "path", "detect", "mix", "sat", "high", "low")
        return {f"{prefix}_{k}": getattr(self, k) for k in keys}


def _guards(geom: DerivedGeometry, target: TargetSummary) -> tuple[str, ...]:
    w = []
    cells = target.area_sq / geom.rho_l ** 2
    if cells < MIN_CELLS:
        w.append(f"A'_T/rho_L^2 = {cells:.3g} < {MIN_CELLS:g}")
    if geom.beta < 1:
        w.append(f"beta = {geom.beta:.3g} < 1")
    return tuple(w)


def _sigma_sum(geom: DerivedGeometry, source_kind: str) -> float:
    if source_kind == "computational":
        return geom.sigma2_s + geom.sigma2_t
    return geom.sigma2_total


def snr_asymptotes(geom: DerivedGeometry, target: TargetSummary, scenario: Scenario,
                   gamma: float | None = None, integration_time: float | None = None
                   ) -> SnrAsymptotes:
    sc = scenario
    kind = sc.source_kind
    ti = sc.integration_time if integration_time is None else integration_time
    if not ti > 0:
        raise ParameterError("integration time must be > 0")
    g = speckle_averaging_gamma(geom.beta) if gamma is None else gamma
    tp = target.local
    t0, ob = sc.coherence_time, sc.detector_bandwidth
    eta, ap, ab, L = sc.quantum_efficiency, sc.pixel_area, sc.bucket_area, sc.path_length
    I, rl2 = geom.brightness, geom.rho_l ** 2
    att = math.exp(-4 * _sigma_sum(geom, kind))
    sat = att / ((g + 1) - att)
    cells = rl2 * att * tp ** 2 / (target.area_sq * (1 + 1 / geom.beta))
    if kind == "spdc":
        high = ob * ti * math.sqrt(math.pi / 8) * cells
        low = (ti / t0) * ap * eta ** 2 * I * tp * ab / (math.pi * rl2 * L ** 2)
    else:
        high = (ti / t0) * math.sqrt(2 * math.pi) * cells
        if kind == "computational":
            low = (ti / t0) * eta * I * tp * ab / L ** 2
        else:
            low = ((ti / t0) * (16 * math.sqrt(2) / SQRT_PI) * ap * eta ** 2 * I ** 2
                   / (ob * t0 * rl2) * tp * ab / L ** 2)
    return SnrAsymptotes(sat, high, low)


def snr(geom: DerivedGeometry, target: TargetSummary, scenario: Scenario,
        gamma: float | None = None, integration_time: float | None = None) -> SnrBreakdown:
    """Pixel SNR with its four scaled noise contributions.

    ``integration_time`` overrides the scenario value so that sweeps may
    reach below the T_I >> T0 regime; such points carry a warning.
    """
    sc = scenario
    kind = sc.source_kind
    ti = sc.integration_time if integration_time is None else integration_time
    if not ti > 0:
        raise ParameterError("integration time must be > 0")
    g = speckle_averaging_gamma(geom.beta) if gamma is None else gamma
    tp = target.local
    t0, ob = sc.coherence_time, sc.detector_bandwidth
    eta, ap, ab, L = sc.quantum_efficiency, sc.pixel_area, sc.bucket_area, sc.path_length
    I, rl2, beta = geom.brightness, geom.rho_l ** 2, geom.beta
    warnings = list(_guards(geom, target))

    mag = math.exp(4 * _sigma_sum(geom, kind))
    d_source = target.area_sq * (1 + 1 / beta) * mag / (math.sqrt(2 * math.pi) * rl2)
    d_path = tp ** 2 * (mag * (g + 1) - 1)
    if kind == "computational":
        d_detect = 0.0
        d_mix = tp * L ** 2 * mag / (eta * I * ab)
    else:
        d_detect = tp * rl2 * SQRT_PI * L ** 2 / (16 * math.sqrt(2) * ap * eta ** 2 * I ** 2 * ab)
        d_mix = (tp * L ** 2 * math.exp(4 * geom.sigma2_r) / (eta * I * ab)
                 + math.pi * rl2 * tp ** 2 * (4 / 3 + 1 / beta)
                 * math.exp(4 * (geom.sigma2_s + geom.sigma2_t)) / (ap * eta * I))

    if kind == "spdc":
        b = 1 + 1 / (4 * SQRT_PI * I)
        num = tp ** 2 * b ** 2
        s_source = 4 / (ob * ti) * d_source
        s_path = d_path * b ** 2
        s_detect = 4 * math.sqrt(2) * t0 / ti * d_detect * b
        s_mix = t0 / ti * d_mix * (2 / math.sqrt(3) + 1 / (4 * SQRT_PI * I))
        if ob * ti < 10:
            warnings.append("Omega_B T_I < 10")
    else:
        num = tp ** 2
        s_source = t0 / ti * d_source
        s_path = d_path
        s_detect = ob * t0 ** 2 / ti * d_detect
        s_mix = t0 / ti * d_mix
        if ti / t0 < 10:
            warnings.append("T_I/T0 < 10")
    den = s_source + s_path + s_detect + s_mix
    if not den > 0:
        raise ArithmeticError("SNR denominator must be positive")
    asym = snr_asymptotes(geom, target, sc, g, ti)
    return SnrBreakdown(num / den, s_source, s_path, s_detect, s_mix,
                        asym.sat, asym.high, asym.low, kind, tuple(warnings))
