"""Physical parameters and the derived far-field / turbulence geometry."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

# Sentinel for a turbulence-free path; formulas take exact limits with it.
NO_TURBULENCE = math.inf

FAR_FIELD_LIMIT = 0.1
BROADBAND_MIN = 100.0      # Omega_B * T0 for thermal-like sources
NARROWBAND_MAX = 0.01      # Omega_B * T0 for spdc
INTEGRATION_RATIO_MIN = 10.0
RYTOV_WARN = 0.3

SOURCE_KINDS = ("pseudothermal", "spdc", "computational")


class ParameterError(ValueError):
    """Raised for physically meaningless or inconsistent inputs."""


@dataclass(frozen=True)
class Scenario:
    """All physical inputs, SI units."""

    wavelength: float
    source_radius: float
    coherence_length: float
    coherence_time: float
    photon_flux: float
    path_length: float
    cn2_reference: float
    cn2_signal: float
    cn2_target: float
    quantum_efficiency: float
    detector_bandwidth: float
    notch_bandwidth: float
    pixel_area: float
    bucket_area: float
    integration_time: float
    source_kind: str = "pseudothermal"

    def __post_init__(self):
        positive = ("wavelength", "source_radius", "coherence_length", "coherence_time",
                    "photon_flux", "path_length", "detector_bandwidth", "notch_bandwidth",
                    "pixel_area", "bucket_area", "integration_time")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ParameterError(f"{name} must be > 0, got {v!r}")
        for name in ("cn2_reference", "cn2_signal", "cn2_target"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ParameterError(f"{name} must be finite and >= 0, got {v!r}")
        if not 0 < self.quantum_efficiency <= 1:
            raise ParameterError("quantum_efficiency must lie in (0, 1]")
        if self.notch_bandwidth >= self.detector_bandwidth:
            raise ParameterError("notch_bandwidth must be below detector_bandwidth")
        if self.source_kind not in SOURCE_KINDS:
            raise ParameterError(f"source_kind must be one of {SOURCE_KINDS}")
        bt0 = self.detector_bandwidth * self.coherence_time
        if self.source_kind == "spdc":
            if bt0 > NARROWBAND_MAX:
                raise ParameterError(f"spdc needs Omega_B*T0 <= {NARROWBAND_MAX}, got {bt0:.3g}")
            ratio = self.integration_time * self.detector_bandwidth
        else:
            if bt0 < BROADBAND_MIN:
                raise ParameterError(f"{self.source_kind} needs Omega_B*T0 >= {BROADBAND_MIN}, got {bt0:.3g}")
            ratio = self.integration_time / self.coherence_time
        if ratio < INTEGRATION_RATIO_MIN:
            raise ParameterError(f"integration time too short (ratio {ratio:.3g} < {INTEGRATION_RATIO_MIN})")

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ParameterError(f"unknown scenario keys: {unknown}")
        missing = sorted(n for n in names - set(data) if n != "source_kind")
        if missing:
            raise ParameterError(f"missing scenario keys: {missing}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DerivedGeometry:
    wavenumber: float
    rho_l: float
    a_l: float
    rho_r: float
    rho_s: float
    rho_t: float
    sigma2_r: float
    sigma2_s: float
    sigma2_t: float
    alpha: float
    alpha_tilde: float
    beta: float
    brightness: float
    brightness_omega: float

    @property
    def sigma2_total(self) -> float:
        return self.sigma2_r + self.sigma2_s + self.sigma2_t


def _check_nonneg(**kw):
    for name, v in kw.items():
        if not v >= 0:
            raise ParameterError(f"{name} must be >= 0, got {v!r}")


def turbulence_coherence_length(k: float, cn2: float, length: float) -> float:
    """Square-law coherence length (1.09 k^2 Cn2 L)^(-3/5); inf when Cn2 = 0."""
    _check_nonneg(k=k, cn2=cn2, length=length)
    if cn2 == 0:
        return NO_TURBULENCE
    if k == 0 or length == 0:
        raise ParameterError("k and L must be > 0 on a turbulent path")
    return (1.09 * k * k * cn2 * length) ** (-0.6)


def rytov_logamp_variance(k: float, cn2: float, length: float) -> float:
    """Weak-turbulence logamplitude variance 0.124 Cn2 k^(7/6) L^(11/6)."""
    _check_nonneg(k=k, cn2=cn2, length=length)
    return 0.124 * cn2 * k ** (7.0 / 6.0) * length ** (11.0 / 6.0)


def cn2_for_coherence_length(k: float, rho: float, length: float) -> float:
    """Inverse of turbulence_coherence_length."""
    if math.isinf(rho):
        return 0.0
    return rho ** (-5.0 / 3.0) / (1.09 * k * k * length)


def _inv_sq(rho: float) -> float:
    return 0.0 if math.isinf(rho) else rho ** -2


def derive_geometry(sc: Scenario) -> DerivedGeometry:
    k = 2 * math.pi / sc.wavelength
    L = sc.path_length
    a0, r0 = sc.source_radius, sc.coherence_length
    rho = [turbulence_coherence_length(k, c, L)
           for c in (sc.cn2_reference, sc.cn2_signal, sc.cn2_target)]
    sig = [rytov_logamp_variance(k, c, L)
           for c in (sc.cn2_reference, sc.cn2_signal, sc.cn2_target)]
    inv_r, inv_s = _inv_sq(rho[0]), _inv_sq(rho[1])
    brightness = sc.photon_flux * sc.coherence_time * r0 ** 2 / a0 ** 2
    return DerivedGeometry(
        wavenumber=k,
        rho_l=2 * L / (k * a0),
        a_l=2 * L / (k * r0),
        rho_r=rho[0], rho_s=rho[1], rho_t=rho[2],
        sigma2_r=sig[0], sigma2_s=sig[1], sigma2_t=sig[2],
        alpha=1 + 0.5 * a0 ** 2 * (inv_s + inv_r),
        alpha_tilde=1 + 0.5 * a0 ** 2 * inv_s,
        beta=sc.bucket_area / (math.pi * a0 ** 2),
        brightness=brightness,
        # photons per source spatial mode per detector temporal mode
        brightness_omega=brightness / (sc.detector_bandwidth * sc.coherence_time),
    )


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    margin: float
    severity: str = "error"   # "error" checks gate, "warning" checks inform
    note: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate_far_field(sc: Scenario) -> list[Check]:
    """Far-field and weak-turbulence checks; never raises."""
    k = 2 * math.pi / sc.wavelength
    L = sc.path_length
    a0 = sc.source_radius
    thermal = k * a0 * sc.coherence_length / (2 * L)
    spdc = k * a0 ** 2 / (2 * L)
    relevant = "spdc" if sc.source_kind == "spdc" else "thermal"
    checks = []
    for name, v, kind in (("far_field_thermal", thermal, "thermal"),
                          ("far_field_spdc", spdc, "spdc")):
        checks.append(Check(name, v, FAR_FIELD_LIMIT, v <= FAR_FIELD_LIMIT,
                            FAR_FIELD_LIMIT - v,
                            severity="error" if kind == relevant else "info"))
    for path, cn2 in (("R", sc.cn2_reference), ("S", sc.cn2_signal), ("T", sc.cn2_target)):
        rho = turbulence_coherence_length(k, cn2, L)
        s2 = rytov_logamp_variance(k, cn2, L)
        checks.append(Check(f"coherence_vs_source_{path}", rho / a0, 1.0, rho >= a0,
                            rho / a0 - 1.0, severity="warning",
                            note="rho_m < a0 exceeds the weak-to-medium regime"))
        checks.append(Check(f"rytov_variance_{path}", s2, RYTOV_WARN, s2 <= RYTOV_WARN,
                            RYTOV_WARN - s2, severity="warning",
                            note="logamplitude variance beyond weak turbulence"))
    return checks


def far_field_ok(checks: list[Check]) -> bool:
    return all(c.passed for c in checks if c.severity == "error")


def paper_preset(source_kind: str = "pseudothermal", brightness_omega: float = 1.0,
                 detector_bandwidth: float = 1e9, omega_b_ti: float = 1e6,
                 cn2: float = 1e-14, beta: float = 1.0) -> Scenario:
    """Long-range operating point used for the SNR-vs-integration-time curves.

    Only products with Omega_B enter the model, so detector_bandwidth is a
    free scale. Source brightness is given per spatial and detector temporal
    mode; T0 is 10^3/Omega_B for thermal-like sources and 10^-3/Omega_B for spdc.
    """
    lam, a0, r0, L = 1.5e-6, 0.03, 0.15e-3 / math.pi, 1000.0
    t0 = (1e-3 if source_kind == "spdc" else 1e3) / detector_bandwidth
    # brightness_omega = P T0 r0^2 / (a0^2 Omega_B T0) = P r0^2 / (a0^2 Omega_B)
    flux = brightness_omega * a0 ** 2 * detector_bandwidth / r0 ** 2
    k = 2 * math.pi / lam
    rho_l = 2 * L / (k * a0)
    return Scenario(
        wavelength=lam, source_radius=a0, coherence_length=r0, coherence_time=t0,
        photon_flux=flux, path_length=L,
        cn2_reference=cn2, cn2_signal=cn2, cn2_target=cn2,
        quantum_efficiency=0.9, detector_bandwidth=detector_bandwidth,
        notch_bandwidth=1e-3 * detector_bandwidth,
        pixel_area=0.1 * rho_l ** 2, bucket_area=beta * math.pi * a0 ** 2,
        integration_time=omega_b_ti / detector_bandwidth, source_kind=source_kind,
    )


# target summary used with the preset: A_T = A'_T = 50 m^2, T(rho_p) = 1
PRESET_TARGET_AREA = 50.0
