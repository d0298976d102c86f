"""Sampling grids, seed streams and source-frame synthesis."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .scenario import ParameterError, Scenario

PLANES = ("source", "target", "detector")

# seed-stream purposes
SOURCE, SCREEN_R, SCREEN_S, SCREEN_T, TARGET, SHOT_CCD, SHOT_BUCKET = range(7)
STREAM_NAMES = {SOURCE: "source", SCREEN_R: "screen_R", SCREEN_S: "screen_S",
                SCREEN_T: "screen_T", TARGET: "target", SHOT_CCD: "shot_ccd",
                SHOT_BUCKET: "shot_bucket"}

# Spectral components whose amplitude falls below this fraction of the peak
# are not drawn; the discarded power fraction is of order its square.
SPECTRUM_CUTOFF = 1e-4


def stream_seed(master: int, trial: int, purpose: int, frame: int = 0) -> np.random.SeedSequence:
    """Counter-based seed: any (trial, purpose, frame) is reproducible alone."""
    return np.random.SeedSequence(int(master), spawn_key=(int(trial), int(purpose), int(frame)))


def stream_rng(master: int, trial: int, purpose: int, frame: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(master, trial, purpose, frame)))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class GridSpec:
    n: int
    pitch: float
    plane: str = "source"

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ParameterError(f"grid side must be a power of two, got {self.n}")
        if not self.pitch > 0:
            raise ParameterError("grid pitch must be > 0")
        if self.plane not in PLANES:
            raise ParameterError(f"plane must be one of {PLANES}")

    @property
    def extent(self) -> float:
        return self.n * self.pitch

    def axis(self) -> np.ndarray:
        """Pixel-centre coordinates; index n//2 sits on the optical axis."""
        return (np.arange(self.n) - self.n // 2) * self.pitch

    def radius2(self) -> np.ndarray:
        x = self.axis()
        return x[None, :] ** 2 + x[:, None] ** 2

    def congruent(self, other: "GridSpec") -> bool:
        return self.n == other.n and self.pitch == other.pitch

    def far_field(self, wavelength: float, distance: float, plane: str) -> "GridSpec":
        """Grid reached by a single-transform Fresnel step."""
        return GridSpec(self.n, wavelength * distance / (self.n * self.pitch), plane)


@dataclass(frozen=True, eq=False)
class ComplexGrid:
    """Complex envelope samples in sqrt(photons/(m^2 s)); leading axes are frames."""

    field: np.ndarray
    spec: GridSpec

    def __post_init__(self):
        if self.field.shape[-2:] != (self.spec.n, self.spec.n):
            raise ParameterError("field shape does not match its grid")

    def intensity(self) -> np.ndarray:
        return self.field.real ** 2 + self.field.imag ** 2

    def power(self) -> np.ndarray:
        return self.intensity().sum(axis=(-2, -1)) * self.spec.pitch ** 2


@dataclass(frozen=True, eq=False)
class SourceFrame:
    signal: ComplexGrid
    reference: ComplexGrid | None
    index: int
    seed: object = None


def check_source_grid(spec: GridSpec, scenario: Scenario, coherence: bool = True) -> None:
    a0, r0 = scenario.source_radius, scenario.coherence_length
    if spec.extent < 6 * a0 * (1 - 1e-12):
        raise ParameterError(f"source grid extent {spec.extent:.3g} m < 6 a0")
    if coherence and spec.pitch > r0 / 3 * (1 + 1e-12):
        raise ParameterError(f"source pitch {spec.pitch:.3g} m > rho0/3")


def source_envelope(spec: GridSpec, scenario: Scenario) -> np.ndarray:
    a0 = scenario.source_radius
    amp = math.sqrt(2 * scenario.photon_flux / (math.pi * a0 ** 2))
    return amp * np.exp(-spec.radius2() / a0 ** 2)


@lru_cache(maxsize=16)
def _schell_filter(n: int, pitch: float, rho0: float):
    f = sfft.fftfreq(n, pitch)
    f2 = f[None, :] ** 2 + f[:, None] ** 2
    if math.isinf(rho0):
        g = (f2 == 0).astype(float)
    else:
        g = np.exp(-2 * math.pi ** 2 * rho0 ** 2 * f2)
    g /= g.sum()
    amp = np.sqrt(g)
    keep = amp >= SPECTRUM_CUTOFF * amp.max()
    idx = np.flatnonzero(keep.ravel())
    w = amp.ravel()[idx] * n * n / math.sqrt(2.0)
    idx.setflags(write=False)
    w.setflags(write=False)
    return idx, w


def schell_fields(spec: GridSpec, rho0: float, seeds, dtype=complex) -> np.ndarray:
    """Unit-variance circular Gaussian fields with correlation exp(-d^2/2 rho0^2).

    One field per seed, stacked along axis 0. White noise is drawn directly
    in the frequency domain (only where the spectrum is non-negligible) and
    shaped by the square root of the Gaussian power spectrum.
    """
    n = spec.n
    idx, w = _schell_filter(n, spec.pitch, float(rho0))
    spec_k = np.zeros((len(seeds), n * n), dtype=dtype)
    real = np.float32 if np.dtype(dtype) == np.complex64 else np.float64
    for b, seed in enumerate(seeds):
        z = as_rng(seed).standard_normal((2, idx.size), dtype=real)
        spec_k[b, idx] = w * (z[0] + 1j * z[1])
    return sfft.ifft2(spec_k.reshape(len(seeds), n, n), axes=(-2, -1), overwrite_x=True)


def pseudothermal_frames(spec: GridSpec, scenario: Scenario, seeds,
                         first_index: int = 0) -> ComplexGrid:
    """Batch of Gaussian-Schell frames, one per seed (shape (B, N, N))."""
    check_source_grid(spec, scenario)
    s = schell_fields(spec, scenario.coherence_length, seeds)
    s *= source_envelope(spec, scenario)
    return ComplexGrid(s, spec)


def pseudothermal_frame(spec: GridSpec, scenario: Scenario, seed, index: int = 0) -> SourceFrame:
    """One pseudothermal frame; signal and reference are the same realization."""
    if scenario.source_kind == "spdc":
        raise ParameterError("spdc light is not classically simulable")
    g = pseudothermal_frames(spec, scenario, [seed])
    grid = ComplexGrid(g.field[0], spec)
    return SourceFrame(grid, grid, index, seed)


def _macro_index(n: int, m: int) -> np.ndarray:
    # macropixel edges sit on the axis; one macropixel spanning the grid covers it all
    if m >= n:
        return np.zeros(n, dtype=int)
    return np.floor_divide(np.arange(n) - n // 2, m)


def slm_phases(spec: GridSpec, macropixel: float, seeds) -> np.ndarray:
    """Piecewise-constant uniform phase masks, one per seed."""
    m = int(round(macropixel / spec.pitch))
    if macropixel < spec.pitch * (1 - 1e-9) or m < 1:
        raise ParameterError("SLM macropixel smaller than grid pitch")
    ix = _macro_index(spec.n, m)
    ix = ix - ix.min()
    nb = int(ix.max()) + 1
    out = np.empty((len(seeds), spec.n, spec.n))
    for b, seed in enumerate(seeds):
        theta = as_rng(seed).uniform(0.0, 2 * math.pi, size=(nb, nb))
        out[b] = theta[np.ix_(ix, ix)]
    return out


def slm_frames(spec: GridSpec, scenario: Scenario, macropixel: float, seeds) -> ComplexGrid:
    check_source_grid(spec, scenario, coherence=False)
    theta = slm_phases(spec, macropixel, seeds)
    return ComplexGrid(source_envelope(spec, scenario) * np.exp(1j * theta), spec)


def slm_frame(spec: GridSpec, scenario: Scenario, macropixel: float, seed,
              index: int = 0) -> SourceFrame:
    """SLM-modulated coherent frame; no reference field is emitted."""
    g = slm_frames(spec, scenario, macropixel, [seed])
    return SourceFrame(ComplexGrid(g.field[0], spec), None, index, seed)
