"""Frame-based Monte Carlo of the source -> turbulence -> target -> detectors chain."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from . import fieldgen as fg
from .atmosphere import TurbulenceScreen, apply_screen, sample_screen
from .fieldgen import ComplexGrid, GridSpec, stream_rng
from .optics import (bucket_flux, bucket_gram, disc_mask, fraunhofer_propagate, fresnel_factors,
                     gram_flux, reflect, sample_target)
from .scenario import ParameterError, Scenario, derive_geometry
from .sensing import CorrelationSums, GhostImage, computed_reference


@dataclass(frozen=True, eq=False)
class SimulationSetup:
    """Everything a trial needs besides its index.

    The source grid has ``n`` pixels of ``source_pitch``; the target grid
    follows from the Fresnel sampling relation and the bucket reuses the
    source grid. ``t_map`` lives on the target grid. The CCD is the central
    ``ccd_window`` x ``ccd_window`` block of target-plane pixels, each of
    area ``scenario.pixel_area``.
    """

    scenario: Scenario
    n: int
    source_pitch: float
    t_map: np.ndarray
    frames: int
    seed: int = 0
    ccd_window: int | None = None
    batch: int = 32
    blocks: int = 8
    macropixel: float | None = None        # computational imager SLM pitch
    fixed_screens: bool = False            # condition on one screen realization
    logamp_radius: float | None = None     # defaults to sqrt(wavelength * L)
    gram_limit: int = 1024                 # max target support for the quadratic-form bucket
    single: bool = False                   # complex64 transforms for long Monte Carlo runs

    def __post_init__(self):
        if self.scenario.source_kind == "spdc":
            raise ParameterError("spdc light cannot be simulated classically; use the analytic model")
        if self.frames < 2:
            raise ParameterError("need at least two frames")
        if self.t_map.shape != (self.n, self.n):
            raise ParameterError("t_map must match the grid")

    @property
    def source_spec(self) -> GridSpec:
        return GridSpec(self.n, self.source_pitch, "source")

    @property
    def target_spec(self) -> GridSpec:
        sc = self.scenario
        return self.source_spec.far_field(sc.wavelength, sc.path_length, "target")

    @property
    def bucket_spec(self) -> GridSpec:
        return GridSpec(self.n, self.source_pitch, "detector")

    def gram(self) -> np.ndarray | None:
        """Cached bucket quadratic form, or None when the support is too large."""
        cached = self.__dict__.get("_gram")
        if cached is None:
            support = self.t_map > 0
            if support.sum() > self.gram_limit:
                cached = False
            else:
                sc = self.scenario
                cached = bucket_gram(self.target_spec, support, self.bucket_spec,
                                     sc.bucket_area, sc.wavelength, sc.path_length)
            self.__dict__["_gram"] = cached
        return None if cached is False else cached

    @property
    def window(self) -> int:
        return self.n if self.ccd_window is None else self.ccd_window

    def window_slice(self):
        lo = self.n // 2 - self.window // 2
        return slice(lo, lo + self.window)

    @property
    def window_origin(self) -> tuple:
        x = self.target_spec.axis()[self.window_slice()][0]
        return (float(x), float(x))


@dataclass
class TrialScreens:
    r: TurbulenceScreen
    s: TurbulenceScreen
    t: TurbulenceScreen


def trial_screens(setup: SimulationSetup, trial: int) -> TrialScreens:
    sc = setup.scenario
    geom = derive_geometry(sc)
    lr = setup.logamp_radius or math.sqrt(sc.wavelength * sc.path_length)
    key = 0 if setup.fixed_screens else trial
    src, tgt = setup.source_spec, setup.target_spec

    def make(spec, rho, s2, purpose, path):
        return sample_screen(spec, rho, s2, stream_rng(setup.seed, key, purpose),
                             logamp_radius=lr, path=path)

    # a computed reference never sees the reference path
    if sc.source_kind == "computational":
        r = TurbulenceScreen(None, src, "R", math.inf, 0.0)
    else:
        r = make(src, geom.rho_r, geom.sigma2_r, fg.SCREEN_R, "R")
    return TrialScreens(r, make(src, geom.rho_s, geom.sigma2_s, fg.SCREEN_S, "S"),
                        make(tgt, geom.rho_t, geom.sigma2_t, fg.SCREEN_T, "T"))


def _input_factor(base: np.ndarray, screen: TurbulenceScreen) -> np.ndarray:
    return base if screen.is_identity else base * screen.perturbation


def simulate_trial(setup: SimulationSetup, trial: int) -> CorrelationSums:
    """Run one integration window: fixed target and screens, fresh source frames.

    Per frame this is the composition source -> screen -> propagate -> reflect
    -> bucket, with the envelope, screen and input phase folded into one
    array per trial and the output phase applied only on the CCD window and
    the target support.
    """
    sc = setup.scenario
    lam, L = sc.wavelength, sc.path_length
    src_spec, tgt_spec = setup.source_spec, setup.target_spec
    n = setup.n
    screens = trial_screens(setup, trial)
    target = sample_target(setup.t_map, lam, tgt_spec.pitch,
                           stream_rng(setup.seed, trial, fg.TARGET))
    coeff = target.coefficients
    if not screens.t.is_identity:
        coeff = coeff * screens.t.perturbation
    disc_mask(n, setup.source_pitch, float(sc.bucket_area))   # validates the aperture
    win = setup.window_slice()
    gram = setup.gram()
    support = np.flatnonzero(setup.t_map.ravel() > 0)
    computational = sc.source_kind == "computational"
    if computational:
        fg.check_source_grid(src_spec, sc, coherence=False)
    else:
        fg.check_source_grid(src_spec, sc)

    pre, post = fresnel_factors(src_spec, tgt_spec, lam, L)
    base = fg.source_envelope(src_spec, sc) * pre
    a_sig = _input_factor(base, screens.s)
    if computational:
        a_ref = None if screens.s.is_identity else base
    elif screens.r.is_identity and screens.s.is_identity:
        a_ref = None
    else:
        a_ref = _input_factor(base, screens.r)
    if setup.single:
        a_sig = a_sig.astype(np.complex64)
        a_ref = None if a_ref is None else a_ref.astype(np.complex64)
    dtype = np.complex64 if setup.single else complex
    post_win = post[win, win]
    post_sup = post.ravel()[support]
    coeff_sup = coeff.ravel()[support] * post_sup

    sums = CorrelationSums((setup.window, setup.window), setup.blocks, exact=not computational)
    eta, t0 = sc.quantum_efficiency, sc.coherence_time
    nf = setup.frames

    for start in range(0, nf, setup.batch):
        ks = range(start, min(start + setup.batch, nf))
        nb = len(ks)
        seeds = [fg.stream_seed(setup.seed, trial, fg.SOURCE, k) for k in ks]
        if computational:
            unit = np.exp(1j * fg.slm_phases(src_spec, setup.macropixel or sc.coherence_length,
                                             seeds)).astype(dtype, copy=False)
        else:
            unit = fg.schell_fields(src_spec, sc.coherence_length, seeds, dtype)
        raw = sfft.fft2(unit * a_sig, axes=(-2, -1), overwrite_x=True)
        if a_ref is None:
            ref_win = raw[:, win, win] * post_win
        else:
            ref_win = sfft.fft2(unit * a_ref, axes=(-2, -1), overwrite_x=True)[:, win, win]
            ref_win *= post_win
        i_ref = (ref_win.real ** 2 + ref_win.imag ** 2).astype(float, copy=False)
        if gram is not None:
            v = raw.reshape(nb, -1)[:, support] * coeff_sup
            flux = gram_flux(v.astype(complex, copy=False), gram)
        else:
            back = fraunhofer_propagate(ComplexGrid(raw * post * coeff, tgt_spec), L, lam,
                                        setup.bucket_spec)
            flux = np.atleast_1d(bucket_flux(back, sc.bucket_area))
        n_b = np.array([stream_rng(setup.seed, trial, fg.SHOT_BUCKET, k).poisson(eta * f * t0)
                        for k, f in zip(ks, flux)], dtype=np.int64)
        if computational:
            n_p = computed_reference(i_ref, eta, sc.pixel_area, t0)
        else:
            m = eta * sc.pixel_area * t0 * i_ref
            n_p = np.stack([stream_rng(setup.seed, trial, fg.SHOT_CCD, k).poisson(mk)
                            for k, mk in zip(ks, m)]).astype(np.int64)
        # blocks follow frame index so splits are independent of batch size
        blk = np.array([k * setup.blocks // nf for k in ks])
        for b in np.unique(blk):
            sel = blk == b
            sums.add(n_p[sel], n_b[sel], block=int(b))
    return sums


def reference_trial(setup: SimulationSetup, trial: int, frames=range(4)):
    """Slow, unfused evaluation of (reference intensity, bucket flux) per frame.

    Uses the public module operations one frame at a time; kept as a
    cross-check of the fused loop in simulate_trial.
    """
    sc = setup.scenario
    lam, L = sc.wavelength, sc.path_length
    src_spec, tgt_spec = setup.source_spec, setup.target_spec
    screens = trial_screens(setup, trial)
    target = sample_target(setup.t_map, lam, tgt_spec.pitch,
                           stream_rng(setup.seed, trial, fg.TARGET))
    win = setup.window_slice()
    out = []
    for k in frames:
        seed = fg.stream_seed(setup.seed, trial, fg.SOURCE, k)
        if sc.source_kind == "computational":
            src = fg.slm_frame(src_spec, sc, setup.macropixel or sc.coherence_length, seed).signal
        else:
            src = fg.pseudothermal_frame(src_spec, sc, seed).signal
        sig = fraunhofer_propagate(apply_screen(src, screens.s), L, lam, tgt_spec)
        ref_screen = screens.r if sc.source_kind != "computational" else None
        ref = fraunhofer_propagate(src if ref_screen is None else apply_screen(src, ref_screen),
                                   L, lam, tgt_spec)
        back = fraunhofer_propagate(apply_screen(reflect(sig, target), screens.t), L, lam,
                                    setup.bucket_spec)
        out.append((ref.intensity()[win, win], bucket_flux(back, sc.bucket_area)))
    return out


def trial_image(setup: SimulationSetup, trial: int, coupling: str = "ac") -> GhostImage:
    sums = simulate_trial(setup, trial)
    return sums.image(coupling, setup.target_spec.pitch, setup.window_origin)


def run_trials(setup: SimulationSetup, trials, workers: int = 1) -> list[CorrelationSums]:
    """Simulate trials; output order follows ``trials`` whatever the thread count."""
    trials = list(trials)
    if workers <= 1:
        return [simulate_trial(setup, t) for t in trials]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda t: simulate_trial(setup, t), trials))


def images(setup: SimulationSetup, sums_list, coupling: str) -> list[GhostImage]:
    return [s.image(coupling, setup.target_spec.pitch, setup.window_origin) for s in sums_list]
