"""Experiment configs, analytic sweeps, Monte Carlo experiments and run reports."""
from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from . import analytic as an
from . import fieldgen as fg
from . import io
from .atmosphere import sample_screen
from .fieldgen import ComplexGrid, GridSpec
from .optics import (bar_target, disc_target, fraunhofer_propagate, point_target, sample_target,
                     two_point_target)
from .pipeline import SimulationSetup, images, run_trials
from .scenario import (PRESET_TARGET_AREA, ParameterError, Scenario, cn2_for_coherence_length,
                       derive_geometry, paper_preset, validate_far_field)
from .sensing import (EstimationError, estimate_snr, measure_contrast, measure_psf,
                      stack_images)

KINDS = ("analytic-sweep", "simulate-image", "validate-stats", "psf", "contrast", "snr-curve")
SWEEP_VARIABLES = ("omega_b_ti", "beta", "brightness_omega", "cn2")
MAX_GRID = 256
DEFAULT_BUDGET = 10 ** 4 * 200      # frames x trials
SOURCE_LABELS = {"pseudothermal": "C", "spdc": "Q", "computational": "comp"}


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    """One experiment run.

    ``scenario`` may be omitted for Monte Carlo kinds, in which case a
    desk-scale scenario is built from ``options`` (see desk_scenario).
    ``target`` is a dict with a ``shape`` of point, disc, two-point, bars or
    pgm; lengths are in units of rho_L.
    """

    kind: str
    scenario: Scenario | None = None
    n: int = 256
    source_pitch: float | None = None
    target: dict = field(default_factory=lambda: {"shape": "point"})
    frames: int = 2000
    trials: int = 1
    seed: int = 0
    out: str | None = None
    window: int | None = None
    blocks: int = 8
    workers: int = 1
    single: bool = False
    budget: int = DEFAULT_BUDGET
    sweep: dict | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"experiment kind must be one of {KINDS}")
        if isinstance(self.scenario, dict):
            self.scenario = Scenario.from_dict(self.scenario)
        if self.frames < 2 or self.trials < 1:
            raise ParameterError("need frames >= 2 and trials >= 1")
        if self.frames * self.trials > self.budget:
            raise ParameterError(f"frames x trials = {self.frames * self.trials} exceeds the "
                                 f"budget {self.budget}")
        if self.n > MAX_GRID:
            raise ParameterError(f"grid side {self.n} exceeds {MAX_GRID}")
        if self.target.get("shape") == "pgm":
            path = self.target.get("path")
            if not path or not Path(path).is_file():
                raise ParameterError(f"target image {path!r} not found")
        if self.sweep is not None and self.sweep.get("variable") not in SWEEP_VARIABLES:
            raise ParameterError(f"sweep variable must be one of {SWEEP_VARIABLES}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scenario"] = None if self.scenario is None else self.scenario.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def output_dir(self) -> Path | None:
        if self.out is None:
            return None
        p = Path(self.out)
        p.mkdir(parents=True, exist_ok=True)
        if not os.access(p, os.W_OK):
            raise ParameterError(f"output directory {p} is not writable")
        return p


# ---------------------------------------------------------------- report

@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    expected: float | None
    tolerance: float | None
    passed: bool
    note: str = ""


def rel_check(name, value, expected, tol, note="") -> CheckResult:
    ok = bool(np.isfinite(value)) and abs(value / expected - 1) <= tol
    return CheckResult(name, float(value), float(expected), tol, ok, note)


def range_check(name, value, lo, hi, note="") -> CheckResult:
    ok = bool(lo <= value <= hi)
    return CheckResult(name, float(value), 0.5 * (lo + hi), 0.5 * (hi - lo), ok, note)


def bool_check(name, ok, value=float("nan"), note="") -> CheckResult:
    return CheckResult(name, float(value), None, None, bool(ok), note)


def se_check(name, value, expected, se, k=5.0, note="") -> CheckResult:
    ok = bool(abs(value - expected) <= k * se)
    return CheckResult(name, float(value), float(expected), float(k * se), ok, note)


@dataclass
class RunReport:
    config: dict
    geometry: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    schema: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def add(self, check: CheckResult) -> CheckResult:
        if any(c.name == check.name for c in self.checks):
            raise ValueError(f"duplicate check {check.name}")
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["passed"] = self.passed
        return d

    def write(self, directory) -> Path:
        path = io.write_json(Path(directory) / "report.json", self.to_dict())
        self.artifacts.append(str(path))
        return path

    def summary(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: value={c.value:.6g}"
                 + ("" if c.expected is None else f" expected={c.expected:.6g}")
                 + ("" if c.tolerance is None else f" tol={c.tolerance:.3g}")
                 for c in self.checks]
        return "\n".join(lines)


def _geometry_dict(sc: Scenario) -> dict:
    g = derive_geometry(sc)
    d = dataclasses.asdict(g)
    return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}


# ---------------------------------------------------------------- analytic sweeps

SWEEP_SCHEMA = {
    "variable": "name of the swept parameter",
    "value": "swept value (Omega_B T_I, beta, I_Omega or Cn2 in m^-2/3)",
    "{src}_total": "pixel SNR for source {src} (C pseudothermal, Q spdc, comp computational)",
    "{src}_source": "scaled source-fluctuation noise term",
    "{src}_path": "scaled static speckle/turbulence noise term",
    "{src}_detect": "scaled detector shot-noise term",
    "{src}_mix": "scaled beat-noise term",
    "{src}_sat": "saturation asymptote",
    "{src}_high": "high-brightness asymptote",
    "{src}_low": "low-brightness asymptote",
    "warnings": "validity warnings raised at this point, ';'-separated",
}


def default_sweep(variable: str) -> np.ndarray:
    if variable == "omega_b_ti":
        return np.logspace(2, 9, 71)
    if variable == "beta":
        return np.logspace(-1, 2, 31)
    if variable == "brightness_omega":
        return np.logspace(-4, 6, 41)
    return np.concatenate([[0.0], np.logspace(-17, -13, 17)])


def sweep_rows(variable: str, values, brightness_omega: float = 1.0, beta: float = 1.0,
               cn2: float = 1e-14, omega_b_ti: float = 1e6) -> list[dict]:
    """Analytic SNR for the three sources at every sweep value."""
    base = {"brightness_omega": brightness_omega, "beta": beta, "cn2": cn2,
            "omega_b_ti": omega_b_ti}
    target = an.TargetSummary(PRESET_TARGET_AREA, PRESET_TARGET_AREA)
    rows = []
    for v in values:
        row = {"variable": variable, "value": float(v)}
        warns = []
        for kind, label in SOURCE_LABELS.items():
            params = dict(base)
            ti = None
            if variable == "omega_b_ti":
                params["omega_b_ti"] = 1e6   # scenario stays valid; T_I is overridden below
                sc = paper_preset(kind, **params)
                ti = float(v) / sc.detector_bandwidth
            else:
                params[variable] = float(v)
                sc = paper_preset(kind, **params)
            b = an.snr(derive_geometry(sc), target, sc, integration_time=ti)
            row.update(b.as_row(label))
            warns += [f"{label}: {w}" for w in b.warnings]
        row["warnings"] = warns
        rows.append(row)
    return rows


def sweep_columns() -> list[str]:
    cols = ["variable", "value"]
    for label in SOURCE_LABELS.values():
        cols += [f"{label}_{k}" for k in ("total", "source", "path", "detect", "mix",
                                          "sat", "high", "low")]
    return cols + ["warnings"]


def first_reaching(values, snr_values, level) -> float:
    """Smallest sweep value at which the curve reaches ``level`` (inf if never)."""
    hit = np.flatnonzero(np.asarray(snr_values) >= level)
    return float(values[hit[0]]) if hit.size else math.inf


def ordering_holds(rows) -> bool:
    return all(r["comp_total"] >= r["C_total"] >= r["Q_total"] for r in rows)


def run_analytic_sweep(config: ExperimentConfig) -> RunReport:
    t_start = time.perf_counter()
    opts = config.options
    sweep = config.sweep or {"variable": "omega_b_ti"}
    var = sweep["variable"]
    if "values" in sweep:
        values = np.asarray(sweep["values"], dtype=float)
    elif "start" in sweep:
        values = np.logspace(math.log10(sweep["start"]), math.log10(sweep["stop"]),
                             int(sweep.get("num", 50)))
    else:
        values = default_sweep(var)
    if values.size == 0 or np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ParameterError("invalid sweep values")
    params = {k: float(opts[k]) for k in ("brightness_omega", "beta", "cn2", "omega_b_ti")
              if k in opts}
    rows = sweep_rows(var, values, **params)
    report = RunReport(config.to_dict(), _geometry_dict(paper_preset("pseudothermal", **{
        k: v for k, v in params.items() if k != "omega_b_ti"})))
    report.schema = {"sweep.csv": SWEEP_SCHEMA}
    bo = params.get("brightness_omega", 1.0)
    if var == "omega_b_ti":
        if bo <= 1.0:
            report.add(bool_check("ordering_comp_ge_c_ge_q", ordering_holds(rows),
                                  note="pointwise over the sweep"))
        if bo >= 1e3:
            reach = {lab: first_reaching(values, [r[f"{lab}_total"] for r in rows],
                                         0.9 * rows[-1][f"{lab}_sat"])
                     for lab in SOURCE_LABELS.values()}
            report.results["reach_0.9_sat"] = reach
            report.add(bool_check("spdc_saturates_first",
                                  reach["Q"] < reach["C"] and reach["Q"] < reach["comp"],
                                  value=reach["Q"]))
    if params.get("cn2", 1e-14) == 0 and params.get("beta", 1.0) == 1.0 and var != "cn2":
        report.add(rel_check("saturation_snr_beta1", rows[-1]["C_sat"], 3.26, 0.01))
    report.results["rows"] = len(rows)
    report.warnings = sorted({w for r in rows for w in r["warnings"]})
    for kind, label in SOURCE_LABELS.items():
        sc = paper_preset(kind, **{k: v for k, v in params.items() if k != "omega_b_ti"})
        report.warnings += [f"{label}: {c.name} = {c.value:.3g} > {c.threshold:g}"
                            for c in validate_far_field(sc)
                            if c.severity == "error" and not c.passed]
    out = config.output_dir()
    if out is not None:
        report.artifacts.append(str(io.write_csv(out / "sweep.csv", rows, sweep_columns())))
    report.timings["total_s"] = time.perf_counter() - t_start
    report.results["table"] = rows if out is None else None
    return report


# ---------------------------------------------------------------- Monte Carlo setup

def desk_scenario(q: float = 7.0, beta: float = 1.0, frames: int = 1000,
                  rho_s_over_a0: float = math.inf, rho_r_over_a0: float | None = None,
                  cn2_target: float = 0.0, source_kind: str = "pseudothermal",
                  wavelength: float = 1.5e-6, source_radius: float = 0.01,
                  path_length: float = 1000.0, detector_bandwidth: float = 1e9,
                  omega_b_t0: float = 1e3) -> Scenario:
    """Short-range scenario sized for desk-scale Monte Carlo.

    ``q`` is a0/rho0, which is also a_L/rho_L. Turbulence strengths are
    set through the resulting coherence lengths in units of a0. Photon
    flux and pixel area are placeholders until calibrate_counts is applied.
    """
    k = 2 * math.pi / wavelength
    a0 = source_radius
    rr = rho_s_over_a0 if rho_r_over_a0 is None else rho_r_over_a0
    t0 = omega_b_t0 / detector_bandwidth
    return Scenario(
        wavelength=wavelength, source_radius=a0, coherence_length=a0 / q, coherence_time=t0,
        photon_flux=1.0, path_length=path_length,
        cn2_reference=cn2_for_coherence_length(k, rr * a0, path_length),
        cn2_signal=cn2_for_coherence_length(k, rho_s_over_a0 * a0, path_length),
        cn2_target=cn2_target, quantum_efficiency=0.9, detector_bandwidth=detector_bandwidth,
        notch_bandwidth=1.0, pixel_area=1e-4, bucket_area=beta * math.pi * a0 ** 2,
        integration_time=frames * t0, source_kind=source_kind)


def calibrate_counts(sc: Scenario, t_map: np.ndarray, target_spec: GridSpec,
                     bucket_counts: float, pixel_counts: float) -> Scenario:
    """Choose photon flux and CCD pixel area for given mean counts per frame.

    Means follow the Gaussian on-target intensity 2P/(pi a_L^2) e^(-2r^2/a_L^2)
    and quasi-Lambertian collection A_b/L^2 of the reflected power.
    """
    g = derive_geometry(sc)
    eta, t0, L = sc.quantum_efficiency, sc.coherence_time, sc.path_length
    peak = 2.0 / (math.pi * g.a_l ** 2)
    lit = float((t_map * np.exp(-2 * target_spec.radius2() / g.a_l ** 2)).sum()
                * target_spec.pitch ** 2)
    if not lit > 0:
        raise ParameterError("target is not illuminated")
    flux = bucket_counts / (eta * t0 * (sc.bucket_area / L ** 2) * peak * lit)
    area = pixel_counts / (eta * t0 * peak * flux)
    return sc.replace(photon_flux=flux, pixel_area=area)


def auto_pitch(sc: Scenario, n: int, coherent: bool = True) -> float:
    dx = sc.coherence_length / 3 if coherent else sc.source_radius / 8
    return max(dx, 6 * sc.source_radius / n)


def build_target(desc: dict, spec: GridSpec, rho_l: float) -> np.ndarray:
    shape = desc.get("shape", "point")
    if shape == "point":
        return point_target(spec)
    if shape == "disc":
        return disc_target(spec, float(desc.get("radius", 3.0)) * rho_l)
    if shape == "two-point":
        return two_point_target(spec, float(desc.get("separation", 4.0)) * rho_l)
    if shape == "bars":
        return bar_target(spec, float(desc.get("period", 4.0)) * rho_l, int(desc.get("bars", 3)))
    if shape == "pgm":
        t = io.read_pgm(desc["path"])
        if t.shape != (spec.n, spec.n):
            raise ParameterError(f"target image is {t.shape}, grid is {(spec.n, spec.n)}")
        return t
    raise ParameterError(f"unknown target shape {shape!r}")


@dataclass
class PreparedRun:
    setup: SimulationSetup
    geometry: object
    t_map: np.ndarray


def prepare(config: ExperimentConfig) -> PreparedRun:
    """Scenario, grid, target and count calibration for a Monte Carlo config."""
    opts = config.options
    sc = config.scenario
    if sc is None:
        keys = ("q", "beta", "rho_s_over_a0", "rho_r_over_a0", "cn2_target", "source_kind")
        sc = desk_scenario(frames=config.frames, **{k: opts[k] for k in keys if k in opts})
    if sc.source_kind == "spdc":
        raise ParameterError("spdc light cannot be simulated classically; use the analytic model")
    computational = sc.source_kind == "computational"
    pitch = config.source_pitch or auto_pitch(sc, config.n, not computational)
    spec = GridSpec(config.n, pitch).far_field(sc.wavelength, sc.path_length, "target")
    g = derive_geometry(sc)
    t_map = build_target(config.target, spec, g.rho_l)
    counts = opts.get("counts", (1e4, 1e4))
    if counts is not None:
        sc = calibrate_counts(sc, t_map, spec, float(counts[0]), float(counts[1]))
    sc = sc.replace(integration_time=config.frames * sc.coherence_time)
    setup = SimulationSetup(sc, config.n, pitch, t_map, config.frames, seed=config.seed,
                            ccd_window=config.window, blocks=config.blocks,
                            macropixel=opts.get("macropixel"),
                            fixed_screens=bool(opts.get("fixed_screens", False)),
                            single=config.single)
    return PreparedRun(setup, derive_geometry(sc), t_map)


def _mc_report(config: ExperimentConfig, run: PreparedRun) -> RunReport:
    report = RunReport(config.to_dict(), _geometry_dict(run.setup.scenario))
    report.results["scenario"] = run.setup.scenario.to_dict()
    report.warnings = [f"{c.name}: {c.value:.3g}" for c in validate_far_field(run.setup.scenario)
                       if not c.passed and c.severity != "info"]
    return report


def _simulate(config: ExperimentConfig, run: PreparedRun, report: RunReport):
    t0 = time.perf_counter()
    sums = run_trials(run.setup, range(config.trials), config.workers)
    report.timings["simulation_s"] = time.perf_counter() - t0
    return sums


def _save_image(out: Path | None, name: str, im, report: RunReport, **meta):
    if out is None:
        return
    report.artifacts.append(str(io.write_pgm(out / f"{name}.pgm", im.values)))
    raw, side = io.write_raw(out / f"{name}.f64", im.values, pitch=im.pitch, origin=im.origin,
                             n_frames=im.n_frames, coupling=im.coupling, **meta)
    report.artifacts += [str(raw), str(side)]


def region_mask(run: PreparedRun, dilate: float) -> np.ndarray:
    """Target support inside the CCD window, grown by ``dilate`` rho_L."""
    sl = run.setup.window_slice()
    t = run.t_map[sl, sl] > 0
    pitch = run.setup.target_spec.pitch
    it = int(math.ceil(dilate * run.geometry.rho_l / pitch))
    return ndimage.binary_dilation(t, iterations=it) if it > 0 else t


def window_radius(run: PreparedRun) -> np.ndarray:
    w = run.setup.window
    x = (np.arange(w) - w // 2) * run.setup.target_spec.pitch
    return np.hypot(x[None, :], x[:, None])


# ---------------------------------------------------------------- experiments

def run_simulation(config: ExperimentConfig) -> RunReport:
    """Simulate dc and ac images, then compare with the analytic predictions."""
    run = prepare(config)
    report = _mc_report(config, run)
    sums = _simulate(config, run, report)
    ac = stack_images(images(run.setup, sums, "ac"))
    dc = stack_images(images(run.setup, sums, "dc"))
    out = config.output_dir()
    meta = {"seed": config.seed, "trials": config.trials}
    _save_image(out, "ac", ac, report, **meta)
    _save_image(out, "dc", dc, report, **meta)
    g = run.geometry
    kind = run.setup.scenario.source_kind
    report.results["predicted_resolution"] = an.predicted_resolution(g, kind)
    ts = an.TargetSummary.from_map(run.t_map, run.setup.target_spec.pitch)
    report.results["predicted_contrast"] = an.predicted_contrast(
        g, ts, kind, run.setup.scenario).value
    report.results["measured_contrast"] = measure_contrast(
        dc, region_mask(run, float(config.options.get("dilate", 3.0)))).value
    if config.target.get("shape") == "two-point":
        vp = valley_to_peak(ac, config, run)
        report.results["valley_to_peak"] = vp
        if "valley_max" in config.options:
            report.add(CheckResult("valley_to_peak_max", vp, None,
                                   float(config.options["valley_max"]),
                                   vp <= float(config.options["valley_max"]), "peaks resolved"))
        if "valley_min" in config.options:
            report.add(CheckResult("valley_to_peak_min", vp, None,
                                   float(config.options["valley_min"]),
                                   vp >= float(config.options["valley_min"]), "peaks merged"))
    if config.target.get("shape") == "point":
        fit = measure_psf(ac)
        report.results["psf_radius"] = fit.radius
    if config.trials >= 2:
        try:
            est = estimate_snr([im for im in images(run.setup, sums, "ac")],
                               pixels=window_radius(run) <= g.rho_l, min_trials=2)
            report.results["snr"] = dataclasses.asdict(est)
        except EstimationError as exc:
            report.warnings.append(str(exc))
    if out is not None:
        report.write(out)
    return report


def valley_to_peak(ac, config: ExperimentConfig, run: PreparedRun) -> float:
    """Ratio of the midpoint value to the mean of the two point-image peaks."""
    sep = float(config.target.get("separation", 4.0)) * run.geometry.rho_l
    x, y = ac.coords()
    iy = int(np.argmin(np.abs(y)))
    row = ac.values[iy]
    h = 0.5 * sep
    peaks = [row[int(np.argmin(np.abs(x - s)))] for s in (-h, h)]
    return float(row[int(np.argmin(np.abs(x)))] / np.mean(peaks))


@dataclass(frozen=True)
class PsfResult:
    radius: float
    predicted: float
    rho_l: float
    fit_residual: float
    seconds: float


def psf_experiment(config: ExperimentConfig) -> tuple[PsfResult, RunReport]:
    config = config.replace(target={"shape": "point"})
    run = prepare(config)
    report = _mc_report(config, run)
    sums = _simulate(config, run, report)
    ac = stack_images(images(run.setup, sums, "ac"))
    fit = measure_psf(ac)
    g = run.geometry
    pred = an.predicted_resolution(g, run.setup.scenario.source_kind)
    res = PsfResult(fit.radius, pred, g.rho_l, fit.residual, report.timings["simulation_s"])
    report.results["psf"] = dataclasses.asdict(res)
    tol = float(config.options.get("tolerance", 0.10 if g.alpha == 1 else 0.15))
    report.add(rel_check("psf_radius", fit.radius, pred, tol,
                         note="e^-1 radius of the point-target ac image"))
    out = config.output_dir()
    _save_image(out, "psf_ac", ac, report, seed=config.seed)
    if out is not None:
        report.write(out)
    return res, report


@dataclass(frozen=True)
class ContrastResult:
    value: float
    stderr: float
    predicted: float
    seconds: float


def contrast_experiment(config: ExperimentConfig) -> tuple[ContrastResult, RunReport]:
    if config.target.get("shape") != "disc":
        config = config.replace(target={"shape": "disc", "radius": 2.5})
    run = prepare(config)
    report = _mc_report(config, run)
    sums = _simulate(config, run, report)
    dc = stack_images(images(run.setup, sums, "dc"))
    est = measure_contrast(dc, region_mask(run, float(config.options.get("dilate", 3.0))))
    area = float(run.t_map.sum()) * run.setup.target_spec.pitch ** 2
    pred = math.pi * run.geometry.rho_l ** 2 / area
    res = ContrastResult(est.value, est.stderr, pred, report.timings["simulation_s"])
    report.results["contrast"] = dataclasses.asdict(res)
    report.add(rel_check("dc_contrast", est.value, pred,
                         float(config.options.get("tolerance", 0.20))))
    out = config.output_dir()
    _save_image(out, "contrast_dc", dc, report, seed=config.seed)
    if out is not None:
        report.write(out)
    return res, report


@dataclass(frozen=True)
class SnrCurve:
    frames: tuple
    snr: tuple
    ci_low: tuple
    ci_high: tuple
    slope: float
    saturation: float       # analytic SNR_sat for the simulated scenario
    seconds: float


def snr_curve_experiment(config: ExperimentConfig) -> tuple[SnrCurve, RunReport]:
    """Trial-ensemble SNR of the ac image versus frame count.

    Frame counts are prefixes of each trial (the first u of ``blocks``
    equal frame blocks). Pixels within ``pool_radius`` rho_L of the axis are
    pooled; the slope is a log-log fit over all prefixes.
    """
    opts = config.options
    if config.target.get("shape") != "disc":
        config = config.replace(target={"shape": "disc", "radius": 4.0})
    run = prepare(config)
    report = _mc_report(config, run)
    sums = _simulate(config, run, report)
    g = run.geometry
    sel = window_radius(run) <= float(opts.get("pool_radius", 2.0)) * g.rho_l
    prefixes = [int(u) for u in opts.get("prefixes", [config.blocks])]
    rows = []
    for u in prefixes:
        vals = np.stack([s.image("ac", upto=u).values[sel] for s in sums])
        est = estimate_snr(vals, min_trials=int(opts.get("min_trials", 30)), seed=config.seed)
        nf = int(sums[0].n[:u].sum())
        rows.append((nf, est))
    nfs = np.array([r[0] for r in rows], float)
    vals = np.array([r[1].value for r in rows])
    slope = float(np.polyfit(np.log(nfs), np.log(vals), 1)[0]) if len(rows) > 1 else math.nan
    sc = run.setup.scenario
    ts = an.TargetSummary.from_map(run.t_map, run.setup.target_spec.pitch)
    sat = an.snr_asymptotes(g, ts, sc).sat
    curve = SnrCurve(tuple(int(x) for x in nfs), tuple(float(v) for v in vals),
                     tuple(r[1].ci_low for r in rows),
                     tuple(r[1].ci_high for r in rows), slope, sat,
                     report.timings["simulation_s"])
    report.results["snr_curve"] = dataclasses.asdict(curve)
    if opts.get("check_saturation", True):
        report.add(rel_check("snr_saturation", vals[-1], sat,
                             float(opts.get("saturation_tolerance", 0.25))))
    if len(rows) > 1 and opts.get("check_slope", True):
        report.add(range_check("snr_slope", slope, 0.85, 1.15))
    out = config.output_dir()
    if out is not None:
        report.artifacts.append(str(io.write_csv(
            out / "snr_curve.csv",
            [{"frames": f, "snr": s, "ci_low": lo, "ci_high": hi}
             for f, s, lo, hi in zip(curve.frames, curve.snr, curve.ci_low, curve.ci_high)])))
        report.schema = {"snr_curve.csv": {"frames": "frames per trial",
                                           "snr": "pooled trial-ensemble SNR",
                                           "ci_low": "bootstrap 2.5% quantile",
                                           "ci_high": "bootstrap 97.5% quantile"}}
        report.write(out)
    return curve, report


# ---------------------------------------------------------------- validation suites

@dataclass(frozen=True)
class StatCheck:
    name: str
    max_z: float            # largest |estimate - truth| / standard error
    passed: bool
    seconds: float


def source_statistics(frames: int = 10_000, n: int = 64, pairs: int = 20, seed: int = 0,
                      k: float = 5.0, batch: int = 500) -> StatCheck:
    """Sample field autocovariance versus the Gaussian-Schell form at probe pairs."""
    t_start = time.perf_counter()
    q = 3.0
    a0 = 0.01
    r0 = a0 / q
    sc = desk_scenario(q=q, source_radius=a0, frames=frames).replace(photon_flux=1e12)
    spec = GridSpec(n, r0 / 3)
    rng = np.random.default_rng(seed)
    c = n // 2
    span = int(round(a0 / spec.pitch))
    p1 = rng.integers(c - span, c + span + 1, size=(pairs, 2))
    p2 = p1 + rng.integers(-6, 7, size=(pairs, 2))     # up to ~2 rho0 apart
    x = spec.axis()
    amp2 = 2 * sc.photon_flux / (math.pi * a0 ** 2)

    def pos(p):
        return x[p[:, 1]], x[p[:, 0]]

    (x1, y1), (x2, y2) = pos(p1), pos(p2)
    truth = (amp2 * np.exp(-(x1 ** 2 + y1 ** 2 + x2 ** 2 + y2 ** 2) / a0 ** 2)
             * np.exp(-((x1 - x2) ** 2 + (y1 - y2) ** 2) / (2 * r0 ** 2)))
    prods = np.empty((frames, pairs), complex)
    for start in range(0, frames, batch):
        seeds = [fg.stream_seed(seed, 0, fg.SOURCE, f)
                 for f in range(start, min(start + batch, frames))]
        e = fg.pseudothermal_frames(spec, sc, seeds).field
        prods[start:start + len(seeds)] = (np.conj(e[:, p1[:, 0], p1[:, 1]])
                                           * e[:, p2[:, 0], p2[:, 1]])
    mean = prods.mean(axis=0)
    z = []
    for part in (np.real, np.imag):
        se = part(prods).std(axis=0, ddof=1) / math.sqrt(frames)
        z.append(np.abs(part(mean) - part(truth)) / se)
    zmax = float(np.max(z))
    return StatCheck("source_autocovariance", zmax, zmax <= k, time.perf_counter() - t_start)


def screen_statistics(screens: int = 10_000, n: int = 64, seed: int = 0, k: float = 5.0,
                      rho_px: float = 6.0, sigma2: float = 0.1,
                      logamp_px: float = 12.0) -> tuple[StatCheck, StatCheck]:
    """Screen mutual coherence at 10 separations and the fourth logamplitude moment."""
    t_start = time.perf_counter()
    spec = GridSpec(n, 1.0)
    seps = np.unique(np.round(np.linspace(1, 2.2 * rho_px, 10)).astype(int))
    coh = np.empty((screens, seps.size), complex)
    m4 = np.empty(screens)
    for i in range(screens):
        s = sample_screen(spec, rho_px, sigma2, fg.stream_rng(seed, i, fg.SCREEN_S),
                          logamp_radius=logamp_px)
        p = s.perturbation
        for j, d in enumerate(seps):
            # horizontal and vertical pairs at separation d
            h = (p[:, d:] * np.conj(p[:, :-d])).mean()
            v = (p[d:, :] * np.conj(p[:-d, :])).mean()
            coh[i, j] = 0.5 * (h + v)
        m4[i] = np.mean(np.abs(p) ** 4)
    truth = np.exp(-0.5 * (seps / rho_px) ** 2)
    mean = coh.mean(axis=0)
    z = []
    for part in (np.real, np.imag):
        se = part(coh).std(axis=0, ddof=1) / math.sqrt(screens)
        z.append(np.abs(part(mean) - (truth if part is np.real else 0.0)) / se)
    zc = float(np.max(z))
    z4 = abs(m4.mean() - math.exp(4 * sigma2)) / (m4.std(ddof=1) / math.sqrt(screens))
    dt = time.perf_counter() - t_start
    return (StatCheck("screen_coherence", zc, zc <= k, dt),
            StatCheck("logamp_fourth_moment", float(z4), z4 <= k, dt))


def target_statistics(samples: int = 200, n: int = 64, seed: int = 0, k: float = 5.0) -> StatCheck:
    """Mean |T|^2 per pixel against lambda^2 T / dx^2."""
    t0 = time.perf_counter()
    spec = GridSpec(n, 1e-3, "target")
    t_map = np.linspace(0, 1, n * n).reshape(n, n)
    lam = 1.5e-6
    acc = np.empty((samples, 4))
    bands = np.array_split(np.arange(n * n), 4)
    for i in range(samples):
        tgt = sample_target(t_map, lam, spec.pitch, fg.stream_rng(seed, i, fg.TARGET))
        r = (np.abs(tgt.coefficients) ** 2).ravel() * spec.pitch ** 2 / lam ** 2
        acc[i] = [r[b].mean() for b in bands]
    truth = np.array([t_map.ravel()[b].mean() for b in bands])
    z = np.abs(acc.mean(0) - truth) / (acc.std(0, ddof=1) / math.sqrt(samples))
    return StatCheck("target_speckle_power", float(z.max()), bool(z.max() <= k),
                     time.perf_counter() - t0)


Propagator = Callable[..., ComplexGrid]


def parseval_error(propagate: Propagator = fraunhofer_propagate, n: int = 128,
                   seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    spec = GridSpec(n, 1e-4)
    f = ComplexGrid(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), spec)
    out = propagate(f, 1000.0, 1.5e-6)
    return abs(float(out.power()) / float(f.power()) - 1)


def identity_and_determinism(seed: int = 0) -> dict:
    """Exact dc - ac = background and thread-count independence on a small run."""
    cfg = ExperimentConfig("simulate-image", n=64, frames=64, trials=3, seed=seed,
                           window=16, blocks=4, target={"shape": "disc", "radius": 2.0},
                           options={"q": 3.0, "rho_s_over_a0": 2.0, "cn2_target": 1e-14})
    run = prepare(cfg)
    one = run_trials(run.setup, range(3), workers=1)
    two = run_trials(run.setup, range(3), workers=2)
    same = all(np.array_equal(a.s_pb, b.s_pb) and np.array_equal(a.s_p, b.s_p)
               and np.array_equal(a.s_b, b.s_b) for a, b in zip(one, two))
    ident = True
    for s in one:
        dc, ac = s.image("dc"), s.image("ac")
        ident &= bool(np.array_equal(dc.numerators["dc"] - dc.numerators["ac"],
                                     s.merged()[1] * np.int64(s.merged()[2])))
        n = s.merged()[3]
        mp, mb = s.merged()[1] / n, s.merged()[2] / n
        ident &= bool(np.allclose(dc.values - ac.values, mp * mb, rtol=1e-15, atol=0))
    return {"identity": ident, "determinism": same}


def run_validation(config: ExperimentConfig | None = None,
                   propagate: Propagator = fraunhofer_propagate) -> RunReport:
    """Statistical invariant suites; ``propagate`` is a hook for negative controls."""
    config = config or ExperimentConfig("validate-stats")
    opts = config.options
    size = int(opts.get("samples", 10_000))
    report = RunReport(config.to_dict())
    t0 = time.perf_counter()
    k = float(opts.get("k_sigma", 5.0))
    src = source_statistics(frames=size, seed=config.seed, k=k)
    coh, m4 = screen_statistics(screens=size, seed=config.seed, k=k)
    tgt = target_statistics(samples=max(size // 50, 20), seed=config.seed, k=k)
    for s in (src, coh, m4, tgt):
        report.add(CheckResult(s.name, s.max_z, 0.0, k, s.passed, "max |z| over probes"))
        report.timings[s.name + "_s"] = s.seconds
    err = parseval_error(propagate)
    report.add(CheckResult("parseval", err, 0.0, 1e-10, err <= 1e-10))
    idt = identity_and_determinism(config.seed)
    report.add(bool_check("dc_minus_ac_equals_background", idt["identity"]))
    report.add(bool_check("thread_count_determinism", idt["determinism"]))
    report.timings["total_s"] = time.perf_counter() - t0
    out = config.output_dir()
    if out is not None:
        report.write(out)
    return report


# ---------------------------------------------------------------- presets

def preset_config(kind: str, **changes) -> ExperimentConfig:
    """Desk-scale defaults for each experiment kind (the acceptance configurations)."""
    base = {
        "analytic-sweep": dict(kind="analytic-sweep", sweep={"variable": "omega_b_ti"}),
        "validate-stats": dict(kind="validate-stats"),
        "psf": dict(kind="psf", n=256, frames=2000, trials=1, seed=1, window=64,
                    options={"q": 6.8}),
        "contrast": dict(kind="contrast", n=256, frames=250, trials=300, seed=4, window=40,
                         single=True, target={"shape": "disc", "radius": 2.5},
                         options={"q": 14.0, "beta": 8.0}),
        "snr-curve": dict(kind="snr-curve", n=128, frames=3000, trials=60, seed=2, window=32,
                          single=True, target={"shape": "disc", "radius": 4.0},
                          options={"q": 7.0, "beta": 1.0, "prefixes": [8],
                                   "check_slope": False}),
        "simulate-image": dict(kind="simulate-image", n=256, frames=2000, trials=1, seed=5,
                               window=64, target={"shape": "two-point", "separation": 4.0},
                               options={"q": 8.0, "valley_max": 0.5}),
    }[kind]
    opts = dict(base.get("options", {}))
    opts.update(changes.pop("options", {}))
    base["options"] = opts
    base.update(changes)
    return ExperimentConfig(**base)


def run(config: ExperimentConfig) -> RunReport:
    """Dispatch on config.kind."""
    if config.kind == "analytic-sweep":
        return run_analytic_sweep(config)
    if config.kind == "validate-stats":
        return run_validation(config)
    if config.kind == "psf":
        return psf_experiment(config)[1]
    if config.kind == "contrast":
        return contrast_experiment(config)[1]
    if config.kind == "snr-curve":
        return snr_curve_experiment(config)[1]
    return run_simulation(config)
