"""Photocounting, frame correlation and empirical image estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .fieldgen import as_rng

INT_LIMIT = 2 ** 62


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FrameCounts:
    pixels: np.ndarray       # (..., P) counts, or computed means for a computed reference
    bucket: np.ndarray | int
    frame_time: float
    index: int | np.ndarray = 0


def poisson_counts(mean: np.ndarray, seed) -> np.ndarray:
    m = np.asarray(mean, dtype=float)
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ValueError("negative or non-finite photon mean (upstream bug)")
    return np.asarray(as_rng(seed).poisson(m), dtype=np.int64)


def detect_counts(intensity, bucket_flux, eta: float, pixel_area: float, frame_time: float,
                  pixel_seed, bucket_seed, index: int = 0) -> FrameCounts:
    """Poisson counts for CCD pixels (intensity, photons/m^2/s) and the bucket (photons/s)."""
    n_p = poisson_counts(eta * np.asarray(intensity) * pixel_area * frame_time, pixel_seed)
    n_b = poisson_counts(eta * np.asarray(bucket_flux) * frame_time, bucket_seed)
    return FrameCounts(n_p, n_b if n_b.ndim else int(n_b), frame_time, index)


def computed_reference(intensity, eta: float, pixel_area: float, frame_time: float) -> np.ndarray:
    """Noise-free reference for the computational imager (mean counts)."""
    return eta * np.asarray(intensity, dtype=float) * pixel_area * frame_time


class CorrelationSums:
    """Running sums for pixel-bucket correlation, split into frame blocks.

    Integer count streams are summed exactly in int64, so results do not
    depend on accumulation order.
    """

    def __init__(self, shape, blocks: int = 1, exact: bool = True):
        self.shape = tuple(shape)
        self.blocks = blocks
        dt = np.int64 if exact else float
        self.exact = exact
        self.s_pb = np.zeros((blocks,) + self.shape, dt)
        self.s_p = np.zeros((blocks,) + self.shape, dt)
        self.s_b = np.zeros(blocks, dt)
        self.n = np.zeros(blocks, np.int64)
        self._max_p = 0
        self._max_b = 0

    def add(self, pixels: np.ndarray, bucket, block: int = 0) -> None:
        """Add a batch of frames: pixels (B, *shape), bucket (B,)."""
        p = np.asarray(pixels)
        b = np.asarray(bucket)
        if p.shape == self.shape:
            p, b = p[None], b.reshape(1)
        if self.exact:
            if p.dtype.kind not in "iu" or b.dtype.kind not in "iu":
                raise TypeError("exact sums need integer counts")
            if p.size:
                self._max_p = max(self._max_p, int(p.max()))
                self._max_b = max(self._max_b, int(b.max()))
            total = int(self.n.sum()) + len(b)
            # the n^2-scaled numerators are bounded by n^2 * max_p * max_b
            if max(self._max_p, 1) * max(self._max_b, 1) * total * total > INT_LIMIT:
                raise OverflowError("count sums would overflow int64")
        self.s_pb[block] += np.tensordot(b, p, axes=(0, 0))
        self.s_p[block] += p.sum(axis=0)
        self.s_b[block] += b.sum()
        self.n[block] += len(b)

    def merged(self, drop: int | None = None, upto: int | None = None):
        keep = np.ones(self.blocks, bool)
        if drop is not None:
            keep[drop] = False
        if upto is not None:
            keep[upto:] = False
        return (self.s_pb[keep].sum(axis=0), self.s_p[keep].sum(axis=0),
                self.s_b[keep].sum(), int(self.n[keep].sum()))

    def image(self, coupling: str = "ac", pitch: float = 1.0, origin=(0.0, 0.0),
              drop: int | None = None, upto: int | None = None) -> "GhostImage":
        """Image from all blocks, all but ``drop``, or the first ``upto`` blocks."""
        s_pb, s_p, s_b, n = self.merged(drop, upto)
        if n < 2:
            raise EstimationError("need at least two frames")
        if self.exact:
            # numerators over n^2 are exact integers; identity dc - ac = bg holds exactly
            nn = np.int64(n)
            dc_num = nn * s_pb
            bg_num = s_p * np.int64(s_b)
            ac_num = dc_num - bg_num
            scale = float(n) * float(n)
            nums = {"dc": dc_num, "ac": ac_num}
            values = nums[coupling] / scale
            background = bg_num / scale
        else:
            mean_p, mean_b = s_p / n, s_b / n
            dc = s_pb / n
            background = mean_p * mean_b
            values = dc if coupling == "dc" else dc - background
            nums = None
        return GhostImage(values, coupling, n, background, pitch, tuple(origin), self, nums)


@dataclass(frozen=True, eq=False)
class GhostImage:
    values: np.ndarray
    coupling: str
    n_frames: int
    background: np.ndarray     # per-pixel product of mean counts
    pitch: float = 1.0
    origin: tuple = (0.0, 0.0)  # physical (x, y) of pixel [0, 0]
    sums: CorrelationSums | None = None
    numerators: dict | None = None   # exact n^2-scaled integer numerators
    trials: tuple | None = None      # (values, backgrounds) of stacked trials

    def normalized(self) -> np.ndarray:
        return self.values / self.background

    def coords(self):
        ny, nx = self.values.shape[-2:]
        x = self.origin[0] + np.arange(nx) * self.pitch
        y = self.origin[1] + np.arange(ny) * self.pitch
        return x, y


def correlate(frames, coupling: str = "ac", blocks: int = 1, pitch: float = 1.0,
              origin=(0.0, 0.0)) -> GhostImage:
    """Pixel-wise correlation of a sequence of FrameCounts."""
    frames = list(frames)
    if not frames:
        raise EstimationError("empty frame sequence")
    if coupling not in ("ac", "dc"):
        raise ValueError("coupling must be 'ac' or 'dc'")
    shape = np.shape(frames[0].pixels)
    exact = all(np.asarray(f.pixels).dtype.kind in "iu" for f in frames)
    sums = CorrelationSums(shape, blocks, exact)
    nf = len(frames)
    for k, f in enumerate(frames):
        sums.add(f.pixels, f.bucket, block=k * blocks // nf)
    return sums.image(coupling, pitch, origin)


def stack_images(images) -> GhostImage:
    """Average of independent trial images; each trial acts as one jackknife block."""
    images = list(images)
    if not images:
        raise EstimationError("no images")
    vals = np.stack([im.values for im in images])
    bg = np.stack([im.background for im in images])
    first = images[0]
    return GhostImage(vals.mean(axis=0), first.coupling, sum(im.n_frames for im in images),
                      bg.mean(axis=0), first.pitch, first.origin, trials=(vals, bg))


# ---------------------------------------------------------------- PSF

@dataclass(frozen=True)
class PsfFit:
    radius: float
    center: tuple
    amplitude: float
    offset: float
    residual: float


def measure_psf(image: GhostImage, window: float | None = None) -> PsfFit:
    """Isotropic Gaussian plus constant fitted around the brightest pixel."""
    v = np.asarray(image.values, dtype=float)
    x, y = image.coords()
    iy, ix = np.unravel_index(np.argmax(v), v.shape)
    peak, floor = v[iy, ix], np.median(v)
    # crude width from the above-half-maximum area
    half = v > floor + 0.5 * (peak - floor)
    r0 = max(math.sqrt(half.sum() / (math.pi * math.log(2))) * image.pitch, image.pitch)
    w = 4 * r0 if window is None else window
    sel_x = np.abs(x - x[ix]) <= w
    sel_y = np.abs(y - y[iy]) <= w
    sub = v[np.ix_(sel_y, sel_x)]
    xx, yy = np.meshgrid(x[sel_x], y[sel_y])
    scale = peak - floor if peak != floor else 1.0

    def model(p):
        a, cx, cy, r, c = p
        return a * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / r ** 2) + c

    def resid(p):
        return ((model(p) - sub) / scale).ravel()

    p0 = (1.0 * scale, x[ix], y[iy], r0, floor)
    try:
        res = least_squares(resid, p0, x_scale=(scale, r0, r0, r0, scale))
    except Exception as exc:   # pragma: no cover - scipy internals
        raise EstimationError(f"PSF fit failed: {exc}") from exc
    a, cx, cy, r, c = res.x
    if not res.success or a <= 0:
        raise EstimationError(f"PSF fit failed (status {res.status}, amplitude {a:.3g})")
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    return PsfFit(abs(float(r)), (float(cx), float(cy)), float(a), float(c), rms)


# ---------------------------------------------------------------- contrast

@dataclass(frozen=True)
class ContrastEstimate:
    value: float
    stderr: float


def _contrast_of(values, background, region):
    norm = values[region] / background[region]
    return float(norm.max() - norm.min())


def measure_contrast(image: GhostImage, region: np.ndarray) -> ContrastEstimate:
    """(max - min)/background over ``region`` of a dc-coupled image.

    Each pixel is divided by its own product-of-means background, which
    removes the reference beam's intensity envelope. The standard error is
    a jackknife over frame blocks (single run) or over trials (stacked).
    """
    if image.coupling != "dc":
        raise ValueError("contrast is defined for dc-coupled images")
    region = np.asarray(region, bool)
    if np.any(image.background[region] <= 0):
        raise EstimationError("non-positive background")
    value = _contrast_of(image.values, image.background, region)
    reps = []
    if image.trials is not None and len(image.trials[0]) > 1:
        vals, bg = image.trials
        k = len(vals)
        for i in range(k):
            keep = np.arange(k) != i
            reps.append(_contrast_of(vals[keep].mean(0), bg[keep].mean(0), region))
    elif image.sums is not None and image.sums.blocks > 1:
        for i in range(image.sums.blocks):
            sub = image.sums.image("dc", drop=i)
            reps.append(_contrast_of(sub.values, sub.background, region))
    if len(reps) > 1:
        reps = np.asarray(reps)
        k = len(reps)
        se = math.sqrt((k - 1) / k * np.sum((reps - reps.mean()) ** 2))
    else:
        se = math.nan
    return ContrastEstimate(value, se)


# ---------------------------------------------------------------- SNR

@dataclass(frozen=True)
class SnrEstimate:
    value: float
    ci_low: float
    ci_high: float
    trials: int


MIN_TRIALS = 30


def _pooled_snr(x: np.ndarray, debias: bool) -> float:
    k = len(x)
    mu = x.mean(axis=0)
    var = x.var(axis=0, ddof=1)
    den = var.sum()
    if not den > 0:
        raise EstimationError("zero variance across trials")
    num = (mu * mu).sum()
    if debias:
        num -= den / k   # E[mean^2] = mu^2 + var/K
    return float(num / den)


def estimate_snr(samples, pixels=None, n_boot: int = 2000, level: float = 0.95,
                 seed: int = 0, min_trials: int = MIN_TRIALS, debias: bool = True) -> SnrEstimate:
    """Squared mean over variance across independent trials.

    ``samples`` is a sequence of GhostImages or an array whose first axis
    indexes trials. With several pixels the estimate pools them as
    sum(mean^2)/sum(var). ``debias`` removes the var/K excess of the
    squared sample mean, which matters when the SNR is comparable to 1/K.
    The interval is a percentile bootstrap over trials.
    """
    if len(samples) and isinstance(samples[0], GhostImage):
        x = np.stack([im.values for im in samples])
    else:
        x = np.asarray(samples, dtype=float)
    if pixels is not None:
        x = x[(slice(None),) + tuple(pixels)] if isinstance(pixels, tuple) else x[:, pixels]
    x = x.reshape(len(x), -1)
    k = len(x)
    if k < min_trials:
        raise EstimationError(f"need at least {min_trials} trials, got {k}")
    value = _pooled_snr(x, debias)
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for i in range(n_boot):
        xb = x[rng.integers(0, k, k)]
        v = xb.var(axis=0, ddof=1).sum()
        num = (xb.mean(axis=0) ** 2).sum() - (v / k if debias else 0.0)
        boots[i] = num / v if v > 0 else np.inf
    lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
    return SnrEstimate(value, float(lo), float(hi), k)
