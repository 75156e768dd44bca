"""Iterative masked diffusion inpainting with a pluggable denoiser.

The loop starts from Gaussian noise inside the marker mask and the observed
image outside it. At every step the denoiser estimates the clean image, the
forward process re-noises that estimate to the next lower level, and the
known pixels are pasted back. The known region therefore never changes.
"""

from __future__ import annotations

import logging
import math
import shlex
import subprocess
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from tacmode import tact
from tacmode.core import DimensionError, Rect, TactileError, as_image, as_mask, check_same_size, crop
from tacmode.inpaint import inpaint_fmm, rectify
from tacmode.markers import ExtractConfig, default_offset, extract_markers, offset_mask
from tacmode.patches import merge_patches, plan_patches

log = logging.getLogger(__name__)

DEFAULT_STEPS = 50
DEFAULT_PATCH = 256


class DenoiserError(TactileError):
    def __init__(self, msg: str, step: int | None = None):
        super().__init__(msg)
        self.step = step


class NoMarkersError(TactileError, ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64).ravel()
        if b.size < 1 or not ((b > 0) & (b < 1)).all():
            raise ValueError("betas must lie in (0, 1)")
        object.__setattr__(self, "betas", b)
        ab = np.concatenate([[1.0], np.cumprod(1.0 - b)])
        object.__setattr__(self, "alpha_bars", ab)

    @property
    def T(self) -> int:
        return len(self.betas)


def schedule_linear(T: int = DEFAULT_STEPS, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def add_noise(clean, t: int, sched: NoiseSchedule, rng=None, *, noise=None) -> np.ndarray:
    """Forward process ``sqrt(abar_t) x + sqrt(1 - abar_t) eps``; no clamping."""
    if not 0 <= t <= sched.T:
        raise ValueError(f"step {t} outside [0, {sched.T}]")
    x = np.asarray(clean, dtype=np.float64)
    if t == 0:
        return x.copy()
    ab = sched.alpha_bars[t]
    eps = _rng(rng).standard_normal(x.shape) if noise is None else np.asarray(noise, dtype=np.float64)
    return math.sqrt(ab) * x + math.sqrt(1.0 - ab) * eps


def classical_denoiser(
    noisy,
    t: int,
    sched: NoiseSchedule,
    mask=None,
    *,
    sigma_min: float = 1.0,
    sigma_scale: float = 30.0,
    sigma_max: float = 8.0,
    tau: float = 0.01,
) -> np.ndarray:
    """Model-free clean-image estimate for step ``t``.

    Noised pixels (the mask, or everything when no mask is given) are scaled
    by ``1/sqrt(abar_t)`` and down-weighted by ``1/(1 + v/tau^2)`` with ``v =
    (1 - abar_t)/abar_t``. The weighted residual around the per-channel median
    of the clean pixels is then smoothed by normalized Gaussian convolution
    whose width grows with ``sqrt(v)``.
    """
    x = np.asarray(noisy, dtype=np.float64)
    ab = sched.alpha_bars[t]
    v = (1.0 - ab) / ab
    noised = np.ones(x.shape[:2], bool) if mask is None else as_mask(mask)
    z = np.where(noised[..., None], x / math.sqrt(ab), x)
    ref = ~noised if (~noised).any() else noised
    mu = np.median(z[ref], axis=0)
    r = z - mu
    wgt = np.where(noised, 1.0 / (1.0 + v / tau**2), 1.0)
    sigma = min(sigma_min + sigma_scale * math.sqrt(v), sigma_max)
    num = ndimage.gaussian_filter(wgt[..., None] * r, (sigma, sigma, 0))
    den = ndimage.gaussian_filter(wgt, sigma)
    return mu + num / den[..., None]


class Denoiser:
    """Clean-image estimator ``D(noisy, t)`` used by :func:`sample`.

    ``patch_size`` is the side length the denoiser requires, or None when it
    accepts any size.
    """

    patch_size: int | None = None

    def __call__(self, noisy: np.ndarray, t: int, *, mask: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
        raise NotImplementedError

    def crop(self, rect: Rect) -> "Denoiser":
        return self


class OracleDenoiser(Denoiser):
    """Returns a known clean image regardless of input."""

    def __init__(self, clean):
        self.clean = np.asarray(clean, dtype=np.float64)

    def __call__(self, noisy, t, *, mask, schedule):
        if self.clean.shape != noisy.shape:
            raise DimensionError(f"oracle image {self.clean.shape} != input {noisy.shape}")
        return self.clean.copy()

    def crop(self, rect):
        return OracleDenoiser(crop(self.clean, rect))


class ClassicalDenoiser(Denoiser):
    def __init__(self, patch_size: int | None = None, **params):
        if patch_size is not None and patch_size < 16:
            raise ValueError("patch_size must be at least 16")
        self.patch_size = patch_size
        self.params = params

    def __call__(self, noisy, t, *, mask, schedule):
        return classical_denoiser(noisy, t, schedule, mask, **self.params)


class ExternalDenoiser(Denoiser):
    """Denoiser hosted in another program, spoken to through TACT files.

    Calls are serialized per instance unless ``reentrant`` is set.
    """

    def __init__(self, command, patch_size: int = DEFAULT_PATCH, *, timeout: float | None = None, reentrant: bool = False):
        if patch_size < 16:
            raise ValueError("patch_size must be at least 16")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValueError("empty denoiser command")
        self.patch_size = patch_size
        self.timeout = timeout
        self.reentrant = reentrant
        self._lock = threading.Lock()

    def __call__(self, noisy, t, *, mask, schedule):
        if self.reentrant:
            return self._run(noisy, mask, t)
        with self._lock:
            return self._run(noisy, mask, t)

    def _run(self, noisy, mask, t):
        with tempfile.TemporaryDirectory(prefix="tact-") as tmp:
            req, rep = Path(tmp) / "request.tact", Path(tmp) / "reply.tact"
            req.write_bytes(tact.encode_request(noisy, mask, t))
            try:
                proc = subprocess.run(
                    self.command + [str(req), str(rep)],
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise DenoiserError(f"cannot run {self.command[0]}: {exc}", t) from exc
            if proc.returncode != 0:
                tail = (proc.stderr or "").strip().splitlines()[-5:]
                raise DenoiserError(
                    f"{self.command[0]} exited with status {proc.returncode}: " + " | ".join(tail), t
                )
            if not rep.is_file():
                raise tact.ProtocolError(f"{self.command[0]} wrote no reply")
            return tact.decode_reply(rep.read_bytes(), noisy.shape)


def external_denoiser(noisy, mask, t: int, handle: ExternalDenoiser) -> np.ndarray:
    return handle(np.asarray(noisy, dtype=np.float64), t, mask=as_mask(mask), schedule=None)


def sample(image, mask, denoiser: Denoiser, sched: NoiseSchedule, rng=None, *, hook=None) -> np.ndarray:
    """Run the masked diffusion loop on one patch and return the clamped result.

    ``hook(t, x)`` is called with the unclamped state after initialization
    (``t = T``) and after every update (``t-1``).
    """
    img = as_image(image)
    mask = as_mask(mask)
    check_same_size(img, mask)
    ps = getattr(denoiser, "patch_size", None)
    if ps is not None and img.shape[:2] != (ps, ps):
        raise DimensionError(f"input {img.shape[:2]} must match denoiser patch size {ps}; tile it first")
    rng = _rng(rng)
    m3 = mask[..., None]
    x = np.where(m3, rng.standard_normal(img.shape), img)
    if hook is not None:
        hook(sched.T, x)
    for t in range(sched.T, 0, -1):
        try:
            est = np.asarray(denoiser(x, t, mask=mask, schedule=sched), dtype=np.float64)
        except DenoiserError:
            raise
        except Exception as exc:
            raise DenoiserError(f"denoiser failed at step {t}: {exc}", t) from exc
        if est.shape != img.shape:
            raise DenoiserError(f"denoiser returned shape {est.shape} at step {t}", t)
        x = np.where(m3, add_noise(est, t - 1, sched, rng), img)
        if hook is not None:
            hook(t - 1, x)
    return np.clip(x, 0.0, 1.0)


def inpaint_tacdiff(
    image,
    mask,
    denoiser: Denoiser | None = None,
    schedule: NoiseSchedule | None = None,
    rng=None,
    *,
    patch_size: int | None = None,
    jobs: int = 1,
) -> np.ndarray:
    """Diffusion inpainting of a full image through overlapping patches.

    Each patch gets its own child generator spawned from ``rng`` so the result
    does not depend on ``jobs``.
    """
    img = as_image(image)
    mask = as_mask(mask)
    check_same_size(img, mask)
    denoiser = denoiser or ClassicalDenoiser()
    schedule = schedule or schedule_linear()
    rng = _rng(rng)
    h, w = mask.shape
    ps = patch_size or getattr(denoiser, "patch_size", None) or DEFAULT_PATCH
    if getattr(denoiser, "patch_size", None) is None:
        ps = min(ps, w, h)
    layout = plan_patches(w, h, ps)
    children = rng.spawn(len(layout))

    def run(k):
        r = layout.rects()[k]
        pm = crop(mask, r)
        if not pm.any():
            return crop(img, r)
        return sample(crop(img, r), pm, denoiser.crop(r), schedule, children[k])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            patches = list(ex.map(run, range(len(layout))))
    else:
        patches = [run(k) for k in range(len(layout))]
    return rectify(np.clip(merge_patches(layout, patches), 0.0, 1.0), img, mask)


def reference_loss(denoised, target, mask) -> float:
    """Squared error summed over masked pixels and all channels."""
    d = np.asarray(denoised, dtype=np.float64)
    g = np.asarray(target, dtype=np.float64)
    mask = as_mask(mask)
    if d.shape != g.shape or d.shape[:2] != mask.shape:
        raise DimensionError(f"dimension mismatch: {d.shape}, {g.shape}, {mask.shape}")
    diff = (d - g)[mask]
    return float(np.sum(diff * diff))


@dataclass
class TrainingPair:
    input_patch: np.ndarray
    target_patch: np.ndarray
    mask_patch: np.ndarray
    rect: Rect
    offset: tuple[int, int]
    source_mask_patch: np.ndarray  # original markers in the patch frame


class _OffsetSource:
    """Extraction, pseudo-markerless fill and shifted marker layer of one image."""

    def __init__(self, image, cfg: ExtractConfig | None, offset):
        img = as_image(image)
        mask, markers = extract_markers(img, cfg)
        if len(markers) == 0:
            raise NoMarkersError("no markers found in image")
        if offset is None:
            if len(markers) < 2:
                raise NoMarkersError("need at least two markers to derive the default offset")
            offset = default_offset(markers)
        dx, dy = offset
        self.mask = mask
        self.offset = (int(dx), int(dy))
        self.pseudo = inpaint_fmm(img, mask)
        self.mask2, self.markers2 = offset_mask(mask, markers, dx, dy)
        # carry the real marker appearance along with the shifted mask
        composite = self.pseudo.copy()
        ys, xs = np.nonzero(self.mask2)
        composite[ys, xs] = img[ys - dy, xs - dx]
        self.composite = composite

    def pair(self, rng: np.random.Generator, patch_size: int, max_tries: int) -> TrainingPair:
        h, w = self.mask.shape
        if patch_size > w or patch_size > h:
            raise ValueError(f"patch {patch_size} larger than image {w}x{h}")
        c = self.markers2.centers
        for _ in range(max_tries):
            x0 = int(rng.integers(0, w - patch_size + 1))
            y0 = int(rng.integers(0, h - patch_size + 1))
            r = Rect(x0, y0, patch_size, patch_size)
            inside = (c[:, 0] >= x0) & (c[:, 0] < x0 + patch_size) & (c[:, 1] >= y0) & (c[:, 1] < y0 + patch_size)
            if inside.any():
                return TrainingPair(
                    crop(self.composite, r),
                    crop(self.pseudo, r),
                    crop(self.mask2, r),
                    r,
                    self.offset,
                    crop(self.mask, r),
                )
        raise NoMarkersError(f"no crop containing an offset marker after {max_tries} tries")


def make_offset_pairs(
    image, rng, count: int, patch_size: int = DEFAULT_PATCH, cfg: ExtractConfig | None = None, *, offset=None, max_tries: int = 100
) -> list[TrainingPair]:
    """Several random training crops from one marker image (one extraction and fill)."""
    src = _OffsetSource(image, cfg, offset)
    rng = _rng(rng)
    return [src.pair(rng, patch_size, max_tries) for _ in range(count)]


def make_offset_pair(image, rng, patch_size: int = DEFAULT_PATCH, cfg: ExtractConfig | None = None, **kw) -> TrainingPair:
    return make_offset_pairs(image, rng, 1, patch_size, cfg, **kw)[0]
