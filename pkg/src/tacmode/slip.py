"""Slip detection from marker displacement relative to the first frame."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from tacmode.core import TactileError, load_png
from tacmode.markers import ExtractConfig, MarkerSet, default_gate, extract_markers, match_nearest, read_markers

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1.5


class InsufficientMatchesError(TactileError):
    pass


@dataclass
class SlipConfig:
    epsilon_v: float = DEFAULT_EPSILON
    gate: float | None = None  # None: 0.45 x median spacing of the reference frame of the reference frame
    min_markers: int = 4

    def __post_init__(self):
        if not self.epsilon_v > 0:
            raise ValueError("epsilon_v must be positive")
        if self.gate is not None and not self.gate > 0:
            raise ValueError("gate must be positive")
        if self.min_markers < 1:
            raise ValueError("min_markers must be at least 1")


@dataclass(frozen=True)
class SlipEvent:
    frame_index: int
    max_disp: float
    marker_index: int


@dataclass
class FrameWarning:
    frame_index: int
    message: str


@dataclass
class FrameStream:
    """Ordered frames (marker sets or images) and their nominal capture rate."""

    frames: Iterable
    rate: float = 30.0

    def __iter__(self):
        return iter(self.frames)


def _gate(cfg: SlipConfig, reference: MarkerSet) -> float:
    return cfg.gate if cfg.gate is not None else default_gate(reference)


def max_displacement(current: MarkerSet, reference: MarkerSet, gate: float) -> tuple[float, int, int]:
    """Largest matched displacement, the reference index achieving it, and the match count."""
    m = match_nearest(reference, current, gate)
    if not m.pairs:
        return 0.0, -1, 0
    ia, ib = m.a_idx, m.b_idx
    d = current.centers[ib] - reference.centers[ia]
    mag = np.hypot(d[:, 0], d[:, 1])
    k = int(np.argmax(mag))
    return float(mag[k]), int(ia[k]), len(ia)


def slip_condition(current: MarkerSet, reference: MarkerSet, cfg: SlipConfig) -> tuple[bool, float]:
    """Whether the largest marker displacement from the reference exceeds ``epsilon_v``."""
    if len(current) == 0 or len(reference) == 0:
        raise ValueError("slip_condition needs non-empty marker sets")
    disp, _, n = max_displacement(current, reference, _gate(cfg, reference))
    if n < cfg.min_markers:
        raise InsufficientMatchesError(f"only {n} markers matched, need {cfg.min_markers}")
    return disp > cfg.epsilon_v, disp


class SlipDetector:
    """Streaming detector; the first frame fed becomes the reference.

    Markers keep their identity through the stream by matching each frame
    against the last known position of every reference marker, so the
    displacement stays correct after motions larger than the gate.
    """

    def __init__(self, cfg: SlipConfig | None = None, extract_cfg: ExtractConfig | None = None):
        self.cfg = cfg or SlipConfig()
        self.extract_cfg = extract_cfg
        self.reference: MarkerSet | None = None
        self.tracked: np.ndarray | None = None
        self.gate: float | None = None
        self.index = -1
        self.warnings: list[FrameWarning] = []
        self.last_disp = 0.0

    def _markers(self, frame) -> MarkerSet:
        if isinstance(frame, MarkerSet):
            return frame
        return extract_markers(frame, self.extract_cfg)[1]

    def feed(self, frame) -> SlipEvent | None:
        self.index += 1
        cur = self._markers(frame)
        if self.reference is None:
            if len(cur) < max(self.cfg.min_markers, 2):
                raise InsufficientMatchesError(f"reference frame has only {len(cur)} markers")
            self.reference = cur
            self.tracked = cur.centers.copy()
            self.gate = _gate(self.cfg, cur)
            return None

        m = match_nearest(self.tracked, cur, self.gate)
        if len(m.pairs) < self.cfg.min_markers:
            w = FrameWarning(self.index, f"{len(m.pairs)} markers matched, need {self.cfg.min_markers}")
            self.warnings.append(w)
            log.warning("frame %d: %s", w.frame_index, w.message)
            return None
        ia, ib = m.a_idx, m.b_idx
        self.tracked[ia] = cur.centers[ib]
        d = self.tracked[ia] - self.reference.centers[ia]
        mag = np.hypot(d[:, 0], d[:, 1])
        k = int(np.argmax(mag))
        self.last_disp = float(mag[k])
        if mag[k] > self.cfg.epsilon_v:
            return SlipEvent(self.index, float(mag[k]), int(ia[k]))
        return None


def process_stream(stream, cfg: SlipConfig | None = None, extract_cfg: ExtractConfig | None = None) -> list[SlipEvent]:
    """Evaluate every frame after the first; one event per frame meeting the slip condition."""
    det = SlipDetector(cfg, extract_cfg)
    events = []
    for frame in stream:
        ev = det.feed(frame)
        if ev is not None:
            events.append(ev)
    if det.index < 0:
        raise ValueError("empty frame stream")
    return events


def calibrate_epsilon(stream, cfg: SlipConfig | None = None, extract_cfg: ExtractConfig | None = None, factor: float = 3.0) -> tuple[float, float]:
    """Max displacement seen over a known-static hold, and ``factor`` times it."""
    det = SlipDetector(cfg or SlipConfig(epsilon_v=1e9), extract_cfg)
    peak = 0.0
    for frame in stream:
        det.feed(frame)
        peak = max(peak, det.last_disp)
    if det.index < 1:
        raise ValueError("calibration needs at least two frames")
    return peak, factor * peak


def _frame_number(p: Path) -> tuple[int, str]:
    nums = re.findall(r"\d+", p.stem)
    return (int(nums[-1]) if nums else -1, p.name)


def load_frame_dir(path, radius: float | None = None):
    """Frames from a directory of numbered PNG images or marker text files.

    Marker files (``.csv``/``.txt``) take precedence when both kinds exist.
    Images are loaded lazily.
    """
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"no such directory: {path}")
    if (path / "frames").is_dir():
        path = path / "frames"
    texts = sorted([p for p in path.iterdir() if p.suffix in (".csv", ".txt")], key=_frame_number)
    if texts:
        return [read_markers(p, radius) for p in texts]
    pngs = sorted([p for p in path.iterdir() if p.suffix == ".png"], key=_frame_number)
    if not pngs:
        raise ValueError(f"{path}: no frames found")
    return (load_png(p) for p in pngs)
