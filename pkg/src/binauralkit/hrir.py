"""Left/right head-related impulse responses: a data-free spherical-head
model (Woodworth delay + broadband head-shadow gain) and measured sets loaded
from a JSON manifest."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .audio import BinauralBuffer, read_wav
from .ambisonic import Direction, angular_distance

_LEFT_EAR = Direction(math.pi / 2)
_RIGHT_EAR = Direction(-math.pi / 2)


@dataclass(frozen=True)
class HrirPair:
    """Left/right impulse responses sharing one sample rate."""

    left: np.ndarray
    right: np.ndarray
    sample_rate: int

    def __post_init__(self):
        left = np.asarray(self.left, dtype=np.float64)
        right = np.asarray(self.right, dtype=np.float64)
        if len(left) < 1 or len(right) < 1:
            raise ValueError("impulse responses must be non-empty")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)


@dataclass(frozen=True)
class HeadModelConfig:
    """Spherical-head parameters.

    head_radius 0.0875 m is the standard average human head; 343 m/s is the
    speed of sound at 20 C. The contralateral ear is attenuated by a broadband
    gain reaching -contralateral_attenuation dB directly opposite the ear.
    """

    head_radius: float = 0.0875
    speed_of_sound: float = 343.0
    contralateral_attenuation: float = 6.0
    ir_length: int = 64
    base_delay: int = 0

    def __post_init__(self):
        if self.head_radius <= 0 or self.speed_of_sound <= 0 or self.ir_length <= 0:
            raise ValueError("head model parameters must be positive")
        if self.contralateral_attenuation < 0:
            raise ValueError("contralateral_attenuation must be >= 0")
        if self.base_delay < 0:
            raise ValueError("base_delay must be >= 0")


def woodworth_delay(lateral_angle, cfg):
    """Spherical-head far-ear extra delay in seconds: (a/c)(theta + sin theta)."""
    theta = abs(lateral_angle)
    return cfg.head_radius / cfg.speed_of_sound * (theta + math.sin(theta))


def analytic_hrir(direction, sample_rate, cfg=None):
    """Single-impulse HRIR pair from the spherical-head model.

    The lateral incidence angle phi satisfies sin phi = sin(az) cos(el)
    (positive toward the listener's left). The near ear gets delay
    cfg.base_delay; the far ear additionally gets the Woodworth delay rounded
    to the nearest sample.
    """
    if cfg is None:
        cfg = HeadModelConfig()
    phi = math.asin(max(-1.0, min(1.0, math.sin(direction.azimuth) * math.cos(direction.elevation))))
    extra = int(round(woodworth_delay(phi, cfg) * sample_rate))
    if phi >= 0:  # source toward the left: left ear is near
        delay_l, delay_r = cfg.base_delay, cfg.base_delay + extra
    else:
        delay_l, delay_r = cfg.base_delay + extra, cfg.base_delay

    u = direction.unit_vector()
    gains = []
    for ear in (_LEFT_EAR, _RIGHT_EAR):
        cos_delta = float(np.clip(np.dot(u, ear.unit_vector()), -1.0, 1.0))
        gain_db = -cfg.contralateral_attenuation * (1.0 - cos_delta) / 2.0
        gains.append(10.0 ** (gain_db / 20.0))

    if max(delay_l, delay_r) >= cfg.ir_length:
        raise ValueError("ir_length too short for the modeled delay")
    left = np.zeros(cfg.ir_length)
    right = np.zeros(cfg.ir_length)
    left[delay_l] = gains[0]
    right[delay_r] = gains[1]
    return HrirPair(left, right, sample_rate)


@dataclass(frozen=True)
class HrirSet:
    """Direction-indexed HRIR pairs.

    source "analytic" synthesizes exactly at any queried direction;
    "measured" looks up the nearest stored direction by great-circle angle.
    """

    source: str
    sample_rate: int
    entries: dict = None
    head_model: HeadModelConfig = None

    def __post_init__(self):
        if self.source not in ("analytic", "measured"):
            raise ValueError(f"unknown HRIR source {self.source!r}")
        if self.source == "measured" and not self.entries:
            raise ValueError("measured HrirSet must be non-empty")
        if self.source == "analytic" and self.head_model is None:
            object.__setattr__(self, "head_model", HeadModelConfig())


def analytic_set(sample_rate, cfg=None):
    return HrirSet("analytic", sample_rate, head_model=cfg)


def load_hrir_manifest(path):
    """Load a measured HRIR set from a JSON manifest.

    The manifest is an array of `{"azimuth_deg", "elevation_deg", "file"}`
    objects; files are 2-channel (left, right) WAVs relative to the manifest.
    """
    with open(path) as fh:
        items = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    entries = {}
    sample_rate = None
    for item in items:
        direction = Direction(
            math.radians(float(item["azimuth_deg"])),
            math.radians(float(item["elevation_deg"])),
        )
        wav_path = os.path.join(base, item["file"])
        if not os.path.exists(wav_path):
            raise FileNotFoundError(f"HRIR manifest references missing file {wav_path}")
        loaded = read_wav(wav_path)
        if not isinstance(loaded, BinauralBuffer):
            raise ValueError(f"HRIR file {wav_path} must be 2-channel")
        if direction in entries:
            raise ValueError(f"duplicate HRIR direction {direction}")
        pair = HrirPair(loaded.left.samples, loaded.right.samples, loaded.sample_rate)
        if sample_rate is None:
            sample_rate = pair.sample_rate
        elif pair.sample_rate != sample_rate:
            raise ValueError("HRIR files disagree on sample rate")
        entries[direction] = pair
    return HrirSet("measured", sample_rate, entries=entries)


def lookup(hrir_set, direction):
    """HRIR pair for a direction: exact synthesis for analytic sets, nearest
    great-circle neighbor for measured sets (ties broken by smallest
    (azimuth, elevation))."""
    if hrir_set.source == "analytic":
        return analytic_hrir(direction, hrir_set.sample_rate, hrir_set.head_model)
    best = min(
        hrir_set.entries,
        key=lambda d: (angular_distance(d, direction), d.azimuth, d.elevation),
    )
    return hrir_set.entries[best]
