"""Sampled-signal containers, WAV I/O, framing, STFT and FFT convolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 16000

_PCM16_SCALE = 32768.0


class AudioFormatError(ValueError):
    """Raised for unreadable or unsupported audio files."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono signal: float64 samples (nominal range [-1, 1]) plus sample rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer samples must be 1-D")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioBuffer samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        """Length in seconds."""
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class BinauralBuffer:
    """Left/right channel pair with matching sample rate and length."""

    left: AudioBuffer
    right: AudioBuffer

    def __post_init__(self):
        if self.left.sample_rate != self.right.sample_rate:
            raise ValueError("channel sample rates differ")
        if len(self.left) != len(self.right):
            raise ValueError("channel lengths differ")

    def __len__(self):
        return len(self.left)

    @property
    def sample_rate(self):
        return self.left.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """T x F complex STFT frames with the analysis parameters that made them."""

    frames: np.ndarray
    frame_size: int
    hop: int
    window: str

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.complex128)
        if frames.ndim != 2 or frames.shape[1] != self.frame_size // 2 + 1:
            raise ValueError("spectrogram must be T x (frame_size/2 + 1)")
        object.__setattr__(self, "frames", frames)


def read_wav(path):
    """Read a mono or stereo WAV file.

    PCM-16 samples are scaled by 1/32768; float-32 is taken as-is. Returns an
    AudioBuffer for mono files, a BinauralBuffer for stereo.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioFormatError(f"unreadable WAV file {path}: {exc}") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(
            f"unsupported WAV encoding {data.dtype} in {path} (PCM-16 or float-32 only)"
        )

    if samples.ndim == 1:
        return AudioBuffer(samples, rate)
    if samples.shape[1] == 1:
        return AudioBuffer(samples[:, 0], rate)
    if samples.shape[1] == 2:
        return BinauralBuffer(
            AudioBuffer(samples[:, 0], rate), AudioBuffer(samples[:, 1], rate)
        )
    raise AudioFormatError(f"{path} has {samples.shape[1]} channels, at most 2 supported")


def write_wav(path, buffer, encoding="float32"):
    """Write an AudioBuffer or BinauralBuffer as WAV.

    encoding is "pcm16" (round to nearest, clipped at full scale) or
    "float32". float-32 round-trips bit-exactly through read_wav.
    """
    if isinstance(buffer, BinauralBuffer):
        data = np.stack([buffer.left.samples, buffer.right.samples], axis=1)
        rate = buffer.sample_rate
    else:
        data = buffer.samples
        rate = buffer.sample_rate
    if data.size == 0:
        raise ValueError("refusing to write an empty buffer")

    if encoding == "pcm16":
        scaled = np.clip(np.rint(data * _PCM16_SCALE), -32768, 32767)
        wavfile.write(path, rate, scaled.astype(np.int16))
    elif encoding == "float32":
        wavfile.write(path, rate, data.astype(np.float32))
    else:
        raise ValueError(f"unknown encoding {encoding!r}")


def next_pow2(n):
    """Smallest power of two >= n (n >= 1)."""
    return 1 << (int(n) - 1).bit_length()


def fft_convolve(signal, kernel):
    """Full linear convolution of an AudioBuffer with a real kernel.

    Output length is N + K - 1. Uses a single FFT of the next power-of-two
    size; matches direct time-domain convolution to ~1e-12 relative.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 1 or len(kernel) == 0:
        raise ValueError("kernel must be a non-empty 1-D sequence")
    x = signal.samples
    n_out = len(x) + len(kernel) - 1
    nfft = next_pow2(max(n_out, 1))
    y = np.fft.irfft(np.fft.rfft(x, nfft) * np.fft.rfft(kernel, nfft), nfft)[:n_out]
    return AudioBuffer(y, signal.sample_rate)


_WINDOWS = {
    "rectangular": lambda n: np.ones(n),
    "hann": lambda n: 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n),
    "hamming": lambda n: 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / n),
}


def window_samples(name, frame_size):
    try:
        return _WINDOWS[name](frame_size)
    except KeyError:
        raise ValueError(f"unknown window {name!r}") from None


def num_frames(n_samples, frame_size, hop):
    """Number of full analysis frames; tail samples are dropped."""
    if n_samples < frame_size:
        return 0
    return 1 + (n_samples - frame_size) // hop


def stft(signal, frame_size=512, hop=160, window="hann"):
    """Short-time Fourier transform (one-sided), dropping the tail frame.

    Frame t, bin f holds sum_n w(n) x(t*hop + n) exp(-2j pi f n / frame_size).
    """
    if hop < 1:
        raise ValueError("hop must be >= 1")
    x = signal.samples
    t = num_frames(len(x), frame_size, hop)
    if t == 0:
        raise ValueError("signal shorter than one frame")
    w = window_samples(window, frame_size)
    idx = np.arange(frame_size)[None, :] + hop * np.arange(t)[:, None]
    frames = np.fft.rfft(x[idx] * w[None, :], frame_size, axis=1)
    return Spectrogram(frames, frame_size, hop, window)


def frame_rms(signal, frame_size, hop):
    """Per-frame RMS values; short tail frames are dropped."""
    if frame_size < 1:
        raise ValueError("frame_size must be >= 1")
    x = signal.samples
    t = num_frames(len(x), frame_size, hop)
    if t == 0:
        return np.zeros(0)
    idx = np.arange(frame_size)[None, :] + hop * np.arange(t)[:, None]
    return np.sqrt(np.mean(x[idx] ** 2, axis=1))
