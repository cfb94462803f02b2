"""Time-frequency front end.

Complex STFT, uniform frame selection in time, and the normalized
Doppler-cadence magnitude map (DFT along time, smoothed magnitude, unit total).
Spectrograms are indexed ``[t, f_D]`` with zero Doppler at row ``N // 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mdcoherence.errors import InvalidParameter, InvalidSpec, SignalTooShort
from mdcoherence.synth import IqSeries

DEFAULT_EPS_MAG = 1e-8
WINDOWS = ("blackman", "hann", "rect")


@dataclass(frozen=True)
class Spectrogram:
    data: np.ndarray
    time_step_s: float = 1.0
    doppler_step_hz: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.complex128)
        if d.ndim != 2 or d.shape[0] < 2 or d.shape[1] < 2:
            raise InvalidSpec(f"spectrogram must be M x N with M, N >= 2, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidSpec("spectrogram entries must be finite")
        object.__setattr__(self, "data", d)

    @property
    def m_time(self) -> int:
        return self.data.shape[0]

    @property
    def n_doppler(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class StftConfig:
    window_len_samples: int = 128
    hop_samples: int = 32
    n_bins: int = 128
    window_kind: str = "blackman"

    def validate(self) -> None:
        if self.window_len_samples < 1 or self.hop_samples < 1:
            raise InvalidSpec("window length and hop must be >= 1")
        if self.hop_samples > self.window_len_samples:
            raise InvalidSpec("hop_samples must not exceed window_len_samples")
        if self.n_bins < self.window_len_samples:
            raise InvalidSpec("n_bins must be >= window_len_samples (zero padding only)")
        if self.window_kind not in WINDOWS:
            raise InvalidSpec(f"window_kind must be one of {WINDOWS}, got {self.window_kind!r}")

    def window(self) -> np.ndarray:
        n = self.window_len_samples
        if self.window_kind == "blackman":
            return np.blackman(n)
        if self.window_kind == "hann":
            return np.hanning(n)
        return np.ones(n)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_len_samples:
            return 0
        return (n_samples - self.window_len_samples) // self.hop_samples + 1


@dataclass(frozen=True)
class PipelineConfig:
    """STFT settings plus the fixed output size and per-sample scaling."""

    stft: StftConfig = StftConfig()
    m_out: int = 32
    normalize: str = "energy"
    # keep this many central Doppler rows (0 keeps all n_bins)
    doppler_bins: int = 32

    def validate(self) -> None:
        self.stft.validate()
        if self.m_out < 2:
            raise InvalidSpec("m_out must be >= 2")
        if self.doppler_bins and not 2 <= self.doppler_bins <= self.stft.n_bins:
            raise InvalidSpec(f"doppler_bins must be in [2, n_bins], got {self.doppler_bins}")
        if self.doppler_bins % 2:
            raise InvalidSpec("doppler_bins must be even so zero Doppler stays centred")
        if self.normalize not in ("energy", "none"):
            raise InvalidSpec(f"normalize must be 'energy' or 'none', got {self.normalize!r}")

    def min_samples(self) -> int:
        return self.stft.window_len_samples + self.stft.hop_samples


@dataclass(frozen=True)
class CadenceMap:
    data: np.ndarray

    @property
    def total(self) -> float:
        return float(self.data.sum())


def stft(x: IqSeries, cfg: StftConfig) -> Spectrogram:
    """Windowed, unnormalized DFT per frame; row ``t`` is frame ``t``."""
    cfg.validate()
    samples = x.samples
    n_frames = cfg.n_frames(samples.size)
    if n_frames < 2:
        raise SignalTooShort(
            f"{samples.size} samples give {n_frames} frame(s) for window {cfg.window_len_samples}"
            f" / hop {cfg.hop_samples}; need >= 2"
        )
    starts = np.arange(n_frames) * cfg.hop_samples
    frames = samples[starts[:, None] + np.arange(cfg.window_len_samples)[None, :]]
    spec = np.fft.fft(frames * cfg.window(), n=cfg.n_bins, axis=1)
    spec = np.fft.fftshift(spec, axes=1)
    return Spectrogram(spec, cfg.hop_samples / x.sample_rate_hz, x.sample_rate_hz / cfg.n_bins)


def resample_indices(m_in: int, m_out: int) -> np.ndarray:
    if m_in < 2 or m_out < 2:
        raise InvalidParameter(f"need m_in, m_out >= 2, got {m_in}, {m_out}")
    # round half away from zero; np.round would bank to even
    pos = np.arange(m_out) * (m_in - 1) / (m_out - 1)
    return np.floor(pos + 0.5).astype(np.int64)


def resample_time(s: Spectrogram, m_out: int) -> Spectrogram:
    """Pick ``m_out`` evenly spaced frames (no interpolation)."""
    idx = resample_indices(s.m_time, m_out)
    step = s.time_step_s * (s.m_time - 1) / (m_out - 1)
    return Spectrogram(s.data[idx], step, s.doppler_step_hz)


def smoothed_abs(z: np.ndarray, eps_mag: float = DEFAULT_EPS_MAG) -> np.ndarray:
    return np.sqrt(z.real**2 + z.imag**2 + eps_mag**2)


def cadence_array(y: np.ndarray, eps_mag: float = DEFAULT_EPS_MAG, per_band: bool = False) -> np.ndarray:
    """Cadence map of ``(..., M, N)`` complex arrays; time is axis -2."""
    if not eps_mag > 0:
        raise InvalidParameter(f"eps_mag must be > 0, got {eps_mag}")
    mag = smoothed_abs(np.fft.fft(y, axis=-2), eps_mag)
    axes = -2 if per_band else (-2, -1)
    return mag / mag.sum(axis=axes, keepdims=True)


def cadence_map(y: Spectrogram | np.ndarray, eps_mag: float = DEFAULT_EPS_MAG, per_band: bool = False) -> CadenceMap:
    data = y.data if isinstance(y, Spectrogram) else np.asarray(y, dtype=np.complex128)
    return CadenceMap(cadence_array(data, eps_mag, per_band))


def naive_cadence_map(y: np.ndarray, eps_mag: float = DEFAULT_EPS_MAG) -> np.ndarray:
    """O(M^2) per-column DFT reference for :func:`cadence_map`."""
    y = np.asarray(y, dtype=np.complex128)
    m, n = y.shape
    mag = np.empty((m, n))
    for fd in range(n):
        for fc in range(m):
            acc = 0j
            for t in range(m):
                acc += y[t, fd] * np.exp(-2j * np.pi * fc * t / m)
            mag[fc, fd] = np.sqrt(acc.real**2 + acc.imag**2 + eps_mag**2)
    return mag / mag.sum()


def crop_doppler(s: Spectrogram, n_keep: int) -> Spectrogram:
    """Keep ``n_keep`` rows around zero Doppler; zero Doppler lands at ``n_keep // 2``."""
    n = s.n_doppler
    lo = n // 2 - n_keep // 2
    return Spectrogram(s.data[:, lo : lo + n_keep], s.time_step_s, s.doppler_step_hz)


def normalize_energy(data: np.ndarray) -> np.ndarray:
    energy = float(np.sum(data.real**2 + data.imag**2))
    return data / np.sqrt(energy) if energy > 0 else data


def spectrogram_pipeline(x: IqSeries, cfg: PipelineConfig) -> Spectrogram:
    """IQ series -> fixed-size complex spectrogram ready for the network."""
    cfg.validate()
    s = resample_time(stft(x, cfg.stft), cfg.m_out)
    if cfg.doppler_bins and cfg.doppler_bins != s.n_doppler:
        s = crop_doppler(s, cfg.doppler_bins)
    if cfg.normalize == "energy":
        s = Spectrogram(normalize_energy(s.data), s.time_step_s, s.doppler_step_hz)
    return s


def to_channels(y: np.ndarray) -> np.ndarray:
    """Complex ``(..., M, N)`` -> real ``(..., 2, M, N)`` with [real, imag] channels."""
    y = np.asarray(y)
    return np.stack([y.real, y.imag], axis=-3)


def from_channels(x: np.ndarray) -> np.ndarray:
    return x[..., 0, :, :] + 1j * x[..., 1, :, :]


def batch_spectrograms(series: list[IqSeries], cfg: PipelineConfig) -> np.ndarray:
    """Stack pipeline outputs into a ``(B, M, N)`` complex array."""
    return np.stack([spectrogram_pipeline(x, cfg).data for x in series])
