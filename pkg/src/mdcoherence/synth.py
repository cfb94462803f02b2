"""Synthetic micro-Doppler scenes and calibrated complex white noise.

Each scene is a sum of sinusoidally phase-modulated tones,

    s(n) = sum_i A_i exp(j (2 pi f_b,i n / fs + m_i sin(2 pi f_cad,i n / fs + phi_i)))

which is the textbook model for a vibrating or swinging scatterer riding on
a bulk Doppler shift. Classes differ in (cadence, modulation index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from mdcoherence.errors import InvalidSpec, ZeroPowerSignal

SPLITS = ("train", "val", "test")
SPLIT_RATIOS = (0.5, 0.25, 0.25)


@dataclass(frozen=True)
class DopplerComponent:
    amplitude: float
    bulk_doppler_hz: float
    mod_index: float
    cadence_hz: float
    initial_phase: float = 0.0

    def validate(self) -> None:
        vals = (self.amplitude, self.bulk_doppler_hz, self.mod_index, self.cadence_hz, self.initial_phase)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidSpec(f"non-finite component field in {self}")
        if self.amplitude < 0:
            raise InvalidSpec(f"amplitude must be >= 0, got {self.amplitude}")
        if self.cadence_hz < 0:
            raise InvalidSpec(f"cadence_hz must be >= 0, got {self.cadence_hz}")


@dataclass(frozen=True)
class SceneSpec:
    label: int
    components: tuple[DopplerComponent, ...]
    duration_s: float
    sample_rate_hz: float

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    def validate(self, min_samples: int = 1, n_classes: int | None = None) -> None:
        if not self.components:
            raise InvalidSpec("scene needs at least one component")
        if not (self.duration_s > 0 and self.sample_rate_hz > 0):
            raise InvalidSpec("duration_s and sample_rate_hz must be positive")
        if not (math.isfinite(self.duration_s) and math.isfinite(self.sample_rate_hz)):
            raise InvalidSpec("duration_s and sample_rate_hz must be finite")
        if self.label < 0 or (n_classes is not None and self.label >= n_classes):
            raise InvalidSpec(f"label {self.label} outside [0, {n_classes})")
        if self.n_samples < max(min_samples, 1):
            raise InvalidSpec(f"scene has {self.n_samples} samples, need >= {min_samples}")
        for c in self.components:
            c.validate()


@dataclass(frozen=True)
class IqSeries:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.ndim != 1 or s.size == 0:
            raise InvalidSpec("IqSeries needs a nonempty 1-D sample array")
        if not np.all(np.isfinite(s)):
            raise InvalidSpec("IqSeries samples must be finite")
        if not self.sample_rate_hz > 0:
            raise InvalidSpec("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


def generate_scene(
    spec: SceneSpec,
    seed: int,
    amplitude_jitter: float = 0.1,
    phase_jitter: bool = True,
    min_samples: int = 1,
) -> IqSeries:
    """Render a scene. The seed only touches the modulation phases and amplitudes."""
    spec.validate(min_samples=min_samples)
    if not 0 <= amplitude_jitter < 1:
        raise InvalidSpec(f"amplitude_jitter must be in [0, 1), got {amplitude_jitter}")
    rng = np.random.default_rng(seed)
    fs = spec.sample_rate_hz
    n = np.arange(spec.n_samples, dtype=np.float64)
    out = np.zeros(spec.n_samples, dtype=np.complex128)
    for comp in spec.components:
        # draw both numbers unconditionally so the stream does not depend on flags
        dphi = rng.uniform(0.0, 2 * np.pi)
        gain = rng.uniform(1.0 - amplitude_jitter, 1.0 + amplitude_jitter)
        phi = (comp.initial_phase + dphi) % (2 * np.pi) if phase_jitter else comp.initial_phase
        amp = comp.amplitude * gain
        phase = 2 * np.pi * comp.bulk_doppler_hz * n / fs
        phase = phase + comp.mod_index * np.sin(2 * np.pi * comp.cadence_hz * n / fs + phi)
        out += amp * np.exp(1j * phase)
    return IqSeries(out, fs)


def noise_variance(signal_power: float, snr_db: float) -> float:
    return signal_power / 10.0 ** (snr_db / 10.0)


def inject_noise(x: IqSeries, snr_db: float, seed) -> IqSeries:
    """Add circular complex Gaussian noise at ``snr_db`` relative to the mean power of ``x``."""
    p_s = x.power
    if p_s == 0:
        raise ZeroPowerSignal("cannot set an SNR against a zero-power signal")
    sigma = math.sqrt(noise_variance(p_s, snr_db) / 2.0)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((2, len(x)))
    return IqSeries(x.samples + sigma * (noise[0] + 1j * noise[1]), x.sample_rate_hz)


def measured_snr_db(clean: IqSeries, noisy: IqSeries) -> float:
    resid = noisy.samples - clean.samples
    return 10 * math.log10(clean.power / float(np.mean(np.abs(resid) ** 2)))


@dataclass
class SynthConfig:
    n_classes: int = 3
    n_per_class: int = 100
    sample_rate_hz: float = 640.0
    duration_s: float = 3.2
    amplitude_jitter: float = 0.1
    cadence_jitter: float = 0.1
    bulk_jitter_hz: float = 0.0
    seed: int = 0


# (cadence_hz, peak limb Doppler deviation in Hz) per class; mod_index = deviation / cadence.
_LIMB_TABLE = [(0.8, 50.0), (1.6, 35.0), (2.4, 20.0), (1.2, 42.0), (2.0, 28.0), (3.0, 15.0)]


def default_templates(cfg: SynthConfig) -> list[SceneSpec]:
    """Torso (weak modulation) plus one strongly modulated limb per class, zero bulk Doppler."""
    if not 2 <= cfg.n_classes <= len(_LIMB_TABLE):
        raise InvalidSpec(f"default templates cover 2..{len(_LIMB_TABLE)} classes, got {cfg.n_classes}")
    out = []
    for k in range(cfg.n_classes):
        cad, dev = _LIMB_TABLE[k]
        comps = (
            DopplerComponent(1.0, 0.0, 0.5, cad),
            DopplerComponent(0.5, 0.0, dev / cad, cad),
        )
        out.append(SceneSpec(k, comps, cfg.duration_s, cfg.sample_rate_hz))
    return out


@dataclass
class Dataset:
    iq: list[IqSeries]
    labels: np.ndarray
    split: np.ndarray
    n_classes: int
    specs: list[SceneSpec] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.iq)

    def indices(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return np.flatnonzero(self.split == split)

    def subset(self, split: str) -> tuple[list[IqSeries], np.ndarray]:
        idx = self.indices(split)
        return [self.iq[i] for i in idx], self.labels[idx]


def split_counts(n_per_class: int) -> tuple[int, int, int]:
    n_train = n_per_class // 2
    n_val = n_per_class // 4
    return n_train, n_val, n_per_class - n_train - n_val


def _jitter_spec(spec: SceneSpec, rng: np.random.Generator, cadence_jitter: float, bulk_jitter_hz: float) -> SceneSpec:
    shift = rng.uniform(-bulk_jitter_hz, bulk_jitter_hz)
    scale = rng.uniform(1 - cadence_jitter, 1 + cadence_jitter)
    comps = tuple(
        replace(c, bulk_doppler_hz=c.bulk_doppler_hz + shift, cadence_hz=c.cadence_hz * scale) for c in spec.components
    )
    return replace(spec, components=comps)


def make_dataset(
    class_templates: list[SceneSpec],
    n_per_class: int,
    seed: int,
    amplitude_jitter: float = 0.1,
    cadence_jitter: float = 0.0,
    bulk_jitter_hz: float = 0.0,
    min_samples: int = 1,
) -> Dataset:
    """Render ``n_per_class`` scenes per template with a 0.5/0.25/0.25 split per class.

    Besides the phase/amplitude randomisation of :func:`generate_scene`, each
    sample can get a common cadence scale and bulk Doppler offset so that
    classes are not just a single deterministic waveform.
    """
    k = len(class_templates)
    if k < 2:
        raise InvalidSpec("need at least two class templates")
    if n_per_class < 4:
        raise InvalidSpec(f"n_per_class must be >= 4, got {n_per_class}")
    for i, t in enumerate(class_templates):
        t.validate(min_samples=min_samples)
        if t.label != i:
            raise InvalidSpec(f"template {i} carries label {t.label}")
    rng = np.random.default_rng(seed)
    iq, labels, split, specs = [], [], [], []
    n_train, n_val, n_test = split_counts(n_per_class)
    names = np.array(["train"] * n_train + ["val"] * n_val + ["test"] * n_test)
    for template in class_templates:
        assignment = names[rng.permutation(n_per_class)]
        for j in range(n_per_class):
            spec = _jitter_spec(template, rng, cadence_jitter, bulk_jitter_hz)
            scene_seed = int(rng.integers(0, 2**63 - 1))
            iq.append(generate_scene(spec, scene_seed, amplitude_jitter=amplitude_jitter, min_samples=min_samples))
            labels.append(template.label)
            split.append(assignment[j])
            specs.append(spec)
    return Dataset(iq, np.asarray(labels, dtype=np.int64), np.asarray(split), k, specs)


def dataset_from_config(cfg: SynthConfig, min_samples: int = 1) -> Dataset:
    return make_dataset(
        default_templates(cfg),
        cfg.n_per_class,
        cfg.seed,
        amplitude_jitter=cfg.amplitude_jitter,
        cadence_jitter=cfg.cadence_jitter,
        bulk_jitter_hz=cfg.bulk_jitter_hz,
        min_samples=min_samples,
    )
