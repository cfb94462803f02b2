"""Flat ``key = value`` run configuration.

One key per line, ``#`` starts a comment. Keys are dotted (``stft.hop_samples``)
and every key must be known; values are parsed with the type of the default.
Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from mdcoherence.errors import ConfigError, IoError
from mdcoherence.model import ArchSpec
from mdcoherence.objective import LossConfig
from mdcoherence.synth import SynthConfig
from mdcoherence.tfr import PipelineConfig, StftConfig
from mdcoherence.trainer import TrainConfig

INT, FLOAT, STR, BOOL, INTS, FLOATS, PATH = "int", "float", "str", "bool", "ints", "floats", "path"

# key -> (type, default); None default means "no default"
SCHEMA: dict[str, tuple[str, object]] = {
    "seed": (INT, 0),
    "synth.n_classes": (INT, 3),
    "synth.n_per_class": (INT, 100),
    "synth.sample_rate_hz": (FLOAT, 640.0),
    "synth.duration_s": (FLOAT, 3.2),
    "synth.amplitude_jitter": (FLOAT, 0.1),
    "synth.cadence_jitter": (FLOAT, 0.1),
    "synth.bulk_jitter_hz": (FLOAT, 0.0),
    "stft.window_len_samples": (INT, 128),
    "stft.hop_samples": (INT, 32),
    "stft.n_bins": (INT, 128),
    "stft.window_kind": (STR, "blackman"),
    "pipeline.m_out": (INT, 32),
    "pipeline.doppler_bins": (INT, 32),
    "pipeline.normalize": (STR, "energy"),
    "arch.input_side": (INT, 32),
    "arch.in_channels": (INT, 2),
    "arch.conv_layers": (INT, 4),
    "arch.channels": (INTS, (8, 16, 32, 64)),
    "arch.latent_dim": (INT, 128),
    "arch.hidden": (INT, 64),
    "arch.kernel": (INT, 3),
    "arch.stride": (INT, 2),
    "arch.leak": (FLOAT, 0.01),
    "arch.io_gain": (FLOAT, 0.0),
    "loss.beta": (FLOAT, 4.0),
    "loss.eps_mag": (FLOAT, 1e-8),
    "loss.per_band": (BOOL, False),
    "pretrain.epochs": (INT, 100),
    "pretrain.batch_size": (INT, 16),
    "pretrain.learning_rate": (FLOAT, 1e-3),
    "pretrain.optimizer": (STR, "adam"),
    "classifier.epochs": (INT, 20),
    "classifier.batch_size": (INT, 16),
    "classifier.learning_rate": (FLOAT, 1e-2),
    "classifier.optimizer": (STR, "adam"),
    "classifier.fine_tune": (BOOL, False),
    "eval.snr_grid": (FLOATS, (10.0, 5.0, 0.0, -5.0, -10.0)),
    "eval.noise_realizations": (INT, 16),
    "eval.snr_db": (FLOAT, -5.0),
    "eval.split": (STR, "test"),
    "eval.label_a": (STR, "a"),
    "eval.label_b": (STR, "b"),
    "gradcheck.rows": (INT, 6),
    "gradcheck.cols": (INT, 6),
    "gradcheck.h": (FLOAT, 1e-5),
    "gradcheck.tolerance": (FLOAT, 1e-4),
    "gradcheck.seeds": (INT, 50),
    "paths.data": (PATH, None),
    "paths.pretrained": (PATH, None),
    "paths.model": (PATH, None),
    "paths.model_a": (PATH, None),
    "paths.model_b": (PATH, None),
    "paths.sample": (PATH, None),
    "paths.runs": (STR, None),
}


def _parse_value(kind: str, raw: str, key: str, line: int, base: Path):
    try:
        if kind == INT:
            return int(raw)
        if kind == FLOAT:
            return float(raw)
        if kind == BOOL:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == INTS:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == FLOATS:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if kind == PATH:
            p = Path(raw)
            return p if p.is_absolute() else base / p
        return raw
    except ValueError:
        raise ConfigError(f"bad {kind} value {raw!r}", key=key, line=line) from None


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: Path | None = None
    present: set = field(default_factory=set)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({k: d for k, (_, d) in SCHEMA.items()})

    @classmethod
    def parse(cls, text: str, base: Path = Path("."), source: Path | None = None) -> "RunConfig":
        cfg = cls.defaults()
        cfg.source = source
        seen: dict[str, int] = {}
        for lineno, raw_line in enumerate(text.splitlines(), start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("expected 'key = value'", line=lineno)
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError("unknown key", key=key, line=lineno)
            if key in seen:
                raise ConfigError(f"duplicate key (first set on line {seen[key]})", key=key, line=lineno)
            seen[key] = lineno
            cfg.values[key] = _parse_value(SCHEMA[key][0], raw, key, lineno, base)
        cfg.present = set(seen)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise IoError(f"cannot read config {path}: {e.strerror or e}") from e
        cfg = cls.parse(text, base=path.resolve().parent, source=path)
        if "seed" not in cfg.present:
            raise ConfigError("missing required key", key="seed")
        return cfg

    def __getitem__(self, key: str):
        return self.values[key]

    def require(self, *keys: str) -> None:
        for key in keys:
            if self.values.get(key) is None:
                raise ConfigError("missing required key", key=key)

    def override_seed(self, seed: int | None) -> None:
        if seed is not None:
            self.values["seed"] = int(seed)

    def _section(self, prefix: str) -> dict:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def synth(self) -> SynthConfig:
        return SynthConfig(**self._section("synth"), seed=self["seed"])

    def stft(self) -> StftConfig:
        return StftConfig(**self._section("stft"))

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.stft(), **self._section("pipeline"))

    def arch(self) -> ArchSpec:
        return ArchSpec(**self._section("arch"), n_classes=self["synth.n_classes"])

    def loss(self) -> LossConfig:
        return LossConfig(**self._section("loss"))

    def train(self, stage: str) -> TrainConfig:
        section = "pretrain" if stage == "pretrain" else "classifier"
        loss = self.loss()
        return TrainConfig(
            stage=stage,
            beta=loss.beta,
            eps_mag=loss.eps_mag,
            per_band=loss.per_band,
            seed=self["seed"],
            snr_grid=self["eval.snr_grid"],
            noise_realizations=self["eval.noise_realizations"],
            **self._section(section),
        )

    def dump(self) -> str:
        """Canonical text form (paths as given after resolution); parse(dump()) round-trips."""
        lines = []
        for key, (kind, _) in SCHEMA.items():
            v = self.values.get(key)
            if v is None:
                continue
            if kind in (INTS, FLOATS):
                v = ",".join(repr(x) for x in v)
            elif kind == BOOL:
                v = "true" if v else "false"
            elif kind == FLOAT:
                v = repr(v)
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"
