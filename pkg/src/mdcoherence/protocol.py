"""Paired beta comparison: pretrain with each beta from the same seed, then heads, then noise sweep."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mdcoherence.model import ArchSpec, HybridNet, ModelParams
from mdcoherence.synth import Dataset, SynthConfig, dataset_from_config
from mdcoherence.tfr import PipelineConfig
from mdcoherence.trainer import (
    MetricsLog,
    SweepResult,
    TrainConfig,
    eval_snr_sweep,
    loss_coupling,
    prepare,
    pretrain,
    train_classifier,
)


@dataclass
class ProtocolConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    arch: ArchSpec = field(default_factory=ArchSpec)
    betas: tuple[float, ...] = (0.0, 4.0)
    pretrain_epochs: int = 100
    classifier_epochs: int = 20
    classifier_lr: float = 1e-2
    batch_size: int = 16
    per_band: bool = False
    snr_grid: tuple[float, ...] = (10.0, 5.0, 0.0, -5.0, -10.0)
    noise_realizations: int = 16

    def label(self, beta: float) -> str:
        return f"beta={beta:g}"


@dataclass
class PretrainOutcome:
    beta: float
    params: ModelParams
    log: MetricsLog

    @property
    def first(self) -> dict:
        return self.log.updates()[0]

    @property
    def last(self) -> dict:
        return self.log.updates()[-1]

    @property
    def coupling(self) -> float:
        return loss_coupling(self.log)


def synth_for_seed(cfg: ProtocolConfig, seed: int) -> Dataset:
    scfg = SynthConfig(**{**cfg.synth.__dict__, "seed": seed})
    return dataset_from_config(scfg, min_samples=cfg.pipeline.min_samples())


def pretrain_all(cfg: ProtocolConfig, data, seed: int) -> dict[float, PretrainOutcome]:
    """One autoencoder per beta; identical data, init and batch order."""
    specs = prepare(data, cfg.pipeline)
    out = {}
    for beta in cfg.betas:
        tcfg = TrainConfig(
            beta=beta, epochs=cfg.pretrain_epochs, batch_size=cfg.batch_size, seed=seed, per_band=cfg.per_band
        )
        params, log = pretrain(specs, cfg.arch, tcfg, cfg.pipeline)
        out[beta] = PretrainOutcome(beta, params, log)
    return out


@dataclass
class SeedOutcome:
    seed: int
    pretrained: dict[float, PretrainOutcome]
    sweep: SweepResult

    def acc_at(self, beta: float, snr_db: float, cfg: ProtocolConfig) -> float:
        return self.sweep.at(cfg.label(beta), snr_db)


def run_seed(cfg: ProtocolConfig, seed: int, threads: int = 1) -> SeedOutcome:
    data = synth_for_seed(cfg, seed)
    specs = prepare(data, cfg.pipeline)
    pre = pretrain_all(cfg, specs, seed)
    heads = {}
    ccfg = TrainConfig(
        stage="classifier",
        epochs=cfg.classifier_epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.classifier_lr,
        seed=seed,
        snr_grid=cfg.snr_grid,
        noise_realizations=cfg.noise_realizations,
    )
    for beta, outcome in pre.items():
        params, _ = train_classifier(specs, outcome.params, cfg.arch, ccfg, cfg.pipeline)
        heads[cfg.label(beta)] = HybridNet(cfg.arch, params)
    sweep = eval_snr_sweep(heads, data, ccfg, cfg.pipeline, threads=threads)
    return SeedOutcome(seed, pre, sweep)


def summary_csv(cfg: ProtocolConfig, outcomes: list[SeedOutcome]) -> str:
    lines = ["seed,model,snr_db,acc_mean,acc_std"]
    for o in outcomes:
        for beta in cfg.betas:
            name = cfg.label(beta)
            lines.append(f"{o.seed},{name},clean,{o.sweep.clean[name]!r},0.0")
            for s, m, sd in zip(o.sweep.snr_db, o.sweep.mean(name), o.sweep.std(name)):
                lines.append(f"{o.seed},{name},{s!r},{float(m)!r},{float(sd)!r}")
    return "\n".join(lines) + "\n"


def wins(cfg: ProtocolConfig, outcomes: list[SeedOutcome], snr_db: float, a: float, b: float) -> int:
    """Seeds where beta ``b`` scores at least as well as beta ``a`` at ``snr_db``."""
    return int(sum(o.acc_at(b, snr_db, cfg) >= o.acc_at(a, snr_db, cfg) for o in outcomes))


def paired_difference(cfg: ProtocolConfig, outcomes: list[SeedOutcome], snr_db: float, a: float, b: float) -> np.ndarray:
    return np.array([o.acc_at(b, snr_db, cfg) - o.acc_at(a, snr_db, cfg) for o in outcomes])
