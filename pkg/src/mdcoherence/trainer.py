"""Two-stage protocol and evaluation harness.

Stage one pretrains the autoencoder on ``MSE + beta * mud``; stage two trains the
classifier head with cross-entropy only. Both keep the parameters of the epoch
with the lowest validation loss. Evaluation re-injects IQ-domain noise, reruns
the front end and reports accuracy per SNR and confusion matrices.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mdcoherence.errors import ArchMismatch, DegenerateVariance, DivergedTraining, EmptyDataset, InvalidSpec
from mdcoherence.model import ArchSpec, HybridNet, ModelParams, cross_entropy, param_layout
from mdcoherence.objective import LossConfig, batch_losses, batch_objective, relative_error
from mdcoherence.optim import make_optimizer
from mdcoherence.synth import Dataset, inject_noise
from mdcoherence.tfr import DEFAULT_EPS_MAG, PipelineConfig, batch_spectrograms, from_channels, to_channels

METRIC_FIELDS = ("step", "mse", "mud", "total", "ce", "val_loss", "acc")


@dataclass
class TrainConfig:
    stage: str = "pretrain"
    beta: float = 4.0
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    snr_grid: tuple[float, ...] = (10.0, 5.0, 0.0, -5.0, -10.0)
    noise_realizations: int = 16
    fine_tune: bool = False
    eps_mag: float = DEFAULT_EPS_MAG
    per_band: bool = False

    def validate(self) -> None:
        if self.stage not in ("pretrain", "classifier"):
            raise InvalidSpec(f"stage must be 'pretrain' or 'classifier', got {self.stage!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.noise_realizations < 1:
            raise InvalidSpec("epochs, batch_size and noise_realizations must be >= 1")
        if self.optimizer.lower() not in ("adam", "sgd"):
            raise InvalidSpec(f"optimizer must be adam or sgd, got {self.optimizer!r}")

    def loss_config(self) -> LossConfig:
        return LossConfig(beta=self.beta, eps_mag=self.eps_mag, per_band=self.per_band)


@dataclass
class MetricsLog:
    records: list[dict] = field(default_factory=list)

    def add(self, **values) -> dict:
        step = values["step"]
        if self.records and step <= self.records[-1]["step"]:
            raise ValueError(f"step {step} does not increase")
        for k, v in values.items():
            if v is not None and k != "step" and not math.isfinite(v):
                raise DivergedTraining(f"non-finite {k} at step {step}")
        rec = {k: values.get(k) for k in METRIC_FIELDS}
        # plain Python scalars so the CSV never carries numpy reprs
        rec = {k: None if v is None else (int(v) if k == "step" else float(v)) for k, v in rec.items()}
        self.records.append(rec)
        return rec

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records if r[name] is not None], dtype=float)

    def updates(self) -> list[dict]:
        return [r for r in self.records if r["total"] is not None or r["ce"] is not None]

    def to_csv(self) -> str:
        lines = [",".join(METRIC_FIELDS)]
        for r in self.records:
            lines.append(",".join("" if r[k] is None else str(r[k]) if k == "step" else repr(float(r[k])) for k in METRIC_FIELDS))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "MetricsLog":
        rows = text.strip().splitlines()
        header = rows[0].split(",")
        log = cls()
        for row in rows[1:]:
            vals = row.split(",")
            rec = {}
            for k, v in zip(header, vals):
                rec[k] = None if v == "" else (int(v) if k == "step" else float(v))
            log.add(**rec)
        return log


@dataclass
class SpectrogramSet:
    """Pipeline outputs for a dataset: complex ``(B, M, N)`` stack, labels, split tags."""

    y: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    n_classes: int

    def part(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        idx = np.flatnonzero(self.split == split)
        return self.y[idx], self.labels[idx]


def prepare(data: Dataset | SpectrogramSet, pipeline: PipelineConfig) -> SpectrogramSet:
    if isinstance(data, SpectrogramSet):
        return data
    if len(data) == 0:
        raise EmptyDataset("dataset has no samples")
    return SpectrogramSet(batch_spectrograms(data.iq, pipeline), data.labels, data.split, data.n_classes)


def _check_arch(arch: ArchSpec, y: np.ndarray) -> None:
    m, n = y.shape[-2:]
    if m != arch.input_side or n != arch.input_side:
        raise ArchMismatch(f"spectrograms are {m}x{n}, architecture expects {arch.input_side}x{arch.input_side}")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


def reconstruction_losses(net: HybridNet, y: np.ndarray, loss_cfg: LossConfig, batch_size: int = 64):
    """Dataset-mean (mse, mud, total) of the autoencoder, no gradients."""
    if len(y) == 0:
        raise EmptyDataset("no samples to evaluate")
    sums = np.zeros(3)
    for i in range(0, len(y), batch_size):
        yb = y[i : i + batch_size]
        out = batch_losses(yb, from_channels(net.reconstruct(to_channels(yb))), loss_cfg)
        sums += len(yb) * np.array([out.mse, out.mud, out.total])
    return tuple(sums / len(y))


def pretrain(
    data: Dataset | SpectrogramSet,
    arch: ArchSpec,
    cfg: TrainConfig,
    pipeline: PipelineConfig = PipelineConfig(),
) -> tuple[ModelParams, MetricsLog]:
    """Autoencoder stage. Logs mse and mud every update, whatever beta is."""
    cfg.validate()
    if cfg.stage != "pretrain":
        raise InvalidSpec("pretrain needs cfg.stage == 'pretrain'")
    data = prepare(data, pipeline)
    y_tr, _ = data.part("train")
    y_va, _ = data.part("val")
    if len(y_tr) == 0:
        raise EmptyDataset("training split is empty")
    _check_arch(arch, y_tr)
    loss_cfg = cfg.loss_config()
    rng = np.random.default_rng(cfg.seed)
    net = HybridNet(arch, seed=cfg.seed)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    log = MetricsLog()
    best_val, best_theta = math.inf, net.params.theta.copy()
    step = 0
    for _ in range(cfg.epochs):
        for idx in _batches(len(y_tr), cfg.batch_size, rng):
            yb = y_tr[idx]
            z = net.encode(to_channels(yb))
            yhat = from_channels(net.decode(z))
            loss, g = batch_objective(yb, yhat, loss_cfg)
            step += 1
            rec = log.add(step=step, mse=loss.mse, mud=loss.mud, total=loss.total)
            net.backward(d_yhat=to_channels(g))
            opt.step(net.params.theta, net.params.grad)
        val = reconstruction_losses(net, y_va if len(y_va) else y_tr, loss_cfg)[2]
        if not math.isfinite(val):
            raise DivergedTraining(f"non-finite validation loss after step {step}")
        rec["val_loss"] = val
        if val < best_val:
            best_val, best_theta = val, net.params.theta.copy()
    return ModelParams(net.params.layout, best_theta), log


def evaluate_classifier(net: HybridNet, y: np.ndarray, labels: np.ndarray, batch_size: int = 128) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) on a spectrogram stack."""
    if len(y) == 0:
        raise EmptyDataset("no samples to evaluate")
    logits = predict_logits(net, y, batch_size)
    ce, _ = cross_entropy(logits, labels)
    return ce, float(np.mean(logits.argmax(axis=1) == labels))


def predict_logits(net: HybridNet, y: np.ndarray, batch_size: int = 128) -> np.ndarray:
    out = [net.predict_logits(to_channels(y[i : i + batch_size])) for i in range(0, len(y), batch_size)]
    return np.concatenate(out)


def latents(net: HybridNet, y: np.ndarray, batch_size: int = 128) -> np.ndarray:
    return np.concatenate([net.encode(to_channels(y[i : i + batch_size])) for i in range(0, len(y), batch_size)])


def predict(net: HybridNet, y: np.ndarray) -> np.ndarray:
    return predict_logits(net, y).argmax(axis=1)


def train_classifier(
    data: Dataset | SpectrogramSet,
    pretrained: ModelParams,
    arch: ArchSpec,
    cfg: TrainConfig,
    pipeline: PipelineConfig = PipelineConfig(),
) -> tuple[ModelParams, MetricsLog]:
    """Cross-entropy stage. The encoder stays frozen unless ``cfg.fine_tune``."""
    cfg.validate()
    if [s for _, s in pretrained.layout] != [s for _, s in param_layout(arch)]:
        raise ArchMismatch("pretrained parameters do not match the architecture")
    data = prepare(data, pipeline)
    y_tr, l_tr = data.part("train")
    y_va, l_va = data.part("val")
    if len(y_tr) == 0:
        raise EmptyDataset("training split is empty")
    if len(y_va) == 0:
        y_va, l_va = y_tr, l_tr
    _check_arch(arch, y_tr)
    net = HybridNet(arch, pretrained.copy())
    mask = net.params.mask(("cls.", "enc.") if cfg.fine_tune else ("cls.",))
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    log = MetricsLog()
    # frozen encoder: latents are fixed, compute them once
    z_tr = None if cfg.fine_tune else latents(net, y_tr)
    val, acc = evaluate_classifier(net, y_va, l_va)
    log.add(step=0, val_loss=val, acc=acc)
    best_val, best_theta = val, net.params.theta.copy()
    step = 0
    for _ in range(cfg.epochs):
        for idx in _batches(len(y_tr), cfg.batch_size, rng):
            if z_tr is None:
                logits = net.predict_logits(to_channels(y_tr[idx]))
            else:
                logits = net.classify(z_tr[idx])
            ce, g = cross_entropy(logits, l_tr[idx])
            step += 1
            rec = log.add(step=step, ce=ce)
            net.backward(d_logits=g, through_encoder=z_tr is None)
            opt.step(net.params.theta, net.params.grad, mask)
        val, acc = evaluate_classifier(net, y_va, l_va)
        if not math.isfinite(val):
            raise DivergedTraining(f"non-finite validation loss after step {step}")
        rec["val_loss"], rec["acc"] = val, acc
        if val < best_val:
            best_val, best_theta = val, net.params.theta.copy()
    return ModelParams(net.params.layout, best_theta), log


def best_step(log: MetricsLog) -> int:
    """Step whose validation loss is lowest (first one on ties)."""
    recs = [r for r in log.records if r["val_loss"] is not None]
    if not recs:
        raise EmptyDataset("log has no validation records")
    return min(recs, key=lambda r: r["val_loss"])["step"]


# -- diagnostics --------------------------------------------------------------------


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("need two equal-length series with at least two points")
    da, db = a - a.mean(), b - b.mean()
    va, vb = float(np.sum(da * da)), float(np.sum(db * db))
    if va == 0 or vb == 0:
        raise DegenerateVariance("one of the series has zero variance")
    return float(np.sum(da * db) / math.sqrt(va * vb))


def loss_coupling(log: MetricsLog) -> float:
    """Pearson correlation of per-update changes in MSE and in the coherence loss."""
    ups = [r for r in log.records if r["mse"] is not None and r["mud"] is not None]
    if len(ups) < 3:
        raise ValueError(f"need >= 3 updates, got {len(ups)}")
    mse = np.array([r["mse"] for r in ups])
    mud = np.array([r["mud"] for r in ups])
    return pearson(np.diff(mse), np.diff(mud))


# -- noise evaluation ----------------------------------------------------------------


def noise_seed(base_seed: int, realization: int, sample: int) -> np.random.SeedSequence:
    # independent of the SNR value: one noise shape per (realization, sample), rescaled per SNR
    return np.random.SeedSequence([base_seed, realization, sample])


def noisy_spectrograms(
    data: Dataset, split: str, snr_db: float, realization: int, pipeline: PipelineConfig, base_seed: int
) -> np.ndarray:
    idx = data.indices(split)
    series = [inject_noise(data.iq[i], snr_db, noise_seed(base_seed, realization, int(i))) for i in idx]
    return batch_spectrograms(series, pipeline)


@dataclass
class SweepResult:
    snr_db: list[float]
    acc: dict[str, np.ndarray]  # model -> (n_snr, realizations)
    clean: dict[str, float]

    def mean(self, model: str) -> np.ndarray:
        return self.acc[model].mean(axis=1)

    def std(self, model: str) -> np.ndarray:
        return self.acc[model].std(axis=1)

    def at(self, model: str, snr_db: float) -> float:
        return float(self.mean(model)[self.snr_db.index(snr_db)])

    def to_csv(self) -> str:
        lines = ["snr_db,model,acc_mean,acc_std"]
        for name in self.acc:
            lines.append(f"clean,{name},{self.clean[name]!r},0.0")
            for s, m, sd in zip(self.snr_db, self.mean(name), self.std(name)):
                lines.append(f"{s!r},{name},{float(m)!r},{float(sd)!r}")
        return "\n".join(lines) + "\n"


def eval_snr_sweep(
    models: dict[str, HybridNet],
    data: Dataset,
    cfg: TrainConfig,
    pipeline: PipelineConfig = PipelineConfig(),
    split: str = "test",
    threads: int = 1,
) -> SweepResult:
    """Accuracy per SNR, per noise realization, for each model on identical noisy inputs."""
    cfg.validate()
    if not models:
        raise ValueError("no models to evaluate")
    arches = {m.arch for m in models.values()}
    if len(arches) != 1:
        raise ArchMismatch("models in a sweep must share an architecture")
    labels = data.labels[data.indices(split)]
    if labels.size == 0:
        raise EmptyDataset(f"split {split!r} is empty")
    clean_y = batch_spectrograms([data.iq[i] for i in data.indices(split)], pipeline)
    clean = {k: float(np.mean(predict(net, clean_y) == labels)) for k, net in models.items()}
    grid = [float(s) for s in cfg.snr_grid]
    jobs = [(si, r) for si in range(len(grid)) for r in range(cfg.noise_realizations)]

    def run(job):
        si, r = job
        y = noisy_spectrograms(data, split, grid[si], r, pipeline, cfg.seed)
        # separate nets per thread; HybridNet keeps forward state
        return {k: float(np.mean(predict(HybridNet(net.arch, net.params), y) == labels)) for k, net in models.items()}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    acc = {k: np.zeros((len(grid), cfg.noise_realizations)) for k in models}
    for (si, r), res in zip(jobs, results):
        for k, v in res.items():
            acc[k][si, r] = v
    return SweepResult(grid, acc, clean)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = truth, columns = prediction

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def to_csv(self) -> str:
        k = self.counts.shape[0]
        lines = ["truth," + ",".join(f"pred_{j}" for j in range(k))]
        for i in range(k):
            lines.append(f"{i}," + ",".join(str(int(c)) for c in self.counts[i]))
        return "\n".join(lines) + "\n"


def confusion_from_predictions(truth, pred, n_classes: int) -> ConfusionMatrix:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(truth), np.asarray(pred)), 1)
    return ConfusionMatrix(counts)


def confusion(
    net: HybridNet,
    data: Dataset,
    snr_db: float | None,
    realizations: int,
    pipeline: PipelineConfig = PipelineConfig(),
    seed: int = 0,
    split: str = "test",
) -> ConfusionMatrix:
    """Counts accumulated over noise realizations; ``snr_db=None`` means clean inputs."""
    idx = data.indices(split)
    if idx.size == 0:
        raise EmptyDataset(f"split {split!r} is empty")
    labels = data.labels[idx]
    truth, pred = [], []
    for r in range(realizations):
        if snr_db is None:
            y = batch_spectrograms([data.iq[i] for i in idx], pipeline)
        else:
            y = noisy_spectrograms(data, split, snr_db, r, pipeline, seed)
        truth.append(labels)
        pred.append(predict(net, y))
    return confusion_from_predictions(np.concatenate(truth), np.concatenate(pred), net.arch.n_classes)


# -- end-to-end gradient verification ----------------------------------------------

TINY_ARCH = ArchSpec(input_side=8, conv_layers=2, channels=(4, 8), latent_dim=8, n_classes=3, hidden=6)


def model_gradcheck(
    seed: int,
    arch: ArchSpec = TINY_ARCH,
    loss_cfg: LossConfig = LossConfig(),
    batch: int = 2,
    h: float = 1e-6,
    with_classifier: bool = False,
) -> tuple[float, int]:
    """Max relative error of backprop dJ/dtheta against central differences.

    J is the batch objective of decode(encode(x)) against x, optionally plus the
    cross-entropy of the classifier branch. Parameters (biases included) get a
    small seeded perturbation so no bias sits exactly at its init of zero.
    Returns (max relative error, number of parameters).
    """
    rng = np.random.default_rng(seed)
    net = HybridNet(arch, seed=seed)
    net.params.theta += 0.1 * rng.standard_normal(net.params.theta.size)
    x = rng.standard_normal((batch, arch.in_channels, arch.input_side, arch.input_side))
    y = from_channels(x)
    labels = rng.integers(0, arch.n_classes, size=batch)

    def objective(theta):
        net.params.theta[:] = theta
        z = net.encode(x)
        j = batch_objective(y, from_channels(net.decode(z)), loss_cfg)[0].total
        if with_classifier:
            j += cross_entropy(net.classify(z), labels)[0]
        return j

    theta0 = net.params.theta.copy()
    z = net.encode(x)
    _, g = batch_objective(y, from_channels(net.decode(z)), loss_cfg)
    d_logits = cross_entropy(net.classify(z), labels)[1] if with_classifier else None
    analytic = net.backward(d_yhat=to_channels(g), d_logits=d_logits).copy()
    numeric = np.zeros_like(theta0)
    for i in range(theta0.size):
        e = theta0.copy()
        e[i] += h
        fp = objective(e)
        e[i] -= 2 * h
        numeric[i] = (fp - objective(e)) / (2 * h)
    net.params.theta[:] = theta0
    rel = relative_error(analytic, numeric, 1e-6 * np.abs(numeric).max())
    return float(rel.max()), int(theta0.size)
