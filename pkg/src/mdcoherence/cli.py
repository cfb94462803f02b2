"""``mdl`` command line: synth, pretrain, train-cls, eval-snr, confusion, gradcheck, cadence, report.

On failure a single line ``error: <Category>: <message>`` goes to stderr and the
exit code identifies the category (2 config, 3 io, 4 diverged, 5 invalid spec, 1 other).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from mdcoherence.config import RunConfig
from mdcoherence.errors import ConfigError, DegenerateVariance, IoError, MdlError
from mdcoherence.model import HybridNet
from mdcoherence.objective import LossConfig, gradcheck
from mdcoherence.plots import line_plot
from mdcoherence.synth import Dataset, IqSeries, dataset_from_config
from mdcoherence.tensorfile import load_checkpoint, read_tensor, save_checkpoint, write_tensor
from mdcoherence.tfr import cadence_map, spectrogram_pipeline
from mdcoherence import trainer

log = logging.getLogger("mdcoherence")

MANIFEST = "manifest.csv"


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror or e}") from e


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create output directory {path}: {e.strerror or e}") from e
    if not os.access(path, os.W_OK):
        raise IoError(f"output directory {path} is not writable")
    return path


# -- dataset on disk ---------------------------------------------------------------


def write_dataset(ds: Dataset, out_dir: Path) -> Path:
    out_dir = _ensure_dir(out_dir)
    _ensure_dir(out_dir / "samples")
    rows = ["path,label,split"]
    for i, (x, label, split) in enumerate(zip(ds.iq, ds.labels, ds.split)):
        rel = f"samples/sample_{i:05d}.mdt"
        write_tensor(out_dir / rel, x.samples)
        rows.append(f"{rel},{int(label)},{split}")
    manifest = out_dir / MANIFEST
    _write_text(manifest, "\n".join(rows) + "\n")
    return manifest


def read_dataset(data_dir: Path, sample_rate_hz: float, n_classes: int) -> Dataset:
    manifest = Path(data_dir) / MANIFEST
    try:
        with manifest.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise IoError(f"cannot read manifest {manifest}: {e.strerror or e}") from e
    iq, labels, split = [], [], []
    for row in rows:
        iq.append(IqSeries(read_tensor(Path(data_dir) / row["path"]), sample_rate_hz))
        labels.append(int(row["label"]))
        split.append(row["split"])
    return Dataset(iq, np.asarray(labels, dtype=np.int64), np.asarray(split), n_classes)


def _coupling_text(mlog: trainer.MetricsLog) -> str:
    try:
        return f"{trainer.loss_coupling(mlog):.4f}"
    except (ValueError, DegenerateVariance) as e:
        return f"n/a ({e})"


def _dataset(cfg: RunConfig) -> Dataset:
    cfg.require("paths.data")
    return read_dataset(cfg["paths.data"], cfg["synth.sample_rate_hz"], cfg["synth.n_classes"])


# -- subcommands --------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, out: Path, threads: int) -> int:
    ds = dataset_from_config(cfg.synth(), min_samples=cfg.pipeline().min_samples())
    manifest = write_dataset(ds, out)
    _write_text(out / "config.cfg", cfg.dump())
    print(f"wrote {len(ds)} samples, manifest {manifest}")
    return 0


def cmd_pretrain(cfg: RunConfig, out: Path, threads: int) -> int:
    ds = _dataset(cfg)
    arch, tcfg = cfg.arch(), cfg.train("pretrain")
    params, mlog = trainer.pretrain(ds, arch, tcfg, cfg.pipeline())
    _ensure_dir(out)
    save_checkpoint(out / "checkpoint.mdt", params, arch, {"stage": "pretrain", "beta": tcfg.beta, "seed": tcfg.seed})
    _write_text(out / "metrics.csv", mlog.to_csv())
    steps = mlog.column("step")
    _write_text(
        out / "loss_curves.svg",
        line_plot(
            {"mse": (steps, mlog.column("mse")), "mud": (steps, mlog.column("mud"))},
            f"autoencoding losses, beta={tcfg.beta:g}",
            "update",
            "loss",
            logy=True,
        ),
    )
    print(f"pretrain beta={tcfg.beta:g}: final mse={mlog.records[-1]['mse']:.6g} mud={mlog.records[-1]['mud']:.6g}"
          f" coupling={_coupling_text(mlog)} best_step={trainer.best_step(mlog)}")
    return 0


def cmd_train_cls(cfg: RunConfig, out: Path, threads: int) -> int:
    cfg.require("paths.pretrained")
    ds = _dataset(cfg)
    pretrained, arch = load_checkpoint(cfg["paths.pretrained"])
    tcfg = cfg.train("classifier")
    params, mlog = trainer.train_classifier(ds, pretrained, arch, tcfg, cfg.pipeline())
    _ensure_dir(out)
    save_checkpoint(out / "checkpoint.mdt", params, arch, {"stage": "classifier", "seed": tcfg.seed})
    _write_text(out / "metrics.csv", mlog.to_csv())
    vrec = [r for r in mlog.records if r["val_loss"] is not None]
    _write_text(
        out / "val_curve.svg",
        line_plot({"val_loss": ([r["step"] for r in vrec], [r["val_loss"] for r in vrec])},
                  "classifier validation loss", "update", "cross-entropy"),
    )
    best = trainer.best_step(mlog)
    net = HybridNet(arch, params)
    y_te, l_te = trainer.prepare(ds, cfg.pipeline()).part("test")
    _, acc = trainer.evaluate_classifier(net, y_te, l_te)
    print(f"classifier: best_step={best} best_val={min(r['val_loss'] for r in vrec):.5f} clean_test_acc={acc:.4f}")
    return 0


def cmd_eval_snr(cfg: RunConfig, out: Path, threads: int) -> int:
    cfg.require("paths.model_a", "paths.model_b")
    ds = _dataset(cfg)
    models = {}
    for key, label in (("paths.model_a", cfg["eval.label_a"]), ("paths.model_b", cfg["eval.label_b"])):
        params, arch = load_checkpoint(cfg[key])
        models[label] = HybridNet(arch, params)
    if len(models) != 2:
        raise ConfigError("eval.label_a and eval.label_b must differ", key="eval.label_b")
    res = trainer.eval_snr_sweep(models, ds, cfg.train("classifier"), cfg.pipeline(), cfg["eval.split"], threads)
    _ensure_dir(out)
    _write_text(out / "sweep.csv", res.to_csv())
    _write_text(
        out / "sweep.svg",
        line_plot({k: (res.snr_db, res.mean(k)) for k in models}, "accuracy vs SNR", "SNR (dB)", "accuracy"),
    )
    for k in models:
        print(f"{k}: clean={res.clean[k]:.4f} " + " ".join(f"{s:g}dB={m:.4f}" for s, m in zip(res.snr_db, res.mean(k))))
    return 0


def cmd_confusion(cfg: RunConfig, out: Path, threads: int) -> int:
    cfg.require("paths.model")
    ds = _dataset(cfg)
    params, arch = load_checkpoint(cfg["paths.model"])
    cm = trainer.confusion(
        HybridNet(arch, params), ds, cfg["eval.snr_db"], cfg["eval.noise_realizations"],
        cfg.pipeline(), cfg["seed"], cfg["eval.split"],
    )
    _ensure_dir(out)
    _write_text(out / "confusion.csv", cm.to_csv())
    print(f"confusion at {cfg['eval.snr_db']:g} dB: accuracy={cm.accuracy:.4f}")
    print(cm.counts)
    return 0


class GradcheckFailed(MdlError):
    pass


def cmd_gradcheck(cfg: RunConfig, out: Path, threads: int) -> int:
    loss = cfg.loss()
    shape = (cfg["gradcheck.rows"], cfg["gradcheck.cols"])
    rows = ["seed,max_rel_mse,max_rel_mud,max_rel_total,passed"]
    worst = 0.0
    failed = []
    for k in range(cfg["gradcheck.seeds"]):
        seed = cfg["seed"] + k
        rep = gradcheck(shape, loss, seed, cfg["gradcheck.h"], cfg["gradcheck.tolerance"])
        worst = max(worst, rep.max_rel["total"])
        rows.append(f"{seed},{rep.max_rel['mse']!r},{rep.max_rel['mud']!r},{rep.max_rel['total']!r},{int(rep.passed)}")
        if not rep.passed:
            failed.append(seed)
    _ensure_dir(out)
    _write_text(out / "gradcheck.csv", "\n".join(rows) + "\n")
    print("\n".join(rep.lines()))
    print(f"gradcheck over {cfg['gradcheck.seeds']} seeds: max relative error {worst:.3e}"
          f" (tolerance {cfg['gradcheck.tolerance']:g})")
    if failed:
        raise GradcheckFailed(f"seeds {failed} exceed tolerance")
    return 0


def cmd_cadence(cfg: RunConfig, out: Path, threads: int) -> int:
    cfg.require("paths.sample")
    x = IqSeries(read_tensor(cfg["paths.sample"]), cfg["synth.sample_rate_hz"])
    loss = cfg.loss()
    cmap = cadence_map(spectrogram_pipeline(x, cfg.pipeline()), loss.eps_mag, loss.per_band)
    _ensure_dir(out)
    write_tensor(out / "cadence.mdt", cmap.data)
    print(f"cadence map {cmap.data.shape[0]}x{cmap.data.shape[1]} sum={cmap.total:.12f}")
    return 0


def cmd_report(cfg: RunConfig, out: Path, threads: int) -> int:
    cfg.require("paths.runs")
    base = cfg.source.resolve().parent if cfg.source else Path(".")
    runs = [Path(r.strip()) for r in cfg["paths.runs"].split(",") if r.strip()]
    runs = [r if r.is_absolute() else base / r for r in runs]
    lines = ["# Run report", ""]
    mse_curves, mud_curves = {}, {}
    for run in runs:
        mpath = run / "metrics.csv"
        if mpath.exists():
            mlog = trainer.MetricsLog.from_csv(mpath.read_text())
            name = run.name
            lines.append(f"## {name}")
            if len(mlog.column("mse")):
                steps = [r["step"] for r in mlog.records if r["mse"] is not None]
                mse_curves[name] = (steps, mlog.column("mse"))
                mud_curves[name] = (steps, mlog.column("mud"))
                lines.append(f"- final mse: {mlog.column('mse')[-1]:.6g}")
                lines.append(f"- final mud: {mlog.column('mud')[-1]:.6g}")
                lines.append(f"- loss coupling (Pearson of per-update deltas): {_coupling_text(mlog)}")
            vals = mlog.column("val_loss")
            if len(vals):
                lines.append(f"- best validation loss: {vals.min():.6g} at step {trainer.best_step(mlog)}")
            lines.append("")
        spath = run / "sweep.csv"
        if spath.exists():
            lines += [f"## {run.name} (accuracy vs SNR)", "", "```", spath.read_text().strip(), "```", ""]
    if not mse_curves and len(lines) == 2:
        raise IoError(f"no metrics.csv or sweep.csv found in {', '.join(map(str, runs))}")
    _ensure_dir(out)
    _write_text(out / "report.md", "\n".join(lines) + "\n")
    if mse_curves:
        _write_text(out / "mse_curves.svg", line_plot(mse_curves, "reconstruction loss", "update", "mse", logy=True))
        _write_text(out / "mud_curves.svg", line_plot(mud_curves, "coherence loss", "update", "mud", logy=True))
    print(f"wrote {out / 'report.md'}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "train-cls": cmd_train_cls,
    "eval-snr": cmd_eval_snr,
    "confusion": cmd_confusion,
    "gradcheck": cmd_gradcheck,
    "cadence": cmd_cadence,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdl", description="micro-Doppler coherence loss workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value run configuration")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for evaluation sweeps")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("MDL_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.defaults()
        cfg.override_seed(args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1", key="--threads")
        # BLAS pinned to one thread so results do not depend on --threads
        with threadpool_limits(limits=1):
            return COMMANDS[args.command](cfg, args.out, args.threads)
    except MdlError as e:
        print(f"error: {e.category}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: IoError: {e}", file=sys.stderr)
        return IoError.exit_code
    except Exception as e:  # noqa: BLE001 - last resort, keep the one-line contract
        log.debug("unhandled", exc_info=True)
        print(f"error: Internal: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
