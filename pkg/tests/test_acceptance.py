"""Acceptance criteria, one printed pass/fail line each.

Runs under pytest (lines are repeated in the terminal summary) or directly:
``python3 tests/test_acceptance.py``.
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from mdcoherence.cli import main as cli_main  # noqa: E402
from mdcoherence.objective import LossConfig, gradcheck, mse_loss, mud_loss  # noqa: E402
from mdcoherence.protocol import ProtocolConfig, paired_difference, pretrain_all, run_seed, synth_for_seed, wins  # noqa: E402
from mdcoherence.synth import SynthConfig, dataset_from_config  # noqa: E402
from mdcoherence.tensorfile import decode_tensor, encode_tensor  # noqa: E402
from mdcoherence.tfr import PipelineConfig, batch_spectrograms, cadence_array, cadence_map, naive_cadence_map  # noqa: E402
from mdcoherence.trainer import TINY_ARCH, model_gradcheck  # noqa: E402

C7_SEEDS = 5


def report(tag: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    assert ok, line


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_c1_gradcheck_50_seeds():
    t = time.perf_counter()
    worst = max(gradcheck((6, 6), LossConfig(beta=4.0), seed, h=1e-5, tolerance=1e-4).max_rel["total"] for seed in range(50))
    dt = time.perf_counter() - t
    report("C1 gradcheck 6x6 beta=4 h=1e-5, 50 seeds", worst < 1e-4 and dt < 10,
           f"max rel err {worst:.3e} (< 1e-4), {dt:.2f}s (< 10s)")


def test_c2_cadence_normalization():
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    dev_random = max(abs(cadence_map(crandn(rng, *rng.integers(2, 33, size=2))).total - 1.0) for _ in range(200))
    pipe = PipelineConfig()
    data = dataset_from_config(SynthConfig(), pipe.min_samples())
    sums = cadence_array(batch_spectrograms(data.iq, pipe)).sum(axis=(-2, -1))
    dev_synth = float(np.max(np.abs(sums - 1.0)))
    dt = time.perf_counter() - t
    ok = dev_random <= 1e-9 and dev_synth <= 1e-9 and dt < 5
    report("C2 cadence maps sum to 1", ok,
           f"max |sum-1| random(200) {dev_random:.1e}, synthetic({len(sums)}) {dev_synth:.1e} (<= 1e-9), {dt:.2f}s (< 5s)")


def test_c3_invariance_suite():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    m = 32
    worst, min_mse = 0.0, np.inf
    for _ in range(20):
        y = crandn(rng, m, m)
        worst = max(worst, mud_loss(y, y).mud)
        for a in (0.5, 2.0, 7.0):
            worst = max(worst, mud_loss(y, a * y).mud)
        for k in (1, 5, m // 2):
            shifted = np.roll(y, k, axis=0)
            worst = max(worst, mud_loss(y, shifted).mud)
            min_mse = min(min_mse, mse_loss(y, shifted))
    dt = time.perf_counter() - t
    ok = worst <= 1e-9 and min_mse > 0 and dt < 5
    report("C3 invariances (identity, scale 0.5/2/7, shifts 1/5/M/2)", ok,
           f"max mud {worst:.1e} (<= 1e-9), min shifted mse {min_mse:.3f} (> 0), {dt:.2f}s (< 5s)")


def test_c4_fft_vs_naive_dft():
    t = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        y = crandn(np.random.default_rng(seed), 8, 8)
        worst = max(worst, float(np.max(np.abs(cadence_map(y).data - naive_cadence_map(y)))))
    dt = time.perf_counter() - t
    report("C4 FFT cadence map vs naive DFT, 8x8, 100 seeds", worst < 1e-10 and dt < 10,
           f"max abs diff {worst:.1e} (< 1e-10), {dt:.2f}s (< 10s)")


def test_c5_model_gradient():
    t = time.perf_counter()
    rels = [model_gradcheck(seed, TINY_ARCH)[0] for seed in range(10)]
    dt = time.perf_counter() - t
    report("C5 model dJ/dtheta vs central FD, 8x8 input, 2 conv layers, 10 seeds", max(rels) < 1e-3 and dt < 60,
           f"max rel err {max(rels):.2e} (< 1e-3), {dt:.1f}s (< 60s)")


def test_c6_protocol_smoke():
    t = time.perf_counter()
    cfg = ProtocolConfig(pretrain_epochs=30)
    data = synth_for_seed(cfg, 0)
    assert len(data) == 300 and data.n_classes == 3
    runs = pretrain_all(cfg, data, seed=0)
    b0, b4 = runs[0.0], runs[4.0]
    dt = time.perf_counter() - t
    dec = all(r.last["total"] < r.first["total"] for r in (b0, b4))
    ok_b = b4.last["mud"] <= b0.last["mud"]
    rho0, rho4 = b0.coupling, b4.coupling
    ok_c = np.isfinite(rho0) and np.isfinite(rho4)
    detail = (
        f"(a) total {b0.first['total']:.3e}->{b0.last['total']:.3e} (beta=0), "
        f"{b4.first['total']:.3e}->{b4.last['total']:.3e} (beta=4); "
        f"(b) final mud beta=4 {b4.last['mud']:.3e} <= beta=0 {b0.last['mud']:.3e}; "
        f"(c) loss_coupling beta=0 {rho0:.4f}, beta=4 {rho4:.4f}; {dt:.0f}s (< 300s)"
    )
    report("C6 protocol smoke run, 300 samples, 32x32, 30 epochs", dec and ok_b and ok_c and dt < 300, detail)


def test_c7_snr_sweep_comparison():
    t = time.perf_counter()
    cfg = ProtocolConfig(noise_realizations=16)
    outcomes = [run_seed(cfg, seed) for seed in range(C7_SEEDS)]
    dt = time.perf_counter() - t
    for o in outcomes:
        accs = " ".join(f"{o.acc_at(b, -5.0, cfg):.3f}" for b in cfg.betas)
        clean = " ".join(f"{o.sweep.clean[cfg.label(b)]:.3f}" for b in cfg.betas)
        print(f"    seed {o.seed}: clean(beta=0, beta=4) {clean}; -5 dB {accs}")
    n_win = wins(cfg, outcomes, -5.0, 0.0, 4.0)
    diff = paired_difference(cfg, outcomes, -5.0, 0.0, 4.0)
    min_clean = min(o.sweep.clean[cfg.label(b)] for o in outcomes for b in cfg.betas)
    ok = n_win > C7_SEEDS / 2 and min_clean >= 0.9 and dt < 600
    report(
        "C7 SNR sweep, beta=4 vs beta=0 at -5 dB",
        ok,
        f"beta=4 >= beta=0 in {n_win}/{C7_SEEDS} seeds (need majority), mean paired diff {diff.mean():+.3f} "
        f"(sd {diff.std(ddof=1):.3f}); min clean acc {min_clean:.3f} (>= 0.9); {dt:.0f}s (< 600s)",
    )


C8_CONFIG = """seed = 4
synth.n_per_class = 12
arch.channels = 4,8,8,16
arch.latent_dim = 32
arch.hidden = 16
pretrain.epochs = 3
classifier.epochs = 3
eval.noise_realizations = 3
gradcheck.seeds = 5
paths.data = data
paths.pretrained = pre/checkpoint.mdt
paths.model = cls/checkpoint.mdt
paths.model_a = cls/checkpoint.mdt
paths.model_b = cls/checkpoint.mdt
paths.sample = data/samples/sample_00000.mdt
"""


def _run_all(root: Path, threads: int) -> None:
    cfg = str(root / "run.cfg")
    for cmd, out in (("synth", "data"), ("pretrain", "pre"), ("train-cls", "cls"), ("eval-snr", "sweep"),
                     ("confusion", "conf"), ("gradcheck", "gc")):
        assert cli_main([cmd, "--config", cfg, "--out", str(root / out), "--threads", str(threads)]) == 0


def test_c8_reproducible_csvs(tmp_path):
    roots = [tmp_path / "a", tmp_path / "b"]
    for root, threads in zip(roots, (1, 2)):
        root.mkdir()
        (root / "run.cfg").write_text(C8_CONFIG)
        _run_all(root, threads)
    csvs = sorted(p.relative_to(roots[0]) for p in roots[0].rglob("*.csv"))
    same = [(roots[0] / p).read_bytes() == (roots[1] / p).read_bytes() for p in csvs]
    report("C8 rerun with same config gives byte-identical CSVs", len(csvs) >= 6 and all(same),
           f"{sum(same)}/{len(csvs)} CSVs identical ({', '.join(map(str, csvs))}); second run used --threads 2")


def test_c9_tensorfile_roundtrip():
    t = time.perf_counter()
    rng = np.random.default_rng(9)
    dtypes = (np.float32, np.float64, np.complex64, np.complex128)
    bad = 0
    for i in range(100):
        shape = tuple(rng.integers(0, 7, size=rng.integers(0, 5)))
        for dt in dtypes:
            x = rng.standard_normal(shape).astype(dt)
            if np.iscomplexobj(x):
                x = x + 1j * rng.standard_normal(shape).astype(dt)
            y = decode_tensor(encode_tensor(x))
            bad += not (y.dtype == x.dtype and y.shape == x.shape and y.tobytes() == x.tobytes())
    dt_s = time.perf_counter() - t
    report("C9 tensor file round trip, 4 dtypes x 100 shapes", bad == 0 and dt_s < 5,
           f"{400 - bad}/400 bit-exact, {dt_s:.2f}s (< 5s)")


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_c"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
