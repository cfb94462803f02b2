"""Reconstruction MSE, micro-Doppler coherence loss, and their analytic gradients.

All functions take complex ``(M, N)`` spectrograms (or ``(B, M, N)`` stacks for
the batch helpers). Gradients with respect to a complex output ``yhat`` are
returned as ``dJ/dRe(yhat) + 1j * dJ/dIm(yhat)``.

Backward chain for the coherence term, per sample::

    Z  = fft_t(yhat)                       (linear)
    a  = sqrt(|Z|^2 + eps^2)               (smoothed magnitude)
    Ch = a / sum(a)                        (unit-total normalization)
    L  = sum((C - Ch)^2) / (M N)

    dL/dCh = -2 (C - Ch) / (M N)
    dL/da  = (dL/dCh - sum(dL/dCh * Ch)) / sum(a)
    dL/dZ  = dL/da * Z / a
    dL/dyhat = M * ifft_t(dL/dZ)           (adjoint of the unnormalized DFT)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mdcoherence.errors import InvalidParameter, ShapeMismatch
from mdcoherence.tfr import DEFAULT_EPS_MAG, Spectrogram, cadence_array, smoothed_abs


@dataclass(frozen=True)
class LossConfig:
    beta: float = 4.0
    eps_mag: float = DEFAULT_EPS_MAG
    per_band: bool = False

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0:
            raise InvalidParameter(f"beta must be finite and >= 0, got {self.beta}")
        if not self.eps_mag > 0:
            raise InvalidParameter(f"eps_mag must be > 0, got {self.eps_mag}")


@dataclass
class LossBreakdown:
    mse: float = 0.0
    mud: float = 0.0
    per_band: np.ndarray = field(default_factory=lambda: np.zeros(0))
    total: float = 0.0

    def csv_row(self, step: int) -> str:
        return f"{step},{self.mse!r},{self.mud!r},{self.total!r}"


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    a = y.data if isinstance(y, Spectrogram) else np.asarray(y, dtype=np.complex128)
    b = yhat.data if isinstance(yhat, Spectrogram) else np.asarray(yhat, dtype=np.complex128)
    if a.shape != b.shape:
        raise ShapeMismatch(f"target {a.shape} vs output {b.shape}")
    if a.ndim < 2:
        raise ShapeMismatch(f"expected (..., M, N) arrays, got {a.shape}")
    return a, b


def _sq(z: np.ndarray) -> np.ndarray:
    return z.real**2 + z.imag**2


def mse_loss(y, yhat) -> float:
    a, b = _pair(y, yhat)
    return float(np.mean(_sq(a - b)))


def _per_band(c: np.ndarray, ch: np.ndarray) -> np.ndarray:
    # S[f_D] = (1/M) sum_fc (C - Ch)^2
    return np.mean((c - ch) ** 2, axis=-2)


def mud_loss(y, yhat, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    a, b = _pair(y, yhat)
    c = cadence_array(a, cfg.eps_mag, cfg.per_band)
    ch = cadence_array(b, cfg.eps_mag, cfg.per_band)
    s = _per_band(c, ch)
    mud = float(np.mean(s))
    return LossBreakdown(mse=0.0, mud=mud, per_band=s, total=cfg.beta * mud)


def total_objective(y, yhat, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    out = mud_loss(y, yhat, cfg)
    out.mse = mse_loss(y, yhat)
    out.total = out.mse + cfg.beta * out.mud
    return out


def _mse_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, n = a.shape[-2:]
    return -2.0 * (a - b) / (m * n)


def _mud_grad(a: np.ndarray, b: np.ndarray, cfg: LossConfig) -> np.ndarray:
    m, n = b.shape[-2:]
    axes = -2 if cfg.per_band else (-2, -1)
    c = cadence_array(a, cfg.eps_mag, cfg.per_band)
    z = np.fft.fft(b, axis=-2)
    mag = smoothed_abs(z, cfg.eps_mag)
    total = mag.sum(axis=axes, keepdims=True)
    ch = mag / total
    g_ch = -2.0 * (c - ch) / (m * n)
    g_mag = (g_ch - np.sum(g_ch * ch, axis=axes, keepdims=True)) / total
    g_z = g_mag * z / mag
    return m * np.fft.ifft(g_z, axis=-2)


def grad_terms(y, yhat, cfg: LossConfig = LossConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Separate gradients (dMSE/dyhat, dmud/dyhat), unweighted."""
    a, b = _pair(y, yhat)
    return _mse_grad(a, b), _mud_grad(a, b, cfg)


def grad_total(y, yhat, cfg: LossConfig = LossConfig()) -> np.ndarray:
    g_mse, g_mud = grad_terms(y, yhat, cfg)
    if cfg.beta == 0:
        return g_mse
    return g_mse + cfg.beta * g_mud


def batch_objective(y: np.ndarray, yhat: np.ndarray, cfg: LossConfig) -> tuple[LossBreakdown, np.ndarray]:
    """Batch-mean loss over ``(B, M, N)`` stacks and the gradient of that mean."""
    a, b = _pair(y, yhat)
    if a.ndim != 3:
        raise ShapeMismatch(f"expected (B, M, N), got {a.shape}")
    bsz = a.shape[0]
    c = cadence_array(a, cfg.eps_mag, cfg.per_band)
    ch = cadence_array(b, cfg.eps_mag, cfg.per_band)
    s = _per_band(c, ch)
    mse = float(np.mean(_sq(a - b)))
    mud = float(np.mean(s))
    loss = LossBreakdown(mse, mud, s.mean(axis=0), mse + cfg.beta * mud)
    grad = _mse_grad(a, b)
    if cfg.beta != 0:
        grad = grad + cfg.beta * _mud_grad(a, b, cfg)
    return loss, grad / bsz


def batch_losses(y: np.ndarray, yhat: np.ndarray, cfg: LossConfig) -> LossBreakdown:
    a, b = _pair(y, yhat)
    s = _per_band(cadence_array(a, cfg.eps_mag, cfg.per_band), cadence_array(b, cfg.eps_mag, cfg.per_band))
    mse = float(np.mean(_sq(a - b)))
    mud = float(np.mean(s))
    return LossBreakdown(mse, mud, s.reshape(-1, s.shape[-1]).mean(axis=0), mse + cfg.beta * mud)


# -- finite-difference verification -------------------------------------------------


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f, x: np.ndarray, h: float) -> np.ndarray:
    """Central differences of a real scalar ``f`` over every real/imag part of complex ``x``."""
    x = np.array(x, dtype=np.complex128)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        for unit in (1.0, 1j):
            flat[i] = orig + h * unit
            fp = f(x)
            flat[i] = orig - h * unit
            fm = f(x)
            gflat[i] += unit * (fp - fm) / (2 * h)
        flat[i] = orig
    return g


@dataclass
class GradcheckReport:
    shape: tuple[int, int]
    beta: float
    h: float
    tolerance: float
    max_rel: dict[str, float]
    mean_rel: dict[str, float]
    max_abs: dict[str, float]
    n_cells: int
    n_failed: int

    @property
    def passed(self) -> bool:
        return self.max_rel["total"] < self.tolerance

    def lines(self) -> list[str]:
        out = [f"gradcheck shape={self.shape} beta={self.beta} h={self.h} tol={self.tolerance}"]
        for term in ("mse", "mud", "total"):
            out.append(
                f"  {term:5s} max_rel={self.max_rel[term]:.3e} mean_rel={self.mean_rel[term]:.3e}"
                f" max_abs={self.max_abs[term]:.3e}"
            )
        out.append(f"  cells failing: {self.n_failed}/{self.n_cells} -> {'PASS' if self.passed else 'FAIL'}")
        return out


def _as_components(g: np.ndarray) -> np.ndarray:
    return np.concatenate([g.real.ravel(), g.imag.ravel()])


def gradcheck(
    shape: tuple[int, int] = (6, 6),
    cfg: LossConfig = LossConfig(),
    seed: int = 0,
    h: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradcheckReport:
    """Compare analytic gradients with central differences on a seeded random pair."""
    if not h > 0:
        raise InvalidParameter(f"finite-difference step must be > 0, got {h}")
    m, n = shape
    if m < 2 or n < 2:
        raise InvalidParameter(f"shape must be at least 2x2, got {shape}")
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    yhat = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))

    g_mse, g_mud = grad_terms(y, yhat, cfg)
    analytic = {"mse": g_mse, "mud": g_mud, "total": g_mse + cfg.beta * g_mud}
    fns = {
        "mse": lambda v: mse_loss(y, v),
        "mud": lambda v: mud_loss(y, v, cfg).mud,
    }
    numeric = {k: numeric_gradient(f, yhat, h) for k, f in fns.items()}
    numeric["total"] = numeric_gradient(lambda v: total_objective(y, v, cfg).total, yhat, h)

    max_rel, mean_rel, max_abs = {}, {}, {}
    n_failed = 0
    for term in ("mse", "mud", "total"):
        a = _as_components(analytic[term])
        f = _as_components(numeric[term])
        # the coherence gradient lives on a ~1/(MN)^2 scale; measure it relative to its own magnitude
        floor = 1e-6 * max(np.max(np.abs(f)), np.finfo(float).tiny)
        rel = relative_error(a, f, floor)
        max_rel[term] = float(rel.max())
        mean_rel[term] = float(rel.mean())
        max_abs[term] = float(np.max(np.abs(a - f)))
        if term == "total":
            n_failed = int(np.sum(rel >= tolerance))
    return GradcheckReport((m, n), cfg.beta, h, tolerance, max_rel, mean_rel, max_abs, 2 * m * n, n_failed)
