"""Small hybrid network in plain numpy: conv encoder -> latent code, with a
transposed-conv decoder branch and a two-layer classifier branch.

Every conv layer uses kernel 3, stride 2, padding 1, so each layer halves (encoder)
or doubles (decoder) the spatial side. Parameters live in one flat float64 vector
so optimizers, freezing and checkpoints all work on a single array.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from mdcoherence.errors import ArchMismatch, InvalidSpec, NoForwardState, ShapeMismatch

KERNEL = 3
STRIDE = 2
PAD = 1


@dataclass(frozen=True)
class ArchSpec:
    input_side: int = 32
    in_channels: int = 2
    conv_layers: int = 4
    channels: tuple[int, ...] = (8, 16, 32, 64)
    latent_dim: int = 128
    n_classes: int = 3
    hidden: int = 64
    kernel: int = KERNEL
    stride: int = STRIDE
    leak: float = 0.01
    # fixed input multiplier / output divisor; 0 means input_side, which maps
    # unit-energy spectrograms to roughly unit-RMS activations
    io_gain: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    def validate(self) -> None:
        if self.kernel != KERNEL or self.stride != STRIDE:
            raise InvalidSpec("kernel=3 and stride=2 are fixed")
        if self.conv_layers < 1 or len(self.channels) != self.conv_layers:
            raise InvalidSpec(f"need one channel count per conv layer, got {self.channels} for {self.conv_layers}")
        if self.input_side % (2**self.conv_layers):
            raise InvalidSpec(f"input_side {self.input_side} not divisible by 2^{self.conv_layers}")
        if min(self.latent_dim, self.n_classes, self.hidden, self.in_channels, *self.channels) < 1:
            raise InvalidSpec("all widths must be positive")

    @property
    def gain(self) -> float:
        return float(self.io_gain) if self.io_gain > 0 else float(self.input_side)

    @property
    def bottleneck_side(self) -> int:
        return self.input_side // 2**self.conv_layers

    @property
    def flat_dim(self) -> int:
        return self.channels[-1] * self.bottleneck_side**2

    def spatial_sides(self) -> list[int]:
        return [self.input_side // 2**i for i in range(self.conv_layers + 1)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(**{**d, "channels": tuple(d["channels"])})


def param_layout(arch: ArchSpec) -> list[tuple[str, tuple[int, ...]]]:
    arch.validate()
    layout = []
    cin = arch.in_channels
    for i, cout in enumerate(arch.channels):
        layout += [(f"enc.conv{i}.w", (cout, cin, KERNEL, KERNEL)), (f"enc.conv{i}.b", (cout,))]
        cin = cout
    layout += [("enc.dense.w", (arch.latent_dim, arch.flat_dim)), ("enc.dense.b", (arch.latent_dim,))]
    layout += [("dec.dense.w", (arch.flat_dim, arch.latent_dim)), ("dec.dense.b", (arch.flat_dim,))]
    outs = list(reversed(arch.channels[:-1])) + [arch.in_channels]
    cin = arch.channels[-1]
    for i, cout in enumerate(outs):
        # transposed conv weights are (C_in, C_out, k, k)
        layout += [(f"dec.tconv{i}.w", (cin, cout, KERNEL, KERNEL)), (f"dec.tconv{i}.b", (cout,))]
        cin = cout
    layout += [("cls.fc1.w", (arch.hidden, arch.latent_dim)), ("cls.fc1.b", (arch.hidden,))]
    layout += [("cls.fc2.w", (arch.n_classes, arch.hidden)), ("cls.fc2.b", (arch.n_classes,))]
    return layout


@dataclass
class ModelParams:
    """Flat parameter vector with named views and a matching gradient vector."""

    layout: list[tuple[str, tuple[int, ...]]]
    theta: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        size = sum(int(np.prod(s)) for _, s in self.layout)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (size,):
            raise ShapeMismatch(f"layout needs {size} parameters, got {self.theta.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.theta)
        self._slices = {}
        off = 0
        for name, shape in self.layout:
            n = int(np.prod(shape))
            self._slices[name] = (off, off + n, shape)
            off += n

    @classmethod
    def zeros(cls, arch: ArchSpec) -> "ModelParams":
        layout = param_layout(arch)
        return cls(layout, np.zeros(sum(int(np.prod(s)) for _, s in layout)))

    @classmethod
    def init(cls, arch: ArchSpec, seed: int) -> "ModelParams":
        """Fan-in scaled uniform weights (He bound sqrt(6 / fan_in)), zero biases."""
        p = cls.zeros(arch)
        rng = np.random.default_rng(seed)
        for name, shape in p.layout:
            if name.endswith(".b"):
                continue
            if ".tconv" in name:
                fan_in = shape[0] * KERNEL * KERNEL / STRIDE**2
            else:
                fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            p[name] = rng.uniform(-bound, bound, size=shape)
        return p

    def __getitem__(self, name: str) -> np.ndarray:
        a, b, shape = self._slices[name]
        return self.theta[a:b].reshape(shape)

    def __setitem__(self, name: str, value) -> None:
        a, b, shape = self._slices[name]
        self.theta[a:b] = np.broadcast_to(np.asarray(value, dtype=np.float64), shape).ravel()

    def grad_view(self, name: str) -> np.ndarray:
        a, b, shape = self._slices[name]
        return self.grad[a:b].reshape(shape)

    def names(self) -> list[str]:
        return [n for n, _ in self.layout]

    def slice_of(self, name: str) -> slice:
        a, b, _ = self._slices[name]
        return slice(a, b)

    def mask(self, prefixes: tuple[str, ...]) -> np.ndarray:
        """Boolean mask over theta selecting parameters whose names start with any prefix."""
        m = np.zeros(self.theta.size, dtype=bool)
        for name in self.names():
            if name.startswith(prefixes):
                m[self.slice_of(name)] = True
        return m

    def copy(self) -> "ModelParams":
        return ModelParams(self.layout, self.theta.copy(), self.grad.copy())


# -- layer primitives -------------------------------------------------------------


def im2col(x: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B, C*9, Ho*Wo) patches for a k=3, s=2, p=1 convolution."""
    b, c, h, w = x.shape
    ho, wo = (h + 2 * PAD - KERNEL) // STRIDE + 1, (w + 2 * PAD - KERNEL) // STRIDE + 1
    xp = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    cols = np.empty((b, c, KERNEL, KERNEL, ho, wo), dtype=x.dtype)
    for i in range(KERNEL):
        for j in range(KERNEL):
            cols[:, :, i, j] = xp[:, :, i : i + STRIDE * ho : STRIDE, j : j + STRIDE * wo : STRIDE]
    return cols.reshape(b, c * KERNEL * KERNEL, ho * wo)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patches back into a (B, C, H, W) image."""
    b, c, h, w = shape
    ho, wo = (h + 2 * PAD - KERNEL) // STRIDE + 1, (w + 2 * PAD - KERNEL) // STRIDE + 1
    cols = cols.reshape(b, c, KERNEL, KERNEL, ho, wo)
    xp = np.zeros((b, c, h + 2 * PAD, w + 2 * PAD), dtype=cols.dtype)
    for i in range(KERNEL):
        for j in range(KERNEL):
            xp[:, :, i : i + STRIDE * ho : STRIDE, j : j + STRIDE * wo : STRIDE] += cols[:, :, i, j]
    return xp[:, :, PAD : PAD + h, PAD : PAD + w]


def _flat_cols(t: np.ndarray) -> np.ndarray:
    # (B, K, L) -> (K, B*L)
    return t.transpose(1, 0, 2).reshape(t.shape[1], -1)


def leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def leaky_grad(pre: np.ndarray, g: np.ndarray, slope: float) -> np.ndarray:
    return np.where(pre > 0, g, slope * g)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(np.mean(logp[np.arange(n), labels]))
    g = np.exp(logp)
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


# -- the network ------------------------------------------------------------------


class HybridNet:
    """Encoder/decoder/classifier over ``(B, 2, S, S)`` real tensors.

    ``encode``, ``decode`` and ``classify`` record what ``backward`` needs; a
    backward call does not consume that state.
    """

    def __init__(self, arch: ArchSpec, params: ModelParams | None = None, seed: int = 0):
        arch.validate()
        self.arch = arch
        self.params = params if params is not None else ModelParams.init(arch, seed)
        if [s for _, s in self.params.layout] != [s for _, s in param_layout(arch)]:
            raise ArchMismatch("parameter layout does not match architecture")
        self._enc = None
        self._dec = None
        self._cls = None

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        a = self.arch
        want = (a.in_channels, a.input_side, a.input_side)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != want:
            raise ShapeMismatch(f"expected (B, {want[0]}, {want[1]}, {want[2]}), got {x.shape}")
        return x

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        p, a = self.params, self.arch
        acts = []
        h = x * a.gain
        for i in range(a.conv_layers):
            cols = im2col(h)
            w = p[f"enc.conv{i}.w"]
            pre = w.reshape(w.shape[0], -1) @ cols + p[f"enc.conv{i}.b"][:, None]
            side = a.input_side // 2 ** (i + 1)
            pre = pre.reshape(h.shape[0], w.shape[0], side, side)
            acts.append((h.shape, cols, pre))
            h = leaky(pre, a.leak)
        flat = h.reshape(h.shape[0], -1)
        z = flat @ p["enc.dense.w"].T + p["enc.dense.b"]
        self._enc = (acts, flat)
        return z

    def decode(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        p, a = self.params, self.arch
        if z.shape[1] != a.latent_dim:
            raise ShapeMismatch(f"latent width {z.shape[1]} != {a.latent_dim}")
        bsz = z.shape[0]
        pre0 = z @ p["dec.dense.w"].T + p["dec.dense.b"]
        h = leaky(pre0, a.leak).reshape(bsz, a.channels[-1], a.bottleneck_side, a.bottleneck_side)
        acts = []
        n_t = a.conv_layers
        for i in range(n_t):
            w = p[f"dec.tconv{i}.w"]
            cin, cout = w.shape[:2]
            side = h.shape[-1] * 2
            xin = h.reshape(bsz, cin, -1)
            cols = w.reshape(cin, -1).T @ xin
            pre = col2im(cols, (bsz, cout, side, side)) + p[f"dec.tconv{i}.b"][None, :, None, None]
            acts.append((xin, pre))
            h = leaky(pre, a.leak) if i < n_t - 1 else pre
        self._dec = (z, pre0, acts)
        return h / a.gain

    def classify(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        p = self.params
        pre = z @ p["cls.fc1.w"].T + p["cls.fc1.b"]
        hid = leaky(pre, self.arch.leak)
        logits = hid @ p["cls.fc2.w"].T + p["cls.fc2.b"]
        self._cls = (z, pre, hid)
        return logits

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(x))

    def predict_logits(self, x: np.ndarray) -> np.ndarray:
        return self.classify(self.encode(x))

    def backward(
        self,
        d_yhat: np.ndarray | None = None,
        d_logits: np.ndarray | None = None,
        through_encoder: bool = True,
    ) -> np.ndarray:
        """Reverse-mode gradients for all parameters; fills and returns ``params.grad``.

        With ``through_encoder=False`` the encoder slices are left at zero and no
        recorded ``encode`` is needed (the latent was supplied directly).
        """
        if d_yhat is None and d_logits is None:
            raise ValueError("need an upstream gradient for the reconstruction and/or the logits")
        if through_encoder and self._enc is None:
            raise NoForwardState("backward called before encode")
        p, a = self.params, self.arch
        p.grad[:] = 0.0
        dz = 0.0
        if d_yhat is not None:
            if self._dec is None:
                raise NoForwardState("no recorded decode for a reconstruction gradient")
            dz = dz + self._backward_decoder(np.asarray(d_yhat, dtype=np.float64))
        if d_logits is not None:
            if self._cls is None:
                raise NoForwardState("no recorded classify for a logits gradient")
            z, pre, hid = self._cls
            g = np.atleast_2d(d_logits)
            p.grad_view("cls.fc2.w")[:] = g.T @ hid
            p.grad_view("cls.fc2.b")[:] = g.sum(axis=0)
            g = leaky_grad(pre, g @ p["cls.fc2.w"], a.leak)
            p.grad_view("cls.fc1.w")[:] = g.T @ z
            p.grad_view("cls.fc1.b")[:] = g.sum(axis=0)
            dz = dz + g @ p["cls.fc1.w"]
        if through_encoder:
            self._backward_encoder(dz)
        return p.grad

    def _backward_decoder(self, g: np.ndarray) -> np.ndarray:
        p, a = self.params, self.arch
        z, pre0, acts = self._dec
        bsz = z.shape[0]
        if g.shape != acts[-1][1].shape:
            raise ShapeMismatch(f"reconstruction gradient shape {g.shape} != {acts[-1][1].shape}")
        g = g / a.gain
        n_t = len(acts)
        for i in reversed(range(n_t)):
            xin, pre = acts[i]
            if i < n_t - 1:
                g = leaky_grad(pre, g, a.leak)
            w = p[f"dec.tconv{i}.w"]
            cin = w.shape[0]
            p.grad_view(f"dec.tconv{i}.b")[:] = g.sum(axis=(0, 2, 3))
            dcols = im2col(g)
            p.grad_view(f"dec.tconv{i}.w")[:] = (_flat_cols(xin) @ _flat_cols(dcols).T).reshape(w.shape)
            g = (w.reshape(cin, -1) @ dcols).reshape(bsz, cin, *(s // 2 for s in g.shape[2:]))
        g = leaky_grad(pre0, g.reshape(bsz, -1), a.leak)
        p.grad_view("dec.dense.w")[:] = g.T @ z
        p.grad_view("dec.dense.b")[:] = g.sum(axis=0)
        return g @ p["dec.dense.w"]

    def _backward_encoder(self, dz) -> None:
        p, a = self.params, self.arch
        acts, flat = self._enc
        dz = np.broadcast_to(dz, (flat.shape[0], a.latent_dim))
        p.grad_view("enc.dense.w")[:] = dz.T @ flat
        p.grad_view("enc.dense.b")[:] = dz.sum(axis=0)
        g = (dz @ p["enc.dense.w"]).reshape(acts[-1][2].shape)
        for i in reversed(range(a.conv_layers)):
            in_shape, cols, pre = acts[i]
            g = leaky_grad(pre, g, a.leak)
            w = p[f"enc.conv{i}.w"]
            gf = g.reshape(g.shape[0], g.shape[1], -1)
            p.grad_view(f"enc.conv{i}.b")[:] = gf.sum(axis=(0, 2))
            p.grad_view(f"enc.conv{i}.w")[:] = (_flat_cols(gf) @ _flat_cols(cols).T).reshape(w.shape)
            if i > 0:
                g = col2im(w.reshape(w.shape[0], -1).T @ gf, in_shape)
