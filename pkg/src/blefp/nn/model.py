"""Configurable 1D CNN trained with plain (or momentum) SGD."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..errors import EmptyClass, InsufficientLength, LabelOutOfRange, ShapeMismatch, ValidationError
from . import layers as L

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkConfig:
    conv_blocks: Tuple[Tuple[int, int], ...] = ((16, 9), (32, 5))
    fc_blocks: Tuple[Tuple[int, float], ...] = ((64, 0.3),)
    n_classes: int = 2
    leaky_slope: float = 0.3
    lr0: float = 0.05
    decay_steps: int = 600
    decay_rate: float = 0.75
    staircase: bool = False
    momentum: float = 0.0
    epochs: int = 15
    batch_size: int = 32
    seed: int = 0
    padding: str = "valid"
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "conv_blocks", tuple((int(f), int(h)) for f, h in self.conv_blocks))
        object.__setattr__(self, "fc_blocks", tuple((int(n), float(p)) for n, p in self.fc_blocks))
        if not self.conv_blocks:
            raise ValidationError("at least one conv block is required")
        if self.n_classes < 2:
            raise ValidationError("n_classes must be >= 2")
        if any(not 0 <= p < 1 for _, p in self.fc_blocks):
            raise ValidationError("dropout rates must lie in [0, 1)")
        if any(f < 1 or h < 1 for f, h in self.conv_blocks) or any(n < 1 for n, _ in self.fc_blocks):
            raise ValidationError("layer sizes must be positive")
        if self.padding not in ("valid", "same"):
            raise ValidationError(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.decay_steps < 1:
            raise ValidationError("epochs >= 0, batch_size >= 1 and decay_steps >= 1 required")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["conv_blocks"] = [list(b) for b in self.conv_blocks]
        d["fc_blocks"] = [list(b) for b in self.fc_blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown network config keys: {sorted(extra)}")
        return cls(**d)


def full_preset(n_classes: int, **overrides) -> NetworkConfig:
    """Five conv blocks and two dense blocks at full size.

    Uses same padding: with valid padding a 53-sample input shrinks to 3
    samples before the kernel-8 second block and cannot be evaluated.
    """
    base = dict(conv_blocks=((64, 48), (64, 8), (96, 6), (128, 5), (96, 6)),
                fc_blocks=((1024, 0.5), (512, 0.6)), n_classes=n_classes, lr0=0.05,
                decay_steps=600, decay_rate=0.75, epochs=25, batch_size=64, padding="same")
    base.update(overrides)
    return NetworkConfig(**base)


def desk_preset(n_classes: int, **overrides) -> NetworkConfig:
    base = dict(conv_blocks=((16, 9), (32, 5)), fc_blocks=((64, 0.3),), n_classes=n_classes,
                epochs=15, batch_size=32)
    base.update(overrides)
    return NetworkConfig(**base)


def tiny_preset(n_classes: int = 3, **overrides) -> NetworkConfig:
    """Small enough for exhaustive finite-difference checks."""
    base = dict(conv_blocks=((3, 3), (4, 2)), fc_blocks=((5, 0.0),), n_classes=n_classes,
                epochs=1, batch_size=4)
    base.update(overrides)
    return NetworkConfig(**base)


def length_trace(cfg: NetworkConfig, in_length: int) -> List[Tuple[str, int]]:
    """Analytic per-layer output lengths (or widths after flattening)."""
    trace = [("input", in_length)]
    n = in_length
    for i, (f, h) in enumerate(cfg.conv_blocks):
        n = n if cfg.padding == "same" else n - h + 1
        if n < 1:
            raise InsufficientLength(f"conv block {i} (kernel {h}) has no valid output for this input")
        trace.append((f"conv{i}", n))
        if n < 2:
            raise InsufficientLength(f"conv block {i} output length {n} too short to pool")
        n //= 2
        trace.append((f"pool{i}", n))
    width = n * cfg.conv_blocks[-1][0]
    trace.append(("flatten", width))
    for j, (units, _) in enumerate(cfg.fc_blocks):
        trace.append((f"fc{j}", units))
    trace.append(("logits", cfg.n_classes))
    return trace


@dataclass
class Model:
    """Network parameters plus the config and input shape they were built for.

    ``params`` is a flat name -> array mapping; ``buffers`` holds batch-norm
    running statistics which are not trained by gradient descent.
    """

    config: NetworkConfig
    in_channels: int
    in_length: int
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def param_names(self) -> List[str]:
        return list(self.params)

    def copy(self) -> "Model":
        return Model(self.config, self.in_channels, self.in_length,
                     {k: v.copy() for k, v in self.params.items()},
                     {k: v.copy() for k, v in self.buffers.items()}, list(self.history))

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def init_model(cfg: NetworkConfig, in_channels: int, in_length: int, seed: Optional[int] = None,
               zero_output: bool = False) -> Model:
    """Seeded He-uniform hidden weights, LeCun-uniform output layer, zero biases."""
    trace = length_trace(cfg, in_length)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    m = Model(cfg, in_channels, in_length)
    c = in_channels
    for i, (f, h) in enumerate(cfg.conv_blocks):
        lim = np.sqrt(6.0 / (c * h))
        m.params[f"conv{i}.w"] = rng.uniform(-lim, lim, size=(f, c, h))
        m.params[f"conv{i}.b"] = np.zeros(f)
        m.params[f"bn{i}.gamma"] = np.ones(f)
        m.params[f"bn{i}.beta"] = np.zeros(f)
        m.buffers[f"bn{i}.mean"] = np.zeros(f)
        m.buffers[f"bn{i}.var"] = np.zeros(f)
        m.buffers[f"bn{i}.count"] = np.zeros(1)
        c = f
    width = dict(trace)["flatten"]
    for j, (units, _) in enumerate(cfg.fc_blocks):
        lim = np.sqrt(6.0 / width)
        m.params[f"fc{j}.w"] = rng.uniform(-lim, lim, size=(width, units))
        m.params[f"fc{j}.b"] = np.zeros(units)
        width = units
    lim = np.sqrt(3.0 / width)
    w_out = rng.uniform(-lim, lim, size=(width, cfg.n_classes))
    m.params["out.w"] = np.zeros_like(w_out) if zero_output else w_out
    m.params["out.b"] = np.zeros(cfg.n_classes)
    return m


def _check_input(model: Model, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (model.in_channels, model.in_length):
        raise ShapeMismatch(f"expected (batch, {model.in_channels}, {model.in_length}), got {x.shape}")
    return x


def bn_statistics(model: Model, i: int) -> Tuple[np.ndarray, np.ndarray]:
    """Inference mean and variance of batch-norm layer ``i``.

    The running averages start at zero and are divided by ``1 - momentum**t``
    after ``t`` updates, so short training runs are not dominated by the
    starting value. Before any update the layer uses mean 0, variance 1.
    """
    b = model.buffers
    t = b[f"bn{i}.count"][0]
    if t == 0:
        n = b[f"bn{i}.mean"].size
        return np.zeros(n), np.ones(n)
    c = 1.0 - model.config.bn_momentum**t
    return b[f"bn{i}.mean"] / c, b[f"bn{i}.var"] / c


def set_bn_statistics(model: Model, i: int, mean, var) -> None:
    """Store inference statistics directly (as if after a single update)."""
    c = 1.0 - model.config.bn_momentum
    model.buffers[f"bn{i}.mean"] = np.asarray(mean, dtype=np.float64) * c
    model.buffers[f"bn{i}.var"] = np.asarray(var, dtype=np.float64) * c
    model.buffers[f"bn{i}.count"] = np.ones(1)


def _block(model: Model, h, i: int, train: bool, update_stats: bool):
    cfg, p = model.config, model.params
    n_in = h.shape[2]
    z, cols = L.conv1d_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"], cfg.padding)
    if z.shape[2] < 2:
        raise InsufficientLength(f"conv block {i} output length {z.shape[2]} too short to pool")
    if train:
        mean, var = model.buffers[f"bn{i}.mean"], model.buffers[f"bn{i}.var"]
        if update_stats:
            model.buffers[f"bn{i}.count"] += 1
    else:
        mean, var = bn_statistics(model, i)
    a, bn_cache = L.batchnorm_forward(z, p[f"bn{i}.gamma"], p[f"bn{i}.beta"], mean, var, train,
                                      cfg.bn_momentum, cfg.bn_eps, update_stats)
    r = L.leaky_relu(a, cfg.leaky_slope)
    out, pool_cache = L.maxpool_forward(r)
    return out, (n_in, cols, bn_cache, a, pool_cache)


def block_forward(model: Model, x, index: int, mode: str = "eval") -> np.ndarray:
    """Conv block ``index`` alone: conv, batch norm, leaky ReLU, max pool.

    Running statistics are not updated.
    """
    x = np.asarray(x, dtype=np.float64)
    return _block(model, x, index, mode == "train", update_stats=False)[0]


def _forward(model: Model, x, train: bool, rng=None, update_stats: bool = True, dropout: bool = True):
    cfg = model.config
    p = model.params
    caches = []
    h = x
    for i in range(len(cfg.conv_blocks)):
        h, c = _block(model, h, i, train, update_stats)
        caches.append(c)
    flat_shape = h.shape
    h = h.reshape(h.shape[0], -1)
    fc_caches = []
    for j, (_, rate) in enumerate(cfg.fc_blocks):
        zin = h
        z = h @ p[f"fc{j}.w"] + p[f"fc{j}.b"]
        h = L.leaky_relu(z, cfg.leaky_slope)
        mask = None
        if train and dropout and rate > 0:
            mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
            h = h * mask
        fc_caches.append((zin, z, mask))
    logits = h @ p["out.w"] + p["out.b"]
    return logits, (caches, flat_shape, fc_caches, h)


def _backward(model: Model, dlogits, cache) -> dict:
    cfg = model.config
    p = model.params
    caches, flat_shape, fc_caches, h_last = cache
    g = {"out.w": h_last.T @ dlogits, "out.b": dlogits.sum(axis=0)}
    dh = dlogits @ p["out.w"].T
    for j in reversed(range(len(cfg.fc_blocks))):
        zin, z, mask = fc_caches[j]
        if mask is not None:
            dh = dh * mask
        dz = L.leaky_relu_backward(dh, z, cfg.leaky_slope)
        g[f"fc{j}.w"] = zin.T @ dz
        g[f"fc{j}.b"] = dz.sum(axis=0)
        dh = dz @ p[f"fc{j}.w"].T
    dh = dh.reshape(flat_shape)
    for i in reversed(range(len(cfg.conv_blocks))):
        n_in, cols, bn_cache, a, pool_cache = caches[i]
        dr = L.maxpool_backward(dh, pool_cache)
        da = L.leaky_relu_backward(dr, a, cfg.leaky_slope)
        dz, g[f"bn{i}.gamma"], g[f"bn{i}.beta"] = L.batchnorm_backward(da, p[f"bn{i}.gamma"], bn_cache)
        dh, g[f"conv{i}.w"], g[f"conv{i}.b"] = L.conv1d_backward(dz, cols, p[f"conv{i}.w"], n_in, cfg.padding)
    return {k: g[k] for k in p}


def forward(model: Model, batch, mode: str = "eval", rng=None) -> np.ndarray:
    """Logits ``(batch, n_classes)``. Train mode uses batch statistics and dropout."""
    x = _check_input(model, batch)
    train = mode == "train"
    if train and rng is None:
        rng = np.random.default_rng(model.config.seed)
    logits, _ = _forward(model, x, train, rng, update_stats=False)
    return logits


def _check_labels(model: Model, labels, n) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size != n:
        raise ShapeMismatch("labels and batch differ in length")
    if np.any(y < 0) or np.any(y >= model.config.n_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {model.config.n_classes})")
    return y


def loss_and_grad(model: Model, batch, labels, mode: str = "train", rng=None, dropout: bool = True,
                  update_stats: bool = False):
    """Mean softmax cross-entropy and gradients for every trainable parameter."""
    x = _check_input(model, batch)
    y = _check_labels(model, labels, x.shape[0])
    train = mode == "train"
    if train and dropout and rng is None:
        rng = np.random.default_rng(model.config.seed)
    logits, cache = _forward(model, x, train, rng, update_stats=update_stats, dropout=dropout)
    loss, dlogits = L.softmax_cross_entropy(logits, y)
    return loss, _backward(model, dlogits, cache)


def lr_schedule(step: int, cfg: NetworkConfig) -> float:
    """``lr0 * decay_rate ** (step / decay_steps)``; integer exponent if staircase."""
    if step < 0:
        raise ValidationError("step must be >= 0")
    e = step // cfg.decay_steps if cfg.staircase else step / cfg.decay_steps
    return cfg.lr0 * cfg.decay_rate**e


def train(x, y, cfg: NetworkConfig, log_every: int = 0) -> Model:
    """Fit a fresh model on ``x`` of shape ``(n, channels, length)``.

    Everything stochastic (init, shuffling, dropout) derives from
    ``cfg.seed``. The final-epoch model is returned; ``model.history`` holds
    the mean training loss of each epoch.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatch(f"training data must be (n, channels, length), got {x.shape}")
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.size != x.shape[0]:
        raise ShapeMismatch("features and labels differ in length")
    counts = np.bincount(y, minlength=cfg.n_classes) if y.size else np.zeros(cfg.n_classes)
    if y.size and (y.min() < 0 or y.max() >= cfg.n_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {cfg.n_classes})")
    if np.any(counts == 0):
        raise EmptyClass(f"classes without examples: {np.flatnonzero(counts == 0).tolist()}")

    init_seq, run_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    model = init_model(cfg, x.shape[1], x.shape[2], seed=init_seq.generate_state(1)[0])
    rng = np.random.default_rng(run_seq)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = x[idx]
            logits, cache = _forward(model, xb, True, rng, update_stats=True)
            loss, dlogits = L.softmax_cross_entropy(logits, y[idx])
            grads = _backward(model, dlogits, cache)
            lr = lr_schedule(step, cfg)
            for k, gk in grads.items():
                if cfg.momentum:
                    velocity[k] = cfg.momentum * velocity[k] - lr * gk
                    model.params[k] += velocity[k]
                else:
                    model.params[k] -= lr * gk
            losses.append(loss)
            step += 1
        model.history.append(float(np.mean(losses)))
        if log_every and (epoch + 1) % log_every == 0:
            log.info("epoch %d loss %.4f lr %.5f", epoch + 1, model.history[-1], lr_schedule(step, cfg))
    return model


def predict(model: Model, batch, chunk: int = 512) -> np.ndarray:
    """Arg-max class per sample; ties resolve to the lowest index."""
    x = _check_input(model, batch)
    out = [np.argmax(forward(model, x[i : i + chunk]), axis=1) for i in range(0, x.shape[0], chunk)]
    return np.concatenate(out)
