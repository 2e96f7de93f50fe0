"""Central finite-difference verification of the backward pass."""

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from . import model as M


@dataclass
class GroupResult:
    name: str
    n: int
    max_rel_error: float
    max_abs_error: float
    passed: bool


def gradient_check(model: M.Model, x, y, mode: str = "train", eps: float = 1e-5, rtol: float = 1e-4,
                   atol: float = 1e-6, backward_hook: Optional[Callable[[dict], dict]] = None
                   ) -> Dict[str, GroupResult]:
    """Compare backprop gradients against central differences, every entry.

    Dropout is disabled and batch-norm running statistics are frozen so the
    loss is a deterministic function of the parameters. An entry passes when
    ``|g - fd| <= max(rtol * max(|g|, |fd|), atol)``. ``backward_hook`` lets
    tests corrupt the analytic gradients as a negative control.
    """
    def loss_of():
        return M.loss_and_grad(model, x, y, mode=mode, dropout=False)[0]

    _, grads = M.loss_and_grad(model, x, y, mode=mode, dropout=False)
    if backward_hook is not None:
        grads = backward_hook(grads)
    results = {}
    for name, p in model.params.items():
        g = grads[name]
        fd = np.empty_like(p)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_of()
            flat[i] = orig - eps
            lm = loss_of()
            flat[i] = orig
            fd.reshape(-1)[i] = (lp - lm) / (2 * eps)
        err = np.abs(g - fd)
        scale = np.maximum(np.abs(g), np.abs(fd))
        rel = np.where(scale > 0, err / np.where(scale > 0, scale, 1), 0.0)
        ok = bool(np.all(err <= np.maximum(rtol * scale, atol)))
        # relative error is only meaningful above the absolute floor
        rel_reported = float(np.max(np.where(scale > atol, rel, 0.0)))
        results[name] = GroupResult(name, flat.size, rel_reported, float(err.max()), ok)
    return results


def default_check(seed: int = 0, backward_hook=None, mode: str = "train") -> Dict[str, GroupResult]:
    """The stock suite: tiny two-block network on a random 3-class batch."""
    cfg = M.tiny_preset(n_classes=3, seed=seed)
    rng = np.random.default_rng(seed)
    model = M.init_model(cfg, in_channels=2, in_length=16)
    for k in model.params:
        if k.endswith(".b") or k.endswith(".beta"):
            model.params[k] = rng.normal(0, 0.1, model.params[k].shape)
        if k.endswith(".gamma"):
            model.params[k] = rng.uniform(0.5, 1.5, model.params[k].shape)
    for i in range(len(cfg.conv_blocks)):
        n = model.buffers[f"bn{i}.mean"].size
        M.set_bn_statistics(model, i, rng.normal(0, 0.1, n), rng.uniform(0.5, 1.5, n))
    x = rng.normal(size=(6, 2, 16))
    y = np.array([0, 1, 2, 0, 1, 2])
    return gradient_check(model, x, y, mode=mode, backward_hook=backward_hook)
