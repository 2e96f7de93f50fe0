"""Forward/backward kernels for the 1D CNN. All arrays are float64.

Activations are laid out ``(batch, channels, length)`` for convolutional
stages and ``(batch, features)`` after flattening.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch


def same_pad(kernel):
    total = kernel - 1
    return total // 2, total - total // 2


def conv1d_forward(x, weights, bias, padding="valid"):
    """Stride-1 cross-correlation. ``weights`` is ``(filters, channels, kernel)``.

    Returns the output and the im2col matrix needed by the backward pass.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"input {x.shape} incompatible with weights {w.shape}")
    f, c, k = w.shape
    if padding == "same":
        x = np.pad(x, ((0, 0), (0, 0), same_pad(k)))
    elif padding != "valid":
        raise ValueError(f"unknown padding {padding!r}")
    b, _, n = x.shape
    n_out = n - k + 1
    if n_out < 1:
        raise ShapeMismatch(f"kernel {k} longer than input length {n}")
    cols = sliding_window_view(x, k, axis=2).transpose(0, 2, 1, 3).reshape(b * n_out, c * k)
    out = cols @ w.reshape(f, c * k).T + bias
    return out.reshape(b, n_out, f).transpose(0, 2, 1), cols


def conv1d_backward(dout, cols, weights, in_length, padding="valid"):
    f, c, k = weights.shape
    b, _, n_out = dout.shape
    d2 = dout.transpose(0, 2, 1).reshape(b * n_out, f)
    dw = (d2.T @ cols).reshape(f, c, k)
    db = dout.sum(axis=(0, 2))
    dcols = (d2 @ weights.reshape(f, c * k)).reshape(b, n_out, c, k)
    n_in = n_out + k - 1
    dx = np.zeros((b, c, n_in))
    for j in range(k):
        dx[:, :, j : j + n_out] += dcols[:, :, :, j].transpose(0, 2, 1)
    if padding == "same":
        left, _ = same_pad(k)
        dx = dx[:, :, left : left + in_length]
    return dx, dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train, momentum=0.99, eps=1e-3,
                      update_stats=True):
    """Per-channel normalization over batch and length.

    In train mode batch statistics are used and, when ``update_stats`` is set,
    the running statistics are updated in place.
    """
    if train:
        mu = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        if update_stats:
            running_mean *= momentum
            running_mean += (1 - momentum) * mu
            running_var *= momentum
            running_var += (1 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu[None, :, None]) * inv_std[None, :, None]
    out = gamma[None, :, None] * xhat + beta[None, :, None]
    return out, (xhat, inv_std, train)


def batchnorm_backward(dout, gamma, cache):
    xhat, inv_std, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 2))
    dbeta = dout.sum(axis=(0, 2))
    dxhat = dout * gamma[None, :, None]
    if not train:
        return dxhat * inv_std[None, :, None], dgamma, dbeta
    m = dout.shape[0] * dout.shape[2]
    s1 = dxhat.sum(axis=(0, 2), keepdims=True)
    s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
    dx = inv_std[None, :, None] / m * (m * dxhat - s1 - xhat * s2)
    return dx, dgamma, dbeta


def leaky_relu(x, slope):
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(dout, x, slope):
    return np.where(x > 0, dout, slope * dout)


def maxpool_forward(x):
    """Width-2, stride-2 max pool; an odd trailing sample is dropped."""
    b, c, n = x.shape
    half = n // 2
    pairs = x[:, :, : 2 * half].reshape(b, c, half, 2)
    pick = np.argmax(pairs, axis=3)
    out = np.take_along_axis(pairs, pick[..., None], axis=3)[..., 0]
    return out, (pick, n)


def maxpool_backward(dout, cache):
    pick, n = cache
    b, c, half = dout.shape
    dpairs = np.zeros((b, c, half, 2))
    np.put_along_axis(dpairs, pick[..., None], dout[..., None], axis=3)
    dx = np.zeros((b, c, n))
    dx[:, :, : 2 * half] = dpairs.reshape(b, c, 2 * half)
    return dx


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    n = logits.shape[0]
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    probs = np.exp(z - logsum[:, None])
    probs[np.arange(n), labels] -= 1.0
    return loss, probs / n
