"""Dense sigmoid networks: forward/backward passes, masks and box projection.

Every loss function accepts either a single sample (1-D arrays) or a batch
(2-D arrays, one sample per row).  For a batch the returned loss and
gradients are averaged over rows, i.e. they are the mini-batch estimate
``G(eta; W)`` used by the stochastic updates.

Weights follow the ``W_l in R^{d_l x d_{l-1}}`` convention: rows index the
output units of a layer, columns its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ParameterError, ShapeError


def sigmoid(v):
    """Point-wise logistic function, evaluated without overflow."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of an L-layer sigmoid network.

    ``widths`` is ``(d_0, ..., d_L)``.  ``box_limits[l]`` is the ``w_m`` of
    layer ``l + 1`` or ``None`` for an unconstrained layer.  ``keep_prob`` is
    the Bernoulli keep probability shared by every mask; 1 disables masking.
    With ``bias=True`` the network input is augmented with a constant 1, so
    the first weight matrix has ``d_0 + 1`` columns.
    """

    widths: tuple
    box_limits: Optional[tuple] = None
    keep_prob: float = 1.0
    bias: bool = False

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ConfigurationError("a network needs at least one layer (two widths)")
        if any(w < 1 for w in widths):
            raise ConfigurationError(f"all widths must be >= 1, got {widths}")
        object.__setattr__(self, "widths", widths)
        limits = self.box_limits
        if limits is None:
            limits = (None,) * (len(widths) - 1)
        limits = tuple(None if b is None else float(b) for b in limits)
        if len(limits) != len(widths) - 1:
            raise ConfigurationError(
                f"{len(limits)} box limits given for {len(widths) - 1} layers")
        if any(b is not None and b <= 0 for b in limits):
            raise ConfigurationError(f"box limits must be positive, got {limits}")
        object.__setattr__(self, "box_limits", limits)
        check_keep_prob(self.keep_prob)

    @property
    def n_layers(self):
        return len(self.widths) - 1

    @property
    def layer_shapes(self):
        shapes = [(self.widths[l + 1], self.widths[l]) for l in range(self.n_layers)]
        if self.bias:
            shapes[0] = (shapes[0][0], shapes[0][1] + 1)
        return shapes


def check_keep_prob(keep_prob):
    if not 0.0 < keep_prob <= 1.0:
        raise ParameterError(f"keep probability must lie in (0, 1], got {keep_prob}")


def add_bias(x):
    """Append a constant-1 feature to a sample or to every row of a batch."""
    x = np.asarray(x, dtype=np.float64)
    ones = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([x, ones], axis=-1)


def init_weights(spec: NetworkSpec, rng, w_init=None):
    """Draw i.i.d. uniform weights on ``[-w_init, w_init]`` for every layer.

    The default scale is ``min(w_m, 1/sqrt(d_in * d_out))`` per layer.
    """
    params = []
    for shape, w_m in zip(spec.layer_shapes, spec.box_limits):
        scale = w_init
        if scale is None:
            scale = 1.0 / np.sqrt(shape[0] * shape[1])
            if w_m is not None:
                scale = min(scale, w_m)
        params.append(rng.uniform(-scale, scale, size=shape))
    return params


def _as_batch(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        return a[None, :], True
    if a.ndim == 2:
        return a, False
    raise ShapeError(f"{name} must be 1-D or 2-D, got shape {a.shape}")


def _check_cols(W, width, what):
    if W.ndim != 2 or W.shape[1] != width:
        raise ShapeError(f"weight matrix of shape {np.shape(W)} does not accept {what} of width {width}")


def loss_and_grad_1nn(W, x, y):
    """Squared loss ``||y - sigmoid(W x)||^2`` and its gradient in ``W``."""
    W = np.asarray(W, dtype=np.float64)
    X, single = _as_batch(x, "x")
    Y, _ = _as_batch(y, "y")
    _check_cols(W, X.shape[1], "inputs")
    if Y.shape != (X.shape[0], W.shape[0]):
        raise ShapeError(f"targets of shape {Y.shape} do not match outputs ({X.shape[0]}, {W.shape[0]})")
    P = sigmoid(X @ W.T)
    resid = P - Y
    n = X.shape[0]
    loss = float(np.sum(resid * resid)) / n
    delta = 2.0 * resid * P * (1.0 - P)
    grad = delta.T @ X / n
    return loss, grad


def corrupt(x, keep_prob, rng):
    """Zero each coordinate independently with probability ``1 - keep_prob``.

    Returns ``(x * z, z)`` with ``z`` a 0/1 float mask of the same shape as
    ``x``.  No random numbers are drawn when ``keep_prob == 1``.
    """
    check_keep_prob(keep_prob)
    x = np.asarray(x, dtype=np.float64)
    if keep_prob == 1.0:
        return x.copy(), np.ones_like(x)
    z = (rng.random(x.shape) < keep_prob).astype(np.float64)
    return x * z, z


def encode(W, x):
    """Hidden representation ``sigmoid(W x)`` (no masking)."""
    X, single = _as_batch(x, "x")
    H = sigmoid(X @ np.asarray(W).T)
    return H[0] if single else H


def loss_and_grad_da(W, x, mask=None, box_limit=None):
    """Tied-weight denoising autoencoder loss and gradient.

    Loss is ``||x - sigmoid(W^T sigmoid(W (x * z)))||^2``.  ``W`` occurs in
    both the encoder and the decoder; the returned gradient is the sum of
    both contributions.  ``mask`` may be one vector shared by the batch or
    one row per sample; ``None`` means no corruption.
    """
    if box_limit is None:
        raise ConfigurationError("the denoising autoencoder requires a box limit w_m")
    W = np.asarray(W, dtype=np.float64)
    X, _ = _as_batch(x, "x")
    _check_cols(W, X.shape[1], "inputs")
    if mask is None:
        Xt = X
    else:
        Z = np.asarray(mask, dtype=np.float64)
        if Z.shape[-1] != X.shape[1] or Z.ndim > 2 or (Z.ndim == 2 and Z.shape[0] != X.shape[0]):
            raise ShapeError(f"mask of shape {Z.shape} does not match inputs {X.shape}")
        Xt = X * Z
    n = X.shape[0]
    H = sigmoid(Xt @ W.T)          # (n, d_h)
    R = sigmoid(H @ W)             # (n, d_x)
    resid = R - X
    loss = float(np.sum(resid * resid)) / n
    delta_out = 2.0 * resid * R * (1.0 - R)
    delta_hid = (delta_out @ W.T) * H * (1.0 - H)
    grad = (H.T @ delta_out + delta_hid.T @ Xt) / n
    return loss, grad


def loss_and_grad_lnn(params: Sequence[np.ndarray], x, y, masks=None):
    """Masked forward and backward pass through an L-layer network.

    ``masks[l]`` multiplies the input of layer ``l + 1`` (so ``masks[0]``
    applies to ``x``); one mask per layer is shared by the whole batch.
    Returns ``(loss, grads, activations)`` where ``activations`` holds the
    hidden representations ``h^1 .. h^{L-1}``.  Columns of ``grads[l]`` that
    belong to dropped inputs are exactly zero.
    """
    X, single = _as_batch(x, "x")
    Y, _ = _as_batch(y, "y")
    L = len(params)
    if masks is not None and len(masks) != L:
        raise ShapeError(f"{len(masks)} masks supplied for {L} layers")
    inputs, outs = [], []
    h = X
    for l, W in enumerate(params):
        W = np.asarray(W, dtype=np.float64)
        _check_cols(W, h.shape[1], f"layer {l + 1} inputs")
        if masks is not None:
            z = np.asarray(masks[l], dtype=np.float64)
            if z.shape != (h.shape[1],):
                raise ShapeError(f"mask {l + 1} has shape {z.shape}, expected ({h.shape[1]},)")
            u = h * z
        else:
            u = h
        inputs.append(u)
        h = sigmoid(u @ W.T)
        outs.append(h)
    if Y.shape != h.shape:
        raise ShapeError(f"targets of shape {Y.shape} do not match outputs {h.shape}")
    n = X.shape[0]
    resid = h - Y
    loss = float(np.sum(resid * resid)) / n
    grads = [None] * L
    delta = 2.0 * resid * h * (1.0 - h)
    for l in range(L - 1, -1, -1):
        grads[l] = delta.T @ inputs[l] / n
        if l > 0:
            back = delta @ np.asarray(params[l], dtype=np.float64)
            if masks is not None:
                back = back * np.asarray(masks[l], dtype=np.float64)
            prev = outs[l - 1]
            delta = back * prev * (1.0 - prev)
    hidden = outs[:-1]
    if single:
        hidden = [a[0] for a in hidden]
    return loss, grads, hidden


def predict_lnn(params, x):
    h = np.asarray(x, dtype=np.float64)
    for W in params:
        h = sigmoid(h @ np.asarray(W).T)
    return h


def project_box(W, w_m):
    """Euclidean projection onto ``[-w_m, w_m]`` entrywise."""
    return np.clip(W, -w_m, w_m)


def gradient_mapping(W, grad, gamma, w_m):
    """Projected-gradient mapping ``(W - P(W - gamma * grad)) / gamma``.

    Equals ``grad`` wherever the step stays inside the box.
    """
    if gamma <= 0:
        raise ParameterError(f"stepsize must be positive, got {gamma}")
    grad = np.asarray(grad, dtype=np.float64)
    if w_m is None:
        return grad
    step = W - gamma * grad
    clipped = project_box(step, w_m)
    # entries whose step stays feasible return the raw gradient bit-for-bit
    return np.where(clipped == step, grad, (W - clipped) / gamma)


def clipped_gradient(grad, w_m):
    """Alternative measurement: clip the raw gradient entrywise to the box."""
    if w_m is None:
        return np.asarray(grad, dtype=np.float64)
    return np.clip(grad, -w_m, w_m)


def projected_gradient(W, grad, gamma, w_m, mode="mapping"):
    if mode == "mapping":
        return gradient_mapping(W, grad, gamma, w_m)
    if mode == "clip":
        return clipped_gradient(grad, w_m)
    raise ParameterError(f"unknown projection mode {mode!r}")
