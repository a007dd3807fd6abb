"""Differentiable classifier tail: logits, gradients, and cost accounting.

The engine's cut point is a flat feature vector; whatever pooling produced
it belongs to the (out-of-scope) front of the network. The tail is a chain
of affine layers with optional elementwise activations, ending in a bare
affine layer.

Gradients of a chosen logit are computed by a reverse sweep (one backward
per sample); directional derivatives for the first-order update use a
forward-mode sweep (``jvp``). The explicit Jacobian is a diagnostic path.

FLOPs are counted at 2 per multiply-add and 1 per activation evaluation;
ratios are only meaningful under one fixed convention, so this one is it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonFiniteError
from .numcore import argmax

ACTIVATIONS = ("none", "relu", "tanh")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "none":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_deriv(name: str, z: np.ndarray) -> np.ndarray:
    if name == "none":
        return np.ones_like(z)
    if name == "relu":
        # subgradient at exactly 0 is 0 (deterministic; audits depend on it)
        return np.where(z > 0.0, 1.0, 0.0)
    t = np.tanh(z)
    return 1.0 - t * t


@dataclass(frozen=True)
class LayerSpec:
    """One affine layer ``z = W x + b`` followed by an optional activation."""

    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "none"

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError(f"weight must be 2-D, got shape {w.shape}")
        if b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise DimensionError(
                f"bias length {b.shape} does not match weight rows {w.shape[0]}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NonFiniteError("layer parameters contain NaN or Inf")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        w = w.copy()
        b = b.copy()
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class HeadModel:
    """Chain of layers mapping a d-feature vector to K logits."""

    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("head needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionError(
                    f"layer chain broken: {a.out_dim} -> {b.in_dim}"
                )
        if layers[-1].activation != "none":
            raise ValueError("final layer must be affine (no activation)")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def has_relu(self) -> bool:
        return any(l.activation == "relu" for l in self.layers)


@dataclass(frozen=True)
class LogitBundle:
    """Forward + backward outcome for one sample."""

    y: np.ndarray  # (K,) logits
    c: int  # predicted class, argmax(y)
    g: np.ndarray  # (d,) gradient of y[c] w.r.t. the feature
    flops_forward: int
    flops_backward: int


def _check_feature(head: HeadModel, feat) -> np.ndarray:
    f = np.asarray(feat, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != head.input_dim:
        raise DimensionError(
            f"feature length {f.shape} does not match head input dim {head.input_dim}"
        )
    return f


def forward_trace(head: HeadModel, feat) -> tuple[np.ndarray, list[np.ndarray]]:
    """Logits plus each layer's pre-activation (needed by both sweeps)."""
    x = _check_feature(head, feat)
    pre = []
    for layer in head.layers:
        z = layer.weight @ x + layer.bias
        pre.append(z)
        x = _act(layer.activation, z)
    return x, pre


def forward(head: HeadModel, feat) -> np.ndarray:
    """Logits y for a feature vector."""
    y, _ = forward_trace(head, feat)
    return y


def grad_logit(head: HeadModel, feat, cls: int) -> np.ndarray:
    """Gradient of logit ``cls`` w.r.t. the feature (reverse sweep)."""
    if not 0 <= cls < head.output_dim:
        raise IndexError(f"class {cls} out of range [0, {head.output_dim})")
    _, pre = forward_trace(head, feat)
    u = np.zeros(head.output_dim)
    u[cls] = 1.0
    for layer, z in zip(reversed(head.layers), reversed(pre)):
        if layer.activation != "none":
            u = u * _act_deriv(layer.activation, z)
        u = layer.weight.T @ u
    return u


def jvp(head: HeadModel, feat, tangent) -> np.ndarray:
    """J(feat) @ tangent via one forward-mode sweep (exact, no differencing)."""
    f = _check_feature(head, feat)
    t = np.asarray(tangent, dtype=np.float64)
    if t.shape != f.shape:
        raise DimensionError(f"tangent shape {t.shape} != feature shape {f.shape}")
    for layer in head.layers:
        z = layer.weight @ f + layer.bias
        t = layer.weight @ t
        if layer.activation != "none":
            t = _act_deriv(layer.activation, z) * t
        f = _act(layer.activation, z)
    return t


def jacobian(head: HeadModel, feat) -> np.ndarray:
    """K x d Jacobian of the logits; row j equals grad_logit(head, feat, j)."""
    _, pre = forward_trace(head, feat)
    u = np.eye(head.output_dim)
    for layer, z in zip(reversed(head.layers), reversed(pre)):
        if layer.activation != "none":
            u = u * _act_deriv(layer.activation, z)[None, :]
        u = u @ layer.weight
    return u


def flops_forward(head: HeadModel) -> int:
    total = 0
    for layer in head.layers:
        total += 2 * layer.out_dim * layer.in_dim
        if layer.activation != "none":
            total += layer.out_dim
    return total


def flops_backward(head: HeadModel) -> int:
    # reverse sweep: transposed matvec per layer, derivative eval + multiply
    # per activated unit
    total = 0
    for layer in head.layers:
        total += 2 * layer.out_dim * layer.in_dim
        if layer.activation != "none":
            total += 2 * layer.out_dim
    return total


def flops_jvp(head: HeadModel) -> int:
    # forward-mode sweep mirrors the forward pass with an extra
    # derivative-times-tangent multiply at each activation
    total = 0
    for layer in head.layers:
        total += 2 * layer.out_dim * layer.in_dim
        if layer.activation != "none":
            total += 2 * layer.out_dim
    return total


def evaluate(head: HeadModel, feat) -> LogitBundle:
    """Forward, predicted class, and its feature gradient for one sample."""
    y, pre = forward_trace(head, feat)
    c = argmax(y)
    u = np.zeros(head.output_dim)
    u[c] = 1.0
    for layer, z in zip(reversed(head.layers), reversed(pre)):
        if layer.activation != "none":
            u = u * _act_deriv(layer.activation, z)
        u = layer.weight.T @ u
    return LogitBundle(
        y=y,
        c=c,
        g=u,
        flops_forward=flops_forward(head),
        flops_backward=flops_backward(head),
    )


@dataclass(frozen=True)
class FlopReport:
    """Analytic per-sample cost model for the two inference paths.

    ``approx_extra`` is the O(d) dot-product cost of folding a feature
    delta into the logits once the backward pass has been paid for;
    ``two_forward_total`` is the recompute alternative for comparison.
    """

    forward: int
    backward: int
    approx_extra: int
    two_forward_total: int

    @property
    def approx_path_total(self) -> int:
        return self.forward + self.backward + self.approx_extra

    @property
    def naive_path_total(self) -> int:
        # the backward is needed either way to pick coordinates
        return self.two_forward_total + self.backward

    @property
    def ratio(self) -> float:
        return self.approx_path_total / self.naive_path_total


def flop_report(head: HeadModel) -> FlopReport:
    f = flops_forward(head)
    return FlopReport(
        forward=f,
        backward=flops_backward(head),
        approx_extra=head.input_dim,
        two_forward_total=2 * f,
    )
