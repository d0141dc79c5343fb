"""Forward evaluation and hand-written reverse-mode gradients.

The computation graph is small and fixed (Fourier lift, modulated sine
layers, linear head, squared error), so the backward pass is written out
by hand instead of pulling in an autodiff framework. Per batch, layer
pre-activations, activations, and cos terms are cached on a tape; the
backward walk consumes the tape and emits gradients for the codeword and
for every trainable parameter block. The fixed Fourier matrix gets no
gradient. A central finite-difference checker validates every block.

Everything here is batch-first internally: codewords are (B, n), targets
(B, C, 2). The per-sample wrappers `forward`, `backward_codeword`, and
`backward_params` present the single-sample view. Arithmetic runs in the
dtype of the parameters (float32 in training, float64 for verification);
loss values are always reduced in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .model import ModelParams

TWO_PI = 2.0 * np.pi


@dataclass
class ActivationTape:
    """Cached intermediates of one forward pass, consumed by backward."""

    codewords: np.ndarray        # (B, n)
    fourier_features: np.ndarray  # (C, 2*d_h), shared across the batch
    first_pre: np.ndarray        # (C, d_h) layer-1 pre-activation, shared
    pre: list                    # per layer (B, C, d_h); index 0 is None
    cos_act: list                # per layer cos(omega0 * u_i), (B, C, d_h)
    post: list                   # per layer F_i = sin(omega0 * u_i)
    gammas: list                 # per layer (B, d_h)
    etas: list                   # per layer (B, d_h)
    outputs: np.ndarray          # (B, C, 2)


@dataclass
class GradientBundle:
    """Per-sample gradients: loss, d/d codeword, and optionally d/d params."""

    loss: float
    grad_codeword: np.ndarray
    grad_params: dict | None = None


def fourier_features(params: ModelParams, coords: np.ndarray) -> np.ndarray:
    """Lift coordinates through the fixed Fourier matrix: [cos(2piBx); sin(2piBx)].

    Shape (C, 2*d_h), first half cos, second half sin. Constant for a fixed
    grid, so callers on a hot path compute it once and pass it back in.
    """
    x = np.asarray(coords, dtype=params.fourier.dtype)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("coords must have shape (count, 2)")
    ang = (x @ params.fourier.T) * TWO_PI
    return np.concatenate([np.cos(ang), np.sin(ang)], axis=1)


def forward_batch(params: ModelParams, codewords: np.ndarray,
                  coords: np.ndarray | None = None,
                  feats: np.ndarray | None = None):
    """Evaluate the network for a batch of codewords over one coordinate set.

    Returns (outputs, tape) with outputs (B, C, 2). Exactly one of coords or
    feats (precomputed fourier_features) must be given.
    """
    a = params.arch
    dt = params.fourier.dtype
    w0 = a.omega0
    cw = np.asarray(codewords, dtype=dt)
    if cw.ndim != 2 or cw.shape[1] != a.codeword_dim:
        raise ValueError(f"codewords must have shape (batch, {a.codeword_dim})")
    if (coords is None) == (feats is None):
        raise ValueError("pass exactly one of coords or feats")
    F0 = fourier_features(params, coords) if feats is None else feats
    if F0.shape[1] != 2 * a.hidden_dim or F0.dtype != dt:
        raise ValueError("feature matrix does not match the model")

    gammas = [cw @ params.scale_w[i].T + params.scale_b[i]
              for i in range(a.num_layers)]
    etas = [cw @ params.shift_w[i].T + params.shift_b[i]
            for i in range(a.num_layers)]

    first_pre = F0 @ params.layer_w[0].T + params.layer_b[0]   # (C, d_h)
    pre = [None]
    cos_act, post = [], []
    u = gammas[0][:, None, :] * first_pre[None, :, :] + etas[0][:, None, :]
    z = u * w0
    cos_act.append(np.cos(z))
    post.append(np.sin(z))
    B, C, d = post[0].shape
    for i in range(1, a.num_layers):
        e = post[i - 1].reshape(B * C, d) @ params.layer_w[i].T
        e = e.reshape(B, C, d) + params.layer_b[i]
        pre.append(e)
        u = gammas[i][:, None, :] * e + etas[i][:, None, :]
        z = u * w0
        cos_act.append(np.cos(z))
        post.append(np.sin(z))
    outputs = post[-1].reshape(B * C, d) @ params.out_w.T + params.out_b
    outputs = outputs.reshape(B, C, 2)
    tape = ActivationTape(codewords=cw, fourier_features=F0,
                          first_pre=first_pre, pre=pre, cos_act=cos_act,
                          post=post, gammas=gammas, etas=etas, outputs=outputs)
    return outputs, tape


def forward(params: ModelParams, codeword: np.ndarray, coords: np.ndarray):
    """Single-sample forward: returns (predictions (C, 2), tape)."""
    cw = np.asarray(codeword)
    if cw.ndim != 1:
        raise ValueError("codeword must be one-dimensional")
    outputs, tape = forward_batch(params, cw[None, :], coords=coords)
    return outputs[0], tape


def loss_mse(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Mean over coordinates of squared (re, im) error; batches additionally
    average over samples. Reduced in float64."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.shape[-1] != 2:
        raise ValueError("predictions and targets must share a (..., 2) shape")
    d = p - t
    return float(np.mean(d[..., 0] ** 2 + d[..., 1] ** 2))


def _per_sample_loss(outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    d = outputs.astype(np.float64) - targets.astype(np.float64)
    return np.mean(d[..., 0] ** 2 + d[..., 1] ** 2, axis=-1)


def backward_batch(tape: ActivationTape, params: ModelParams,
                   targets: np.ndarray, need_params: bool):
    """Reverse walk over the tape.

    Returns (per_sample_loss (B,), grad_codewords (B, n), grad_params or
    None). Parameter gradients are summed over the batch; codeword gradients
    stay per sample. The per-sample loss is the coordinate-mean squared
    error, so the upstream gradient is 2*residual/C.
    """
    a = params.arch
    dt = tape.outputs.dtype
    B, C, _ = tape.outputs.shape
    t = np.asarray(targets, dtype=dt)
    if t.shape != tape.outputs.shape:
        raise ValueError("targets do not match the tape")
    if len(tape.post) != a.num_layers or tape.post[0].shape[2] != a.hidden_dim \
            or tape.codewords.shape[1] != a.codeword_dim:
        raise ValueError("tape does not match these params")

    per_sample = _per_sample_loss(tape.outputs, t)
    resid = tape.outputs - t
    G = resid * (2.0 / C)                                  # (B, C, 2)
    d = a.hidden_dim
    grads = {} if need_params else None
    if need_params:
        grads["out_w"] = G.reshape(-1, 2).T @ tape.post[-1].reshape(-1, d)
        grads["out_b"] = G.sum(axis=(0, 1))
    dF = (G.reshape(-1, 2) @ params.out_w).reshape(B, C, d)
    grad_cw = np.zeros((B, a.codeword_dim), dtype=dt)
    for i in range(a.num_layers - 1, -1, -1):
        du = dF * tape.cos_act[i] * a.omega0
        e = tape.first_pre[None, :, :] if i == 0 else tape.pre[i]
        dgamma = np.sum(du * e, axis=1)                    # (B, d_h)
        deta = np.sum(du, axis=1)
        if need_params:
            grads[f"scale_w{i + 1}"] = dgamma.T @ tape.codewords
            grads[f"scale_b{i + 1}"] = dgamma.sum(axis=0)
            grads[f"shift_w{i + 1}"] = deta.T @ tape.codewords
            grads[f"shift_b{i + 1}"] = deta.sum(axis=0)
        grad_cw += dgamma @ params.scale_w[i] + deta @ params.shift_w[i]
        dE = du * tape.gammas[i][:, None, :]
        if need_params:
            if i == 0:
                grads["w1"] = dE.sum(axis=0).T @ tape.fourier_features
            else:
                grads[f"w{i + 1}"] = dE.reshape(-1, d).T @ tape.post[i - 1].reshape(-1, d)
            grads[f"b{i + 1}"] = dE.sum(axis=(0, 1))
        if i > 0:
            dF = (dE.reshape(-1, d) @ params.layer_w[i]).reshape(B, C, d)
    if need_params:
        grads = {k: grads[k] for k in params.trainable_blocks()}
    return per_sample, grad_cw, grads


def _single(tape: ActivationTape, targets: np.ndarray) -> np.ndarray:
    if tape.outputs.shape[0] != 1:
        raise ValueError("per-sample backward expects a batch-1 tape")
    t = np.asarray(targets)
    if t.shape != tape.outputs.shape[1:]:
        raise ValueError("targets do not match the tape")
    return t[None, :, :]


def backward_codeword(tape: ActivationTape, params: ModelParams,
                      targets: np.ndarray) -> GradientBundle:
    """Gradient of the sample loss with respect to the codeword only."""
    per_sample, grad_cw, _ = backward_batch(tape, params, _single(tape, targets),
                                            need_params=False)
    return GradientBundle(loss=float(per_sample[0]), grad_codeword=grad_cw[0])


def backward_params(tape: ActivationTape, params: ModelParams,
                    targets: np.ndarray) -> GradientBundle:
    """Gradients for every trainable block (and the codeword, since it is free)."""
    per_sample, grad_cw, grads = backward_batch(tape, params, _single(tape, targets),
                                                need_params=True)
    return GradientBundle(loss=float(per_sample[0]), grad_codeword=grad_cw[0],
                          grad_params=grads)


def finite_diff_check(params: ModelParams, codeword: np.ndarray,
                      coords: np.ndarray, targets: np.ndarray,
                      h: float = 1e-5) -> dict:
    """Central-difference verification of every gradient block.

    Runs in float64 regardless of the params dtype. Returns a dict mapping
    block name (plus "codeword") to its max relative error: the largest
    |analytic - numeric| in the block over the block's largest gradient
    magnitude. Normalizing per block rather than per scalar keeps the
    difference-quotient noise floor (~1e-10 for unit-scale losses) from
    drowning coordinates whose true gradient is nearly zero; a genuinely
    wrong gradient term scales with the block and still shows up.
    """
    if not (h > 0):
        raise ValueError("step h must be positive")
    p = params.cast(np.float64)
    cw = np.asarray(codeword, dtype=np.float64).copy()
    t = np.asarray(targets, dtype=np.float64)

    _, tape = forward(p, cw, coords)
    per_sample, grad_cw, grads = backward_batch(tape, p, t[None, :, :],
                                                need_params=True)
    analytic = {"codeword": grad_cw[0], **grads}

    def loss_now() -> float:
        out, _ = forward(p, cw, coords)
        return float(_per_sample_loss(out[None, :, :], t[None, :, :])[0])

    arrays = {"codeword": cw, **p.trainable_blocks()}
    report = {}
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        ana = analytic[name].reshape(-1)
        numeric = np.empty_like(ana)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + h
            hi = loss_now()
            flat[k] = keep - h
            lo = loss_now()
            flat[k] = keep
            numeric[k] = (hi - lo) / (2.0 * h)
        scale = max(float(np.abs(ana).max(initial=0.0)),
                    float(np.abs(numeric).max(initial=0.0)), 1e-8)
        report[name] = float(np.abs(ana - numeric).max(initial=0.0)) / scale
    return report
