"""Finite-difference checks for every differentiable component.

Each layer is probed with a fixed random linear readout ``L = sum(R * y)`` so
that the check exercises the full output Jacobian.
"""
from __future__ import annotations

import numpy as np

from .gradcheck import GradCheckResult, check_input, check_params
from .layers import (CausalAttentionBlock, GRULayer, Linear, MLPDecoder, SSMLayer,
                     cross_entropy, cross_entropy_backward)
from .params import ParamSet


def _layer_check(label, build, x_shape, seed, max_entries=None):
    rng = np.random.default_rng(seed)
    params = ParamSet()
    layer = build(params, rng)
    x = rng.normal(size=x_shape)
    y0, _ = layer.forward(x)
    R = rng.normal(size=y0.shape)

    def loss():
        return float((layer.forward(x)[0] * R).sum())

    dx_box = {}

    def loss_and_backward():
        y, cache = layer.forward(x)
        dx_box["dx"] = layer.backward(cache, R)
        return float((y * R).sum())

    out = [GradCheckResult(f"{label}:{r.name}", r.rel_error, r.entries)
           for r in check_params(loss_and_backward, loss, params, max_entries=max_entries, rng=rng)]
    params.zero_grad()
    loss_and_backward()
    params.zero_grad()
    out.append(check_input(lambda v: float((layer.forward(v)[0] * R).sum()), dx_box["dx"], x,
                           name=f"{label}:input"))
    return out


def _loss_check(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(3, 4, 2))
    pred = np.exp(z) / np.exp(z).sum(-1, keepdims=True)
    target = np.eye(2)[rng.integers(2, size=(3, 4))]
    w = rng.uniform(0.1, 1.0, size=(3, 4))
    analytic = cross_entropy_backward(pred, target, w)
    return [check_input(lambda p: float((cross_entropy(p, target) * w).sum()), analytic, pred.copy(),
                        name="loss:cross_entropy")]


def _model_check(backbone, seed, conv=False):
    from ..model import LatmosModel, ModelConfig, batch_loss
    rng = np.random.default_rng(seed)
    if conv:
        cfg = ModelConfig(obs_dim=2 * 4 * 4, backbone=backbone, hidden_dim=4, seed=seed,
                          frozen_encoder={"kind": "projection", "out": 3},
                          task_encoder={"kind": "conv", "channels": 2, "size": 4, "filters": 2,
                                        "kernel": 3, "out": 3})
    else:
        cfg = ModelConfig(obs_dim=3, backbone=backbone, hidden_dim=4, seed=seed)
    model = LatmosModel(cfg)
    X = rng.normal(size=(2, 4, cfg.obs_dim))
    Y = rng.integers(2, size=(2, 4))
    M = np.array([[True] * 4, [True, True, True, False]])
    tag = f"model[{backbone}{'+conv' if conv else ''}]"
    res = check_params(lambda: batch_loss(model, X, Y, M)[0],
                       lambda: batch_loss(model, X, Y, M, backward=False)[0],
                       model.params, max_entries=12, rng=rng)
    return [GradCheckResult(f"{tag}:{r.name}", r.rel_error, r.entries) for r in res]


def run_suite(seed: int = 0, end_to_end: bool = True) -> list[GradCheckResult]:
    """All layer checks plus one end-to-end check per backbone."""
    from ..doorkey import ConvEncoder
    out = []
    out += _layer_check("linear", lambda p, r: Linear(p, "l", 4, 3, r), (2, 5, 4), seed)
    out += _layer_check("gru", lambda p, r: GRULayer(p, "g", 3, 4, r), (2, 5, 3), seed + 1)
    out += _layer_check("ssm", lambda p, r: SSMLayer(p, "s", 4, r), (2, 5, 4), seed + 2)
    out += _layer_check("attention", lambda p, r: CausalAttentionBlock(p, "a", 4, 2, 6, r),
                        (2, 5, 4), seed + 3)
    out += _layer_check("decoder", lambda p, r: MLPDecoder(p, "d", 4, 2, r), (2, 5, 4), seed + 4)
    out += _layer_check("conv_encoder", lambda p, r: ConvEncoder(p, "c", 3, 5, 5, 3, 4, r),
                        (2, 3 * 5 * 5), seed + 5, max_entries=40)
    out += _loss_check(seed + 6)
    if end_to_end:
        for i, b in enumerate(("gru", "attention", "ssm")):
            out += _model_check(b, seed + 10 + i)
        out += _model_check("gru", seed + 20, conv=True)
    return out
