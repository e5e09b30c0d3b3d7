"""Small fully-connected building blocks on top of the autodiff Tensors."""

from __future__ import annotations

import numpy as np

from .autodiff import ParamSet, Tensor, add, matmul, tanh

__all__ = ["MLP"]


class MLP:
    """Fully-connected net with tanh hidden activations and a linear head.

    Parameters are registered into the given ParamSet under `prefix` so a
    whole model shares one flat, deterministically ordered collection.
    Weights are N(0, 1/fan_in), biases zero.
    """

    def __init__(self, params: ParamSet, prefix: str, sizes, rng, w_scale=1.0):
        self.params = params
        self.names = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = w_scale * rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            wn, bn = f"{prefix}.w{i}", f"{prefix}.b{i}"
            params.add(wn, w)
            params.add(bn, np.zeros(fan_out))
            self.names.append((wn, bn))

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.names) - 1
        for i, (wn, bn) in enumerate(self.names):
            h = add(matmul(h, self.params[wn]), self.params[bn])
            if i != last:
                h = tanh(h)
        return h
