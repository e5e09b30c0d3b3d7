"""Time-reversible proposal maps built from Henon layers.

A Henon layer (x, y) -> (y + eta, -x + V(y)) is symplectic and analytically
invertible for any V. Composing K layers gives a diffeomorphism g; the
proposal M = g^{-1} o R o g (R negates the auxiliary half) is an involution
for every parameter value, which is what makes the Metropolis-Hastings
kernel built on it reversible by construction.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ParamSet, Tensor, concat, narrow, neg, no_grad
from .nn import MLP

__all__ = ["HenonLayer", "Proposal", "reflect", "involution_check"]


class HenonLayer:
    """Symplectic layer on R^n x R^n with a two-layer MLP shift V."""

    def __init__(self, params: ParamSet, prefix: str, dim: int, hidden: int, rng,
                 w_scale=1.0):
        self.dim = dim
        self.v_net = MLP(params, f"{prefix}.V", [dim, hidden, dim], rng,
                         w_scale=w_scale)
        self.eta = params.add(f"{prefix}.eta", np.zeros(dim))

    def forward(self, x: Tensor, y: Tensor):
        return self.eta + y, self.v_net(y) - x

    def inverse(self, xb: Tensor, yb: Tensor):
        y = xb - self.eta
        return self.v_net(y) - yb, y


def _split(z: Tensor, n: int):
    if z.shape[-1] != 2 * n:
        raise ValueError(f"state dim {z.shape[-1]} != 2*{n}")
    return narrow(z, 0, n), narrow(z, n, n)


def reflect(z: Tensor, n: int) -> Tensor:
    """Time-reversing symmetry R: (x, v) -> (x, -v)."""
    x, v = _split(z, n)
    return concat([x, neg(v)])


class Proposal:
    """Involutive proposal M = g^{-1} o R o g on R^{2n}."""

    def __init__(self, dim: int, hidden: int = 32, n_layers: int = 5, seed: int = 0,
                 init_scale: float = 0.1, params: ParamSet | None = None):
        self.dim = dim
        self.hidden = hidden
        self.n_layers = n_layers
        self.params = params if params is not None else ParamSet()
        rng = np.random.default_rng(seed)
        # small V weights start the map near the plain reflection
        # (x, v) -> (-x, v), which keeps early acceptance away from zero
        self.layers = [
            HenonLayer(self.params, f"henon{k}", dim, hidden, rng,
                       w_scale=init_scale)
            for k in range(n_layers)
        ]

    def g_forward(self, z: Tensor) -> Tensor:
        x, y = _split(z, self.dim)
        for layer in self.layers:
            x, y = layer.forward(x, y)
        return concat([x, y])

    def g_inverse(self, z: Tensor) -> Tensor:
        x, y = _split(z, self.dim)
        for layer in reversed(self.layers):
            x, y = layer.inverse(x, y)
        return concat([x, y])

    def apply(self, z: Tensor) -> Tensor:
        """M(z); differentiable w.r.t. both z and the parameters."""
        return self.g_inverse(reflect(self.g_forward(z), self.dim))

    def apply_array(self, z: np.ndarray) -> np.ndarray:
        """Graph-free evaluation for sampling loops."""
        with no_grad():
            return self.apply(Tensor(z)).data

    def log_det_jacobian(self, z: np.ndarray):
        """log|det dM/dz|; identically zero (Henon layers are symplectic),
        kept explicit so the kernel's ratio carries the term."""
        z = np.asarray(z)
        return np.zeros(z.shape[:-1])

    def config(self):
        return {"dim": self.dim, "hidden": self.hidden, "layers": self.n_layers}


def involution_check(proposal: Proposal, samples: np.ndarray) -> float:
    """Max infinity-norm deviation of M(M(z)) from z over the samples."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.size == 0:
        raise ValueError("involution_check needs at least one sample")
    mmz = proposal.apply_array(proposal.apply_array(samples))
    return float(np.max(np.abs(mmz - samples)))
