"""Discriminators that are antisymmetric under swapping a state with its
proposal image.

Two parameterizations:

* ProductCritic: d(z, Mz) = psi(z + Mz) * [eta(Mz) - eta(z)], an invariant
  head times an equivariant difference. Antisymmetry is exact in floating
  point because z + Mz is commutative and the bracket negates on swap.
* BlockLinearCritic: a stack of two-channel linear layers with tied blocks
  (top-left = bottom-right, top-right = bottom-left) and elementwise tanh,
  so swapping the input channels swaps the output channels exactly. The
  final layer ties its off-diagonal block to the negated diagonal block,
  which makes the first output channel flip sign under the swap.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ParamSet, Tensor, add, matmul, neg, sub, tanh, tsum
from .nn import MLP

__all__ = ["ProductCritic", "BlockLinearCritic", "make_critic"]


class ProductCritic:
    kind = "product"

    def __init__(self, state_dim: int, hidden: int = 32, seed: int = 0,
                 params: ParamSet | None = None):
        self.state_dim = state_dim
        self.hidden = hidden
        self.params = params if params is not None else ParamSet()
        rng = np.random.default_rng(seed)
        sizes = [state_dim, hidden, hidden, 1]
        self.psi = MLP(self.params, "psi", sizes, rng)
        self.eta = MLP(self.params, "eta", sizes, rng)

    def eval(self, z: Tensor, mz: Tensor) -> Tensor:
        """d value per batch row; shape (...,) matching the leading axes."""
        if z.shape != mz.shape:
            raise ValueError(f"shape mismatch: {z.shape} vs {mz.shape}")
        inv = self.psi(add(z, mz))
        equiv = sub(self.eta(mz), self.eta(z))
        return tsum(inv * equiv, axis=-1)

    def config(self):
        return {"critic_kind": self.kind, "hidden": self.hidden,
                "state_dim": self.state_dim}


class BlockLinearCritic:
    """Channel-swap-equivariant stack of paired-block linear layers."""

    kind = "block"

    def __init__(self, state_dim: int, hidden: int = 32, n_layers: int = 3,
                 seed: int = 0, params: ParamSet | None = None):
        self.state_dim = state_dim
        self.hidden = hidden
        self.n_layers = n_layers
        self.params = params if params is not None else ParamSet()
        rng = np.random.default_rng(seed)
        sizes = [state_dim] + [hidden] * (n_layers - 1) + [1]
        self.names = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            a = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            an = f"block{i}.A"
            self.params.add(an, a)
            last = i == len(sizes) - 2
            if last:
                bn = None  # off-diagonal block tied to -A
            else:
                b = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
                bn = f"block{i}.B"
                self.params.add(bn, b)
            self.names.append((an, bn))

    def _apply_layers(self, a: Tensor, b: Tensor):
        last = len(self.names) - 1
        for i, (an, bn) in enumerate(self.names):
            A = self.params[an]
            B = neg(A) if bn is None else self.params[bn]
            a, b = add(matmul(a, A), matmul(b, B)), add(matmul(a, B), matmul(b, A))
            if i != last:
                a, b = tanh(a), tanh(b)
        return a, b

    def eval(self, z: Tensor, mz: Tensor) -> Tensor:
        if z.shape != mz.shape:
            raise ValueError(f"shape mismatch: {z.shape} vs {mz.shape}")
        out_a, _ = self._apply_layers(z, mz)
        return tsum(out_a, axis=-1)

    def channels(self, a: Tensor, b: Tensor):
        """Both output channels; exposed for the equivariance tests."""
        return self._apply_layers(a, b)

    def config(self):
        return {"critic_kind": self.kind, "hidden": self.hidden,
                "layers": self.n_layers, "state_dim": self.state_dim}


def make_critic(kind: str, state_dim: int, hidden: int, seed: int = 0):
    if kind == "product":
        return ProductCritic(state_dim, hidden=hidden, seed=seed)
    if kind == "block":
        return BlockLinearCritic(state_dim, hidden=hidden, seed=seed)
    raise ValueError(f"unknown critic kind '{kind}'")
