"""
Dense leaky-ReLU networks over a flat parameter vector.

The layers are a torch `nn.Sequential` evaluated with `torch.func.functional_call`,
so the optimizers can treat a network like any other numpy parameter array while
torch autograd supplies vector-Jacobian products and Jacobians. Layout per layer:
weight (out, in) row-major, then bias (out,).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.func import functional_call, jacrev

from fgel.models.dataset import RngStream

NEGATIVE_SLOPE = 0.2
DTYPE = torch.float64


@dataclass
class ForwardCache:
    params: torch.Tensor   # flat leaf the outputs were computed from
    outputs: torch.Tensor


def _tensor(values) -> torch.Tensor:
    return torch.tensor(np.asarray(values, dtype=float), dtype=DTYPE)


class Mlp:
    def __init__(self, input_dim: int, hidden: list[int], output_dim: int, negative_slope: float = NEGATIVE_SLOPE):
        if input_dim < 1 or output_dim < 1 or any(w < 1 for w in hidden):
            raise ValueError(f"Layer widths must be positive, got {input_dim}, {hidden}, {output_dim}")
        self.input_dim = input_dim
        self.hidden = list(hidden)
        self.output_dim = output_dim
        self.negative_slope = negative_slope
        widths = [input_dim, *self.hidden, output_dim]
        self.shapes = [(widths[i + 1], widths[i]) for i in range(len(widths) - 1)]

        layers: list[nn.Module] = []
        for index, (out_dim, in_dim) in enumerate(self.shapes):
            layers.append(nn.Linear(in_dim, out_dim, dtype=DTYPE))
            if index < len(self.shapes) - 1:
                layers.append(nn.LeakyReLU(negative_slope))
        self.module = nn.Sequential(*layers)

        # named_parameters yields weight then bias per layer, matching the flat layout
        self._layout = []
        offset = 0
        for name, param in self.module.named_parameters():
            self._layout.append((name, slice(offset, offset + param.numel()), tuple(param.shape)))
            offset += param.numel()
        self.n_params = offset

    def _unflatten(self, flat: torch.Tensor) -> dict[str, torch.Tensor]:
        if flat.shape != (self.n_params,):
            raise ValueError(f"Expected {self.n_params} parameters, got shape {tuple(flat.shape)}")
        return {name: flat[part].reshape(shape) for name, part, shape in self._layout}

    def _inputs(self, inputs: np.ndarray) -> torch.Tensor:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        if inputs.shape[1] != self.input_dim:
            raise ValueError(f"Expected inputs with {self.input_dim} columns, got shape {inputs.shape}")
        return _tensor(inputs)

    def init_params(self, rng: RngStream) -> np.ndarray:
        """Glorot-uniform weights, zero biases."""
        params = np.zeros(self.n_params)
        gen = rng.generator
        for name, part, shape in self._layout:
            if name.endswith("weight"):
                out_dim, in_dim = shape
                bound = np.sqrt(6.0 / (in_dim + out_dim))
                params[part] = gen.uniform(-bound, bound, size=out_dim * in_dim)
        return params

    def output_bias(self) -> slice:
        return self._layout[-1][1]

    def forward(self, params: np.ndarray, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        flat = _tensor(params).requires_grad_(True)
        outputs = functional_call(self.module, self._unflatten(flat), (self._inputs(inputs),))
        return outputs.detach().numpy(), ForwardCache(flat, outputs)

    def __call__(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return functional_call(self.module, self._unflatten(_tensor(params)), (self._inputs(inputs),)).numpy()

    def backward(self, cache: ForwardCache, grad_out: np.ndarray) -> np.ndarray:
        """Vector-Jacobian product: gradient of sum_i <grad_out_i, out_i> w.r.t. params."""
        (grad,) = torch.autograd.grad(cache.outputs, cache.params, grad_outputs=_tensor(grad_out))
        return grad.numpy()

    def jacobian(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Per-sample Jacobian of the outputs, shape (n, output_dim, n_params)."""
        x = self._inputs(inputs)
        jac = jacrev(lambda flat: functional_call(self.module, self._unflatten(flat), (x,)))(_tensor(params))
        return jac.numpy()

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "output_dim": self.output_dim,
            "negative_slope": self.negative_slope,
            "n_params": self.n_params,
        }

    def __repr__(self):
        return f"<Mlp {self.input_dim} -> {self.hidden} -> {self.output_dim}>"
