"""Recurrent and dense layers built on the autodiff primitives."""
from typing import List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore


class Linear:
    def __init__(self, store: ParamStore, prefix: str, in_size: int, out_size: int, rng: np.random.Generator,
                 bias: bool = True):
        self.weight = store.add(f"{prefix}.W", (in_size, out_size), rng=rng)
        self.bias = store.add(f"{prefix}.b", (out_size,), init='zeros') if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.matmul(x, self.weight)
        return ad.add(out, self.bias) if self.bias is not None else out


class LSTM:
    """Single-layer LSTM with fused gates in the order input, forget, cell, output.

    The forget-gate bias starts at 1.0.
    """

    def __init__(self, store: ParamStore, prefix: str, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.weight = store.add(f"{prefix}.W", (input_size + hidden_size, 4 * hidden_size), rng=rng,
                                fan=(input_size + hidden_size, hidden_size))
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size:2 * hidden_size] = 1.0
        self.bias = store.add(f"{prefix}.b", (4 * hidden_size,), init=bias)

    def initial_state(self, batch: int) -> Tuple[Tensor, Tensor]:
        zeros = np.zeros((batch, self.hidden_size))
        return Tensor(zeros), Tensor(zeros)

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> Tuple[Tensor, Tensor]:
        gates = ad.add(ad.matmul(ad.concat([x, h], axis=-1), self.weight), self.bias)
        size = self.hidden_size
        i = ad.sigmoid(gates[:, :size])
        f = ad.sigmoid(gates[:, size:2 * size])
        g = ad.tanh(gates[:, 2 * size:3 * size])
        o = ad.sigmoid(gates[:, 3 * size:])
        c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_next = ad.mul(o, ad.tanh(c_next))
        return h_next, c_next

    def run(self, inputs: Tensor, mask: np.ndarray, reverse: bool = False,
            state: Optional[Tuple[Tensor, Tensor]] = None) -> Tuple[List[Tensor], Tensor]:
        """Run over ``inputs`` (B, T, D); padded steps (mask 0) carry the state through unchanged.

        Returns the per-step hidden states in time order and the final hidden state.
        """
        batch, steps = mask.shape
        h, c = state if state is not None else self.initial_state(batch)
        outputs: List[Optional[Tensor]] = [None] * steps
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        for t in order:
            valid = mask[:, t:t + 1].astype(bool)
            if not valid.any():
                outputs[t] = h
                continue
            h_new, c_new = self.step(inputs[:, t, :], h, c)
            if valid.all():
                h, c = h_new, c_new
            else:
                h, c = ad.where(valid, h_new, h), ad.where(valid, c_new, c)
            outputs[t] = h
        return outputs, h
