"""Adam optimizer with per-parameter first/second moment state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, ShapeError
from .tensor import Tensor

__all__ = ["AdamState", "Adam"]

_f32 = np.float32


@dataclass
class AdamState:
    """Moment buffers for one parameter tensor."""

    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> "AdamState":
        return cls(np.zeros(shape, dtype=_f32), np.zeros(shape, dtype=_f32))


@dataclass
class Adam:
    """Bias-corrected Adam over a name -> Tensor parameter dict.

    Updates are applied in place. A non-finite gradient raises
    DivergenceError naming the offending parameter.
    """

    params: dict[str, Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    state: dict[str, AdamState] = field(default_factory=dict)

    def __post_init__(self):
        for name, p in self.params.items():
            if name not in self.state:
                self.state[name] = AdamState.zeros(p.shape)
            elif self.state[name].m.shape != p.shape:
                raise ShapeError(
                    f"adam state for {name!r} has shape {self.state[name].m.shape}, "
                    f"parameter has {p.shape}"
                )

    def step(self) -> None:
        """Apply one update from the gradients currently on the parameters."""
        self.step_count += 1
        b1, b2 = _f32(self.beta1), _f32(self.beta2)
        c1 = _f32(1.0 - self.beta1 ** self.step_count)
        c2 = _f32(1.0 - self.beta2 ** self.step_count)
        lr, eps = _f32(self.lr), _f32(self.eps)
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise DivergenceError(f"non-finite gradient for parameter {name!r}")
            st = self.state[name]
            st.m *= b1
            st.m += (1 - b1) * g
            st.v *= b2
            st.v += (1 - b2) * (g * g)
            mhat = st.m / c1
            vhat = st.v / c2
            p.data -= lr * mhat / (np.sqrt(vhat) + eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
