from typing import Optional, Sequence

import numpy as np


class Tensor:
    """Dense float64 array with an optional gradient buffer of the same shape.

    ``velocity`` holds the SGD momentum buffer; it lives here rather than in the
    optimizer so that masking a parameter can zero it in place.
    """

    __slots__ = ("values", "grad", "velocity", "sq_grad")

    def __init__(self, values, grad: Optional[np.ndarray] = None):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        if grad is not None:
            grad = np.ascontiguousarray(grad, dtype=np.float64)
            if grad.shape != self.values.shape:
                raise ValueError(f"grad shape {grad.shape} != values shape {self.values.shape}")
        self.grad = grad
        self.velocity: Optional[np.ndarray] = None
        # Accumulated per-sample squared gradients (empirical Fisher diagonal).
        self.sq_grad: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        return cls(np.zeros(tuple(shape)))

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.values)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"
