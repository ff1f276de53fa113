import numpy as np

DEFAULT_DTYPE = np.float32


class NonFiniteError(FloatingPointError):
    """Raised when NaN or Inf shows up in an activation, gradient or update."""


def check_finite(array, what="tensor"):
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f"non-finite values in {what}")
    return array


class Tensor:
    """Dense array with an optional gradient slot.

    Storage is a numpy array (row-major); ``grad`` is allocated lazily and
    always has the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, name="", dtype=DEFAULT_DTYPE):
        self.data = check_finite(np.ascontiguousarray(data, dtype=dtype), name or "tensor")
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g):
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} != tensor shape {self.data.shape} ({self.name})")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def astype(self, dtype):
        t = Tensor(self.data, self.name, dtype=dtype)
        return t

    def __repr__(self):
        return f"Tensor({self.name or '?'}, shape={self.shape}, dtype={self.data.dtype})"
