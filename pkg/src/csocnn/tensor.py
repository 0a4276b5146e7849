"""Dense n-dimensional tensors: shape metadata over flat row-major data.

All heavy math in the package runs on the underlying numpy array
(``Tensor.array``); the class exists to give module boundaries a checked,
value-like currency.
"""

import numpy as np

from .errors import ShapeError


class Tensor:
    """A dense numeric array with explicit shape.

    Construction validates that the flat data length matches the shape and,
    in checked mode (the default), that every stored value is finite.
    """

    __slots__ = ("array",)

    def __init__(self, values, shape=None, dtype=None, checked=True):
        arr = np.asarray(values, dtype=dtype)
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if any(s <= 0 for s in shape):
                raise ShapeError(f"non-positive dimension in shape {shape}")
            if arr.size != int(np.prod(shape)):
                raise ShapeError(
                    f"data of length {arr.size} cannot fill shape {shape}"
                )
            arr = arr.reshape(shape)
        if not np.issubdtype(arr.dtype, np.number):
            raise ShapeError(f"non-numeric tensor dtype {arr.dtype}")
        if checked and not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains NaN or Inf values")
        self.array = arr

    @property
    def shape(self):
        return self.array.shape

    @property
    def size(self):
        return int(self.array.size)

    @property
    def data(self):
        """Flat row-major view of the stored values."""
        return self.array.reshape(-1)

    def astype(self, dtype):
        return Tensor(self.array.astype(dtype), checked=False)

    def copy(self):
        return Tensor(self.array.copy(), checked=False)

    def __getitem__(self, idx):
        return self.array[idx]

    def __len__(self):
        return len(self.array)

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.array.astype(dtype)
        return self.array

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.array.dtype})"


def as_array(batch):
    """Accept a Tensor or anything numpy can view as an array."""
    if isinstance(batch, Tensor):
        return batch.array
    return np.asarray(batch)


def zeros(shape, dtype=np.float32):
    return Tensor(np.zeros(shape, dtype=dtype), checked=False)
