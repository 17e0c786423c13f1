"""A minimal reverse-mode tape over numpy arrays.

Only the handful of operations the facility-location network needs are
provided. Each op appends a closure to the tape that maps the output
gradient to input gradients; :meth:`Tape.backward` replays them in reverse.
"""

import numpy as np


class Var:
    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad):
        self.value = value
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


class Tape:
    def __init__(self):
        self._ops = []

    def __len__(self):
        return len(self._ops)

    def var(self, value, requires_grad=True):
        return Var(np.asarray(value, dtype=np.float64), requires_grad)

    def const(self, value):
        return self.var(value, requires_grad=False)

    def _out(self, value, inputs, backward):
        needs = any(v.requires_grad for v in inputs)
        out = Var(value, needs)
        if needs:
            self._ops.append((out, backward))
        return out

    # --- ops -----------------------------------------------------------------

    def concat_last(self, parts):
        """Stack tensors along a new trailing axis, broadcasting the others."""
        shape = np.broadcast_shapes(*(p.shape for p in parts))
        value = np.stack([np.broadcast_to(p.value, shape) for p in parts], axis=-1)

        def backward(g):
            for i, p in enumerate(parts):
                if p.requires_grad:
                    p._accumulate(_unbroadcast(g[..., i], p.shape))
        return self._out(value, parts, backward)

    def affine(self, x, weight, bias):
        """``x @ weight + bias`` over the last axis."""
        value = x.value @ weight.value + bias.value

        def backward(g):
            flat_x = x.value.reshape(-1, x.shape[-1])
            flat_g = g.reshape(-1, g.shape[-1])
            weight._accumulate(flat_x.T @ flat_g)
            bias._accumulate(flat_g.sum(axis=0))
            if x.requires_grad:
                x._accumulate(g @ weight.value.T)
        return self._out(value, (x, weight, bias), backward)

    def relu(self, x):
        active = x.value > 0
        value = np.where(active, x.value, 0.0)

        def backward(g):
            x._accumulate(np.where(active, g, 0.0))
        return self._out(value, (x,), backward)

    def squeeze_last(self, x):
        value = x.value[..., 0]

        def backward(g):
            x._accumulate(g[..., None])
        return self._out(value, (x,), backward)

    def add(self, a, b):
        value = a.value + b.value

        def backward(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(g, b.shape))
        return self._out(value, (a, b), backward)

    def scale(self, x, factor):
        """Multiply by a constant array broadcast against ``x``."""
        factor = np.asarray(factor, dtype=np.float64)
        value = x.value * factor

        def backward(g):
            x._accumulate(_unbroadcast(g * factor, x.shape))
        return self._out(value, (x,), backward)

    def segment_sum(self, x, indptr, segment_ids):
        """Sum contiguous, nonempty segments of the last axis."""
        value = np.add.reduceat(x.value, indptr[:-1], axis=-1)

        def backward(g):
            x._accumulate(g[..., segment_ids])
        return self._out(value, (x,), backward)

    def gather(self, x, index):
        """``x[..., index]`` with scatter-add in the backward pass."""
        value = x.value[..., index]
        size = x.shape[-1]

        def backward(g):
            flat = g.reshape(-1, g.shape[-1])
            out = np.zeros((flat.shape[0], size))
            for row in range(flat.shape[0]):
                out[row] = np.bincount(index, weights=flat[row], minlength=size)
            x._accumulate(out.reshape(x.shape))
        return self._out(value, (x,), backward)

    def slice0(self, x, start, stop):
        value = x.value[start:stop]

        def backward(g):
            full = np.zeros(x.shape)
            full[start:stop] = g
            x._accumulate(full)
        return self._out(value, (x,), backward)

    def sum0(self, x):
        value = x.value.sum(axis=0)

        def backward(g):
            x._accumulate(np.broadcast_to(g, x.shape))
        return self._out(value, (x,), backward)

    def clip01(self, x):
        """Hard clip to ``[0, 1]``; zero gradient on and beyond the boundary."""
        inside = (x.value > 0.0) & (x.value < 1.0)
        value = np.clip(x.value, 0.0, 1.0)

        def backward(g):
            x._accumulate(np.where(inside, g, 0.0))
        return self._out(value, (x,), backward)

    # --- reverse pass --------------------------------------------------------

    def backward(self, out, grad):
        """Single use: the recorded ops and intermediate gradients are released."""
        out.grad = np.array(grad, dtype=np.float64, copy=True)
        ops, self._ops = self._ops, []
        while ops:
            var, fn = ops.pop()
            if var.grad is not None:
                fn(var.grad)
            var.grad = None


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g
