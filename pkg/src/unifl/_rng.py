"""Counter-based random streams.

All sampling draws uniforms from numpy's Philox4x64 generator keyed by the
user seed. A stream is a sequence of *rows*; row ``j`` holds one uniform per
vertex (padded to a multiple of four so rows start on a counter boundary).
Row ``j`` can be produced directly by advancing the counter, so drawing rows
one at a time or as a block gives bit-identical values. This is what makes
``sample_simple(seed, sample_index=s)`` agree with row ``s`` of a vectorized
Monte Carlo run.
"""

import numpy as np


def _row_width(n):
    return max(4, -(-n // 4) * 4)


def uniform_rows(seed, start, count, n):
    """Return a ``(count, n)`` array holding rows ``start .. start+count-1``."""
    width = _row_width(n)
    bitgen = np.random.Philox(int(seed))
    if start:
        bitgen.advance(start * width // 4)
    return np.random.Generator(bitgen).random((count, width))[:, :n]


def uniform_row(seed, index, n):
    return uniform_rows(seed, index, 1, n)[0]
