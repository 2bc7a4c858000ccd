"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox-keyed stream in
which the n-th double is a pure function of (seed, n).  One Philox counter
increment emits four 64-bit words and Generator.random consumes exactly one
word per double, so advance(c) positions the double stream at index 4c;
block offsets are therefore padded to multiples of 4, and any 4-aligned
chunking of the same index range reproduces identical numbers.  Parallel
and serial traversals of a block agree bit for bit.

Normal variates are the inverse normal CDF of the uniform stream.  A
ziggurat sampler would consume a data-dependent number of uniforms per
normal and void the indexing contract.
"""

import numpy as np
from scipy.special import ndtri

# random() emits 53-bit uniforms in [0, 1); 0.0 occurs with probability
# 2^-53 and would map to -inf, so the stream is floored just below the
# smallest positive emitted value.
_U_FLOOR = 2.0 ** -54


def aligned(n):
    """Smallest multiple of 4 that is >= n (Philox emits 4 doubles per counter tick)."""
    return -4 * (-int(n) // 4)


def uniform_stream(seed, start, n):
    """Doubles start .. start+n-1 of the stream keyed by seed. start must be 4-aligned."""
    if start % 4 != 0:
        raise ValueError("stream offset %d is not 4-aligned" % start)
    bg = np.random.Philox(key=int(seed))
    bg.advance(start // 4)
    return np.random.Generator(bg).random(int(n))


def normal_stream(seed, start, n):
    """Standard normals start .. start+n-1 of the stream keyed by seed."""
    u = uniform_stream(seed, start, n)
    return ndtri(np.maximum(u, _U_FLOOR))


def double_at(seed, index):
    """Reference accessor for a single stream element (contract checks)."""
    bg = np.random.Philox(key=int(seed))
    bg.advance(int(index) // 4)
    return np.random.Generator(bg).random(4)[int(index) % 4]


def derive_seed(seed, *tags):
    """A 64-bit sub-seed that is a pure function of (seed, tags).

    Used to hand independent streams to auxiliary randomness (pool shuffles,
    sliced-W1 projections, bootstrap draws) without touching the particle
    stream layout.
    """
    ss = np.random.SeedSequence([int(seed)] + [int(t) & 0xFFFFFFFF for t in tags])
    return int(ss.generate_state(1, np.uint64)[0])


def generator(seed, *tags):
    """A numpy Generator on a Philox stream keyed by derive_seed(seed, *tags)."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *tags)))
