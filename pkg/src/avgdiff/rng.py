"""Counter-based random-stream derivation.

Every stochastic routine in the package draws from a Philox generator
keyed by a master seed plus an integer stream index.  Distinct indices
give statistically independent streams, and the mapping is pure: the
same ``(seed, stream)`` pair always yields the same stream, regardless
of how many other streams were opened before it.
"""

from __future__ import annotations

import numpy as np


def derived_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a Generator for the stream ``(seed, *stream)``.

    Parameters
    ----------
    seed : int
        Master seed, recorded in run manifests.
    *stream : int
        Optional stream coordinates, e.g. a path index or an epsilon
        index.  ``derived_rng(s)`` and ``derived_rng(s, 0)`` are
        different streams.

    Returns
    -------
    numpy.random.Generator backed by Philox (counter based, jumpable).
    """
    entropy = (int(seed),) + tuple(int(k) for k in stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
