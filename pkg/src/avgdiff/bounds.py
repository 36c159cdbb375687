"""Theoretical strong-approximation constants.

The coupling theorem behind the diffusion approximation guarantees an
error of order ``eps**delta`` once ``eps`` is below a threshold
``eps0``; both constants are explicit in the dimension.  They are
astronomically conservative -- ``eps0`` in one dimension is around
``10**-1600`` -- so they are reported for reference only and never used
as runtime gates.  ``eps0`` is returned through its base-10 logarithm
to sidestep float underflow.
"""

from __future__ import annotations

import math

from .errors import InvalidModelError

__all__ = ["theoretical_bounds"]


def theoretical_bounds(d: int, M: int = 1) -> dict:
    """Convergence-rate exponent and validity threshold in dimension ``d``.

    Returns a dict with ``delta = 1 / (500 d)``, ``log10_epsilon0 =
    -2.5 (log10 2 + 640 d + 80 d log10 d)`` (the log of
    ``(2 * 10**(640 d) * d**(80 d))**(-5/2)``), the echoed moment order
    ``M``, and a note on interpretation.
    """
    if d != int(d) or d < 1:
        raise InvalidModelError(f"dimension must be a positive integer, got {d!r}")
    if M != int(M) or M < 1:
        raise InvalidModelError(f"moment order must be a positive integer, got {M!r}")
    d = int(d)
    delta = 1.0 / (500.0 * d)
    log10_eps0 = -2.5 * (math.log10(2.0) + 640.0 * d + 80.0 * d * math.log10(d))
    return {
        "d": d,
        "M": int(M),
        "delta": delta,
        "log10_epsilon0": log10_eps0,
        "note": ("threshold reported as log10; far below float underflow and "
                 "vastly smaller than any usable step size, so it is never "
                 "enforced at runtime"),
    }
