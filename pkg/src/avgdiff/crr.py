"""Cox-Ross-Rubinstein binomial lattice pricer.

Kept deliberately independent of the Dynkin engines: risk-neutral
recombining lattice, multiplicative moves ``u = exp(sigma sqrt(dt))``,
``d = 1/u``, discounted backward induction.  Serves as the external
cross-check for American put values produced by the scheme-based
engines.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidModelError

__all__ = ["crr_put"]


def crr_put(S0: float, K: float, r: float, sigma: float, T: float, n_steps: int,
            american: bool = True) -> float:
    """Binomial put price on a recombining lattice with ``n_steps`` levels.

    Parameters
    ----------
    S0, K : float
        Spot and strike, both positive.
    r : float
        Continuously compounded rate.
    sigma : float
        Volatility, positive.
    T : float
        Maturity in years, positive.
    n_steps : int
        Lattice levels.
    american : bool, optional
        Early exercise allowed when True (default), European otherwise.
    """
    if S0 <= 0 or K <= 0 or sigma <= 0 or T <= 0:
        raise InvalidModelError("S0, K, sigma and T must all be positive")
    if n_steps < 1 or n_steps != int(n_steps):
        raise InvalidModelError(f"n_steps must be a positive integer, got {n_steps!r}")
    n = int(n_steps)
    dt = T / n
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    disc = math.exp(-r * dt)
    p = (math.exp(r * dt) - d) / (u - d)
    if not (0.0 < p < 1.0):
        raise InvalidModelError(f"risk-neutral probability {p:.6f} outside (0, 1); "
                                "reduce dt or check parameters")
    j = np.arange(n + 1)
    prices = S0 * u**j * d ** (n - j)
    values = np.maximum(K - prices, 0.0)
    for level in range(n - 1, -1, -1):
        values = disc * (p * values[1:] + (1.0 - p) * values[:-1])
        if american:
            prices = S0 * u ** np.arange(level + 1) * d ** (level - np.arange(level + 1))
            values = np.maximum(values, K - prices)
    return float(values[0])
