"""Dynkin game and American valuation on the discrete scheme.

The two-player stopping game pays ``G_s`` when the minimising player
stops first at ``s`` and ``F_t`` when the maximising player stops at
``t <= s``; the game is forced to end at step ``N_eps`` with the
terminal payout ``F`` (equal to ``G`` there).  For i.i.d. finite-support
noise the value solves the backward recursion

    ``V_n = min(G_n, max(F_n, E[V_{n+1} | step-n history]))``

with the conditional expectation reducing to an atom-weighted sum.

Three routes to the value are provided:

* :func:`value_exact_tree` - exact recursion over the full noise tree;
  handles path-dependent payoffs, cost ``k**N`` nodes.
* :func:`value_markov_grid` - backward induction on a state grid with
  linear interpolation; needs payoffs that are functions of ``(t,
  current state)``, scales to thousands of steps.
* :func:`value_bruteforce_oracle` - direct ``inf sup`` over every pair
  of adapted stopping strategies, enumerated as stop/continue maps on
  tree nodes.  Exponential in the node count; capped at three steps and
  two atoms.  Exists so the recursion engines can be checked against
  the game's definition rather than against themselves.

American valuation reuses the same recursions with the upper branch
disabled (:func:`american_value`).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .coefficients import FieldSpec
from .errors import (
    BoundaryEscapeError,
    EnumerationLimitError,
    InvalidModelError,
    NumericError,
    TreeTooDeepError,
    UnsupportedModeError,
)
from .noise import NoiseModel
from .scheme import reachable_radius, steps_for

__all__ = [
    "REGION_LABELS",
    "MarkovPayoff",
    "PayoffPair",
    "ValuationResult",
    "GridSpec",
    "exp_transform",
    "game_put_payoff",
    "american_put_payoff",
    "state_payoff",
    "value_exact_tree",
    "value_bruteforce_oracle",
    "value_markov_grid",
    "american_value",
]

REGION_LABELS = {0: "continue", 1: "player1-stop", 2: "player2-stop"}

_TIE_TOL = 1e-12


def exp_transform(x) -> np.ndarray:
    """Componentwise exponential of states or whole paths.

    Turns additive (log-price) dynamics into multiplicative ones for
    option-style payoffs.  Raises :class:`NumericError` on overflow.
    """
    with np.errstate(over="ignore"):
        out = np.exp(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(out)):
        raise NumericError("exp transform overflowed")
    return out


@dataclass(frozen=True)
class MarkovPayoff:
    """Vectorised state-form payoffs ``(t, states (m, d)) -> (m,)``."""

    F_state: Callable[[float, np.ndarray], np.ndarray]
    G_state: Callable[[float, np.ndarray], np.ndarray]


@dataclass
class PayoffPair:
    """Lower payoff ``F`` and upper payoff ``G`` of the stopping game.

    ``F`` and ``G`` are path functionals called as ``F(t, states)``
    where ``states`` is the ``(n+1, d)`` array of scheme states up to
    the current step (read-only view).  ``G >= F`` must hold before the
    horizon and ``G = F`` at it; engines spot-check both while they
    run.  ``markov`` carries the state-form payoffs when they exist,
    unlocking the grid engine; ``lipschitz_K`` is the declared payoff
    Lipschitz constant used for certified interpolation-error reports.
    """

    F: Callable[[float, np.ndarray], float]
    G: Callable[[float, np.ndarray], float]
    lipschitz_K: float
    markov: Optional[MarkovPayoff] = None
    kind: str = "custom"
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if not (self.lipschitz_K > 0):
            raise InvalidModelError(f"lipschitz_K must be positive, got {self.lipschitz_K}")

    def to_config(self) -> dict:
        cfg = {"kind": self.kind}
        cfg.update(self.params)
        return cfg


def game_put_payoff(strike: float, rate: float = 0.0, penalty: float = 0.05,
                    T: float = 1.0) -> PayoffPair:
    """Israeli-style put on the exponentiated first coordinate.

    ``F_t = e^{-rate t} (strike - e^{x_t})_+`` and ``G_t = F_t +
    penalty e^{-rate t}`` before the horizon ``T``, collapsing to ``F``
    at it.  In the log coordinate the put is globally Lipschitz with
    constant ``strike``.
    """
    if strike <= 0:
        raise InvalidModelError(f"strike must be positive, got {strike}")
    if penalty < 0:
        raise InvalidModelError(f"penalty must be nonnegative, got {penalty}")
    K, r, dlt, Th = float(strike), float(rate), float(penalty), float(T)

    def F_state(t, x):
        return math.exp(-r * t) * np.maximum(K - exp_transform(x[..., 0]), 0.0)

    def G_state(t, x):
        if t >= Th - 1e-12:
            return F_state(t, x)
        return F_state(t, x) + dlt * math.exp(-r * t)

    def F(t, states):
        return float(F_state(t, states[-1][None, :])[0])

    def G(t, states):
        return float(G_state(t, states[-1][None, :])[0])

    return PayoffPair(F=F, G=G, lipschitz_K=K,
                      markov=MarkovPayoff(F_state=F_state, G_state=G_state),
                      kind="game_put", params={"K": K, "r": r, "delta": dlt, "T": Th})


def american_put_payoff(strike: float, rate: float = 0.0, T: float = 1.0) -> PayoffPair:
    """Put payoff for American valuation.

    The upper payoff is set ``strike + 1`` above ``F`` so that a Dynkin
    engine run on this pair never activates the cancellation branch;
    :func:`american_value` ignores ``G`` outright.  The equivalence of
    the two readings is what the audit tests exercise.
    """
    return game_put_payoff(strike, rate, penalty=float(strike) + 1.0, T=T)


def state_payoff(f_state: Callable[[float, np.ndarray], np.ndarray],
                 gap: Callable[[float], float], lipschitz_K: float,
                 kind: str = "state", params: Optional[dict] = None) -> PayoffPair:
    """Payoff pair from a vectorised state function and a gap profile.

    ``F_t(x) = f_state(t, x)`` and ``G_t = F_t + gap(t)``; supply a gap
    with ``gap(T) = 0`` so the terminal collapse holds.
    """

    def G_state(t, x):
        return f_state(t, x) + gap(t)

    def F(t, states):
        return float(f_state(t, states[-1][None, :])[0])

    def G(t, states):
        return F(t, states) + gap(t)

    return PayoffPair(F=F, G=G, lipschitz_K=lipschitz_K,
                      markov=MarkovPayoff(F_state=f_state, G_state=G_state),
                      kind=kind, params=params or {})


@dataclass
class ValuationResult:
    """Value of one stopping problem plus engine diagnostics.

    ``stop_regions`` (when recorded) is a list over steps ``n = 0..N``
    of ``(states, codes)`` pairs with codes 0 = continue, 1 = player 1
    stops (upper payoff binds), 2 = player 2 stops (lower payoff
    binds); terminal nodes are coded 2 since the forced payout is the
    lower payoff.
    """

    value: float
    engine: str
    eps: float
    n_steps: int
    diagnostics: dict
    stop_regions: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None


def _require_iid_support(noise: NoiseModel, engine: str):
    if not noise.iid:
        raise UnsupportedModeError(
            f"{engine} engine needs i.i.d. noise; dependent models are simulation-only")
    if noise.support is None:
        raise UnsupportedModeError(f"{engine} engine needs finite noise support")


def _classify(f: float, g: float, cont: float, american: bool) -> tuple:
    """Value and region code of one node given both payoffs and the
    continuation value.  Ties always classify as continue."""
    if american:
        return max(f, cont), (2 if f > cont + _TIE_TOL else 0)
    lower = max(f, cont)
    v = min(g, lower)
    if g < lower - _TIE_TOL:
        code = 1
    elif f > cont + _TIE_TOL:
        code = 2
    else:
        code = 0
    return v, code


def _check_order(f, g, t, terminal: bool):
    if terminal:
        if abs(g - f) > 1e-9 * (1.0 + abs(f)):
            raise InvalidModelError(
                f"payoffs must coincide at the horizon, got F={f!r} G={g!r} at t={t}")
    elif g < f - _TIE_TOL:
        raise InvalidModelError(f"upper payoff below lower payoff at t={t}: G={g!r} < F={f!r}")


# ---------------------------------------------------------------------------
# exact tree engine


def value_exact_tree(payoffs: PayoffPair, field: FieldSpec, noise: NoiseModel,
                     x0, eps: float, T: float, depth_cap: int = 24,
                     node_budget: int = 4_000_000,
                     record_regions: bool = True) -> ValuationResult:
    """Exact backward recursion over the full noise tree.

    Supports arbitrary path-dependent payoffs.  The tree has
    ``k**N_eps`` leaves for ``k`` atoms, so both a depth cap and a node
    budget guard the call; exceeding either raises
    :class:`TreeTooDeepError`.
    """
    _require_iid_support(noise, "tree")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n_steps = steps_for(eps, T)
    sup = noise.support
    k = sup.size
    if n_steps > depth_cap:
        raise TreeTooDeepError(f"{n_steps} levels exceed the depth cap {depth_cap}")
    if k**n_steps > node_budget:
        raise TreeTooDeepError(f"{k}**{n_steps} leaves exceed the node budget {node_budget}")

    h = eps**2
    atoms = sup.atoms
    probs = sup.probs
    buf = np.empty((n_steps + 1, field.d))
    buf[0] = x0
    view = buf.view()
    view.flags.writeable = False
    regions: Optional[List[List[tuple]]] = [[] for _ in range(n_steps + 1)] if record_regions else None
    counters = {"nodes": 0, "sandwich_violations": 0, "player1_nodes": 0, "player2_nodes": 0}

    def rec(n: int) -> float:
        counters["nodes"] += 1
        prefix = view[: n + 1]
        if n == n_steps:
            v = payoffs.F(T, prefix)
            g = payoffs.G(T, prefix)
            _check_order(v, g, T, terminal=True)
            if regions is not None:
                regions[n].append((buf[n].copy(), 2))
            return v
        t = n * h
        cont = 0.0
        xcur = buf[n][None, :]
        for a, p in zip(atoms, probs):
            child = xcur + eps * field.B(xcur, a[None, :]) + eps**2 * field.b(xcur, a[None, :])
            if not np.all(np.isfinite(child)):
                raise NumericError(f"non-finite child state at step {n}")
            buf[n + 1] = child[0]
            cont += p * rec(n + 1)
        f = payoffs.F(t, prefix)
        g = payoffs.G(t, prefix)
        _check_order(f, g, t, terminal=False)
        v, code = _classify(f, g, cont, american=False)
        if v < f - 1e-9 or v > g + 1e-9:
            counters["sandwich_violations"] += 1
        if code == 1:
            counters["player1_nodes"] += 1
        elif code == 2:
            counters["player2_nodes"] += 1
        if regions is not None:
            regions[n].append((buf[n].copy(), code))
        return v

    value = rec(0)
    stop_regions = None
    if regions is not None:
        stop_regions = [(np.array([s for s, _ in lvl]).reshape(-1, field.d),
                         np.array([c for _, c in lvl], dtype=np.int8)) for lvl in regions]
    diag = {
        "node_count": counters["nodes"],
        "atom_count": k,
        "sandwich_violations": counters["sandwich_violations"],
        "player1_stop_nodes": counters["player1_nodes"],
        "player2_stop_nodes": counters["player2_nodes"],
        "terminal_time": T,
    }
    return ValuationResult(value=float(value), engine="tree", eps=eps,
                           n_steps=n_steps, diagnostics=diag, stop_regions=stop_regions)


# ---------------------------------------------------------------------------
# enumeration oracle


def value_bruteforce_oracle(payoffs: PayoffPair, field: FieldSpec, noise: NoiseModel,
                            x0, eps: float, T: float, max_steps: int = 3) -> float:
    """``inf_zeta sup_eta E R(zeta, eta)`` by strategy enumeration.

    A stopping strategy is a stop/continue map on the interior tree
    nodes (a map from observable histories, hence adapted); "never
    stop" falls through to the forced terminal payout.  All ``2**M``
    maps per player are enumerated, ``M`` the interior node count, and
    the exact expectation of the stopped payoff is taken over all noise
    paths.  Hard-capped at ``max_steps`` levels and two atoms.
    """
    _require_iid_support(noise, "enumeration")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n_steps = steps_for(eps, T)
    sup = noise.support
    k = sup.size
    if n_steps > max_steps or k > 2:
        raise EnumerationLimitError(
            f"oracle handles at most {max_steps} steps with 2 atoms, got N={n_steps}, k={k}")

    h = eps**2
    # interior node ids: level n holds k**n nodes starting at offset[n]
    offsets = np.cumsum([0] + [k**n for n in range(n_steps)])
    M = int(offsets[-1])
    n_maps = 2**M
    maps = np.arange(n_maps, dtype=np.int64)

    paths = list(itertools.product(range(k), repeat=n_steps))
    value_inner = np.zeros((n_maps, n_maps))
    for digits in paths:
        prob = 1.0
        states = np.empty((n_steps + 1, field.d))
        states[0] = x0
        for n, a_idx in enumerate(digits):
            prob *= sup.probs[a_idx]
            xcur = states[n][None, :]
            a = sup.atoms[a_idx][None, :]
            states[n + 1] = (xcur + eps * field.B(xcur, a) + eps**2 * field.b(xcur, a))[0]
        Fv = np.empty(n_steps + 1)
        Gv = np.empty(n_steps + 1)
        for n in range(n_steps):
            t = n * h
            Fv[n] = payoffs.F(t, states[: n + 1])
            Gv[n] = payoffs.G(t, states[: n + 1])
            _check_order(Fv[n], Gv[n], t, terminal=False)
        Fv[n_steps] = payoffs.F(T, states)
        Gv[n_steps] = Fv[n_steps]

        # node ids visited along this path, one per interior level
        ids = []
        idx = 0
        for n in range(n_steps):
            ids.append(int(offsets[n]) + idx)
            idx = idx * k + digits[n]
        stops = np.full(n_maps, n_steps, dtype=np.int64)
        for n in range(n_steps - 1, -1, -1):
            hit = (maps >> ids[n]) & 1
            stops = np.where(hit == 1, n, stops)

        s = stops[:, None]
        t_ = stops[None, :]
        payoff = np.where(s < t_, Gv[s], Fv[t_])
        value_inner += prob * payoff

    return float(np.min(np.max(value_inner, axis=1)))


# ---------------------------------------------------------------------------
# grid engine


@dataclass
class GridSpec:
    """Uniform value grid: bounds and spacing per dimension."""

    lo: np.ndarray
    hi: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        self.spacing = np.atleast_1d(np.asarray(self.spacing, dtype=float))
        if not (self.lo.shape == self.hi.shape == self.spacing.shape):
            raise InvalidModelError("grid lo/hi/spacing must have matching shapes")
        if np.any(self.spacing <= 0) or np.any(self.hi <= self.lo):
            raise InvalidModelError("grid needs hi > lo and positive spacing")

    @property
    def d(self) -> int:
        return self.lo.shape[0]

    def axes(self) -> List[np.ndarray]:
        out = []
        for j in range(self.d):
            n = int(round((self.hi[j] - self.lo[j]) / self.spacing[j])) + 1
            out.append(self.lo[j] + self.spacing[j] * np.arange(n))
        return out

    @classmethod
    def cover(cls, field: FieldSpec, eps: float, T: float, x0, spacing,
              margin: float = 0.0) -> "GridSpec":
        """Grid guaranteed to contain every reachable state."""
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        rad = reachable_radius(field, eps, T) + margin
        spacing = np.broadcast_to(np.asarray(spacing, dtype=float), x0.shape)
        return cls(lo=x0 - rad - spacing, hi=x0 + rad + spacing, spacing=spacing.copy())


def _grid_value(payoffs: PayoffPair, field: FieldSpec, noise: NoiseModel, x0,
                eps: float, T: float, grid: GridSpec, american: bool,
                record_regions: bool) -> ValuationResult:
    _require_iid_support(noise, "grid")
    if payoffs.markov is None:
        raise UnsupportedModeError(
            "grid engine needs state-form payoffs; use the tree engine for path functionals")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if grid.d != field.d:
        raise InvalidModelError(f"grid dimension {grid.d} != field dimension {field.d}")
    n_steps = steps_for(eps, T)
    rad = reachable_radius(field, eps, T)
    if np.any(x0 - rad < grid.lo - 1e-12) or np.any(x0 + rad > grid.hi + 1e-12):
        raise BoundaryEscapeError(
            "grid does not cover the reachable region; need at least "
            f"[{(x0 - rad).tolist()}, {(x0 + rad).tolist()}]")

    axes = grid.axes()
    h = eps**2
    sup = noise.support
    one_d = field.d == 1
    if one_d:
        nodes_flat = axes[0][:, None]
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes_flat = np.stack([m.reshape(-1) for m in mesh], axis=1)
    shape = tuple(len(ax) for ax in axes)
    n_nodes = nodes_flat.shape[0]

    # children are step images of the grid; they do not move between
    # backward sweeps, so compute them once per atom.  Children of nodes
    # outside the reachable ball may leave the grid; clamping them is safe
    # because those nodes never feed back into the value at x0 (the coverage
    # precheck above guarantees every influencing query stays interior).
    children = []
    for a in sup.atoms:
        ab = np.broadcast_to(a, nodes_flat.shape)
        ch = nodes_flat + eps * field.B(nodes_flat, ab) + eps**2 * field.b(nodes_flat, ab)
        if not np.all(np.isfinite(ch)):
            raise NumericError("non-finite child state on the value grid")
        children.append(np.clip(ch, grid.lo, grid.hi))

    if not one_d:
        from scipy.interpolate import RegularGridInterpolator

    codes_all = (np.zeros((n_steps + 1, n_nodes), dtype=np.int8)
                 if record_regions else None)
    sandwich_violations = 0

    F_state, G_state = payoffs.markov.F_state, payoffs.markov.G_state
    V = np.asarray(F_state(T, nodes_flat), dtype=float)
    g_term = np.asarray(G_state(T, nodes_flat), dtype=float)
    if np.max(np.abs(g_term - V)) > 1e-9 * (1.0 + float(np.max(np.abs(V)))):
        raise InvalidModelError("payoffs must coincide at the horizon on the grid")
    if codes_all is not None:
        codes_all[n_steps] = 2

    for n in range(n_steps - 1, -1, -1):
        if one_d:
            cont = np.zeros(n_nodes)
            for ch, p in zip(children, sup.probs):
                cont += p * np.interp(ch[:, 0], axes[0], V)
        else:
            itp = RegularGridInterpolator(axes, V.reshape(shape), method="linear",
                                          bounds_error=True)
            cont = np.zeros(n_nodes)
            for ch, p in zip(children, sup.probs):
                cont += p * itp(ch)
        t = n * h
        f = np.asarray(F_state(t, nodes_flat), dtype=float)
        if american:
            V = np.maximum(f, cont)
            if codes_all is not None:
                codes_all[n] = np.where(f > cont + _TIE_TOL, 2, 0).astype(np.int8)
        else:
            g = np.asarray(G_state(t, nodes_flat), dtype=float)
            bad = int(np.sum(g < f - _TIE_TOL))
            if bad:
                raise InvalidModelError(
                    f"upper payoff below lower payoff at {bad} grid nodes, t={t}")
            lower = np.maximum(f, cont)
            V = np.minimum(g, lower)
            sandwich_violations += int(np.sum((V < f - 1e-9) | (V > g + 1e-9)))
            if codes_all is not None:
                code = np.zeros(n_nodes, dtype=np.int8)
                code[g < lower - _TIE_TOL] = 1
                code[(f > cont + _TIE_TOL) & (code == 0)] = 2
                codes_all[n] = code

    if one_d:
        value = float(np.interp(x0[0], axes[0], V))
    else:
        itp = RegularGridInterpolator(axes, V.reshape(shape), method="linear",
                                      bounds_error=True)
        value = float(itp(x0[None, :])[0])

    diag = {
        "node_count": n_nodes,
        "grid_shape": shape,
        "atom_count": sup.size,
        "sandwich_violations": sandwich_violations,
        "interp_error_bound": float(payoffs.lipschitz_K * np.max(grid.spacing) * n_steps),
        "terminal_time": T,
    }
    regions = None
    if codes_all is not None:
        regions = [(nodes_flat, codes_all[n]) for n in range(n_steps + 1)]
    return ValuationResult(value=value, engine="grid", eps=eps, n_steps=n_steps,
                           diagnostics=diag, stop_regions=regions)


def value_markov_grid(payoffs: PayoffPair, field: FieldSpec, noise: NoiseModel, x0,
                      eps: float, T: float, grid: GridSpec,
                      record_regions: bool = False) -> ValuationResult:
    """Dynkin value by backward induction on a state grid.

    Payoffs must be declared Markov (functions of time and the current
    state).  The continuation value interpolates linearly between grid
    nodes; the certified error report in the diagnostics is the payoff
    Lipschitz constant times the grid spacing per step, accumulated
    additively.
    """
    return _grid_value(payoffs, field, noise, x0, eps, T, grid,
                       american=False, record_regions=record_regions)


def american_value(payoffs: PayoffPair, field: FieldSpec, noise: NoiseModel, x0,
                   eps: float, T: float, engine: str = "grid",
                   grid: Optional[GridSpec] = None, record_regions: bool = False,
                   depth_cap: int = 24) -> ValuationResult:
    """Optimal-stopping (single player) value: upper branch disabled.

    ``V_n = max(F_n, E[V_{n+1}|.])``; the pair's ``G`` is ignored.  With
    ``engine="grid"`` a grid is required (or built automatically to
    cover the reachable region at a spacing of one tenth of the maximal
    step size); ``engine="tree"`` runs the exact recursion.
    """
    if engine == "grid":
        if grid is None:
            spacing = max(1e-4, 0.1 * eps * field.bound_L)
            grid = GridSpec.cover(field, eps, T, x0, spacing)
        res = _grid_value(payoffs, field, noise, x0, eps, T, grid,
                          american=True, record_regions=record_regions)
        res.engine = "grid-american"
        return res
    if engine == "tree":
        _require_iid_support(noise, "tree")
        x0a = np.asarray(x0, dtype=float).reshape(-1)
        n_steps = steps_for(eps, T)
        sup = noise.support
        if n_steps > depth_cap:
            raise TreeTooDeepError(f"{n_steps} levels exceed the depth cap {depth_cap}")
        h = eps**2
        buf = np.empty((n_steps + 1, field.d))
        buf[0] = x0a
        view = buf.view()
        view.flags.writeable = False
        nodes = {"count": 0}

        def rec(n: int) -> float:
            nodes["count"] += 1
            prefix = view[: n + 1]
            if n == n_steps:
                return payoffs.F(T, prefix)
            cont = 0.0
            xcur = buf[n][None, :]
            for a, p in zip(sup.atoms, sup.probs):
                child = xcur + eps * field.B(xcur, a[None, :]) + eps**2 * field.b(xcur, a[None, :])
                buf[n + 1] = child[0]
                cont += p * rec(n + 1)
            f = payoffs.F(n * h, prefix)
            return max(f, cont)

        value = rec(0)
        diag = {"node_count": nodes["count"], "atom_count": sup.size,
                "terminal_time": T}
        return ValuationResult(value=float(value), engine="tree-american", eps=eps,
                               n_steps=n_steps, diagnostics=diag)
    raise UnsupportedModeError(f"unknown engine {engine!r}")
