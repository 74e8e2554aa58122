"""Continuous Hamilton-Jacobi equation on an interval with Neumann ends.

The Hamiltonian is ``H(alpha, p) = phi_plus(alpha) (e^p - 1) +
phi_minus(alpha) (e^-p - 1)`` on ``[a, b]``. Four solvers are offered:

* ``solve_fd``: monotone explicit upwind scheme, a CFL-limited forward Euler;
* ``lax_oleinik_dp``: backward dynamic programming over reflected paths;
* ``rate_function``: forward dynamic programming for the action of paths from
  a fixed start;
* ``variational_value``: the sup over endpoints of ``w0 - rate``.

The two dynamic programs share one lattice: positions on the ``alpha`` mesh,
velocities in multiples of ``dalpha/ds`` so every step lands on a node, and a
running cost evaluated at the step midpoint.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CFLViolation
from .network import Domain, ReactionNetwork, perpendicular, segment_bounds

__all__ = [
    "Hamiltonian1D",
    "ValueField",
    "RateTable",
    "ReflectedPath",
    "legendre",
    "optimal_momentum",
    "solve_fd",
    "lax_oleinik_dp",
    "rate_function",
    "mean_field_path",
    "variational_value",
]

log = logging.getLogger(__name__)

BIG = 1e6
INF_THRESHOLD = 1e5


@dataclass(frozen=True)
class Hamiltonian1D:
    phi_plus: Callable[[np.ndarray], np.ndarray]
    phi_minus: Callable[[np.ndarray], np.ndarray]
    a: float
    b: float

    def __post_init__(self):
        if not self.a <= self.b:
            raise ValueError("need a <= b")

    @classmethod
    def from_line(cls, net: ReactionNetwork, dom: Domain, x0, beta: float = 0.0,
                  reaction: int = 0) -> "Hamiltonian1D":
        """Intensities along ``x0 + beta*perp(nu) + alpha*nu`` inside ``dom``."""
        nu = net.reaction_vectors[reaction].astype(float)
        base = np.asarray(x0, float) + beta * perpendicular(nu)
        a, b = segment_bounds(dom, x0, nu, beta)

        def along(direction):
            def phi(alpha):
                x = base + np.asarray(alpha, float)[..., None] * nu
                return net.intensity(x, reaction, direction)
            return phi

        return cls(along("forward"), along("backward"), a, b)

    def __call__(self, alpha, p):
        return self.phi_plus(alpha) * np.expm1(p) + self.phi_minus(alpha) * np.expm1(-p)

    def drift(self, alpha):
        return self.phi_plus(alpha) - self.phi_minus(alpha)

    def mesh(self, n_alpha: int) -> np.ndarray:
        if n_alpha < 2:
            raise ValueError("need at least two mesh points")
        return np.linspace(self.a, self.b, n_alpha)


def _lagrangian(fp, fm, s):
    """Legendre transform of ``fp (e^p - 1) + fm (e^-p - 1)`` at velocity ``s``.

    Maximiser ``p* = asinh(s / (2 sqrt(fp fm))) + log(fm/fp)/2`` gives the
    cancellation-free form ``s p* + fp + fm - sqrt(s^2 + 4 fp fm)``.
    """
    fp, fm, s = np.broadcast_arrays(*(np.asarray(v, float) for v in (fp, fm, s)))
    root = np.sqrt(s * s + 4.0 * fp * fm)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.sqrt(fp * fm)
        p = np.arcsinh(s / (2.0 * g)) + 0.5 * np.log(fm / fp)
        val = s * p + fp + fm - root
    # one-sided intensities: only motion in the allowed direction is finite
    only_p = (fm == 0) & (fp > 0)
    only_m = (fp == 0) & (fm > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.where(s > 0, s * np.log(s / fp) - s + fp, np.where(s == 0, fp, np.inf))
        lm = np.where(s < 0, -s * np.log(-s / fm) + s + fm, np.where(s == 0, fm, np.inf))
    val = np.where(only_p, lp, np.where(only_m, lm, val))
    val = np.where((fp == 0) & (fm == 0), np.where(s == 0, 0.0, np.inf), val)
    return val


def optimal_momentum(ham: Hamiltonian1D, alpha, s):
    fp, fm = ham.phi_plus(alpha), ham.phi_minus(alpha)
    return np.log((s + np.sqrt(s * s + 4 * fp * fm)) / (2 * fp))


def legendre(ham: Hamiltonian1D, alpha, s):
    """Lagrangian ``sup_p {p s - H(alpha, p)}``, vectorised."""
    out = _lagrangian(ham.phi_plus(alpha), ham.phi_minus(alpha), s)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ValueField:
    alpha: np.ndarray
    times: np.ndarray
    values: np.ndarray  # (len(times), len(alpha))
    resolution: float

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def at(self, alpha: float, which: int = -1) -> float:
        return float(np.interp(alpha, self.alpha, self.values[which]))


def _initial(w0, alpha):
    return np.asarray(w0(alpha) if callable(w0) else w0, float) * np.ones_like(alpha)


def solve_fd(ham: Hamiltonian1D, w0, t: float, n_alpha: int, *, dt: float | None = None,
             cfl: float = 0.5, snapshots=None) -> ValueField:
    """Monotone upwind scheme for ``w_t = H(alpha, w_alpha)`` with Neumann ends.

    The ``phi_plus`` term uses the forward difference and the ``phi_minus``
    term the backward one, so the update is nondecreasing in both neighbours;
    at each end the outward difference is zero (mirror ghost node).
    """
    alpha = ham.mesh(n_alpha)
    da = alpha[1] - alpha[0]
    fp, fm = ham.phi_plus(alpha), ham.phi_minus(alpha)
    w = _initial(w0, alpha)

    def speeds(w):
        d = np.diff(w) / da
        up = np.zeros_like(w)
        dn = np.zeros_like(w)
        up[:-1] = d
        dn[1:] = d
        return up, dn

    def bound(w):
        up, dn = speeds(w)
        return da / float((fp * np.exp(up) + fm * np.exp(-dn)).max())

    dt_max = bound(w)
    if dt is None:
        dt = cfl * dt_max
    elif dt > dt_max:
        raise CFLViolation(f"dt={dt:.3e} exceeds the monotonicity bound {dt_max:.3e}")
    n_steps = max(1, math.ceil(t / dt - 1e-9))
    dt = t / n_steps
    snap_steps = {} if snapshots is None else {min(n_steps, round(s / dt)): s for s in snapshots}
    times, values = [], []
    if 0 in snap_steps:
        times.append(0.0)
        values.append(w.copy())
    for n in range(1, n_steps + 1):
        up, dn = speeds(w)
        coef = fp * np.exp(up) + fm * np.exp(-dn)
        if dt * coef.max() > da * (1 + 1e-12):
            raise CFLViolation(f"monotonicity lost at step {n}; reduce dt")
        w = w + dt * (fp * np.expm1(up) + fm * np.expm1(-dn))
        if n in snap_steps:
            times.append(n * dt)
            values.append(w.copy())
    if not times or times[-1] != n_steps * dt:
        times.append(n_steps * dt)
        values.append(w.copy())
    return ValueField(alpha, np.array(times), np.array(values), max(da, dt))


@dataclass(frozen=True)
class _Lattice:
    alpha: np.ndarray
    da: float
    ds: float
    n_t: int
    shifts: np.ndarray  # velocity multiples m
    cost: np.ndarray  # (n_alpha, n_shifts)

    @property
    def dv(self) -> float:
        return self.da / self.ds

    @property
    def resolution(self) -> float:
        return max(self.da, self.ds)


def velocity_box(ham: Hamiltonian1D, lip_w0: float = 0.0, n: int = 2001) -> float:
    grid = np.linspace(ham.a, ham.b, n)
    return 2.0 * float(np.abs(ham.drift(grid)).max()) + 4.0 * lip_w0


def _lattice(ham: Hamiltonian1D, t: float, n_alpha: int, n_v: int | None, n_t: int,
             v_max: float) -> _Lattice:
    alpha = ham.mesh(n_alpha)
    da = alpha[1] - alpha[0]
    ds = t / n_t
    dv = da / ds
    if n_v is None:
        k = max(1, math.ceil(v_max / dv))
    else:
        if n_v < 3:
            raise ValueError("need at least three velocity samples")
        k = (n_v - 1) // 2
    shifts = np.arange(-k, k + 1)
    v = shifts * dv
    mid = np.clip(alpha[:, None] + 0.5 * v[None, :] * ds, ham.a, ham.b)
    cost = ds * _lagrangian(ham.phi_plus(mid), ham.phi_minus(mid), v[None, :])
    return _Lattice(alpha, da, ds, n_t, shifts, cost)


def _lip(w0, alpha):
    vals = _initial(w0, alpha)
    return float(np.abs(np.diff(vals)).max() / (alpha[1] - alpha[0])) if len(alpha) > 1 else 0.0


def lax_oleinik_dp(ham: Hamiltonian1D, w0, t: float, n_alpha: int, n_v: int | None, n_t: int,
                   *, v_max: float | None = None) -> ValueField:
    """Backward dynamic program over reflected lattice paths.

    ``value(alpha, s) = max_v value(clamp(alpha + v ds), s + ds) - ds L(alpha, v)``,
    with the cost charged on the chosen (unclamped) velocity. Besides the
    lattice velocities, each node may follow its own drift at zero cost, the
    landing value read off by linear interpolation; this keeps constants fixed.
    """
    alpha = ham.mesh(n_alpha)
    if v_max is None:
        v_max = velocity_box(ham, _lip(w0, alpha))
    lat = _lattice(ham, t, n_alpha, n_v, n_t, v_max)
    n = n_alpha
    idx = np.arange(n)
    w = _initial(w0, alpha)
    drift_target = np.clip(alpha + lat.ds * ham.drift(alpha), ham.a, ham.b)
    for _ in range(n_t):
        best = np.interp(drift_target, alpha, w)
        for col, m in enumerate(lat.shifts):
            cand = w[np.clip(idx + m, 0, n - 1)] - lat.cost[:, col]
            np.maximum(best, cand, out=best)
        w = best
    return ValueField(alpha, np.array([t]), w[None, :], lat.resolution)


@dataclass(frozen=True)
class RateTable:
    alpha: np.ndarray
    values: np.ndarray  # BIG-capped action; see ``finite``
    alpha_start: float
    t: float
    resolution: float

    @property
    def finite(self) -> np.ndarray:
        return np.where(self.values > INF_THRESHOLD, np.inf, self.values)

    def at(self, y: float) -> float:
        i = int(np.argmin(np.abs(self.alpha - y)))
        return float(self.finite[i])

    def argmin(self) -> float:
        return float(self.alpha[int(np.argmin(self.values))])


def rate_function(ham: Hamiltonian1D, alpha_start: float, t: float, n_alpha: int,
                  n_v: int | None, n_t: int, *, v_max: float | None = None) -> RateTable:
    """Minimal action of reflected paths from ``alpha_start`` to each node at time ``t``.

    The start is snapped to the nearest mesh node; unreachable nodes keep the
    cap ``BIG`` and read as infinite.
    """
    if not ham.a - 1e-12 <= alpha_start <= ham.b + 1e-12:
        raise ValueError("start lies outside the interval")
    alpha = ham.mesh(n_alpha)
    if v_max is None:
        v_max = velocity_box(ham)
    lat = _lattice(ham, t, n_alpha, n_v, n_t, v_max)
    n = n_alpha
    val = np.full(n, BIG)
    val[int(np.argmin(np.abs(alpha - alpha_start)))] = 0.0
    for _ in range(n_t):
        new = np.full(n, BIG)
        for col, m in enumerate(lat.shifts):
            c = val + lat.cost[:, col]
            if m > 0:
                np.minimum(new[m:], c[: n - m], out=new[m:])
                new[-1] = min(new[-1], c[n - m:].min())
            elif m < 0:
                k = -m
                np.minimum(new[: n - k], c[k:], out=new[: n - k])
                new[0] = min(new[0], c[:k].min())
            else:
                np.minimum(new, c, out=new)
        val = np.minimum(new, BIG)
    return RateTable(alpha, val, float(alpha_start), float(t), lat.resolution)


@dataclass(frozen=True)
class ReflectedPath:
    """Zero-cost path with its reflection term.

    ``l`` is the rate of the boundary push keeping the path in ``[a, b]``:
    zero in the interior, ``|drift|`` while stuck at an end.
    """

    s: np.ndarray
    eta: np.ndarray
    l: np.ndarray
    hit_time: float | None


def mean_field_path(ham: Hamiltonian1D, alpha_start: float, t_end: float, dt: float) -> ReflectedPath:
    """RK4 integration of ``eta' = drift(eta)`` stopped at the ends.

    The output grid is ``0, dt, 2dt, ...``; a hitting time is located by
    bisection on a partial RK4 step. Once at an end with outward drift, the
    path stays there; with inward drift it leaves.
    """
    a, b = ham.a, ham.b
    if not a <= alpha_start <= b:
        raise ValueError("start lies outside the interval")

    def f(x):
        return float(ham.drift(np.asarray(x)))

    def rk4(x, step):
        k1 = f(x)
        k2 = f(x + 0.5 * step * k1)
        k3 = f(x + 0.5 * step * k2)
        k4 = f(x + step * k3)
        return x + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def stuck(x):
        return (x >= b and f(x) >= 0) or (x <= a and f(x) <= 0)

    n = max(1, math.ceil(t_end / dt - 1e-9))
    s = np.arange(n + 1) * dt
    eta = np.empty(n + 1)
    eta[0] = alpha_start
    hit = 0.0 if (stuck(alpha_start) and f(alpha_start) != 0) else None
    x = alpha_start
    for i in range(n):
        if stuck(x):
            eta[i + 1] = x
            continue
        y = rk4(x, dt)
        if y > b or y < a:
            edge = b if y > b else a
            lo, hi = 0.0, dt
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if (rk4(x, mid) - edge) * (edge - x) < 0:
                    lo = mid
                else:
                    hi = mid
            if hit is None:
                hit = s[i] + hi
            y = edge
        eta[i + 1] = y
        x = y
    drift = ham.drift(eta)
    l = np.where((eta >= b) & (drift > 0), drift, 0.0) + np.where((eta <= a) & (drift < 0), -drift, 0.0)
    return ReflectedPath(s, eta, l, hit)


def variational_value(ham: Hamiltonian1D, w0, alpha: float, t: float, n_alpha: int = 401,
                      n_v: int | None = None, n_t: int = 40) -> float:
    """``sup_y {w0(y) - I(y; alpha, t)}`` over the mesh."""
    table = rate_function(ham, alpha, t, n_alpha, n_v, n_t,
                          v_max=velocity_box(ham, _lip(w0, ham.mesh(n_alpha))))
    vals = _initial(w0, table.alpha) - table.values
    return float(vals.max())
