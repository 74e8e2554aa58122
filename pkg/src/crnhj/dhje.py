"""Discrete Hamilton-Jacobi equation on a constrained lattice.

The discrete Hamiltonian of a jump chain with edges ``i -> k`` and intensities
``phi`` is

    (H u)_i = sum_k phi(i, k) * (exp((u_k - u_i) / h) - 1),

summed over the edges that stay on the grid. It generates a nonlinear
contraction semigroup ``u(t)`` solving ``du/dt = H u``. Two integrators are
provided: the implicit resolvent ``(I - dt H)^{-1}`` iterated ``t/dt`` times,
and an adaptive explicit Runge-Kutta solve used as a cross-check.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ExponentOverflow, NoConvergence, StepTooSmall
from .network import GridFunction, Transitions, transitions

__all__ = [
    "DiscreteHamiltonian",
    "ResolventSolve",
    "ControlField",
    "apply_Hh",
    "resolvent",
    "evolve_semigroup",
    "evolve_ode",
    "wkb_exact_value",
    "check_variational_representation",
]

log = logging.getLogger(__name__)

MAX_EXPONENT = 700.0


@dataclass(frozen=True, eq=False)
class DiscreteHamiltonian:
    """Discrete Hamiltonian of a constrained jump chain."""

    edges: Transitions
    grid: object = None

    @classmethod
    def from_grid(cls, net, grid, intensities=None) -> "DiscreteHamiltonian":
        return cls(transitions(net, grid, intensities), grid)

    @classmethod
    def path(cls, phi_plus, phi_minus, h: float, grid=None) -> "DiscreteHamiltonian":
        """Nearest-neighbour chain on ``n`` ordered sites.

        Site ``k`` jumps right with intensity ``phi_plus[k]`` (except the last
        site) and left with ``phi_minus[k]`` (except the first).
        """
        phi_plus = np.asarray(phi_plus, float)
        phi_minus = np.asarray(phi_minus, float)
        n = len(phi_plus)
        k = np.arange(n)
        src = np.concatenate([k[:-1], k[1:]])
        dst = np.concatenate([k[1:], k[:-1]])
        rate = np.concatenate([phi_plus[:-1], phi_minus[1:]])
        order = np.argsort(src, kind="stable")
        return cls(Transitions(n, float(h), src[order], dst[order], rate[order]), grid)

    @property
    def n(self) -> int:
        return self.edges.n

    @property
    def h(self) -> float:
        return self.edges.h

    def __call__(self, u) -> np.ndarray:
        u = _values(u)
        e = self.edges
        z = (u[e.dst] - u[e.src]) / e.h
        if z.size and z.max() > MAX_EXPONENT:
            raise ExponentOverflow(f"exponent {z.max():.1f} exceeds {MAX_EXPONENT}")
        return np.bincount(e.src, weights=e.rate * np.expm1(z), minlength=e.n)

    def neighbours(self) -> list[tuple[list[int], list[float]]]:
        """Per-node adjacency as plain lists, for scalar sweeps."""
        e = self.edges
        bounds = np.searchsorted(e.src, np.arange(e.n + 1))
        dst, rate = e.dst.tolist(), e.rate.tolist()
        return [(dst[bounds[i]:bounds[i + 1]], rate[bounds[i]:bounds[i + 1]]) for i in range(e.n)]


def _values(u) -> np.ndarray:
    if isinstance(u, GridFunction):
        return u.values
    return np.asarray(u, dtype=float)


def _wrap(H: DiscreteHamiltonian, values):
    if H.grid is not None:
        return GridFunction(H.grid, values)
    return np.asarray(values)


def apply_Hh(H: DiscreteHamiltonian, u):
    """Evaluate the discrete Hamiltonian at every grid point."""
    return _wrap(H, H(u))


@dataclass(frozen=True)
class ResolventSolve:
    u: np.ndarray
    sweeps: int
    residual: float


def _solve_node(f_i, x0, nbr_u, nbr_rate, dt, h, lo, hi):
    """Root of g(x) = x - dt*sum r (e^{(u_k-x)/h} - 1) - f_i on [lo, hi].

    g is increasing and concave, so Newton iterates from the left of the root
    approach it monotonically; bisection guards the rare overshoot.
    """
    c = dt / h

    def g_and_slope(x):
        s = 0.0
        sd = 0.0
        for uk, r in zip(nbr_u, nbr_rate):
            ez = math.exp((uk - x) / h)
            s += r * (ez - 1.0)
            sd += r * ez
        return x - dt * s - f_i, 1.0 + c * sd

    x = min(max(x0, lo), hi)
    for _ in range(200):
        g, dg = g_and_slope(x)
        if g == 0.0:
            return x
        if g < 0:
            lo = x
        else:
            hi = x
        step = g / dg
        x_new = x - step
        if not lo <= x_new <= hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4e-16 * (1.0 + abs(x)) or hi - lo <= 4e-16 * (1.0 + abs(x)):
            return x_new
        x = x_new
    return x


def resolvent(H: DiscreteHamiltonian, f, dt: float, *, u_init=None, tol: float | None = None,
              max_sweeps: int = 20000) -> ResolventSolve:
    """Solve ``u - dt * H(u) = f`` by nonlinear Gauss-Seidel.

    Each node solves its scalar equation with a safeguarded Newton iteration,
    neighbours frozen at their latest values. Sweeps alternate direction.
    Convergence is declared when the residual sup-norm is at most
    ``1e-12 * (1 + |f|_inf)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    f = _values(f)
    n = H.n
    if f.shape != (n,):
        raise ValueError("f does not match the grid")
    if tol is None:
        tol = 1e-12 * (1.0 + np.abs(f).max())
    u = (f if u_init is None else _values(u_init)).astype(float).tolist()
    fl = f.tolist()
    f_lo, f_hi = float(f.min()), float(f.max())
    adj = H.neighbours()
    h = H.h
    forward = list(range(n))
    backward = forward[::-1]
    res = math.inf
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for i in (forward if sweep % 2 else backward):
            nbr, rate = adj[i]
            nbr_u = [u[k] for k in nbr]
            lo = min([fl[i], f_lo] + nbr_u) if nbr_u else fl[i]
            hi = max([fl[i], f_hi] + nbr_u) if nbr_u else fl[i]
            new = _solve_node(fl[i], u[i], nbr_u, rate, dt, h, lo, hi)
            change = max(change, abs(new - u[i]))
            u[i] = new
        # sweep well past the residual target so the iterate itself is accurate
        if change <= 1e-2 * tol:
            arr = np.array(u)
            res = float(np.abs(arr - dt * H(arr) - f).max())
            if res <= tol:
                return ResolventSolve(arr, sweep, res)
    raise NoConvergence(f"resolvent did not converge in {max_sweeps} sweeps", res)


def evolve_semigroup(H: DiscreteHamiltonian, u0, t: float, dt: float):
    """Iterate the resolvent ``floor(t/dt)`` times (implicit Euler in time)."""
    u = _values(u0).astype(float)
    steps = int(math.floor(t / dt + 1e-9))
    for _ in range(steps):
        u = resolvent(H, u, dt, u_init=u).u
    return _wrap(H, u)


def _rk4_step(F, y, dt):
    k1 = F(y)
    k2 = F(y + 0.5 * dt * k1)
    k3 = F(y + 0.5 * dt * k2)
    k4 = F(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _adaptive_rk4(F, y0, times, rtol, atol, dt0, max_steps=10_000_000):
    """Integrate ``y' = F(y)`` through the increasing ``times``.

    Step-doubling error control: one full RK4 step is compared with two half
    steps, and the Richardson-extrapolated value is kept.
    """
    y = np.array(y0, dtype=float)
    out = []
    t = 0.0
    dt = dt0
    steps = 0
    for target in times:
        while target - t > 1e-15 * max(1.0, target):
            dt = min(dt, target - t)
            if dt <= 1e-14 * max(1.0, target):
                raise StepTooSmall(f"step size collapsed to {dt:.3e} at t={t:.6g}")
            try:
                big = _rk4_step(F, y, dt)
                half = _rk4_step(F, _rk4_step(F, y, 0.5 * dt), 0.5 * dt)
            except ExponentOverflow:
                dt *= 0.25
                continue
            err = float(np.abs(half - big).max()) / 15.0
            scale = atol + rtol * float(np.abs(half).max())
            if err <= scale:
                y = half + (half - big) / 15.0
                t += dt
                steps += 1
                if steps > max_steps:
                    raise StepTooSmall("too many steps")
            fac = 0.9 * (scale / err) ** 0.2 if err > 0 else 4.0
            dt *= min(4.0, max(0.2, fac))
        out.append(y.copy())
    return out


def evolve_ode(H: DiscreteHamiltonian, u0, t, *, rtol: float = 1e-11, atol: float = 1e-13):
    """Explicit adaptive RK4 solve of ``du/dt = H(u)``.

    ``t`` may be a scalar or an increasing sequence of output times; the
    result is a single grid function or a list of them. The first step is
    sized from the a-priori bound ``|du/dt| <= |H(u0)|``.
    """
    u = _values(u0).astype(float)
    scalar = np.ndim(t) == 0
    times = [float(t)] if scalar else [float(s) for s in t]
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("output times must be nonnegative and increasing")
    speed = float(np.abs(H(u)).max())
    rate = float(H.edges.total_rate().max()) / H.h if H.n else 0.0
    dt0 = min(1.0 / max(rate, 1e-300), (atol + rtol * np.abs(u).max()) ** 0.25 / max(speed, 1e-300), 1.0)
    sols = _adaptive_rk4(H, u, times, rtol, atol, dt0)
    if scalar:
        return _wrap(H, sols[0])
    return [_wrap(H, s) for s in sols]


def wkb_exact_value(H: DiscreteHamiltonian, u0, start: int, t: float, **kw) -> float:
    """``h log E[exp(u0(X_t)/h) | X_0 = start]``, obtained from the HJ solve."""
    return float(_values(evolve_ode(H, u0, t, **kw))[start])


@dataclass(frozen=True, eq=False)
class ControlField:
    """Jump-rate multipliers on the edges of a chain."""

    edges: Transitions
    v: np.ndarray

    @classmethod
    def optimal(cls, H: DiscreteHamiltonian, u) -> "ControlField":
        e = H.edges
        u = _values(u)
        return cls(e, np.exp((u[e.dst] - u[e.src]) / e.h))

    def diagonal(self) -> np.ndarray:
        """Diagonal entries making every row of ``v * phi`` sum to zero."""
        e = self.edges
        out = -np.bincount(e.src, weights=self.v * e.rate, minlength=e.n)
        return out / np.where(e.total_rate() > 0, e.total_rate(), 1.0)

    def running_cost(self) -> np.ndarray:
        """Per-node cost ``sum_k phi (v log v - v + 1)`` over outgoing edges."""
        e = self.edges
        v = self.v
        c = e.rate * (np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0) - v + 1.0)
        return np.bincount(e.src, weights=c, minlength=e.n)

    def forward_rhs(self, p) -> np.ndarray:
        e = self.edges
        flux = self.v * e.rate * p[e.src] / e.h
        return np.bincount(e.dst, flux, e.n) - np.bincount(e.src, flux, e.n)


def check_variational_representation(H: DiscreteHamiltonian, u0, start: int, t: float,
                                     n_steps: int) -> tuple[float, float]:
    """Compare the HJ value with the payoff of its feedback control.

    The control on step ``k`` of the forward time grid uses the value at
    backward time ``t - k*dt`` and is held constant over the step. The
    forward law and the accumulated running cost are integrated by RK4
    substeps. Returns ``(lhs, rhs)``: the exact value at ``start`` and the
    controlled payoff; the gap shrinks linearly with ``1/n_steps``.
    """
    f = _values(u0).astype(float)
    dt = t / n_steps
    back_times = [t - k * dt for k in range(n_steps)][::-1]
    snaps = evolve_ode(H, f, back_times)
    snaps = [_values(s) for s in snaps][::-1]  # snaps[k] = u(., t - k dt)
    lhs = float(snaps[0][start])

    p = np.zeros(H.n)
    p[start] = 1.0
    cost = 0.0
    for k in range(n_steps):
        ctrl = ControlField.optimal(H, snaps[k])
        lam = ctrl.running_cost()
        out_rate = np.bincount(H.edges.src, ctrl.v * H.edges.rate, H.n).max() / H.h
        m = max(1, int(math.ceil(dt * out_rate / 0.1)))
        sub = dt / m

        def rhs(y):
            q = y[:-1]
            return np.append(ctrl.forward_rhs(q), lam @ q)

        y = np.append(p, cost)
        for _ in range(m):
            y = _rk4_step(rhs, y, sub)
        p, cost = y[:-1], float(y[-1])
    rhs_val = float(f @ p) - cost
    return lhs, rhs_val
