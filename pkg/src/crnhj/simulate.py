"""Exact simulation and forward probabilities of the constrained chain.

Trajectories use the direct stochastic simulation algorithm: a channel whose
target leaves the grid simply has rate zero. Trajectory ``i`` of an ensemble
draws from its own Philox stream keyed by ``base_seed ^ i``; the ensemble is
advanced in lockstep with numpy, but each path is bit-identical to the
single-path simulation under the same key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import StepTooLarge
from .network import GridFunction, Transitions, transitions

__all__ = [
    "Trajectory",
    "Ensemble",
    "JumpTable",
    "rng_for",
    "simulate_path",
    "simulate_ensemble",
    "forward_evolve",
    "mc_wkb_estimate",
    "log_mean_exp",
]

_CHUNK = 64


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based Philox stream for one trajectory."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


@dataclass(frozen=True, eq=False)
class JumpTable:
    """Padded per-state jump targets and cumulative intensities."""

    h: float
    targets: np.ndarray  # (n, width), -1 padding
    cumrate: np.ndarray  # (n, width), running sum of intensities
    total: np.ndarray  # (n,) summed intensity

    @classmethod
    def from_edges(cls, e: Transitions) -> "JumpTable":
        counts = np.bincount(e.src, minlength=e.n)
        width = max(int(counts.max()) if e.n else 0, 1)
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        slot = np.arange(len(e.src)) - start[e.src]
        targets = np.full((e.n, width), -1, dtype=np.int64)
        rates = np.zeros((e.n, width))
        targets[e.src, slot] = e.dst
        rates[e.src, slot] = e.rate
        cum = np.cumsum(rates, axis=1)
        return cls(e.h, targets, cum, cum[:, -1].copy())


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # grid rows
    t_end: float

    @property
    def final_state(self) -> int:
        return int(self.states[-1])


@dataclass(frozen=True)
class Ensemble:
    final_states: np.ndarray
    n_jumps: np.ndarray
    base_seed: int

    def histogram(self, n_points: int) -> np.ndarray:
        return np.bincount(self.final_states, minlength=n_points)


def _table(net, grid) -> JumpTable:
    if isinstance(grid, JumpTable):
        return grid
    if isinstance(grid, Transitions):
        return JumpTable.from_edges(grid)
    return JumpTable.from_edges(transitions(net, grid))


def _pick(cum_row_scaled_target, cum):
    return int(np.searchsorted(cum, cum_row_scaled_target, side="right"))


def simulate_path(net, grid, start: int, t_end: float, seed: int) -> Trajectory:
    """One exact trajectory from grid row ``start`` up to time ``t_end``."""
    tab = _table(net, grid)
    rng = rng_for(seed)
    state = int(start)
    t = 0.0
    times, states = [0.0], [state]
    buf = rng.random(2 * _CHUNK)
    pos = 0
    while True:
        total = tab.total[state]
        if total <= 0:
            break
        if pos == len(buf):
            buf = rng.random(2 * _CHUNK)
            pos = 0
        u1, u2 = buf[pos], buf[pos + 1]
        pos += 2
        t += -math.log1p(-u1) * tab.h / total
        if t > t_end:
            break
        slot = min(_pick(u2 * total, tab.cumrate[state]), tab.cumrate.shape[1] - 1)
        state = int(tab.targets[state, slot])
        times.append(t)
        states.append(state)
    return Trajectory(np.array(times), np.array(states, dtype=np.int64), float(t_end))


def simulate_ensemble(net, grid, start: int, t_end: float, n_samples: int, base_seed: int,
                      batch: int = 20000) -> Ensemble:
    """``n_samples`` independent trajectories; only terminal states are kept."""
    tab = _table(net, grid)
    finals = np.empty(n_samples, dtype=np.int64)
    jumps = np.zeros(n_samples, dtype=np.int64)
    width = tab.cumrate.shape[1]
    for b0 in range(0, n_samples, batch):
        idx = np.arange(b0, min(b0 + batch, n_samples))
        gens = [rng_for(base_seed ^ int(i)) for i in idx]
        buf = np.stack([g.random(2 * _CHUNK) for g in gens])
        pos = np.zeros(len(idx), dtype=np.int64)
        state = np.full(len(idx), int(start), dtype=np.int64)
        t = np.zeros(len(idx))
        nj = np.zeros(len(idx), dtype=np.int64)
        alive = tab.total[state] > 0
        while alive.any():
            live = np.flatnonzero(alive)
            empty = live[pos[live] == 2 * _CHUNK]
            for r in empty:
                buf[r] = gens[r].random(2 * _CHUNK)
                pos[r] = 0
            p = pos[live]
            u1 = buf[live, p]
            u2 = buf[live, p + 1]
            pos[live] += 2
            s = state[live]
            tot = tab.total[s]
            t[live] += -np.log1p(-u1) * tab.h / tot
            go = t[live] <= t_end
            mover, s, u2, tot = live[go], s[go], u2[go], tot[go]
            cum = tab.cumrate[s]
            slot = np.minimum((cum <= (u2 * tot)[:, None]).sum(axis=1), width - 1)
            new = tab.targets[s, slot]
            state[mover] = new
            nj[mover] += 1
            alive[live[~go]] = False
            alive[mover] = tab.total[new] > 0
        finals[idx] = state
        jumps[idx] = nj
    return Ensemble(finals, jumps, int(base_seed))


def forward_evolve(p0, net, grid, t_end: float, dt: float | None = None, *,
                   on_step=None, max_halvings: int = 30):
    """RK4 solve of the forward equation for the law of the chain.

    The step defaults to ``0.1 * h / max total intensity``. A step producing a
    negative mass below ``-1e-14`` is retried with half the size.
    ``on_step(t, p)`` is called after every accepted step.
    """
    e = grid if isinstance(grid, Transitions) else transitions(net, grid)
    p = np.asarray(p0.values if isinstance(p0, GridFunction) else p0, dtype=float).copy()
    if p.shape != (e.n,):
        raise ValueError("initial law does not match the grid")
    w = e.rate / e.h
    rmax = float(e.total_rate().max()) / e.h if e.n else 0.0
    dt_max = 0.1 / rmax if rmax > 0 else t_end
    dt = dt_max if dt is None else float(dt)
    if dt > dt_max * (1 + 1e-12):
        raise StepTooLarge(f"dt={dt:.3g} exceeds the stability bound {dt_max:.3g}")

    def rhs(q):
        flux = w * q[e.src]
        return np.bincount(e.dst, flux, e.n) - np.bincount(e.src, flux, e.n)

    t = 0.0
    while t < t_end - 1e-14 * max(1.0, t_end):
        step = min(dt, t_end - t)
        for _ in range(max_halvings + 1):
            k1 = rhs(p)
            k2 = rhs(p + 0.5 * step * k1)
            k3 = rhs(p + 0.5 * step * k2)
            k4 = rhs(p + step * k3)
            cand = p + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if cand.min() >= -1e-14:
                break
            step *= 0.5
        else:
            raise StepTooLarge("positivity could not be restored by halving the step")
        p = cand
        t += step
        if on_step is not None:
            on_step(t, p)
    if not isinstance(grid, Transitions):
        return GridFunction(grid, p)
    return p


def log_mean_exp(values: np.ndarray, h: float) -> tuple[float, float]:
    """``h log mean exp(values/h)`` and its jackknife standard error."""
    z = np.asarray(values, float) / h
    n = len(z)
    est = h * (logsumexp(z) - math.log(n))
    if n < 2:
        return float(est), math.inf
    m = z.max()
    w = np.exp(z - m)
    total = w.sum()
    loo = np.maximum(total - w, np.finfo(float).tiny)
    theta = h * (np.log(loo) + m - math.log(n - 1))
    se = math.sqrt((n - 1) / n * float(((theta - theta.mean()) ** 2).sum()))
    return float(est), se


def mc_wkb_estimate(net, grid, start: int, u0, t: float, n_samples: int, seed: int):
    """Monte-Carlo estimate of ``h log E exp(u0(X_t)/h)`` with a jackknife error."""
    tab = _table(net, grid)
    ens = simulate_ensemble(net, tab, start, t, n_samples, seed)
    vals = u0.values if isinstance(u0, GridFunction) else np.asarray(u0, float)
    return log_mean_exp(vals[ens.final_states], tab.h)
