"""Large-deviation diagnostics for one-reaction planar networks.

* ``varadhan_check``: exact discrete value ``h log E exp(u0(X_t)/h)`` from the
  lattice HJ solve against Monte Carlo and against the continuous value.
* ``lln_concentration``: empirical tail of ``|X_t - x*(t)|`` against the
  exponential bound given by the rate function.
* ``counterexample_check``: a smooth test function touching a stationary
  solution from above at a boundary point where the interior subsolution
  inequality fails.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .chje import Hamiltonian1D, mean_field_path, rate_function, solve_fd
from .dhje import DiscreteHamiltonian, evolve_ode
from .errors import DegenerateRate
from .network import Ball, Domain, ReactionNetwork, build_grid, perpendicular, segment_bounds
from .segment import SegmentHamiltonian, build_segment_grid, solve_w
from .simulate import JumpTable, simulate_ensemble, log_mean_exp

__all__ = [
    "StartDecomposition",
    "VaradhanRow",
    "VaradhanReport",
    "LLNRow",
    "RateFunction2D",
    "decompose_start",
    "varadhan_check",
    "lln_concentration",
    "counterexample_check",
    "example_network",
    "example_domain",
]


def example_network() -> ReactionNetwork:
    """``X1 <-> X2`` with unit rate constants."""
    return ReactionNetwork([[1, 0]], [[0, 1]], [1.0], [1.0], ("X1", "X2"))


def example_domain() -> Ball:
    return Ball((7.0, 3.0), math.sqrt(2.0))


@dataclass(frozen=True)
class StartDecomposition:
    """Lattice start ``x_h = x0 + beta*perp + (r + k0 h) nu``."""

    x_h: tuple[float, ...]
    beta: float
    r: float
    k0: int
    omega: float  # endpoint shift of the segment caused by beta
    compliant: bool


def _omega(dom, x0, nu, beta) -> float:
    a0, b0 = segment_bounds(dom, x0, nu, 0.0)
    try:
        a1, b1 = segment_bounds(dom, x0, nu, beta)
    except Exception:
        return math.inf
    return max(abs(a1 - a0), abs(b1 - b0))


def decompose_start(dom: Domain, net: ReactionNetwork, x0, h: float, reaction: int = 0) -> StartDecomposition:
    """Nearest admissible lattice point to ``x0`` split along ``nu`` and ``perp(nu)``.

    The candidate must satisfy ``max(omega(|beta|), |beta|) <= h``; if the
    nearest point fails, its 8-neighbourhood is searched in order of distance.
    """
    x0 = np.asarray(x0, float)
    nu = net.reaction_vectors[reaction].astype(float)
    perp = perpendicular(nu)
    base = np.rint(x0 / h)
    cands = [base + np.array([i, j]) for i in (-1, 0, 1) for j in (-1, 0, 1)]
    cands.sort(key=lambda c: (float(np.linalg.norm(c * h - x0)), tuple(c)))
    fallback = None
    for c in cands:
        xh = c * h
        if (c < 0).any() or not dom.contains(xh):
            continue
        d = xh - x0
        beta = float(d @ perp / (perp @ perp))
        rho = float(d @ nu / (nu @ nu))
        k0 = int(round(rho / h))
        r = rho - k0 * h
        om = _omega(dom, x0, nu, beta)
        dec = StartDecomposition(tuple(xh.tolist()), beta, r, k0, om, max(om, abs(beta)) <= h)
        if dec.compliant:
            return dec
        fallback = fallback or dec
    if fallback is None:
        raise ValueError(f"no lattice point of spacing {h} near {tuple(x0)} lies in the domain")
    return fallback


@dataclass(frozen=True)
class VaradhanRow:
    h: float
    beta: float
    r: float
    exact: float
    mc: float
    mc_stderr: float
    continuous: float
    error: float  # |exact - continuous|
    z_score: float
    compliant: bool


@dataclass(frozen=True)
class VaradhanReport:
    rows: list
    t: float
    x0: tuple
    reference_resolution: float

    def as_dict(self) -> dict:
        return {"t": self.t, "x0": list(self.x0), "reference_resolution": self.reference_resolution,
                "rows": [asdict(r) for r in self.rows]}


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def varadhan_check(net: ReactionNetwork, dom: Domain, x0, u0, t: float, h_ladder, beta_rule=None,
                   mc_samples: int = 10000, *, seed: int = 0, n_alpha_ref: int = 4001,
                   threads: int = 1) -> VaradhanReport:
    """Compare the exact discrete value with Monte Carlo and the continuous limit.

    ``u0`` maps points (..., 2) to values. ``beta_rule(dom, net, x0, h)``
    returns a ``StartDecomposition``; the default is ``decompose_start``.
    The continuous reference is the finite-difference solution on the line
    through ``x0`` itself.
    """
    x0 = np.asarray(x0, float)
    nu = net.reaction_vectors[0].astype(float)
    rule = beta_rule or decompose_start
    ham = Hamiltonian1D.from_line(net, dom, x0)
    ref = solve_fd(ham, lambda a: u0(x0 + np.asarray(a)[..., None] * nu), t, n_alpha_ref)
    w_ref = ref.at(0.0)

    def one(h):
        dec = rule(dom, net, x0, h)
        seg = build_segment_grid(dom, net, x0, dec.beta, dec.r, h)
        start = seg.site(dec.k0)
        w = solve_w(seg, SegmentHamiltonian(net, seg), lambda a: u0(seg.x0 + seg.beta * seg.nu_perp
                                                                      + np.asarray(a)[..., None] * nu), t)
        exact = float(w.values[start])
        grid = build_grid(dom, net, h)
        tab = JumpTable.from_edges(DiscreteHamiltonian.from_grid(net, grid).edges)
        ens = simulate_ensemble(net, tab, grid.locate(dec.x_h), t, mc_samples, seed)
        mc, se = log_mean_exp(u0(grid.points[ens.final_states]), h)
        z = abs(exact - mc) / se if se > 0 else (0.0 if exact == mc else math.inf)
        return VaradhanRow(h, dec.beta, dec.r, exact, mc, se, w_ref, abs(exact - w_ref), z, dec.compliant)

    rows = _map(one, list(h_ladder), threads)
    return VaradhanReport(rows, float(t), tuple(x0.tolist()), ref.resolution)


@dataclass(frozen=True, eq=False)
class RateFunction2D:
    """Rate function lifted from the line through ``x0`` to the plane.

    Finite only on that line; off it the value is infinite.
    """

    x0: np.ndarray
    nu: np.ndarray
    table: object
    tol: float = 1e-9

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, float))
        d = y - self.x0
        perp = perpendicular(self.nu)
        off = np.abs(d @ perp) / np.linalg.norm(perp) > self.tol
        alpha = d @ self.nu / (self.nu @ self.nu)
        vals = np.interp(alpha, self.table.alpha, self.table.finite, left=np.inf, right=np.inf)
        return np.where(off, np.inf, vals)

    def beta(self, center, eps: float) -> float:
        """Infimum over the line of the rate outside the ``eps``-ball around ``center``."""
        pts = self.x0 + self.table.alpha[:, None] * self.nu
        far = np.linalg.norm(pts - np.asarray(center, float), axis=1) >= eps
        if not far.any():
            return math.inf
        return float(self.table.finite[far].min())


@dataclass(frozen=True)
class LLNRow:
    h: float
    tail: float
    tail_stderr: float
    bound: float
    rate: float
    ok: bool


def lln_concentration(net: ReactionNetwork, dom: Domain, x0, t: float, eps: float, h_ladder,
                      n_samples: int, *, seed: int = 0, n_alpha: int = 801, n_t: int = 80,
                      threads: int = 1) -> list[LLNRow]:
    """Empirical ``P(|X_t - x*(t)| >= eps)`` against ``exp(-beta/(2h))``.

    The start ``x0`` must be a lattice point for every ``h`` on the ladder.
    """
    x0 = np.asarray(x0, float)
    nu = net.reaction_vectors[0].astype(float)
    ham = Hamiltonian1D.from_line(net, dom, x0)
    path = mean_field_path(ham, 0.0, t, t / 1000)
    x_star = x0 + path.eta[-1] * nu
    table = rate_function(ham, 0.0, t, n_alpha, None, n_t)
    beta = RateFunction2D(x0, nu, table).beta(x_star, eps)
    if not beta > table.resolution:
        raise DegenerateRate(f"rate {beta:.3g} does not exceed the DP resolution {table.resolution:.3g}")

    def one(h):
        grid = build_grid(dom, net, h)
        tab = JumpTable.from_edges(DiscreteHamiltonian.from_grid(net, grid).edges)
        ens = simulate_ensemble(net, tab, grid.locate(x0), t, n_samples, seed)
        far = np.linalg.norm(grid.points[ens.final_states] - x_star, axis=1) >= eps
        p = float(far.mean())
        se = math.sqrt(p * (1 - p) / n_samples)
        bound = math.exp(-beta / (2 * h))
        return LLNRow(h, p, se, bound, beta, p <= bound + 3 * se)

    return _map(one, list(h_ladder), threads)


def counterexample_check(h: float = 1.0) -> dict:
    """Boundary test for ``X1 <-> X2`` on the ball around (7, 3).

    ``u0 = x1 + x2`` is stationary for the lattice Hamiltonian. The plane
    ``phi = 1.05 x1 + 0.95 x2 - 0.1`` lies above ``u0`` and touches it at
    (6, 4); there the interior inequality ``d_t phi <= H(x, grad phi)`` fails.
    """
    net = example_network()
    dom = example_domain()
    grid = build_grid(dom, net, h)
    H = DiscreteHamiltonian.from_grid(net, grid)
    pts = grid.points
    u0 = pts.sum(axis=1)
    stationarity = float(np.abs(H(u0)).max())
    grad = np.array([1.05, 0.95])
    nu = net.reaction_vectors[0].astype(float)
    touch = np.array([6.0, 4.0])
    phi_p = float(net.intensity(touch, 0, "forward"))
    phi_m = float(net.intensity(touch, 0, "backward"))
    slope = float(nu @ grad)
    T = phi_p * math.expm1(slope) + phi_m * math.expm1(-slope)
    gap = pts @ grad - 0.1 - u0
    on_grid = dom.contains(touch)
    touch_gap = float(touch @ grad - 0.1 - touch.sum())
    return {
        "h": h,
        "stationarity_residual": stationarity,
        "touch_point": touch.tolist(),
        "test_value": T,
        "time_derivative": 0.0,
        "verdict": "violated" if 0.0 > T else "satisfied",
        "min_gap_on_grid": float(gap.min()),
        "gap_at_touch_point": touch_gap,
        "touch_point_in_domain": bool(on_grid),
    }
