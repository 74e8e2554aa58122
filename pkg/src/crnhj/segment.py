"""One-reaction networks restricted to a line segment.

With a single reaction vector ``nu`` the chain started at ``x0 + beta*perp``
never leaves the line through that point, so it is a birth-death chain on the
sites ``alpha = r + k*h`` lying in ``[a_beta, b_beta]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dhje import DiscreteHamiltonian, evolve_ode
from .errors import SizeMismatch
from .network import Domain, GridFunction, ReactionNetwork, Transitions, perpendicular, segment_bounds

__all__ = [
    "SegmentGrid",
    "SegmentHamiltonian",
    "build_segment_grid",
    "solve_w",
    "compare_matched_grids",
    "matched_segment",
]


@dataclass(frozen=True, eq=False)
class SegmentGrid:
    x0: np.ndarray
    nu: np.ndarray
    beta: float
    r: float
    h: float
    k_a: int
    k_b: int
    a: float
    b: float
    reaction: int = 0

    @property
    def nu_perp(self) -> np.ndarray:
        return perpendicular(self.nu)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.k_a, self.k_b + 1)

    @property
    def alphas(self) -> np.ndarray:
        return self.r + self.ks * self.h

    @property
    def points(self) -> np.ndarray:
        base = self.x0 + self.beta * self.nu_perp
        return base + self.alphas[:, None] * self.nu

    @property
    def n_points(self) -> int:
        return self.k_b - self.k_a + 1

    def __len__(self):
        return self.n_points

    def site(self, k: int) -> int:
        """Row of the site with integer offset ``k``."""
        if not self.k_a <= k <= self.k_b:
            raise KeyError(k)
        return k - self.k_a

    def transitions(self, net: ReactionNetwork, intensities=None) -> Transitions:
        ham = SegmentHamiltonian(net, self)
        return DiscreteHamiltonian.path(ham.phi_plus(self.alphas), ham.phi_minus(self.alphas), self.h).edges


def build_segment_grid(dom: Domain, net: ReactionNetwork, x0, beta: float, r: float, h: float,
                       reaction: int = 0) -> SegmentGrid:
    """Sites ``r + k h`` of the shifted line inside the closed domain.

    ``r`` is reduced into ``[-h, h)``; whole multiples of ``h`` are absorbed
    into the site index.
    """
    if not h > 0:
        raise ValueError("mesh size must be positive")
    x0 = np.asarray(x0, float)
    nu = net.reaction_vectors[reaction].astype(float)
    r = float(r)
    if not -h <= r < h:
        r = r - h * math.floor(r / h)
    a, b = segment_bounds(dom, x0, nu, beta)
    tol = dom.tolerance / float(np.linalg.norm(nu))
    k_a = math.ceil((a - tol - r) / h)
    k_b = math.floor((b + tol - r) / h)
    return SegmentGrid(x0, nu, float(beta), r, float(h), int(k_a), int(k_b), a, b, reaction)


@dataclass(frozen=True, eq=False)
class SegmentHamiltonian:
    """Intensities along the line as functions of the parameter ``alpha``."""

    net: ReactionNetwork
    seg: SegmentGrid

    def _x(self, alpha):
        alpha = np.asarray(alpha, float)
        base = self.seg.x0 + self.seg.beta * self.seg.nu_perp
        return base + alpha[..., None] * self.seg.nu

    def phi_plus(self, alpha):
        return self.net.intensity(self._x(alpha), self.seg.reaction, "forward")

    def phi_minus(self, alpha):
        return self.net.intensity(self._x(alpha), self.seg.reaction, "backward")

    def discrete(self) -> DiscreteHamiltonian:
        al = self.seg.alphas
        return DiscreteHamiltonian.path(self.phi_plus(al), self.phi_minus(al), self.seg.h, self.seg)


def solve_w(seg: SegmentGrid, ham: SegmentHamiltonian, w0, t, **kw):
    """Discrete value on the segment at time ``t`` (scalar or increasing list).

    ``w0`` is either an array over the sites or a callable of ``alpha``.
    """
    vals = w0(seg.alphas) if callable(w0) else np.asarray(w0, float)
    return evolve_ode(ham.discrete(), vals, t, **kw)


def compare_matched_grids(w_a, w_b) -> float:
    """Sup-norm distance between two grid functions with equal site counts."""
    va = w_a.values if isinstance(w_a, GridFunction) else np.asarray(w_a, float)
    vb = w_b.values if isinstance(w_b, GridFunction) else np.asarray(w_b, float)
    if va.shape != vb.shape:
        raise SizeMismatch(f"grids have {va.size} and {vb.size} sites")
    return float(np.abs(va - vb).max())


def matched_segment(dom: Domain, net: ReactionNetwork, x0, beta: float, r: float, h: float,
                    n_sites: int, reaction: int = 0, rel_window: float = 0.25) -> SegmentGrid:
    """Segment grid whose spacing ``h'`` near ``h`` gives exactly ``n_sites`` sites.

    The site count is nonincreasing in the spacing, so the admissible spacings
    form an interval; it is located by bisection and the member closest to
    ``h`` is returned.
    """
    def count(hh):
        return build_segment_grid(dom, net, x0, beta, r, hh, reaction).n_points

    if count(h) == n_sites:
        return build_segment_grid(dom, net, x0, beta, r, h, reaction)
    lo, hi = h * (1 - rel_window), h * (1 + rel_window)
    if not count(hi) <= n_sites <= count(lo):
        raise SizeMismatch(f"no spacing within {rel_window:.0%} of {h} yields {n_sites} sites")
    # too few sites at h: shrink the spacing; too many: grow it
    if count(h) < n_sites:
        good, bad = lo, h  # count(good) >= n_sites > count(bad)
        for _ in range(200):
            mid = 0.5 * (good + bad)
            if count(mid) >= n_sites:
                good = mid
            else:
                bad = mid
    else:
        bad, good = h, hi  # count(bad) > n_sites >= count(good)
        for _ in range(200):
            mid = 0.5 * (good + bad)
            if count(mid) <= n_sites:
                good = mid
            else:
                bad = mid
    seg = build_segment_grid(dom, net, x0, beta, r, good, reaction)
    if seg.n_points != n_sites:
        raise SizeMismatch(f"bisection settled on {seg.n_points} sites, wanted {n_sites}")
    return seg
