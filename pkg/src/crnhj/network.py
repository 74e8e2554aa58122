"""Reaction networks, admissible domains and the state-constrained lattice.

A network carries reactant/product stoichiometry and rate constants; its
intensities follow the law of mass action. A domain is a closed convex set in
the open positive orthant. The lattice grid keeps every point ``i*h`` (``i`` a
nonnegative integer vector) lying in the closed domain, and records for each
reaction whether the forward/backward jump stays on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGrid, NoIntersection

__all__ = [
    "ReactionNetwork",
    "Domain",
    "Ball",
    "ConvexPolygon",
    "Box",
    "LatticeGrid",
    "GridFunction",
    "Transitions",
    "lma_intensity",
    "build_grid",
    "segment_bounds",
    "perpendicular",
    "transitions",
]

# membership tolerance, relative to the domain diameter
REL_TOL = 1e-12


def _direction(direction) -> int:
    if direction in ("forward", "+", 1, "plus"):
        return 1
    if direction in ("backward", "-", -1, "minus"):
        return -1
    raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    """Reversible reactions ``sum nu_plus[j] X <-> sum nu_minus[j] X``.

    ``nu_plus`` and ``nu_minus`` have shape (reactions, species). The reaction
    vector of channel ``j`` is ``nu_minus[j] - nu_plus[j]``.
    """

    nu_plus: np.ndarray
    nu_minus: np.ndarray
    k_plus: np.ndarray
    k_minus: np.ndarray
    species: tuple[str, ...] = ()

    def __post_init__(self):
        nu_p = np.atleast_2d(np.asarray(self.nu_plus, dtype=np.int64))
        nu_m = np.atleast_2d(np.asarray(self.nu_minus, dtype=np.int64))
        kp = np.atleast_1d(np.asarray(self.k_plus, dtype=float))
        km = np.atleast_1d(np.asarray(self.k_minus, dtype=float))
        if nu_p.shape != nu_m.shape:
            raise ValueError("reactant and product stoichiometry must have the same shape")
        if (nu_p < 0).any() or (nu_m < 0).any():
            raise ValueError("stoichiometric coefficients must be nonnegative")
        m = nu_p.shape[0]
        if kp.shape != (m,) or km.shape != (m,):
            raise ValueError("need one forward and one backward rate constant per reaction")
        if (kp <= 0).any() or (km <= 0).any():
            raise ValueError("rate constants must be positive")
        if (nu_m - nu_p == 0).all(axis=1).any():
            raise ValueError("a reaction with zero net change is not allowed")
        species = tuple(self.species) or tuple(f"X{i + 1}" for i in range(nu_p.shape[1]))
        if len(species) != nu_p.shape[1]:
            raise ValueError("number of species names does not match stoichiometry")
        for name, arr in (("nu_plus", nu_p), ("nu_minus", nu_m), ("k_plus", kp), ("k_minus", km)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "species", species)

    @property
    def n_species(self) -> int:
        return self.nu_plus.shape[1]

    @property
    def n_reactions(self) -> int:
        return self.nu_plus.shape[0]

    @property
    def reaction_vectors(self) -> np.ndarray:
        return self.nu_minus - self.nu_plus

    def intensity(self, x, j: int, direction="forward") -> np.ndarray:
        """Mass-action intensity of channel ``j``; ``x`` may be batched (..., N)."""
        x = np.asarray(x, dtype=float)
        if _direction(direction) == 1:
            k, nu = self.k_plus[j], self.nu_plus[j]
        else:
            k, nu = self.k_minus[j], self.nu_minus[j]
        return k * np.prod(x ** nu, axis=-1)

    def intensities(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Forward and backward intensities of every channel, shape (..., M)."""
        x = np.asarray(x, dtype=float)
        fwd = np.stack([self.intensity(x, j, 1) for j in range(self.n_reactions)], axis=-1)
        bwd = np.stack([self.intensity(x, j, -1) for j in range(self.n_reactions)], axis=-1)
        return fwd, bwd


def lma_intensity(net: ReactionNetwork, x, j: int, direction="forward"):
    """Law-of-mass-action intensity; returns a float for a single state."""
    val = net.intensity(x, j, direction)
    return float(val) if np.ndim(val) == 0 else val


class Domain:
    """Closed convex set strictly inside the positive orthant."""

    def residual(self, x) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:  # pragma: no cover
        raise NotImplementedError

    def line_interval(self, q, d) -> tuple[float, float]:  # pragma: no cover
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    @property
    def tolerance(self) -> float:
        return REL_TOL * max(self.diameter, 1.0)

    @property
    def dim(self) -> int:
        return len(self.bounding_box()[0])

    def contains(self, x) -> np.ndarray:
        return self.residual(x) <= self.tolerance

    def _check_orthant(self):
        lo, _ = self.bounding_box()
        if (lo <= 0).any():
            raise ValueError("domain closure must lie in the open positive orthant")


@dataclass(frozen=True, eq=False)
class Ball(Domain):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        self._check_orthant()

    def residual(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) - self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def line_interval(self, q, d):
        q = np.asarray(q, float) - self.center
        d = np.asarray(d, float)
        a = d @ d
        b = 2.0 * (q @ d)
        c = q @ q - self.radius**2
        disc = b * b - 4.0 * a * c
        # grazing lines within the membership tolerance count as tangent
        if abs(disc) <= 8.0 * a * self.radius * self.tolerance:
            disc = 0.0
        elif disc < 0:
            raise NoIntersection("line misses the ball")
        root = math.sqrt(disc)
        return (-b - root) / (2 * a), (-b + root) / (2 * a)


class _HalfSpaces(Domain):
    """Domains given as ``normals @ x <= offsets`` with unit normals."""

    normals: np.ndarray
    offsets: np.ndarray

    def residual(self, x):
        x = np.asarray(x, dtype=float)
        return (x @ self.normals.T - self.offsets).max(axis=-1)

    def line_interval(self, q, d):
        q = np.asarray(q, float)
        d = np.asarray(d, float)
        coef = self.normals @ d
        rhs = self.offsets - self.normals @ q
        lo, hi = -math.inf, math.inf
        for cf, r in zip(coef, rhs):
            if abs(cf) < 1e-15:
                if r < -self.tolerance:
                    raise NoIntersection("line lies outside a face")
            elif cf > 0:
                hi = min(hi, r / cf)
            else:
                lo = max(lo, r / cf)
        if lo > hi:
            if (lo - hi) * np.linalg.norm(d) <= self.tolerance:
                mid = 0.5 * (lo + hi)
                return mid, mid
            raise NoIntersection("line misses the domain")
        return lo, hi


@dataclass(frozen=True, eq=False)
class ConvexPolygon(_HalfSpaces):
    """Convex polygon with vertices listed counter-clockwise."""

    vertices: np.ndarray
    normals: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs at least three 2-D vertices")
        edges = np.roll(v, -1, axis=0) - v
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if (cross <= 0).any():
            raise ValueError("polygon vertices must be strictly convex and counter-clockwise")
        normals = np.column_stack([edges[:, 1], -edges[:, 0]])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        offsets = (normals * v).sum(axis=1)
        for name, arr in (("vertices", v), ("normals", normals), ("offsets", offsets)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self._check_orthant()

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True, eq=False)
class Box(_HalfSpaces):
    lower: np.ndarray
    upper: np.ndarray
    normals: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or (lo > hi).any():
            raise ValueError("box needs lower <= upper componentwise")
        n = len(lo)
        eye = np.eye(n)
        normals = np.vstack([eye, -eye])
        offsets = np.concatenate([hi, -lo])
        for name, arr in (("lower", lo), ("upper", hi), ("normals", normals), ("offsets", offsets)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self._check_orthant()

    def bounding_box(self):
        return self.lower, self.upper


@dataclass(frozen=True, eq=False)
class LatticeGrid:
    """Lattice points ``index * h`` inside the closed domain.

    ``neighbor_fwd[i, j]`` is the row of ``x_i + nu_j h`` (or -1 if that point
    is off the grid); ``neighbor_bwd`` likewise for ``x_i - nu_j h``.
    """

    h: float
    index: np.ndarray
    neighbor_fwd: np.ndarray
    neighbor_bwd: np.ndarray
    domain: Domain | None = None

    @property
    def points(self) -> np.ndarray:
        return self.index * self.h

    @property
    def n_points(self) -> int:
        return len(self.index)

    def __len__(self) -> int:
        return self.n_points

    def locate(self, x) -> int:
        """Row of the grid point closest to ``x``; raises KeyError if none matches."""
        idx = np.rint(np.asarray(x, float) / self.h).astype(np.int64)
        hits = np.flatnonzero((self.index == idx).all(axis=1))
        if len(hits) == 0:
            raise KeyError(f"{tuple(np.asarray(x).tolist())} is not a grid point")
        return int(hits[0])


def build_grid(dom: Domain, net: ReactionNetwork, h: float) -> LatticeGrid:
    """Enumerate the lattice inside ``dom`` and link reaction neighbours."""
    if not h > 0:
        raise ValueError("mesh size must be positive")
    lo, hi = dom.bounding_box()
    if len(lo) != net.n_species:
        raise ValueError("domain dimension does not match the number of species")
    imin = np.maximum(np.floor(lo / h).astype(np.int64) - 1, 0)
    imax = np.ceil(hi / h).astype(np.int64) + 1
    axes = [np.arange(a, b + 1) for a, b in zip(imin, imax)]
    mesh = np.meshgrid(*axes, indexing="ij")
    cand = np.stack([m.ravel() for m in mesh], axis=1)
    index = cand[dom.contains(cand * h)]
    if len(index) == 0:
        raise EmptyGrid(f"no lattice point of spacing {h} lies in the domain")

    shape = imax - imin + 1
    strides = np.cumprod(np.concatenate([[1], shape[:0:-1]]))[::-1]

    def keys(idx):
        return ((idx - imin) * strides).sum(axis=1)

    own = keys(index)  # lexicographic order => sorted already
    nu = net.reaction_vectors

    def link(shift):
        tgt = index + shift
        inbox = ((tgt >= imin) & (tgt <= imax)).all(axis=1)
        k = keys(np.where(inbox[:, None], tgt, imin))
        pos = np.clip(np.searchsorted(own, k), 0, len(own) - 1)
        ok = inbox & (own[pos] == k)
        return np.where(ok, pos, -1)

    fwd = np.stack([link(nu[j]) for j in range(net.n_reactions)], axis=1)
    bwd = np.stack([link(-nu[j]) for j in range(net.n_reactions)], axis=1)
    for arr in (index, fwd, bwd):
        arr.setflags(write=False)
    return LatticeGrid(float(h), index, fwd, bwd, dom)


def perpendicular(nu) -> np.ndarray:
    """Planar vector orthogonal to ``nu``: ``(nu_2, -nu_1)``."""
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (2,):
        raise ValueError("perpendicular direction is defined for two species only")
    return np.array([nu[1], -nu[0]])


def segment_bounds(dom: Domain, x0, nu, beta: float = 0.0) -> tuple[float, float]:
    """Parameter interval of ``{x0 + beta*perp(nu) + alpha*nu} cap dom``."""
    x0 = np.asarray(x0, float)
    nu = np.asarray(nu, float)
    q = x0 + beta * perpendicular(nu)
    a, b = dom.line_interval(q, nu)
    return float(a), float(b)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values attached to the points of a grid."""

    grid: object
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        n = len(self.grid)
        if v.shape != (n,):
            raise ValueError(f"expected {n} values, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


@dataclass(frozen=True, eq=False)
class Transitions:
    """Directed jump edges of a state-constrained chain.

    Edge ``e`` jumps ``src[e] -> dst[e]`` with intensity ``rate[e]``; the
    actual jump rate is ``rate / h``.
    """

    n: int
    h: float
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray

    def __len__(self):
        return self.n

    def total_rate(self) -> np.ndarray:
        return np.bincount(self.src, weights=self.rate, minlength=self.n)


def transitions(net: ReactionNetwork, grid, intensities=None) -> Transitions:
    """Edges of the constrained chain on ``grid``.

    ``intensities`` optionally overrides the mass-action table with a pair of
    (points, reactions) arrays.
    """
    if hasattr(grid, "transitions"):
        return grid.transitions(net, intensities)
    pts = grid.points
    if intensities is None:
        phi_p, phi_m = net.intensities(pts)
    else:
        phi_p, phi_m = (np.asarray(a, float) for a in intensities)
    src, dst, rate = [], [], []
    rows = np.arange(grid.n_points)
    for nbr, phi in ((grid.neighbor_fwd, phi_p), (grid.neighbor_bwd, phi_m)):
        for j in range(nbr.shape[1]):
            ok = nbr[:, j] >= 0
            src.append(rows[ok])
            dst.append(nbr[ok, j])
            rate.append(phi[ok, j])
    src = np.concatenate(src)
    order = np.argsort(src, kind="stable")
    return Transitions(
        grid.n_points,
        grid.h,
        src[order],
        np.concatenate(dst)[order],
        np.concatenate(rate)[order],
    )
