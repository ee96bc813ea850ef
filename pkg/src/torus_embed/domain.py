"""m-domains on the universal cover of a torus, their metrics and parameters.

An m-domain is the plane minus the lattice orbit of m compact connected sets
(the complement components).  A circled m-domain has round disks as
complement components and is identified with a point of R^(2+3m):

    (Re tau, Im tau, Re z_1, Im z_1, r_1, ..., Re z_m, Im z_m, r_m)

Distances between compact sets use the SUM convention

    d_H(S1, S2) = d(S1, S2) + d(S2, S1),   d(A, B) = sup_{a in A} inf_{b in B} |a - b|

and not the more common max; d_H is still a metric (it is at most twice the
max version and at least as large).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely.geometry import LinearRing, Point, Polygon

from .elliptic import Lattice
from .errors import ArityError, EmptySetError, InvalidDomainError

SCHEMA = "torus-embed/1"
DEFAULT_RESOLUTION = 512

# translates checked for disjointness: |m| + |n| <= 2
_TRANSLATE_RANGE = [(m, n) for m in range(-2, 3) for n in range(-2, 3) if abs(m) + abs(n) <= 2]


# ---------------------------------------------------------------------------
# Complement components


@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    def boundary(self, n: int = DEFAULT_RESOLUTION) -> np.ndarray:
        theta = 2 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * theta)

    def contains(self, pts) -> np.ndarray:
        return np.abs(np.asarray(pts, dtype=complex) - self.center) <= self.radius

    def dist_to(self, pts) -> np.ndarray:
        """Distance from each point to the closed disk (0 inside)."""
        return np.maximum(np.abs(np.asarray(pts, dtype=complex) - self.center) - self.radius, 0.0)

    @property
    def centroid(self) -> complex:
        return self.center

    @property
    def extent(self) -> float:
        return self.radius

    def polygon(self, n: int = 256) -> Polygon:
        return Point(self.center.real, self.center.imag).buffer(self.radius, quad_segs=max(n // 4, 8))

    def translated(self, w: complex) -> "Disk":
        return Disk(self.center + w, self.radius)


@dataclass(frozen=True)
class Curve:
    """Closed Jordan polyline (arc ordered, last point not repeated) bounding a component."""

    points: tuple

    def __post_init__(self):
        pts = tuple(complex(p) for p in self.points)
        if len(pts) < 3:
            raise InvalidDomainError("a boundary curve needs at least 3 points")
        object.__setattr__(self, "points", pts)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=complex)

    def boundary(self, n: int | None = None) -> np.ndarray:
        return self.array

    def polygon(self, n: int | None = None) -> Polygon:
        a = self.array
        return Polygon(np.column_stack([a.real, a.imag]))

    def is_jordan(self) -> bool:
        a = self.array
        ring = LinearRing(np.column_stack([a.real, a.imag]))
        return bool(ring.is_simple) and bool(ring.is_valid)

    def contains(self, pts) -> np.ndarray:
        a = self.array
        p = np.asarray(pts, dtype=complex)
        flat = p.ravel()
        inside = shapely.contains_xy(self.polygon(), flat.real, flat.imag)
        on_edge = _segment_distance(flat, a) <= 1e-12
        return (inside | on_edge).reshape(p.shape)

    def dist_to(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=complex)
        d = _segment_distance(p.ravel(), self.array).reshape(p.shape)
        return np.where(self.contains(p), 0.0, d)

    @property
    def centroid(self) -> complex:
        c = self.polygon().centroid
        return complex(c.x, c.y)

    @property
    def extent(self) -> float:
        return float(np.max(np.abs(self.array - self.centroid)))

    def translated(self, w: complex) -> "Curve":
        return Curve(tuple(self.array + w))

    def resolution(self) -> float:
        a = self.array
        return float(np.max(np.abs(np.roll(a, -1) - a)))


Component = Union[Disk, Curve]


def _segment_distance(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from points to a closed polyline (exact on segments)."""
    a = poly
    b = np.roll(poly, -1)
    d = b - a
    out = np.full(pts.shape, np.inf)
    chunk = max(1, 2_000_000 // max(len(a), 1))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk, None]
        t = ((p - a) * np.conj(d)).real / np.maximum(np.abs(d) ** 2, 1e-300)
        t = np.clip(t, 0.0, 1.0)
        out[s:s + chunk] = np.min(np.abs(p - (a + t * d)), axis=1)
    return out


def _components_meet(a: Component, b: Component) -> bool:
    if isinstance(a, Disk) and isinstance(b, Disk):
        return abs(a.center - b.center) <= a.radius + b.radius
    if isinstance(a, Disk):
        a, b = b, a
    if isinstance(b, Disk):
        # curve vs disk: closest approach of the curve region to the centre
        return bool(a.dist_to(np.array([b.center]))[0] <= b.radius)
    return bool(a.polygon().intersects(b.polygon()))


def _check_disjoint(lat: Lattice, comps: Sequence[Component]) -> list[str]:
    """Pairwise disjointness of components and their translates with |m|+|n| <= 2.

    Each component lies in a region of diameter below the cell size, so a
    translate by |m| + |n| >= 3 is farther than any of these candidates.
    """
    problems = []
    for i, ci in enumerate(comps):
        for j in range(i, len(comps)):
            cj = comps[j]
            for m, n in _TRANSLATE_RANGE:
                if i == j and m == 0 and n == 0:
                    continue
                w = m + n * lat.tau
                if abs(ci.centroid - cj.centroid - w) > ci.extent + cj.extent:
                    continue
                if _components_meet(ci, cj.translated(w)):
                    problems.append(f"components {i} and {j} meet (translate m={m}, n={n})")
    return problems


def _sort_key(comp: Component):
    c = comp.centroid
    return (round(c.real, 12), round(c.imag, 12))


# ---------------------------------------------------------------------------
# Domains


@dataclass(frozen=True)
class CircledMDomain:
    """Plane minus the lattice orbit of m closed disks.

    Components are sorted by (Re z, Im z); the order fixes the parameter
    encoding and hence d2.
    """

    lat: Lattice
    components: tuple

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Disk) else Disk(*c) for c in self.components)
        for d in comps:
            if not d.radius >= 0 or not math.isfinite(d.radius):
                raise InvalidDomainError(f"negative or non-finite radius {d.radius}")
        comps = tuple(sorted(comps, key=_sort_key))
        problems = _check_disjoint(self.lat, comps)
        if problems:
            raise InvalidDomainError("; ".join(problems))
        object.__setattr__(self, "components", comps)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def tau(self) -> complex:
        return self.lat.tau

    def contains_modulus(self) -> bool:
        """True if some disk (or a translate) contains the point tau."""
        for d in self.components:
            _, dist = self.lat.nearest_point(np.array([self.lat.tau - d.center]))
            if dist[0] <= d.radius:
                return True
        return False

    def require_positive_radii(self, floor: float = 0.0):
        for i, d in enumerate(self.components):
            if d.radius <= floor:
                raise InvalidDomainError(f"component {i} is a point (radius {d.radius})")

    def as_sampled(self) -> "SampledMDomain":
        return SampledMDomain(self.lat, self.components)

    def contains(self, z) -> np.ndarray:
        return self.as_sampled().contains(z)


@dataclass(frozen=True)
class SampledMDomain:
    """Plane minus the lattice orbit of m compact sets (disks or Jordan polylines)."""

    lat: Lattice
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        for i, c in enumerate(comps):
            if isinstance(c, Curve) and not c.is_jordan():
                raise InvalidDomainError(f"component {i} boundary is not a Jordan curve")
            if isinstance(c, Disk) and not c.radius >= 0:
                raise InvalidDomainError(f"component {i} has negative radius")
        problems = _check_disjoint(self.lat, comps)
        if problems:
            raise InvalidDomainError("; ".join(problems))
        object.__setattr__(self, "components", comps)

    @property
    def m(self) -> int:
        return len(self.components)

    def modulus_set(self) -> list:
        """The compact set {lambda} u K_1 u ... u K_m used by d1."""
        return [complex(self.lat.tau), *self.components]

    def contains(self, z) -> np.ndarray:
        """Membership in the m-domain (outside every translate of every component)."""
        z = np.asarray(z, dtype=complex)
        inside = np.zeros(z.shape, dtype=bool)
        for comp in self.components:
            z0, m, n = self.lat.reduce(z - comp.centroid)
            for dm in (-1, 0, 1):
                for dn in (-1, 0, 1):
                    pts = z0 + comp.centroid + dm + dn * self.lat.tau
                    inside |= comp.contains(pts)
        return ~inside

    def boundary_samples(self, n: int = DEFAULT_RESOLUTION) -> list[np.ndarray]:
        return [c.boundary(n) for c in self.components]


# ---------------------------------------------------------------------------
# Hausdorff distances


def hausdorff_one_sided(s1, s2) -> float:
    """``sup_{x in S1} inf_{y in S2} |x - y|`` over finite point clouds (exact)."""
    a = np.asarray(s1, dtype=complex).ravel()
    b = np.asarray(s2, dtype=complex).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySetError("Hausdorff distance of an empty set")
    tree = cKDTree(np.column_stack([b.real, b.imag]))
    d, _ = tree.query(np.column_stack([a.real, a.imag]))
    return float(np.max(d))


def hausdorff_distance(s1, s2) -> float:
    """Sum convention: ``d(S1, S2) + d(S2, S1)``."""
    return hausdorff_one_sided(s1, s2) + hausdorff_one_sided(s2, s1)


def _part_boundary(part, n: int) -> np.ndarray:
    if isinstance(part, (Disk, Curve)):
        return part.boundary(n)
    return np.atleast_1d(np.asarray(part, dtype=complex))


def _dist_to_parts(pts: np.ndarray, parts, n: int) -> np.ndarray:
    best = np.full(pts.shape, np.inf)
    for part in parts:
        if isinstance(part, (Disk, Curve)):
            d = part.dist_to(pts)
        else:
            cloud = np.atleast_1d(np.asarray(part, dtype=complex))
            tree = cKDTree(np.column_stack([cloud.real, cloud.imag]))
            d, _ = tree.query(np.column_stack([pts.real, pts.imag]))
        best = np.minimum(best, d)
    return best


def set_one_sided(a_parts, b_parts, n: int = DEFAULT_RESOLUTION) -> float:
    """One-sided distance between unions of filled components and points.

    The distance to a closed set has no local maximum off the set, so the sup
    over a filled component is attained on its boundary; boundaries are
    sampled and distances to ``b_parts`` are exact (0 inside a component).
    """
    if not a_parts or not b_parts:
        raise EmptySetError("Hausdorff distance of an empty set")
    pts = np.concatenate([_part_boundary(p, n) for p in a_parts])
    return float(np.max(_dist_to_parts(pts, b_parts, n)))


def set_hausdorff(a_parts, b_parts, n: int = DEFAULT_RESOLUTION) -> float:
    return set_one_sided(a_parts, b_parts, n) + set_one_sided(b_parts, a_parts, n)


def _as_sampled(dom) -> SampledMDomain:
    return dom.as_sampled() if isinstance(dom, CircledMDomain) else dom


def d1(a, b, n: int = DEFAULT_RESOLUTION) -> float:
    """Hausdorff distance (sum convention) between {lambda} u K_1 u ... u K_m."""
    a, b = _as_sampled(a), _as_sampled(b)
    if a.m != b.m:
        raise ArityError(f"domains have {a.m} and {b.m} components")
    return set_hausdorff(a.modulus_set(), b.modulus_set(), n)


def d2(a: CircledMDomain, b: CircledMDomain) -> float:
    if a.m != b.m:
        raise ArityError(f"domains have {a.m} and {b.m} components")
    return float(np.linalg.norm(encode_params(a) - encode_params(b)))


@dataclass
class XmdResult:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate_xmd(center, delta: float, candidate, n: int = DEFAULT_RESOLUTION) -> XmdResult:
    """Membership of ``candidate`` in the delta-neighbourhood space around ``center``.

    Components are matched by index.  Clauses: d_H(C_i, K_i) < delta,
    |lambda' - lambda| < delta, pairwise disjointness, and no component meets
    the delta-disk U_0 around lambda.
    """
    center, candidate = _as_sampled(center), _as_sampled(candidate)
    if center.m != candidate.m:
        raise ArityError(f"domains have {center.m} and {candidate.m} components")
    bad = []
    lam, lam_c = center.lat.tau, candidate.lat.tau
    if not abs(lam_c - lam) < delta:
        bad.append(f"modulus: |lambda' - lambda| = {abs(lam_c - lam):.3g} >= delta")
    for i, (k, c) in enumerate(zip(center.components, candidate.components)):
        dh = set_hausdorff([k], [c], n)
        if not dh < delta:
            bad.append(f"component {i}: d_H >= delta ({dh:.3g})")
        u0 = Disk(lam, delta)
        if _components_meet(c, u0):
            bad.append(f"component {i}: intersects U0")
    comps = candidate.components
    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            if _components_meet(comps[i], comps[j]):
                bad.append(f"components {i} and {j}: not disjoint")
    return XmdResult(ok=not bad, violations=bad)


# ---------------------------------------------------------------------------
# Parameters


def encode_params(dom: CircledMDomain) -> np.ndarray:
    vals = [dom.tau.real, dom.tau.imag]
    for d in dom.components:
        vals += [d.center.real, d.center.imag, d.radius]
    return np.asarray(vals, dtype=float)


def decode_params(p, allow_points: bool = False) -> CircledMDomain:
    p = np.asarray(p, dtype=float).ravel()
    if len(p) < 2 or (len(p) - 2) % 3:
        raise ArityError(f"parameter vector of length {len(p)} is not 2 + 3m")
    if not np.all(np.isfinite(p)):
        raise InvalidDomainError("non-finite parameters")
    tau = complex(p[0], p[1])
    comps = []
    for i in range(2, len(p), 3):
        r = p[i + 2]
        if r < 0 or (r == 0 and not allow_points):
            raise InvalidDomainError(f"invalid radius {r}")
        comps.append(Disk(complex(p[i], p[i + 1]), r))
    try:
        lat = Lattice(tau)
    except ValueError as exc:
        raise InvalidDomainError(str(exc)) from exc
    if lat.tau != tau:
        raise InvalidDomainError(f"modulus {tau} is not reduced")
    return CircledMDomain(lat, tuple(comps))


@dataclass(frozen=True)
class ParamBall:
    """Closed Euclidean ball in R^(2+3m) whose points all decode to valid domains."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).copy())
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, p, slack: float = 1e-12) -> bool:
        return bool(np.linalg.norm(np.asarray(p) - self.center) <= self.radius * (1 + slack))

    def project(self, p) -> np.ndarray:
        v = np.asarray(p, dtype=float) - self.center
        nv = np.linalg.norm(v)
        return self.center + v * (self.radius / nv) if nv > self.radius else np.asarray(p, dtype=float)

    def face_points(self) -> np.ndarray:
        """The 2 * dim points center +- radius * e_j."""
        eye = np.eye(self.dim) * self.radius
        return np.vstack([self.center + eye, self.center - eye])

    def halton(self, n: int, seed: int = 0) -> np.ndarray:
        """``n`` low-discrepancy points in the ball (Halton cube mapped radially)."""
        from scipy.stats import qmc

        u = qmc.Halton(d=self.dim + 1, scramble=True, seed=seed).random(n)
        g = _normal_ppf(u[:, :-1])
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
        rad = u[:, -1] ** (1.0 / self.dim)
        return self.center + self.radius * dirs * rad[:, None]

    def invalid_points(self, require_tau_free: bool = True) -> list:
        bad = []
        for p in np.vstack([self.center[None, :], self.face_points()]):
            try:
                dom = decode_params(p)
                if require_tau_free and dom.contains_modulus():
                    bad.append(p)
            except (InvalidDomainError, ArityError):
                bad.append(p)
        return bad

    @classmethod
    def validated(cls, center, radius: float, require_tau_free: bool = True, max_halvings: int = 30):
        """Shrink ``radius`` until the centre and face points decode to valid domains."""
        ball = cls(center, radius)
        for _ in range(max_halvings):
            if not ball.invalid_points(require_tau_free):
                return ball
            ball = cls(center, ball.radius / 2)
        raise InvalidDomainError("no valid ball around the given centre")


def _normal_ppf(u: np.ndarray) -> np.ndarray:
    from scipy.special import ndtri

    return ndtri(np.clip(u, 1e-12, 1 - 1e-12))


# ---------------------------------------------------------------------------
# Descriptors


def _pair(z: complex) -> list:
    return [float(z.real), float(z.imag)]


def to_descriptor(dom) -> dict:
    comps = []
    for c in dom.components:
        if isinstance(c, Disk):
            comps.append({"type": "disk", "center": _pair(c.center), "radius": float(c.radius)})
        else:
            comps.append({"type": "curve", "points": [_pair(p) for p in c.points]})
    return {"schema": SCHEMA, "tau": _pair(dom.lat.tau), "components": comps}


def from_descriptor(obj: dict):
    """Build a domain from a descriptor; disk-only descriptors give a CircledMDomain."""
    try:
        tau = complex(*obj["tau"])
        comps = []
        for c in obj["components"]:
            kind = c.get("type")
            if kind == "disk":
                comps.append(Disk(complex(*c["center"]), float(c["radius"])))
            elif kind == "curve":
                comps.append(Curve(tuple(complex(*p) for p in c["points"])))
            else:
                raise InvalidDomainError(f"unknown component type {kind!r}")
    except (KeyError, TypeError) as exc:
        raise InvalidDomainError(f"malformed domain descriptor: {exc}") from exc
    try:
        lat = Lattice(tau)
    except ValueError as exc:
        raise InvalidDomainError(str(exc)) from exc
    if all(isinstance(c, Disk) for c in comps):
        return CircledMDomain(lat, tuple(comps))
    return SampledMDomain(lat, tuple(comps))


def perturbed_curve(disk: Disk, amplitude: float, mode: int = 3, n: int = DEFAULT_RESOLUTION,
                    phase: float = 0.0) -> Curve:
    """Polyline ``r(theta) = r (1 + amplitude cos(mode theta + phase))`` around a disk centre."""
    theta = 2 * np.pi * np.arange(n) / n
    rad = disk.radius * (1 + amplitude * np.cos(mode * theta + phase))
    return Curve(tuple(disk.center + rad * np.exp(1j * theta)))
