"""The two-wp embedding of a circled torus domain into C^2.

A source point ``z`` is sent to ``(wp(z - z1 - p), wp(z - z1))`` where ``z1``
is the origin of the construction (the first disk centre by default) and
``p`` a small shift.  Both poles, ``z1`` and ``z1 + p``, have to sit inside a
removed disk, and ``2p`` must stay off the lattice, otherwise the map is not
injective (``wp`` is even, so the pair would agree at ``z`` and at the point
mirrored through ``z1 + p/2``... only when ``2p`` is a period).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .domain import SCHEMA, CircledMDomain, decode_params, encode_params
from .elliptic import Lattice, wp_deriv, wp_eval
from .errors import DegenerateShiftError, LocationError, PolePlacementError

SHIFT_FLOOR = 1e-6
POLE_MARGIN = 1e-3


@dataclass
class SurfaceSample:
    """Sampled embedded surface: source points, their images in C^2 and provenance.

    ``boundary[k]`` is the component index of a boundary sample and -1 for
    interior samples.  ``params`` is ``None`` for synthetic surfaces that are
    not built from wp.
    """

    sources: np.ndarray
    images: np.ndarray
    params: np.ndarray | None = None
    shift: complex = 0j
    origin: complex = 0j
    boundary: np.ndarray | None = None

    def __post_init__(self):
        self.sources = np.asarray(self.sources, dtype=complex)
        self.images = np.asarray(self.images, dtype=complex).reshape(len(self.sources), 2)
        if self.boundary is None:
            self.boundary = np.full(len(self.sources), -1)
        self.boundary = np.asarray(self.boundary, dtype=int)
        if self.params is not None:
            self.params = np.asarray(self.params, dtype=float)

    def __len__(self):
        return len(self.sources)

    @property
    def is_elliptic(self) -> bool:
        return self.params is not None

    @property
    def domain(self) -> CircledMDomain:
        return decode_params(self.params)

    @property
    def lat(self) -> Lattice | None:
        return self.domain.lat if self.is_elliptic else None

    def with_images(self, images) -> "SurfaceSample":
        return SurfaceSample(self.sources.copy(), np.asarray(images, dtype=complex), self.params,
                             self.shift, self.origin, self.boundary.copy())

    def source_distance(self, a, b) -> np.ndarray:
        if self.is_elliptic:
            return self.lat.torus_distance(a, b)
        return np.abs(np.asarray(a) - np.asarray(b))

    def map_point(self, z, tol: float = 1e-12) -> np.ndarray:
        """Evaluate the wp pair at arbitrary sources (elliptic surfaces only)."""
        return wp_pair(self.lat, np.asarray(z, dtype=complex) - self.origin, self.shift, tol)

    # -- invariants ---------------------------------------------------------

    def well_definedness_residual(self, tol: float = 1e-12) -> float:
        """Max image change when a source is moved by a lattice generator."""
        if not self.is_elliptic:
            return 0.0
        worst = 0.0
        for g in (1.0, self.lat.tau):
            moved = self.map_point(self.sources + g, tol)
            scale = np.maximum(1.0, np.abs(self.images))
            worst = max(worst, float(np.max(np.abs(moved - self.images) / scale)))
        return worst

    def separation_ratios(self, chunk: int = 512):
        """Min over pairs of image distance / source distance, with the arg-min pair."""
        src, img = self.sources, self.images
        n = len(src)
        best, pair = np.inf, (-1, -1)
        for s in range(0, n, chunk):
            a = slice(s, min(s + chunk, n))
            ds = self.source_distance(src[a, None], src[None, :])
            di = np.sqrt(np.abs(img[a, None, 0] - img[None, :, 0]) ** 2
                         + np.abs(img[a, None, 1] - img[None, :, 1]) ** 2)
            idx = np.arange(a.start, a.stop)[:, None]
            valid = np.arange(n)[None, :] > idx
            ratio = np.where(valid & (ds > 0), di / np.where(ds > 0, ds, 1.0), np.inf)
            k = np.unravel_index(np.argmin(ratio), ratio.shape)
            if ratio[k] < best:
                best, pair = float(ratio[k]), (int(k[0] + a.start), int(k[1]))
        return best, pair

    def injectivity_ok(self, kappa: float = 1e-3) -> bool:
        return self.separation_ratios()[0] >= kappa

    # -- serialisation ------------------------------------------------------

    def to_json(self) -> dict:
        def pair(z):
            return [float(np.real(z)), float(np.imag(z))]

        entries = []
        for z, w, b in zip(self.sources, self.images, self.boundary):
            e = {"z": pair(z), "w": [pair(w[0]), pair(w[1])]}
            if b >= 0:
                e["b"] = int(b)
            entries.append(e)
        return {
            "schema": SCHEMA,
            "params": None if self.params is None else [float(x) for x in self.params],
            "p": pair(self.shift),
            "origin": pair(self.origin),
            "entries": entries,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SurfaceSample":
        ents = obj["entries"]
        src = np.array([complex(*e["z"]) for e in ents])
        img = np.array([[complex(*e["w"][0]), complex(*e["w"][1])] for e in ents])
        bnd = np.array([e.get("b", -1) for e in ents], dtype=int)
        params = obj.get("params")
        return cls(src, img, None if params is None else np.asarray(params, dtype=float),
                   complex(*obj.get("p", [0, 0])), complex(*obj.get("origin", [0, 0])), bnd)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def wp_pair(lat: Lattice, u, p: complex, tol: float = 1e-12) -> np.ndarray:
    """``(wp(u - p), wp(u))`` stacked on the last axis."""
    u = np.asarray(u, dtype=complex)
    return np.stack([np.asarray(wp_eval(lat, u - p, tol)), np.asarray(wp_eval(lat, u, tol))], axis=-1)


def default_shift(dom: CircledMDomain) -> complex:
    """Half the first radius in a direction unrelated to the lattice."""
    r1 = dom.components[0].radius
    return 0.5 * r1 * complex(np.exp(1j * (np.sqrt(2) - 1) * np.pi))


def _pole_inside(dom: CircledMDomain, pole: complex, margin: float) -> bool:
    for d in dom.components:
        _, dist = dom.lat.nearest_point(np.array([pole - d.center]))
        if dist[0] < d.radius - margin:
            return True
    return False


def check_shift(dom: CircledMDomain, p: complex, origin: complex, floor: float = SHIFT_FLOOR,
                margin: float = POLE_MARGIN, allow_interior_pole: bool = False):
    lat = dom.lat
    _, d2p = lat.nearest_point(np.array([2 * p]))
    if d2p[0] < floor:
        raise DegenerateShiftError(f"degenerate shift: 2p = {2 * p} lies on the lattice")
    if allow_interior_pole:
        return
    for pole in (origin, origin + p):
        if not _pole_inside(dom, pole, margin):
            raise PolePlacementError(f"pole at {pole} is not inside a removed disk")


def embed_domain(dom: CircledMDomain, p: complex | None = None, grid: int = 64, tol: float = 1e-12,
                 origin: complex | None = None, boundary_samples: int = 128,
                 allow_interior_pole: bool = False, pole_clearance: float = 0.02) -> SurfaceSample:
    """Sample the wp embedding of ``dom`` on a grid of the fundamental cell plus its boundary circles.

    ``origin`` defaults to the first disk centre.  With
    ``allow_interior_pole`` a pole outside the removed disks is tolerated and
    grid points within ``pole_clearance`` of it are skipped.
    """
    lat = dom.lat
    if origin is None:
        origin = dom.components[0].center
    if p is None:
        p = default_shift(dom)
    p, origin = complex(p), complex(origin)
    check_shift(dom, p, origin, allow_interior_pole=allow_interior_pole)
    s = np.arange(grid) / grid
    cell = (s[:, None] + s[None, :] * lat.tau).ravel()
    keep = dom.contains(cell)
    for pole in (origin, origin + p):
        _, dist = lat.nearest_point(cell - pole)
        keep &= dist > pole_clearance
    pts = [cell[keep]]
    owner = [np.full(int(keep.sum()), -1)]
    for i, d in enumerate(dom.components):
        b = d.boundary(boundary_samples)
        pts.append(b)
        owner.append(np.full(len(b), i))
    src = np.concatenate(pts)
    img = wp_pair(lat, src - origin, p, tol)
    return SurfaceSample(src, img, encode_params(dom), p, origin, np.concatenate(owner))


# ---------------------------------------------------------------------------
# Boundary conditions for proper embedding


@dataclass
class PointReport:
    point: complex
    fiber_margin: float
    offending: int | None
    regularity_margin: float
    passed: bool
    notes: list = field(default_factory=list)


@dataclass
class Theorem5Report:
    points: list

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.points)

    def failures(self) -> list:
        return [p for p in self.points if not p.passed]


def _typical_spacing(surf: SurfaceSample) -> float:
    from scipy.spatial import cKDTree

    z = surf.sources
    tree = cKDTree(np.column_stack([z.real, z.imag]))
    d, _ = tree.query(np.column_stack([z.real, z.imag]), k=2)
    return float(np.median(d[:, 1]))


def _locate(surf: SurfaceSample, z: complex, loc_tol: float) -> None:
    if surf.is_elliptic:
        dom = surf.domain
        for d in dom.components:
            _, dist = dom.lat.nearest_point(np.array([z - d.center]))
            if abs(dist[0] - d.radius) <= loc_tol:
                return
    else:
        bsrc = surf.sources[surf.boundary >= 0]
        if len(bsrc) and np.min(np.abs(bsrc - z)) <= loc_tol:
            return
    raise LocationError(f"point {z} is not on a boundary curve")


def _local_slope(surf: SurfaceSample, z: complex, k: int = 8) -> complex:
    """Least-squares slope of the first coordinate around ``z`` from nearby samples."""
    d = surf.source_distance(surf.sources, z)
    idx = np.argsort(d)[:k]
    dz = surf.sources[idx] - z
    w1 = surf.images[idx, 0]
    a = np.column_stack([np.ones(len(idx)), dz])
    sol = np.linalg.lstsq(a, w1, rcond=None)[0]
    return complex(sol[1])


def check_theorem5_conditions(surf: SurfaceSample, boundary_points, fiber_factor: float = 0.5,
                              exclusion: float | None = None, regularity_floor: float = 1e-8,
                              loc_tol: float | None = None, tol: float = 1e-12) -> Theorem5Report:
    """Check, at each boundary point, the fibre condition and regularity of the first projection.

    Fibre margin: the smallest ``|w1' - w1|`` over samples whose source is more
    than ``exclusion`` away from the point.  It fails when below
    ``fiber_factor * |dw1/dz| * h`` with ``h`` the typical sample spacing, i.e.
    when some far sample sits on the same fibre up to sampling resolution.
    For wp surfaces the second fibre point (the mirror of ``z`` through
    ``origin + p/2``... of the first coordinate) is also tested exactly
    against the retained closed domain.
    """
    h = _typical_spacing(surf)
    exclusion = 3 * h if exclusion is None else exclusion
    loc_tol = h if loc_tol is None else loc_tol
    reports = []
    for z in np.atleast_1d(np.asarray(boundary_points, dtype=complex)):
        z = complex(z)
        _locate(surf, z, loc_tol)
        notes = []
        if surf.is_elliptic:
            lat = surf.lat
            w = surf.map_point(np.array([z]), tol)[0]
            slope = complex(wp_deriv(lat, z - surf.origin - surf.shift, tol))
        else:
            k = int(np.argmin(np.abs(surf.sources - z)))
            w = surf.images[k]
            slope = _local_slope(surf, z)
        far = surf.source_distance(surf.sources, z) > exclusion
        gaps = np.where(far, np.abs(surf.images[:, 0] - w[0]), np.inf)
        j = int(np.argmin(gaps))
        margin = float(gaps[j])
        threshold = fiber_factor * abs(slope) * h
        offending = j if margin < threshold else None
        if surf.is_elliptic:
            mirror = 2 * (surf.origin + surf.shift) - z
            same = surf.source_distance(np.array([mirror]), np.array([z]))[0] < 1e-9
            if not same and bool(surf.domain.contains(np.array([mirror]))[0]):
                notes.append(f"second fibre point {mirror} lies in the domain")
                margin = min(margin, 0.0)
                if offending is None:
                    offending = int(np.argmin(surf.source_distance(surf.sources, mirror)))
        reg = abs(slope)
        ok = offending is None and reg > regularity_floor
        if reg <= regularity_floor:
            notes.append("critical point of the first projection")
        reports.append(PointReport(point=z, fiber_margin=margin, offending=offending,
                                   regularity_margin=reg, passed=ok, notes=notes))
    return Theorem5Report(reports)
