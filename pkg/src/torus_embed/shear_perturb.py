"""Normal-bundle chart around a holomorphic curve in C^2 and the singular shear.

A curve is given by a polynomial defining function ``g`` together with a
parametrisation ``u -> phi(u)`` of its zero set.  The chart
``H(u, lam) = phi(u) + lam * grad g(phi(u))`` is inverted by damped Newton in
``(u, lam)``.  The shear moves the fibre coordinate, ``lam -> lam + delta / f(u)``,
for a holomorphic ``f`` whose zeros sit inside removed disks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.signal import convolve2d

from .domain import CircledMDomain, Disk
from .elliptic import Lattice, invariants, wp_deriv, wp_eval
from .embedder import SurfaceSample
from .errors import (ChartDomainError, ConstructionError, NearSingularityError,
                     PlacementError, TubeTooLargeError, ValidationError)

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-12


# ---------------------------------------------------------------------------
# Defining functions


def _poly(terms: dict, size: int) -> np.ndarray:
    c = np.zeros((size, size), dtype=complex)
    for (i, j), v in terms.items():
        c[i, j] = v
    return c


def _pmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    return convolve2d(a, b)[:n, :n]


@dataclass
class DefiningFunctionModel:
    """Polynomial ``g(w1, w2)`` vanishing on a parametrised curve.

    ``coeffs[i, j]`` multiplies ``w1**i * w2**j``.  ``param`` and ``dparam``
    evaluate the curve and its derivative at chart coordinates ``u``;
    ``samples`` is the surface the model defines and also seeds chart
    inversion when no starting guess is given.
    """

    coeffs: np.ndarray
    param: Callable
    dparam: Callable
    samples: SurfaceSample
    name: str = "polynomial"
    _d1: np.ndarray = field(init=False, repr=False)
    _d2: np.ndarray = field(init=False, repr=False)
    _hess: tuple = field(init=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        self.coeffs = c
        self._d1 = npoly.polyder(c, axis=0)
        self._d2 = npoly.polyder(c, axis=1)
        self._hess = (npoly.polyder(self._d1, axis=0), npoly.polyder(self._d1, axis=1),
                      npoly.polyder(self._d2, axis=1))

    def g(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        return npoly.polyval2d(w[..., 0], w[..., 1], self.coeffs)

    def grad(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        x, y = w[..., 0], w[..., 1]
        return np.stack([npoly.polyval2d(x, y, self._d1), npoly.polyval2d(x, y, self._d2)], axis=-1)

    def hess(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        x, y = w[..., 0], w[..., 1]
        a, b, d = (npoly.polyval2d(x, y, h) for h in self._hess)
        return np.stack([np.stack([a, b], -1), np.stack([b, d], -1)], -2)

    def source_distance(self, a, b) -> np.ndarray:
        return self.samples.source_distance(a, b)

    def check(self, tol_g: float = 1e-8, floor: float = 1e-6) -> dict:
        w = self.samples.images
        gv = np.abs(self.g(w))
        gn = np.linalg.norm(self.grad(w), axis=-1)
        out = {"max_abs_g": float(gv.max()), "min_grad": float(gn.min())}
        if out["max_abs_g"] >= tol_g or out["min_grad"] <= floor:
            raise ValidationError(f"defining function fails on its samples: {out}")
        return out

    def normalized(self) -> "DefiningFunctionModel":
        """Rescale so that the median gradient norm on the samples is one."""
        gn = np.linalg.norm(self.grad(self.samples.images), axis=-1)
        return DefiningFunctionModel(self.coeffs / np.median(gn), self.param, self.dparam,
                                     self.samples, self.name)


def flat_model(sources) -> DefiningFunctionModel:
    """``g = w2`` with the zero set ``{(u, 0)}``."""
    u = np.asarray(sources, dtype=complex)
    surf = SurfaceSample(u, np.stack([u, np.zeros_like(u)], -1))
    return DefiningFunctionModel(
        _poly({(0, 1): 1}, 2),
        lambda u: np.stack([np.asarray(u, complex), np.zeros_like(u, dtype=complex)], -1),
        lambda u: np.stack([np.ones_like(u, dtype=complex), np.zeros_like(u, dtype=complex)], -1),
        surf, "flat")


def parabola_model(sources) -> DefiningFunctionModel:
    """``g = w2 - w1**2`` with the zero set ``{(u, u**2)}``."""
    u = np.asarray(sources, dtype=complex)
    surf = SurfaceSample(u, np.stack([u, u * u], -1))
    return DefiningFunctionModel(
        _poly({(0, 1): 1, (2, 0): -1}, 3),
        lambda u: np.stack([np.asarray(u, complex), np.asarray(u, complex) ** 2], -1),
        lambda u: np.stack([np.ones_like(u, dtype=complex), 2 * np.asarray(u, complex)], -1),
        surf, "parabola")


def wp_curve_polynomial(lat: Lattice, p: complex) -> np.ndarray:
    """Polynomial in ``(X, Y)`` vanishing exactly on ``{(wp(v - p), wp(v))}``.

    From the addition theorem ``4 (X + Y + P)(Y - P)^2 = (Y' + P')^2`` with
    ``P = wp(p)``, ``P' = wp'(p)``; eliminating ``Y'`` through
    ``Y'^2 = 4Y^3 - g2 Y - g3`` gives a degree-six polynomial.
    """
    g2, g3 = invariants(lat)
    pv = complex(wp_eval(lat, np.array([p]))[0])
    pd = complex(wp_deriv(lat, np.array([p]))[0])
    n = 7
    a = 4 * _pmul(_poly({(0, 0): pv, (1, 0): 1, (0, 1): 1}, n),
                  _poly({(0, 0): pv * pv, (0, 1): -2 * pv, (0, 2): 1}, n))
    c = _poly({(0, 3): 4, (0, 1): -g2, (0, 0): -g3}, n)
    b = a - c - _poly({(0, 0): pd * pd}, n)
    return _pmul(b, b) - 4 * pd * pd * c


def wp_curve_model(surf: SurfaceSample) -> DefiningFunctionModel:
    """Exact defining function of a wp-embedded surface, normalised on its samples."""
    if not surf.is_elliptic:
        raise ValidationError("the wp curve model needs an elliptic SurfaceSample")
    lat, p, o = surf.lat, surf.shift, surf.origin

    def param(u):
        return surf.map_point(u)

    def dparam(u):
        u = np.asarray(u, dtype=complex) - o
        return np.stack([np.asarray(wp_deriv(lat, u - p)), np.asarray(wp_deriv(lat, u))], -1)

    return DefiningFunctionModel(wp_curve_polynomial(lat, p), param, dparam, surf, "wp").normalized()


# ---------------------------------------------------------------------------
# Normal chart


@dataclass
class NormalChart:
    model: DefiningFunctionModel
    tube_radius: float
    max_iter: int = NEWTON_MAX_ITER
    tol: float = NEWTON_TOL

    def forward(self, u, lam) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        lam = np.asarray(lam, dtype=complex)
        x = self.model.param(u)
        return x + lam[..., None] * self.model.grad(x)

    def _seed(self, w: np.ndarray) -> np.ndarray:
        s = self.model.samples
        d = np.abs(w[:, None, 0] - s.images[None, :, 0]) ** 2 + np.abs(w[:, None, 1] - s.images[None, :, 1]) ** 2
        return s.sources[np.argmin(d, axis=1)]

    def inverse(self, w, u0=None, check_tube: bool = True):
        """Solve ``H(u, lam) = w``; returns ``(u, lam)`` arrays."""
        w = np.atleast_2d(np.asarray(w, dtype=complex))
        u = self._seed(w) if u0 is None else np.array(np.broadcast_to(u0, w.shape[:1]), dtype=complex)
        grad0 = self.model.grad(self.model.param(u))
        diff = w - self.model.param(u)
        lam = np.einsum("ij,ij->i", grad0.conj(), diff) / np.einsum("ij,ij->i", grad0.conj(), grad0)
        scale = 1.0 + np.linalg.norm(w, axis=-1)

        def resid(u, lam, sel=slice(None)):
            return self.forward(u, lam) - w[sel]

        r = resid(u, lam)
        rn = np.linalg.norm(r, axis=-1)
        done = rn <= self.tol * scale
        for _ in range(self.max_iter):
            if done.all():
                break
            act = ~done
            ua, la = u[act], lam[act]
            x = self.model.param(ua)
            dx = self.model.dparam(ua)
            gr = self.model.grad(x)
            hs = self.model.hess(x)
            col_u = dx + la[:, None] * np.einsum("ijk,ik->ij", hs, dx)
            jac = np.stack([col_u, gr], -1)
            step = np.linalg.solve(jac, -r[act][..., None])[..., 0]
            t = np.ones(len(ua))
            base = rn[act]
            nu, nl = ua + step[:, 0], la + step[:, 1]
            nr = resid(nu, nl, act)
            nn = np.linalg.norm(nr, axis=-1)
            for _ in range(30):
                bad = nn >= base
                if not bad.any():
                    break
                t[bad] *= 0.5
                nu[bad] = ua[bad] + t[bad] * step[bad, 0]
                nl[bad] = la[bad] + t[bad] * step[bad, 1]
                nr[bad] = resid(nu[bad], nl[bad], np.flatnonzero(act)[bad])
                nn[bad] = np.linalg.norm(nr[bad], axis=-1)
            stuck = nn >= base
            nu[stuck], nl[stuck], nr[stuck], nn[stuck] = ua[stuck], la[stuck], r[act][stuck], base[stuck]
            u[act], lam[act], r[act], rn[act] = nu, nl, nr, nn
            small = np.abs(step[:, 0]) + np.abs(step[:, 1]) <= self.tol * (1 + np.abs(nu) + np.abs(nl))
            done[act] = (nn <= self.tol * scale[act]) | small | stuck
        if check_tube and np.any(np.abs(lam) > self.tube_radius * (1 + 1e-9)):
            k = int(np.argmax(np.abs(lam)))
            raise ChartDomainError(f"point {w[k]} lies outside the tube (|lam| = {abs(lam[k]):.3g})")
        return u, lam

    def round_trip_error(self, u, lam) -> float:
        w = self.forward(u, lam)
        u2, l2 = self.inverse(w, u0=u, check_tube=False)
        return float(np.max(self.model.source_distance(u2, u) + np.abs(l2 - lam)))


def _tube_points(model: DefiningFunctionModel, radius: float, n_src: int, n_ang: int):
    src = model.samples.sources
    idx = np.linspace(0, len(src) - 1, min(n_src, len(src))).astype(int)
    ang = np.exp(2j * np.pi * (np.arange(n_ang) + 0.5) / n_ang)
    u = np.repeat(src[idx], n_ang)
    lam = radius * np.tile(ang, len(idx))
    return u, lam


def _tube_ok(chart: NormalChart, radius: float, kappa: float, n_src: int, n_ang: int) -> bool:
    model = chart.model
    u, lam = _tube_points(model, radius, n_src, n_ang)
    w = chart.forward(u, lam)
    du = model.source_distance(u[:, None], u[None, :])
    dist = du + np.abs(lam[:, None] - lam[None, :])
    dw = np.sqrt(np.abs(w[:, None, 0] - w[None, :, 0]) ** 2 + np.abs(w[:, None, 1] - w[None, :, 1]) ** 2)
    off = ~np.eye(len(u), dtype=bool)
    if np.any((dw[off] < kappa * dist[off])):
        return False
    # inversion seeded from the curve alone must land on the same chart point
    u2, l2 = chart.inverse(w, check_tube=False)
    err = model.source_distance(u2, u) + np.abs(l2 - lam)
    return bool(np.all(err < 1e-6 * (1 + radius)))


def normal_chart(model: DefiningFunctionModel, tube_radius: float, kappa: float = 1e-3,
                 n_src: int = 160, n_ang: int = 6, validate: bool = True) -> NormalChart:
    """Build ``H`` and its inverse on ``|lam| <= tube_radius``, validating injectivity on samples."""
    chart = NormalChart(model, float(tube_radius))
    if not validate:
        return chart
    if _tube_ok(chart, tube_radius, kappa, n_src, n_ang):
        return chart
    safe = tube_radius
    for _ in range(40):
        safe *= 0.5
        if _tube_ok(chart, safe, kappa, n_src, n_ang):
            break
    else:
        safe = 0.0
    raise TubeTooLargeError(f"tube radius {tube_radius} too large; measured safe radius {safe:.3g}",
                            safe_radius=safe)


# ---------------------------------------------------------------------------
# Zero function


def wp_zeros(lat: Lattice, starts: int = 12) -> np.ndarray:
    """The two zeros of wp in the reduced cell, found by Newton from a grid of starts."""
    s = (np.arange(starts) + 0.5) / starts
    z = (s[:, None] + s[None, :] * lat.tau).ravel()
    for _ in range(60):
        z = z - np.asarray(wp_eval(lat, z)) / np.asarray(wp_deriv(lat, z))
        z = lat.reduce(z)[0]
    z = z[np.abs(np.asarray(wp_eval(lat, z))) < 1e-9]
    found = []
    for w in z:
        if all(lat.torus_distance(np.array([w]), np.array([v]))[0] > 1e-6 for v in found):
            found.append(w)
    if len(found) != 2:
        raise ConstructionError(f"expected two zeros of wp, found {len(found)}")
    return np.array(found)


@dataclass
class ZeroFunction:
    """Product of one elliptic factor per target disk.

    A target with prescribed point ``p_i != c_i`` contributes
    ``wp(z - c_i) - wp(p_i - c_i)`` (zeros ``c_i +- (p_i - c_i)``, double pole at
    ``c_i``); a target with ``p_i = c_i`` contributes ``1 / wp(z - c_i)`` (double
    zero at ``c_i``, poles at the zeros of wp shifted by ``c_i``).  Poles of
    ``f`` are harmless for the shear, which only divides by ``f``.
    """

    lat: Lattice
    centers: tuple
    q_points: tuple
    values: tuple
    extra_zeros: list
    poles: list

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = np.ones_like(z)
        for c, v in zip(self.centers, self.values):
            with np.errstate(all="ignore"):
                w = np.asarray(wp_eval(self.lat, z - c, pole_floor=0.0))
                if v is None:
                    out = out * np.where(np.isfinite(w), 1 / w, 0)
                else:
                    out = out * (w - v)
        return out

    def zeros(self) -> list:
        return list(self.q_points) + [z for _, z in self.extra_zeros]

    def winding_numbers(self, dom: CircledMDomain, n: int = 2048) -> list:
        """Winding of ``f`` around each removed circle (zeros minus poles inside)."""
        out = []
        for d in dom.components:
            vals = self(d.boundary(n))
            ang = np.unwrap(np.angle(np.append(vals, vals[0])))
            out.append(int(round((ang[-1] - ang[0]) / (2 * np.pi))))
        return out

    def zeros_outside(self, dom: CircledMDomain, n: int = 2048) -> int:
        """Zeros in the retained region, by the argument principle.

        Zeros and poles balance on the torus and the cell boundary contributes
        nothing, so retained zeros = retained poles - sum of windings.
        """
        poles_out = sum(mult for z, mult in self.poles if bool(dom.contains(np.array([z]))[0]))
        return poles_out - sum(self.winding_numbers(dom, n))

    def retained_minimum(self, dom: CircledMDomain, resolution: int = 512) -> float:
        s = np.arange(resolution) / resolution
        cell = (s[:, None] + s[None, :] * self.lat.tau).ravel()
        keep = dom.contains(cell)
        return float(np.min(np.abs(self(cell[keep]))))

    def verify(self, dom: CircledMDomain, resolution: int = 512, tol_f: float = 1e-10,
               floor: float = 1e-8) -> dict:
        """Check prescribed zeros, containment of every zero and a lower bound on the retained grid."""
        qs = np.array(self.q_points)
        res = {"max_abs_at_q": float(np.max(np.abs(self(qs)))),
               "min_retained": self.retained_minimum(dom, resolution)}
        depth = []
        for z in self.zeros():
            depth.append(max(d.radius - float(dom.lat.nearest_point(np.array([z - d.center]))[1][0])
                             for d in dom.components))
        res["min_zero_depth"] = float(min(depth))
        res["zeros_outside"] = self.zeros_outside(dom)
        if res["max_abs_at_q"] >= tol_f:
            raise ValidationError(f"prescribed zero not attained: {res}")
        if res["min_zero_depth"] <= 0 or res["zeros_outside"] != 0 or res["min_retained"] <= floor:
            raise ConstructionError(f"a zero of f escapes the removed disks: {res}")
        return res


def build_zero_function(dom: CircledMDomain, interior_targets, points=None, verify: bool = True,
                        resolution: int = 512) -> ZeroFunction:
    """One elliptic factor per target disk, vanishing at the prescribed point ``p_i``.

    ``points`` defaults to ``c_i + r_i / 2``.  A prescribed point must lie
    strictly inside its disk.
    """
    lat = dom.lat
    targets = list(interior_targets)
    if points is None:
        points = [dom.components[i].center + 0.5 * dom.components[i].radius for i in targets]
    if len(points) != len(targets):
        raise PlacementError("one prescribed point is needed per target disk")
    centers, qs, vals, extra, poles = [], [], [], [], []
    for k, (i, q) in enumerate(zip(targets, points)):
        d: Disk = dom.components[i]
        q = complex(q)
        off = q - d.center
        if abs(off) >= d.radius * (1 - 1e-9):
            raise PlacementError(f"prescribed zero {q} is not strictly inside disk {i}")
        if abs(off) < 1e-12:
            vals.append(None)
            poles.extend((d.center + z0, 1) for z0 in wp_zeros(lat))
        else:
            vals.append(complex(wp_eval(lat, np.array([off]))[0]))
            mirror = d.center - off
            if abs(mirror - d.center) >= d.radius:
                raise ConstructionError(f"factor {k}: mirror zero {mirror} escapes disk {i}")
            extra.append((k, mirror))
            poles.append((d.center, 2))
        centers.append(d.center)
        qs.append(q)
    zf = ZeroFunction(lat, tuple(centers), tuple(qs), tuple(vals), extra, poles)
    if verify:
        zf.verify(dom, resolution)
    return zf


# ---------------------------------------------------------------------------
# Shear


def shear_coordinates(u, lam, f: Callable, delta: float, floor: float = 1e-10):
    """``(u, lam) -> (u, lam + delta / f(u))``; ``u`` is returned unchanged."""
    if delta == 0:
        return u, lam
    fv = np.asarray(f(u), dtype=complex)
    if np.any(np.abs(fv) < floor):
        k = int(np.argmin(np.abs(fv)))
        raise NearSingularityError(f"|f| = {abs(fv[k]):.3g} below floor at {np.ravel(u)[k]}")
    return u, lam + delta / fv


def singular_shear(chart: NormalChart, f: Callable, delta: float, points: SurfaceSample,
                   floor: float = 1e-10) -> SurfaceSample:
    """Move every image along its normal fibre by ``delta / f(u)``.

    The chart is inverted with the sample sources as starting guesses.
    """
    if delta == 0:
        return points.with_images(points.images.copy())
    u, lam = chart.inverse(points.images, u0=points.sources)
    u, lam2 = shear_coordinates(u, lam, f, delta, floor)
    return points.with_images(chart.forward(u, lam2))


def shear_bound(chart: NormalChart, f: Callable, delta: float, points: SurfaceSample) -> float:
    """``delta * max(1/|f|) * max ||grad g||`` over the sample sources."""
    fv = np.abs(np.asarray(f(points.sources)))
    gn = np.linalg.norm(chart.model.grad(chart.model.param(points.sources)), axis=-1)
    return float(abs(delta) * np.max(1 / fv) * np.max(gn))


@dataclass
class PerturbationReport:
    sup_displacement: float
    min_separation: float
    separation_pair: tuple
    retained: np.ndarray

    def as_metrics(self) -> dict:
        return {"sup_displacement": self.sup_displacement, "min_separation": self.min_separation}


def perturbation_report(before: SurfaceSample, after: SurfaceSample) -> PerturbationReport:
    if len(before) != len(after):
        raise ValidationError("samples are not matched")
    if before.is_elliptic:
        retained = before.domain.contains(before.sources) | (before.boundary >= 0)
    else:
        retained = np.ones(len(before), dtype=bool)
    disp = np.linalg.norm(after.images - before.images, axis=-1)
    sup = float(np.max(disp[retained])) if retained.any() else 0.0
    sep, pair = after.separation_ratios()
    return PerturbationReport(sup, sep, pair, retained)
