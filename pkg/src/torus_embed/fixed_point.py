"""Perturb-then-uniformize map on a parameter ball and a preimage search for it.

``F(p) = encode(uniformize(psi(decode(p))))``.  When ``|F - id|`` is small on
the ball, a degree argument guarantees that the centre is hit; here the
preimage is found by damped fixed-point iteration and re-checked.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .domain import (CircledMDomain, Curve, ParamBall, SampledMDomain, d1, d2, decode_params,
                     encode_params, validate_xmd)
from .embedder import SurfaceSample, embed_domain, wp_pair
from .errors import NoSolutionFoundError, TorusEmbedError, ValidationError
from .shear_perturb import build_zero_function, normal_chart, singular_shear, wp_curve_model
from .uniformizer import uniformize



def worker_count() -> int:
    """Worker cap from ``TORUS_EMBED_THREADS`` (0 or unset means automatic)."""
    try:
        n = int(os.environ.get("TORUS_EMBED_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else min(8, os.cpu_count() or 1)


@dataclass
class PerturbationField:
    """A map from circled domains to sampled domains, with a running sup of its d1 size."""

    apply_fn: Callable[[CircledMDomain], SampledMDomain]
    name: str = "field"
    d1_bound: float = 0.0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def apply(self, dom: CircledMDomain, measure: bool = True) -> SampledMDomain:
        out = self.apply_fn(dom)
        if measure and out.m == dom.m:
            dist = d1(dom, out)
            with self._lock:
                self.d1_bound = max(self.d1_bound, dist)
        return out

    __call__ = apply


def identity_field() -> PerturbationField:
    return PerturbationField(lambda dom: dom.as_sampled(), "identity")


def translation_field(v) -> PerturbationField:
    """Shift the parameter vector by ``v``; the result is again circled."""
    v = np.asarray(v, dtype=float)
    return PerturbationField(lambda dom: decode_params(encode_params(dom) + v).as_sampled(), "translation")


# ---------------------------------------------------------------------------
# Shear-induced re-sampling


def _reproject(surf: SurfaceSample, u0: np.ndarray, w: np.ndarray, steps: int = 6) -> np.ndarray:
    """Source of the point on the embedded curve closest to ``w`` (Gauss-Newton from ``u0``)."""
    from .elliptic import wp_deriv

    lat, p, o = surf.lat, surf.shift, surf.origin
    u = u0.copy()
    for _ in range(steps):
        x = wp_pair(lat, u - o, p)
        t = np.stack([np.asarray(wp_deriv(lat, u - o - p)), np.asarray(wp_deriv(lat, u - o))], -1)
        du = np.einsum("ij,ij->i", t.conj(), w - x) / np.einsum("ij,ij->i", t.conj(), t)
        u = u + du
        if np.max(np.abs(du)) < 1e-15:
            break
    return u


@dataclass
class ShearResampler:
    """Push boundary circles through the embedding, shear, and pull back to the torus.

    Each circle is embedded with the wp pair, moved by the singular shear
    ``lam -> lam + delta / f`` in the normal chart of the image curve, and
    every sheared point is projected back onto the curve; the projected
    sources form the new boundary polylines.  ``delta`` is fixed once so that
    the boundary moves by ``delta_hat`` at the reference domain.
    """

    delta_hat: float
    reference: CircledMDomain
    samples: int = 256
    tube_radius: float = 1.0
    delta: float = field(init=False)

    def __post_init__(self):
        probe = 1e-6
        moved = self._displacements(self.reference, probe)
        self.delta = probe * self.delta_hat / max(np.max(np.abs(d)) for d in moved)
        # the sheared fibre offsets must stay inside a validated tube
        dom = self.reference
        zf = build_zero_function(dom, range(dom.m), verify=False)
        src = np.concatenate([d.boundary(self.samples) for d in dom.components])
        self.tube_radius = 2 * abs(self.delta) * float(np.max(1 / np.abs(zf(src))))
        normal_chart(wp_curve_model(embed_domain(dom, grid=24, boundary_samples=self.samples)),
                     self.tube_radius)

    def _displacements(self, dom: CircledMDomain, delta: float) -> list:
        surf = embed_domain(dom, grid=24, boundary_samples=self.samples)
        model = wp_curve_model(surf)
        chart = normal_chart(model, self.tube_radius, validate=False)
        zf = build_zero_function(dom, range(dom.m), verify=False)
        out = []
        for d in dom.components:
            src = d.boundary(self.samples)
            pts = SurfaceSample(src, surf.map_point(src), surf.params, surf.shift, surf.origin)
            sheared = singular_shear(chart, zf, delta, pts)
            out.append(_reproject(surf, src, sheared.images) - src)
        return out

    def __call__(self, dom: CircledMDomain) -> SampledMDomain:
        moved = self._displacements(dom, self.delta)
        comps = [Curve(tuple(d.boundary(self.samples) + m)) for d, m in zip(dom.components, moved)]
        return SampledMDomain(dom.lat, tuple(comps))


def shear_field(delta_hat: float, reference: CircledMDomain, samples: int = 256) -> PerturbationField:
    return PerturbationField(ShearResampler(delta_hat, reference, samples), f"shear({delta_hat:g})")


# ---------------------------------------------------------------------------
# F and its checks


@dataclass
class ComposedF:
    """Cached evaluator ``p -> encode(uniformize(psi(decode(p))))``."""

    ball: ParamBall
    psi: PerturbationField
    tol: float = 1e-8
    validate: bool = True
    xmd_delta: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def evaluate(self, p) -> np.ndarray:
        """Uncached evaluation."""
        p = np.asarray(p, dtype=float)
        dom = decode_params(p)
        pert = self.psi.apply(dom)
        if self.validate:
            delta = self.ball.radius if self.xmd_delta is None else self.xmd_delta
            res = validate_xmd(dom.as_sampled(), delta, pert)
            if not res:
                raise ValidationError(f"perturbed domain at p = {p.tolist()} is invalid: {res.violations}",
                                      violations=res.violations)
        try:
            circ, _ = uniformize(pert, tol=self.tol)
        except TorusEmbedError as exc:
            exc.args = (f"{exc.args[0] if exc.args else exc} at p = {p.tolist()}",)
            exc.details = {**getattr(exc, "details", {}), "p": p.tolist()}
            raise
        return encode_params(circ)

    def __call__(self, p) -> np.ndarray:
        key = np.asarray(p, dtype=float).tobytes()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit.copy()
        val = self.evaluate(p)
        with self._lock:
            val = self._cache.setdefault(key, val)
        return val.copy()

    def many(self, points, workers: int | None = None) -> np.ndarray:
        points = np.atleast_2d(points)
        workers = worker_count() if workers is None else workers
        if workers <= 1:
            return np.array([self(p) for p in points])
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(self, points)))


def compose_F(ball: ParamBall, psi: PerturbationField, tol: float = 1e-8, validate: bool = True,
              xmd_delta: float | None = None) -> ComposedF:
    return ComposedF(ball, psi, tol, validate, xmd_delta)


@dataclass
class MuReport:
    passed: bool
    sup: float
    mu: float
    worst_point: np.ndarray
    samples: int


def default_sample_count(ball: ParamBall) -> int:
    """Four points per orthant-style cell: 128 for a five-dimensional ball."""
    return 4 * 2 ** ball.dim


def check_mu(ball: ParamBall, F: Callable, mu: float, samples: int | None = None, seed: int = 0,
             workers: int | None = 1) -> MuReport:
    """Sup of ``|F(p) - p|`` over the centre plus Halton points of the ball."""
    n = default_sample_count(ball) if samples is None else int(samples)
    pts = np.vstack([ball.center[None, :], ball.halton(max(n - 1, 0), seed)])[:max(n, 1)]
    if hasattr(F, "many"):
        vals = F.many(pts, workers)
    else:
        vals = np.array([F(p) for p in pts])
    err = np.linalg.norm(vals - pts, axis=1)
    k = int(np.argmax(err))
    return MuReport(bool(err[k] < mu), float(err[k]), float(mu), pts[k], len(pts))


@dataclass
class SolveResult:
    point: np.ndarray
    residual: float
    iterations: int
    trace: list
    verified_residual: float | None = None


def solve_preimage(ball: ParamBall, F: Callable, target, tol: float = 1e-6, max_iter: int = 50,
                   margin: float = 0.5, mu_report: MuReport | None = None,
                   max_outside: int = 5, verify: Callable | None = None) -> SolveResult:
    """Find ``p`` in the ball with ``|F(p) - target| < tol`` by damped fixed-point iteration.

    Starts at the projection of ``target``; each step is
    ``p - t (F(p) - target)`` projected onto the ball, with ``t`` halved when
    the residual does not drop.  ``mu_report`` (if given) must certify
    ``sup |F - id| < margin * radius``.  Failure is inconclusive, not a proof
    that no preimage exists.
    """
    target = np.asarray(target, dtype=float)
    if mu_report is not None and not mu_report.sup < margin * ball.radius:
        raise ValidationError(f"measured sup |F - id| = {mu_report.sup:.3g} is not below "
                              f"{margin} * radius = {margin * ball.radius:.3g}")
    p = ball.project(target)
    r = F(p) - target
    rn = float(np.linalg.norm(r))
    trace = [{"iteration": 0, "residual": rn, "step": 1.0}]
    outside, it, t = 0, 0, 1.0
    while rn >= tol:
        if it >= max_iter:
            raise NoSolutionFoundError(f"no preimage found after {max_iter} iterations (residual {rn:.3g}); "
                                       "inconclusive", residual=rn, trace=trace)
        it += 1
        while True:
            raw = p - t * r
            cand = ball.project(raw)
            rc = F(cand) - target
            rcn = float(np.linalg.norm(rc))
            if rcn < rn or t < 1e-3:
                break
            t *= 0.5
        if rcn >= rn:
            raise NoSolutionFoundError(f"iteration stalled at residual {rn:.3g}; inconclusive",
                                       residual=rn, trace=trace)
        outside = outside + 1 if not np.allclose(cand, raw) else 0
        if outside >= max_outside:
            raise NoSolutionFoundError("iteration keeps leaving the ball; inconclusive",
                                       residual=rcn, trace=trace)
        p, r, rn = cand, rc, rcn
        trace.append({"iteration": it, "residual": rn, "step": t})
        t = min(1.0, 2 * t)
    res = SolveResult(p, rn, it, trace)
    if verify is not None:
        res.verified_residual = float(np.linalg.norm(verify(p) - target))
    elif hasattr(F, "evaluate"):
        res.verified_residual = float(np.linalg.norm(F.evaluate(p) - target))
    return res


def reverify(psi: PerturbationField, p, target, tol: float = 1e-8) -> float:
    """Independent ``d2`` between ``uniformize(psi(decode(p)))`` and ``target``."""
    circ, _ = uniformize(psi.apply(decode_params(p), measure=False), tol=tol)
    return d2(circ, decode_params(target))
