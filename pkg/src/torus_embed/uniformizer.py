"""Numerical uniformization of m-domains onto circled m-domains.

Maps are sought in the form

    f(z) = z + sum_{i,k} b_{ik} r_i^k Etilde_k(z - c_i)

where ``E_k`` are the lattice power sums of :mod:`torus_embed.elliptic`
(Laurent-type fields with a pole of order k at each component centre
``c_i``, repeated over the lattice) and ``Etilde_k`` subtracts the value and
slope at a base point ``b`` so that ``f(b) = b`` and ``f'(b) = 1``.  Every
such ``f`` is equivariant: ``f(z + 1) = f(z) + A`` and
``f(z + lambda) = f(z) + B`` for constants ``A``, ``B`` determined by the
coefficients.  The final map is rescaled to ``b + (f - b) / A`` so that it
fixes ``b`` and ``b + 1`` (with ``b = 0`` this fixes 0 and 1), and the circled
modulus is ``B / A``.

The coefficients are found by Koebe-style passes: each pass visits the
components in turn and takes a damped Gauss-Newton step on that
component's coefficients and circle so that its boundary becomes round,
holding the others fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .domain import CircledMDomain, Curve, Disk, SampledMDomain
from .elliptic import Lattice, eisenstein_function
from .errors import ConvergenceError, DegenerateComponentError, KernelUndefinedError


DEFAULT_ORDER = 32
DEFAULT_MAX_ITER = 200
RADIUS_FLOOR = 1e-9


# ---------------------------------------------------------------------------
# Basis


class _Basis:
    """Laurent-type field evaluator for a fixed lattice, centres and scales."""

    def __init__(self, lat: Lattice, centers, scales, order: int, base: complex):
        self.lat = lat
        self.centers = np.asarray(centers, dtype=complex)
        self.scales = np.asarray(scales, dtype=float)
        self.order = order
        self.base = complex(base)
        b = np.array([self.base])
        self._val_b = self._raw(b)[0]
        self._der_b = self._raw_deriv(b)[0]

    @property
    def size(self) -> int:
        return len(self.centers) * self.order

    def _raw(self, z):
        z = np.asarray(z, dtype=complex)
        cols = []
        for c, r in zip(self.centers, self.scales):
            for k in range(1, self.order + 1):
                cols.append(r**k * eisenstein_function(self.lat, z - c, k))
        return np.stack(cols, axis=-1)

    def _raw_deriv(self, z):
        z = np.asarray(z, dtype=complex)
        cols = []
        for c, r in zip(self.centers, self.scales):
            for k in range(1, self.order + 1):
                cols.append(-k * r**k * eisenstein_function(self.lat, z - c, k + 1))
        return np.stack(cols, axis=-1)

    def __call__(self, z):
        """Normalised basis matrix: value and slope at ``base`` removed."""
        z = np.asarray(z, dtype=complex)
        return self._raw(z) - self._val_b - (z[..., None] - self.base) * self._der_b

    def deriv(self, z):
        return self._raw_deriv(z) - self._der_b


# ---------------------------------------------------------------------------
# Map


@dataclass
class EquivariantMap:
    """Sampled equivariant conformal map ``f`` and its image lattice.

    ``image_lattice`` is ``(f(b+1) - f(b), f(b+lambda) - f(b))`` for the final
    normalised map, i.e. ``(1, lambda')``.
    """

    lat: Lattice
    coeffs: np.ndarray
    basis: _Basis = field(repr=False)
    shift_scale: complex  # A: raw translation by 1
    image_lattice: tuple
    normalization: str
    grid: np.ndarray = field(repr=False, default=None)
    info: "UniformizeInfo | None" = field(repr=False, default=None)

    @property
    def base(self) -> complex:
        return self.basis.base

    def raw(self, z):
        z = np.asarray(z, dtype=complex)
        return z + self.basis(z) @ self.coeffs

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.base + (self.raw(z) - self.base) / self.shift_scale

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        return (1 + self.basis.deriv(z) @ self.coeffs) / self.shift_scale

    def equivariance_residual(self, z) -> float:
        """Max of ``|f(z + m + n lam) - f(z) - m - n lam'|`` over ``|m| + |n| = 1``."""
        z = np.asarray(z, dtype=complex)
        f0 = self(z)
        one, lam_img = self.image_lattice
        worst = 0.0
        for m, n in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            g = m + n * self.lat.tau
            gi = m * one + n * lam_img
            worst = max(worst, float(np.max(np.abs(self(z + g) - f0 - gi))))
        return worst


@dataclass
class UniformizeInfo:
    iterations: int
    radial_deviation: float
    equivariance_residual: float
    history: list
    point_components: list


# ---------------------------------------------------------------------------
# Helpers


def _component_samples(comp, n: int) -> np.ndarray:
    if isinstance(comp, Disk):
        return comp.boundary(n)
    return comp.array


def _component_center_scale(comp) -> tuple[complex, float]:
    if isinstance(comp, Disk):
        return comp.center, comp.radius
    pts = comp.array
    c = comp.centroid
    return c, float(np.mean(np.abs(pts - c)))


def choose_base_point(dom: SampledMDomain, margin_frac: float = 0.5) -> complex:
    """0 if it is comfortably inside the domain, else the cell point farthest from the components."""
    scale = max(_component_center_scale(c)[1] for c in dom.components) if dom.components else 1.0
    if _clearance(dom, np.array([0j]))[0] > margin_frac * scale:
        return 0j
    s = np.linspace(0, 1, 41)[:-1]
    pts = (s[:, None] + s[None, :] * dom.lat.tau).ravel()
    clear = _clearance(dom, pts)
    return complex(pts[int(np.argmax(clear))])


def _clearance(dom: SampledMDomain, pts: np.ndarray) -> np.ndarray:
    best = np.full(pts.shape, np.inf)
    for comp in dom.components:
        c = comp.centroid
        z0, _, _ = dom.lat.reduce(pts - c)
        for dm in (-1, 0, 1):
            for dn in (-1, 0, 1):
                best = np.minimum(best, comp.dist_to(z0 + c + dm + dn * dom.lat.tau))
    return best


def _radial(fz: np.ndarray, zc: complex, r: float):
    u = fz - zc
    au = np.abs(u)
    return au - r, u / np.where(au > 0, au, 1.0)


# ---------------------------------------------------------------------------
# uniformize


def uniformize(dom, tol: float = 1e-8, order: int = DEFAULT_ORDER, samples: int = 256,
               max_iter: int = DEFAULT_MAX_ITER, base: complex | None = None,
               allow_points: bool = False) -> tuple[CircledMDomain, EquivariantMap]:
    """Circled m-domain conformally equivalent to ``dom`` and the sampled map.

    The returned map fixes the base point (0 by default) and translates by 1
    under ``z -> z + 1``; the modulus of the circled domain is the image of
    the second generator.
    """
    if isinstance(dom, CircledMDomain):
        dom = dom.as_sampled()
    lat = dom.lat
    m = dom.m
    if base is None:
        base = choose_base_point(dom)
    centers, scales, pts, owner = [], [], [], []
    for i, comp in enumerate(dom.components):
        c, r = _component_center_scale(comp)
        centers.append(c)
        scales.append(r)
        s = _component_samples(comp, samples)
        pts.append(s)
        owner.append(np.full(len(s), i))
    pts = np.concatenate(pts)
    owner = np.concatenate(owner)
    order = max(1, int(order))
    basis = _Basis(lat, centers, scales, order, base)
    mat = basis(pts)  # (P, m*order)

    coeffs = np.zeros(basis.size, dtype=complex)
    circ_c = np.array(centers, dtype=complex)
    circ_r = np.array(scales, dtype=float)
    fz = pts.copy()
    for i in range(m):
        sel = owner == i
        circ_c[i], circ_r[i] = _fit_circle(fz[sel])

    def deviation(fz_):
        return max(float(np.max(np.abs(_radial(fz_[owner == i], circ_c[i], circ_r[i])[0])))
                   for i in range(m))

    history = [deviation(fz)]
    target = tol * 1e-3
    mu = np.full(m, 1e-6)
    it = 0
    while history[-1] > target and it < max_iter:
        it += 1
        for i in range(m):
            sel = owner == i
            cols = slice(i * order, (i + 1) * order)
            block = mat[sel][:, cols]
            res, s = _radial(fz[sel], circ_c[i], circ_r[i])
            jac = np.hstack([
                np.real(np.conj(s)[:, None] * block),
                -np.imag(np.conj(s)[:, None] * block),
                -np.real(s)[:, None], -np.imag(s)[:, None], -np.ones((len(s), 1)),
            ])
            cur = float(res @ res)
            colnorm = np.linalg.norm(jac, axis=0)
            colnorm[colnorm == 0] = 1.0
            js = jac / colnorm
            for _ in range(30):
                lhs = np.vstack([js, np.sqrt(mu[i]) * np.eye(js.shape[1])])
                rhs = np.concatenate([-res, np.zeros(js.shape[1])])
                step = np.linalg.lstsq(lhs, rhs, rcond=None)[0] / colnorm
                db = step[:order] + 1j * step[order:2 * order]
                new_c = circ_c[i] + complex(step[-3], step[-2])
                new_r = circ_r[i] + step[-1]
                new_fz = fz + mat[:, cols] @ db
                new_res, _ = _radial(new_fz[sel], new_c, new_r)
                if float(new_res @ new_res) <= cur:
                    coeffs[cols] += db
                    fz = new_fz
                    circ_c[i], circ_r[i] = new_c, new_r
                    mu[i] = max(mu[i] / 10, 1e-15)
                    break
                mu[i] *= 10
            # other circles follow the moved boundaries
            for j in range(m):
                if j != i:
                    circ_c[j], circ_r[j] = _refit_circle(fz[owner == j], circ_c[j], circ_r[j])
        history.append(deviation(fz))
        if len(history) > 10 and history[-1] > 0.99 * history[-11]:
            break

    # normalisation: translation by 1 becomes 1
    shift = 1 + complex(np.sum((basis(np.array([base + 1]))[0] - basis(np.array([base]))[0]) * coeffs))
    raw_lam = complex(base + lat.tau + basis(np.array([base + lat.tau]))[0] @ coeffs) - base
    lam_img = raw_lam / shift
    fmap = EquivariantMap(lat=lat, coeffs=coeffs, basis=basis, shift_scale=shift,
                          image_lattice=(1.0 + 0j, lam_img),
                          normalization="fix-0-and-1" if base == 0 else "fix-base-and-base+1")
    out_c = base + (circ_c - base) / shift
    out_r = circ_r / abs(shift)
    dev = history[-1] / abs(shift)
    eq_res = fmap.equivariance_residual(pts[:: max(1, len(pts) // 64)])
    if not lam_img.imag > 0:
        raise ConvergenceError("image lattice lost orientation", modulus=lam_img)
    if dev >= tol or eq_res >= tol:
        raise ConvergenceError(
            f"uniformization stalled: radial deviation {dev:.3g}, equivariance {eq_res:.3g} (tol {tol:g})",
            radial_deviation=dev, equivariance_residual=eq_res, iterations=it)
    flagged = [i for i, r in enumerate(out_r) if r < RADIUS_FLOOR]
    if flagged and not allow_points:
        raise DegenerateComponentError(f"components {flagged} collapsed below radius floor",
                                       components=flagged)
    result = CircledMDomain(Lattice(lam_img), tuple(zip(out_c, out_r)))
    fmap.grid = _map_grid(dom, fmap, pts)
    fmap.info = UniformizeInfo(iterations=it, radial_deviation=dev, equivariance_residual=eq_res,
                               history=[h / abs(shift) for h in history], point_components=flagged)
    return result, fmap


def _fit_circle(pts: np.ndarray) -> tuple[complex, float]:
    """Algebraic (Kasa) circle fit."""
    x, y = pts.real, pts.imag
    a = np.column_stack([x, y, np.ones_like(x)])
    rhs = x * x + y * y
    sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
    c = complex(sol[0] / 2, sol[1] / 2)
    r = float(np.sqrt(max(sol[2] + abs(c) ** 2, 0.0)))
    return c, r


def _refit_circle(pts, c, r):
    """Geometric circle fit started at ``(c, r)`` (few Gauss-Newton steps)."""
    for _ in range(5):
        res, s = _radial(pts, c, r)
        jac = np.column_stack([-s.real, -s.imag, -np.ones(len(s))])
        step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        c, r = c + complex(step[0], step[1]), r + step[2]
        if np.max(np.abs(step)) < 1e-16 * max(1.0, r):
            break
    return c, r


def _map_grid(dom: SampledMDomain, fmap: EquivariantMap, boundary_pts: np.ndarray, n: int = 16) -> np.ndarray:
    s = (np.arange(n) + 0.5) / n
    mesh = (s[:, None] + s[None, :] * dom.lat.tau).ravel()
    keep = _clearance(dom, mesh) > 1e-3
    src = np.concatenate([boundary_pts, mesh[keep]])
    return np.column_stack([src, fmap(src)])


# ---------------------------------------------------------------------------
# Kernel of a sequence of domains


@dataclass
class KernelResult:
    """Pixel approximation of the kernel of a domain sequence."""

    xs: np.ndarray
    ys: np.ndarray
    mask: np.ndarray
    base_point: complex
    converged: bool
    subsequence_masks: dict
    cell: float

    def points(self) -> np.ndarray:
        return (self.xs[None, :] + 1j * self.ys[:, None])

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        ix = np.clip(np.rint((z.real - self.xs[0]) / (self.xs[1] - self.xs[0])).astype(int), 0, len(self.xs) - 1)
        iy = np.clip(np.rint((z.imag - self.ys[0]) / (self.ys[1] - self.ys[0])).astype(int), 0, len(self.ys) - 1)
        return self.mask[iy, ix]


def _base_component(mask: np.ndarray, iy: int, ix: int) -> np.ndarray:
    labels, _ = ndimage.label(mask)
    lab = labels[iy, ix]
    if lab == 0:
        return np.zeros_like(mask)
    return labels == lab


def masks_agree(a: np.ndarray, b: np.ndarray, cells: int = 1) -> bool:
    """True if ``a`` and ``b`` differ only within ``cells`` pixels of each other's boundary."""
    st = ndimage.generate_binary_structure(2, 2)
    da = ndimage.binary_dilation(a, st, iterations=cells)
    db = ndimage.binary_dilation(b, st, iterations=cells)
    return bool(np.all(a <= db) and np.all(b <= da))


def kernel_of_sequence(doms, base_point: complex = 0j, half_width: float | None = None,
                       resolution: int = 512, tail_start: int | None = None) -> KernelResult:
    """Kernel of a finite sequence of m-domains, on a square pixel grid around ``base_point``.

    A pixel is eventually inside if it lies in every member from
    ``tail_start`` on (default: the second half of the list); the kernel is
    the 4-connected component of such pixels containing the base point.  The
    sequence is reported as converging when the even- and odd-indexed
    subsequences have the same kernel up to one pixel.
    """
    doms = [d.as_sampled() if isinstance(d, CircledMDomain) else d for d in doms]
    if not doms:
        raise KernelUndefinedError("empty sequence")
    if half_width is None:
        half_width = 0.75 * max(1.0, doms[0].lat.tau.imag)
    xs = base_point.real + np.linspace(-half_width, half_width, resolution)
    ys = base_point.imag + np.linspace(-half_width, half_width, resolution)
    grid = xs[None, :] + 1j * ys[:, None]
    iy = ix = resolution // 2
    grid[iy, ix] = base_point
    members = []
    for j, d in enumerate(doms):
        if not bool(d.contains(np.array([base_point]))[0]):
            raise KernelUndefinedError(f"base point {base_point} is not in domain {j}")
        members.append(d.contains(grid))

    def kernel(idx):
        if not idx:
            return None
        start = len(idx) // 2 if tail_start is None else min(tail_start, len(idx) - 1)
        lim = np.logical_and.reduce([members[k] for k in idx[start:]])
        return _base_component(lim, iy, ix)

    idx = list(range(len(doms)))
    if tail_start is not None:
        start = min(tail_start, len(idx) - 1)
        lim = np.logical_and.reduce([members[k] for k in idx[start:]])
        full = _base_component(lim, iy, ix)
    else:
        full = kernel(idx)
    subs = {}
    if len(doms) >= 2:
        subs = {"even": kernel(idx[0::2]), "odd": kernel(idx[1::2])}
    converged = all(masks_agree(full, s) for s in subs.values())
    cell = float(xs[1] - xs[0])
    return KernelResult(xs=xs, ys=ys, mask=full, base_point=base_point, converged=converged,
                        subsequence_masks=subs, cell=cell)
