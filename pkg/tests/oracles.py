"""Independent constructions used as test oracles."""

import numpy as np

from torus_embed.domain import CircledMDomain, Curve, SampledMDomain
from torus_embed.elliptic import Lattice, eisenstein_function


def zeta_field_push(dom: CircledMDomain, eps: float, n: int = 512) -> SampledMDomain:
    """Push the boundary circles forward by an injective equivariant map.

    ``phi(z) = z + eps * r * (E1(z - c) - E1(-c))`` with ``E1 = zeta - G2 z``
    is 1-periodic and shifts by ``-2 pi i eps r`` under ``z -> z + tau``, so it
    descends to a conformal map between tori with moduli ``tau`` and
    ``tau - 2 pi i eps r``.  It fixes 0, hence uniformizing the image must
    give back ``dom`` exactly.
    """
    lat = dom.lat
    d = dom.components[0]
    c, r = d.center, d.radius

    def phi(z):
        return z + eps * r * (eisenstein_function(lat, z - c, 1) - eisenstein_function(lat, -c, 1))

    new_lat = Lattice(lat.tau - 2j * np.pi * eps * r)
    comps = [Curve(tuple(phi(k.boundary(n)))) for k in dom.components]
    return SampledMDomain(new_lat, tuple(comps))


def wp_field_push(dom: CircledMDomain, eps: float, n: int = 512) -> SampledMDomain:
    """Same idea with the periodic field ``r^2 (wp(z - c) - wp(-c))`` of every disk; the lattice is kept."""
    lat = dom.lat

    def phi(z):
        out = z.copy()
        for d in dom.components:
            out = out + eps * d.radius**3 * (eisenstein_function(lat, z - d.center, 2)
                                            - eisenstein_function(lat, -d.center, 2))
        return out

    comps = [Curve(tuple(phi(k.boundary(n)))) for k in dom.components]
    return SampledMDomain(lat, tuple(comps))
