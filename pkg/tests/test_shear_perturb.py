import numpy as np
import pytest

from torus_embed.domain import CircledMDomain
from torus_embed.elliptic import Lattice, wp_eval
from torus_embed.embedder import SurfaceSample, embed_domain
from torus_embed.errors import (ChartDomainError, ConstructionError, NearSingularityError,
                                PlacementError, TubeTooLargeError)
from torus_embed.shear_perturb import (build_zero_function, flat_model, normal_chart, parabola_model,
                                       perturbation_report, shear_bound, shear_coordinates,
                                       singular_shear, wp_curve_model, wp_curve_polynomial)


@pytest.fixture(scope="module")
def wp_setup():
    dom = CircledMDomain(Lattice(0.5 + 1j), [(0.45 + 0.4j, 0.15)])
    surf = embed_domain(dom, grid=32)
    model = wp_curve_model(surf)
    chart = normal_chart(model, 0.05)
    zf = build_zero_function(dom, [0])
    return dom, surf, model, chart, zf


def disk_sources(rng, n):
    z = rng.uniform(-1, 1, 3 * n) + 1j * rng.uniform(-1, 1, 3 * n)
    return z[np.abs(z) < 1][:n]


# -- models -------------------------------------------------------------------


def test_wp_polynomial_vanishes_on_curve(wp_setup):
    _, surf, model, _, _ = wp_setup
    out = model.check(tol_g=1e-9, floor=1e-3)
    assert out["max_abs_g"] < 1e-9


def test_wp_polynomial_gradient_matches_finite_difference(wp_setup):
    _, surf, model, _, _ = wp_setup
    w = surf.images[::50] + 0.01
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (model.g(w + e) - model.g(w - e)) / (2 * h)
        assert np.allclose(fd, model.grad(w)[:, k], rtol=1e-5, atol=1e-8)


def test_wp_polynomial_is_shift_specific():
    lat = Lattice(0.5 + 1j)
    c = wp_curve_polynomial(lat, 0.05 + 0.02j)
    v = np.array([0.3 + 0.3j])
    w_other = np.array([wp_eval(lat, v - 0.07), wp_eval(lat, v)])
    from numpy.polynomial import polynomial as npoly
    assert abs(npoly.polyval2d(w_other[0], w_other[1], c)) > 1e-3


# -- chart --------------------------------------------------------------------


def test_flat_chart_is_projection():
    chart = normal_chart(flat_model(np.linspace(-3, 3, 13) + 0j), 1.0)
    assert np.array_equal(chart.forward(np.array([2 + 1j]), np.array([0.3j])), [[2 + 1j, 0.3j]])
    u, lam = chart.inverse(np.array([[2 + 1j, 0.3j]]), u0=2 + 1j)
    assert u[0] == 2 + 1j and lam[0] == 0.3j


def test_parabola_round_trip(rng):
    src = disk_sources(rng, 400)
    chart = normal_chart(parabola_model(src), 1e-2)
    u = rng.choice(src, 1000)
    lam = 1e-2 * np.sqrt(rng.uniform(0, 1, 1000)) * np.exp(2j * np.pi * rng.uniform(0, 1, 1000))
    u2, l2 = chart.inverse(chart.forward(u, lam))
    assert np.max(np.abs(u2 - u) + np.abs(l2 - lam)) < 1e-8


def test_wp_chart_round_trip(wp_setup):
    _, surf, model, chart, _ = wp_setup
    u = surf.sources[::20]
    lam = 0.03 * np.exp(1j * np.arange(len(u)))
    assert chart.round_trip_error(u, lam) < 1e-10


def test_tube_too_large(wp_setup):
    _, _, model, _, _ = wp_setup
    with pytest.raises(TubeTooLargeError) as err:
        normal_chart(model, 10.0)
    assert 0 < err.value.details["safe_radius"] < 10


def test_point_outside_tube(wp_setup):
    _, surf, _, chart, _ = wp_setup
    far = chart.forward(surf.sources[:1], np.array([0.2]))
    with pytest.raises(ChartDomainError):
        chart.inverse(far, u0=surf.sources[:1])


# -- zero function -----------------------------------------------------------


def test_zero_function_single_disk():
    dom = CircledMDomain(Lattice(0.5 + 1j), [(0j + 0.45 + 0.4j, 0.15)])
    c, r = dom.components[0].center, 0.15
    zf = build_zero_function(dom, [0], points=[c + r / 2])
    assert abs(zf(np.array([c + r / 2]))[0]) < 1e-10
    assert abs(zf(np.array([c - r / 2]))[0]) < 1e-10
    assert zf.extra_zeros[0][1] == pytest.approx(c - r / 2)
    res = zf.verify(dom, 256)
    assert res["zeros_outside"] == 0 and res["min_retained"] > 0


def test_zero_function_at_center_is_double():
    dom = CircledMDomain(Lattice(0.5 + 1j), [(0.45 + 0.4j, 0.15)])
    c = dom.components[0].center
    zf = build_zero_function(dom, [0], points=[c])
    for r in (1e-2, 1e-3):
        ring = c + r * np.exp(2j * np.pi * np.arange(8) / 8)
        assert np.allclose(np.abs(zf(ring)) / r**2, 1, atol=1e-6)


def test_zero_on_boundary_rejected():
    dom = CircledMDomain(Lattice(0.5 + 1j), [(0.45 + 0.4j, 0.15)])
    with pytest.raises(PlacementError):
        build_zero_function(dom, [0], points=[0.6 + 0.4j])


def test_escaping_zero_detected():
    dom = CircledMDomain(Lattice(0.5 + 1j), [(0.45 + 0.4j, 0.15)])
    zf = build_zero_function(dom, [0], verify=False)
    # a factor whose zeros sit 0.3 away from the centre, outside the disk
    c = zf.centers[0]
    bad = type(zf)(zf.lat, zf.centers, (c + 0.3,), (complex(wp_eval(zf.lat, 0.3)),), [(0, c - 0.3)], zf.poles)
    assert bad.zeros_outside(dom) == 2
    with pytest.raises(ConstructionError):
        bad.verify(dom, 128)


def test_zero_function_two_disks(dom2):
    zf = build_zero_function(dom2, [0, 1])
    assert zf.verify(dom2, 256)["zeros_outside"] == 0


# -- shear --------------------------------------------------------------------


def test_flat_shear_formula():
    chart = normal_chart(flat_model(np.linspace(-3, 3, 13) + 0j), 1.0)
    u, lam = shear_coordinates(np.array([2 + 0j]), np.array([0j]), lambda z: z, 0.1)
    assert chart.forward(u, lam)[0, 1] == pytest.approx(0.05, abs=1e-17)


def test_zero_shear_is_identity(wp_setup):
    _, surf, _, chart, zf = wp_setup
    assert np.array_equal(singular_shear(chart, zf, 0.0, surf).images, surf.images)


def test_chart_round_trip_identity(wp_setup):
    _, surf, _, chart, _ = wp_setup
    u, lam = chart.inverse(surf.images, u0=surf.sources)
    assert np.max(np.abs(chart.forward(u, lam) - surf.images)) < 1e-12


def test_shear_preserves_base_coordinate(wp_setup):
    _, surf, _, chart, zf = wp_setup
    u, lam = chart.inverse(surf.images, u0=surf.sources)
    u2, lam2 = shear_coordinates(u, lam, zf, 1e-3)
    assert u2 is u
    assert not np.array_equal(lam2, lam)


def test_shear_composition(wp_setup):
    _, surf, _, chart, zf = wp_setup
    two = singular_shear(chart, zf, 2e-4, singular_shear(chart, zf, 3e-4, surf))
    one = singular_shear(chart, zf, 5e-4, surf)
    scale = np.maximum(1, np.abs(one.images))
    assert np.max(np.abs(two.images - one.images) / scale) < 2 * 1e-12 * 10


def test_displacement_bound(wp_setup):
    _, surf, _, chart, zf = wp_setup
    after = singular_shear(chart, zf, 1e-3, surf)
    rep = perturbation_report(surf, after)
    assert 0 < rep.sup_displacement <= shear_bound(chart, zf, 1e-3, surf)


def test_report_linear_in_delta(wp_setup):
    _, surf, _, chart, zf = wp_setup
    a = perturbation_report(surf, singular_shear(chart, zf, 1e-3, surf)).sup_displacement
    b = perturbation_report(surf, singular_shear(chart, zf, 5e-4, surf)).sup_displacement
    assert 1.8 <= a / b <= 2.2


def test_injectivity_proxy_recovers_as_delta_shrinks(wp_setup):
    _, surf, _, chart, zf = wp_setup
    seps = [perturbation_report(surf, singular_shear(chart, zf, d, surf)).min_separation
            for d in (4e-3, 2e-3, 1e-3, 0.0)]
    base = seps[-1]
    gaps = [abs(s - base) for s in seps]
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_zero_delta_report(wp_setup):
    _, surf, _, chart, zf = wp_setup
    assert perturbation_report(surf, singular_shear(chart, zf, 0.0, surf)).sup_displacement == 0


def test_near_singularity():
    chart = normal_chart(flat_model(np.linspace(-3, 3, 13) + 0j), 1.0)
    pts = SurfaceSample(np.array([0j, 1 + 0j]), np.array([[0j, 0j], [1 + 0j, 0j]]))
    with pytest.raises(NearSingularityError):
        singular_shear(chart, lambda z: z, 0.1, pts)
