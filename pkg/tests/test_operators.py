"""Pointwise operator values against independently computed references.

Frozen reference values were produced with scipy.integrate adaptive
quadrature on the symmetrised second-difference form of the integral,
which shares no code with the node rules under test.
"""

import math

import numpy as np
import pytest

from nonlocal_dv.extrapolate import richardson_limit
from nonlocal_dv.kernels import (
    AnisotropyField,
    EllipticityBounds,
    KernelSpec,
    fractional_kernel,
)
from nonlocal_dv.operators import (
    QuadratureScheme,
    SmoothFunction,
    build_rule,
    bump,
    carre_du_champ,
    drifted_operator,
    gaussian,
    interval_power,
    nonlocal_laplacian,
)


def gaussian_at_origin(dim, s):
    # closed form for exp(-|x|^2/2): value 2^s Gamma(dim/2+s)/Gamma(dim/2)
    return -(2.0**s) * math.gamma(dim / 2 + s) / math.gamma(dim / 2)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
def test_gaussian_origin_1d(s):
    spec = fractional_kernel(1, s, normalized=True)
    got = nonlocal_laplacian(gaussian(1), spec, np.array([0.0]))
    assert got == pytest.approx(gaussian_at_origin(1, s), abs=1e-9)


@pytest.mark.parametrize("s", [0.3, 0.5])
def test_gaussian_origin_3d(s):
    spec = fractional_kernel(3, s, normalized=True)
    got = nonlocal_laplacian(gaussian(3), spec, np.zeros(3))
    assert got == pytest.approx(gaussian_at_origin(3, s), abs=1e-9)


# adaptive-quadrature references for exp(-x^2/2), normalized kernel
GAUSS_OFF_CENTER = {
    (0.5, 0.6): -0.542755681423,
    (0.3, 0.6): -0.599317092405,
    (0.7, -0.35): -0.723237196122,
}


@pytest.mark.parametrize("s,x", sorted(GAUSS_OFF_CENTER))
def test_gaussian_off_center_1d(s, x):
    spec = fractional_kernel(1, s, normalized=True)
    got = nonlocal_laplacian(gaussian(1), spec, np.array([x]))
    assert got == pytest.approx(GAUSS_OFF_CENTER[(s, x)], abs=2e-9)


# adaptive-quadrature references for the profile constant c(s) in
# L (1-x^2)_+^(1+s) = -c(s) (1 - (1+2s) x^2) on (-1, 1)
PROFILE_CONSTANT = {0.3: 1.161569954074, 0.5: 1.5, 0.7: 2.111687886093}


@pytest.mark.parametrize("s", sorted(PROFILE_CONSTANT))
def test_power_profile_shape(s):
    spec = fractional_kernel(1, s, normalized=True)
    u = interval_power(1.0 + s)
    c = PROFILE_CONSTANT[s]
    for x in (0.0, 0.2, 0.45, 0.62):
        got = nonlocal_laplacian(u, spec, np.array([x]))
        assert got == pytest.approx(-c * (1.0 - (1.0 + 2 * s) * x * x), abs=5e-7)


def _aniso_2d_spec():
    A = np.array([[2.0, 0.7], [0.7, 1.0]])
    return KernelSpec(AnisotropyField.constant(A), EllipticityBounds(0.5, 3.0, 0.5, 2))


def test_anisotropic_2d_reference():
    # reference from per-angle adaptive radial quadrature plus exact tail
    spec = _aniso_2d_spec()
    u = gaussian(2, width=0.9)
    x = np.array([0.3, -0.2])
    got = nonlocal_laplacian(u, spec, x, QuadratureScheme().refined(1))
    assert got == pytest.approx(-6.080733673283, abs=1e-8)


def test_refinement_converges():
    spec = _aniso_2d_spec()
    u = gaussian(2, width=0.9)
    x = np.array([0.3, -0.2])
    ref = -6.080733673283
    errs = [abs(nonlocal_laplacian(u, spec, x, QuadratureScheme().refined(k)) - ref)
            for k in range(2)]
    assert errs[1] < errs[0]
    assert errs[1] < 1e-8


def test_product_rule_on_shared_rule():
    # L(uv) = u Lv + v Lu + 2 B(u, v) must hold to roundoff when every
    # term is evaluated on the same node rule
    spec = fractional_kernel(1, 0.5, normalized=True)
    u = gaussian(1, width=0.8)
    v = gaussian(1, width=1.3, center=[0.4])
    uv = SmoothFunction(lambda p: u(p) * v(p), 1,
                        support_radius=min(u.support_radius, v.support_radius))
    x = np.array([0.2])
    rule = build_rule(spec, x, QuadratureScheme(), fns=(u, v, uv))
    lhs = nonlocal_laplacian(uv, spec, x, rule=rule)
    rhs = (u(x) * nonlocal_laplacian(v, spec, x, rule=rule)
           + v(x) * nonlocal_laplacian(u, spec, x, rule=rule)
           + 2.0 * carre_du_champ(u, v, spec, x, rule=rule))
    assert lhs == pytest.approx(rhs, abs=1e-11)


def test_carre_du_champ_symmetric():
    spec = _aniso_2d_spec()
    u = gaussian(2, width=0.9)
    h = SmoothFunction(lambda p: 0.45 * np.tanh(p[:, 0]), 2, osc_bound=0.9)
    x = np.array([0.3, -0.2])
    assert carre_du_champ(u, h, spec, x) == pytest.approx(
        carre_du_champ(h, u, spec, x), rel=1e-13)


def test_drifted_is_sum_of_parts():
    spec = _aniso_2d_spec()
    u = gaussian(2, width=0.9)
    h = SmoothFunction(lambda p: 0.45 * np.tanh(p[:, 0]), 2, osc_bound=0.9)
    x = np.array([0.3, -0.2])
    whole = drifted_operator(u, h, spec, x)
    parts = (nonlocal_laplacian(u, spec, x) + carre_du_champ(u, h, spec, x))
    assert whole == pytest.approx(parts, rel=1e-6)


def test_limit_toward_classical_laplacian():
    # order s -> 1 with normalized kernel recovers Delta g(0) = -1 for
    # the unit gaussian; extrapolate in (1 - s)
    vals = []
    for s in (0.9, 0.95, 0.975):
        spec = fractional_kernel(1, s, normalized=True)
        vals.append(nonlocal_laplacian(
            gaussian(1), spec, np.array([0.0]), QuadratureScheme(radial_order=24)))
    limit = richardson_limit(vals, ratio=2.0).limit
    assert limit == pytest.approx(-1.0, abs=1e-2)


def test_inner_nodes_are_antipodal_pairs():
    spec = _aniso_2d_spec()
    rule = build_rule(spec, np.array([0.1, 0.2]), QuadratureScheme(),
                      fns=(gaussian(2),))
    m = rule.inner_pair_count
    plus = rule.offsets[:m]
    minus = rule.offsets[m:2 * m]
    assert np.allclose(plus, -minus)
    assert np.allclose(rule.weights[:m], rule.weights[m:2 * m])
    assert np.all(rule.weights >= 0)


def test_maximum_point_sign():
    # at a strict global max the generator must be strictly negative
    spec = fractional_kernel(2, 0.5, normalized=True)
    u = bump(2, radius=1.5)
    assert nonlocal_laplacian(u, spec, np.zeros(2)) < 0


def test_tail_mass_drops_with_radius():
    # quadrature radius tracks the integrand support; the kernel mass
    # left beyond it decays like R^(-2s)
    spec = fractional_kernel(1, 0.5, normalized=True)
    r1 = build_rule(spec, np.array([0.0]), QuadratureScheme(), fns=(bump(1, radius=2.0),))
    r2 = build_rule(spec, np.array([0.0]), QuadratureScheme(), fns=(bump(1, radius=8.0),))
    assert 0 < r2.tail_mass < r1.tail_mass
    assert r1.tail_mass == pytest.approx(4.0 * r2.tail_mass, rel=1e-10)
