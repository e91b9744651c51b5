"""Rate functional: closed form, drift decomposition, scalar error form, dual gap.

The local (s near 1) reference value for the normalized bump density of
radius 0.8 is the Dirichlet energy of its square root, 4.9128804 by dense
trapezoid quadrature; the nonlocal values must approach it from below.
"""

import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from nonlocal_dv.errors import DomainError
from nonlocal_dv.kernels import fractional_kernel
from nonlocal_dv.lattice import GridFunction, LatticeDomain, assemble, kernel_form
from nonlocal_dv.operators import SmoothFunction, bump, scaled
from nonlocal_dv.rate import (
    DensitySpec,
    I_closed_form_h0,
    I_decomposed,
    Q_form,
    density_lattice,
    drift_pairing,
    dual_gap,
    error_form_value,
    first_order_residual,
    minimize_rayleigh,
    q_scalar_min,
    rayleigh_integral,
    sqrt_substitution_residual,
)

LOCAL_DIRICHLET_REFERENCE = 4.9128804


@pytest.fixture(scope="module")
def density():
    b = bump(1, radius=0.8)
    mass, _ = quad(lambda t: b(np.array([[t]]))[0], -0.8, 0.8, limit=200)
    return DensitySpec(scaled(b, 1.0 / mass))


@pytest.fixture(scope="module")
def drift():
    return SmoothFunction(lambda p: 0.3 * np.tanh(2.0 * p[:, 0]), 1,
                          osc_bound=0.6, support_radius=40.0)


def test_density_mass_and_rescaling(density):
    dom = density_lattice(density, cells=200)
    assert density.mass(dom) == pytest.approx(1.0, abs=1e-4)
    small = density.rescaled(0.6)
    dom_s = density_lattice(small, cells=200)
    assert small.mass(dom_s) == pytest.approx(1.0, abs=1e-4)
    assert small.lambda_ == pytest.approx(0.6)


def test_rayleigh_constant_function_vanishes(density):
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=80)
    u = GridFunction(dom, np.ones(dom.n_interior))
    val = rayleigh_integral(u, None, spec, density, far_value=1.0)
    assert abs(val) < 1e-12


def test_rayleigh_at_sqrt_density_is_closed_form(density):
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=100)
    op = assemble(dom, spec)
    fv = density.values_on(dom)
    u = GridFunction(dom, np.sqrt(fv))
    val = rayleigh_integral(u, None, spec, density, op=op)
    closed = I_closed_form_h0(density, spec, domain=dom)
    assert val == pytest.approx(-closed, rel=1e-12)
    # additive regularization converges to the same value from above
    errs = []
    for eps in (1e-3, 1e-5):
        ueps = GridFunction(dom, np.sqrt(fv) + eps)
        veps = rayleigh_integral(ueps, None, spec, density, op=op,
                                 far_value=eps)
        assert veps >= val - 1e-12
        errs.append(abs(veps - val))
    assert errs[1] < errs[0]


def test_rayleigh_lower_bound_over_random_candidates(density):
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=60)
    op = assemble(dom, spec)
    closed = I_closed_form_h0(density, spec, domain=dom)
    rng = np.random.default_rng(17)
    for _ in range(8):
        u = GridFunction(dom, 0.2 + rng.uniform(0.0, 1.0, size=dom.n_interior))
        assert rayleigh_integral(u, None, spec, density, op=op) >= -closed - 1e-10


def test_rayleigh_requires_positive_candidate(density):
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=40)
    u = GridFunction(dom, np.zeros(dom.n_interior))
    with pytest.raises(DomainError):
        rayleigh_integral(u, None, spec, density)


def test_closed_form_warns_without_regularity(density):
    spec = fractional_kernel(1, 0.5, normalized=True)
    rough = DensitySpec(density.f, sqrt_f_regularity=False)
    with pytest.warns(UserWarning):
        I_closed_form_h0(rough, spec, domain=density_lattice(density, cells=40))


def test_local_limit_trend(density):
    dom = density_lattice(density, cells=100)
    errs = []
    for s in (0.5, 0.6, 0.75, 0.9):
        spec = fractional_kernel(1, s, normalized=True)
        val = I_closed_form_h0(density, spec, domain=dom)
        errs.append(LOCAL_DIRICHLET_REFERENCE - val)
    assert all(e > 0 for e in errs)
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_decomposition_reduces_to_closed_form_without_drift(density):
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=80)
    I_val, E_val, w_min = I_decomposed(density, None, spec, domain=dom)
    closed = I_closed_form_h0(density, spec, domain=dom)
    assert abs(E_val) < 1e-12
    assert I_val == pytest.approx(closed, rel=1e-10)
    assert np.abs(w_min.w.values).max() < 1e-6


def test_decomposition_matches_direct_minimization(density, drift):
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=80)
    I_val, E_val, _ = I_decomposed(density, drift, spec, domain=dom)
    direct_value, u_min, iterations = minimize_rayleigh(density, drift, spec,
                                                        domain=dom)
    I_direct = -direct_value
    assert iterations > 0
    assert u_min.values.min() > 0.0
    assert I_val == pytest.approx(I_direct, rel=1e-2)
    assert E_val <= 1e-15


def test_error_form_lower_bound(density, drift):
    # Theta >= -dh^2 pointwise, so the error form is bounded below by the
    # squared-increment drift pairing for every exponent field
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=60)
    op = assemble(dom, spec, drift=drift)
    fv = density.values_on(dom)
    sqf = np.sqrt(fv)
    mask = op.domain.interior_mask
    h_int = op.drift_values[mask]
    W = op.pair_weights[np.ix_(mask, mask)]
    dh2 = (h_int[None, :] - h_int[:, None]) ** 2
    bound = -float(sqf @ (W * dh2) @ sqf) * dom.cell_volume
    rng = np.random.default_rng(4)
    for _ in range(5):
        w = 0.5 * rng.normal(size=dom.n_interior)
        assert error_form_value(op, fv, w) >= bound - 1e-12
    _, E_val, w_min = I_decomposed(density, drift, spec, domain=dom)
    assert E_val >= bound - 1e-12
    assert E_val == pytest.approx(error_form_value(op, fv, w_min.w.values),
                                  abs=1e-12)


def test_first_order_and_substitution_identities(density, drift):
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=70)
    for h in (None, drift):
        op = assemble(dom, spec, drift=h)
        fv = density.values_on(dom)
        assert first_order_residual(op, fv) < 1e-11
        assert sqrt_substitution_residual(op, fv) < 1e-11


def test_symmetric_weight_relabeling(density, drift):
    # symmetric pair quantities average the density across the pair exactly
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=50)
    op = assemble(dom, spec, drift=drift)
    mask = op.domain.interior_mask
    h_int = op.drift_values[mask]
    W = op.pair_weights[np.ix_(mask, mask)]
    phi = W * (h_int[None, :] - h_int[:, None]) ** 2
    fv = density.values_on(dom)
    lhs = float((phi * fv[:, None]).sum())
    rhs = float((phi * 0.5 * (fv[:, None] + fv[None, :])).sum())
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_scalar_error_form():
    assert q_scalar_min(0.0) == pytest.approx(0.0, abs=1e-12)
    assert q_scalar_min(1.0) == pytest.approx(np.sqrt(3.0) / 2.0, abs=1e-9)
    for hbar in np.linspace(-1.0, 1.0, 21):
        closed = np.sqrt(1.0 - hbar**2 / 4.0) - 1.0 + hbar**2
        assert q_scalar_min(hbar) == pytest.approx(closed, abs=1e-9)
    r = np.linspace(-10.0, 10.0, 81)
    h = np.linspace(-1.0, 1.0, 41)
    grid = Q_form(h[None, :], r[:, None])
    assert grid.min() >= -1e-10


def test_q_variants_differ_by_half_cross_term():
    r, hbar = 0.7, 0.4
    a = Q_form(hbar, r, variant="derivation")
    b = Q_form(hbar, r, variant="displayed")
    assert b - a == pytest.approx(0.5 * np.sinh(r) * hbar, rel=1e-12)
    with pytest.raises(DomainError):
        Q_form(0.1, 0.1, variant="other")


def test_drift_pairing_against_brute_force(density, drift):
    spec = fractional_kernel(1, 0.4, normalized=True)
    dom = density_lattice(density, cells=40)
    op = assemble(dom, spec, drift=drift)
    fv = density.values_on(dom)
    full = np.zeros(len(dom.points))
    full[dom.interior_mask] = fv
    h_all = op.drift_values
    acc = 0.0
    for i in range(len(full)):
        for j in range(len(full)):
            if i != j:
                acc += 0.5 * (full[j] - full[i]) * (h_all[j] - h_all[i]) \
                    * op.pair_weights[i, j]
    acc -= float(fv @ op.drift_far[dom.interior_mask])
    acc *= dom.cell_volume
    assert drift_pairing(op, fv) == pytest.approx(acc, rel=1e-12)


def test_dual_gap_families(density, drift):
    spec = fractional_kernel(1, 0.5, normalized=True)
    dom = density_lattice(density, cells=60)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = dual_gap(density, [lambda p: np.zeros(len(p))], dom, spec, drift)
        wells = [lambda p, a=a: a * p[:, 0] ** 2 for a in
                 (-0.5, -1.0, -2.0, -4.0, -8.0)]
        rich = dual_gap(density, [lambda p: np.zeros(len(p))] + wells,
                        dom, spec, drift)
    assert base.gap >= -1e-8
    assert rich.gap >= -1e-8
    assert rich.gap < base.gap
    # constant potential shifts leave every family value unchanged
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        shifted = dual_gap(density, [lambda p: 2.5 * np.ones(len(p))],
                           dom, spec, drift)
    assert shifted.values[0] == pytest.approx(base.values[0], abs=1e-7)