"""Principal eigenpair solver, sup/min-max characterizations, sign demos.

Frozen reference: the principal eigenvalue of the half-Laplacian on (-1,1)
was extrapolated from dense symmetric solves at n=50..400 (observed mesh
rate 1.01, Richardson limit 1.1577636 / 1.1577434 from successive triples).
"""

import dataclasses
import warnings

import numpy as np
import pytest

from nonlocal_dv.errors import (
    ConvergenceError,
    DomainError,
    PositivityError,
)
from nonlocal_dv.kernels import fractional_kernel
from nonlocal_dv.lattice import LatticeDomain, assemble
from nonlocal_dv.operators import SmoothFunction, bump, carre_du_champ, nonlocal_laplacian
from nonlocal_dv.spectral import (
    dense_eigenpair,
    maxprinciple_violation_demo,
    minmax_value,
    principal_eigenpair,
    principal_left_vector,
    sup_characterization_check,
)

HALF_LAPLACIAN_INTERVAL_LAMBDA1 = 1.157764


def drifted_op(n=60, s=0.5, amp=0.4, potential=None):
    spec = fractional_kernel(1, s, normalized=True)
    dom = LatticeDomain.interval(-1.0, 1.0, n, margin=1.0)
    h_fn = SmoothFunction(lambda p: amp * np.tanh(2.0 * p[:, 0]), 1,
                          osc_bound=2.0 * amp, support_radius=40.0)
    return assemble(dom, spec, drift=h_fn if amp else None, potential=potential)


def test_interval_reference_value():
    op = drifted_op(n=100, amp=0.0)
    pair = principal_eigenpair(op, tol=1e-9, max_iter=300)
    rel = abs(pair.lambda1 - HALF_LAPLACIAN_INTERVAL_LAMBDA1)
    assert rel / HALF_LAPLACIAN_INTERVAL_LAMBDA1 < 0.02
    assert pair.residual < 1e-9
    assert pair.phi1.values.max() == pytest.approx(1.0)
    assert pair.phi1.values.min() > 0.0


def test_spectral_shift_identity():
    rng = np.random.default_rng(11)
    op_a = drifted_op(n=40, potential=lambda p: np.cos(3 * p[:, 0]))
    shift = 3.7
    op_b = dataclasses.replace(op_a, matrix=op_a.matrix + shift * np.eye(op_a.n))
    la = dense_eigenpair(op_a).lambda1
    lb = dense_eigenpair(op_b).lambda1
    assert abs(lb - (la - shift)) < 1e-9
    pa = principal_eigenpair(op_a, tol=1e-10, max_iter=400)
    pb = principal_eigenpair(op_b, tol=1e-10, max_iter=400)
    assert abs(pb.lambda1 - (pa.lambda1 - shift)) < 1e-8
    del rng


def test_symmetric_case_matches_eigvalsh():
    op = drifted_op(n=50, amp=0.0, potential=lambda p: p[:, 0] ** 2)
    pair = principal_eigenpair(op, tol=1e-10, max_iter=400)
    sym = np.linalg.eigvalsh(-(op.laplace_matrix + np.diag(op.potential))).min()
    assert pair.lambda1 == pytest.approx(sym, abs=1e-8)


def test_iteration_agrees_with_dense_nonsymmetric():
    op = drifted_op(n=60, amp=0.45, potential=lambda p: 0.5 * np.sin(2 * p[:, 0]))
    tol = 1e-9
    pair = principal_eigenpair(op, tol=tol, max_iter=400)
    dense = dense_eigenpair(op)
    assert abs(pair.lambda1 - dense.lambda1) < 10 * tol * max(1.0, abs(dense.lambda1))
    assert pair.phi1.values.min() > 0.0
    align = np.abs(pair.phi1.values - dense.phi1.values).max()
    assert align < 1e-6


def test_potential_monotonicity():
    op_a = drifted_op(n=40, potential=lambda p: np.zeros(len(p)))
    op_b = drifted_op(n=40, potential=lambda p: 0.8 * bump(1, radius=0.7)(p))
    la = principal_eigenpair(op_a, tol=1e-10, max_iter=400).lambda1
    lb = principal_eigenpair(op_b, tol=1e-10, max_iter=400).lambda1
    assert la >= lb - 1e-12


def test_oscillation_warning():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        op = drifted_op(n=30, amp=0.8)  # osc about 1.6
        principal_eigenpair(op, tol=1e-8, max_iter=300)
    assert any("oscillation" in str(w.message) for w in caught)


def test_convergence_error_carries_residual():
    op = drifted_op(n=40)
    with pytest.raises(ConvergenceError) as err:
        principal_eigenpair(op, tol=1e-14, max_iter=2)
    assert "residual" in str(err.value)


def test_dense_rejects_complex_only_spectrum():
    op = drifted_op(n=2, amp=0.0)
    rot = dataclasses.replace(op, matrix=np.array([[0.0, -1.0], [1.0, 0.0]]))
    with pytest.raises(PositivityError):
        dense_eigenpair(rot)


def test_iteration_rejects_sign_changing_candidate():
    op = drifted_op(n=2, amp=0.0)
    # smallest eigenvalue of [[1,.5],[.5,2]] has a sign-changing eigenvector
    bad = dataclasses.replace(op, matrix=-np.array([[1.0, 0.5], [0.5, 2.0]]))
    with pytest.raises(PositivityError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            principal_eigenpair(bad, tol=1e-10, max_iter=200)


def test_sup_characterization():
    op = drifted_op(n=50, amp=0.3)
    pair = principal_eigenpair(op, tol=1e-10, max_iter=400)
    slack = 10 * max(pair.residual, 1e-12)
    ok, margin = sup_characterization_check(op, pair.phi1.values, pair.lambda1,
                                            slack=slack)
    assert ok and abs(margin) <= slack
    ok_hi, _ = sup_characterization_check(op, pair.phi1.values,
                                          pair.lambda1 + 0.1 * abs(pair.lambda1))
    assert not ok_hi
    rng = np.random.default_rng(3)
    phi = 1.0 + rng.uniform(0.0, 1.0, size=op.n)
    ratio = -(op.matrix @ phi) / phi
    lam_star = ratio.min()
    ok_star, margin_star = sup_characterization_check(op, phi, lam_star)
    assert ok_star and margin_star == pytest.approx(0.0, abs=1e-12)
    # any positive test function bounds lambda1 from below this way
    assert lam_star <= pair.lambda1 + slack


def test_minmax_families():
    op = drifted_op(n=50, amp=0.35)
    pair = principal_eigenpair(op, tol=1e-11, max_iter=500)
    lam1, phi1 = pair.lambda1, pair.phi1.values
    psi1 = principal_left_vector(op)
    mu_star = phi1 * psi1
    mu_star /= mu_star.sum()
    n = op.n
    uniform = np.full(n, 1.0 / n)
    point = np.zeros(n)
    point[n // 3] = 1.0
    measures = [uniform, point, mu_star]

    rng = np.random.default_rng(7)
    perturbed = [phi1 * (1.0 + 0.5 * rng.uniform(-1.0, 1.0, size=n))
                 for _ in range(4)]
    stages = [perturbed[:1], perturbed[:2], perturbed[:3],
              perturbed + [phi1]]
    slack = 10 * max(pair.residual, 1e-12)
    values = [minmax_value(op, measures, fam) for fam in stages]
    for a, b in zip(values, values[1:]):
        assert b >= a - 1e-12
    for v in values:
        assert v <= lam1 + slack
    assert values[-1] == pytest.approx(lam1, abs=slack + 1e-10)

    # point mass at the argmax ratio bounds lambda1 from above
    phi = perturbed[0]
    ratio = -(op.matrix @ phi) / phi
    at_max = np.zeros(n)
    at_max[np.argmax(ratio)] = 1.0
    assert minmax_value(op, [at_max], [phi]) >= lam1 - slack

    with pytest.raises(DomainError):
        minmax_value(op, [np.full(n, 2.0 / n)], [phi1])
    with pytest.raises(DomainError):
        minmax_value(op, [uniform], [phi1 - phi1.max()])


def test_demo_certifies_violation_for_large_jump():
    rep = maxprinciple_violation_demo(0.5)
    assert rep.violation_certified
    assert rep.max_value <= rep.tolerance
    assert rep.center_value == pytest.approx(1.0, abs=1e-12)
    assert rep.oscillation >= 1.0


def test_demo_drift_term_matches_closed_form():
    s = 0.5
    rep = maxprinciple_violation_demo(s)
    pref = fractional_kernel(1, s, normalized=True).prefactor
    x = rep.grid
    u = (1.0 - x**2) ** (1.0 + s)
    tau = pref * ((1.0 - x) ** (-2 * s) + (1.0 + x) ** (-2 * s)) / (2 * s)
    expected = -0.5 * rep.drift_jump * u * tau
    assert np.abs(rep.drift_term_values - expected).max() < 1e-6 * np.abs(expected).max()


def test_demo_small_oscillation_cannot_certify():
    rep = maxprinciple_violation_demo(0.5, drift_jump=0.5)
    assert rep.oscillation == pytest.approx(0.5)
    assert not rep.violation_certified
    assert rep.max_value > rep.tolerance


def test_demo_without_drift_positive_near_center():
    rep = maxprinciple_violation_demo(0.5, drift_jump=0.0)
    central = rep.operator_values[np.abs(rep.grid) <= 0.3]
    assert (central > 0.0).all()
    assert not rep.violation_certified


def test_demo_consistency_with_pointwise_operators():
    s = 0.3
    rep = maxprinciple_violation_demo(s, drift_jump=2.0)
    spec = fractional_kernel(1, s, normalized=True)
    u = SmoothFunction(
        lambda p: np.maximum(0.0, 1.0 - p[:, 0] ** 2) ** (1.0 + s), 1,
        support_radius=1.0, kink_points=(-1.0, 1.0))
    h = SmoothFunction(lambda p: 2.0 * (np.abs(p[:, 0]) >= 1.0), 1,
                       support_radius=1.0, far_value=2.0, osc_bound=2.0,
                       kink_points=(-1.0, 1.0))
    for k in (0, len(rep.grid) // 2, len(rep.grid) - 1):
        x = np.array([rep.grid[k]])
        val = -nonlocal_laplacian(u, spec, x) + carre_du_champ(u, h, spec, x)
        assert rep.operator_values[k] == pytest.approx(val, rel=1e-9, abs=1e-9)