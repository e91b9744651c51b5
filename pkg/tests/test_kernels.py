"""Kernel construction, ellipticity checks, and normalization."""

import math

import numpy as np
import pytest

from nonlocal_dv.errors import DomainError, EllipticityError, SingularityError
from nonlocal_dv.kernels import (
    AnisotropyField,
    EllipticityBounds,
    KernelSpec,
    fractional_kernel,
    kernel_eval,
    normalization_constant,
    spec_from_config,
    validate_ellipticity,
)


def test_normalization_half_in_1d_is_inverse_pi():
    assert normalization_constant(1, 0.5) == pytest.approx(1.0 / math.pi, rel=1e-14)


def test_normalization_rejects_bad_order():
    for s in (0.0, 1.0, -0.2, 1.3):
        with pytest.raises(DomainError):
            normalization_constant(1, s)


def test_constant_field_hand_value():
    # A = diag(4, 1), offset e1, s = 1/2: q = 4, K = 4^(-3/2) = 0.125
    spec = KernelSpec(
        AnisotropyField.constant(np.diag([4.0, 1.0])),
        EllipticityBounds(1.0, 4.0, 0.5, 2),
    )
    x = np.array([0.0, 0.0])
    y = np.array([1.0, 0.0])
    assert kernel_eval(spec, x, y) == pytest.approx(0.125, rel=1e-14)


def test_kernel_scaling_constant_field():
    spec = fractional_kernel(2, 0.3, normalized=False)
    x = np.array([0.2, -0.1])
    z = np.array([0.7, 0.4])
    k1 = kernel_eval(spec, x, x + z)
    for lam in (0.5, 2.0, 7.0):
        k2 = kernel_eval(spec, x, x + lam * z)
        assert k2 == pytest.approx(lam ** (-(2 + 2 * 0.3)) * k1, rel=1e-12)


@pytest.mark.parametrize("variant", ["constant", "sum", "product"])
def test_swap_symmetry(variant):
    rng = np.random.default_rng(7)
    if variant == "constant":
        field = AnisotropyField.constant(np.array([[2.0, 0.5], [0.5, 1.5]]))
    else:
        def mfn(pts):
            out = np.tile(np.eye(2), (len(pts), 1, 1))
            out[:, 0, 0] = 2.0 + 0.4 * np.sin(pts[:, 0])
            out[:, 1, 1] = 1.5 + 0.3 * np.cos(pts[:, 1])
            out[:, 0, 1] = out[:, 1, 0] = 0.2 * np.sin(pts.sum(axis=1))
            return out

        maker = AnisotropyField.separable_sum if variant == "sum" else AnisotropyField.separable_product
        field = maker(mfn, 2)
    spec = KernelSpec(field, EllipticityBounds(0.5, 4.0, 0.6, 2))
    for _ in range(20):
        x, y = rng.normal(size=2), rng.normal(size=2)
        assert kernel_eval(spec, x, y) == pytest.approx(kernel_eval(spec, y, x), rel=1e-13)


def test_coincident_points_raise():
    spec = fractional_kernel(1, 0.5)
    with pytest.raises(SingularityError):
        kernel_eval(spec, np.array([0.3]), np.array([0.3]))


def test_nonsymmetric_matrix_rejected():
    with pytest.raises(EllipticityError):
        AnisotropyField.constant(np.array([[1.0, 0.5], [0.2, 1.0]]))


def test_indefinite_matrix_rejected():
    with pytest.raises(EllipticityError):
        AnisotropyField.constant(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_ellipticity_audit_passes_and_fails():
    field = AnisotropyField.constant(np.diag([4.0, 1.0]))
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(12, 2))

    ok = validate_ellipticity(
        KernelSpec(field, EllipticityBounds(1.0, 4.0, 0.5, 2)), pts, rng=rng
    )
    assert ok.passed
    assert 1.0 - 1e-12 <= ok.min_quotient <= ok.max_quotient <= 4.0 + 1e-12

    bad = validate_ellipticity(
        KernelSpec(field, EllipticityBounds(2.0, 3.0, 0.5, 2)), pts, rng=rng
    )
    assert not bad.passed


def test_normalized_prefactor_applied():
    x, y = np.array([0.0]), np.array([0.9])
    raw = kernel_eval(fractional_kernel(1, 0.5, normalized=False), x, y)
    nrm = kernel_eval(fractional_kernel(1, 0.5, normalized=True), x, y)
    assert nrm == pytest.approx(raw / math.pi, rel=1e-13)


def test_spec_from_config_constant():
    cfg = {
        "variant": "constant",
        "matrix": [[2.0, 0.0], [0.0, 1.0]],
        "s": 0.5,
        "gamma": 1.0,
        "Gamma": 2.0,
        "normalized": False,
    }
    spec = spec_from_config(cfg)
    assert spec.dim == 2
    assert spec.s == 0.5
    got = kernel_eval(spec, np.zeros(2), np.array([1.0, 0.0]))
    assert got == pytest.approx(2.0 ** -1.5, rel=1e-13)
