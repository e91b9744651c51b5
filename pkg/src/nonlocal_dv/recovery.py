"""Recovery of kernel data from indirect energy measurements.

Three instruments share this module.  Concentrating a density at a point and
tracking the scale-normalized rate value gives the small-scale diffusion
limit of the energy.  A spectral evaluation of the quadratic energy through
the discrete transform provides an independent route to the same numbers.
Narrow Gaussian probes, collapsed along one direction, isolate entries of
the inverse coefficient matrix from their energy asymptotics; together with
a determinant closure this reconstructs the matrix.  A drift probe and a
constancy check recover the first-order data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from .errors import (
    CapacityError,
    DomainError,
    OracleInconsistencyError,
    ReconstructionError,
    ResolutionError,
)
from .extrapolate import richardson_limit
from .kernels import KernelSpec, normalization_constant
from .lattice import LatticeDomain, assemble
from .operators import SmoothFunction, bump, nonlocal_laplacian, scaled
from .rate import DensitySpec, I_decomposed, density_lattice, drift_pairing

__all__ = [
    "ProbeResult",
    "ReconstructionReport",
    "DiffusionLimitResult",
    "DriftProbeResult",
    "ConstancyReport",
    "GaussianProbe",
    "rescale_density",
    "probe_domain",
    "diffusion_limit",
    "fourier_energy",
    "fourier_probe_oracle",
    "recover_matrix",
    "drift_probe",
    "constancy_check",
]


# --------------------------------------------------------------------------
# result records


@dataclass(frozen=True)
class ProbeResult:
    """One probe measurement at one scale."""

    transform_tag: str
    lambda_: float
    raw_energy: float
    normalized_energy: float
    error_estimate: float


@dataclass(frozen=True)
class ReconstructionReport:
    recovered_matrix: np.ndarray
    rho: float
    per_entry_residuals: np.ndarray
    drift_values: np.ndarray | None
    probes: tuple


@dataclass(frozen=True)
class DiffusionLimitResult:
    """Extrapolated small-scale limit of the normalized rate value.

    ``values`` is the drift-removed sequence used for the limit,
    ``raw_values`` keeps the first-order correction in.
    """

    limit: float
    rate: float
    lambdas: np.ndarray
    values: np.ndarray
    raw_values: np.ndarray
    error_estimate: float
    monotone: bool


@dataclass(frozen=True)
class DriftProbeResult:
    limit: float
    rate: float
    lambdas: np.ndarray
    values: np.ndarray
    pair_values: np.ndarray
    pointwise_value: float
    cross_difference: float


@dataclass(frozen=True)
class ConstancyReport:
    max_operator_value: float
    oscillation: float
    tolerance: float
    operator_flat: bool
    constant: bool


# --------------------------------------------------------------------------
# density rescaling


def rescale_density(f: DensitySpec, lambda_: float, x0,
                    domain: LatticeDomain | None = None) -> DensitySpec:
    """Concentrate a unit-mass density: lam^-N f((x - x0)/lam) around x0.

    With a lattice supplied, the rescaled support must stay inside the
    interior region, otherwise the measurement would lose mass.
    """
    lam = float(lambda_)
    if lam <= 0.0:
        raise DomainError("scale parameter must be positive")
    base = f.f
    dim = base.dim
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (dim,):
        raise DomainError("concentration point must match the density dimension")
    if base.support_radius is None:
        raise DomainError("rescaling needs a density of known support")

    def fn(pts: np.ndarray) -> np.ndarray:
        return base((pts - x0) / lam) / lam ** dim

    if domain is not None:
        ipts = domain.interior_points
        half = 0.5 * domain.spacing
        lo = ipts.min(axis=0) - half
        hi = ipts.max(axis=0) + half
        if (np.any(x0 - lam * base.support_radius < lo)
                or np.any(x0 + lam * base.support_radius > hi)):
            raise CapacityError(
                "rescaled support of radius %.4g around %s escapes the lattice"
                % (lam * base.support_radius, np.array2string(x0)))
    reach = float(np.linalg.norm(x0)) + lam * base.support_radius
    kinks = tuple(tuple(x0 + lam * np.asarray(p, dtype=float))
                  for p in base.kink_points)
    g = SmoothFunction(fn, dim, support_radius=reach,
                       bound=None if base.bound is None else base.bound / lam ** dim,
                       kink_points=kinks)
    return DensitySpec(g, sqrt_f_regularity=f.sqrt_f_regularity,
                       center=x0, lambda_=f.lambda_ * lam)


def probe_domain(f: DensitySpec, lambda_: float, x0, cells: int = 64,
                 margin: float = 1.0, pad: float = 0.5) -> LatticeDomain:
    """Exact lam-scaled image of the base density lattice, centered at x0.

    Bounds, padding, and margin all shrink with the scale, so constant
    coefficient energies obey their power law on these lattices with no
    discretization residual.
    """
    lam = float(lambda_)
    if lam <= 0.0:
        raise DomainError("scale parameter must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dim = f.f.dim
    reach = lam * (f.f.support_radius + pad)
    lower = x0 - reach
    upper = x0 + reach
    if dim == 1:
        return LatticeDomain.interval(float(lower[0]), float(upper[0]), cells,
                                      margin=lam * margin)
    return LatticeDomain.box(lower, upper, [cells] * dim, margin=lam * margin)


# --------------------------------------------------------------------------
# diffusion limit


def diffusion_limit(spec: KernelSpec, f: DensitySpec, x0,
                    lambda_seq=(0.5, 0.25, 0.125),
                    h: SmoothFunction | None = None,
                    cells: int = 64) -> DiffusionLimitResult:
    """Small-scale limit of the scale-normalized rate value at x0.

    For each scale the density is concentrated at x0 and the rate value
    computed on the matching shrunken lattice.  The extrapolated sequence is
    the drift-removed one: adding back half the drift pairing cancels the
    first-order term, whose slow decay would otherwise dominate the
    extrapolation for small exponents.  The raw sequence is reported
    alongside.
    """
    lams = np.asarray(lambda_seq, dtype=float)
    if lams.ndim != 1 or lams.size < 2 or np.any(lams <= 0):
        raise DomainError("need a sequence of at least two positive scales")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    s = spec.bounds.s
    vals = []
    raws = []
    for lam in lams:
        g = rescale_density(f, float(lam), x0)
        dom = probe_domain(f, float(lam), x0, cells=cells)
        op = assemble(dom, spec, drift=h)
        I_val, _, _ = I_decomposed(g, h, spec, op=op)
        pairing = 0.0 if h is None else drift_pairing(op, g.values_on(dom))
        power = float(lam) ** (2.0 * s)
        vals.append(power * (I_val + 0.5 * pairing))
        raws.append(power * I_val)
    ratio = float(lams[0] / lams[1])
    ext = richardson_limit(vals, ratio=ratio)
    if not ext.monotone:
        warnings.warn(
            "normalized energies are not monotone in the scale; the "
            "extrapolated limit may be unreliable",
            stacklevel=2,
        )
    return DiffusionLimitResult(ext.limit, ext.rate, lams, np.asarray(vals),
                                np.asarray(raws), ext.error_estimate,
                                ext.monotone)


# --------------------------------------------------------------------------
# spectral energy


_DEFAULT_COUNTS = {1: 2048, 2: 256, 3: 96}


def _spectral_sum(A: np.ndarray, g, s: float, ext: np.ndarray,
                  cnt: np.ndarray) -> float:
    dim = len(ext)
    Ainv = np.linalg.inv(A)
    hs = 2.0 * ext / cnt
    axes = [-ext[k] + hs[k] * (np.arange(cnt[k]) + 0.5) for k in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    vals = np.asarray(g(pts), dtype=float).reshape(tuple(cnt))
    vol = float(np.prod(hs))
    ghat2 = np.abs(np.fft.fftn(vals)) ** 2 * (vol / (2 * np.pi) ** (dim / 2.0)) ** 2
    freqs = [2 * np.pi * np.fft.fftfreq(int(cnt[k]), d=hs[k]) for k in range(dim)]
    grid = np.meshgrid(*freqs, indexing="ij")
    quad = np.zeros_like(grid[0])
    for a in range(dim):
        for b in range(dim):
            quad += Ainv[a, b] * grid[a] * grid[b]
    quad = np.maximum(quad, 0.0)
    dxi = float(np.prod([np.pi / ext[k] for k in range(dim)]))
    total = float(np.sum(quad ** s * ghat2)) * dxi
    # the weight has a kink at the origin where the midpoint value vanishes;
    # integrate it exactly over the origin cell with a tensor Gauss rule
    gl_x, gl_w = np.polynomial.legendre.leggauss(8)
    cell = [np.pi / ext[k] for k in range(dim)]
    qpts = np.meshgrid(*[0.5 * cell[k] * gl_x for k in range(dim)], indexing="ij")
    qwts = np.meshgrid(*[0.5 * cell[k] * gl_w for k in range(dim)], indexing="ij")
    q0 = np.zeros_like(qpts[0])
    for a in range(dim):
        for b in range(dim):
            q0 += Ainv[a, b] * qpts[a] * qpts[b]
    w0 = np.ones_like(qwts[0])
    for w in qwts:
        w0 = w0 * w
    total += float(np.sum(q0 ** s * w0)) * float(ghat2.flat[0])
    return total / float(np.sqrt(np.linalg.det(A)))


def fourier_energy(matrix, g, s: float, extents=None, counts=None,
                   check_aliasing: bool = False,
                   aliasing_tol: float = 0.05) -> float:
    """Spectral form of the quadratic energy for constant coefficients.

    Computes |Det A|^{-1/2} times the integral of <A^{-1} xi, xi>^s |ghat|^2
    in the unitary transform convention, on a midpoint grid of the given
    per-axis extents and counts.  ``check_aliasing`` doubles the counts once
    and raises when the value moves by more than ``aliasing_tol``
    relatively; the finer value is returned in that case.
    """
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    dim = A.shape[0]
    if A.shape != (dim, dim) or np.abs(A - A.T).max() > 1e-12 * np.abs(A).max():
        raise DomainError("coefficient matrix must be symmetric")
    if np.linalg.eigvalsh(A).min() <= 0.0:
        raise DomainError("coefficient matrix must be positive definite")
    if not 0.0 < s < 1.0:
        raise DomainError("exponent must lie in (0, 1)")
    if extents is None:
        extents = 12.0
    ext = np.broadcast_to(np.asarray(extents, dtype=float), (dim,)).astype(float)
    if np.any(ext <= 0):
        raise DomainError("grid extents must be positive")
    if counts is None:
        counts = _DEFAULT_COUNTS.get(dim, 64)
    cnt = np.broadcast_to(np.asarray(counts, dtype=int), (dim,)).astype(int)
    if np.any(cnt < 8):
        raise DomainError("need at least eight nodes per axis")
    value = _spectral_sum(A, g, s, ext, cnt)
    if check_aliasing:
        fine = _spectral_sum(A, g, s, ext, 2 * cnt)
        if abs(fine - value) > aliasing_tol * max(abs(fine), 1e-300):
            raise ResolutionError(
                "doubling the grid moved the spectral energy from %.6g to "
                "%.6g; the sampling is too coarse for this function"
                % (value, fine))
        value = fine
    return float(value)


# --------------------------------------------------------------------------
# probes


@dataclass(frozen=True)
class GaussianProbe:
    """Gaussian test function collapsing along one direction.

    ``axis`` is either an axis index (the collapsing direction is that
    coordinate axis) or a pair (k, m), in which case the probe collapses
    along (e_k - e_m)/sqrt(2).  The collapsing width is
    ``narrow_width * lambda_``; every transverse width is ``broad_width``.
    """

    dim: int
    lambda_: float
    axis: object
    narrow_width: float = 1.0
    broad_width: float = 1.0

    @property
    def tag(self) -> str:
        if isinstance(self.axis, tuple):
            return "rotation(%d,%d)" % (self.axis[0], self.axis[1])
        return "identity" if self.axis == 0 else "axis_swap(%d)" % self.axis

    @property
    def frame(self) -> np.ndarray:
        """Orthogonal map whose first row is the collapsing direction."""
        eye = np.eye(self.dim)
        if isinstance(self.axis, tuple):
            k, m = self.axis
            root = 1.0 / np.sqrt(2.0)
            rows = [root * (eye[k] - eye[m]), root * (eye[k] + eye[m])]
            rows += [eye[j] for j in range(self.dim) if j not in (k, m)]
            return np.array(rows)
        R = eye.copy()
        if self.axis != 0:
            R[[0, self.axis]] = R[[self.axis, 0]]
        return R

    def frame_function(self) -> SmoothFunction:
        """The probe in its own frame: a product of axis Gaussians."""
        w1 = self.narrow_width * self.lambda_
        wb = self.broad_width
        dim = self.dim

        def fn(pts: np.ndarray) -> np.ndarray:
            out = np.exp(-0.5 * (pts[:, 0] / w1) ** 2)
            for j in range(1, dim):
                out = out * np.exp(-0.5 * (pts[:, j] / wb) ** 2)
            return out

        reach = 8.6 * max(w1, wb)
        return SmoothFunction(fn, dim, support_radius=reach, bound=1.0)

    def function(self) -> SmoothFunction:
        """The probe in physical coordinates."""
        R = self.frame
        ff = self.frame_function()
        return SmoothFunction(lambda pts: ff(pts @ R.T), self.dim,
                              support_radius=ff.support_radius, bound=1.0)

    def grid(self):
        """Frame-aligned extents and counts resolving the collapsed axis."""
        w1 = self.narrow_width * self.lambda_
        extents = [31.0 * w1] + [10.0 * self.broad_width] * (self.dim - 1)
        counts = [384] + [96] * (self.dim - 1)
        return extents, counts


def fourier_probe_oracle(matrix, s: float):
    """Energy oracle for probes, backed by the spectral evaluation.

    Each probe is evaluated in its own frame against the rotated matrix;
    this equals rotating the function (covariance is exercised in the test
    suite) and keeps the collapsed direction grid-aligned, so the narrow
    scales stay affordable.
    """
    A = np.asarray(matrix, dtype=float)

    def oracle(probe: GaussianProbe) -> float:
        R = probe.frame
        ext, cnt = probe.grid()
        return fourier_energy(R @ A @ R.T, probe.frame_function(), s,
                              extents=ext, counts=cnt)

    return oracle


# --------------------------------------------------------------------------
# matrix recovery


def recover_matrix(energy_oracle, dim: int, s: float,
                   lambda_seq=(0.5, 0.25, 0.125), second_width: float = 0.7,
                   spread_tol: float = 1.5, rho_tol: float = 0.25,
                   normalized: bool = True) -> ReconstructionReport:
    """Reconstruct the coefficient matrix from an energy oracle.

    A probe collapsing along direction e has scale-normalized energy tending
    to C |Det A|^{-1/2} (e' A^{-1} e)^s, C the closed-form constant for the
    probe widths.  Axis probes therefore give the diagonal of A^{-1} up to a
    common power of the determinant, diagonal-direction probes give the
    off-diagonal entries linearly, and the determinant of the assembled data
    closes the system.  A second probe family at a different width
    re-measures the diagonal; the geometric mean of measured over predicted
    is reported as the kernel density factor rho, which the model requires
    to be 1.
    """
    lams = np.asarray(lambda_seq, dtype=float)
    if (lams.ndim != 1 or lams.size < 3 or np.any(lams <= 0)
            or np.any(np.diff(lams) >= 0)):
        raise DomainError("need a decreasing scale sequence of three or more values")
    ratios = lams[:-1] / lams[1:]
    if np.abs(ratios - ratios[0]).max() > 1e-9 * ratios[0]:
        raise DomainError("scale sequence must be geometric")
    if not 0.0 < s < 1.0:
        raise DomainError("exponent must lie in (0, 1)")
    ratio = float(ratios[0])
    C1 = float(gamma(s + 0.5) * np.pi ** ((dim - 1) / 2.0))
    if not normalized:
        C1 /= normalization_constant(dim, s)
    probes: list[ProbeResult] = []

    def measure(axis, width: float) -> float:
        rows = []
        for lam in lams:
            p = GaussianProbe(dim, float(lam), axis, narrow_width=width)
            raw = float(energy_oracle(p))
            rows.append((p.tag, float(lam), raw, float(lam) ** (2 * s - 1) * raw))
        norm = [r[3] for r in rows]
        limit = richardson_limit(norm, ratio=ratio).limit
        floor = 1e-12 * max(abs(v) for v in norm) + 1e-300
        spread = (max(norm) - min(norm)) / max(abs(limit), floor)
        if spread > spread_tol:
            raise OracleInconsistencyError(
                "probe %s: normalized energies %s do not settle (spread %.3g)"
                % (rows[0][0], ["%.4g" % v for v in norm], spread))
        for tag, lam, raw, nv in rows:
            probes.append(ProbeResult(tag, lam, raw, nv, abs(nv - limit)))
        if limit <= 0.0:
            raise ReconstructionError(
                "probe %s extrapolates to the nonpositive energy %.3g"
                % (rows[0][0], limit))
        return float(limit)

    P = np.array([measure(k, 1.0) for k in range(dim)])
    M = np.zeros((dim, dim))
    for k in range(dim):
        M[k, k] = (P[k] / C1) ** (1.0 / s)
    cross = {}
    for k in range(dim):
        for m in range(k + 1, dim):
            cross[(k, m)] = measure((k, m), 1.0)
            Rkm = (cross[(k, m)] / C1) ** (1.0 / s)
            M[k, m] = M[m, k] = 0.5 * (M[k, k] + M[m, m]) - Rkm
    if np.linalg.eigvalsh(M).min() <= 0.0:
        raise ReconstructionError(
            "assembled inverse-matrix data is not positive definite; "
            "eigenvalues %s" % np.array2string(np.linalg.eigvalsh(M)))
    detM = float(np.linalg.det(M))
    detA = detM ** (-2.0 * s / (dim + 2.0 * s))
    scale = detA ** (-1.0 / (2.0 * s))
    A = scale * np.linalg.inv(M)
    Ainv = np.linalg.inv(A)
    pref = C1 / float(np.sqrt(detA))

    residuals = np.zeros((dim, dim))
    for k in range(dim):
        pred = pref * Ainv[k, k] ** s
        residuals[k, k] = abs(P[k] - pred) / pred
    for (k, m), lim in cross.items():
        pred = pref * (0.5 * (Ainv[k, k] - 2 * Ainv[k, m] + Ainv[m, m])) ** s
        residuals[k, m] = residuals[m, k] = abs(lim - pred) / pred

    width_factor = second_width ** (1.0 - 2.0 * s)
    logs = []
    for k in range(dim):
        meas = measure(k, second_width)
        pred = width_factor * pref * Ainv[k, k] ** s
        logs.append(np.log((meas / pred) ** (1.0 / s)))
    rho = float(np.exp(np.mean(logs)))
    if abs(rho - 1.0) > rho_tol:
        raise OracleInconsistencyError(
            "kernel density factor %.4f is far from 1; the oracle does not "
            "match the probe model" % rho)
    return ReconstructionReport(A, rho, residuals, None, tuple(probes))


# --------------------------------------------------------------------------
# drift recovery


_UNIT_BUMPS: dict[int, DensitySpec] = {}


def _unit_bump(dim: int) -> DensitySpec:
    # prenormalized so downstream lattice renormalization stays silent
    if dim not in _UNIT_BUMPS:
        b = bump(dim, radius=0.8)
        dom = density_lattice(DensitySpec(b), cells=256 if dim == 1 else 48)
        mass = float(b(dom.interior_points).sum()) * dom.cell_volume
        _UNIT_BUMPS[dim] = DensitySpec(scaled(b, 1.0 / mass))
    return _UNIT_BUMPS[dim]


def drift_probe(h: SmoothFunction, spec: KernelSpec, x0,
                lambda_seq=(0.5, 0.25, 0.125), f: DensitySpec | None = None,
                cells: int = 40, cross_tol: float = 0.05) -> DriftProbeResult:
    """Recover the generator applied to the drift at x0 from integrals.

    Each scale integrates the pointwise generator values against the
    concentrated density; a second route through assembled pair weights must
    agree, since the integrated first-order term equals minus the lattice
    drift pairing.  The extrapolated limit is cross-checked against direct
    pointwise quadrature at x0 and the difference reported.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dim = x0.size
    if f is None:
        f = _unit_bump(dim)
    lams = np.asarray(lambda_seq, dtype=float)
    if lams.ndim != 1 or lams.size < 2 or np.any(lams <= 0):
        raise DomainError("need a sequence of at least two positive scales")
    vals = []
    pairs = []
    for lam in lams:
        g = rescale_density(f, float(lam), x0)
        dom = probe_domain(f, float(lam), x0, cells=cells)
        fv = g.values_on(dom)
        applied = np.array([nonlocal_laplacian(h, spec, p)
                            for p in dom.interior_points])
        vals.append(float(fv @ applied) * dom.cell_volume)
        op = assemble(dom, spec, drift=h)
        pairs.append(-drift_pairing(op, fv))
    ref = float(nonlocal_laplacian(h, spec, x0))
    ext = richardson_limit(vals, ratio=float(lams[0] / lams[1]))
    diff = abs(ext.limit - ref)
    if diff > cross_tol * max(abs(ref), 1e-12) + 1e-10:
        raise OracleInconsistencyError(
            "integrated drift limit %.6g disagrees with the pointwise value "
            "%.6g" % (ext.limit, ref))
    return DriftProbeResult(ext.limit, ext.rate, lams, np.asarray(vals),
                            np.asarray(pairs), ref, diff)


def constancy_check(w: SmoothFunction, spec: KernelSpec, sample_points,
                    tol: float = 1e-8) -> ConstancyReport:
    """Decide whether a recovered exponent field is constant.

    Evaluates the generator at the sample points, and the oscillation of the
    field over the samples together with its far state.  A constant verdict
    needs both below tol; a flat generator with visible oscillation is
    reported but not certified.
    """
    pts = np.asarray(sample_points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != w.dim:
        raise DomainError("sample points must have shape (m, dim)")
    applied = np.array([nonlocal_laplacian(w, spec, p) for p in pts])
    field_vals = np.append(w(pts), w.far_value)
    oscillation = float(field_vals.max() - field_vals.min())
    max_op = float(np.abs(applied).max())
    flat = max_op < tol
    return ConstancyReport(max_op, oscillation, tol, flat,
                           bool(flat and oscillation < tol))
