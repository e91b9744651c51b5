"""Uniform-lattice discretization of the operator on a bounded domain.

Interior nodes of a cell-centered lattice carry unknowns; everything
outside the domain is pinned to zero (complement condition).  The
assembled matrix row i approximates

    (L u)(x_i) + B(u, h)(x_i) + V(x_i) u(x_i)

for grid functions, built from pairwise kernel weights

    W_ij = K(x_i, x_j) h_m^N        (i != j, symmetric)

with two corrections: the singular self-cell of each node is
redistributed onto its lattice neighbours through symmetrized radial
moment integrals, and the kernel mass beyond the bounding box enters
each diagonal through an analytic per-ray tail.  By construction the
drift-free block is symmetric and satisfies the discrete
integration-by-parts identity

    sum_i (M_L u)_i v_i h^N = -( 1/2 sum_ij W_ij du dv + sum_i u_i v_i T_i ) h^N

exactly, which downstream modules rely on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import CapacityError, DomainError, SolverError
from .kernels import KernelSpec
from .operators import QuadratureScheme, SmoothFunction, _directions

__all__ = [
    "LatticeDomain",
    "GridFunction",
    "AssembledOperator",
    "assemble",
    "kernel_form",
    "graph_form",
    "seminorm",
    "dirichlet_solve",
    "estimate_shift",
]

MAX_NODES = 8000


# --------------------------------------------------------------------------
# lattice geometry


@dataclass
class LatticeDomain:
    """Cell-centered lattice on a bounding box with an interior mask.

    ``points`` holds every lattice node in the bounding box;
    ``interior_mask`` marks the nodes lying in the domain Omega.  The
    box may exceed Omega by a margin of whole cells so that the
    near-exterior kernel mass is resolved by pair weights rather than
    by the analytic far-field tail alone.
    """

    descriptor: str
    lower: np.ndarray
    upper: np.ndarray
    spacing: float
    shape: tuple
    points: np.ndarray
    interior_mask: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def interior_points(self) -> np.ndarray:
        return self.points[self.interior_mask]

    @property
    def n_interior(self) -> int:
        return int(self.interior_mask.sum())

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @staticmethod
    def _grid(lower, upper, cells):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        cells = np.asarray(cells, dtype=int)
        widths = (upper - lower) / cells
        if not np.allclose(widths, widths[0], rtol=1e-12):
            raise DomainError("lattice spacing must be equal along all axes")
        h = float(widths[0])
        axes = [lower[a] + h * (np.arange(cells[a]) + 0.5) for a in range(len(cells))]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return lower, upper, h, tuple(int(c) for c in cells), pts

    @classmethod
    def interval(cls, a: float, b: float, cells: int, margin: float = 0.0) -> "LatticeDomain":
        return cls.box([a], [b], [cells], margin=margin, descriptor="interval")

    @classmethod
    def box(cls, lower, upper, cells, margin: float = 0.0,
            descriptor: str = "box") -> "LatticeDomain":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        cells = np.asarray(cells, dtype=int)
        if np.any(cells <= 0) or np.any(upper <= lower):
            raise DomainError("need positive cell counts and upper > lower")
        h = float((upper[0] - lower[0]) / cells[0])
        pad = int(math.ceil(margin / h - 1e-9)) if margin > 0 else 0
        lo2, up2 = lower - pad * h, upper + pad * h
        lo2, up2, h, shape, pts = cls._grid(lo2, up2, cells + 2 * pad)
        inside = np.all((pts > lower + 1e-12 * h) & (pts < upper - 1e-12 * h), axis=1)
        if not inside.any():
            raise DomainError("empty interior")
        if len(pts) > MAX_NODES:
            raise CapacityError(f"{len(pts)} lattice nodes exceed dense-storage cap {MAX_NODES}")
        return cls(descriptor, lo2, up2, h, shape, pts, inside)

    @classmethod
    def ball(cls, center, radius: float, cells_across: int, margin: float = 0.0) -> "LatticeDomain":
        center = np.asarray(center, dtype=float)
        lower = center - radius
        upper = center + radius
        dom = cls.box(lower, upper, [cells_across] * len(center), margin=margin,
                      descriptor="ball")
        dist = np.linalg.norm(dom.points - center, axis=1)
        dom.interior_mask = dist < radius - 1e-12 * dom.spacing
        if not dom.interior_mask.any():
            raise DomainError("empty interior")
        return dom

    @classmethod
    def custom(cls, lower, upper, cells, inside: Callable[[np.ndarray], np.ndarray],
               margin: float = 0.0) -> "LatticeDomain":
        """Domain given by a membership callable on the bounding box."""
        dom = cls.box(lower, upper, cells, margin=margin, descriptor="custom")
        dom.interior_mask = np.asarray(inside(dom.points), dtype=bool)
        if not dom.interior_mask.any():
            raise DomainError("empty interior")
        return dom

    def neighbor_table(self) -> np.ndarray:
        """(n_total, dim, 2) indices of the -/+ axis neighbours, -1 at the box edge."""
        idx = np.arange(len(self.points)).reshape(self.shape)
        out = np.full((len(self.points), self.dim, 2), -1, dtype=int)
        for a in range(self.dim):
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[a] = slice(1, None)
            hi[a] = slice(None, -1)
            out[idx[tuple(lo)].reshape(-1), a, 0] = idx[tuple(hi)].reshape(-1)
            out[idx[tuple(hi)].reshape(-1), a, 1] = idx[tuple(lo)].reshape(-1)
        return out


@dataclass
class GridFunction:
    """Values on the interior nodes of a lattice (zero outside)."""

    domain: LatticeDomain
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.values) != self.domain.n_interior:
            raise DomainError("value count does not match interior node count")

    @classmethod
    def from_function(cls, domain: LatticeDomain, fn) -> "GridFunction":
        return cls(domain, np.asarray(fn(domain.interior_points), dtype=float))

    def save(self, csv_path: str | Path) -> None:
        """CSV rows (index, coordinates..., value) plus a JSON sidecar."""
        csv_path = Path(csv_path)
        pts = self.domain.interior_points
        with open(csv_path, "w") as fh:
            cols = ",".join(f"x{a}" for a in range(self.domain.dim))
            fh.write(f"index,{cols},value\n")
            for i, (p, v) in enumerate(zip(pts, self.values)):
                coord = ",".join(repr(float(c)) for c in p)
                fh.write(f"{i},{coord},{float(v)!r}\n")
        meta = {
            "descriptor": self.domain.descriptor,
            "lower": [float(v) for v in self.domain.lower],
            "upper": [float(v) for v in self.domain.upper],
            "spacing": self.domain.spacing,
            "shape": list(self.domain.shape),
            "n_interior": self.domain.n_interior,
        }
        with open(csv_path.with_suffix(".json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


# --------------------------------------------------------------------------
# pairwise weights


def _pair_quadratic_forms(spec: KernelSpec, pts: np.ndarray) -> np.ndarray:
    """q_ij = (x_i - x_j)^T A(x_i, x_j) (x_i - x_j) for all node pairs."""
    n = len(pts)
    if spec.field.variant == "constant":
        A = spec.field.matrix
        g = pts @ A @ pts.T
        r = np.diag(g)
        return r[:, None] + r[None, :] - g - g.T
    mats = spec.field.single_point_matrices(pts)
    diff = pts[:, None, :] - pts[None, :, :]
    if spec.field.variant == "separable_sum":
        # q = d^T M_i d + d^T M_j d
        e = np.einsum("ija,iab,ijb->ij", diff, mats, diff)
        return e + e.T
    # separable_product: q = 2 (M_i d_ij) . (M_j d_ij); note md[j,i] = -M_j d_ij
    md = np.einsum("iab,ijb->ija", mats, diff)
    return -2.0 * np.einsum("ija,jia->ij", md, md)


def _self_cell_moments(spec: KernelSpec, pts: np.ndarray,
                       quad: QuadratureScheme, h: float) -> np.ndarray:
    """c[i, a] = 1/2 Int_cell z_a^2 K(x_i, x_i + z) dz over the h-cell.

    Polar form with the cube exit radius per direction; the radial
    integral uses Gauss-Jacobi with weight rho^(1-2s), exact for
    constant fields.
    """
    dirs, aw = _directions(spec.dim, quad)
    s = spec.s
    rho_max = (0.5 * h) / np.abs(dirs).max(axis=1)
    gj_x, gj_w = roots_jacobi(quad.radial_order, 0.0, 1.0 - 2.0 * s)
    t = 0.5 * (1.0 + gj_x)
    if spec.field.variant == "constant":
        q_unit = np.einsum("da,ab,db->d", dirs, spec.field.matrix, dirs)
        kdir = spec.prefactor * q_unit ** (-spec.bounds.exponent)
        radial = rho_max ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        c = 0.5 * np.einsum("d,d,d,da->a", aw, kdir, radial, dirs**2)
        return np.broadcast_to(c, (len(pts), spec.dim)).copy()
    # variable field: evaluate the kernel on (node, direction, radius) tuples
    rho = rho_max[:, None] * t[None, :]  # (nd, nr)
    wrad = (0.5 * rho_max) ** (2.0 - 2.0 * s)
    out = np.empty((len(pts), spec.dim))
    offs = rho[:, :, None] * dirs[:, None, :]  # (nd, nr, dim)
    for i, x in enumerate(pts):
        y = (x[None, None, :] + offs).reshape(-1, spec.dim)
        xs = np.broadcast_to(x, y.shape)
        qv = spec.field.quadratic_form(y, xs).reshape(len(dirs), len(t))
        kv = spec.prefactor * qv ** (-spec.bounds.exponent)
        g = kv * rho ** (spec.dim + 2.0 * s)  # smooth part rho^(N+2s) K
        radial = wrad * np.einsum("r,dr->d", gj_w, g)
        out[i] = 0.5 * np.einsum("d,d,da->a", aw, radial, dirs**2)
    return out


def _box_exit_distances(pts: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                        dirs: np.ndarray) -> np.ndarray:
    """Distance from each node to the bounding-box boundary along each ray."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = (upper[None, None, :] - pts[:, None, :]) / dirs[None, :, :]
        t_lo = (lower[None, None, :] - pts[:, None, :]) / dirs[None, :, :]
    t = np.where(dirs[None, :, :] > 1e-14, t_hi,
                 np.where(dirs[None, :, :] < -1e-14, t_lo, np.inf))
    return t.min(axis=2)


def _box_tails(spec: KernelSpec, domain: LatticeDomain,
               quad: QuadratureScheme) -> np.ndarray:
    """T_i = Int_{outside the bounding box} K(x_i, y) dy."""
    dirs, aw = _directions(spec.dim, quad)
    pts = domain.points
    exit_d = _box_exit_distances(pts, domain.lower, domain.upper, dirs)
    s = spec.s
    if spec.field.variant == "constant":
        q_unit = np.einsum("da,ab,db->d", dirs, spec.field.matrix, dirs)
        kdir = spec.prefactor * q_unit ** (-spec.bounds.exponent)
        return np.einsum("d,d,id->i", aw, kdir, exit_d ** (-2.0 * s)) / (2.0 * s)
    gl_x, gl_w = roots_legendre(quad.radial_order)
    total = np.zeros(len(pts))
    a = exit_d.copy()
    for _ in range(60):
        b = a * quad.panel_ratio
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        rho = mid[:, :, None] + half[:, :, None] * gl_x[None, None, :]
        wr = half[:, :, None] * gl_w[None, None, :]
        y = pts[:, None, None, :] + rho[..., None] * dirs[None, :, None, :]
        xs = np.broadcast_to(pts[:, None, None, :], y.shape)
        qv = spec.field.quadratic_form(y.reshape(-1, spec.dim),
                                       xs.reshape(-1, spec.dim)).reshape(rho.shape)
        kv = spec.prefactor * qv ** (-spec.bounds.exponent)
        panel = np.einsum("idr,idr,d->i", wr * rho ** (spec.dim - 1), kv, aw)
        total += panel
        a = b
        if a.min() > quad.far_cap or panel.max() < 1e-9 * max(total.max(), 1e-300):
            break
    sigma = 2.0 * np.pi ** (spec.dim / 2.0) / math.gamma(spec.dim / 2.0)
    total += (spec.prefactor * sigma * spec.bounds.lower ** (-spec.bounds.exponent)
              * a.min(axis=1) ** (-2.0 * s) / (2.0 * s))
    return total


def _drift_far(spec: KernelSpec, domain: LatticeDomain, drift: SmoothFunction,
               quad: QuadratureScheme) -> np.ndarray:
    """S_i = Int_{outside the box} (h(y) - h(x_i)) K(x_i, y) dy."""
    dirs, aw = _directions(spec.dim, quad)
    pts = domain.points
    h_at = drift(pts)
    exit_d = _box_exit_distances(pts, domain.lower, domain.upper, dirs)
    gl_x, gl_w = roots_legendre(quad.radial_order)
    total = np.zeros(len(pts))
    a = exit_d.copy()
    covered = a.copy()
    for _ in range(60):
        b = a * quad.panel_ratio
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        rho = mid[:, :, None] + half[:, :, None] * gl_x[None, None, :]
        wr = half[:, :, None] * gl_w[None, None, :]
        y = (pts[:, None, None, :] + rho[..., None] * dirs[None, :, None, :])
        yf = y.reshape(-1, spec.dim)
        xs = np.broadcast_to(pts[:, None, None, :], y.shape).reshape(-1, spec.dim)
        qv = spec.field.quadratic_form(yf, xs).reshape(rho.shape)
        kv = spec.prefactor * qv ** (-spec.bounds.exponent)
        dh = drift(yf).reshape(rho.shape) - h_at[:, None, None]
        panel = np.einsum("idr,idr,d->i", wr * rho ** (spec.dim - 1) * dh, kv, aw)
        total += panel
        a = b
        covered = a
        if covered.min() > quad.far_cap or np.abs(panel).max() < 1e-10 * max(
                np.abs(total).max(), 1e-300):
            break
    return total


# --------------------------------------------------------------------------
# assembly


@dataclass
class AssembledOperator:
    """Dense matrices for L + B(., h) + V over interior nodes.

    ``pair_weights`` covers all box nodes (exterior ones included) so
    the zero-data exterior mass is resolved discretely near the domain
    boundary and analytically beyond the box (``box_tail``).
    """

    domain: LatticeDomain
    spec: KernelSpec
    pair_weights: np.ndarray  # (n_total, n_total), includes cell volume
    box_tail: np.ndarray  # (n_total,)
    potential: np.ndarray  # (n_interior,)
    drift: SmoothFunction | None
    drift_values: np.ndarray | None  # (n_total,)
    drift_far: np.ndarray | None  # (n_total,)
    laplace_matrix: np.ndarray  # (n_int, n_int)
    drift_matrix: np.ndarray | None
    matrix: np.ndarray  # laplace + drift + diag(V)

    @property
    def n(self) -> int:
        return self.domain.n_interior

    def drift_oscillation(self) -> float:
        if self.drift_values is None:
            return 0.0
        lo = min(self.drift_values.min(), self.drift.far_value)
        hi = max(self.drift_values.max(), self.drift.far_value)
        return float(hi - lo)


def assemble(domain: LatticeDomain, spec: KernelSpec,
             drift: SmoothFunction | None = None,
             potential: np.ndarray | Callable | None = None,
             quad: QuadratureScheme | None = None,
             self_cell: bool = True) -> AssembledOperator:
    """Build the dense operator matrices on the lattice.

    The self-cell redistribution adds 1/2 (c_a(x_i) + c_a(x_j)) / h^2 to
    each axis-neighbour pair weight, keeping the matrix symmetric; only
    the axis-aligned second-moment part is kept, which preserves the
    sign structure needed for the comparison arguments.
    """
    if spec.dim != domain.dim:
        raise DomainError("kernel dimension does not match lattice dimension")
    quad = quad or QuadratureScheme()
    pts = domain.points
    n_total = len(pts)
    if n_total > MAX_NODES:
        raise CapacityError(f"{n_total} nodes exceed dense cap {MAX_NODES}")
    h = domain.spacing
    vol = domain.cell_volume

    q = _pair_quadratic_forms(spec, pts)
    np.fill_diagonal(q, 1.0)
    W = spec.prefactor * q ** (-spec.bounds.exponent) * vol
    np.fill_diagonal(W, 0.0)

    if self_cell:
        mom = _self_cell_moments(spec, pts, quad, h)  # (n_total, dim)
        table = domain.neighbor_table()
        for a in range(domain.dim):
            for side in (0, 1):
                j = table[:, a, side]
                ok = j >= 0
                i = np.nonzero(ok)[0]
                jj = j[ok]
                # half of the symmetrized moment; the mirror pair adds the rest
                W[i, jj] += 0.5 * (mom[i, a] + mom[jj, a]) / (h * h)

    tails = _box_tails(spec, domain, quad)

    mask = domain.interior_mask
    row_sums = W.sum(axis=1)
    lap = W[np.ix_(mask, mask)].copy()
    np.fill_diagonal(lap, np.diag(lap) - row_sums[mask] - tails[mask])

    drift_vals = None
    far = None
    drift_mat = None
    if drift is not None:
        drift_vals = np.asarray(drift(pts), dtype=float)
        far = _drift_far(spec, domain, drift, quad)
        dh = drift_vals[None, :] - drift_vals[:, None]
        B = 0.5 * W * dh
        b_rows = B.sum(axis=1)
        drift_mat = B[np.ix_(mask, mask)].copy()
        np.fill_diagonal(drift_mat, np.diag(drift_mat) - b_rows[mask] - 0.5 * far[mask])

    n_int = int(mask.sum())
    if potential is None:
        V = np.zeros(n_int)
    elif callable(potential):
        V = np.asarray(potential(domain.interior_points), dtype=float).reshape(n_int)
    else:
        V = np.asarray(potential, dtype=float).reshape(n_int)

    matrix = lap.copy()
    if drift_mat is not None:
        matrix += drift_mat
    matrix[np.arange(n_int), np.arange(n_int)] += V

    return AssembledOperator(
        domain=domain, spec=spec, pair_weights=W, box_tail=tails, potential=V,
        drift=drift, drift_values=drift_vals, drift_far=far,
        laplace_matrix=lap, drift_matrix=drift_mat, matrix=matrix)


# --------------------------------------------------------------------------
# energy forms


def _full_values(op: AssembledOperator, u: np.ndarray) -> np.ndarray:
    vals = np.zeros(len(op.domain.points))
    vals[op.domain.interior_mask] = np.asarray(u, dtype=float).reshape(-1)
    return vals


def kernel_form(op: AssembledOperator, u: np.ndarray, v: np.ndarray | None = None,
                region_mask: np.ndarray | None = None) -> float:
    """Discrete double-sum energy 1/2 Sum W_ij du dv (h^N included once).

    Default region: every pair with at least one point in the domain,
    plus the beyond-box mass  Sum u_i v_i T_i  (functions vanish outside
    the interior).  With ``region_mask`` (over interior nodes) the sum
    runs over pairs inside the masked region only, without tails.
    """
    v = u if v is None else v
    vol = op.domain.cell_volume
    if region_mask is None:
        uf = _full_values(op, u)
        vf = _full_values(op, v)
        du = uf[None, :] - uf[:, None]
        dv = vf[None, :] - vf[:, None]
        inner = 0.5 * float(np.einsum("ij,ij,ij->", op.pair_weights, du, dv))
        tail = float(np.sum(uf * vf * op.box_tail))
        return (inner + tail) * vol
    mask = np.asarray(region_mask, dtype=bool)
    sub = op.pair_weights[np.ix_(op.domain.interior_mask, op.domain.interior_mask)]
    sub = sub[np.ix_(mask, mask)]
    uu = np.asarray(u, dtype=float)[mask]
    vv = np.asarray(v, dtype=float)[mask]
    du = uu[None, :] - uu[:, None]
    dv = vv[None, :] - vv[:, None]
    return 0.5 * float(np.einsum("ij,ij,ij->", sub, du, dv)) * vol


def seminorm(op: AssembledOperator, u: np.ndarray,
             region_mask: np.ndarray | None = None) -> float:
    """Square root of the kernel energy of u."""
    return math.sqrt(max(kernel_form(op, u, u, region_mask), 0.0))


def graph_form(weights: np.ndarray, u: np.ndarray, v: np.ndarray | None = None,
               cell_volume: float = 1.0) -> float:
    """Pure pair form 1/2 Sum W_ij du dv with no exterior terms."""
    v = u if v is None else v
    du = u[None, :] - u[:, None]
    dv = v[None, :] - v[:, None]
    return 0.5 * float(np.einsum("ij,ij,ij->", weights, du, dv)) * cell_volume


# --------------------------------------------------------------------------
# solves


def estimate_shift(op: AssembledOperator, margin: float = 1.0) -> float:
    """Shift C making C*I - (L + B + V) strictly row diagonally dominant."""
    M = op.matrix
    off = np.abs(M).sum(axis=1) - np.abs(np.diag(M))
    return float(max(0.0, (np.diag(M) + off).max()) + margin)


def dirichlet_solve(op: AssembledOperator, C: float, rhs: np.ndarray,
                    residual_tol: float = 1e-6) -> tuple[GridFunction, float]:
    """Solve (L + B + V - C) u = rhs on the interior nodes.

    Returns the solution and the achieved residual sup-norm.  A relative
    residual above ``residual_tol`` raises SolverError with a condition
    estimate.
    """
    from scipy.linalg import solve as _dsolve

    rhs = np.asarray(rhs, dtype=float).reshape(op.n)
    M = op.matrix - C * np.eye(op.n)
    try:
        u = _dsolve(M, rhs)
    except Exception as exc:  # singular factorization
        raise SolverError(f"linear solve failed: {exc}") from exc
    res = float(np.abs(M @ u - rhs).max())
    scale = max(float(np.abs(rhs).max()), float(np.abs(u).max()), 1e-30)
    if not np.isfinite(res) or res > residual_tol * scale:
        cond = float(np.linalg.cond(M))
        raise SolverError(f"ill-conditioned system: residual {res:.2e}, cond {cond:.2e}")
    return GridFunction(op.domain, u), res
