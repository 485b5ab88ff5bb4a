"""Velocity-grid discretization of the linear bath operator.

The gain part of the bath operator has the integral representation

    L+ f(v) = integral of f(w) k(v, w) dw,

where k is built from a planar integral of the bath density F1: with
gamma_c and gamma_bar the pre-collision stretch factors and
g = (1 - 2 gamma_bar) / (2 gamma_c),

    k(v, w) = 1 / (4 pi lambda e^2 gamma_c^2 |v - w|)
              * integral of F1 over the plane through v + g (w - v)
                orthogonal to (w - v).

(Equivalently 1 / (4 pi lambda kappa^2 |v - w|): e gamma_c = kappa is an
identity.)  The normalization is fixed by the column identity

    integral of k(v, w) dv = nu(w),

i.e. gain and loss balance so the operator conserves mass; the 1/(4 pi)
is the uniform sphere average in the collision kernel and 1/lambda is the
mean-free-path scale of nu.  For a Maxwellian bath the planar integral
collapses to a 1-D Gaussian marginal, giving the closed form used
throughout; an independent 2-D tensor quadrature of the same planar
integral serves as its oracle.

On a cube grid the loss term is exact (nu at nodes) and the gain matrix
K[i][j] = k(v_i, v_j) h^3 gets its singular diagonal renormalized per
column so every column sums to nu exactly: the discrete operator then
conserves mass for every f, and the kernel's detailed balance at e = 1,
m1 = 1 makes the grid Maxwellian an exact nodewise fixed point.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .background import BathParams, bath_density, nu
from .kinematics import RestitutionParams, _orthonormal_frame

__all__ = [
    "KernelGrid",
    "SteadyState",
    "CompareReport",
    "KernelBuildError",
    "ConvergenceError",
    "kernel",
    "kernel_closed_form",
    "kernel_quadrature",
    "make_grid",
    "apply_l",
    "steady_state",
    "compare_dsmc",
    "write_grid_csv",
]

log = logging.getLogger(__name__)

Array = np.ndarray

_DENSE_LIMIT = 5000  # grids up to this many nodes keep the dense matrix


class KernelBuildError(RuntimeError):
    """Raised when the discrete kernel cannot be assembled consistently."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration failed; carries the last iterate and residual."""

    def __init__(self, message: str, last_iterate: Array, residual: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


def _stretch_offset(restitution: RestitutionParams) -> float:
    """The plane offset g = (1 - 2 gamma_bar) / (2 gamma_c)."""
    return (1.0 - 2.0 * restitution.gamma_bar) / (2.0 * restitution.gamma_c)


def _kernel_safe(
    v: Array, w: Array, restitution: RestitutionParams, bath: BathParams
) -> Array:
    """Closed-form kernel with the r = 0 diagonal mapped to 0.

    Grid assembly evaluates all node pairs at once; the coincident pairs are
    exactly the diagonal entries, which the column renormalization replaces
    anyway, so returning 0 there gives the off-diagonal sums directly.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    d = w - v
    r = np.linalg.norm(d, axis=-1)
    zero = r == 0.0
    r_safe = np.where(zero, 1.0, r)
    g = _stretch_offset(restitution)
    s2 = bath.theta1 / bath.m1
    # Signed distance from u1 to the plane through v + g (w - v), normal
    # along (w - v); the planar Gaussian integral is the 1-D marginal there.
    p = np.sum((v - bath.u1) * d, axis=-1) / r_safe + g * r
    pref = 1.0 / (
        4.0 * math.pi * bath.lambda_
        * restitution.e**2 * restitution.gamma_c**2 * r_safe
    )
    out = pref * np.exp(-0.5 * p**2 / s2) / math.sqrt(2.0 * math.pi * s2)
    return np.where(zero, 0.0, out)


def kernel_closed_form(
    v: Array, w: Array, restitution: RestitutionParams, bath: BathParams
) -> Array:
    """Scattering kernel k(v, w) for a Maxwellian bath (closed form).

    Broadcasts over leading dimensions of (..., 3) inputs.  Singular on the
    diagonal: |v - w| = 0 raises.
    """
    if bath.kind != "maxwellian":
        raise ValueError("closed-form kernel requires a Maxwellian bath")
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(np.linalg.norm(np.asarray(w) - v, axis=-1) == 0.0):
        raise ValueError("kernel is singular at v = w")
    return _kernel_safe(v, w, restitution, bath)


def kernel_quadrature(
    v: Array,
    w: Array,
    restitution: RestitutionParams,
    bath: BathParams,
    n_quad: int = 96,
    span: float = 11.0,
) -> float:
    """Scattering kernel via direct 2-D quadrature of the planar integral.

    Independent oracle for :func:`kernel_closed_form` (and the fallback for
    non-Maxwellian baths): tensor Gauss-Legendre quadrature of the bath
    density over the plane through v + g (w - v) orthogonal to w - v,
    centered on the in-plane projection of the bath mean and spanning
    ``span`` thermal widths each way.
    """
    v = np.asarray(v, dtype=float).reshape(3)
    w = np.asarray(w, dtype=float).reshape(3)
    d = w - v
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise ValueError("kernel is singular at v = w")
    e_hat = d / r
    g = _stretch_offset(restitution)
    x0 = v + g * d
    e1, e2 = _orthonormal_frame(e_hat)
    # Center the rule where the in-plane Gaussian mass sits.
    rel = bath.u1 - x0
    center = x0 + (rel @ e1) * e1 + (rel @ e2) * e2
    s = bath.sigma_th
    x, wts = np.polynomial.legendre.leggauss(n_quad)
    a = span * s * x
    wa = span * s * wts
    pts = (
        center
        + a[:, None, None] * e1[None, None, :]
        + a[None, :, None] * e2[None, None, :]
    )
    dens = bath_density(bath, pts.reshape(-1, 3)).reshape(n_quad, n_quad)
    planar = float(wa @ dens @ wa)
    pref = 1.0 / (
        4.0 * math.pi * bath.lambda_ * restitution.e**2 * restitution.gamma_c**2 * r
    )
    return pref * planar


def kernel(
    v: Array,
    w: Array,
    restitution: RestitutionParams,
    bath: BathParams,
    method: str = "closed",
) -> Array | float:
    """Kernel dispatch: closed form (Maxwellian) or planar quadrature."""
    if method == "closed":
        return kernel_closed_form(v, w, restitution, bath)
    if method == "quadrature":
        return kernel_quadrature(v, w, restitution, bath)
    raise ValueError(f"method must be 'closed' or 'quadrature', got {method!r}")


@dataclass
class KernelGrid:
    """Cube velocity grid carrying the discretized bath operator.

    Node coordinates are cell centers u1 + (i - (n-1)/2) h per axis with
    h = 2 extent_sigma sqrt(Theta1/m1) / n; even n keeps nodes off the
    symmetry planes.  Small grids store the dense matrix ``dense`` (with the
    renormalized diagonal in place); all grids centered on a Maxwellian bath
    carry the octahedral orbit reduction (``reduced``), which is what makes
    48^3 steady-state iteration affordable.
    """

    restitution: RestitutionParams
    bath: BathParams
    n: int
    extent_sigma: float
    axes: list[Array]
    nodes: Array
    h: float
    nu_vec: Array
    diag: Array  # renormalized diagonal entries, per node
    dense: Array | None
    orbit_index: Array  # node -> orbit id
    orbit_mult: Array  # orbit -> node count
    rep_index: Array  # orbit -> representative node
    reduced: Array | None  # (n_orb, n_orb): row r = sums of K[rep_r, .] per orbit

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def cell_volume(self) -> float:
        return self.h**3

    def edges(self) -> list[Array]:
        return [
            np.concatenate([ax - 0.5 * self.h, [ax[-1] + 0.5 * self.h]])
            for ax in self.axes
        ]

    def apply_l(self, f: Array) -> Array:
        """(K f)_i - nu_i f_i for node values f (any f, symmetric or not)."""
        f = np.asarray(f, dtype=float).reshape(-1)
        if f.size != self.n_nodes:
            raise ValueError(f"expected {self.n_nodes} node values, got {f.size}")
        if self.dense is not None:
            return self.dense @ f - self.nu_vec * f
        gain = np.empty(self.n_nodes)
        h3 = self.cell_volume
        step = max(1, int(2e6) // self.n_nodes)
        for lo in range(0, self.n_nodes, step):
            hi = min(lo + step, self.n_nodes)
            block = _kernel_safe(
                self.nodes[lo:hi, None, :], self.nodes[None, :, :],
                self.restitution, self.bath,
            )
            gain[lo:hi] = block @ f * h3
        gain += self.diag * f * h3
        return gain - self.nu_vec * f

    def maxwellian(self) -> Array:
        """Grid Maxwellian at (u1, Theta1/m1), normalized to unit cell mass."""
        f = bath_density(self.bath, self.nodes)
        return f / (f.sum() * self.cell_volume)


def _orbit_decomposition(n: int) -> tuple[Array, Array, Array]:
    """Octahedral orbits of the centered cube grid.

    Nodes with the same sorted absolute coordinate triple (in units of h,
    which are half-integers for even n) map into each other under the 48
    axis permutations and sign flips that fix the bath mean; the kernel and
    nu are invariant under these, so one representative per orbit suffices.
    """
    # Doubled offsets are odd (even n) or general (odd n) integers: exact keys.
    offsets2 = 2 * np.arange(n) - (n - 1)
    gx, gy, gz = np.meshgrid(offsets2, offsets2, offsets2, indexing="ij")
    triples = np.stack([np.abs(gx.ravel()), np.abs(gy.ravel()), np.abs(gz.ravel())], axis=1)
    triples.sort(axis=1)
    _, orbit_index, orbit_mult = np.unique(
        triples, axis=0, return_inverse=True, return_counts=True
    )
    orbit_index = orbit_index.reshape(-1)
    n_orb = orbit_mult.size
    seen_order = np.argsort(orbit_index, kind="stable")
    first = np.searchsorted(orbit_index[seen_order], np.arange(n_orb))
    rep_index = seen_order[first]
    return orbit_index, orbit_mult, rep_index


_DEFECT_LIMIT = 0.05


def _check_column_defect(defect: Array, nu_col: Array) -> None:
    """Reject kernels whose lattice column sums overshoot nu grossly.

    ``defect = nu - sum_i k(v_i, w) h^3`` is what column renormalization
    places on the diagonal.  Midpoint quadrature on far-tail columns can
    leave it marginally negative (sub-percent of nu); a defect beyond a few
    percent of nu means the kernel itself is mis-normalized.
    """
    rel = defect / nu_col
    worst = float(rel.min())
    if worst < -_DEFECT_LIMIT:
        raise KernelBuildError(
            f"kernel column sums overshoot nu by {-worst:.3e} (relative); "
            f"the closed-form kernel is mis-normalized"
        )


def make_grid(
    restitution: RestitutionParams,
    bath: BathParams,
    n: int = 48,
    extent_sigma: float = 8.0,
    build_reduced: bool | None = None,
) -> KernelGrid:
    """Assemble the discrete operator on an n^3 grid spanning +-extent_sigma
    thermal widths around the bath mean.

    The singular diagonal of the gain matrix is renormalized per column so
    that column j sums exactly to nu_j.  This keeps the assembled operator
    mass-conserving for every density and makes the elastic equal-mass
    Maxwellian an exact fixed point.  On interior columns the renormalized
    diagonal is positive; on far-tail columns (several thermal widths out,
    where the kernel is a thin ridge in the gain variable) the midpoint
    lattice sum can overshoot the continuum column integral by up to ~1% of
    nu, leaving a marginally negative diagonal there.  That overshoot is a
    benign quadrature artifact; the build only fails when the defect exceeds
    a few percent of nu, which indicates a genuinely wrong kernel rather
    than coarse resolution.
    """
    if bath.kind != "maxwellian":
        raise ValueError("kernel grids require a Maxwellian bath")
    if n < 4:
        raise ValueError(f"grid needs at least 4 nodes per axis, got {n}")
    s = bath.sigma_th
    h = 2.0 * extent_sigma * s / n
    offsets = (np.arange(n) - 0.5 * (n - 1)) * h
    axes = [bath.u1[d] + offsets for d in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    n_nodes = nodes.shape[0]
    nu_vec = nu(bath, nodes)
    h3 = h**3

    orbit_index, orbit_mult, rep_index = _orbit_decomposition(n)
    n_orb = orbit_mult.size
    if build_reduced is None:
        build_reduced = n_nodes > _DENSE_LIMIT

    dense = None
    reduced = None
    if n_nodes <= _DENSE_LIMIT:
        kmat = _kernel_safe(
            nodes[:, None, :], nodes[None, :, :], restitution, bath
        ) * h3
        col = kmat.sum(axis=0)
        diag = (nu_vec - col) / h3
        _check_column_defect(diag * h3, nu_vec)
        kmat[np.arange(n_nodes), np.arange(n_nodes)] = diag * h3
        dense = kmat
    else:
        # Column sums are orbit-invariant: compute them for representative
        # columns only, in row blocks against all nodes.
        reps = rep_index
        col_rep = np.zeros(n_orb)
        step = max(1, int(4e6) // n_orb)
        for lo in range(0, n_nodes, step):
            hi = min(lo + step, n_nodes)
            block = _kernel_safe(
                nodes[lo:hi, None, :], nodes[None, reps, :], restitution, bath
            )
            col_rep += block.sum(axis=0)
        col_rep *= h3
        diag_orb = (nu_vec[reps] - col_rep) / h3
        _check_column_defect(diag_orb * h3, nu_vec[reps])
        diag = diag_orb[orbit_index]
        if build_reduced:
            reduced = np.zeros((n_orb, n_orb))
            step = max(1, int(4e6) // n_nodes)
            for lo in range(0, n_orb, step):
                hi = min(lo + step, n_orb)
                block = _kernel_safe(
                    nodes[reps[lo:hi], None, :], nodes[None, :, :], restitution, bath
                ) * h3
                for i, row in enumerate(block):
                    reduced[lo + i] = np.bincount(orbit_index, weights=row, minlength=n_orb)
            reduced[np.arange(n_orb), orbit_index[reps]] += diag_orb * h3
    if dense is not None and build_reduced:
        reduced = np.zeros((n_orb, n_orb))
        for i, rep in enumerate(rep_index):
            reduced[i] = np.bincount(orbit_index, weights=dense[rep], minlength=n_orb)
    return KernelGrid(
        restitution=restitution, bath=bath, n=n, extent_sigma=extent_sigma,
        axes=axes, nodes=nodes, h=h, nu_vec=nu_vec, diag=diag, dense=dense,
        orbit_index=orbit_index, orbit_mult=orbit_mult, rep_index=rep_index,
        reduced=reduced,
    )


def apply_l(grid: KernelGrid, f: Array) -> Array:
    """Module-level alias for :meth:`KernelGrid.apply_l`."""
    return grid.apply_l(f)


@dataclass(frozen=True)
class SteadyState:
    """Normalized nonnegative fixed point of the discrete bath operator."""

    f: Array
    theta: float
    u: Array
    iterations: int
    residual: float


def _grid_moments(grid: KernelGrid, f: Array) -> tuple[Array, float]:
    h3 = grid.cell_volume
    u = grid.nodes.T @ f * h3
    theta = float(np.sum(f * np.sum((grid.nodes - u) ** 2, axis=1)) * h3 / 3.0)
    return u, theta


def steady_state(
    grid: KernelGrid,
    f0: Array | None = None,
    tol: float = 1e-10,
    max_iter: int = 50_000,
) -> SteadyState:
    """Fixed-point iteration F <- normalize(diag(nu)^-1 K F) to the steady state.

    Nonnegativity and unit mass hold at every iterate (negative values the
    marginally negative far-tail diagonal may produce are clipped before
    normalization); successive-iterate L1 distance below ``tol`` stops the
    loop.  With no ``f0`` the iteration starts from the grid Maxwellian:
    the L1 stopping rule weights far-tail nodes by their (tiny) density, so
    a start many orders of magnitude off there -- a flat start is ~1e25 off
    at the corners -- would stop while the tail is still relatively wrong,
    whereas the Maxwellian start is exact in the elastic equal-mass case
    and tail-accurate otherwise.  With no ``f0`` the iteration also runs in
    the octahedral-orbit subspace when the reduced matrix is available (the
    steady state is symmetric; asymmetric initial data can be supplied
    explicitly to exercise uniqueness, which requires the dense path).
    """
    h3 = grid.cell_volume
    if f0 is None and grid.reduced is not None:
        mult = grid.orbit_mult.astype(float)
        nu_rep = grid.nu_vec[grid.rep_index]
        g = grid.maxwellian()[grid.rep_index]
        g /= float((mult * g).sum() * h3)
        for it in range(1, max_iter + 1):
            g_new = np.maximum(grid.reduced @ g / nu_rep, 0.0)
            g_new /= float((mult * g_new).sum() * h3)
            dist = float((mult * np.abs(g_new - g)).sum() * h3)
            g = g_new
            if dist < tol:
                f = g[grid.orbit_index]
                u, theta = _grid_moments(grid, f)
                return SteadyState(f=f, theta=theta, u=u, iterations=it, residual=dist)
        raise ConvergenceError(
            f"no convergence after {max_iter} iterations (residual {dist:.3e})",
            last_iterate=g[grid.orbit_index], residual=dist,
        )
    if grid.dense is None:
        raise ValueError(
            "explicit initial data needs the dense matrix; build a smaller grid"
        )
    if f0 is None:
        f = grid.maxwellian()
    else:
        f = np.array(f0, dtype=float).reshape(-1)
        if f.size != grid.n_nodes or np.any(f < 0.0) or f.sum() <= 0.0:
            raise ValueError("f0 must be nonnegative node values with positive mass")
    f /= f.sum() * h3
    for it in range(1, max_iter + 1):
        f_new = np.maximum(grid.dense @ f / grid.nu_vec, 0.0)
        f_new /= f_new.sum() * h3
        dist = float(np.sum(np.abs(f_new - f)) * h3)
        f = f_new
        if dist < tol:
            u, theta = _grid_moments(grid, f)
            return SteadyState(f=f, theta=theta, u=u, iterations=it, residual=dist)
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (residual {dist:.3e})",
        last_iterate=f, residual=dist,
    )


@dataclass(frozen=True)
class CompareReport:
    """Cross-validation of the grid operator against short DSMC evolutions."""

    l1_operator_distance: float
    theta_rate_grid: float
    theta_rate_dsmc: float
    theta_rate_dsmc_se: float
    energy_rate_grid: float
    energy_rate_analytic: float
    energy_rate_analytic_se: float
    mass_rate_grid: float
    mass_rate_dsmc: float
    outside_fraction: float


def _histogram_on_grid(grid: KernelGrid, velocities: Array) -> tuple[Array, float]:
    counts, _ = np.histogramdd(velocities, bins=grid.edges())
    inside = float(counts.sum())
    frac_out = 1.0 - inside / velocities.shape[0]
    if inside == 0.0:
        raise ValueError("no particles inside the grid box (support mismatch)")
    f = counts.ravel() / (inside * grid.cell_volume)  # unit mass inside the box
    return f, frac_out


def compare_dsmc(
    velocities: Array,
    grid: KernelGrid,
    dt: float = 5e-3,
    n_reps: int = 8,
    n_bath_draws: int = 64,
    seed: int = 1234,
    max_outside: float = 5e-3,
) -> CompareReport:
    """Compare the grid operator with direct simulation on the same sample.

    The ensemble is histogrammed onto the grid (raising if more than
    ``max_outside`` of the particles fall outside); the report contains the
    L1 distance between apply_l(fhat) and a finite-difference estimate of
    L f from two short bath sweeps, the temperature rate from both routes
    (DSMC rate averaged over ``n_reps`` independent replicas with its
    standard error), the fixed-center energy rate against the per-sample
    analytic collision average, and the mass rates (exactly zero for DSMC;
    machine-zero for the renormalized grid operator).
    """
    from .background import abs_moment
    from .dsmc import _MajorantOverflow, step_l  # avoid a module cycle

    vel = np.asarray(velocities, dtype=float)
    n = vel.shape[0]
    f_hat, frac_out = _histogram_on_grid(grid, vel)
    if frac_out > max_outside:
        raise ValueError(
            f"{frac_out:.2%} of particles outside the grid box (support mismatch)"
        )
    lf = grid.apply_l(f_hat)
    h3 = grid.cell_volume
    bath, rest = grid.bath, grid.restitution

    # Grid-side rates from the weak form of the discrete operator.
    mass_rate_grid = float(lf.sum() * h3)
    u_hat = grid.nodes.T @ f_hat * h3
    m2_rate = float(lf @ np.sum(grid.nodes**2, axis=1) * h3)
    u_rate = grid.nodes.T @ lf * h3
    theta_rate_grid = (m2_rate - 2.0 * float(u_hat @ u_rate)) / 3.0
    c = grid.nodes - bath.u1
    energy_rate_grid = float(lf @ np.sum(c**2, axis=1) * h3)

    # DSMC finite differences, replicated for an honest error bar.
    rng = np.random.default_rng(seed)
    rel_max = float(np.linalg.norm(vel - bath.u1, axis=1).max())
    l_max = 1.25 * (rel_max + 4.0 * abs_moment(bath, 1))
    theta0 = float(np.sum((vel - vel.mean(axis=0)) ** 2) / (3.0 * n))
    theta_rates = np.empty(n_reps)
    f_diff = np.zeros_like(f_hat)
    for rep in range(n_reps):
        work = vel.copy()
        for _attempt in range(32):
            try:
                step_l(work, dt, rest, bath, l_max, rng)
                break
            except _MajorantOverflow as exc:
                l_max = max(1.5 * l_max, 1.1 * exc.observed)
                work = vel.copy()
        u_w = work.mean(axis=0)
        theta_w = float(np.sum((work - u_w) ** 2) / (3.0 * n))
        theta_rates[rep] = (theta_w - theta0) / dt
        f_w, _ = _histogram_on_grid(grid, work)
        f_diff += (f_w - f_hat) / dt
    f_diff /= n_reps
    l1_dist = float(np.sum(np.abs(lf - f_diff)) * h3)

    # Analytic fixed-center energy rate: the per-collision average of
    # |v - u1|^2 change is 2 kappa^2 |q|^2 - 2 kappa <q, v - u1>, integrated
    # against |q| F1(w) / lambda; Monte Carlo over independent bath-draw
    # replicas gives the value and its standard error.
    kappa = rest.kappa
    rates = np.empty(n_reps)
    for rep in range(n_reps):
        w_draws = bath.u1 + bath.sigma_th * rng.standard_normal((n_bath_draws, 3))
        acc = 0.0
        for lo in range(0, n, 20_000):
            chunk = vel[lo : lo + 20_000]
            q = chunk[:, None, :] - w_draws[None, :, :]
            qn = np.linalg.norm(q, axis=-1)
            inner = np.sum(q * (chunk[:, None, :] - bath.u1), axis=-1)
            acc += float(np.sum(qn * (2.0 * kappa**2 * qn**2 - 2.0 * kappa * inner)))
        rates[rep] = acc / (n * n_bath_draws * bath.lambda_)
    energy_rate_analytic = float(rates.mean())
    energy_rate_analytic_se = float(rates.std(ddof=1) / math.sqrt(n_reps))

    return CompareReport(
        l1_operator_distance=l1_dist,
        theta_rate_grid=theta_rate_grid,
        theta_rate_dsmc=float(theta_rates.mean()),
        theta_rate_dsmc_se=float(theta_rates.std(ddof=1) / math.sqrt(n_reps)),
        energy_rate_grid=energy_rate_grid,
        energy_rate_analytic=energy_rate_analytic,
        energy_rate_analytic_se=energy_rate_analytic_se,
        mass_rate_grid=mass_rate_grid,
        mass_rate_dsmc=0.0,
        outside_fraction=frac_out,
    )


def write_grid_csv(path: str | Path, grid: KernelGrid, f: Array) -> None:
    """Write node values in the tabulated-density CSV format (round-trip capable)."""
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size != grid.n_nodes:
        raise ValueError(f"expected {grid.n_nodes} node values, got {f.size}")
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("vx,vy,vz,density\n")
        for node, value in zip(grid.nodes, f):
            fh.write(
                f"{float(node[0])!r},{float(node[1])!r},"
                f"{float(node[2])!r},{float(value)!r}\n"
            )
