"""Collision maps and sphere-averaged collision kernels for a granular gas.

A gas particle (unit mass) collides inelastically either with another gas
particle (restitution coefficient ``epsilon``) or with a thermal-bath
particle of mass ``m1`` (restitution coefficient ``e``).  Post-collision
velocities follow from momentum conservation plus the restitution law
``(v' - w') . n = -e (v - w) . n`` for the normal component of the relative
velocity.

The sphere averages are weak-form building blocks: for a test function
``psi`` they integrate the collision gain over all impact directions with a
Gauss-Legendre (polar) x uniform-angle (azimuthal) product rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "RestitutionParams",
    "VelocityPair",
    "collide_q",
    "collide_l_sigma",
    "collide_l_n",
    "sphere_quadrature",
    "sphere_average_q",
    "sphere_average_l",
    "energy_split_check",
]

Array = np.ndarray

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class RestitutionParams:
    """Restitution coefficients and the derived collision coefficients.

    Parameters
    ----------
    epsilon : float
        Gas-gas restitution coefficient, in (0, 1].  epsilon = 1 is elastic.
    e : float
        Gas-bath restitution coefficient, in (0, 1].
    m1 : float
        Mass of a bath particle; gas particles have unit mass.

    Derived fields (computed, never passed in): ``zeta = (1+epsilon)/2``,
    ``alpha = m1/(1+m1)`` (reduced-mass weight), ``beta = (1-e)/2``,
    ``kappa = alpha*(1-beta)`` (momentum-transfer coefficient of the bath
    collision), and the pre-collision stretch factors
    ``gamma_c = kappa/(1-2*beta)``, ``gamma_bar = (1-alpha)*(1-beta)/(1-2*beta)``
    (note ``1 - 2*beta = e``, so e > 0 keeps them finite).
    """

    epsilon: float
    e: float
    m1: float
    zeta: float = field(init=False)
    alpha: float = field(init=False)
    beta: float = field(init=False)
    kappa: float = field(init=False)
    gamma_c: float = field(init=False)
    gamma_bar: float = field(init=False)

    def __post_init__(self) -> None:
        for name in ("epsilon", "e", "m1"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not 0.0 < self.e <= 1.0:
            raise ValueError(f"e must lie in (0, 1], got {self.e}")
        if self.m1 <= 0.0:
            raise ValueError(f"m1 must be positive, got {self.m1}")
        object.__setattr__(self, "zeta", 0.5 * (1.0 + self.epsilon))
        object.__setattr__(self, "alpha", self.m1 / (1.0 + self.m1))
        object.__setattr__(self, "beta", 0.5 * (1.0 - self.e))
        object.__setattr__(self, "kappa", self.alpha * (1.0 - self.beta))
        object.__setattr__(self, "gamma_c", self.kappa / (1.0 - 2.0 * self.beta))
        object.__setattr__(
            self,
            "gamma_bar",
            (1.0 - self.alpha) * (1.0 - self.beta) / (1.0 - 2.0 * self.beta),
        )

    def derived_residual(self) -> float:
        """Largest mismatch between stored derived fields and a recomputation."""
        fresh = RestitutionParams(self.epsilon, self.e, self.m1)
        names = ("zeta", "alpha", "beta", "kappa", "gamma_c", "gamma_bar")
        return max(abs(getattr(self, n) - getattr(fresh, n)) for n in names)


class VelocityPair(NamedTuple):
    """A (v, w) velocity pair; each entry has trailing dimension 3."""

    v: Array
    w: Array


def _check_unit(direction: Array, name: str) -> None:
    norms = np.linalg.norm(direction, axis=-1)
    bad = np.abs(norms - 1.0) > _UNIT_TOL
    if np.any(bad):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(
            f"{name} must be a unit vector (|1 - |{name}|| <= {_UNIT_TOL:g}); "
            f"worst deviation {worst:.3e}"
        )


def collide_q(v: Array, w: Array, sigma: Array, params: RestitutionParams) -> VelocityPair:
    """Gas-gas collision with post-collision direction ``sigma``.

    v' = v + (zeta/2)(|q| sigma - q),  w' = w - (zeta/2)(|q| sigma - q),
    q = v - w.  Momentum v + w is conserved exactly; for |q| = 0 the map is
    the identity.  Broadcasts over leading dimensions.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check_unit(sigma, "sigma")
    q = v - w
    qn = np.linalg.norm(q, axis=-1, keepdims=True)
    delta = 0.5 * params.zeta * (qn * sigma - q)
    return VelocityPair(v + delta, w - delta)


def collide_l_sigma(v: Array, w: Array, sigma: Array, params: RestitutionParams) -> VelocityPair:
    """Gas-bath collision in the center-of-mass (sigma) parametrization.

    v* = v - alpha(1-beta)(q - |q| sigma),
    w* = w + (1-alpha)(1-beta)(q - |q| sigma),  q = v - w.
    Conserves v + m1 w exactly; identity for |q| = 0.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check_unit(sigma, "sigma")
    q = v - w
    qn = np.linalg.norm(q, axis=-1, keepdims=True)
    d = q - qn * sigma
    v_post = v - params.kappa * d
    w_post = w + (1.0 - params.alpha) * (1.0 - params.beta) * d
    return VelocityPair(v_post, w_post)


def collide_l_n(v: Array, w: Array, n: Array, params: RestitutionParams) -> VelocityPair:
    """Gas-bath collision in the impact-direction (n) parametrization.

    v* = v - 2 alpha(1-beta)(q.n) n,  w* = w + 2(1-alpha)(1-beta)(q.n) n.
    Equivalent to the sigma form after the change of variables
    sigma = q/|q| - 2(q.n/|q|) n; same conservation properties.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    n = np.asarray(n, dtype=float)
    _check_unit(n, "n")
    q = v - w
    c = np.sum(q * n, axis=-1, keepdims=True)
    v_post = v - 2.0 * params.kappa * c * n
    w_post = w + 2.0 * (1.0 - params.alpha) * (1.0 - params.beta) * c * n
    return VelocityPair(v_post, w_post)


def _orthonormal_frame(axis: Array) -> tuple[Array, Array]:
    """Two unit vectors completing ``axis`` to a right-handed frame."""
    # Pick the coordinate axis least aligned with `axis` to avoid degeneracy.
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(axis)))] = 1.0
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def sphere_quadrature(
    order: int,
    axis: Array | None = None,
    split_equator: bool = False,
) -> tuple[Array, Array]:
    """Product quadrature on the unit sphere.

    Gauss-Legendre with ``order`` nodes in the polar cosine and ``order``
    uniformly spaced azimuthal angles (the periodic trapezoid rule).  Exact
    for spherical polynomials of degree <= min(2*order - 1, order - 1).

    Parameters
    ----------
    order : int
        Nodes per factor; must be >= 2.
    axis : array, optional
        Unit polar axis.  Defaults to the lab z-axis.
    split_equator : bool
        Apply Gauss-Legendre separately on each hemisphere, so integrands
        with an |cos theta| kink at the equator are handled at full order.

    Returns
    -------
    (nodes, weights) : nodes of shape (M, 3), weights of shape (M,) summing
    to 4 pi.
    """
    if order < 2:
        raise ValueError(f"quadrature order must be >= 2, got {order}")
    x, wx = np.polynomial.legendre.leggauss(order)
    if split_equator:
        # Affine maps of the [-1, 1] rule onto [-1, 0] and [0, 1].
        x = np.concatenate((0.5 * (x - 1.0), 0.5 * (x + 1.0)))
        wx = np.concatenate((0.5 * wx, 0.5 * wx))
    phi = 2.0 * math.pi * np.arange(order) / order
    if axis is None:
        e1 = np.array([1.0, 0.0, 0.0])
        e2 = np.array([0.0, 1.0, 0.0])
        e3 = np.array([0.0, 0.0, 1.0])
    else:
        e3 = np.asarray(axis, dtype=float)
        _check_unit(e3, "axis")
        e1, e2 = _orthonormal_frame(e3)
    sin_theta = np.sqrt(np.clip(1.0 - x**2, 0.0, None))
    cp, sp = np.cos(phi), np.sin(phi)
    # Outer products: polar index first, then azimuthal, flattened.
    nodes = (
        (sin_theta[:, None] * cp[None, :])[..., None] * e1
        + (sin_theta[:, None] * sp[None, :])[..., None] * e2
        + (x[:, None] * np.ones_like(cp)[None, :])[..., None] * e3
    ).reshape(-1, 3)
    weights = (wx[:, None] * np.full_like(cp, 2.0 * math.pi / order)[None, :]).reshape(-1)
    return nodes, weights


def sphere_average_q(
    psi: Callable[[Array], Array],
    v: Array,
    w: Array,
    params: RestitutionParams,
    order: int = 64,
) -> float:
    """Sphere-averaged weak form of a gas-gas collision.

    Returns (1/4pi) * integral over sigma of
    psi(v') + psi(w') - psi(v) - psi(w).

    For psi = 1 or psi = v this vanishes identically; for psi = |v|^2 it
    equals -zeta(1-zeta)|q|^2 = -(1-epsilon^2)/4 |q|^2.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    q = v - w
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        return 0.0
    sig, wts = sphere_quadrature(order)
    delta = 0.5 * params.zeta * (qn * sig - q)
    gain = psi(v + delta) + psi(w - delta)
    base = float(psi(v[None, :])[0] + psi(w[None, :])[0])
    return float(np.dot(wts, gain) / (4.0 * math.pi) - base)


def sphere_average_l(
    psi: Callable[[Array], Array],
    v: Array,
    w: Array,
    params: RestitutionParams,
    order: int = 64,
    form: str = "both",
    check_tol: float = 1e-6,
) -> float:
    """Sphere-averaged weak form of a gas-bath collision (tagged particle).

    form="sigma": (1/4pi) * integral over sigma of psi(v*) - psi(v) with the
    center-of-mass map.  form="n": (1/2pi) * integral over n of
    |qhat . n| (psi(v*) - psi(v)) with the impact-direction map.  The two
    parametrizations represent the same average; the default form="both"
    evaluates both quadratures, raises if they disagree beyond ``check_tol``
    (relative to the larger magnitude, floored at 1), and returns the
    sigma-form value.  For psi(x) = |x - u1|^2 the average equals
    2 kappa^2 |q|^2 - 2 kappa <q, v - u1>
    = -2 kappa (1 - kappa) |q|^2 - 2 kappa <q, w - u1>.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    q = v - w
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        return 0.0
    if form not in ("sigma", "n", "both"):
        raise ValueError(f"form must be 'sigma', 'n' or 'both', got {form!r}")
    value_sigma = value_n = None
    if form in ("sigma", "both"):
        sig, wts = sphere_quadrature(order)
        d = q - qn * sig
        v_post = v - params.kappa * d
        base = float(psi(v[None, :])[0])
        value_sigma = float(np.dot(wts, psi(v_post) - base) / (4.0 * math.pi))
    if form in ("n", "both"):
        qhat = q / qn
        # |qhat . n| has a kink at the equator: split the polar rule there.
        n, wts = sphere_quadrature(order, axis=qhat, split_equator=True)
        mu = n @ qhat
        c = qn * mu  # q . n
        v_post = v - 2.0 * params.kappa * c[:, None] * n
        base = float(psi(v[None, :])[0])
        value_n = float(np.dot(wts * np.abs(mu), psi(v_post) - base) / (2.0 * math.pi))
    if form == "sigma":
        return value_sigma
    if form == "n":
        return value_n
    scale = max(1.0, abs(value_sigma), abs(value_n))
    if abs(value_sigma - value_n) > check_tol * scale:
        raise RuntimeError(
            "sigma- and n-parametrizations of the bath collision average "
            f"disagree: {value_sigma!r} vs {value_n!r} at order {order}"
        )
    return value_sigma


def energy_split_check(
    v: Array,
    w: Array,
    v_post: Array,
    w_post: Array,
    params: RestitutionParams,
) -> tuple[float | Array, float | Array]:
    """Check the exact energy split of a gas-bath collision.

    With z = v + m1 w (conserved) and ell = |v* - w*| / |v - w|, any
    gas-bath collision satisfies

        |v*|^2 + m1 |w*|^2 = (|z|^2 + ell^2 m1 |q|^2) / (1 + m1).

    Returns ``(ell, residual)`` where residual is the relative defect of the
    identity; ell lies in [e, 1]: 1 for grazing, e for head-on impacts.
    Broadcasts over leading dimensions of (..., 3) inputs.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    v_post = np.asarray(v_post, dtype=float)
    w_post = np.asarray(w_post, dtype=float)
    qn = np.linalg.norm(v - w, axis=-1)
    if np.any(qn == 0.0):
        raise ValueError("energy split undefined for coincident velocities (|v - w| = 0)")
    ell = np.linalg.norm(v_post - w_post, axis=-1) / qn
    z = v + params.m1 * w
    lhs = np.sum(v_post**2, axis=-1) + params.m1 * np.sum(w_post**2, axis=-1)
    rhs = (np.sum(z**2, axis=-1) + ell**2 * params.m1 * qn**2) / (1.0 + params.m1)
    residual = np.abs(lhs - rhs) / np.maximum(np.abs(lhs), np.finfo(float).tiny)
    if ell.ndim == 0:
        return float(ell), float(residual)
    return ell, residual
