"""Ideal-pulse inversion, Delta-method covariance and confidence regions.

The estimate is ``theta_hat = F0^{-1}(p_hat)``. Its uncertainty has two parts:

* statistical: ``sqrt(n) (theta_hat - mu)`` is asymptotically N(0, Sigma) with
  ``Sigma = J diag(p (1 - p)) J^T`` and ``J`` the Jacobian of the inverse map;
* modelling: finite pulses shift the estimate by at most ``bias_box`` per
  coordinate, a box whose half-widths scale as ``1 / u_max``.

The combined region is ``theta_hat + ellipsoid / sqrt(n) + bias box``.

Estimates are returned as arrays ordered (gamma1, kappa, gamma2, omega); they
are not forced into the positive orthant, since noisy data can push e.g.
gamma2 below zero.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _pykernels
from ._backend import kernels
from .bloch import PARAMETER_NAMES, Parameters
from .design import ParameterBox, ProtocolTimes
from .errors import (
    DegenerateObservableError,
    InversionDomainError,
    SingularCovarianceError,
    SingularJacobianError,
    ValidationError,
)
from .forward import forward_ideal_array
from .measurement import EmpiricalFrequencies

BIAS_GRID_POINTS = 5
MAX_CONDITION = 1e14

_STATUS_MESSAGES = {
    _pykernels.BAD_PROBABILITY: "p1 and p2 must lie strictly inside (0, 1)",
    _pykernels.DEGENERATE_P2: "p2 too close to 0 or 1; sin(kappa tau2) vanishes",
    _pykernels.NONPOSITIVE_DECAY: "2 q3^2 - q4 <= 0: observables p3/p4 are inconsistent "
                                  "with any decay factor",
    _pykernels.ARCCOS_DOMAIN: "|q3| / sqrt(2 q3^2 - q4) > 1: p3/p4 incompatible with a real "
                              "frequency on this branch",
}


def _raise_for(status: int, p) -> None:
    msg = f"{_STATUS_MESSAGES[status]} (p = {np.asarray(p).tolist()})"
    if status == _pykernels.DEGENERATE_P2:
        raise DegenerateObservableError(msg)
    raise InversionDomainError(msg)


def _probs(p_hat) -> np.ndarray:
    if isinstance(p_hat, EmpiricalFrequencies):
        p_hat = p_hat.p_hat
    p = np.asarray(p_hat, dtype=float)
    if p.shape != (4,):
        raise ValidationError(f"expected 4 probabilities, got shape {p.shape}")
    return p


def invert_ideal(p_hat, times: ProtocolTimes) -> np.ndarray:
    """Closed-form inverse of the ideal forward map.

    gamma1 = -log(p1) / t1 and kappa = arccos(2 p2 - 1) / tau2. gamma2 and omega
    come from the virtual observables: ``2 q3^2 - q4 = exp(-(gamma1 + 4 gamma2) t3)``
    and ``cos(omega t3) = q3 / sqrt(2 q3^2 - q4)``, with omega t3 placed in
    ``(k pi, (k+1) pi)``.
    """
    p = _probs(p_hat)
    status, theta = kernels.invert_raw(p[0], p[1], p[2], p[3], times.t1, times.tau2, times.t3,
                                       int(times.k))
    if status:
        _raise_for(status, p)
    return theta


def jacobian_inverse_map(p_hat, times: ProtocolTimes) -> np.ndarray:
    """Central-difference Jacobian d theta / d p, rows ordered (gamma1, kappa, gamma2, omega)."""
    p = _probs(p_hat)
    status, _, J = kernels.invert_with_jacobian_raw(p, times.t1, times.tau2, times.t3, int(times.k))
    if status:
        _raise_for(status, p)
    return J


def covariance(p_hat, times: ProtocolTimes) -> np.ndarray:
    """Delta-method covariance of sqrt(n) * theta_hat, evaluated at p_hat."""
    p = _probs(p_hat)
    J = jacobian_inverse_map(p, times)
    S = (J * (p * (1.0 - p))) @ J.T
    return 0.5 * (S + S.T)


def estimate_many(P, times: ProtocolTimes):
    """Vectorised ``invert_ideal`` + ``covariance`` over rows of ``P``.

    Returns ``(thetas, sigmas, status)``; rows with non-zero status hold NaN.
    """
    return kernels.estimate_batch(np.asarray(P, dtype=float), times.t1, times.tau2, times.t3,
                                  int(times.k))


def chi2_cdf_4dof(x: float) -> float:
    if x <= 0:
        return 0.0
    return -math.expm1(-0.5 * x) - 0.5 * x * math.exp(-0.5 * x)


@functools.lru_cache(maxsize=64)
def chi2_quantile_4dof(prob: float) -> float:
    """Quantile of the chi-square law with 4 degrees of freedom, by bisection."""
    if not 0.0 < prob < 1.0:
        raise ValidationError(f"prob must lie in (0, 1), got {prob}")
    lo, hi = 0.0, 1.0
    while chi2_cdf_4dof(hi) < prob:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-13 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi2_cdf_4dof(mid) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Ellipsoid:
    """``{d : d^T sigma^{-1} d <= radius2}``, centred at the origin."""

    sigma: np.ndarray
    radius2: float

    def contains(self, delta) -> bool:
        delta = np.asarray(delta, dtype=float)
        return float(delta @ np.linalg.solve(self.sigma, delta)) <= self.radius2

    def semi_axes(self) -> tuple[np.ndarray, np.ndarray]:
        w, V = np.linalg.eigh(self.sigma)
        return np.sqrt(np.clip(w, 0, None) * self.radius2), V


def confidence_ellipsoid(sigma_hat, alpha: float, n: float) -> Ellipsoid:
    """Ellipsoid for theta_hat - mu at level 1 - alpha, scaled by 1 / sqrt(n)."""
    sigma = np.asarray(sigma_hat, dtype=float)
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    if n <= 0:
        raise ValidationError("n must be > 0")
    if not np.all(np.isfinite(sigma)):
        raise SingularCovarianceError("covariance has non-finite entries")
    # condition number after diagonal scaling; raw entries span many decades
    d = np.sqrt(np.abs(np.diag(sigma)))
    if np.any(d == 0) or np.linalg.cond(sigma / np.outer(d, d)) > MAX_CONDITION:
        raise SingularCovarianceError("covariance is singular or ill-conditioned")
    return Ellipsoid(sigma, chi2_quantile_4dof(1.0 - alpha) / n)


class BiasConstants(NamedTuple):
    lam: float
    mu: float
    C: float
    C_t3: float
    C_2t3: float


def bias_constants(theta: Parameters, times: ProtocolTimes) -> BiasConstants:
    """Finite-pulse deviation constants: |F_eps - F0| <= eps * (0, C, C_t3, C_2t3)."""
    g1, g2, w = theta.gamma1, theta.gamma2, theta.omega
    lam = min(g1, 0.5 * (g1 + 4.0 * g2))
    mu = max(g1, math.sqrt((0.5 * g1 + g2) ** 2 + w * w))
    C = 0.5 * times.tau2 * (mu + g1)

    def c_prime(t):
        return C + 0.5 * times.tau2 * mu * (2.0 * math.exp(-lam * t) - math.exp(-g1 * t))

    return BiasConstants(lam, mu, C, c_prime(times.t3), c_prime(2.0 * times.t3))


def jacobian_forward_ideal(theta, times: ProtocolTimes, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian d F0 / d theta; J[i, j] = d p_i / d theta_j."""
    theta = np.asarray(theta, dtype=float)
    J = np.empty((4, 4))
    for j in range(4):
        h = rel_step * abs(theta[j])
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        J[:, j] = (forward_ideal_array(up, times) - forward_ideal_array(dn, times)) / (2.0 * h)
    return J


@functools.lru_cache(maxsize=32)
def _unit_bias_box(box: ParameterBox, times: ProtocolTimes, grid_points: int) -> tuple:
    best = np.zeros(4)
    for point in box.grid(grid_points):
        theta = Parameters.from_array(point)
        Jf = jacobian_forward_ideal(point, times)
        if not np.all(np.isfinite(Jf)) or np.linalg.cond(Jf) > MAX_CONDITION:
            raise SingularJacobianError(f"Jacobian of F0 singular at theta = {point.tolist()}")
        Jinv = np.linalg.inv(Jf)
        c = bias_constants(theta, times)
        half = np.array([0.0, c.C, c.C_t3, c.C_2t3])
        best = np.maximum(best, np.abs(Jinv) @ half)
    # gamma1 depends only on p1, which pulses do not touch
    best[0] = 0.0
    return tuple(best)


def bias_box(box: ParameterBox, times: ProtocolTimes, u_max: float,
             grid_points: int = BIAS_GRID_POINTS) -> np.ndarray:
    """Half-widths bounding the finite-pulse shift of each estimated parameter.

    For each grid point the box (0, +-C, +-C_t3, +-C_2t3) is mapped through
    the inverse Jacobian of F0; the per-coordinate maximum is divided by u_max.
    """
    if not u_max > 0:
        raise ValidationError("u_max must be > 0")
    if math.isinf(u_max):
        return np.zeros(4)
    return np.array(_unit_bias_box(box, times, int(grid_points))) / u_max


def _min_box_quadratic(d: np.ndarray, P: np.ndarray, h: np.ndarray) -> float:
    """min over |delta_i| <= h_i of (d - delta)^T P (d - delta), by active-set enumeration.

    Each coordinate is free, at its lower bound or at its upper bound (81
    combinations). Every feasible stationary point is a candidate; the convex
    minimum is among them.
    """
    best = math.inf
    for assign in itertools.product((0, -1, 1), repeat=4):
        fixed = [i for i, a in enumerate(assign) if a != 0]
        free = [i for i, a in enumerate(assign) if a == 0]
        r = np.zeros(4)
        for i in fixed:
            r[i] = d[i] - assign[i] * h[i]
        if free:
            if fixed:
                Pff = P[np.ix_(free, free)]
                Pfc = P[np.ix_(free, fixed)]
                r_free = -np.linalg.solve(Pff, Pfc @ r[fixed])
            else:
                r_free = np.zeros(len(free))
            delta_free = d[free] - r_free
            if np.any(np.abs(delta_free) > h[free] * (1 + 1e-12) + 1e-300):
                continue
            r[free] = r_free
        best = min(best, float(r @ P @ r))
    return best


@dataclass
class EstimateReport:
    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    n: float
    alpha: float
    ellipsoid: Ellipsoid
    bias_box: np.ndarray
    u_max: float
    times: ProtocolTimes
    p_hat: np.ndarray = field(default_factory=lambda: np.full(4, np.nan))

    @property
    def chi2_threshold(self) -> float:
        return chi2_quantile_4dof(1.0 - self.alpha)

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sigma_hat) / self.n)

    def ellipsoid_contains(self, theta) -> bool:
        return self.ellipsoid.contains(np.asarray(theta, dtype=float) - self.theta_hat)

    def contains(self, theta) -> bool:
        """Membership in theta_hat + ellipsoid + bias box (Minkowski sum)."""
        d = np.asarray(theta, dtype=float) - self.theta_hat
        scale = np.sqrt(np.diag(self.sigma_hat))
        # standardise so the quadratic form is well conditioned
        corr = self.sigma_hat / np.outer(scale, scale)
        P = np.linalg.inv(corr)
        P = 0.5 * (P + P.T)
        value = _min_box_quadratic(d / scale, P, self.bias_box / scale)
        return value <= self.ellipsoid.radius2 * (1 + 1e-12)

    def as_dict(self) -> dict:
        return {
            "theta_hat": dict(zip(PARAMETER_NAMES, map(float, self.theta_hat))),
            "sigma_hat": self.sigma_hat.tolist(),
            "chi2_threshold": self.chi2_threshold,
            "alpha": self.alpha,
            "n": self.n,
            "u_max": None if math.isinf(self.u_max) else self.u_max,
            "bias_box": dict(zip(PARAMETER_NAMES, map(float, self.bias_box))),
            "standard_errors": dict(zip(PARAMETER_NAMES, map(float, self.standard_errors()))),
            "p_hat": [float(x) for x in self.p_hat],
            "times": self.times.as_dict(),
        }


def confidence_region(p_hat, times: ProtocolTimes, n: float, alpha: float,
                      box: ParameterBox | None, u_max: float,
                      grid_points: int = BIAS_GRID_POINTS) -> EstimateReport:
    """Estimate, covariance, ellipsoid and bias box in one report.

    ``box=None`` or ``u_max=inf`` gives a zero bias box (ellipsoid-only region).
    """
    p = _probs(p_hat)
    theta_hat = invert_ideal(p, times)
    sigma = covariance(p, times)
    ell = confidence_ellipsoid(sigma, alpha, n)
    if box is None or math.isinf(u_max):
        bias = np.zeros(4)
    else:
        bias = bias_box(box, times, u_max, grid_points)
    return EstimateReport(theta_hat, sigma, n, alpha, ell, bias, u_max, times, p)
