"""Experiment design from the a-priori parameter box."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bloch import PARAMETER_NAMES, Parameters
from .errors import InfeasibleBranchError, ValidationError

DEFAULT_BETA = 0.2
DET_GRID_POINTS = 5


@dataclass(frozen=True)
class ParameterBox:
    lower: Parameters
    upper: Parameters

    def __post_init__(self):
        lo, hi = self.lower.as_array(), self.upper.as_array()
        bad = [name for name, a, b in zip(PARAMETER_NAMES, lo, hi) if not a < b]
        if bad:
            raise ValidationError(f"box lower bound must be < upper bound for {', '.join(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterBox":
        return cls(Parameters.from_dict(d["lower"]), Parameters.from_dict(d["upper"]))

    def as_dict(self) -> dict:
        return {"lower": self.lower.as_dict(), "upper": self.upper.as_dict()}

    def contains(self, theta: Parameters) -> bool:
        x = theta.as_array()
        return bool(np.all(x >= self.lower.as_array()) and np.all(x <= self.upper.as_array()))

    def grid(self, points: int) -> np.ndarray:
        """Tensor grid with ``points`` values per axis, endpoints included; shape (points**4, 4)."""
        axes = [np.linspace(a, b, points) for a, b in zip(self.lower.as_array(), self.upper.as_array())]
        return np.array(list(itertools.product(*axes)))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        lo, hi = self.lower.as_array(), self.upper.as_array()
        return lo + (hi - lo) * rng.random((size, 4))


@dataclass(frozen=True)
class ProtocolTimes:
    """Durations of the four preparations.

    ``tau2`` is the scaled pulse duration: the physical pulse lasts ``tau2 / u_max``.
    """

    t1: float
    tau2: float
    t3: float
    beta: float = DEFAULT_BETA
    k: int = 0

    def __post_init__(self):
        for name in ("t1", "tau2", "t3"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be > 0, got {value!r}")
        if not 0.0 < self.beta < 1.0:
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}")
        if int(self.k) != self.k or self.k < 0:
            raise ValidationError(f"branch index k must be a non-negative integer, got {self.k}")

    def as_dict(self) -> dict:
        return {"t1": self.t1, "tau2": self.tau2, "t3": self.t3, "beta": self.beta, "k": int(self.k)}


def _t1_root(x: float) -> float:
    return math.exp(x) * (2.0 - x) - 2.0


def solve_t1(gamma1_upper: float) -> float:
    """Relaxation time minimising the worst-case variance of the gamma1 estimate.

    Solves ``exp(x) (2 - x) = 2`` for its positive root by bisection on (0, 2)
    and rescales by the largest admissible gamma1.
    """
    if not gamma1_upper > 0:
        raise ValidationError("gamma1_upper must be > 0")
    # f(0) = 0 is the trivial root; f(1) > 0 > f(2) brackets the positive one
    lo, hi = 1.0, 2.0
    while hi - lo > 1e-13 * hi:
        mid = 0.5 * (lo + hi)
        if _t1_root(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) / gamma1_upper


def choose_tau2(kappa_upper: float, beta: float = DEFAULT_BETA) -> float:
    if not kappa_upper > 0:
        raise ValidationError("kappa_upper must be > 0")
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"beta must lie in (0, 1), got {beta}")
    return (1.0 - beta) * math.pi / kappa_upper


def branch_contains(omega_lower: float, omega_upper: float, t3: float, k: int) -> bool:
    return k * math.pi < omega_lower * t3 and omega_upper * t3 < (k + 1) * math.pi


def choose_t3(omega_lower: float, omega_upper: float, k: int = 0) -> float:
    """Transverse relaxation time centring the phase interval in (k pi, (k+1) pi)."""
    if not 0 < omega_lower < omega_upper:
        raise ValidationError("need 0 < omega_lower < omega_upper")
    if k < 0:
        raise ValidationError("k must be >= 0")
    t3 = (2 * k + 1) * math.pi / (omega_lower + omega_upper)
    if k > 0 and not branch_contains(omega_lower, omega_upper, t3, k):
        raise InfeasibleBranchError(
            f"[{omega_lower * t3:.4g}, {omega_upper * t3:.4g}] is not inside "
            f"({k}pi, {k + 1}pi); use a smaller k or a narrower omega box")
    return t3


def min_shots(m: float, beta: float, kappa_ratio: float) -> int:
    """Shots per observable keeping p2 at least ``m`` standard deviations from 0 and 1."""
    if not m > 0:
        raise ValidationError("m must be > 0")
    if not 0.0 < beta < 1.0:
        raise ValidationError("beta must lie in (0, 1)")
    if not 0.0 < kappa_ratio < 1.0:
        raise ValidationError("kappa_ratio must lie in (0, 1)")
    s = math.sin((1.0 - beta) * (1.0 - kappa_ratio) * math.pi / 2.0)
    return math.ceil(m * m / (1.0 - s) ** 2)


def design_times(box: ParameterBox, beta: float = DEFAULT_BETA, k: int = 0) -> ProtocolTimes:
    return ProtocolTimes(
        t1=solve_t1(box.upper.gamma1),
        tau2=choose_tau2(box.upper.kappa, beta),
        t3=choose_t3(box.lower.omega, box.upper.omega, k),
        beta=beta,
        k=k,
    )


def psi_jacobian_det(gamma1: float, gamma2: float, omega: float, t3: float) -> float:
    """det of d(q3, q4)/d(omega, gamma2); equals -4 t3^2 exp(-1.5 (gamma1 + 4 gamma2) t3) sin(omega t3)."""
    r = gamma1 + 4.0 * gamma2
    a = math.exp(-0.5 * r * t3)
    c, s = math.cos(omega * t3), math.sin(omega * t3)
    c2, s2 = math.cos(2 * omega * t3), math.sin(2 * omega * t3)
    dq3_dg2 = -2.0 * t3 * a * c
    dq3_dw = -t3 * a * s
    dq4_dg2 = -4.0 * t3 * a * a * c2
    dq4_dw = -2.0 * t3 * a * a * s2
    return dq3_dw * dq4_dg2 - dq3_dg2 * dq4_dw


@dataclass
class Diagnostics:
    pulse_below_pi: bool
    omega_branch_contained: bool
    psi_det_sign_constant: bool
    psi_det_range: tuple[float, float]
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.pulse_below_pi and self.omega_branch_contained and self.psi_det_sign_constant

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "pulse_below_pi": self.pulse_below_pi,
            "omega_branch_contained": self.omega_branch_contained,
            "psi_det_sign_constant": self.psi_det_sign_constant,
            "psi_det_range": list(self.psi_det_range),
            "messages": list(self.messages),
        }


def validate_times(box: ParameterBox, times: ProtocolTimes,
                   grid_points: int = DET_GRID_POINTS) -> Diagnostics:
    """Check the sufficient conditions for the ideal forward map to be invertible on the box."""
    messages = []
    angle = box.upper.kappa * times.tau2
    pulse_ok = angle < math.pi
    if not pulse_ok:
        messages.append(f"kappa_upper * tau2 = {angle:.6g} >= pi")

    lo_phase, hi_phase = box.lower.omega * times.t3, box.upper.omega * times.t3
    branch_ok = branch_contains(box.lower.omega, box.upper.omega, times.t3, times.k)
    if not branch_ok:
        messages.append(f"omega*t3 range [{lo_phase:.6g}, {hi_phase:.6g}] not inside "
                        f"({times.k}pi, {times.k + 1}pi)")

    dets = np.array([psi_jacobian_det(g1, g2, w, times.t3)
                     for g1, _, g2, w in box.grid(grid_points)])
    sign_ok = bool(np.all(dets < 0) or np.all(dets > 0))
    if not sign_ok:
        messages.append("det Jac psi changes sign (or vanishes) over the box")
    return Diagnostics(pulse_ok, branch_ok, sign_ok, (float(dets.min()), float(dets.max())), messages)
