"""Controlled open-qubit Bloch dynamics.

The state is a Bloch vector ``v = (x, y, z)`` evolving as ``dv/dt = A_u v + b``
for a piecewise-constant control ``u``. Every constant segment is propagated
exactly by exponentiating the 4x4 augmented matrix ``[[A_u, b], [0, 0]]``.

Bloch vectors are plain length-3 numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import ValidationError

BALL_TOL = 1e-9
EXCITED = np.array([0.0, 0.0, -1.0])
GROUND = np.array([0.0, 0.0, 1.0])

PARAMETER_NAMES = ("gamma1", "kappa", "gamma2", "omega")


@dataclass(frozen=True)
class Parameters:
    """Physical parameters, ordered (gamma1, kappa, gamma2, omega).

    gamma1 is the relaxation rate, kappa the control coupling, gamma2 the
    dephasing rate and omega the intrinsic frequency (rad per unit time).
    """

    gamma1: float
    kappa: float
    gamma2: float
    omega: float

    def __post_init__(self):
        for name in PARAMETER_NAMES:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValidationError(f"{name} must be finite and > 0, got {value!r}")

    @classmethod
    def from_array(cls, values) -> "Parameters":
        g1, kappa, g2, omega = (float(x) for x in values)
        return cls(g1, kappa, g2, omega)

    @classmethod
    def from_dict(cls, d: dict) -> "Parameters":
        try:
            return cls(*(float(d[name]) for name in PARAMETER_NAMES))
        except KeyError as exc:
            raise ValidationError(f"missing parameter {exc.args[0]!r}") from None

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma1, self.kappa, self.gamma2, self.omega])

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAMETER_NAMES}


@dataclass(frozen=True)
class ControlSpec:
    u: float
    u_max: float

    def __post_init__(self):
        if not self.u_max > 0:
            raise ValidationError("u_max must be > 0")
        if abs(self.u) > self.u_max:
            raise ValidationError(f"|u|={abs(self.u)} exceeds u_max={self.u_max}")

    @property
    def epsilon(self) -> float:
        return 1.0 / self.u_max


def as_bloch(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValidationError(f"Bloch vector must have shape (3,), got {v.shape}")
    return v


def in_ball(v, tol: float = BALL_TOL) -> bool:
    v = as_bloch(v)
    return float(v @ v) <= 1.0 + tol


def generator(theta: Parameters, u: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(A_u, b)`` of the affine Bloch dynamics under control ``u``."""
    return kernels.generator(theta.gamma1, theta.kappa, theta.gamma2, theta.omega, float(u))


def propagate(v0, u: float, t: float, theta: Parameters) -> np.ndarray:
    """State after holding the control at ``u`` for a duration ``t``."""
    if t < 0:
        raise ValidationError(f"duration must be >= 0, got {t}")
    v0 = as_bloch(v0)
    if t == 0:
        return v0.copy()
    return kernels.propagate(v0, theta.gamma1, theta.kappa, theta.gamma2, theta.omega,
                             float(u), float(t))


def relax_closed_form(v0, t: float, theta: Parameters) -> np.ndarray:
    """Free relaxation (u = 0) using the explicit form of exp(A_0 t)."""
    if t < 0:
        raise ValidationError(f"duration must be >= 0, got {t}")
    x, y, z = as_bloch(v0)
    damp = math.exp(-0.5 * (theta.gamma1 + 4.0 * theta.gamma2) * t)
    c = math.cos(theta.omega * t)
    s = math.sin(theta.omega * t)
    ez = math.exp(-theta.gamma1 * t)
    return np.array([
        damp * (c * x - s * y),
        damp * (s * x + c * y),
        ez * z + (1.0 - ez),
    ])


def pulse(v0, sign: int, tau: float, u_max: float, theta: Parameters) -> np.ndarray:
    """Saturated pulse ``u = sign * u_max`` held for ``tau / u_max``."""
    if sign not in (1, -1):
        raise ValidationError("sign must be +1 or -1")
    if not tau > 0 or not u_max > 0:
        raise ValidationError("tau and u_max must be > 0")
    return propagate(v0, sign * u_max, tau / u_max, theta)


def ideal_pulse(v0, sign: int, angle: float) -> np.ndarray:
    """Instantaneous x-rotation by ``sign * angle``; maps (0,0,-1) to (0, sin a, -cos a)."""
    x, y, z = as_bloch(v0)
    a = sign * angle
    c, s = math.cos(a), math.sin(a)
    return np.array([x, c * y - s * z, s * y + c * z])


def readout_probability(v) -> float:
    """Probability of the excited outcome, (1 - z) / 2."""
    z = float(as_bloch(v)[2])
    if abs(z) > 1.0 + BALL_TOL:
        raise ValidationError(f"|z| = {abs(z)} outside the Bloch ball")
    return 0.5 * (1.0 - z)
