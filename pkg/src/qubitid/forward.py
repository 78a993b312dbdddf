"""Forward maps from parameters to the four excited-state probabilities.

p1: free relaxation for t1 from the excited state.
p2: one saturated pulse of scaled duration tau2.
p3, p4: pulse, free relaxation for t3 (resp. 2 t3), opposite pulse.

``forward_finite`` simulates pulses of amplitude ``u_max``; ``forward_ideal``
is the closed-form limit ``u_max -> inf`` in which pulses become x-rotations.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ._backend import kernels
from .bloch import Parameters
from .design import ProtocolTimes
from .errors import DegenerateObservableError, ValidationError

P2_TOL = 1e-9


class VirtualObservables(NamedTuple):
    q3: float
    q4: float


def forward_finite(theta: Parameters, times: ProtocolTimes, u_max: float) -> np.ndarray:
    if not u_max > 0:
        raise ValidationError("u_max must be > 0")
    return kernels.forward_finite(theta.gamma1, theta.kappa, theta.gamma2, theta.omega,
                                  times.t1, times.tau2, times.t3, float(u_max))


def forward_ideal(theta: Parameters, times: ProtocolTimes) -> np.ndarray:
    return kernels.forward_ideal(theta.gamma1, theta.kappa, theta.gamma2, theta.omega,
                                 times.t1, times.tau2, times.t3)


def forward_ideal_array(theta, times: ProtocolTimes) -> np.ndarray:
    """``forward_ideal`` on a raw (gamma1, kappa, gamma2, omega) array; no positivity check."""
    g1, kappa, g2, omega = (float(x) for x in theta)
    return kernels.forward_ideal(g1, kappa, g2, omega, times.t1, times.tau2, times.t3)


def pulse_relax_pulse_prob(theta: Parameters, tau2: float, t: float) -> float:
    """Excited probability after ideal pulse, relaxation for ``t``, opposite ideal pulse.

    With c = cos(kappa tau2), e = exp(-gamma1 t) and E = exp(-(gamma1 + 4 gamma2) t / 2)::

        p = (1 - c (1 - e) + e c^2 + (1 - c^2) E cos(omega t)) / 2
    """
    if t < 0:
        raise ValidationError("t must be >= 0")
    return kernels.pulse_relax_pulse(theta.gamma1, theta.kappa, theta.gamma2, theta.omega,
                                     float(tau2), float(t))


def virtual_observables(p, times: ProtocolTimes) -> VirtualObservables:
    """Recover (q3, q4) = (E cos(omega t3), E^2 cos(2 omega t3)) from the four probabilities.

    Only p2 at 0 or 1 is singular (sin(kappa tau2) = 0). p2 = 1/2 is regular.
    """
    p1, p2, p3, p4 = (float(x) for x in p)
    if p2 < P2_TOL or p2 > 1.0 - P2_TOL:
        raise DegenerateObservableError(f"p2 = {p2} too close to 0 or 1")
    if not 0.0 < p1 < 1.0:
        raise ValidationError(f"p1 = {p1} outside (0, 1)")
    d = 2.0 * p2 * (1.0 - p2)
    lin = p2 * (1.0 - 2.0 * p2)
    q3 = (p3 + p2 - 1.0 + lin * p1 ** (times.t3 / times.t1)) / d
    q4 = (p4 + p2 - 1.0 + lin * p1 ** (2.0 * times.t3 / times.t1)) / d
    return VirtualObservables(q3, q4)
