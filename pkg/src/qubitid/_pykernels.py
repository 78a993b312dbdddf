"""Pure-Python kernels.

Reference implementation of the hot paths. ``_ckernels.pyx`` mirrors every
function here with the same signature and return conventions; the backend
is chosen in ``qubitid._backend``.

Parameters travel as four floats ordered (gamma1, kappa, gamma2, omega) and
protocol times as (t1, tau2, t3) so that both backends share one calling
convention.
"""
import math

import numpy as np
from scipy.linalg import expm

# status codes returned by the inversion kernels
OK = 0
BAD_PROBABILITY = 1
DEGENERATE_P2 = 2
NONPOSITIVE_DECAY = 3
ARCCOS_DOMAIN = 4

ARCCOS_TOL = 1e-9
P2_TOL = 1e-9
FD_STEP = 1e-6

NAME = "python"


def generator(g1, kappa, g2, omega, u):
    d = -0.5 * g1 - 2.0 * g2
    ku = kappa * u
    A = np.array([
        [d, -omega, 0.0],
        [omega, d, -ku],
        [0.0, ku, -g1],
    ])
    b = np.array([0.0, 0.0, g1])
    return A, b


def augmented_expm(A, b, t):
    """Return (M, w) with M = exp(A t) and w = int_0^t exp(A (t-s)) b ds."""
    aug = np.zeros((4, 4))
    aug[:3, :3] = np.asarray(A, dtype=float) * t
    aug[:3, 3] = np.asarray(b, dtype=float) * t
    E = expm(aug)
    return E[:3, :3].copy(), E[:3, 3].copy()


def propagate(v, g1, kappa, g2, omega, u, t):
    A, b = generator(g1, kappa, g2, omega, u)
    M, w = augmented_expm(A, b, t)
    return M @ np.asarray(v, dtype=float) + w


def forward_finite(g1, kappa, g2, omega, t1, tau2, t3, u_max):
    excited = np.array([0.0, 0.0, -1.0])
    dt = tau2 / u_max
    plus = augmented_expm(*generator(g1, kappa, g2, omega, u_max), dt)
    minus = augmented_expm(*generator(g1, kappa, g2, omega, -u_max), dt)
    A0, b0 = generator(g1, kappa, g2, omega, 0.0)

    z1 = augmented_expm(A0, b0, t1)
    v1 = z1[0] @ excited + z1[1]
    v2 = plus[0] @ excited + plus[1]
    out = np.empty(4)
    out[0] = 0.5 * (1.0 - v1[2])
    out[1] = 0.5 * (1.0 - v2[2])
    for j, t in ((2, t3), (3, 2.0 * t3)):
        M, w = augmented_expm(A0, b0, t)
        v = M @ v2 + w
        v = minus[0] @ v + minus[1]
        out[j] = 0.5 * (1.0 - v[2])
    return out


def pulse_relax_pulse(g1, kappa, g2, omega, tau2, t):
    c = math.cos(kappa * tau2)
    s2 = 1.0 - c * c
    e = math.exp(-g1 * t)
    E = math.exp(-0.5 * (g1 + 4.0 * g2) * t)
    return 0.5 * (1.0 - c * (1.0 - e) + e * c * c + s2 * E * math.cos(omega * t))


def forward_ideal(g1, kappa, g2, omega, t1, tau2, t3):
    return np.array([
        math.exp(-g1 * t1),
        0.5 * (1.0 + math.cos(kappa * tau2)),
        pulse_relax_pulse(g1, kappa, g2, omega, tau2, t3),
        pulse_relax_pulse(g1, kappa, g2, omega, tau2, 2.0 * t3),
    ])


def _branch_angle(a, k, t3):
    if k % 2 == 0:
        return (k * math.pi + a) / t3
    return ((k + 1) * math.pi - a) / t3


def invert_raw(p1, p2, p3, p4, t1, tau2, t3, k):
    """Closed-form ideal inverse. Returns (status, theta)."""
    theta = np.full(4, np.nan)
    if not (0.0 < p1 < 1.0 and 0.0 < p2 < 1.0):
        return BAD_PROBABILITY, theta
    g1 = -math.log(p1) / t1
    kap = math.acos(min(1.0, max(-1.0, 2.0 * p2 - 1.0))) / tau2
    d = 2.0 * p2 * (1.0 - p2)
    if p2 < P2_TOL or p2 > 1.0 - P2_TOL:
        return DEGENERATE_P2, theta
    r1 = p1 ** (t3 / t1)
    r2 = p1 ** (2.0 * t3 / t1)
    lin = p2 * (1.0 - 2.0 * p2)
    q3 = (p3 + p2 - 1.0 + lin * r1) / d
    q4 = (p4 + p2 - 1.0 + lin * r2) / d
    D = 2.0 * q3 * q3 - q4
    if not D > 0.0:
        return NONPOSITIVE_DECAY, theta
    g2 = -math.log(D / r1) / (4.0 * t3)
    x = q3 / math.sqrt(D)
    if abs(x) > 1.0 + ARCCOS_TOL:
        return ARCCOS_DOMAIN, theta
    a = math.acos(min(1.0, max(-1.0, x)))
    theta[0] = g1
    theta[1] = kap
    theta[2] = g2
    theta[3] = _branch_angle(a, k, t3)
    return OK, theta


def invert_with_jacobian_raw(p, t1, tau2, t3, k):
    """Inverse plus central-difference Jacobian d(theta)/d(p).

    Returns (status, theta, J) with J[i, j] = d theta_i / d p_j.
    """
    p = np.asarray(p, dtype=float)
    J = np.full((4, 4), np.nan)
    status, theta = invert_raw(p[0], p[1], p[2], p[3], t1, tau2, t3, k)
    if status != OK:
        return status, theta, J
    for j in range(4):
        h = max(FD_STEP, FD_STEP * p[j])
        hi = p.copy()
        lo = p.copy()
        hi[j] += h
        lo[j] -= h
        s_hi, th_hi = invert_raw(hi[0], hi[1], hi[2], hi[3], t1, tau2, t3, k)
        s_lo, th_lo = invert_raw(lo[0], lo[1], lo[2], lo[3], t1, tau2, t3, k)
        if s_hi != OK:
            return s_hi, theta, J
        if s_lo != OK:
            return s_lo, theta, J
        J[:, j] = (th_hi - th_lo) / (2.0 * h)
    return OK, theta, J


def estimate_batch(P, t1, tau2, t3, k):
    """Invert many frequency vectors and form their Delta-method covariances.

    Returns (thetas (N, 4), sigmas (N, 4, 4), status (N,)).
    """
    P = np.ascontiguousarray(P, dtype=float)
    N = P.shape[0]
    thetas = np.full((N, 4), np.nan)
    sigmas = np.full((N, 4, 4), np.nan)
    status = np.zeros(N, dtype=np.int8)
    for i in range(N):
        s, theta, J = invert_with_jacobian_raw(P[i], t1, tau2, t3, k)
        status[i] = s
        if s != OK:
            continue
        thetas[i] = theta
        var = P[i] * (1.0 - P[i])
        S = (J * var) @ J.T
        sigmas[i] = 0.5 * (S + S.T)
    return thetas, sigmas, status
