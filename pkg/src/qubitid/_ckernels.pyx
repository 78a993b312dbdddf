# cython: language_level=3
"""Compiled kernels; same interface as ``qubitid._pykernels``.

The matrix exponential is a fixed-size 4x4 Pade(13) scaling-and-squaring
(Higham 2005 coefficients) so that it runs without touching the Python
allocator.
"""
import numpy as np
from libc.math cimport exp, log, cos, sqrt, acos, fabs, frexp, ldexp, M_PI


OK = 0
BAD_PROBABILITY = 1
DEGENERATE_P2 = 2
NONPOSITIVE_DECAY = 3
ARCCOS_DOMAIN = 4

ARCCOS_TOL = 1e-9
P2_TOL = 1e-9
FD_STEP = 1e-6

NAME = "cython"

cdef double _ARCCOS_TOL = 1e-9
cdef double _P2_TOL = 1e-9
cdef double _FD_STEP = 1e-6
cdef double _THETA13 = 5.371920351148152

cdef double[14] _B13
_B13[:] = [64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
           1187353796428800.0, 129060195264000.0, 10559470521600.0,
           670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
           960960.0, 16380.0, 182.0, 1.0]


cdef inline void _matmul(const double* a, const double* b, double* out) noexcept nogil:
    cdef int i, j, m
    cdef double acc
    for i in range(4):
        for j in range(4):
            acc = 0.0
            for m in range(4):
                acc += a[4 * i + m] * b[4 * m + j]
            out[4 * i + j] = acc


cdef void _solve(double* Q, double* R) noexcept nogil:
    """Solve Q X = R in place (R becomes X); Gaussian elimination, partial pivoting."""
    cdef int col, row, piv, j
    cdef double best, f, tmp
    for col in range(4):
        piv = col
        best = fabs(Q[4 * col + col])
        for row in range(col + 1, 4):
            if fabs(Q[4 * row + col]) > best:
                best = fabs(Q[4 * row + col])
                piv = row
        if piv != col:
            for j in range(4):
                tmp = Q[4 * col + j]
                Q[4 * col + j] = Q[4 * piv + j]
                Q[4 * piv + j] = tmp
                tmp = R[4 * col + j]
                R[4 * col + j] = R[4 * piv + j]
                R[4 * piv + j] = tmp
        for row in range(col + 1, 4):
            f = Q[4 * row + col] / Q[4 * col + col]
            if f != 0.0:
                for j in range(col, 4):
                    Q[4 * row + j] -= f * Q[4 * col + j]
                for j in range(4):
                    R[4 * row + j] -= f * R[4 * col + j]
    for col in range(3, -1, -1):
        for j in range(4):
            tmp = R[4 * col + j]
            for row in range(col + 1, 4):
                tmp -= Q[4 * col + row] * R[4 * row + j]
            R[4 * col + j] = tmp / Q[4 * col + col]


cdef void _expm4(const double* A_in, double* out) noexcept nogil:
    cdef double A[16]
    cdef double A2[16]
    cdef double A4[16]
    cdef double A6[16]
    cdef double T[16]
    cdef double U[16]
    cdef double V[16]
    cdef double Q[16]
    cdef double norm1 = 0.0, colsum, scale
    cdef int i, j, s = 0, e
    for j in range(4):
        colsum = 0.0
        for i in range(4):
            colsum += fabs(A_in[4 * i + j])
        if colsum > norm1:
            norm1 = colsum
    if norm1 > _THETA13:
        frexp(norm1 / _THETA13, &e)
        s = e
        if ldexp(0.5, s) >= norm1 / _THETA13:
            s -= 1
        if s < 0:
            s = 0
    scale = ldexp(1.0, -s)
    for i in range(16):
        A[i] = A_in[i] * scale
    _matmul(A, A, A2)
    _matmul(A2, A2, A4)
    _matmul(A4, A2, A6)
    # U = A [A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I]
    for i in range(16):
        T[i] = _B13[13] * A6[i] + _B13[11] * A4[i] + _B13[9] * A2[i]
    _matmul(A6, T, U)
    for i in range(16):
        U[i] += _B13[7] * A6[i] + _B13[5] * A4[i] + _B13[3] * A2[i]
    for i in range(4):
        U[5 * i] += _B13[1]
    _matmul(A, U, T)
    # V = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    for i in range(16):
        U[i] = _B13[12] * A6[i] + _B13[10] * A4[i] + _B13[8] * A2[i]
    _matmul(A6, U, V)
    for i in range(16):
        V[i] += _B13[6] * A6[i] + _B13[4] * A4[i] + _B13[2] * A2[i]
    for i in range(4):
        V[5 * i] += _B13[0]
    for i in range(16):
        Q[i] = V[i] - T[i]
        out[i] = V[i] + T[i]
    _solve(Q, out)
    for j in range(s):
        _matmul(out, out, T)
        for i in range(16):
            out[i] = T[i]


cdef void _flow(double g1, double kappa, double g2, double omega, double u,
                double t, double* E) noexcept nogil:
    """E = expm of the augmented generator [[A_u t, b t], [0, 0]]."""
    cdef double M[16]
    cdef double d = (-0.5 * g1 - 2.0 * g2) * t
    cdef double ku = kappa * u * t
    cdef int i
    for i in range(16):
        M[i] = 0.0
    M[0] = d
    M[1] = -omega * t
    M[4] = omega * t
    M[5] = d
    M[6] = -ku
    M[9] = ku
    M[10] = -g1 * t
    M[11] = g1 * t
    _expm4(M, E)


cdef inline void _apply(const double* E, const double* v, double* out) noexcept nogil:
    cdef int i
    for i in range(3):
        out[i] = E[4 * i] * v[0] + E[4 * i + 1] * v[1] + E[4 * i + 2] * v[2] + E[4 * i + 3]


def generator(double g1, double kappa, double g2, double omega, double u):
    d = -0.5 * g1 - 2.0 * g2
    ku = kappa * u
    A = np.array([[d, -omega, 0.0], [omega, d, -ku], [0.0, ku, -g1]])
    b = np.array([0.0, 0.0, g1])
    return A, b


def augmented_expm(A, b, double t):
    """Return (M, w) with M = exp(A t) and w = int_0^t exp(A (t-s)) b ds."""
    cdef double[:, :] Av = np.asarray(A, dtype=np.float64)
    cdef double[:] bv = np.asarray(b, dtype=np.float64)
    cdef double M[16]
    cdef double E[16]
    cdef int i, j
    for i in range(16):
        M[i] = 0.0
    for i in range(3):
        for j in range(3):
            M[4 * i + j] = Av[i, j] * t
        M[4 * i + 3] = bv[i] * t
    _expm4(M, E)
    Mo = np.empty((3, 3))
    w = np.empty(3)
    for i in range(3):
        for j in range(3):
            Mo[i, j] = E[4 * i + j]
        w[i] = E[4 * i + 3]
    return Mo, w


def propagate(v, double g1, double kappa, double g2, double omega, double u, double t):
    cdef double[:] vv = np.asarray(v, dtype=np.float64)
    cdef double vin[3]
    cdef double vout[3]
    cdef double E[16]
    vin[0] = vv[0]
    vin[1] = vv[1]
    vin[2] = vv[2]
    _flow(g1, kappa, g2, omega, u, t, E)
    _apply(E, vin, vout)
    return np.array([vout[0], vout[1], vout[2]])


cdef void _forward_finite(double g1, double kappa, double g2, double omega,
                          double t1, double tau2, double t3, double u_max,
                          double* out) noexcept nogil:
    cdef double Ep[16]
    cdef double Em[16]
    cdef double Er[16]
    cdef double ex[3]
    cdef double v1[3]
    cdef double v2[3]
    cdef double v3[3]
    cdef double dt = tau2 / u_max
    ex[0] = 0.0
    ex[1] = 0.0
    ex[2] = -1.0
    _flow(g1, kappa, g2, omega, u_max, dt, Ep)
    _flow(g1, kappa, g2, omega, -u_max, dt, Em)
    _flow(g1, kappa, g2, omega, 0.0, t1, Er)
    _apply(Er, ex, v1)
    out[0] = 0.5 * (1.0 - v1[2])
    _apply(Ep, ex, v2)
    out[1] = 0.5 * (1.0 - v2[2])
    _flow(g1, kappa, g2, omega, 0.0, t3, Er)
    _apply(Er, v2, v1)
    _apply(Em, v1, v3)
    out[2] = 0.5 * (1.0 - v3[2])
    _flow(g1, kappa, g2, omega, 0.0, 2.0 * t3, Er)
    _apply(Er, v2, v1)
    _apply(Em, v1, v3)
    out[3] = 0.5 * (1.0 - v3[2])


def forward_finite(double g1, double kappa, double g2, double omega,
                   double t1, double tau2, double t3, double u_max):
    out = np.empty(4)
    cdef double[:] ov = out
    _forward_finite(g1, kappa, g2, omega, t1, tau2, t3, u_max, &ov[0])
    return out


cdef inline double _prp(double g1, double kappa, double g2, double omega,
                        double tau2, double t) noexcept nogil:
    cdef double c = cos(kappa * tau2)
    cdef double e = exp(-g1 * t)
    cdef double E = exp(-0.5 * (g1 + 4.0 * g2) * t)
    return 0.5 * (1.0 - c * (1.0 - e) + e * c * c + (1.0 - c * c) * E * cos(omega * t))


def pulse_relax_pulse(double g1, double kappa, double g2, double omega,
                      double tau2, double t):
    return _prp(g1, kappa, g2, omega, tau2, t)


def forward_ideal(double g1, double kappa, double g2, double omega,
                  double t1, double tau2, double t3):
    return np.array([
        exp(-g1 * t1),
        0.5 * (1.0 + cos(kappa * tau2)),
        _prp(g1, kappa, g2, omega, tau2, t3),
        _prp(g1, kappa, g2, omega, tau2, 2.0 * t3),
    ])


cdef int _invert(const double* p, double t1, double tau2, double t3, int k,
                 double* theta) noexcept nogil:
    cdef double p1 = p[0], p2 = p[1], p3 = p[2], p4 = p[3]
    cdef double x, d, r1, r2, lin, q3, q4, D, a
    if not (0.0 < p1 < 1.0 and 0.0 < p2 < 1.0):
        return 1
    if p2 < _P2_TOL or p2 > 1.0 - _P2_TOL:
        return 2
    x = 2.0 * p2 - 1.0
    if x > 1.0:
        x = 1.0
    elif x < -1.0:
        x = -1.0
    theta[0] = -log(p1) / t1
    theta[1] = acos(x) / tau2
    d = 2.0 * p2 * (1.0 - p2)
    r1 = exp(log(p1) * (t3 / t1))
    r2 = exp(log(p1) * (2.0 * t3 / t1))
    lin = p2 * (1.0 - 2.0 * p2)
    q3 = (p3 + p2 - 1.0 + lin * r1) / d
    q4 = (p4 + p2 - 1.0 + lin * r2) / d
    D = 2.0 * q3 * q3 - q4
    if not D > 0.0:
        return 3
    theta[2] = -log(D / r1) / (4.0 * t3)
    x = q3 / sqrt(D)
    if fabs(x) > 1.0 + _ARCCOS_TOL:
        return 4
    if x > 1.0:
        x = 1.0
    elif x < -1.0:
        x = -1.0
    a = acos(x)
    if k % 2 == 0:
        theta[3] = (k * M_PI + a) / t3
    else:
        theta[3] = ((k + 1) * M_PI - a) / t3
    return 0


cdef int _invert_jac(const double* p, double t1, double tau2, double t3, int k,
                     double* theta, double* J) noexcept nogil:
    cdef double q[4]
    cdef double th_hi[4]
    cdef double th_lo[4]
    cdef double h
    cdef int status, i, j
    status = _invert(p, t1, tau2, t3, k, theta)
    if status != 0:
        return status
    for j in range(4):
        h = _FD_STEP * p[j]
        if h < _FD_STEP:
            h = _FD_STEP
        for i in range(4):
            q[i] = p[i]
        q[j] = p[j] + h
        status = _invert(q, t1, tau2, t3, k, th_hi)
        if status != 0:
            return status
        q[j] = p[j] - h
        status = _invert(q, t1, tau2, t3, k, th_lo)
        if status != 0:
            return status
        for i in range(4):
            J[4 * i + j] = (th_hi[i] - th_lo[i]) / (2.0 * h)
    return 0


def invert_raw(double p1, double p2, double p3, double p4,
               double t1, double tau2, double t3, int k):
    """Closed-form ideal inverse. Returns (status, theta)."""
    cdef double p[4]
    theta = np.full(4, np.nan)
    cdef double[:] tv = theta
    cdef double th[4]
    cdef int status, i
    p[0] = p1
    p[1] = p2
    p[2] = p3
    p[3] = p4
    status = _invert(p, t1, tau2, t3, k, th)
    if status == 0:
        for i in range(4):
            tv[i] = th[i]
    return status, theta


def invert_with_jacobian_raw(p, double t1, double tau2, double t3, int k):
    """Inverse plus central-difference Jacobian d(theta)/d(p)."""
    cdef double[:] pv = np.asarray(p, dtype=np.float64)
    cdef double pp[4]
    cdef double th[4]
    cdef double Jc[16]
    cdef int status, i, j
    theta = np.full(4, np.nan)
    J = np.full((4, 4), np.nan)
    for i in range(4):
        pp[i] = pv[i]
    status = _invert_jac(pp, t1, tau2, t3, k, th, Jc)
    if status == 0:
        for i in range(4):
            theta[i] = th[i]
            for j in range(4):
                J[i, j] = Jc[4 * i + j]
    elif _invert(pp, t1, tau2, t3, k, th) == 0:
        for i in range(4):
            theta[i] = th[i]
    return status, theta, J


def estimate_batch(P, double t1, double tau2, double t3, int k):
    """Invert many frequency vectors and form their Delta-method covariances."""
    cdef double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t N = Pv.shape[0], n
    thetas = np.full((N, 4), np.nan)
    sigmas = np.full((N, 4, 4), np.nan)
    status = np.zeros(N, dtype=np.int8)
    cdef double[:, ::1] tv = thetas
    cdef double[:, :, ::1] sv = sigmas
    cdef signed char[:] stv = status
    cdef double th[4]
    cdef double Jc[16]
    cdef double var[4]
    cdef double acc
    cdef int s, i, j, m
    with nogil:
        for n in range(N):
            s = _invert_jac(&Pv[n, 0], t1, tau2, t3, k, th, Jc)
            stv[n] = s
            if s != 0:
                continue
            for m in range(4):
                var[m] = Pv[n, m] * (1.0 - Pv[n, m])
            for i in range(4):
                tv[n, i] = th[i]
                for j in range(i + 1):
                    acc = 0.0
                    for m in range(4):
                        acc += Jc[4 * i + m] * var[m] * Jc[4 * j + m]
                    sv[n, i, j] = acc
                    sv[n, j, i] = acc
    return thetas, sigmas, status
