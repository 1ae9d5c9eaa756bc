# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-item kernels for the four transformation families.

Mirrors py_kernels function for function. Items are computed in double
precision regardless of storage dtype; branch thresholds still follow the
storage precision so both backends pick the same branch for the same input.
"""

import numpy as np

cimport cython
from libc.math cimport atan2, cos, exp, expm1, fabs, isfinite, log, sin, sqrt, tan

from lieopt.errors import CorruptElementError, DomainError

ctypedef fused floating:
    float
    double

NAME = "compiled"

cdef double DBL_EPS = 2.220446049250313e-16
cdef double FLT_EPS = 1.1920928955078125e-07


cdef inline double _eps_of(floating x) noexcept nogil:
    if floating is float:
        return FLT_EPS
    return DBL_EPS


# |norm(q) - 1| > 1e-3 expressed on the squared norm
cdef double _N2_LO = 0.998001
cdef double _N2_HI = 1.002001


cdef inline bint _finite(const double* v, int k) noexcept nogil:
    cdef int i
    for i in range(k):
        if not isfinite(v[i]):
            return False
    return True


cdef inline bint _unit_ok(const double* q) noexcept nogil:
    cdef double n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
    return _N2_LO <= n2 <= _N2_HI


cdef inline void _hat1(const double* v, double* m) noexcept nogil:
    m[0] = 0.0;    m[1] = -v[2]; m[2] = v[1]
    m[3] = v[2];   m[4] = 0.0;   m[5] = -v[0]
    m[6] = -v[1];  m[7] = v[0];  m[8] = 0.0


cdef inline void _mm33(const double* a, const double* b, double* c) noexcept nogil:
    cdef int i, j, k
    for i in range(3):
        for j in range(3):
            c[3 * i + j] = (a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j]
                            + a[3 * i + 2] * b[6 + j])


cdef inline void _mv3(const double* m, const double* v, double* out) noexcept nogil:
    out[0] = m[0] * v[0] + m[1] * v[1] + m[2] * v[2]
    out[1] = m[3] * v[0] + m[4] * v[1] + m[5] * v[2]
    out[2] = m[6] * v[0] + m[7] * v[1] + m[8] * v[2]


cdef inline int _solve33(const double* m, const double* v, double* out) noexcept nogil:
    # Gaussian elimination with partial pivoting on a local copy.
    cdef double a[12]
    cdef int i, j, p, piv
    cdef double best, f
    for i in range(3):
        for j in range(3):
            a[4 * i + j] = m[3 * i + j]
        a[4 * i + 3] = v[i]
    for p in range(3):
        piv = p
        best = fabs(a[4 * p + p])
        for i in range(p + 1, 3):
            if fabs(a[4 * i + p]) > best:
                best = fabs(a[4 * i + p])
                piv = i
        if best == 0.0:
            return -1
        if piv != p:
            for j in range(4):
                f = a[4 * p + j]
                a[4 * p + j] = a[4 * piv + j]
                a[4 * piv + j] = f
        for i in range(p + 1, 3):
            f = a[4 * i + p] / a[4 * p + p]
            for j in range(p, 4):
                a[4 * i + j] -= f * a[4 * p + j]
    for p in range(2, -1, -1):
        f = a[4 * p + 3]
        for j in range(p + 1, 3):
            f -= a[4 * p + j] * out[j]
        out[p] = f / a[4 * p + p]
    return 0


cdef inline void _quat_mul1(const double* a, const double* b, double* o) noexcept nogil:
    o[0] = a[3] * b[0] + a[0] * b[3] + a[1] * b[2] - a[2] * b[1]
    o[1] = a[3] * b[1] - a[0] * b[2] + a[1] * b[3] + a[2] * b[0]
    o[2] = a[3] * b[2] + a[0] * b[1] - a[1] * b[0] + a[2] * b[3]
    o[3] = a[3] * b[3] - a[0] * b[0] - a[1] * b[1] - a[2] * b[2]
    cdef double n = sqrt(o[0] * o[0] + o[1] * o[1] + o[2] * o[2] + o[3] * o[3])
    o[0] /= n; o[1] /= n; o[2] /= n; o[3] /= n


cdef inline void _quat_conj1(const double* q, double* o) noexcept nogil:
    cdef double n = sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    o[0] = -q[0] / n; o[1] = -q[1] / n; o[2] = -q[2] / n; o[3] = q[3] / n


cdef inline void _quat_rot1(const double* q, const double* p, double* o) noexcept nogil:
    # p + 2 v x (v x p + w p)
    cdef double t0 = q[1] * p[2] - q[2] * p[1] + q[3] * p[0]
    cdef double t1 = q[2] * p[0] - q[0] * p[2] + q[3] * p[1]
    cdef double t2 = q[0] * p[1] - q[1] * p[0] + q[3] * p[2]
    o[0] = p[0] + 2.0 * (q[1] * t2 - q[2] * t1)
    o[1] = p[1] + 2.0 * (q[2] * t0 - q[0] * t2)
    o[2] = p[2] + 2.0 * (q[0] * t1 - q[1] * t0)


cdef inline void _so3_exp1(const double* x, double eps, double* q) noexcept nogil:
    cdef double t2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
    cdef double theta = sqrt(t2)
    cdef double g, w
    if theta > eps:
        g = sin(0.5 * theta) / theta
        w = cos(0.5 * theta)
    else:
        g = 0.5 - t2 / 48.0 + t2 * t2 / 3840.0
        w = 1.0 - t2 / 8.0 + t2 * t2 / 384.0
    q[0] = x[0] * g; q[1] = x[1] * g; q[2] = x[2] * g; q[3] = w


cdef inline void _so3_log1(const double* q, double cut, double* out) noexcept nogil:
    cdef double s = -1.0 if q[3] < 0 else 1.0
    cdef double vx = s * q[0], vy = s * q[1], vz = s * q[2], w = s * q[3]
    cdef double n = sqrt(vx * vx + vy * vy + vz * vz)
    cdef double k
    if n > cut:
        k = 2.0 * atan2(n, w) / n
    else:
        k = (2.0 / w) * (1.0 - n * n / (3.0 * w * w))
    out[0] = k * vx; out[1] = k * vy; out[2] = k * vz


cdef inline void _vmat1(const double* phi, double cut, double* V) noexcept nogil:
    cdef double t2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    cdef double theta = sqrt(t2)
    cdef double a, b, sh
    if theta >= cut:
        sh = sin(0.5 * theta)
        a = 2.0 * sh * sh / t2
        b = (theta - sin(theta)) / (t2 * theta)
    else:
        a = 0.5 - t2 / 24.0
        b = 1.0 / 6.0 - t2 / 120.0
    cdef double P[9]
    cdef double P2[9]
    _hat1(phi, P)
    _mm33(P, P, P2)
    cdef int i
    for i in range(9):
        V[i] = a * P[i] + b * P2[i]
    V[0] += 1.0; V[4] += 1.0; V[8] += 1.0


cdef inline void _vinv1(const double* phi, double cut, double* Vi) noexcept nogil:
    cdef double t2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    cdef double theta = sqrt(t2)
    cdef double c
    if theta >= cut:
        c = (1.0 - 0.5 * theta / tan(0.5 * theta)) / t2
    else:
        c = 1.0 / 12.0 + t2 / 720.0
    cdef double P[9]
    cdef double P2[9]
    _hat1(phi, P)
    _mm33(P, P, P2)
    cdef int i
    for i in range(9):
        Vi[i] = -0.5 * P[i] + c * P2[i]
    Vi[0] += 1.0; Vi[4] += 1.0; Vi[8] += 1.0


cdef inline void _wmat1(const double* phi, double sigma, double cut, double* W) noexcept nogil:
    cdef double t2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    cdef double theta = sqrt(t2)
    cdef double s = exp(sigma)
    cdef double c, a, b, den, st, ct
    cdef double i1, i2, i3, i4
    cdef double P[9]
    cdef double P2[9]
    cdef double M[9]
    cdef double T[9]
    cdef double TM[9]
    cdef int i, k
    if sigma == 0.0:
        c = 1.0
    else:
        c = expm1(sigma) / sigma
    _hat1(phi, P)
    if theta >= cut:
        _mm33(P, P, P2)
        st = sin(theta); ct = cos(theta)
        den = sigma * sigma + t2
        a = (s * sigma * st + theta * (1.0 - s * ct)) / (theta * den)
        b = (c - (sigma * (s * ct - 1.0) + s * theta * st) / den) / t2
    elif fabs(sigma) >= 0.1:
        _mm33(P, P, P2)
        i1 = (s * (sigma - 1.0) + 1.0) / (sigma * sigma)
        i2 = (s * (sigma * sigma - 2.0 * sigma + 2.0) - 2.0) / (sigma ** 3)
        i3 = (s * (sigma ** 3 - 3.0 * sigma * sigma + 6.0 * sigma - 6.0) + 6.0) / (sigma ** 4)
        i4 = (s * (sigma ** 4 - 4.0 * sigma ** 3 + 12.0 * sigma * sigma
                   - 24.0 * sigma + 24.0) - 24.0) / (sigma ** 5)
        a = i1 - t2 / 6.0 * i3
        b = 0.5 * i2 - t2 / 24.0 * i4
    else:
        # both small: truncated series of integral exp(t (sigma I + P))
        for i in range(9):
            M[i] = P[i]
            T[i] = 0.0
            W[i] = 0.0
        M[0] += sigma; M[4] += sigma; M[8] += sigma
        T[0] = T[4] = T[8] = 1.0
        W[0] = W[4] = W[8] = 1.0
        for k in range(1, 13):
            _mm33(T, M, TM)
            for i in range(9):
                T[i] = TM[i] / (k + 1.0)
                W[i] += T[i]
        return
    for i in range(9):
        W[i] = a * P[i] + b * P2[i]
    W[0] += c; W[4] += c; W[8] += c


cdef inline void _se3_exp1(const double* x, double eps, double cut, double* g) noexcept nogil:
    cdef double V[9]
    _vmat1(x + 3, cut, V)
    _mv3(V, x, g)
    _so3_exp1(x + 3, eps, g + 3)


cdef inline void _se3_log1(const double* g, double cut, double* x) noexcept nogil:
    cdef double Vi[9]
    _so3_log1(g + 3, cut, x + 3)
    _vinv1(x + 3, cut, Vi)
    _mv3(Vi, g, x)


cdef inline void _se3_mul1(const double* a, const double* b, double* o) noexcept nogil:
    cdef double r[3]
    _quat_rot1(a + 3, b, r)
    o[0] = a[0] + r[0]; o[1] = a[1] + r[1]; o[2] = a[2] + r[2]
    _quat_mul1(a + 3, b + 3, o + 3)


cdef inline void _se3_inv1(const double* g, double* o) noexcept nogil:
    cdef double r[3]
    _quat_conj1(g + 3, o + 3)
    _quat_rot1(o + 3, g, r)
    o[0] = -r[0]; o[1] = -r[1]; o[2] = -r[2]


cdef inline void _sim3_exp1(const double* x, double eps, double cut, double* g) noexcept nogil:
    cdef double W[9]
    _wmat1(x + 3, x[6], cut, W)
    _mv3(W, x, g)
    _so3_exp1(x + 3, eps, g + 3)
    g[7] = exp(x[6])


cdef inline void _sim3_log1(const double* g, double cut, double* x) noexcept nogil:
    cdef double W[9]
    _so3_log1(g + 3, cut, x + 3)
    x[6] = log(g[7])
    _wmat1(x + 3, x[6], cut, W)
    _solve33(W, g, x)


cdef inline void _sim3_mul1(const double* a, const double* b, double* o) noexcept nogil:
    cdef double r[3]
    _quat_rot1(a + 3, b, r)
    o[0] = a[0] + a[7] * r[0]; o[1] = a[1] + a[7] * r[1]; o[2] = a[2] + a[7] * r[2]
    _quat_mul1(a + 3, b + 3, o + 3)
    o[7] = a[7] * b[7]


cdef inline void _sim3_inv1(const double* g, double* o) noexcept nogil:
    cdef double r[3]
    _quat_conj1(g + 3, o + 3)
    o[7] = 1.0 / g[7]
    _quat_rot1(o + 3, g, r)
    o[0] = -o[7] * r[0]; o[1] = -o[7] * r[1]; o[2] = -o[7] * r[2]


# ---------------------------------------------------------------------------
# batch entry points
# ---------------------------------------------------------------------------


def so3_exp(const floating[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out_np = np.empty((n, 4), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double eps = _eps_of(<floating>0)
    cdef double xi[3]
    cdef double q[4]
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            xi[0] = x[i, 0]; xi[1] = x[i, 1]; xi[2] = x[i, 2]
            if not _finite(xi, 3):
                bad = i
                break
            _so3_exp1(xi, eps, q)
            out[i, 0] = <floating>q[0]; out[i, 1] = <floating>q[1]
            out[i, 2] = <floating>q[2]; out[i, 3] = <floating>q[3]
    if bad >= 0:
        raise DomainError(f"non-finite tangent at item {bad}")
    return out_np


def so3_log(const floating[:, ::1] g):
    cdef Py_ssize_t n = g.shape[0], i
    out_np = np.empty((n, 3), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double cut = _eps_of(<floating>0) ** 0.25
    cdef double q[4]
    cdef double x[3]
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            q[0] = g[i, 0]; q[1] = g[i, 1]; q[2] = g[i, 2]; q[3] = g[i, 3]
            if not _unit_ok(q):
                bad = i
                break
            _so3_log1(q, cut, x)
            out[i, 0] = <floating>x[0]; out[i, 1] = <floating>x[1]; out[i, 2] = <floating>x[2]
    if bad >= 0:
        raise CorruptElementError(f"quaternion norm off by more than 1e-3 at item {bad}")
    return out_np


def so3_mul(const floating[:, ::1] a, const floating[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], i
    out_np = np.empty((n, 4), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double qa[4]
    cdef double qb[4]
    cdef double q[4]
    with nogil:
        for i in range(n):
            qa[0] = a[i, 0]; qa[1] = a[i, 1]; qa[2] = a[i, 2]; qa[3] = a[i, 3]
            qb[0] = b[i, 0]; qb[1] = b[i, 1]; qb[2] = b[i, 2]; qb[3] = b[i, 3]
            _quat_mul1(qa, qb, q)
            out[i, 0] = <floating>q[0]; out[i, 1] = <floating>q[1]
            out[i, 2] = <floating>q[2]; out[i, 3] = <floating>q[3]
    return out_np


def so3_inv(const floating[:, ::1] g):
    cdef Py_ssize_t n = g.shape[0], i
    out_np = np.empty((n, 4), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double q[4]
    cdef double o[4]
    with nogil:
        for i in range(n):
            q[0] = g[i, 0]; q[1] = g[i, 1]; q[2] = g[i, 2]; q[3] = g[i, 3]
            _quat_conj1(q, o)
            out[i, 0] = <floating>o[0]; out[i, 1] = <floating>o[1]
            out[i, 2] = <floating>o[2]; out[i, 3] = <floating>o[3]
    return out_np


def so3_act(const floating[:, ::1] g, const floating[:, ::1] p):
    cdef Py_ssize_t n = g.shape[0], i
    out_np = np.empty((n, 3), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double q[4]
    cdef double pt[3]
    cdef double o[3]
    with nogil:
        for i in range(n):
            q[0] = g[i, 0]; q[1] = g[i, 1]; q[2] = g[i, 2]; q[3] = g[i, 3]
            pt[0] = p[i, 0]; pt[1] = p[i, 1]; pt[2] = p[i, 2]
            _quat_rot1(q, pt, o)
            out[i, 0] = <floating>o[0]; out[i, 1] = <floating>o[1]; out[i, 2] = <floating>o[2]
    return out_np


def se3_exp(const floating[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], i, j
    out_np = np.empty((n, 7), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double eps = _eps_of(<floating>0)
    cdef double cut = eps ** 0.25
    cdef double xi[6]
    cdef double g[7]
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            for j in range(6):
                xi[j] = x[i, j]
            if not _finite(xi, 6):
                bad = i
                break
            _se3_exp1(xi, eps, cut, g)
            for j in range(7):
                out[i, j] = <floating>g[j]
    if bad >= 0:
        raise DomainError(f"non-finite tangent at item {bad}")
    return out_np


def se3_log(const floating[:, ::1] g):
    cdef Py_ssize_t n = g.shape[0], i, j
    out_np = np.empty((n, 6), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double cut = _eps_of(<floating>0) ** 0.25
    cdef double gi[7]
    cdef double x[6]
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            for j in range(7):
                gi[j] = g[i, j]
            if not _unit_ok(gi + 3):
                bad = i
                break
            _se3_log1(gi, cut, x)
            for j in range(6):
                out[i, j] = <floating>x[j]
    if bad >= 0:
        raise CorruptElementError(f"quaternion norm off by more than 1e-3 at item {bad}")
    return out_np


def se3_mul(const floating[:, ::1] a, const floating[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], i, j
    out_np = np.empty((n, 7), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double ga[7]
    cdef double gb[7]
    cdef double g[7]
    with nogil:
        for i in range(n):
            for j in range(7):
                ga[j] = a[i, j]
                gb[j] = b[i, j]
            _se3_mul1(ga, gb, g)
            for j in range(7):
                out[i, j] = <floating>g[j]
    return out_np


def se3_inv(const floating[:, ::1] g):
    cdef Py_ssize_t n = g.shape[0], i, j
    out_np = np.empty((n, 7), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double gi[7]
    cdef double o[7]
    with nogil:
        for i in range(n):
            for j in range(7):
                gi[j] = g[i, j]
            _se3_inv1(gi, o)
            for j in range(7):
                out[i, j] = <floating>o[j]
    return out_np


def se3_act(const floating[:, ::1] g, const floating[:, ::1] p):
    cdef Py_ssize_t n = g.shape[0], i, j
    out_np = np.empty((n, 3), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double gi[7]
    cdef double pt[3]
    cdef double o[3]
    with nogil:
        for i in range(n):
            for j in range(7):
                gi[j] = g[i, j]
            pt[0] = p[i, 0]; pt[1] = p[i, 1]; pt[2] = p[i, 2]
            _quat_rot1(gi + 3, pt, o)
            out[i, 0] = <floating>(o[0] + gi[0])
            out[i, 1] = <floating>(o[1] + gi[1])
            out[i, 2] = <floating>(o[2] + gi[2])
    return out_np


def rxso3_exp(const floating[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out_np = np.empty((n, 5), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double eps = _eps_of(<floating>0)
    cdef double xi[4]
    cdef double q[4]
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            xi[0] = x[i, 0]; xi[1] = x[i, 1]; xi[2] = x[i, 2]; xi[3] = x[i, 3]
            if not _finite(xi, 4):
                bad = i
                break
            _so3_exp1(xi, eps, q)
            out[i, 0] = <floating>q[0]; out[i, 1] = <floating>q[1]
            out[i, 2] = <floating>q[2]; out[i, 3] = <floating>q[3]
            out[i, 4] = <floating>exp(xi[3])
    if bad >= 0:
        raise DomainError(f"non-finite tangent at item {bad}")
    return out_np


def rxso3_log(const floating[:, ::1] g):
    cdef Py_ssize_t n = g.shape[0], i
    out_np = np.empty((n, 4), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double cut = _eps_of(<floating>0) ** 0.25
    cdef double q[4]
    cdef double x[3]
    cdef Py_ssize_t bad = -1
    cdef Py_ssize_t bad_scale = -1
    with nogil:
        for i in range(n):
            q[0] = g[i, 0]; q[1] = g[i, 1]; q[2] = g[i, 2]; q[3] = g[i, 3]
            if not _unit_ok(q):
                bad = i
                break
            if g[i, 4] <= 0:
                bad_scale = i
                break
            _so3_log1(q, cut, x)
            out[i, 0] = <floating>x[0]; out[i, 1] = <floating>x[1]; out[i, 2] = <floating>x[2]
            out[i, 3] = <floating>log(<double>g[i, 4])
    if bad >= 0:
        raise CorruptElementError(f"quaternion norm off by more than 1e-3 at item {bad}")
    if bad_scale >= 0:
        raise CorruptElementError(f"non-positive scale at item {bad_scale}")
    return out_np


def rxso3_mul(const floating[:, ::1] a, const floating[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], i
    out_np = np.empty((n, 5), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double qa[4]
    cdef double qb[4]
    cdef double q[4]
    with nogil:
        for i in range(n):
            qa[0] = a[i, 0]; qa[1] = a[i, 1]; qa[2] = a[i, 2]; qa[3] = a[i, 3]
            qb[0] = b[i, 0]; qb[1] = b[i, 1]; qb[2] = b[i, 2]; qb[3] = b[i, 3]
            _quat_mul1(qa, qb, q)
            out[i, 0] = <floating>q[0]; out[i, 1] = <floating>q[1]
            out[i, 2] = <floating>q[2]; out[i, 3] = <floating>q[3]
            out[i, 4] = <floating>(<double>a[i, 4] * <double>b[i, 4])
    return out_np


def rxso3_inv(const floating[:, ::1] g):
    cdef Py_ssize_t n = g.shape[0], i
    out_np = np.empty((n, 5), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double q[4]
    cdef double o[4]
    with nogil:
        for i in range(n):
            q[0] = g[i, 0]; q[1] = g[i, 1]; q[2] = g[i, 2]; q[3] = g[i, 3]
            _quat_conj1(q, o)
            out[i, 0] = <floating>o[0]; out[i, 1] = <floating>o[1]
            out[i, 2] = <floating>o[2]; out[i, 3] = <floating>o[3]
            out[i, 4] = <floating>(1.0 / <double>g[i, 4])
    return out_np


def rxso3_act(const floating[:, ::1] g, const floating[:, ::1] p):
    cdef Py_ssize_t n = g.shape[0], i
    out_np = np.empty((n, 3), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double q[4]
    cdef double pt[3]
    cdef double o[3]
    cdef double s
    with nogil:
        for i in range(n):
            q[0] = g[i, 0]; q[1] = g[i, 1]; q[2] = g[i, 2]; q[3] = g[i, 3]
            pt[0] = p[i, 0]; pt[1] = p[i, 1]; pt[2] = p[i, 2]
            s = g[i, 4]
            _quat_rot1(q, pt, o)
            out[i, 0] = <floating>(s * o[0]); out[i, 1] = <floating>(s * o[1])
            out[i, 2] = <floating>(s * o[2])
    return out_np


def sim3_exp(const floating[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], i, j
    out_np = np.empty((n, 8), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double eps = _eps_of(<floating>0)
    cdef double cut = eps ** 0.25
    cdef double xi[7]
    cdef double g[8]
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            for j in range(7):
                xi[j] = x[i, j]
            if not _finite(xi, 7):
                bad = i
                break
            _sim3_exp1(xi, eps, cut, g)
            for j in range(8):
                out[i, j] = <floating>g[j]
    if bad >= 0:
        raise DomainError(f"non-finite tangent at item {bad}")
    return out_np


def sim3_log(const floating[:, ::1] g):
    cdef Py_ssize_t n = g.shape[0], i, j
    out_np = np.empty((n, 7), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double cut = _eps_of(<floating>0) ** 0.25
    cdef double gi[8]
    cdef double x[7]
    cdef Py_ssize_t bad = -1
    cdef Py_ssize_t bad_scale = -1
    with nogil:
        for i in range(n):
            for j in range(8):
                gi[j] = g[i, j]
            if not _unit_ok(gi + 3):
                bad = i
                break
            if gi[7] <= 0:
                bad_scale = i
                break
            _sim3_log1(gi, cut, x)
            for j in range(7):
                out[i, j] = <floating>x[j]
    if bad >= 0:
        raise CorruptElementError(f"quaternion norm off by more than 1e-3 at item {bad}")
    if bad_scale >= 0:
        raise CorruptElementError(f"non-positive scale at item {bad_scale}")
    return out_np


def sim3_mul(const floating[:, ::1] a, const floating[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], i, j
    out_np = np.empty((n, 8), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double ga[8]
    cdef double gb[8]
    cdef double g[8]
    with nogil:
        for i in range(n):
            for j in range(8):
                ga[j] = a[i, j]
                gb[j] = b[i, j]
            _sim3_mul1(ga, gb, g)
            for j in range(8):
                out[i, j] = <floating>g[j]
    return out_np


def sim3_inv(const floating[:, ::1] g):
    cdef Py_ssize_t n = g.shape[0], i, j
    out_np = np.empty((n, 8), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double gi[8]
    cdef double o[8]
    with nogil:
        for i in range(n):
            for j in range(8):
                gi[j] = g[i, j]
            _sim3_inv1(gi, o)
            for j in range(8):
                out[i, j] = <floating>o[j]
    return out_np


def sim3_act(const floating[:, ::1] g, const floating[:, ::1] p):
    cdef Py_ssize_t n = g.shape[0], i
    out_np = np.empty((n, 3), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef double q[4]
    cdef double pt[3]
    cdef double o[3]
    cdef double s
    with nogil:
        for i in range(n):
            q[0] = g[i, 3]; q[1] = g[i, 4]; q[2] = g[i, 5]; q[3] = g[i, 6]
            pt[0] = p[i, 0]; pt[1] = p[i, 1]; pt[2] = p[i, 2]
            s = g[i, 7]
            _quat_rot1(q, pt, o)
            out[i, 0] = <floating>(s * o[0] + <double>g[i, 0])
            out[i, 1] = <floating>(s * o[1] + <double>g[i, 1])
            out[i, 2] = <floating>(s * o[2] + <double>g[i, 2])
    return out_np
