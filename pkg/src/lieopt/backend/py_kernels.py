"""Vectorized numpy kernels for the four transformation families.

Every function works on contiguous ``(N, k)`` arrays of one float dtype and
returns a new array of the same dtype. Quaternions are assumed unit on input
(callers normalize at construction); products are renormalized on output.

Small-angle handling follows two thresholds: the exponential map switches to
its Taylor branch below machine epsilon, while series that divide by higher
powers of the angle (V, V^-1, W) switch below eps**0.25 where the closed
forms start losing digits.
"""

import numpy as np

from ..errors import CorruptElementError, DomainError

NAME = "python"

# |norm(q) - 1| > 1e-3 expressed on the squared norm
_N2_LO = 0.998001
_N2_HI = 1.002001


def _check_finite(x, what="tangent"):
    if not np.isfinite(x).all():
        bad = int(np.argmin(np.isfinite(x).all(axis=1)))
        raise DomainError(f"non-finite {what} at item {bad}")


def _check_unit(q):
    n2 = np.einsum("ij,ij->i", q, q)
    if n2.size and (n2.min() < _N2_LO or n2.max() > _N2_HI):
        bad = int(np.argmax((n2 < _N2_LO) | (n2 > _N2_HI)))
        raise CorruptElementError(f"quaternion norm off by more than 1e-3 at item {bad}")


def _check_scale(s):
    if s.size and s.min() <= 0:
        raise CorruptElementError(f"non-positive scale at item {int(np.argmax(s <= 0))}")


def _eps(dtype):
    return np.finfo(dtype).eps


def _norm(v):
    return np.sqrt((v * v).sum(axis=-1))


def hat(v):
    """Batched skew matrix: hat(v) @ y == cross(v, y)."""
    v = np.asarray(v)
    out = np.zeros(v.shape[:-1] + (3, 3), dtype=v.dtype)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def _quat_rotate(q, p):
    # p + 2 v x (v x p + w p), valid for unit quaternions
    v = q[:, :3]
    w = q[:, 3:4]
    t = np.cross(v, p) + w * p
    return p + 2.0 * np.cross(v, t)


def _quat_conj(q):
    out = q.copy()
    out[:, :3] = -out[:, :3]
    return out


def _quat_mul(a, b):
    ax, ay, az, aw = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bx, by, bz, bw = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    out = np.empty_like(a)
    out[:, 0] = aw * bx + ax * bw + ay * bz - az * by
    out[:, 1] = aw * by - ax * bz + ay * bw + az * bx
    out[:, 2] = aw * bz + ax * by - ay * bx + az * bw
    out[:, 3] = aw * bw - ax * bx - ay * by - az * bz
    out /= _norm(out)[:, None]
    return out


# ---------------------------------------------------------------------------
# SO3
# ---------------------------------------------------------------------------

def so3_exp(x):
    _check_finite(x)
    theta = _norm(x)
    t2 = theta * theta
    big = theta > _eps(x.dtype)
    safe = np.where(big, theta, 1.0)
    gamma = np.where(big, np.sin(0.5 * theta) / safe, 0.5 - t2 / 48.0 + t2 * t2 / 3840.0)
    w = np.where(big, np.cos(0.5 * theta), 1.0 - t2 / 8.0 + t2 * t2 / 384.0)
    out = np.empty(x.shape[:-1] + (4,), dtype=x.dtype)
    out[:, :3] = x * gamma[:, None]
    out[:, 3] = w
    return out


def so3_log(q):
    _check_unit(q)
    return _so3_log_unchecked(q)


def _so3_log_unchecked(q):
    # Both branches are invariant to the quaternion norm, so no
    # renormalization is needed beyond the caller's corruption check.
    # Resolve the double cover by mapping to the w >= 0 hemisphere first.
    sign = np.where(q[:, 3] < 0, -1.0, 1.0).astype(q.dtype)
    v = q[:, :3] * sign[:, None]
    w = q[:, 3] * sign
    n = _norm(v)
    big = n > _eps(q.dtype) ** 0.25
    safe_n = np.where(big, n, 1.0)
    k_big = 2.0 * np.arctan2(n, w) / safe_n
    k_small = (2.0 / w) * (1.0 - n * n / (3.0 * w * w))
    return v * np.where(big, k_big, k_small)[:, None]


def so3_mul(a, b):
    return _quat_mul(a, b)


def so3_inv(q):
    out = _quat_conj(q)
    out /= _norm(out)[:, None]
    return out


def so3_act(q, p):
    return _quat_rotate(q, p)


# ---------------------------------------------------------------------------
# translation sub-maps: V (left Jacobian of SO3) and the scaled variant W
# ---------------------------------------------------------------------------

def _vmat(phi):
    theta = _norm(phi)
    cut = _eps(phi.dtype) ** 0.25
    big = theta >= cut
    safe = np.where(big, theta, 1.0)
    t2 = theta * theta
    sh = np.sin(0.5 * theta)
    a = np.where(big, 2.0 * sh * sh / (safe * safe), 0.5 - t2 / 24.0)
    b = np.where(big, (theta - np.sin(theta)) / (safe * safe * safe), 1.0 / 6.0 - t2 / 120.0)
    ph = hat(phi)
    out = ph * a[:, None, None] + (ph @ ph) * b[:, None, None]
    out[:, 0, 0] += 1.0
    out[:, 1, 1] += 1.0
    out[:, 2, 2] += 1.0
    return out


def _vinv(phi):
    theta = _norm(phi)
    cut = _eps(phi.dtype) ** 0.25
    big = theta >= cut
    safe = np.where(big, theta, 1.0)
    t2 = theta * theta
    with np.errstate(invalid="ignore", divide="ignore"):
        c_big = (1.0 - 0.5 * safe / np.tan(0.5 * safe)) / (safe * safe)
    c = np.where(big, c_big, 1.0 / 12.0 + t2 / 720.0)
    ph = hat(phi)
    out = ph * (-0.5) + (ph @ ph) * c[:, None, None]
    out[:, 0, 0] += 1.0
    out[:, 1, 1] += 1.0
    out[:, 2, 2] += 1.0
    return out


def _wmat(phi, sigma):
    """Integral of exp(t*(sigma I + hat(phi))) over t in [0, 1].

    Three regimes: closed form for theta >= eps**0.25; a theta-series with
    exact sigma terms when theta is small but sigma is not; a joint power
    series when both are small (the closed forms cancel catastrophically).
    """
    n = phi.shape[0]
    dtype = phi.dtype
    theta = _norm(phi)
    cut = _eps(dtype) ** 0.25
    s = np.exp(sigma)
    sig_safe = np.where(sigma == 0, 1.0, sigma)
    c_coef = np.where(sigma == 0, 1.0, np.expm1(sigma) / sig_safe)

    ph = hat(phi)
    ph2 = ph @ ph
    out = np.zeros((n, 3, 3), dtype=dtype)

    gen = theta >= cut
    if gen.any():
        th = theta[gen]
        sg = sigma[gen]
        se = s[gen]
        sin_t = np.sin(th)
        cos_t = np.cos(th)
        den = sg * sg + th * th
        a = (se * sg * sin_t + th * (1.0 - se * cos_t)) / (th * den)
        b = (c_coef[gen] - (sg * (se * cos_t - 1.0) + se * th * sin_t) / den) / (th * th)
        blk = ph[gen] * a[:, None, None] + ph2[gen] * b[:, None, None]
        blk[:, 0, 0] += c_coef[gen]
        blk[:, 1, 1] += c_coef[gen]
        blk[:, 2, 2] += c_coef[gen]
        out[gen] = blk

    ik = (~gen) & (np.abs(sigma) >= 0.1)
    if ik.any():
        th = theta[ik]
        sg = sigma[ik]
        se = s[ik]
        t2 = th * th
        i1 = (se * (sg - 1.0) + 1.0) / sg**2
        i2 = (se * (sg * sg - 2.0 * sg + 2.0) - 2.0) / sg**3
        i3 = (se * (sg**3 - 3.0 * sg**2 + 6.0 * sg - 6.0) + 6.0) / sg**4
        i4 = (se * (sg**4 - 4.0 * sg**3 + 12.0 * sg**2 - 24.0 * sg + 24.0) - 24.0) / sg**5
        a = i1 - t2 / 6.0 * i3
        b = 0.5 * i2 - t2 / 24.0 * i4
        blk = ph[ik] * a[:, None, None] + ph2[ik] * b[:, None, None]
        blk[:, 0, 0] += c_coef[ik]
        blk[:, 1, 1] += c_coef[ik]
        blk[:, 2, 2] += c_coef[ik]
        out[ik] = blk

    ser = (~gen) & (~ik)
    if ser.any():
        m = ph[ser].copy()
        idx = np.arange(3)
        m[:, idx, idx] += sigma[ser, None]
        acc = np.zeros_like(m)
        acc[:, idx, idx] = 1.0
        term = acc.copy()
        for k in range(1, 13):
            term = term @ m / (k + 1.0)
            acc += term
        out[ser] = acc

    return out


# ---------------------------------------------------------------------------
# SE3
# ---------------------------------------------------------------------------

def se3_exp(x):
    _check_finite(x)
    rho, phi = x[:, :3], x[:, 3:]
    out = np.empty(x.shape[:-1] + (7,), dtype=x.dtype)
    out[:, :3] = (_vmat(phi) @ rho[:, :, None])[:, :, 0]
    out[:, 3:] = so3_exp(phi)
    return out


def se3_log(g):
    t, q = g[:, :3], g[:, 3:]
    _check_unit(q)
    phi = _so3_log_unchecked(q)
    out = np.empty(g.shape[:-1] + (6,), dtype=g.dtype)
    out[:, :3] = (_vinv(phi) @ t[:, :, None])[:, :, 0]
    out[:, 3:] = phi
    return out


def se3_mul(a, b):
    out = np.empty_like(a)
    out[:, :3] = a[:, :3] + _quat_rotate(a[:, 3:], b[:, :3])
    out[:, 3:] = _quat_mul(a[:, 3:], b[:, 3:])
    return out


def se3_inv(g):
    out = np.empty_like(g)
    qi = so3_inv(g[:, 3:])
    out[:, 3:] = qi
    out[:, :3] = -_quat_rotate(qi, g[:, :3])
    return out


def se3_act(g, p):
    return _quat_rotate(g[:, 3:], p) + g[:, :3]


# ---------------------------------------------------------------------------
# RxSO3
# ---------------------------------------------------------------------------

def rxso3_exp(x):
    _check_finite(x)
    out = np.empty(x.shape[:-1] + (5,), dtype=x.dtype)
    out[:, :4] = so3_exp(x[:, :3])
    out[:, 4] = np.exp(x[:, 3])
    return out


def rxso3_log(g):
    _check_unit(g[:, :4])
    _check_scale(g[:, 4])
    out = np.empty(g.shape[:-1] + (4,), dtype=g.dtype)
    out[:, :3] = _so3_log_unchecked(g[:, :4])
    out[:, 3] = np.log(g[:, 4])
    return out


def rxso3_mul(a, b):
    out = np.empty_like(a)
    out[:, :4] = _quat_mul(a[:, :4], b[:, :4])
    out[:, 4] = a[:, 4] * b[:, 4]
    return out


def rxso3_inv(g):
    out = np.empty_like(g)
    out[:, :4] = so3_inv(g[:, :4])
    out[:, 4] = 1.0 / g[:, 4]
    return out


def rxso3_act(g, p):
    return _quat_rotate(g[:, :4], p) * g[:, 4:5]


# ---------------------------------------------------------------------------
# Sim3
# ---------------------------------------------------------------------------

def sim3_exp(x):
    _check_finite(x)
    tau, phi, sigma = x[:, :3], x[:, 3:6], x[:, 6]
    out = np.empty(x.shape[:-1] + (8,), dtype=x.dtype)
    out[:, :3] = (_wmat(phi, sigma) @ tau[:, :, None])[:, :, 0]
    out[:, 3:7] = so3_exp(phi)
    out[:, 7] = np.exp(sigma)
    return out


def sim3_log(g):
    t, q, s = g[:, :3], g[:, 3:7], g[:, 7]
    _check_unit(q)
    _check_scale(s)
    phi = _so3_log_unchecked(q)
    sigma = np.log(s)
    out = np.empty(g.shape[:-1] + (7,), dtype=g.dtype)
    out[:, :3] = np.linalg.solve(_wmat(phi, sigma), t[:, :, None])[:, :, 0]
    out[:, 3:6] = phi
    out[:, 6] = sigma
    return out


def sim3_mul(a, b):
    out = np.empty_like(a)
    out[:, :3] = a[:, :3] + a[:, 7:8] * _quat_rotate(a[:, 3:7], b[:, :3])
    out[:, 3:7] = _quat_mul(a[:, 3:7], b[:, 3:7])
    out[:, 7] = a[:, 7] * b[:, 7]
    return out


def sim3_inv(g):
    out = np.empty_like(g)
    qi = so3_inv(g[:, 3:7])
    si = 1.0 / g[:, 7]
    out[:, 3:7] = qi
    out[:, 7] = si
    out[:, :3] = -si[:, None] * _quat_rotate(qi, g[:, :3])
    return out


def sim3_act(g, p):
    return g[:, 7:8] * _quat_rotate(g[:, 3:7], p) + g[:, :3]
