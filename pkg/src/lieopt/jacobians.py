"""Closed-form tangent-space Jacobians and their validation registry.

All formulas use the left-perturbation convention of :mod:`lieopt.diff` and
the (translation, rotation) tangent ordering. Every entry in REGISTRY pairs
an analytic formula with the function it differentiates so the test suite can
sweep them against central differences.
"""

import numpy as np

from .backend import py_kernels
from .diff import ParamSet
from .groups import LieBatch, act, compose, exp_map, hat, inverse, log_map, quat_to_matrix
from .kinds import Kind


def so3_jl(phi):
    """Left Jacobian of the rotation exponential, batched (N, 3) -> (N, 3, 3)."""
    return py_kernels._vmat(np.ascontiguousarray(phi))


def so3_jl_inv(phi):
    return py_kernels._vinv(np.ascontiguousarray(phi))


def _q_coeffs(theta):
    cut = np.finfo(np.float64).eps ** 0.25
    big = theta >= cut
    safe = np.where(big, theta, 1.0)
    t2 = theta * theta
    s, c = np.sin(theta), np.cos(theta)
    m2 = np.where(big, (theta - s) / safe**3, 1.0 / 6.0 - t2 / 120.0)
    m3 = np.where(big, (0.5 * t2 + c - 1.0) / safe**4, 1.0 / 24.0 - t2 / 720.0)
    m4 = np.where(big, (theta - 1.5 * s + 0.5 * theta * c) / safe**5, 1.0 / 120.0 - t2 / 2520.0)
    return m2, m3, m4


def se3_q_matrix(rho, phi):
    """Mixed block of the SE3 left Jacobian."""
    theta = np.sqrt((phi * phi).sum(axis=-1))
    m2, m3, m4 = _q_coeffs(theta)
    px = hat(phi)
    rx = hat(rho)
    pr = px @ rx
    rp = rx @ px
    prp = pr @ px
    m2 = m2[..., None, None]
    m3 = m3[..., None, None]
    m4 = m4[..., None, None]
    return (0.5 * rx
            + m2 * (pr + rp + prp)
            + m3 * (px @ pr + rp @ px - 3.0 * prp)
            + m4 * (prp @ px + px @ pr @ px))


def se3_jl(xi):
    """SE3 left Jacobian, (N, 6) -> (N, 6, 6), tangent ordered (rho, phi)."""
    rho, phi = xi[..., :3], xi[..., 3:]
    j = so3_jl(phi)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = j
    out[..., 3:, 3:] = j
    out[..., :3, 3:] = se3_q_matrix(rho, phi)
    return out


def se3_jl_inv(xi):
    rho, phi = xi[..., :3], xi[..., 3:]
    ji = so3_jl_inv(phi)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = ji
    out[..., 3:, 3:] = ji
    out[..., :3, 3:] = -ji @ se3_q_matrix(rho, phi) @ ji
    return out


def se3_jr_inv(xi):
    """Inverse right Jacobian: Jr(xi)^-1 = Jl(-xi)^-1."""
    return se3_jl_inv(-np.asarray(xi))


def se3_adjoint(g):
    """Adjoint of SE3 elements, (N, 7) -> (N, 6, 6): Exp(Adj(g) xi) = g Exp(xi) g^-1."""
    v = g.values if isinstance(g, LieBatch) else np.asarray(g)
    r = quat_to_matrix(v[..., 3:7])
    out = np.zeros(v.shape[:-1] + (6, 6))
    out[..., :3, :3] = r
    out[..., 3:, 3:] = r
    out[..., :3, 3:] = hat(v[..., :3]) @ r
    return out


def edge_jacobians(xi_pose, xj_pose, z_meas):
    """Analytic Jacobians of r = Log(Z^-1 Xi^-1 Xj) for left perturbations
    of Xi and Xj. Returns (r, Ji, Jj) with shapes (N,6), (N,6,6), (N,6,6)."""
    t = compose(inverse(z_meas), compose(inverse(xi_pose), xj_pose))
    r = log_map(t).values
    jr_inv = se3_jr_inv(r)
    adj = se3_adjoint(inverse(xj_pose))
    jj = jr_inv @ adj
    return r, -jj, jj


# ---------------------------------------------------------------------------
# registered analytic forms, swept against finite differences by the tests
# ---------------------------------------------------------------------------

def _f1(params):
    x = params[0]
    g = LieBatch._wrap(Kind.so3, x.reshape(1, 3))
    return log_map(exp_map(g)).values.ravel()


def _f1_analytic(params):
    return np.eye(3)


def _make_f2(y):
    gy = exp_map(LieBatch._wrap(Kind.so3, y.reshape(1, 3)))

    def fn(params):
        gx = exp_map(LieBatch._wrap(Kind.so3, params[0].reshape(1, 3)))
        return log_map(compose(gx, gy)).values.ravel()

    def analytic(params):
        x = params[0].reshape(1, 3)
        gx = exp_map(LieBatch._wrap(Kind.so3, x))
        z = log_map(compose(gx, gy)).values
        return (so3_jl_inv(z) @ so3_jl(x))[0]

    return fn, analytic


def _make_f3(p):
    def fn(params):
        gx = exp_map(LieBatch._wrap(Kind.so3, params[0].reshape(1, 3)))
        return act(gx, p.reshape(1, 3)).ravel()

    def analytic(params):
        x = params[0].reshape(1, 3)
        gx = exp_map(LieBatch._wrap(Kind.so3, x))
        rp = act(gx, p.reshape(1, 3))
        return (-hat(rp) @ so3_jl(x))[0]

    return fn, analytic


def _make_edge(xi_pose, xj_pose, z_meas):
    zi = inverse(z_meas)

    def fn(params):
        xi, xj = params[0], params[1]
        return log_map(compose(zi, compose(inverse(xi), xj))).values.ravel()

    def analytic(params):
        r, ji, jj = edge_jacobians(params[0], params[1], z_meas)
        return np.concatenate([ji[0], jj[0]], axis=1)

    return fn, analytic


def _make_inverse_residual(u):
    def fn(params):
        return log_map(compose(params[0], u)).values.ravel()

    def analytic(params):
        r = log_map(compose(params[0], u)).values
        return se3_jl_inv(r)[0]

    return fn, analytic


def _ball(rng, radius=np.pi - 0.2):
    # f1 is the identity only inside the principal ball
    x = rng.normal(size=3)
    n = np.linalg.norm(x)
    return x if n < radius else x * (radius * rng.uniform(0.1, 1.0) / n)


def _sample_f1(rng):
    return _f1, ParamSet(_ball(rng)), _f1_analytic


def _sample_f2(rng):
    fn, analytic = _make_f2(_ball(rng))
    return fn, ParamSet(_ball(rng)), analytic


def _sample_f3(rng):
    fn, analytic = _make_f3(rng.normal(size=3))
    return fn, ParamSet(rng.normal(size=3)), analytic


def _sample_edge(rng):
    from .groups import random_group
    xi_pose = random_group(Kind.SE3, (1,), sigma=1.0, seed=rng)
    xj_pose = random_group(Kind.SE3, (1,), sigma=1.0, seed=rng)
    z = random_group(Kind.SE3, (1,), sigma=1.0, seed=rng)
    fn, analytic = _make_edge(xi_pose, xj_pose, z)
    return fn, ParamSet(xi_pose, xj_pose), analytic


def _sample_inverse_residual(rng):
    from .groups import random_group
    theta = random_group(Kind.SE3, (1,), sigma=1.0, seed=rng)
    u = random_group(Kind.SE3, (1,), sigma=1.0, seed=rng)
    fn, analytic = _make_inverse_residual(u)
    return fn, ParamSet(theta), analytic


# name -> sampler(rng) -> (fn, params, analytic)
REGISTRY = {
    "f1_exp_log": _sample_f1,
    "f2_compose_log": _sample_f2,
    "f3_rotate_point": _sample_f3,
    "pose_edge_residual": _sample_edge,
    "transform_inverse_residual": _sample_inverse_residual,
}
