"""Discrete IMU preintegration on the manifold with covariance propagation.

State holds the preintegrated deltas (rotation, velocity, position) between
two instants, independent of the absolute start state, plus a 9x9 covariance
over the error state ordered (dphi, dv, dp). The rotation error is the right
perturbation DR_noisy = DR Exp(dphi).

Noise densities are continuous-time (rad/s/sqrt(Hz), m/s^2/sqrt(Hz));
discrete injection per step uses variance sigma^2 / dt. Integration is
left-point Euler: a measurement is held constant over its interval.
Everything broadcasts over leading batch dimensions, so thousands of
Monte-Carlo integrations run as one batch.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .groups import LieBatch, act, compose, exp_map, identity, right_jacobian_so3, to_matrix
from .backend.py_kernels import hat
from .kinds import Kind


@dataclass
class ImuNoise:
    sigma_gyro: float = 0.0
    sigma_accel: float = 0.0

    def __post_init__(self):
        if self.sigma_gyro < 0 or self.sigma_accel < 0:
            raise DomainError("noise densities must be >= 0")


@dataclass
class PreintState:
    duration: float
    rot: LieBatch          # SO3, batch shape S
    dv: np.ndarray         # (S..., 3)
    dp: np.ndarray         # (S..., 3)
    cov: np.ndarray        # (S..., 9, 9)
    bias_gyro: np.ndarray  # (3,)
    bias_accel: np.ndarray # (3,)


@dataclass
class NavState:
    pos: np.ndarray
    vel: np.ndarray
    rot: LieBatch


def initial_preint(batch_shape=(), bias_gyro=None, bias_accel=None):
    shape = (batch_shape,) if isinstance(batch_shape, int) else tuple(batch_shape)
    return PreintState(
        duration=0.0,
        rot=identity(Kind.SO3, shape),
        dv=np.zeros(shape + (3,)),
        dp=np.zeros(shape + (3,)),
        cov=np.zeros(shape + (9, 9)),
        bias_gyro=np.zeros(3) if bias_gyro is None else np.asarray(bias_gyro, dtype=np.float64),
        bias_accel=np.zeros(3) if bias_accel is None else np.asarray(bias_accel, dtype=np.float64),
    )


def integrate_step(state, omega, accel, dt, noise=None):
    """Fold one gyro/accel sample over dt seconds into the preintegrated state."""
    if dt <= 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    omega = np.asarray(omega, dtype=np.float64)
    accel = np.asarray(accel, dtype=np.float64)
    if not (np.isfinite(omega).all() and np.isfinite(accel).all()):
        raise DomainError("non-finite measurement")
    noise = noise or ImuNoise()
    w = omega - state.bias_gyro
    a = accel - state.bias_accel

    rot_mat = to_matrix(state.rot)
    shape = np.broadcast_shapes(state.rot.shape, w.shape[:-1], a.shape[:-1])
    ra = (rot_mat @ a[..., None])[..., 0]

    dp = state.dp + state.dv * dt + (0.5 * dt * dt) * ra
    dv = state.dv + dt * ra
    step = exp_map(LieBatch._wrap(Kind.so3, np.broadcast_to(w * dt, shape + (3,)).copy()))
    rot = compose(state.rot, step)

    # error-state transition, ordered (dphi, dv, dp); rot_mat is the
    # pre-update rotation as in the underlying discrete model
    rhat = rot_mat @ hat(a) * dt
    amat = np.zeros(shape + (9, 9))
    eye = np.eye(3)
    amat[..., 0:3, 0:3] = np.swapaxes(to_matrix(step), -1, -2)
    amat[..., 3:6, 0:3] = -rhat
    amat[..., 6:9, 0:3] = -0.5 * dt * rhat
    amat[..., 3:6, 3:6] = eye
    amat[..., 6:9, 6:9] = eye
    amat[..., 0:3, 3:6] = 0.0
    amat[..., 6:9, 3:6] = dt * eye

    bg = np.zeros(shape + (9, 3))
    bg[..., 0:3, :] = right_jacobian_so3(np.broadcast_to(w * dt, shape + (3,))) * dt
    ba = np.zeros(shape + (9, 3))
    ba[..., 3:6, :] = rot_mat * dt
    ba[..., 6:9, :] = rot_mat * (0.5 * dt * dt)

    cov = amat @ state.cov @ np.swapaxes(amat, -1, -2)
    cov += (noise.sigma_gyro ** 2 / dt) * (bg @ np.swapaxes(bg, -1, -2))
    cov += (noise.sigma_accel ** 2 / dt) * (ba @ np.swapaxes(ba, -1, -2))
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))

    return PreintState(
        duration=state.duration + dt,
        rot=rot,
        dv=np.broadcast_to(dv, shape + (3,)).copy(),
        dp=np.broadcast_to(dp, shape + (3,)).copy(),
        cov=cov,
        bias_gyro=state.bias_gyro,
        bias_accel=state.bias_accel,
    )


def integrate_batch(state, omegas, accels, dts, noise=None):
    """Left-to-right fold of integrate_step over equal-length series."""
    omegas = np.asarray(omegas, dtype=np.float64)
    accels = np.asarray(accels, dtype=np.float64)
    dts = np.atleast_1d(np.asarray(dts, dtype=np.float64))
    if not (len(omegas) == len(accels) == len(dts)):
        raise ShapeError(
            f"series lengths differ: {len(omegas)}, {len(accels)}, {len(dts)}")
    for k in range(len(dts)):
        state = integrate_step(state, omegas[k], accels[k], float(dts[k]), noise)
    return state


GRAVITY = np.array([0.0, 0.0, -9.81])


def predict(start, state, gravity=None):
    """Navigation state after applying the preintegrated deltas from start."""
    g = GRAVITY if gravity is None else np.asarray(gravity, dtype=np.float64)
    t = state.duration
    rot = compose(start.rot, state.rot)
    vel = start.vel + g * t + act(start.rot, state.dv)
    pos = start.pos + start.vel * t + 0.5 * g * t * t + act(start.rot, state.dp)
    return NavState(pos=pos, vel=vel, rot=rot)


def initial_nav(batch_shape=()):
    shape = (batch_shape,) if isinstance(batch_shape, int) else tuple(batch_shape)
    return NavState(pos=np.zeros(shape + (3,)), vel=np.zeros(shape + (3,)),
                    rot=identity(Kind.SO3, shape))
