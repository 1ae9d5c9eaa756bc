"""Synthetic problem generators used by the CLI and the test suite."""

import numpy as np

from .groups import LieBatch, compose, exp_map, random_tangent
from .kinds import Kind
from .posegraph import Edge, PoseGraph


def _circle_pose(angle, radius):
    # position on the circle, heading along the tangent
    yaw = angle + np.pi / 2
    q = np.array([0.0, 0.0, np.sin(yaw / 2), np.cos(yaw / 2)])
    t = np.array([radius * np.cos(angle), radius * np.sin(angle), 0.0])
    return np.concatenate([t, q])


def make_circle_graph(n_nodes=100, radius=10.0, trans_noise=0.05, rot_noise=0.02,
                      meas_trans_noise=0.0, meas_rot_noise=0.0, seed=0):
    """Noisy circle with odometry edges and one loop closure.

    Ground-truth poses sit on a circle; the stored node estimates are the
    truth perturbed by the given translation/rotation noise, so the exact
    circle stays the global optimum (chi2 -> 0) unless measurement noise is
    also requested. Information matrices are diag(1/trans^2, 1/rot^2) using
    the estimate noise scales.
    """
    rng = np.random.default_rng(seed)
    truth = np.array([_circle_pose(2 * np.pi * k / n_nodes, radius) for k in range(n_nodes)])
    gt = LieBatch._wrap(Kind.SE3, truth)

    def perturb(batch, t_sig, r_sig):
        tan = rng.standard_normal((batch.n_items, 6))
        tan[:, :3] *= t_sig
        tan[:, 3:] *= r_sig
        step = exp_map(LieBatch._wrap(Kind.se3, tan))
        return compose(step, batch)

    estimates = perturb(gt, trans_noise, rot_noise)
    # anchor keeps its ground-truth pose so the gauge is pinned to the circle
    est_values = estimates.values.copy()
    est_values[0] = truth[0]

    t_info = 1.0 / max(trans_noise, 1e-3) ** 2
    r_info = 1.0 / max(rot_noise, 1e-3) ** 2
    info = np.diag([t_info] * 3 + [r_info] * 3)

    from .groups import inverse
    pairs = [(k, (k + 1) % n_nodes) for k in range(n_nodes)]  # last one closes the loop
    edges = []
    for i, j in pairs:
        z = compose(inverse(gt[i]), gt[j])
        if meas_trans_noise > 0 or meas_rot_noise > 0:
            z = perturb(LieBatch._wrap(Kind.SE3, z.values.reshape(1, 7)),
                        meas_trans_noise, meas_rot_noise)
            edges.append(Edge(i, j, z.values[0].copy(), info.copy()))
        else:
            edges.append(Edge(i, j, z.values.copy(), info.copy()))

    graph = PoseGraph()
    graph.nodes = {k: est_values[k].copy() for k in range(n_nodes)}
    graph.edges = edges
    graph.anchor = 0
    return graph


def constant_rate_imu(omega, accel, dt, n_steps, t0=0.0):
    """IMU CSV rows (t, wx, wy, wz, ax, ay, az) for constant body-frame rates."""
    rows = np.zeros((n_steps, 7))
    rows[:, 0] = t0 + dt * np.arange(n_steps)
    rows[:, 1:4] = np.asarray(omega)
    rows[:, 4:7] = np.asarray(accel)
    return rows
