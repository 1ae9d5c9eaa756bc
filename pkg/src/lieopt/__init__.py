"""Batched Lie groups, tangent-space Jacobians and a damped least-squares
stack, with pose-graph and IMU-preintegration front ends."""

from . import backend
from .groups import (
    LieBatch,
    act,
    compose,
    exp_map,
    hat,
    identity,
    inverse,
    left_jacobian_so3,
    log_map,
    random_group,
    random_tangent,
    right_jacobian_so3,
    to_matrix,
)
from .kinds import Kind

__version__ = "0.1.0"

__all__ = [
    "Kind",
    "LieBatch",
    "act",
    "backend",
    "compose",
    "exp_map",
    "hat",
    "identity",
    "inverse",
    "left_jacobian_so3",
    "log_map",
    "random_group",
    "random_tangent",
    "right_jacobian_so3",
    "to_matrix",
]
