"""Transformation families and their per-item storage layouts.

Group elements store a unit quaternion in (x, y, z, w) order. Translation
leads where present, scale trails:

    SO3   = (qx, qy, qz, qw)                  so3   = (wx, wy, wz)
    SE3   = (tx, ty, tz, qx, qy, qz, qw)      se3   = (rx, ry, rz, wx, wy, wz)
    Sim3  = (tx, ty, tz, qx, qy, qz, qw, s)   sim3  = (rx, ry, rz, wx, wy, wz, ls)
    RxSO3 = (qx, qy, qz, qw, s)               rxso3 = (wx, wy, wz, ls)

where (rx, ry, rz) is the translational tangent, (wx, wy, wz) the rotational
tangent and ls the log of the scale s.
"""

import enum


class Kind(enum.Enum):
    SO3 = "SO3"
    so3 = "so3"
    SE3 = "SE3"
    se3 = "se3"
    Sim3 = "Sim3"
    sim3 = "sim3"
    RxSO3 = "RxSO3"
    rxso3 = "rxso3"


_GROUP_TO_ALGEBRA = {
    Kind.SO3: Kind.so3,
    Kind.SE3: Kind.se3,
    Kind.Sim3: Kind.sim3,
    Kind.RxSO3: Kind.rxso3,
}
_ALGEBRA_TO_GROUP = {a: g for g, a in _GROUP_TO_ALGEBRA.items()}

ITEM_SIZE = {
    Kind.SO3: 4,
    Kind.so3: 3,
    Kind.SE3: 7,
    Kind.se3: 6,
    Kind.Sim3: 8,
    Kind.sim3: 7,
    Kind.RxSO3: 5,
    Kind.rxso3: 4,
}

# Offset of the quaternion block inside a group item.
QUAT_OFFSET = {Kind.SO3: 0, Kind.SE3: 3, Kind.Sim3: 3, Kind.RxSO3: 0}

# Dimension of the tangent space of one group item.
TANGENT_DIM = {
    Kind.SO3: 3,
    Kind.SE3: 6,
    Kind.Sim3: 7,
    Kind.RxSO3: 4,
}


def is_group(kind):
    return kind in _GROUP_TO_ALGEBRA


def is_algebra(kind):
    return kind in _ALGEBRA_TO_GROUP


def algebra_of(kind):
    return _GROUP_TO_ALGEBRA[kind]


def group_of(kind):
    return _ALGEBRA_TO_GROUP[kind]
