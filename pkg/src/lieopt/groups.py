"""Batched Lie-group containers and closed-form manifold maps.

A :class:`LieBatch` holds any number of group elements or tangent vectors of
one :class:`~lieopt.kinds.Kind` in a dense ``batch_shape + (item_size,)``
array. All operations are pure: they never mutate their inputs and are safe
to share across threads.

Group-valued results keep their quaternion block renormalized, so unit norm
survives arbitrarily long composition chains.
"""

import numpy as np

from . import backend
from .backend import py_kernels
from .errors import CorruptElementError, DomainError, KindError, ShapeError
from .kinds import ITEM_SIZE, QUAT_OFFSET, Kind, algebra_of, group_of, is_algebra, is_group

_QUAT_TOL = 1e-3

_EXP = {Kind.so3: "so3_exp", Kind.se3: "se3_exp", Kind.sim3: "sim3_exp", Kind.rxso3: "rxso3_exp"}
_LOG = {Kind.SO3: "so3_log", Kind.SE3: "se3_log", Kind.Sim3: "sim3_log", Kind.RxSO3: "rxso3_log"}
_MUL = {Kind.SO3: "so3_mul", Kind.SE3: "se3_mul", Kind.Sim3: "sim3_mul", Kind.RxSO3: "rxso3_mul"}
_INV = {Kind.SO3: "so3_inv", Kind.SE3: "se3_inv", Kind.Sim3: "sim3_inv", Kind.RxSO3: "rxso3_inv"}
_ACT = {Kind.SO3: "so3_act", Kind.SE3: "se3_act", Kind.Sim3: "sim3_act", Kind.RxSO3: "rxso3_act"}


class LieBatch:
    """Batch of group elements or tangent vectors tagged with their kind."""

    __slots__ = ("kind", "values")

    def __init__(self, kind, values, copy=True):
        if not isinstance(kind, Kind):
            kind = Kind[kind] if isinstance(kind, str) else kind
        values = np.array(values, copy=copy) if copy else np.asarray(values)
        if values.dtype not in (np.float32, np.float64):
            values = values.astype(np.float64)
        k = ITEM_SIZE[kind]
        if values.ndim == 0 or values.shape[-1] != k:
            raise ShapeError(f"{kind.value} items need {k} scalars, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise DomainError(f"non-finite entries in {kind.value} data")
        if is_group(kind):
            off = QUAT_OFFSET[kind]
            q = values[..., off:off + 4]
            norm = np.sqrt((q * q).sum(axis=-1))
            if np.abs(norm - 1.0).max() > _QUAT_TOL:
                raise CorruptElementError(
                    f"quaternion norm deviates from 1 by more than {_QUAT_TOL}"
                )
            values[..., off:off + 4] = q / norm[..., None]
            if kind in (Kind.Sim3, Kind.RxSO3) and (values[..., -1] <= 0).any():
                raise DomainError("scale must be strictly positive")
        self.kind = kind
        self.values = values

    @classmethod
    def _wrap(cls, kind, values):
        out = object.__new__(cls)
        out.kind = kind
        out.values = values
        return out

    @property
    def shape(self):
        return self.values.shape[:-1]

    @property
    def n_items(self):
        return int(np.prod(self.shape)) if self.shape else 1

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def item_size(self):
        return ITEM_SIZE[self.kind]

    def flat(self):
        """Contiguous (n_items, item_size) view of the data."""
        return np.ascontiguousarray(self.values.reshape(-1, self.item_size))

    def __getitem__(self, idx):
        v = self.values[idx]
        if v.ndim == 0 or v.shape[-1] != self.item_size:
            raise ShapeError("cannot index into item scalars")
        return LieBatch._wrap(self.kind, v)

    def __len__(self):
        if not self.shape:
            raise TypeError("single element has no length")
        return self.shape[0]

    def __repr__(self):
        return f"LieBatch({self.kind.value}, shape={self.shape})\n{self.values!r}"

    def copy(self):
        return LieBatch._wrap(self.kind, self.values.copy())

    # conveniences mirroring the functional API
    def exp(self):
        return exp_map(self)

    def log(self):
        return log_map(self)

    def inv(self):
        return inverse(self)

    def matrix(self):
        return to_matrix(self)

    def __matmul__(self, other):
        if isinstance(other, LieBatch):
            return compose(self, other)
        return act(self, other)


def _check_same(a, b):
    if a.kind is not b.kind:
        raise KindError(f"kind mismatch: {a.kind.value} vs {b.kind.value}")
    if a.dtype != b.dtype:
        raise ShapeError(f"precision mismatch: {a.dtype} vs {b.dtype}")


def _broadcast_pair(a_vals, b_vals):
    ka, kb = a_vals.shape[-1], b_vals.shape[-1]
    batch = a_vals.shape[:-1]
    if batch != b_vals.shape[:-1]:
        try:
            batch = np.broadcast_shapes(a_vals.shape[:-1], b_vals.shape[:-1])
        except ValueError as e:
            raise ShapeError(str(e)) from None
        a_vals = np.broadcast_to(a_vals, batch + (ka,))
        b_vals = np.broadcast_to(b_vals, batch + (kb,))
    af = np.ascontiguousarray(a_vals.reshape(-1, ka))
    bf = np.ascontiguousarray(b_vals.reshape(-1, kb))
    return af, bf, batch


def exp_map(x):
    """Exponential map from an algebra batch onto its group.

    Non-finite entries raise DomainError (checked inside the kernel loop)."""
    kind = x.kind
    if kind not in _EXP:
        raise KindError(f"exp_map needs an algebra kind, got {kind.value}")
    out = getattr(backend.kernels(), _EXP[kind])(x.flat())
    gk = group_of(kind)
    return LieBatch._wrap(gk, out.reshape(x.shape + (ITEM_SIZE[gk],)))


def log_map(g):
    """Principal logarithm; rotation part of the result has norm <= pi.

    A quaternion block whose norm deviates from 1 by more than 1e-3 raises
    CorruptElementError; smaller deviations are harmless because both log
    branches are invariant to the quaternion norm."""
    kind = g.kind
    if kind not in _LOG:
        raise KindError(f"log_map needs a group kind, got {kind.value}")
    out = getattr(backend.kernels(), _LOG[kind])(g.flat())
    ak = algebra_of(kind)
    return LieBatch._wrap(ak, out.reshape(g.shape + (ITEM_SIZE[ak],)))


def compose(a, b):
    """Group product a * b (quaternion block renormalized)."""
    if not is_group(a.kind):
        raise KindError(f"compose needs group kinds, got {a.kind.value}")
    _check_same(a, b)
    af, bf, batch = _broadcast_pair(a.values, b.values)
    fn = getattr(backend.kernels(), _MUL[a.kind])
    out = fn(af, bf)
    return LieBatch._wrap(a.kind, out.reshape(batch + (a.item_size,)))


def inverse(g):
    """Group inverse; compose(g, inverse(g)) is the identity."""
    if not is_group(g.kind):
        raise KindError(f"inverse needs a group kind, got {g.kind.value}")
    fn = getattr(backend.kernels(), _INV[g.kind])
    out = fn(g.flat())
    return LieBatch._wrap(g.kind, out.reshape(g.shape + (g.item_size,)))


def act(g, p):
    """Apply the transformation to points of shape (..., 3).

    Point entries are expected finite (the caller's invariant); NaNs
    propagate into the result rather than raising here."""
    if g.kind not in _ACT:
        raise KindError(f"act needs a group kind, got {g.kind.value}")
    p = np.asarray(p, dtype=g.dtype)
    if p.ndim == 0 or p.shape[-1] != 3:
        raise ShapeError(f"points need a trailing dimension of 3, got {p.shape}")
    gf, pf, batch = _broadcast_pair(g.values, p)
    out = getattr(backend.kernels(), _ACT[g.kind])(gf, pf)
    return out.reshape(batch + (3,))


def quat_to_matrix(q):
    """Rotation matrices from unit quaternions, shape (..., 4) -> (..., 3, 3)."""
    x, y, z, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=q.dtype)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - z * w)
    m[..., 0, 2] = 2 * (x * z + y * w)
    m[..., 1, 0] = 2 * (x * y + z * w)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - x * w)
    m[..., 2, 0] = 2 * (x * z - y * w)
    m[..., 2, 1] = 2 * (y * z + x * w)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def to_matrix(g):
    """Matrix form: 3x3 for SO3/RxSO3, 4x4 homogeneous for SE3/Sim3."""
    if not is_group(g.kind):
        raise KindError(f"to_matrix needs a group kind, got {g.kind.value}")
    v = g.values
    if g.kind is Kind.SO3:
        return quat_to_matrix(v)
    if g.kind is Kind.RxSO3:
        return quat_to_matrix(v[..., :4]) * v[..., 4, None, None]
    m = np.zeros(g.shape + (4, 4), dtype=g.dtype)
    m[..., 3, 3] = 1.0
    m[..., :3, 3] = v[..., :3]
    r = quat_to_matrix(v[..., 3:7])
    if g.kind is Kind.Sim3:
        r = r * v[..., 7, None, None]
    m[..., :3, :3] = r
    return m


def identity(kind, shape=(), dtype=np.float64):
    """Identity element (group kinds) or zero tangent (algebra kinds)."""
    shape = tuple(np.atleast_1d(shape).astype(int)) if not isinstance(shape, tuple) else shape
    v = np.zeros(shape + (ITEM_SIZE[kind],), dtype=dtype)
    if is_group(kind):
        v[..., QUAT_OFFSET[kind] + 3] = 1.0
        if kind in (Kind.Sim3, Kind.RxSO3):
            v[..., -1] = 1.0
    return LieBatch._wrap(kind, v)


def random_tangent(kind, shape=(), sigma=1.0, seed=None, dtype=np.float64):
    """I.i.d. normal tangent entries scaled by sigma; deterministic per seed."""
    if not is_algebra(kind):
        raise KindError(f"random_tangent needs an algebra kind, got {kind.value}")
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    v = (sigma * rng.standard_normal(shape + (ITEM_SIZE[kind],))).astype(dtype)
    return LieBatch._wrap(kind, v)


def random_group(kind, shape=(), sigma=1.0, seed=None, dtype=np.float64):
    """exp_map of a random tangent of the matching algebra kind."""
    if not is_group(kind):
        raise KindError(f"random_group needs a group kind, got {kind.value}")
    return exp_map(random_tangent(algebra_of(kind), shape, sigma, seed, dtype))


def hat(x):
    """Skew matrix of 3-vectors: hat(x) @ y == cross(x, y)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 3:
        raise ShapeError("hat needs 3-vectors")
    if not np.isfinite(x).all():
        raise DomainError("non-finite entries")
    return py_kernels.hat(x)


def right_jacobian_so3(phi):
    """Right Jacobian of the rotation exponential, Jr(phi) = Jl(-phi)."""
    phi = np.asarray(phi, dtype=np.float64)
    if not np.isfinite(phi).all():
        raise DomainError("non-finite entries")
    single = phi.ndim == 1
    flat = np.ascontiguousarray((-phi).reshape(-1, 3))
    out = py_kernels._vmat(flat)
    return out[0] if single else out.reshape(phi.shape[:-1] + (3, 3))


def left_jacobian_so3(phi):
    """Left Jacobian of the rotation exponential (the V matrix of SE3 exp)."""
    phi = np.asarray(phi, dtype=np.float64)
    single = phi.ndim == 1
    flat = np.ascontiguousarray(phi.reshape(-1, 3))
    out = py_kernels._vmat(flat)
    return out[0] if single else out.reshape(phi.shape[:-1] + (3, 3))
