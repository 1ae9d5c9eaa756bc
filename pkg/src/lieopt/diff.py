"""Tangent-space Jacobians of arbitrary functions over mixed parameters.

A :class:`ParamSet` is an ordered list of parameters, each either a group
:class:`~lieopt.groups.LieBatch` or a plain float vector. Increments live in
a flat tangent vector; group parameters are updated by left perturbation
``g <- exp(delta) * g``, which is the one perturbation convention used
everywhere in this package.

Tangent coordinate ordering: parameters in declaration order, items row-major
within a parameter, the item's tangent coordinates last. The batched Jacobian
instead orders one item's coordinates across all parameters, which coincides
with the dense ordering for single-parameter models.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ContractViolationError, EvaluationError, KindError, ShapeError
from .groups import LieBatch, compose, exp_map
from .kinds import TANGENT_DIM, algebra_of, is_group


class ParamSet:
    """Ordered parameters: group LieBatch elements or flat float vectors."""

    __slots__ = ("params",)

    def __init__(self, *params):
        items = []
        for p in params:
            if isinstance(p, LieBatch):
                if not is_group(p.kind):
                    raise KindError("ParamSet group parameters must be group kinds")
                items.append(p)
            else:
                items.append(np.asarray(p, dtype=np.float64))
        self.params = tuple(items)

    @property
    def tangent_dims(self):
        out = []
        for p in self.params:
            if isinstance(p, LieBatch):
                out.append(p.n_items * TANGENT_DIM[p.kind])
            else:
                out.append(p.size)
        return out

    @property
    def n(self):
        return sum(self.tangent_dims)

    @property
    def batch_size(self):
        """Shared leading item count, for per-item (batched) use."""
        sizes = set()
        for p in self.params:
            if isinstance(p, LieBatch):
                if not p.shape:
                    raise ShapeError("batched use needs a leading batch dimension")
                sizes.add(p.shape[0])
            else:
                sizes.add(p.shape[0])
        if len(sizes) != 1:
            raise ShapeError(f"parameters disagree on batch size: {sorted(sizes)}")
        return sizes.pop()

    @property
    def item_tangent_dim(self):
        out = 0
        for p in self.params:
            if isinstance(p, LieBatch):
                out += TANGENT_DIM[p.kind]
            else:
                out += int(np.prod(p.shape[1:])) if p.ndim > 1 else 1
        return out

    def select(self, idx):
        """ParamSet restricted to a slice of items (batched use)."""
        return ParamSet(*(p[idx] if isinstance(p, LieBatch) else p[idx] for p in self.params))

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def __getitem__(self, i):
        return self.params[i]


def retract(params, delta):
    """Apply a flat tangent increment: vectors add, groups get exp(d) * g."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (params.n,):
        raise ShapeError(f"tangent length {delta.shape} != ({params.n},)")
    out = []
    at = 0
    for p in params:
        if isinstance(p, LieBatch):
            td = TANGENT_DIM[p.kind]
            seg = delta[at:at + p.n_items * td].reshape(p.shape + (td,))
            step = LieBatch._wrap(algebra_of(p.kind), seg.astype(p.dtype, copy=False))
            out.append(compose(exp_map(step), p))
            at += p.n_items * td
        else:
            seg = delta[at:at + p.size].reshape(p.shape)
            out.append(p + seg)
            at += p.size
    return ParamSet(*out)


def _retract_items(params, delta2d):
    """Per-item increments, delta2d of shape (B, item_tangent_dim)."""
    out = []
    at = 0
    for p in params:
        if isinstance(p, LieBatch):
            td = TANGENT_DIM[p.kind]
            seg = delta2d[:, at:at + td]
            step = LieBatch._wrap(algebra_of(p.kind), seg.astype(p.dtype, copy=False))
            out.append(compose(exp_map(step), p))
            at += td
        else:
            w = int(np.prod(p.shape[1:])) if p.ndim > 1 else 1
            seg = delta2d[:, at:at + w].reshape(p.shape)
            out.append(p + seg)
            at += w
    return ParamSet(*out)


def _steps_dense(params):
    """Per-coordinate central-difference step sizes."""
    h0 = np.cbrt(np.finfo(np.float64).eps)
    out = np.full(params.n, h0)
    at = 0
    for p in params:
        if isinstance(p, LieBatch):
            at += p.n_items * TANGENT_DIM[p.kind]
        else:
            out[at:at + p.size] = h0 * np.maximum(1.0, np.abs(p.ravel()))
            at += p.size
    return out


class JacobianMatrix:
    """Dense (rows x cols) or block-diagonal (B blocks of d x nb) Jacobian."""

    def __init__(self, dense=None, blocks=None):
        if (dense is None) == (blocks is None):
            raise ValueError("exactly one of dense/blocks required")
        self.dense = dense
        self.blocks = blocks

    @property
    def rows(self):
        if self.dense is not None:
            return self.dense.shape[0]
        b, d, _ = self.blocks.shape
        return b * d

    @property
    def cols(self):
        if self.dense is not None:
            return self.dense.shape[1]
        b, _, nb = self.blocks.shape
        return b * nb

    def toarray(self):
        if self.dense is not None:
            return self.dense
        b, d, nb = self.blocks.shape
        out = np.zeros((b * d, b * nb))
        for k in range(b):
            out[k * d:(k + 1) * d, k * nb:(k + 1) * nb] = self.blocks[k]
        return out

    def __array__(self, dtype=None, copy=None):
        a = self.toarray()
        return a.astype(dtype) if dtype is not None else a


def _check_finite(r, where):
    if not np.isfinite(r).all():
        raise EvaluationError(f"non-finite residual at {where}", index=where)


def jacobian_dense(fn, params, analytic=None, validate=False, rtol=1e-5):
    """Full cross-batch Jacobian of fn(params) by central differences.

    ``analytic``, when given, is used instead of differencing; with
    ``validate=True`` it is checked against the difference form first.
    """
    if analytic is not None:
        j = np.asarray(analytic(params), dtype=np.float64)
        if validate:
            num = jacobian_dense(fn, params).dense
            scale = np.abs(num).max() + 1.0
            if np.abs(j - num).max() > rtol * scale:
                raise ContractViolationError("analytic Jacobian disagrees with differences")
        return JacobianMatrix(dense=j)

    r0 = np.asarray(fn(params), dtype=np.float64).ravel()
    _check_finite(r0, "base point")
    n = params.n
    h = _steps_dense(params)
    jac = np.empty((r0.size, n))
    e = np.zeros(n)
    for k in range(n):
        e[k] = h[k]
        rp = np.asarray(fn(retract(params, e)), dtype=np.float64).ravel()
        rm = np.asarray(fn(retract(params, -e)), dtype=np.float64).ravel()
        e[k] = 0.0
        if not (np.isfinite(rp).all() and np.isfinite(rm).all()):
            raise EvaluationError(f"non-finite residual at probe {k}", index=k)
        jac[:, k] = (rp - rm) / (2.0 * h[k])
    return JacobianMatrix(dense=jac)


def _batched_steps(params, b, nb):
    h0 = np.cbrt(np.finfo(np.float64).eps)
    out = np.full((b, nb), h0)
    at = 0
    for p in params:
        if isinstance(p, LieBatch):
            at += TANGENT_DIM[p.kind]
        else:
            w = int(np.prod(p.shape[1:])) if p.ndim > 1 else 1
            out[:, at:at + w] = h0 * np.maximum(1.0, np.abs(p.reshape(b, w)))
            at += w
    return out


def _probe(fn, params, b, nb, k, sign, h):
    delta = np.zeros((b, nb))
    delta[:, k] = sign * h[:, k]
    r = np.asarray(fn(_retract_items(params, delta)), dtype=np.float64)
    if not np.isfinite(r).all():
        raise EvaluationError(f"non-finite residual at batched probe {k}", index=k)
    return r


def jacobian_batched(fn, params, threads=1, validate=False):
    """Block-diagonal Jacobian of an item-wise independent fn.

    fn maps a ParamSet with B items to a (B, d) residual array where row k
    depends only on item k's parameters. Independence lets one function
    evaluation probe the same tangent coordinate of every item at once, so a
    block costs two evaluations per per-item coordinate regardless of B.
    Probes run concurrently when threads > 1; fn must be safe to invoke from
    multiple threads, and the result is bitwise independent of thread count.
    """
    b = params.batch_size
    nb = params.item_tangent_dim
    r0 = np.asarray(fn(params), dtype=np.float64)
    if r0.ndim != 2 or r0.shape[0] != b:
        raise ShapeError(f"batched fn must return (B, d), got {r0.shape}")
    _check_finite(r0, "base point")

    if validate and b > 1:
        # Off-block probe: a step on item 0 alone must leave other residuals
        # bitwise unchanged.
        delta = np.zeros((b, nb))
        delta[0, :] = 1e-3
        r1 = np.asarray(fn(_retract_items(params, delta)), dtype=np.float64)
        if not np.array_equal(r0[1:], r1[1:]):
            raise ContractViolationError("residuals are not item-independent")

    h = _batched_steps(params, b, nb)
    tasks = [(k, s) for k in range(nb) for s in (1.0, -1.0)]
    if threads <= 1:
        results = [_probe(fn, params, b, nb, k, s, h) for k, s in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(_probe, fn, params, b, nb, k, s, h) for k, s in tasks]
            results = [f.result() for f in futs]

    blocks = np.empty((b, r0.shape[1], nb))
    for k in range(nb):
        rp, rm = results[2 * k], results[2 * k + 1]
        blocks[:, :, k] = (rp - rm) / (2.0 * h[:, k])[:, None]
    return JacobianMatrix(blocks=blocks)
