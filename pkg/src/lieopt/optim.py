"""Damped second-order weighted least squares.

The normal equations follow

    sum_i (H_i + lambda * diag(H_i)) delta = -sum_i J_i^T W_i R_i,
    H_i = J_i^T W_i J_i

with robust kernels applied through the first-order corrector that rescales
residual and Jacobian by sqrt(rho'(c_i)). Step acceptance is driven by the
gain ratio g = (loss(theta) - loss(theta')) / (delta^T (lambda D delta + b))
where D is the damping diagonal; for an exactly linear model g == 1.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse

from .diff import ParamSet, jacobian_batched, jacobian_dense, retract
from .errors import DomainError, EvaluationError, SolverError
from .kinds import TANGENT_DIM
from .groups import LieBatch

LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e12

# Dense normal equations up to this many tangent dimensions; sparse + PCG above.
DENSE_LIMIT = 1800


# ---------------------------------------------------------------------------
# robust kernels
# ---------------------------------------------------------------------------

class Kernel:
    def __call__(self, c):
        raise NotImplementedError


class Trivial(Kernel):
    """Plain squared cost: rho(c) = c."""

    def __call__(self, c):
        c = np.asarray(c, dtype=np.float64)
        return c, np.ones_like(c)


class Huber(Kernel):
    """Quadratic for c <= delta^2, linear in sqrt(c) beyond."""

    def __init__(self, delta=1.0):
        if delta <= 0:
            raise DomainError("Huber delta must be > 0")
        self.delta = float(delta)

    def __call__(self, c):
        c = np.asarray(c, dtype=np.float64)
        d = self.delta
        inlier = c <= d * d
        root = np.sqrt(np.where(inlier, 1.0, c))
        rho = np.where(inlier, c, 2.0 * d * root - d * d)
        drho = np.where(inlier, 1.0, d / root)
        return rho, drho


class Cauchy(Kernel):
    def __init__(self, delta=1.0):
        if delta <= 0:
            raise DomainError("Cauchy delta must be > 0")
        self.delta = float(delta)

    def __call__(self, c):
        c = np.asarray(c, dtype=np.float64)
        d2 = self.delta * self.delta
        return d2 * np.log1p(c / d2), 1.0 / (1.0 + c / d2)


KERNELS = {"trivial": Trivial, "huber": Huber, "cauchy": Cauchy}


def apply_kernel(kernel, c):
    """(rho(c), rho'(c)) for squared costs c >= 0."""
    c = np.asarray(c, dtype=np.float64)
    if (c < 0).any():
        raise DomainError("squared cost must be >= 0")
    return kernel(c)


# ---------------------------------------------------------------------------
# residual blocks
# ---------------------------------------------------------------------------

@dataclass
class ResidualBlock:
    """One item's residual, Jacobian, information matrix and squared cost.

    cols lists the global tangent columns the Jacobian touches; None means
    the Jacobian spans all columns.
    """
    residual: np.ndarray
    jacobian: np.ndarray | None
    weight: np.ndarray | None  # None = identity
    cost: float
    cols: np.ndarray | None = None


def block_cost(residual, weight=None):
    if weight is None:
        return float(residual @ residual)
    return float(residual @ weight @ residual)


def correct_fast_triggs(block, kernel):
    """First-order robust correction: scale residual and Jacobian by
    sqrt(rho'(c)); the weight matrix is untouched."""
    _, drho = apply_kernel(kernel, block.cost)
    drho = float(drho)
    if drho <= 0:
        raise DomainError("corrector needs rho'(c) > 0")
    if drho == 1.0:
        return block
    s = math.sqrt(drho)
    r = s * block.residual
    j = None if block.jacobian is None else s * block.jacobian
    return ResidualBlock(r, j, block.weight, drho * block.cost, block.cols)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class Model:
    """Batch of residual items over a ParamSet.

    fn(params) -> (B, d) stacked predictions; residuals are fn(params) minus
    targets. With independent=True item k must depend only on item k's
    parameters and Jacobians are computed block-diagonally (or by the given
    analytic ``jacobian(params) -> (B, d, nb)``); otherwise a dense Jacobian
    over the full tangent space is used.
    """

    def __init__(self, params, fn, targets=None, weights=None, jacobian=None,
                 independent=True, threads=1):
        self.params = params
        self.fn = fn
        self.targets = None if targets is None else np.asarray(targets, dtype=np.float64)
        self.weights = weights
        self.jacobian = jacobian
        self.independent = independent
        self.threads = threads

    def _weight_of(self, i):
        w = self.weights
        if w is None:
            return None
        w = np.asarray(w)
        return w[i] if w.ndim == 3 else w

    def _item_cols(self, b):
        """Global tangent columns of each item, matching diff's dense order."""
        nb = self.params.item_tangent_dim
        cols = np.empty((b, nb), dtype=np.intp)
        offset = 0
        at = 0
        for p in self.params:
            if isinstance(p, LieBatch):
                w = TANGENT_DIM[p.kind]
            else:
                w = int(np.prod(p.shape[1:])) if p.ndim > 1 else 1
            idx = offset + np.arange(b)[:, None] * w + np.arange(w)[None, :]
            cols[:, at:at + w] = idx
            offset += b * w
            at += w
        return cols

    def _residuals(self, params):
        r = np.asarray(self.fn(params), dtype=np.float64)
        if r.ndim == 1:
            r = r[:, None]
        if self.targets is not None:
            r = r - self.targets.reshape(r.shape)
        return r

    def residual_blocks(self, params, need_jacobian=True):
        res = self._residuals(params)
        bad = ~np.isfinite(res).all(axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise EvaluationError(f"non-finite residual at item {i}", index=i)
        b = res.shape[0]

        jac_blocks = None
        jac_dense = None
        if need_jacobian:
            if self.independent:
                if self.jacobian is not None:
                    jac_blocks = np.asarray(self.jacobian(params), dtype=np.float64)
                else:
                    jac_blocks = jacobian_batched(
                        self._residuals, params, threads=self.threads).blocks
            else:
                if self.jacobian is not None:
                    jac_dense = np.asarray(self.jacobian(params), dtype=np.float64)
                else:
                    jac_dense = jacobian_dense(
                        lambda q: self._residuals(q).ravel(), params).dense

        cols = self._item_cols(b) if (need_jacobian and self.independent) else None
        d = res.shape[1]
        blocks = []
        for i in range(b):
            w = self._weight_of(i)
            if jac_blocks is not None:
                j = jac_blocks[i]
                c = cols[i]
            elif jac_dense is not None:
                j = jac_dense[i * d:(i + 1) * d]
                c = None
            else:
                j, c = None, None
            blocks.append(ResidualBlock(res[i], j, w, block_cost(res[i], w), c))
        return blocks


def evaluate(model, params, kernel=None, need_jacobian=True):
    """Residual blocks at params plus the (kernelized) total loss."""
    kernel = kernel or Trivial()
    blocks = model.residual_blocks(params, need_jacobian=need_jacobian)
    costs = np.array([b.cost for b in blocks])
    rho, _ = apply_kernel(kernel, costs)
    return blocks, float(rho.sum())


# ---------------------------------------------------------------------------
# normal equations and linear solvers
# ---------------------------------------------------------------------------

@dataclass
class NormalEquations:
    a: object  # (n, n) ndarray or scipy.sparse matrix, damping included
    b: np.ndarray
    damping_diag: np.ndarray  # D with lambda*D the damping actually applied
    lam: float


def build_normal_equations(blocks, lam, n=None, sparse=False):
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    if n is None:
        n = 0
        for blk in blocks:
            n = max(n, blk.jacobian.shape[1] if blk.cols is None else int(blk.cols.max()) + 1)

    b_vec = np.zeros(n)
    diag = np.zeros(n)
    if sparse:
        rows, cols_idx, vals = [], [], []
    else:
        a = np.zeros((n, n))

    for blk in blocks:
        j = blk.jacobian
        if j is None:
            raise ValueError("blocks need Jacobians to build normal equations")
        if j.shape[0] != blk.residual.shape[0]:
            raise ValueError("jacobian/residual row mismatch")
        wj = j if blk.weight is None else blk.weight @ j
        h = j.T @ wj
        g = j.T @ (blk.residual if blk.weight is None else blk.weight @ blk.residual)
        if blk.cols is None:
            if h.shape[0] != n:
                raise ValueError("dense block width disagrees with n")
            sl = slice(None)
            if sparse:
                ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
                rows.append(ii.ravel())
                cols_idx.append(jj.ravel())
                vals.append(h.ravel())
            else:
                a += h
            b_vec -= g
            diag += np.diag(h)
        else:
            c = blk.cols
            if sparse:
                ii, jj = np.meshgrid(c, c, indexing="ij")
                rows.append(ii.ravel())
                cols_idx.append(jj.ravel())
                vals.append(h.ravel())
            else:
                a[np.ix_(c, c)] += h
            b_vec[c] -= g
            diag[c] += np.diag(h)

    damp = np.maximum(diag, 1e-12)
    if sparse:
        rows.append(np.arange(n))
        cols_idx.append(np.arange(n))
        vals.append(lam * damp)
        a = scipy.sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols_idx))),
            shape=(n, n)).tocsr()
    else:
        a[np.arange(n), np.arange(n)] += lam * damp
    return NormalEquations(a, b_vec, damp, lam)


def solve_cholesky(eqs):
    """Direct solve; escalating diagonal jitter before giving up."""
    a = eqs.a.toarray() if scipy.sparse.issparse(eqs.a) else eqs.a
    n = a.shape[0]
    base = 1e-12 * np.trace(a) / n
    jitter = 0.0
    for attempt in range(4):
        try:
            cf = scipy.linalg.cho_factor(
                a if jitter == 0.0 else a + jitter * np.eye(n), lower=True)
            return scipy.linalg.cho_solve(cf, eqs.b)
        except np.linalg.LinAlgError:
            jitter = base if jitter == 0.0 else 10.0 * jitter
    raise SolverError("matrix not positive definite after jitter escalation")


def solve_pcg(eqs, tol=1e-10, max_iter=None):
    """Jacobi-preconditioned conjugate gradient on the normal equations."""
    a, b = eqs.a, eqs.b
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n)
    if max_iter is None:
        max_iter = 10 * n
    dinv = 1.0 / np.where(np.abs(a.diagonal()) > 0, a.diagonal(), 1.0)
    x = np.zeros(n)
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        ap = a @ p
        pap = p @ ap
        if pap <= 0:
            raise SolverError("indefinite system in PCG", residual_norm=np.linalg.norm(r))
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"PCG did not converge in {max_iter} iterations",
        residual_norm=np.linalg.norm(r))


# ---------------------------------------------------------------------------
# damping strategies
# ---------------------------------------------------------------------------

@dataclass
class Constant:
    """Fixed damping; accept whenever the loss decreased."""
    damping: float = 1e-4

    def update(self, lam, nu, gain):
        return lam, nu, gain > 0


@dataclass
class Adaptive:
    damping: float = 1e-4
    down: float = 2.0
    up: float = 2.0

    def update(self, lam, nu, gain):
        if gain > 0.75:
            lam = lam / self.down
        elif gain < 0.25:
            lam = lam * self.up
        return lam, nu, gain > 0


@dataclass
class TrustRegion:
    """Marquardt-Nielsen rule: shrink by the cubic on success, grow by a
    doubling factor on rejection."""
    damping: float = 1e-6

    def update(self, lam, nu, gain):
        if gain > 0:
            return lam * max(1.0 / 3.0, 1.0 - (2.0 * gain - 1.0) ** 3), 2.0, True
        return lam * nu, 2.0 * nu, False


STRATEGIES = {"constant": Constant, "adaptive": Adaptive, "trustregion": TrustRegion}


def strategy_update(strategy, lam, nu, gain):
    """Apply a strategy rule and clamp lambda to [LAMBDA_MIN, LAMBDA_MAX]."""
    lam2, nu2, accept = strategy.update(lam, nu, gain)
    return float(np.clip(lam2, LAMBDA_MIN, LAMBDA_MAX)), nu2, accept


# ---------------------------------------------------------------------------
# the LM step
# ---------------------------------------------------------------------------

@dataclass
class OptState:
    params: ParamSet
    lam: float
    nu: float = 2.0
    loss: float = math.inf
    iteration: int = 0
    accepted: int = 0
    rejected: int = 0
    status: str = ""


def init_state(params, strategy):
    return OptState(params=params, lam=strategy.damping)


def lm_step(state, model, kernel=None, strategy=None, solver=None, retries=8,
            sparse=None, tol=1e-10):
    """One outer Levenberg-Marquardt iteration with same-point retries.

    Returns a new OptState; status is one of accepted / failed / converged.
    A rejected attempt keeps the residual linearization and retries with the
    increased damping, up to `retries` times.
    """
    kernel = kernel or Trivial()
    strategy = strategy or TrustRegion()
    n = state.params.n
    if sparse is None:
        sparse = n > DENSE_LIMIT
    if solver is None:
        solver = solve_cholesky if not sparse else (lambda eqs: solve_pcg(eqs, tol=tol))

    blocks, loss0 = evaluate(model, state.params, kernel, need_jacobian=True)
    blocks = [correct_fast_triggs(b, kernel) for b in blocks]

    lam, nu = state.lam, state.nu
    rejected_here = 0
    for _ in range(retries + 1):
        eqs = build_normal_equations(blocks, lam, n=n, sparse=sparse)
        delta = solver(eqs)
        predicted = float(delta @ (lam * eqs.damping_diag * delta + eqs.b))
        if not np.isfinite(predicted) or predicted <= 0:
            return replace(state, lam=lam, nu=nu, loss=loss0,
                           iteration=state.iteration + 1,
                           rejected=state.rejected + rejected_here,
                           status="converged")
        candidate = retract(state.params, delta)
        try:
            _, loss1 = evaluate(model, candidate, kernel, need_jacobian=False)
            gain = (loss0 - loss1) / predicted
        except EvaluationError:
            gain = -math.inf  # treat a blown-up candidate as a rejected step
        lam2, nu2, accept = strategy_update(strategy, lam, nu, gain)
        if accept:
            return OptState(params=candidate, lam=lam2, nu=nu2, loss=loss1,
                            iteration=state.iteration + 1,
                            accepted=state.accepted + 1,
                            rejected=state.rejected + rejected_here,
                            status="accepted")
        rejected_here += 1
        if lam2 <= lam:
            lam, nu = lam2, nu2
            break  # damping will not change the system; retrying is futile
        lam, nu = lam2, nu2
    return replace(state, lam=lam, nu=nu, loss=loss0,
                   iteration=state.iteration + 1,
                   rejected=state.rejected + rejected_here,
                   status="failed")


# ---------------------------------------------------------------------------
# scheduler
# ---------------------------------------------------------------------------

class StopOnPlateau:
    """Stop after a step budget or `patience` consecutive loss decreases
    smaller than `decreasing`; a non-finite loss stops immediately."""

    def __init__(self, steps=10, patience=3, decreasing=1e-3, verbose=False):
        self.steps = steps
        self.patience = patience
        self.decreasing = decreasing
        self.verbose = verbose
        self.count = 0
        self.flat = 0
        self.last = None
        self.reason = None

    def step(self, loss):
        """Record a loss; returns the stop reason or None to continue."""
        if self.reason is not None:
            return self.reason
        self.count += 1
        loss = float(loss)
        if not math.isfinite(loss):
            self.reason = "diverged"
        else:
            if self.last is not None:
                if (self.last - loss) < self.decreasing:
                    self.flat += 1
                else:
                    self.flat = 0
            if self.verbose:
                print(f"step {self.count}: loss {loss:.6e}")
            self.last = loss
            if self.flat >= self.patience:
                self.reason = "plateau"
            elif self.count >= self.steps:
                self.reason = "budget"
        return self.reason

    def continual(self):
        return self.reason is None
