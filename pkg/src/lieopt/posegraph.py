"""SE3 pose graphs: g2o text I/O, edge residuals and LM-based optimization.

Residual convention per edge (i, j): r = Log(Z_ij^-1 X_i^-1 X_j) with the
(translation, rotation) tangent ordering, weighted by the edge's 6x6
information matrix. Gauge freedom is removed by freezing the anchor node,
whose stored pose passes through optimization bitwise unchanged.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import optim
from .diff import ParamSet
from .errors import GraphError, ParseError
from .groups import LieBatch, compose, inverse, log_map
from .jacobians import edge_jacobians
from .kinds import Kind
from .optim import (
    DENSE_LIMIT,
    ResidualBlock,
    StopOnPlateau,
    Trivial,
    TrustRegion,
    init_state,
    lm_step,
)

_VERTEX_TAG = "VERTEX_SE3:QUAT"
_EDGE_TAG = "EDGE_SE3:QUAT"


@dataclass
class Edge:
    i: int
    j: int
    meas: np.ndarray   # (7,) tx ty tz qx qy qz qw
    info: np.ndarray   # (6, 6) information matrix


@dataclass
class PoseGraph:
    nodes: dict = field(default_factory=dict)   # id -> (7,) pose values
    edges: list = field(default_factory=list)
    anchor: int | None = None

    def anchor_id(self):
        if self.anchor is not None:
            return self.anchor
        if not self.nodes:
            raise GraphError("empty graph has no anchor")
        return min(self.nodes)

    def copy(self):
        g = PoseGraph(anchor=self.anchor)
        g.nodes = {k: v.copy() for k, v in self.nodes.items()}
        g.edges = [Edge(e.i, e.j, e.meas.copy(), e.info.copy()) for e in self.edges]
        return g

    def validate(self):
        if not self.nodes:
            return
        anchor = self.anchor_id()
        if anchor not in self.nodes:
            raise GraphError(f"anchor {anchor} is not a node")
        for k, e in enumerate(self.edges):
            if e.i not in self.nodes or e.j not in self.nodes:
                raise GraphError(f"edge {k} references missing vertex ({e.i}, {e.j})")
            if np.abs(e.info - e.info.T).max() > 1e-9:
                raise GraphError(f"edge {k} information matrix is not symmetric")
            if np.linalg.eigvalsh(0.5 * (e.info + e.info.T)).min() < -1e-9:
                raise GraphError(f"edge {k} information matrix is not PSD")

    def connected_to_anchor(self):
        """Node ids unreachable from the anchor (empty set when connected)."""
        if not self.nodes:
            return set()
        adj = {k: [] for k in self.nodes}
        for e in self.edges:
            adj[e.i].append(e.j)
            adj[e.j].append(e.i)
        seen = {self.anchor_id()}
        stack = [self.anchor_id()]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return set(self.nodes) - seen


def _renormalized_quat(q, line):
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise ParseError("zero quaternion", line=line)
    if abs(norm - 1.0) > 1e-3:
        warnings.warn(f"line {line}: quaternion norm {norm:.6f} renormalized")
    return q / norm


def parse_g2o(text):
    """Build a PoseGraph from g2o text (string or iterable of lines)."""
    lines = text.splitlines() if isinstance(text, str) else text
    graph = PoseGraph()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        tag = tokens[0]
        if tag == _VERTEX_TAG:
            if len(tokens) != 9:
                raise ParseError(
                    f"{_VERTEX_TAG} needs 8 fields, got {len(tokens) - 1}", line=lineno)
            try:
                node_id = int(tokens[1])
                vals = np.array([float(t) for t in tokens[2:]])
            except ValueError:
                raise ParseError("non-numeric field", line=lineno) from None
            if node_id in graph.nodes:
                raise ParseError(f"duplicate vertex {node_id}", line=lineno)
            vals[3:7] = _renormalized_quat(vals[3:7], lineno)
            graph.nodes[node_id] = vals
        elif tag == _EDGE_TAG:
            if len(tokens) != 31:
                raise ParseError(
                    f"{_EDGE_TAG} needs 30 fields, got {len(tokens) - 1}", line=lineno)
            try:
                i, j = int(tokens[1]), int(tokens[2])
                vals = np.array([float(t) for t in tokens[3:]])
            except ValueError:
                raise ParseError("non-numeric field", line=lineno) from None
            meas = vals[:7].copy()
            meas[3:7] = _renormalized_quat(meas[3:7], lineno)
            info = np.zeros((6, 6))
            at = 7
            for r in range(6):
                for c in range(r, 6):
                    info[r, c] = vals[at]
                    info[c, r] = vals[at]
                    at += 1
            graph.edges.append(Edge(i, j, meas, info))
        else:
            warnings.warn(f"line {lineno}: skipping unknown record {tag!r}")
    for k, e in enumerate(graph.edges):
        if e.i not in graph.nodes or e.j not in graph.nodes:
            raise GraphError(f"edge {k} references missing vertex ({e.i}, {e.j})")
    return graph


def _fmt(x):
    return format(float(x), ".17g")


def write_g2o(graph):
    """Serialize with 17 significant digits; parse(write(g)) reproduces g."""
    out = []
    for node_id in sorted(graph.nodes):
        v = graph.nodes[node_id]
        out.append(f"{_VERTEX_TAG} {node_id} " + " ".join(_fmt(x) for x in v))
    for e in graph.edges:
        upper = [e.info[r, c] for r in range(6) for c in range(r, 6)]
        out.append(f"{_EDGE_TAG} {e.i} {e.j} "
                   + " ".join(_fmt(x) for x in e.meas) + " "
                   + " ".join(_fmt(x) for x in upper))
    return "\n".join(out) + ("\n" if out else "")


def load_g2o(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_g2o(f.read())


def save_g2o(graph, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(write_g2o(graph))


def edge_residual(xi, xj, z):
    """r = Log(Z^-1 Xi^-1 Xj); zero iff the relative pose matches Z."""
    return log_map(compose(inverse(z), compose(inverse(xi), xj))).values


def _edge_arrays(graph):
    ids = sorted(graph.nodes)
    index = {node_id: k for k, node_id in enumerate(ids)}
    poses = np.array([graph.nodes[i] for i in ids])
    ei = np.array([index[e.i] for e in graph.edges], dtype=np.intp)
    ej = np.array([index[e.j] for e in graph.edges], dtype=np.intp)
    meas = np.array([e.meas for e in graph.edges])
    infos = np.array([e.info for e in graph.edges])
    return ids, index, poses, ei, ej, meas, infos


def chi2(graph):
    """Sum over edges of r^T Omega r."""
    if not graph.edges:
        return 0.0
    _, _, poses, ei, ej, meas, infos = _edge_arrays(graph)
    xb = LieBatch._wrap(Kind.SE3, poses)
    r = edge_residual(xb[ei], xb[ej], LieBatch._wrap(Kind.SE3, meas))
    return float(np.einsum("ki,kij,kj->", r, infos, r))


class _PGOModel:
    """Residual provider over the free (non-anchor) node poses."""

    def __init__(self, graph):
        self.anchor = graph.anchor_id()
        ids, _, poses, self.ei, self.ej, meas, self.infos = _edge_arrays(graph)
        self.ids = ids
        self.free = [k for k, node_id in enumerate(ids) if node_id != self.anchor]
        self.col_of = {k: 6 * f for f, k in enumerate(self.free)}
        self.anchor_pose = poses[ids.index(self.anchor)].copy()
        self.base = poses
        self.meas = LieBatch._wrap(Kind.SE3, meas)
        self.params = ParamSet(LieBatch._wrap(Kind.SE3, poses[self.free].copy()))

    def full_poses(self, params):
        poses = self.base.copy()
        poses[self.free] = params[0].values
        return LieBatch._wrap(Kind.SE3, poses)

    def residual_blocks(self, params, need_jacobian=True):
        poses = self.full_poses(params)
        xi, xj = poses[self.ei], poses[self.ej]
        if need_jacobian:
            r, ji, jj = edge_jacobians(xi, xj, self.meas)
        else:
            r = edge_residual(xi, xj, self.meas)
        costs = np.einsum("ki,kij,kj->k", r, self.infos, r)
        blocks = []
        for k in range(len(self.ei)):
            cols = []
            jparts = []
            if need_jacobian:
                ii, jjn = int(self.ei[k]), int(self.ej[k])
                if ii in self.col_of:
                    cols.append(np.arange(self.col_of[ii], self.col_of[ii] + 6))
                    jparts.append(ji[k])
                if jjn in self.col_of:
                    cols.append(np.arange(self.col_of[jjn], self.col_of[jjn] + 6))
                    jparts.append(jj[k])
                jac = np.hstack(jparts) if jparts else np.zeros((6, 0))
                col = np.concatenate(cols) if cols else np.empty(0, dtype=np.intp)
            else:
                jac, col = None, None
            blocks.append(ResidualBlock(r[k], jac, self.infos[k], float(costs[k]), col))
        return blocks


@dataclass
class PGOStats:
    initial_chi2: float = 0.0
    final_chi2: float = 0.0
    iterations: int = 0
    accepted: int = 0
    rejected: int = 0
    wall_time_s: float = 0.0
    stop_reason: str = ""
    solver_error: str = ""

    def as_dict(self):
        return {
            "initial_chi2": self.initial_chi2,
            "final_chi2": self.final_chi2,
            "iterations": self.iterations,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "wall_time_s": self.wall_time_s,
        }


@dataclass
class PGOConfig:
    kernel: object = None          # optim.Kernel; Trivial when None
    strategy: object = None        # damping strategy; TrustRegion when None
    solver: object = None          # callable(eqs) -> delta; auto by size when None
    steps: int = 50
    patience: int = 3
    decreasing: float = 1e-9
    retries: int = 8
    pcg_tol: float = 1e-10
    verbose: bool = False


def optimize_pgo(graph, config=None):
    """LM over the stacked edge residuals with the anchor frozen.

    Returns (optimized graph, PGOStats). Solver failures are not raised; the
    best accepted iterate is returned with the error recorded in the stats.
    """
    cfg = config or PGOConfig()
    graph.validate()
    if not graph.nodes or not graph.edges:
        return graph.copy(), PGOStats(stop_reason="empty")
    unreachable = graph.connected_to_anchor()
    if unreachable:
        raise GraphError(f"nodes not connected to anchor: {sorted(unreachable)}")

    kernel = cfg.kernel or Trivial()
    strategy = cfg.strategy or TrustRegion()
    model = _PGOModel(graph)
    n = model.params.n
    sparse = n > DENSE_LIMIT
    solver = cfg.solver
    if solver is None and sparse:
        solver = lambda eqs: optim.solve_pcg(eqs, tol=cfg.pcg_tol)

    sched = StopOnPlateau(steps=cfg.steps, patience=cfg.patience,
                          decreasing=cfg.decreasing, verbose=cfg.verbose)
    stats = PGOStats(initial_chi2=chi2(graph))
    state = init_state(model.params, strategy)
    t0 = time.perf_counter()
    solver_error = ""
    while sched.continual():
        try:
            state = lm_step(state, model, kernel=kernel, strategy=strategy,
                            solver=solver, retries=cfg.retries, sparse=sparse)
        except optim.SolverError as err:
            solver_error = str(err)
            break
        sched.step(state.loss)
        if state.status == "converged":
            break
    stats.wall_time_s = time.perf_counter() - t0
    stats.iterations = state.iteration
    stats.accepted = state.accepted
    stats.rejected = state.rejected
    stats.stop_reason = sched.reason or state.status
    stats.solver_error = solver_error

    # anchor entry is left untouched by construction (bitwise identical)
    out = graph.copy()
    free_values = state.params[0].values
    for f, k in enumerate(model.free):
        out.nodes[model.ids[k]] = free_values[f].copy()
    stats.final_chi2 = chi2(out)
    return out, stats
