"""Throughput benchmark for the three canonical operators.

f1(x) = Log(Exp(x)), f2(x) = Log(Exp(x) Exp(y)), f3(x) = Exp(x) p, all over
so3 tangent inputs, timed forward and as batched Jacobians w.r.t. x.
Reported ops_per_sec is items per second (batch / median wall time over 7
runs after 3 warmups).
"""

import statistics
import time

import numpy as np

from . import backend
from .diff import ParamSet, jacobian_batched
from .errors import LieOptError
from .groups import LieBatch, act, compose, exp_map, log_map, random_tangent
from .kinds import Kind

WARMUP = 3
REPEATS = 7


def _median_time(fn, warmup=WARMUP, repeats=REPEATS):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _problems(batch, seed, dtype):
    x = random_tangent(Kind.so3, (batch,), sigma=1.0, seed=seed, dtype=dtype)
    y = random_tangent(Kind.so3, (batch,), sigma=1.0, seed=seed + 1, dtype=dtype)
    rng = np.random.default_rng(seed + 2)
    p = rng.standard_normal((batch, 3)).astype(dtype)
    gy = exp_map(y)

    def f1(xb):
        return log_map(exp_map(xb))

    def f2(xb):
        return log_map(compose(exp_map(xb), gy))

    def f3(xb):
        return act(exp_map(xb), p)

    return x, {"f1": f1, "f2": f2, "f3": f3}


def _self_check(x, f1):
    # f1 is the identity on the principal ball; guard the harness itself
    norms = np.sqrt((x.values.astype(np.float64) ** 2).sum(axis=-1))
    scale = 1.5 / max(1.5, float(norms.max(initial=0.0)))
    small = LieBatch._wrap(x.kind, (x.values * x.dtype.type(scale)))
    out = f1(small)
    tol = 1e-6 if x.dtype == np.float64 else 1e-3
    if np.abs(out.values - small.values).max() > tol:
        raise LieOptError("benchmark self-check failed: f1 is not the identity")


def _jacobian_fn(fn, dtype):
    def wrapped(params):
        xb = LieBatch._wrap(Kind.so3, np.ascontiguousarray(params[0], dtype=dtype))
        out = fn(xb)
        return out.values if isinstance(out, LieBatch) else out
    return wrapped


def run_bench(batches, precision="f64", seed=0, threads=1, backend_name="auto"):
    """Rows of (op, mode, batch, precision, ops_per_sec)."""
    dtype = np.float64 if precision == "f64" else np.float32
    rows = []
    with backend.use(backend_name):
        for batch in batches:
            x, fns = _problems(batch, seed, dtype)
            _self_check(x, fns["f1"])
            for name, fn in fns.items():
                t = _median_time(lambda: fn(x))
                rows.append((name, "forward", batch, precision, batch / t))
            ps = ParamSet(np.asarray(x.values, dtype=np.float64))
            for name, fn in fns.items():
                wrapped = _jacobian_fn(fn, dtype)
                t = _median_time(
                    lambda: jacobian_batched(wrapped, ps, threads=threads))
                rows.append((name, "jacobian", batch, precision, batch / t))
    return rows


def write_csv(rows, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("op,mode,batch,precision,ops_per_sec\n")
        for op, mode, batch, precision, rate in rows:
            f.write(f"{op},{mode},{batch},{precision},{rate:.6g}\n")


def compare_backends(batches, precision="f64", seed=0, threads=1):
    """Run every available backend; returns {backend: rows}."""
    return {name: run_bench(batches, precision, seed, threads, backend_name=name)
            for name in backend.available()}


def format_comparison(results):
    lines = []
    names = list(results)
    header = f"{'op':<4}{'mode':<10}{'batch':>8}  " + "".join(f"{n:>16}" for n in names)
    if len(names) > 1:
        header += f"{'ratio':>8}"
    lines.append(header)
    baseline = results[names[0]]
    for k, (op, mode, batch, _, _) in enumerate(baseline):
        rates = [results[n][k][4] for n in names]
        line = f"{op:<4}{mode:<10}{batch:>8}  " + "".join(f"{r:>16.3e}" for r in rates)
        if len(names) > 1:
            line += f"{rates[0] / rates[-1]:>8.2f}"
        lines.append(line)
    return "\n".join(lines)
