"""Command-line front end: pose-graph optimization, IMU trajectory
integration, operator benchmarks and the batched transform-inverse demo.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__, backend
from . import bench as bench_mod
from .diff import ParamSet
from .errors import (
    CorruptElementError,
    DomainError,
    GraphError,
    KindError,
    LieOptError,
    ParseError,
    ShapeError,
    SolverError,
)
from .groups import compose, log_map, random_group
from .imu import ImuNoise, initial_nav, initial_preint, integrate_step, predict
from .jacobians import se3_jl_inv
from .kinds import Kind
from .optim import (
    KERNELS,
    STRATEGIES,
    Model,
    StopOnPlateau,
    Trivial,
    evaluate,
    init_state,
    lm_step,
    solve_cholesky,
    solve_pcg,
)
from .posegraph import PGOConfig, load_g2o, optimize_pgo, save_g2o
from .synth import make_circle_graph

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _positive(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _batch_list(text):
    try:
        batches = [int(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad batch list {text!r}")
    if not batches or any(b <= 0 for b in batches):
        raise argparse.ArgumentTypeError("batch sizes must be positive")
    return batches


def _make_kernel(name, delta):
    cls = KERNELS[name]
    return cls() if name == "trivial" else cls(delta)


def _make_strategy(name, damping):
    cls = STRATEGIES[name]
    return cls(damping=damping) if damping is not None else cls()


def _fmt(x):
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# pgo
# ---------------------------------------------------------------------------

def cmd_pgo(args):
    graph = load_g2o(args.input)
    solver = None
    if args.solver == "cholesky":
        solver = solve_cholesky
    elif args.solver == "pcg":
        solver = lambda eqs: solve_pcg(eqs, tol=args.tol)
    cfg = PGOConfig(
        kernel=_make_kernel(args.kernel, args.kernel_delta),
        strategy=_make_strategy(args.strategy, args.damping),
        solver=solver,
        steps=args.steps,
        patience=args.patience,
        decreasing=args.decreasing,
        pcg_tol=args.tol,
        verbose=args.verbose,
    )
    optimized, stats = optimize_pgo(graph, cfg)

    out_path = args.output or args.input + ".opt.g2o"
    stats_path = args.stats or args.input + ".stats.json"
    save_g2o(optimized, out_path)
    with open(stats_path, "w", encoding="utf-8") as f:
        json.dump(stats.as_dict(), f, indent=2)
        f.write("\n")
    print(f"chi2 {stats.initial_chi2:.6e} -> {stats.final_chi2:.6e} "
          f"in {stats.iterations} iterations ({stats.stop_reason})")
    print(f"wrote {out_path} and {stats_path}")

    if stats.solver_error:
        print(f"solver failure: {stats.solver_error}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.reference_chi2 is not None:
        rel = abs(stats.final_chi2 - args.reference_chi2) / args.reference_chi2
        if rel >= 0.01:
            print(f"final chi2 deviates from reference by {rel:.2%}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"reference chi2 matched within {rel:.2%}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# imu
# ---------------------------------------------------------------------------

_IMU_HEADER = ["t", "wx", "wy", "wz", "ax", "ay", "az"]


def _read_imu_csv(path):
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise ParseError("empty IMU file")
    header = [h.strip() for h in lines[0].split(",")]
    if header != _IMU_HEADER:
        raise ParseError(f"expected header {','.join(_IMU_HEADER)}, got {lines[0]!r}", line=1)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 7:
            raise ParseError(f"expected 7 fields, got {len(parts)}", line=lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError("non-numeric field", line=lineno) from None
    data = np.array(rows)
    for k in range(1, len(data)):
        if data[k, 0] <= data[k - 1, 0]:
            raise ParseError(f"non-monotone timestamp", line=k + 2)
    return data


def cmd_imu(args):
    data = _read_imu_csv(args.input)
    noise = ImuNoise(args.sigma_gyro, args.sigma_accel)
    gravity = np.array(args.gravity)
    state = initial_preint(bias_gyro=args.bias_gyro, bias_accel=args.bias_accel)
    start = initial_nav()

    out_path = args.output or args.input + ".traj.csv"
    with open(out_path, "w", encoding="utf-8") as f:
        f.write("t,px,py,pz,vx,vy,vz,qx,qy,qz,qw,trace_sigma\n")

        def emit(t, nav, trace):
            vals = [t, *nav.pos, *nav.vel, *nav.rot.values, trace]
            f.write(",".join(_fmt(v) for v in vals) + "\n")

        emit(data[0, 0], start, 0.0)
        for k in range(1, len(data)):
            dt = float(data[k, 0] - data[k - 1, 0])
            # left-point rule: the sample at the interval start is held over dt
            state = integrate_step(state, data[k - 1, 1:4], data[k - 1, 4:7], dt, noise)
            nav = predict(start, state, gravity)
            emit(data[k, 0], nav, float(np.trace(state.cov)))
    print(f"wrote {out_path} ({len(data)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args):
    if args.compare_backends:
        results = bench_mod.compare_backends(
            args.batches, args.precision, args.seed, args.threads)
        print(bench_mod.format_comparison(results))
        rows = results.get("compiled") or results["python"]
    else:
        rows = bench_mod.run_bench(
            args.batches, args.precision, args.seed, args.threads, args.backend)
    bench_mod.write_csv(rows, args.output)
    print(f"wrote {args.output} ({len(rows)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# invdemo
# ---------------------------------------------------------------------------

def make_inverse_problem(batch, seed, start=None):
    """Estimate the inverses of `batch` random rigid transforms: residual per
    item is Log(theta_i * input_i), zero exactly at theta = input^-1."""
    inputs = random_group(Kind.SE3, (batch,), sigma=1.0, seed=seed)
    theta = start if start is not None else \
        random_group(Kind.SE3, (batch,), sigma=1.0, seed=seed + 1)

    def fn(params):
        return log_map(compose(params[0], inputs)).values

    def jac(params):
        return se3_jl_inv(log_map(compose(params[0], inputs)).values)

    return Model(ParamSet(theta), fn, jacobian=jac, independent=True), inputs


def cmd_invdemo(args):
    model, _ = make_inverse_problem(args.batch, args.seed)
    strategy = _make_strategy("constant", args.damping)
    sched = StopOnPlateau(steps=args.steps, patience=args.patience,
                          decreasing=args.decreasing)
    state = init_state(model.params, strategy)
    _, loss0 = evaluate(model, state.params)
    print(f"{'iter':>4}  {'loss':>18}  {'lambda':>10}  status")
    print(f"{0:>4}  {loss0:>18.12e}  {state.lam:>10.2e}  init")
    while sched.continual():
        state = lm_step(state, model, kernel=Trivial(), strategy=strategy)
        print(f"{state.iteration:>4}  {state.loss:>18.12e}  {state.lam:>10.2e}  {state.status}")
        sched.step(state.loss)
    print(f"stop: {sched.reason}")
    print(f"final error: {state.loss:.12e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args):
    graph = make_circle_graph(
        n_nodes=args.nodes, radius=args.radius,
        trans_noise=args.trans_noise, rot_noise=args.rot_noise,
        meas_trans_noise=args.meas_trans_noise, meas_rot_noise=args.meas_rot_noise,
        seed=args.seed)
    save_g2o(graph, args.output)
    print(f"wrote {args.output} ({args.nodes} nodes, {len(graph.edges)} edges)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="lieopt",
        description="Batched Lie-group least squares: pose graphs, IMU, benchmarks.")
    parser.add_argument("--version", action="version", version=f"lieopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pgo", help="optimize a g2o pose graph")
    p.add_argument("input", help="g2o input file")
    p.add_argument("-o", "--output", help="optimized g2o path (default <input>.opt.g2o)")
    p.add_argument("--stats", help="stats JSON path (default <input>.stats.json)")
    p.add_argument("--kernel", choices=sorted(KERNELS), default="trivial")
    p.add_argument("--kernel-delta", type=_positive, default=1.0)
    p.add_argument("--strategy", choices=sorted(STRATEGIES), default="trustregion")
    p.add_argument("--damping", type=_positive, default=None,
                   help="initial lambda (strategy default when omitted)")
    p.add_argument("--solver", choices=["auto", "cholesky", "pcg"], default="auto")
    p.add_argument("--tol", type=_positive, default=1e-10, help="PCG relative tolerance")
    p.add_argument("--steps", type=_positive_int, default=50)
    p.add_argument("--patience", type=_positive_int, default=3)
    p.add_argument("--decreasing", type=_positive, default=1e-9)
    p.add_argument("--reference-chi2", type=_positive, default=None,
                   help="assert final chi2 within 1%% of this value")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_pgo)

    p = sub.add_parser("imu", help="integrate an IMU CSV into a trajectory")
    p.add_argument("input", help="CSV with header t,wx,wy,wz,ax,ay,az")
    p.add_argument("-o", "--output", help="trajectory CSV path (default <input>.traj.csv)")
    p.add_argument("--gravity", type=float, nargs=3, default=[0.0, 0.0, -9.81],
                   metavar=("GX", "GY", "GZ"))
    p.add_argument("--sigma-gyro", type=float, default=0.0,
                   help="gyro noise density [rad/s/sqrt(Hz)]")
    p.add_argument("--sigma-accel", type=float, default=0.0,
                   help="accel noise density [m/s^2/sqrt(Hz)]")
    p.add_argument("--bias-gyro", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    p.add_argument("--bias-accel", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    p.set_defaults(func=cmd_imu)

    p = sub.add_parser("bench", help="operator throughput benchmark")
    p.add_argument("--batches", type=_batch_list, default=[100, 10000],
                   help="comma-separated batch sizes")
    p.add_argument("-o", "--output", default="bench.csv")
    p.add_argument("--precision", choices=["f32", "f64"], default="f64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--backend", choices=["auto", "compiled", "python"], default="auto")
    p.add_argument("--compare-backends", action="store_true",
                   help="benchmark every built backend and print the ratio table")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("invdemo", help="batched transform-inverse estimation demo")
    p.add_argument("--batch", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--damping", type=_positive, default=1e-4)
    p.add_argument("--steps", type=_positive_int, default=10)
    p.add_argument("--patience", type=_positive_int, default=3)
    p.add_argument("--decreasing", type=_positive, default=1e-3)
    p.set_defaults(func=cmd_invdemo)

    p = sub.add_parser("synth", help="generate a synthetic noisy-circle g2o file")
    p.add_argument("-o", "--output", default="circle.g2o")
    p.add_argument("--nodes", type=_positive_int, default=100)
    p.add_argument("--radius", type=_positive, default=10.0)
    p.add_argument("--trans-noise", type=float, default=0.05)
    p.add_argument("--rot-noise", type=float, default=0.02)
    p.add_argument("--meas-trans-noise", type=float, default=0.0)
    p.add_argument("--meas-rot-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, GraphError, KindError, ShapeError, CorruptElementError,
            FileNotFoundError, IsADirectoryError, PermissionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, DomainError, LieOptError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
