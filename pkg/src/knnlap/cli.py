"""Command-line interface.

Exit status: 0 success, 2 usage error, 3 invalid data or parameters,
4 numerical failure. ``--threads`` falls back to ``KNNLAP_THREADS``.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import _backend
from .errors import DataError, KnnLapError, NumericalError
from .experiments import (
    ConvergenceConfig,
    bandwidth_experiment,
    knn_rate_experiment,
    parse_regime,
    rate_schedule,
    run_convergence,
)
from .graph import LaplacianKind, Practical, Theoretical, affinity, laplacian_matrix
from .kernels import parse_kernel, parse_phi
from .knn import METHODS, BandwidthProfile, PointCloud, knn_all
from .manifold import CurveManifold

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _manifold(args) -> CurveManifold:
    config = {"name": args.manifold}
    if getattr(args, "manifold_config", None):
        config.update(_load_json(args.manifold_config))
    return CurveManifold.from_config(config)


def _load_json(source):
    text = source
    if not source.lstrip().startswith(("{", "[")):
        text = Path(source).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON {source!r}: {exc}") from None


def _write_rows(path, header, columns):
    data = np.column_stack(columns)
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def _param(args):
    if (args.sigma0 is None) == (args.eps is None):
        raise _UsageError("exactly one of --sigma0 and --eps is required")
    return Practical(args.sigma0) if args.sigma0 is not None else Theoretical(args.eps)


def cmd_sample(args):
    mf = _manifold(args)
    mf.sample(args.n, args.seed).to_csv(args.out)


def cmd_knn(args):
    cloud = PointCloud.from_csv(args.input)
    r_hat = knn_all(cloud, args.k, args.method)
    if args.d is None:
        _write_rows(args.out, ["r_hat"], [r_hat])
        return
    prof = BandwidthProfile.from_radii(r_hat, args.k, cloud.n, args.d)
    _write_rows(args.out, ["r_hat", "rho_hat"], [prof.r_hat, prof.rho_hat])


def _affinity(args):
    param = _param(args)
    cloud = PointCloud.from_csv(args.input)
    prof = BandwidthProfile.from_radii(knn_all(cloud, args.k, args.method), args.k, cloud.n, args.d)
    return prof, affinity(cloud, prof, parse_kernel(args.kernel), parse_phi(args.phi), param,
                          normalized=args.normalized, drop_below=args.drop_below)


def cmd_affinity(args):
    _, W = _affinity(args)
    W.to_csv(args.out)


def cmd_laplacian(args):
    kind = LaplacianKind(args.kind)
    args.normalized = kind.normalized
    prof, W = _affinity(args)
    L = laplacian_matrix(kind, W, prof)
    np.savetxt(args.out, L, fmt="%.17g", delimiter=",")


def cmd_bandwidth_exp(args):
    exp = bandwidth_experiment(args.n, args.k, args.seed, _manifold(args),
                               enforce_regime=args.enforce_regime)
    exp.write_csv(args.out)
    json.dump(exp.summary(), sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_convergence_exp(args):
    data = _load_json(args.config) if args.config else {}
    if not isinstance(data, dict):
        raise DataError("config must be a JSON object")
    overrides = {
        "replicas": args.replicas, "master_seed": args.seed, "k": args.k,
        "x0_t": args.x0, "probe_runs": args.probe_runs, "n_neighborhood": args.n_neighborhood,
        "grid_m": args.grid_m,
    }
    data.update({key: val for key, val in overrides.items() if val is not None})
    if args.cases:
        data["cases"] = args.cases
    cfg = ConvergenceConfig.from_json(data)
    result = run_convergence(cfg)
    paths = result.write(args.out)
    Path(args.out, "config.json").write_text(cfg.to_json() + "\n")
    for row in result.slopes:
        fit = row["fit"]
        desc = "no fit" if fit is None else f"slope {fit.slope:.3f} on {fit.window}"
        print(f"{row['case']:>4} {row['quantity']:<13} {desc}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")


def cmd_knn_rate_exp(args):
    exponent = args.exponent

    def schedule(n):
        return int(round(n ** exponent))

    exp = knn_rate_experiment(args.n, args.seeds, schedule, _manifold(args), args.seed)
    exp.write_csv(args.out)
    for n, val in exp.mean_by_n().items():
        print(f"N={n} mean_eps_rho_k={val:.6g}")
    if exp.fit is not None:
        print(f"slope={exp.fit.slope:.4f} r2={exp.fit.r2:.4f}")


def cmd_schedule(args):
    s = rate_schedule(args.n, args.d, parse_regime(args.regime), args.c, args.c_prime)
    out = {"N": s.n, "d": s.d, "regime": args.regime, "eps": s.eps}
    if s.k is not None:
        out["k"] = s.k
    else:
        out["k_range"] = list(s.k_range)
    print(json.dumps(out))


def _fraction(text):
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="knnlap", description="kNN-adaptive graph Laplacians and convergence experiments.")
    parser.add_argument("--threads", default=None, help="worker threads (int or 'auto'); default KNNLAP_THREADS or 1")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def manifold_opts(p):
        p.add_argument("--manifold", default="curve-b1")
        p.add_argument("--manifold-config", help="JSON object (or file) with coefficient overrides")

    def graph_opts(p):
        p.add_argument("--input", required=True)
        p.add_argument("--k", type=int, required=True)
        p.add_argument("--d", type=int, required=True, help="intrinsic dimension")
        p.add_argument("--kernel", default="exp", help="exp, exp:bare or ind:<s>")
        p.add_argument("--phi", default="geo", help="min, max, geo, mean or sqmean")
        p.add_argument("--sigma0", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--method", choices=METHODS, default="auto")
        p.add_argument("--drop-below", type=float, default=None)
        p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="sample the test curve to CSV")
    manifold_opts(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("knn", help="kNN radii (and rescaled bandwidths with --d)")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int)
    p.add_argument("--method", choices=METHODS, default="auto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_knn)

    p = sub.add_parser("affinity", help="dense affinity matrix to CSV")
    graph_opts(p)
    p.add_argument("--normalized", action="store_true")
    p.set_defaults(func=cmd_affinity)

    p = sub.add_parser("laplacian", help="dense graph Laplacian to CSV")
    graph_opts(p)
    p.add_argument("--kind", choices=[k.value for k in LaplacianKind], default="rw-tilde")
    p.set_defaults(func=cmd_laplacian)

    p = sub.add_parser("bandwidth-exp", help="empirical vs population bandwidths")
    manifold_opts(p)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--k", type=int, nargs="+", default=[32, 64])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--enforce-regime", action="store_true", help="reject k with r_k > r0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bandwidth_exp)

    p = sub.add_parser("convergence-exp", help="point-wise Laplacian convergence experiment")
    p.add_argument("--config", help="JSON config (file or inline)")
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--k", type=int)
    p.add_argument("--x0", type=float)
    p.add_argument("--n-neighborhood", type=int)
    p.add_argument("--probe-runs", type=int)
    p.add_argument("--grid-m", type=int)
    p.add_argument("--cases", nargs="+")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_convergence_exp)

    p = sub.add_parser("knn-rate-exp", help="bandwidth error rate along k = N^a")
    manifold_opts(p)
    p.add_argument("--n", type=int, nargs="+", default=[2000, 4000, 8000, 16000, 32000])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--exponent", type=_fraction, default=6 / 7, help="k = round(N^exponent)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_knn_rate_exp)

    p = sub.add_parser("schedule", help="optimal eps and k for a sample size")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--regime", choices=["fast", "slow"], required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--c-prime", type=float, default=1.0)
    p.set_defaults(func=cmd_schedule)
    return parser


def parse_and_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _backend.set_threads(args.threads)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"knnlap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError) as exc:
        print(f"knnlap: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (KnnLapError, ValueError) as exc:
        print(f"knnlap: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        _backend.set_threads(None)
    return 0


def main(argv=None) -> int:
    return parse_and_dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
