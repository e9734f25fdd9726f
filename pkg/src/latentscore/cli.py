"""Command-line interface.

Subcommands: generate, fit, score, dof, enumerate, discover, eval. Options
can also come from a ``--config`` file of ``key = value`` lines (keys are the
long option names, ``#`` starts a comment); flags given on the command line
take precedence over the file, and the file over built-in defaults.

Exit codes: 0 on success, 1 on internal errors, 2 on usage or validation
errors.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .dimension import dof_hierarchical, dof_numeric, dof_one_factor, dof_upper_bound
from .enumeration import CandidateLimitExceeded, EnumerationConfig, enumerate_hierarchical, enumerate_one_factor
from .evaluation import GROUND_TRUTHS, BenchmarkConfig, ground_truth, metric_rows_csv, metric_table, run_trials, aggregate
from .graph import LatentDag, satisfies_hierarchical, satisfies_one_factor
from .scoring import Dataset, FitOptions, GenerationTestConfig, bic, fit_ml, score_dim
from .search import ContinuousOptions, SearchConfig, exact_search
from .sem import dumps_parameters, random_parameters, read_csv, sample, write_csv

log = logging.getLogger("latentscore")

DEFAULT_SEED = 0


class UsageError(Exception):
    """Invalid input; reported with exit code 2."""


# ---------------------------------------------------------------------------
# file helpers


def _atomic_write(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise UsageError(f"output directory does not exist: {directory}")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        _atomic_write(path, text)


def _read_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load_graph(args) -> LatentDag:
    if getattr(args, "truth", None):
        try:
            return ground_truth(args.truth)[1]
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    if not getattr(args, "graph", None):
        raise UsageError("give a graph file with --graph or a builtin id with --truth")
    try:
        obj = json.loads(_read_text(args.graph))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.graph}: invalid JSON ({exc})") from None
    if isinstance(obj, dict) and "graph" in obj and "m" not in obj:
        obj = obj["graph"]
    try:
        return LatentDag.from_dict(obj)
    except (ValueError, TypeError, AttributeError) as exc:
        raise UsageError(f"{args.graph}: {exc}") from None


def _load_dataset(args) -> Dataset:
    if getattr(args, "cov", None):
        try:
            obj = json.loads(_read_text(args.cov))
            return Dataset(np.array(obj["covariance"], dtype=float), int(obj["samples"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{args.cov}: expected JSON with 'covariance' and 'samples' ({exc})") from None
    if not getattr(args, "data", None):
        raise UsageError("give samples with --data or a covariance with --cov")
    try:
        data = read_csv(_read_text(args.data))
    except ValueError as exc:
        raise UsageError(f"{args.data}: {exc}") from None
    return Dataset.from_samples(data)


def _fit_options(args) -> FitOptions:
    return FitOptions(restarts=args.restarts, maxiter=args.maxiter, gtol=args.gtol, seed=args.seed)


def _dof(g: LatentDag) -> int:
    if satisfies_one_factor(g):
        return dof_one_factor(g)
    if satisfies_hierarchical(g):
        return dof_hierarchical(g).combinatorial
    raise UsageError("graph satisfies neither the one-factor nor the hierarchical assumption; "
                     "no combinatorial dof is available")


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _str_list(text: str) -> list[str]:
    return [v for v in str(text).replace(",", " ").split() if v]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    g = _load_graph(args)
    if not args.out_data:
        raise UsageError("--out-data is required")
    rng = np.random.default_rng(args.seed)
    p = random_parameters(g, rng)
    x = sample(p, args.samples, rng)
    buf = io.StringIO()
    write_csv(x, buf)
    _atomic_write(args.out_data, buf.getvalue())
    if args.out_params:
        _atomic_write(args.out_params, dumps_parameters(p) + "\n")
    log.info("wrote %d samples of %d variables", args.samples, g.m)
    return 0


def cmd_fit(args) -> int:
    g = _load_graph(args)
    d = _load_dataset(args)
    if g.m != d.m:
        raise UsageError(f"graph has {g.m} measured variables, data has {d.m}")
    fit = fit_ml(g, d, _fit_options(args))
    out = json.loads(dumps_parameters(fit.params))
    out.update(nll=fit.nll, converged=fit.converged, restarts_used=fit.restarts_used)
    _emit(json.dumps(out, indent=2), args.out)
    return 0


def cmd_score(args) -> int:
    g = _load_graph(args)
    d = _load_dataset(args)
    if g.m != d.m:
        raise UsageError(f"graph has {g.m} measured variables, data has {d.m}")
    dof = _dof(g)
    fit = fit_ml(g, d, _fit_options(args))
    if args.score == "bic":
        sc = bic(g, d, dof, fit)
    else:
        sc = score_dim(g, d, dof, fit, GenerationTestConfig(level=args.level))
    value = sc.value if np.isfinite(sc.value) else "inf"
    _emit(json.dumps({"score": args.score, "value": value, "dof": sc.dof, "nll": sc.nll}, indent=2),
          args.out)
    return 0


def cmd_dof(args) -> int:
    g = _load_graph(args)
    if satisfies_one_factor(g):
        out = {"assumption": "one-factor", "combinatorial": dof_one_factor(g)}
    elif satisfies_hierarchical(g):
        out = {"assumption": "hierarchical", **dof_hierarchical(g).to_dict()}
    else:
        out = {"assumption": None, "combinatorial": None}
    out["upper_bound"] = dof_upper_bound(g)
    if args.numeric:
        out["numeric"] = dof_numeric(g, rng=np.random.default_rng(args.seed))
    _emit(json.dumps(out, indent=2), args.out)
    return 0


def cmd_enumerate(args) -> int:
    try:
        cfg = EnumerationConfig(args.m, n_max=args.n_max, mode=args.mode,
                                max_candidates=args.max_candidates)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    graphs = enumerate_one_factor(cfg) if args.mode == "one-factor" else enumerate_hierarchical(cfg)
    _emit("".join(json.dumps(g.to_dict()) + "\n" for g in graphs) or "\n", args.out)
    return 0


_DISCOVER_MODES = {"one-factor": "one-factor-exact", "hierarchical": "hierarchical-exact",
                   "continuous": "one-factor-continuous"}


def cmd_discover(args) -> int:
    from .continuous import continuous_search

    d = _load_dataset(args)
    mode = _DISCOVER_MODES[args.mode]
    try:
        enum = None
        if mode != "one-factor-continuous":
            enum = EnumerationConfig(d.m, n_max=args.n_max, mode=mode.rsplit("-", 1)[0],
                                     max_candidates=args.max_candidates)
        cfg = SearchConfig(
            mode=mode, score_kind=args.score, enumeration=enum, fit_options=_fit_options(args),
            continuous=ContinuousOptions(restarts=args.cs_restarts, iterations=args.iterations),
            generation_test=GenerationTestConfig(level=args.level), workers=args.workers,
            seed=args.seed, prune=not args.no_prune)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if mode == "one-factor-continuous":
        if d.m < 3:
            raise UsageError("continuous search needs at least 3 measured variables; "
                             "no valid one-factor structure exists")
        report = continuous_search(d, cfg)
    else:
        report = exact_search(d, cfg)
    if args.out_graph:
        _atomic_write(args.out_graph, json.dumps(report.best.graph.to_dict(), indent=2) + "\n")
    if args.out_report:
        _atomic_write(args.out_report, json.dumps(report.to_dict(), indent=2) + "\n")
    if not args.quiet:
        sys.stdout.write(report.table() + "\n")
        sys.stdout.write(f"best: {report.best.graph} score={report.best.score.value:.4f}\n")
    return 0


def cmd_eval(args) -> int:
    truths = args.truths or list(GROUND_TRUTHS["one-factor"])
    for t in truths:
        try:
            ground_truth(t)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    try:
        cfg = BenchmarkConfig(truths=tuple(truths), sample_sizes=tuple(args.samples),
                              trials=args.trials, methods=tuple(args.methods), seed=args.seed,
                              workers=args.workers, score_kind=args.score,
                              fit_options=_fit_options(args),
                              continuous=ContinuousOptions(restarts=args.cs_restarts,
                                                           iterations=args.iterations))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    results = run_trials(cfg)
    rows = aggregate(results)
    if args.out_csv:
        _atomic_write(args.out_csv, metric_rows_csv(rows))
    if args.out_trials:
        lines = [json.dumps(r.__dict__, default=str) for r in results]
        _atomic_write(args.out_trials, "\n".join(lines) + "\n")
    sys.stdout.write(metric_table(rows, "f1") + "\n" + metric_table(rows, "shd") + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_graph_args(p):
    p.add_argument("--graph", help="graph JSON file")
    p.add_argument("--truth", help="builtin ground-truth id instead of --graph")


def _add_data_args(p):
    p.add_argument("--data", help="samples CSV with header X1,...,Xm")
    p.add_argument("--cov", help="JSON file with 'covariance' and 'samples' instead of --data")


def _add_fit_args(p):
    p.add_argument("--restarts", type=int, default=5, help="random starts per ML fit")
    p.add_argument("--maxiter", type=int, default=2000)
    p.add_argument("--gtol", type=float, default=1e-6)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentscore", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with option defaults")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="sample data from a graph")
    _add_graph_args(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--out-data", help="CSV output path")
    p.add_argument("--out-params", help="parameter JSON output path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", parents=[common], help="maximum-likelihood fit of a graph")
    _add_graph_args(p)
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--out", help="output JSON (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", parents=[common], help="BIC or dimension score of a graph")
    _add_graph_args(p)
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--score", choices=("bic", "dim"), default="bic")
    p.add_argument("--level", type=float, default=1e-3, help="generation test level for --score dim")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("dof", parents=[common], help="degrees of freedom of a graph")
    _add_graph_args(p)
    p.add_argument("--numeric", type=_bool, nargs="?", const=True, default=False,
                   help="also compute the Jacobian rank")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dof)

    p = sub.add_parser("enumerate", parents=[common], help="list candidate structures as JSON lines")
    p.add_argument("--mode", choices=("one-factor", "hierarchical"), default="one-factor")
    p.add_argument("--m", type=int, required=False)
    p.add_argument("--n-max", type=int)
    p.add_argument("--max-candidates", type=int, default=1_000_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("discover", parents=[common], help="search for the best-scoring structure")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--mode", choices=tuple(_DISCOVER_MODES), default="one-factor")
    p.add_argument("--score", choices=("bic", "dim"), default="bic")
    p.add_argument("--level", type=float, default=1e-3)
    p.add_argument("--n-max", type=int)
    p.add_argument("--max-candidates", type=int, default=1_000_000)
    p.add_argument("--no-prune", type=_bool, nargs="?", const=True, default=False,
                   help="score every hierarchical candidate instead of branch and bound")
    p.add_argument("--cs-restarts", type=int, default=10, help="continuous search restarts")
    p.add_argument("--iterations", type=int, default=3000, help="continuous search Adam steps")
    p.add_argument("--out-graph")
    p.add_argument("--out-report")
    p.add_argument("--quiet", type=_bool, nargs="?", const=True, default=False)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("eval", parents=[common], help="run the synthetic benchmark")
    p.add_argument("--truths", type=_str_list, help="comma-separated builtin truth ids")
    p.add_argument("--samples", type=_int_list, default=[100, 300, 1000, 3000, 10000])
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--methods", type=_str_list, default=["exact"])
    p.add_argument("--score", choices=("bic", "dim"), default="bic")
    _add_fit_args(p)
    p.add_argument("--cs-restarts", type=int, default=10)
    p.add_argument("--iterations", type=int, default=3000)
    p.add_argument("--out-csv")
    p.add_argument("--out-trials", help="JSON lines with every trial")
    p.set_defaults(func=cmd_eval)
    return parser


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(_read_text(path).splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command:
        try:
            sp = _subparser(parser, known.command)
        except KeyError:
            return parser.parse_args(argv)
        dests = {a.dest for a in sp._actions}
        everywhere = set()
        for name in ("generate", "fit", "score", "dof", "enumerate", "discover", "eval"):
            everywhere |= {a.dest for a in _subparser(parser, name)._actions}
        conf = read_config(known.config)
        unknown = sorted(set(conf) - everywhere)
        if unknown:
            raise UsageError(f"{known.config}: unknown keys {', '.join(unknown)}")
        # string defaults go through each option's type conversion
        sp.set_defaults(**{k: v for k, v in conf.items() if k in dests and k not in ("func", "config")})
    args = parser.parse_args(argv)
    for name in ("numeric", "no_prune", "quiet"):
        if hasattr(args, name):
            setattr(args, name, _bool(getattr(args, name)))
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"latentscore: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0) if not isinstance(exc.code, str) else 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    if args.command == "enumerate" and args.m is None:
        print("latentscore: error: enumerate needs --m", file=sys.stderr)
        return 2
    if getattr(args, "workers", 1) < 1:
        print("latentscore: error: --workers must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UsageError, CandidateLimitExceeded) as exc:
        print(f"latentscore: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"latentscore: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
