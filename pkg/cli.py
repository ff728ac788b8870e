# cli.py

"""
Command-line front end.

    python cli.py build --input rows.csv --p 1 --eps 0.05 --mode additive --seed 0 --out sketch.json
    python cli.py query --sketch sketch.json --x "0.6,0.8"
    python cli.py stream --input rows.lpss --algo mr --eps 0.1 --seed 0 --out sketch.json
    python cli.py svm build --input labelled.csv --eps 0.05 --seed 0 --out svm.json
    python cli.py svm query --sketch svm.json --theta "0.1,0.2" --b 0.3
    python cli.py experiment coreset-scaling --out report.csv

Results go to stdout as key=value lines. Exit codes: 0 ok, 2 bad input, 3 numeric
failure, 4 unsupported combination.
"""

import argparse
import inspect
import itertools
import logging
import sys

import numpy as np
from pydantic import ValidationError

from coreset_engine import MODES, CoresetSketch, build, build_affine, query
from core_model import InputError, NumericError, QueryDirection, SketchError, UnsupportedError
from experiments import EXPERIMENTS, run_experiment
from settings import configure_logging, get_settings
from sketch_io import StreamFile, load_sketch, save_sketch
from streaming import FourierSketch, MergeReduceState, RegionEnsemble, SensitivitySampler, fourier_order
from svm_pointquery import SvmBuilder, SvmSketch, svm_query

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_UNSUPPORTED = 0, 2, 3, 4
STREAM_ALGOS = ("mr", "sens", "region", "region-tight", "fourier")


def emit(**values) -> None:
    for key, value in values.items():
        print(f"{key}={value}")


def _stream(args) -> StreamFile:
    return StreamFile(args.input, p=args.p, has_weights=args.weights, has_labels=args.labels)


def cmd_build(args) -> int:
    stream = _stream(args)
    P, _ = stream.read_all()
    rng = np.random.default_rng(args.seed)
    if args.affine:
        sketch = build_affine(P, args.eps, rng, mode=args.mode)
    else:
        sketch = build(P, args.eps, rng, mode=args.mode)
    if sketch.transform is not None and sketch.transform.rank_deficient:
        raise NumericError(f"input has rank {sketch.transform.rank} < d = {P.dim}; multiplicative rounding is not certified")
    save_sketch(args.out, sketch, d=P.dim, p=P.p, eps=args.eps, seed=args.seed, mode=args.mode, affine=args.affine)
    emit(kind="coreset", size=len(sketch), source_size=sketch.source_size, rounds=sketch.rounds, error_budget=sketch.error_budget)
    return EXIT_OK


def cmd_query(args) -> int:
    document, sketch = load_sketch(args.sketch)
    x = QueryDirection.parse(args.x).x
    if isinstance(sketch, CoresetSketch):
        report = query(sketch, x, args.b)
        emit(estimate=report.estimate, additive_bound=report.additive_bound, multiplicative=report.multiplicative)
    elif isinstance(sketch, SvmSketch):
        raise InputError("svm sketches are queried with `svm query`")
    else:
        if args.b is not None:
            raise InputError(f"an offset b needs a coreset built with --affine, got a {document.kind} sketch")
        emit(estimate=sketch.query(x), kind=document.kind)
    return EXIT_OK


def _first_row(rows):
    try:
        return next(rows)
    except StopIteration:
        raise InputError("the stream holds no rows") from None


def cmd_stream(args) -> int:
    stream = _stream(args)
    p = stream.p
    n_hint = stream.header.count if stream.header is not None and stream.header.count else None
    rows = stream.rows()
    first = _first_row(rows)
    d = len(first[0])
    rng = np.random.default_rng(args.seed)
    params = dict(d=d, p=p, eps=args.eps, seed=args.seed, algo=args.algo)

    if args.algo in ("region", "region-tight") and not float(p).is_integer():
        raise InputError(f"the region sketch needs an integer p, got {p}")
    if args.algo == "fourier" and d != 2:
        raise InputError(f"the Fourier sketch needs d = 2, got d = {d}")

    if args.algo == "mr":
        state = MergeReduceState(d, p, args.eps, rng, n_hint=n_hint, mode=args.mode)
        for x, w, _ in itertools.chain([first], rows):
            state.ingest(x, w)
        sketch = state.finalize()
        stats = dict(
            rows=state.n_seen, peak_rows=state.peak_rows, reduces=state.reduces, oversized=state.oversized, size=len(sketch)
        )
    elif args.algo == "sens":
        sampler = SensitivitySampler(d, p, args.eps, rng, n_hint=n_hint)
        for x, w, _ in itertools.chain([first], rows):
            sampler.ingest(x, w)
        sketch = sampler.finalize()
        stats = dict(
            rows=sampler.tracker.n_seen, sampled=sampler.sampled, expected_samples=sampler.expected_samples,
            peak_rows=sampler.tracker.peak_rows + sampler.sampler.peak_rows, size=len(sketch),
        )
    elif args.algo == "fourier":
        sketch = FourierSketch(p=p, K=args.order or fourier_order(args.eps, p))
        n = 0
        for x, w, _ in itertools.chain([first], rows):
            sketch.ingest(x, w)
            n += 1
        params["K"] = sketch.K
        stats = dict(rows=n, K=sketch.K, moments=2 * (sketch.K + 1))
    else:
        sketch = RegionEnsemble.create(
            d, int(p), args.eps, replicas=args.replicas, seed=args.seed, n_hint=n_hint, tight=args.algo == "region-tight"
        )
        for x, w, _ in itertools.chain([first], rows):
            if w != 1.0:
                raise InputError("the region sketch takes unweighted rows")
            sketch.ingest(x)
        head = sketch.sketches[0]
        stats = dict(
            rows=head.n, replicas=len(sketch.sketches), records=len(head.records), tensor_slots=head.tensor_slots,
            slot_updates_per_row=head.slot_updates / max(head.n_seen, 1),
        )
    save_sketch(args.out, sketch, **params)
    emit(algo=args.algo, **stats)
    return EXIT_OK


def cmd_svm_build(args) -> int:
    stream = StreamFile(args.input, p=1.0, has_weights=args.weights, has_labels=True)
    rows = stream.rows()
    first = _first_row(rows)
    builder = SvmBuilder(len(first[0]), args.eps, np.random.default_rng(args.seed), lam=args.lam)
    for x, _, y in itertools.chain([first], rows):
        if y is None:
            raise InputError("svm streams need a label per row")
        builder.ingest(x, y)
    sketch = builder.finalize()
    save_sketch(args.out, sketch, d=sketch.d, p=1.0, eps=args.eps, seed=args.seed, lam=args.lam)
    emit(kind="svm", n=sketch.n, positives=sketch.counts[1], negatives=sketch.counts[-1], size=sketch.size)
    return EXIT_OK


def cmd_svm_query(args) -> int:
    _, sketch = load_sketch(args.sketch)
    if not isinstance(sketch, SvmSketch):
        raise InputError("`svm query` needs a sketch written by `svm build`")
    theta = QueryDirection.parse(args.theta).x
    emit(estimate=svm_query(sketch, theta, args.b))
    return EXIT_OK


def cmd_experiment(args) -> int:
    accepted = inspect.signature(EXPERIMENTS[args.name]).parameters
    options = {"d": args.d, "p": args.p, "seed": args.seed, "affine": args.affine, "k_max": args.k_max}
    kwargs = {key: value for key, value in options.items() if key in accepted and value is not None}
    report = run_experiment(args.name, **kwargs)
    report.to_csv(args.out, index=False)
    emit(experiment=args.name, rows=len(report), out=args.out)
    return EXIT_OK


def _add_stream_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="LPSS1 binary or CSV row stream")
    parser.add_argument("--weights", action="store_true", help="CSV rows carry a weight column")
    parser.add_argument("--labels", action="store_true", help="CSV rows end with a +1/-1 label column")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subspace-sketch", description="Subspace sketches and coresets for lp queries.")
    parser.add_argument("--log-level", default=None, help="root log level, defaults to SUBSKETCH_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    p_build = commands.add_parser("build", help="batch coreset of a row file")
    _add_stream_input(p_build)
    p_build.add_argument("--p", type=float, default=None, help="power p, required for CSV input")
    p_build.add_argument("--eps", type=float, required=True)
    p_build.add_argument("--mode", choices=MODES, default="additive")
    p_build.add_argument("--affine", action="store_true", help="sketch the lifted rows (A_i, -1) for offsets b")
    p_build.add_argument("--seed", type=int, default=0)
    p_build.add_argument("--out", required=True)
    p_build.set_defaults(handler=cmd_build)

    p_query = commands.add_parser("query", help="evaluate a saved sketch at one direction")
    p_query.add_argument("--sketch", required=True)
    p_query.add_argument("--x", required=True, help='comma separated direction, e.g. "0.6,0.8"')
    p_query.add_argument("--b", type=float, default=None, help="offset for affine coresets")
    p_query.set_defaults(handler=cmd_query)

    p_stream = commands.add_parser("stream", help="one-pass sketch of a row stream")
    _add_stream_input(p_stream)
    p_stream.add_argument("--p", type=float, default=None)
    p_stream.add_argument("--algo", choices=STREAM_ALGOS, required=True)
    p_stream.add_argument("--eps", type=float, required=True)
    p_stream.add_argument("--mode", choices=MODES, default="multiplicative", help="coreset mode of mr blocks")
    p_stream.add_argument("--replicas", type=int, default=None, help="region replicas, defaults to SUBSKETCH_MEDIAN_REPLICAS")
    p_stream.add_argument("--order", type=int, default=None, help="Fourier truncation K, defaults to the eps rule")
    p_stream.add_argument("--seed", type=int, default=0)
    p_stream.add_argument("--out", required=True)
    p_stream.set_defaults(handler=cmd_stream)

    p_svm = commands.add_parser("svm", help="SVM objective sketches")
    svm_commands = p_svm.add_subparsers(dest="svm_command", required=True)
    p_svm_build = svm_commands.add_parser("build")
    p_svm_build.add_argument("--input", required=True, help="rows of d floats and a +1/-1 label")
    p_svm_build.add_argument("--weights", action="store_true")
    p_svm_build.add_argument("--eps", type=float, required=True)
    p_svm_build.add_argument("--lam", type=float, default=0.0)
    p_svm_build.add_argument("--seed", type=int, default=0)
    p_svm_build.add_argument("--out", required=True)
    p_svm_build.set_defaults(handler=cmd_svm_build)
    p_svm_query = svm_commands.add_parser("query")
    p_svm_query.add_argument("--sketch", required=True)
    p_svm_query.add_argument("--theta", required=True)
    p_svm_query.add_argument("--b", type=float, default=0.0)
    p_svm_query.set_defaults(handler=cmd_svm_query)

    p_exp = commands.add_parser("experiment", help="scaling reports as CSV")
    p_exp.add_argument("name", choices=sorted(EXPERIMENTS))
    p_exp.add_argument("--out", required=True)
    p_exp.add_argument("--d", type=int, default=None)
    p_exp.add_argument("--p", type=float, default=None)
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--affine", action="store_true", default=None)
    p_exp.add_argument("--k-max", dest="k_max", type=int, default=None)
    p_exp.set_defaults(handler=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level)
        get_settings()
    except (ValidationError, ValueError) as exc:
        print(f"error=invalid settings: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.handler(args)
    except InputError as exc:
        print(f"error={exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"error={exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except UnsupportedError as exc:
        print(f"error={exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except SketchError as exc:
        logger.exception("unexpected sketch failure")
        print(f"error={exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
