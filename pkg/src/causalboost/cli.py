"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .dgp import DESIGNS, DgpSpec, generate, write_sample_csv
from .errors import NumericalError, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--input", type=Path, help="input CSV (overrides config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", type=Path, dest="out_dir")
    p.add_argument("--outcome")
    p.add_argument("--sentiment")
    p.add_argument("--k-clusters", type=int, dest="k_clusters")
    p.add_argument("--split", type=float, help="train fraction for the SHAP model")
    p.add_argument("--threads", type=int, help="forest worker threads (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalboost", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("cluster", "correlation heatmap data, dendrogram and representatives"),
                            ("shap", "boosted outcome model and SHAP ranking on the test split"),
                            ("pipeline", "cluster, shap, then ate for every framework")):
        _add_common(sub.add_parser(name, help=help_text))
    ate = sub.add_parser("ate", help="AIPW ATE and causal-forest CATE per treatment")
    _add_common(ate)
    ate.add_argument("--framework", required=True)
    dgp = sub.add_parser("dgp", help="write a synthetic sample as CSV")
    dgp.add_argument("--design", choices=sorted(DESIGNS), required=True)
    dgp.add_argument("--n", type=int, default=2000)
    dgp.add_argument("--d", type=int, default=5)
    dgp.add_argument("--sigma", type=float, default=1.0)
    dgp.add_argument("--seed", type=int, default=0)
    dgp.add_argument("--output", type=Path, required=True)
    return parser


def run(args: argparse.Namespace) -> None:
    if args.command == "dgp":
        sample, truth = generate(DgpSpec(args.design, args.n, args.d, args.sigma, args.seed))
        write_sample_csv(sample, args.output)
        print(f"wrote {args.output} (true ATE {truth.ate})")
        return
    overrides = {k: getattr(args, k) for k in
                 ("input", "seed", "out_dir", "outcome", "sentiment", "k_clusters", "split", "threads")}
    config = load_config(args.config, overrides)
    if args.command == "cluster":
        pipeline.cmd_cluster(config)
    elif args.command == "shap":
        result = pipeline.cmd_shap(config)
        for name, imp in result.ranking:
            print(f"{name}\t{imp:.6g}")
    elif args.command == "ate":
        pipeline.cmd_ate(config, args.framework)
    elif args.command == "pipeline":
        print(pipeline.cmd_pipeline(config))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
