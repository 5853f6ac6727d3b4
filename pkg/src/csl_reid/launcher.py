"""csl-reid launcher - generate data, train, evaluate and ablate from the command line."""

import argparse
import logging
import sys

from csl_reid.config import OUTPUT_ROOT_ENV
from csl_reid.dispatch import dispatch, interrupt_active_runs
from csl_reid.logging_config import setup_logging
from csl_reid.run_config import ConfigError
from csl_reid.validate import ValidateOverrides

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class CliParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with :data:`EXIT_USAGE`."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON run config (data/train/eval sections)")
    common.add_argument(
        "--set",
        dest="overrides",
        action=ValidateOverrides,
        default=None,
        help='Dotted overrides, e.g. "train.lr0=0.05, train.epochs=3"',
    )
    common.add_argument("--out", default=None, help=f"Output directory (default under ${OUTPUT_ROOT_ENV})")
    common.add_argument("--force", action="store_true", help="Write into a non-empty output directory")
    common.add_argument("--debug", action="store_true", help="Log at DEBUG level")
    common.add_argument("-q", "--quiet", action="store_true", help="Hide progress bars")
    return common


def build_parser():
    common = _common_parser()
    parser = CliParser(
        prog="csl-reid", description="Color space learning lab for cross-modality person re-identification"
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    gen = sub.add_parser("gen", parents=[common], help="Render a synthetic VI or CC dataset")
    gen.add_argument("--regime", type=str.upper, choices=["VI", "CC"], default=None)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--n-train-ids", type=int, default=None)
    gen.add_argument("--n-test-ids", type=int, default=None)
    gen.add_argument("--views", type=int, default=None)
    gen.add_argument("--clothing-sets", type=int, default=None)
    gen.add_argument("--images-per-cell", type=int, default=None)

    def add_train_flags(cmd):
        cmd.add_argument("--data", required=True, help="Dataset directory holding train.csv and test.csv")
        cmd.add_argument("--mode", type=str.upper, choices=["VI", "CC"], default=None)
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--epochs", type=int, default=None)

    train = sub.add_parser("train", parents=[common], help="Train, checkpoint and evaluate one variant")
    add_train_flags(train)
    train.add_argument("--variant", default=None, help="baseline, cr, cs, gray, ica, pct or ica+pct")

    evaluate = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", required=True, help="Run directory or its checkpoint directory")
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--direction", default=None, help="both, nir2rgb, rgb2nir or cc")
    evaluate.add_argument("--gallery-views", default=None, help="Restrict the gallery to these views, e.g. 0,1")

    ablate = sub.add_parser("ablate", parents=[common], help="Train and evaluate a matrix of variants")
    add_train_flags(ablate)
    ablate.add_argument("--rows", default="baseline,ica,pct,ica+pct", help="Comma separated variants")
    ablate.add_argument("--signs", default="1", help="Negative-weight signs to cover, e.g. 1,-1")

    pct_apply = sub.add_parser("pct-apply", parents=[common], help="Write color-transformed images")
    pct_apply.add_argument("--checkpoint", required=True)
    pct_apply.add_argument("--data", required=True)
    pct_apply.add_argument("--split", choices=["train", "test"], default="test")
    pct_apply.add_argument("--limit", type=int, default=16, help="Number of images (0 for all)")

    export = sub.add_parser("export", parents=[common], help="Convert CSV outputs to long format")
    export.add_argument("inputs", nargs="+", help="Report, ablation or training-log CSV files")
    return parser


def parse_args(argv=None):
    """Parse command line arguments."""
    return build_parser().parse_args(argv)


def main(argv=None):
    """Run the csl-reid launcher.

    Returns:
        int: 0 on success, 1 for usage or configuration errors, 2 for
            runtime failures.
    """
    args = parse_args(argv)
    setup_logging(debug=args.debug)

    try:
        return dispatch(args)
    except KeyboardInterrupt:
        interrupt_active_runs()
        logger.warning("Interrupted")
        return EXIT_USAGE
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_USAGE
    except Exception as exc:
        logger.debug("Command %s failed", args.command, exc_info=True)
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
