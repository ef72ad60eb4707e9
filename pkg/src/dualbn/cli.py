"""Command line entry point.

Deliberately imports nothing numeric at module level: --threads must pin
the BLAS/OpenMP thread pools through environment variables before numpy
first loads, which is what makes --threads 1 bit-deterministic.

Exit codes: 0 success, 2 config error, 3 data error, 4 checkpoint error.
"""

import argparse
import os
import sys

from .errors import (CheckpointError, ConfigError, ContractViolation,
                     DataFormatError, DegenerateBatch)

_THREAD_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

COMMANDS = ("train", "eval", "fourier", "lowpass", "affinity", "corrupt")


def set_thread_count(n: int):
    if n < 1:
        raise ConfigError(f"--threads must be >= 1, got {n}")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualbn",
        description="Train and probe dual batch-norm models at desk scale.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--checkpoint", help="checkpoint to evaluate")
    common.add_argument("--out", help="output directory (overrides config out_dir)")
    common.add_argument("--seed", type=int, help="seed override")
    common.add_argument("--threads", type=int,
                        help="pin BLAS/OpenMP threads; 1 = bit-deterministic mode")
    common.add_argument("--preset", help="named training preset")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "train": "train a model, write checkpoint + step log",
        "eval": "clean/interpolated accuracy and corruption report",
        "fourier": "frequency-sensitivity heatmap",
        "lowpass": "accuracy under low-pass filtered inputs",
        "affinity": "accuracy deltas of augmentation policies on a clean model",
        "corrupt": "export corrupted test-set copies as binary files",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        try:
            set_thread_count(args.threads)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
    from . import runner  # numpy loads here, after the env is pinned
    try:
        return runner.dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, DegenerateBatch) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 4
    except ContractViolation as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
