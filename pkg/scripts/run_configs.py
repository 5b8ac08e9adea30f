"""Run every INI file in configs/ through the CLI, one output directory per config.

    python scripts/run_configs.py [--out runs] [--only decay expansion_gamma1]

Prints a one-line summary per run and exits with the largest exit code.
"""

import argparse
import configparser
import sys
from pathlib import Path

from grushin.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def command_of(path: Path) -> str:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read(path)
    return cp["run"]["command"]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "runs"))
    ap.add_argument("--only", nargs="*", help="config stems to run")
    args = ap.parse_args(argv)
    code = 0
    for path in sorted((ROOT / "configs").glob("*.ini")):
        if args.only and path.stem not in args.only:
            continue
        rc = cli_main([command_of(path), "--config", str(path), "--out", str(Path(args.out) / path.stem)])
        code = max(code, rc)
    return code


if __name__ == "__main__":
    sys.exit(main())
