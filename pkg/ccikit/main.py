import sys
from typing import Optional, Sequence

from ccikit.cli import run_subcommand


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_subcommand(argv)


if __name__ == "__main__":
    sys.exit(main())
