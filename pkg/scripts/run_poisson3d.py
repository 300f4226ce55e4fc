#!/usr/bin/env python3
"""Run the static 3-D potential experiment (least-squares weights)."""
import sys
from pathlib import Path

from pdesrc.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "poisson3d_ls.toml"

if __name__ == "__main__":
    sys.exit(main(["run", str(CONFIG), *sys.argv[1:]]))
