#!/usr/bin/env python3
"""Run the distributed 3-D wave experiment (gossip consensus per node)."""
import sys
from pathlib import Path

from pdesrc.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "wave3d_distributed.toml"

if __name__ == "__main__":
    sys.exit(main(["run", str(CONFIG), *sys.argv[1:]]))
