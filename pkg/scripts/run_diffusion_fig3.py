#!/usr/bin/env python3
"""Run the 2-D diffusion experiment (3 sources, 41 random sensors, 15 dB)."""
import sys
from pathlib import Path

from pdesrc.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "diffusion_fig3.toml"

if __name__ == "__main__":
    sys.exit(main(["run", str(CONFIG), *sys.argv[1:]]))
