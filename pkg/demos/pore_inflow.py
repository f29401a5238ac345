"""Liquid injected through a pore in the left wall of a hydrophobic channel.

The left side (sub-id 3) is an Open boundary carrying a mass flux ``mdot``
and a strong ``phi = 1``; the channel walls are solid.  The injected mass
is compared with ``mdot * length * t``.

    python demos/pore_inflow.py [output_dir]
"""
import sys
from pathlib import Path

from chwet import build
from chwet.io import load_config

HERE = Path(__file__).parent


def main(out="demo_output/pore_inflow"):
    cfg = load_config(HERE / "configs" / "pore_inflow.cfg")
    s = build.run_scenario(cfg, out)
    mdot, length = cfg.physics.mdot[3], cfg.mesh.ly
    print(f"injected mass {s['mass'] - s['initial_mass']:.5f}, "
          f"expected {mdot * length * s['final_time']:.5f}")


if __name__ == "__main__":
    main(*sys.argv[1:])
