"""Two sessile droplets spreading and merging under the energy-driven step controller.

Runs ``configs/coalescence.cfg`` and summarises the step-size history:
the refinements forced by the initial contact-line shock, the climb to
``dt_max`` and the second refinement episode when the droplets touch.

    python demos/coalescence.py [output_dir]
"""
import sys
from pathlib import Path

import numpy as np

from chwet import build
from chwet.io import load_config, read_csv

HERE = Path(__file__).parent


def main(out="demo_output/coalescence"):
    cfg = load_config(HERE / "configs" / "coalescence.cfg")
    build.run_scenario(cfg, out)
    d = read_csv(Path(out) / "energy.csv")
    dt, rec, t, emix = d["dt"][1:], d["recalculations"][1:], d["time"][1:], d["E_mix"][1:]
    print(f"step 1: {int(rec[0])} recalculations, accepted dt = {dt[0]:.3e}")
    top = np.flatnonzero(np.isclose(dt, cfg.time.dt_max))
    if top.size:
        print(f"dt first reaches dt_max = {cfg.time.dt_max:g} at t = {t[top[0]]:.3f}")
    k = int(np.argmax(emix))
    print(f"E_mix peaks at t = {t[k]:.3f} (value {emix[k]:.5f}), final {emix[-1]:.5f}")
    later = np.flatnonzero(rec[1:] > 0) + 1
    if later.size:
        print(f"later refinements at t = {', '.join(f'{x:.2f}' for x in t[later][:10])}")


if __name__ == "__main__":
    main(*sys.argv[1:])
