"""Relax a half-disc droplet on a wall and compare measured and imposed angles.

    python demos/contact_angle.py
"""
import math

from chwet import experiments
from chwet.io import config_from_dict, parse_config_text

CONFIG = """
mesh.lx = 1
mesh.ly = 0.5
mesh.nx = 20
mesh.ny = 10
mesh.x0 = -0.5
mesh.solid = bottom
physics.epsilon = 0.01
physics.mobility = 1
scheme.name = od1w
time.adapt = false
time.dt = 2e-4
time.T = 0.02
mesh_adapt.enabled = true
mesh_adapt.h_min = 0.002
mesh_adapt.h_max = 0.02
mesh_adapt.adapt_every = 5
initial.kind = droplet
initial.radius = 0.2
"""


def main():
    cfg = config_from_dict(parse_config_text(CONFIG)).validate()
    thetas = [math.pi / 3, math.pi / 2, 2 * math.pi / 3]
    res = experiments.angle_test(cfg, thetas)
    print(f"{'imposed':>10}{'measured':>10}{'ratio':>8}")
    for r in res["rows"]:
        print(f"{math.degrees(r['theta']):>10.2f}{math.degrees(r['theta_star']):>10.2f}{r['ratio']:>8.4f}")


if __name__ == "__main__":
    main()
