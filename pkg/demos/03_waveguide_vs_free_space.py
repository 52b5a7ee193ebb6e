"""Infinite-range versus decaying couplings.

Emitters along a waveguide keep talking to each other at any distance, and
their exponent climbs towards two (at these small N the third-order
truncation still sits below it).  The same chain in free space only
couples strongly to near neighbours, and the exponent drifts towards one.
A small sweep of both, run through the same machinery as the CLI.
"""

from superradiance.config import parse_plan
from superradiance.scaling import run_sweep

plan = parse_plan("""[plan]
name = demo_compare
[sweep]
order = 3
N = 4, 8, 16, 32
[sweep.waveguide]
reservoir = waveguide
theta_over_pi = 0.2
[sweep.free]
reservoir = free_space
kind = chain
spacing = 0.2
polarization = linear_z
""", "<demo>")


def show(done, total, rec):
    print(f"  [{done}/{total}] {rec.reservoir:10s} N={rec.N:3d} R_peak={rec.R_peak:9.3f}")


result = run_sweep(plan, progress=show)
for key, pts in result.alphas.items():
    print(key[1], " ".join(f"alpha({p.N})={p.alpha:.2f}" for p in pts))
