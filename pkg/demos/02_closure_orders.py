"""How good is the truncated moment hierarchy on a dense chain?

Compares the peak emission rate of second- and third-order cumulant
expansions against the exact master equation for small chains, with and
without the coherent dipole-dipole exchange.
"""

import warnings

from superradiance import build_lattice, couplings_free_space, polarization, simulate

print(" N  ham     exact     order 2   order 3   err2     err3")
for ham in (False, True):
    for N in (4, 5, 6, 7):
        cm = couplings_free_space(build_lattice("chain", N, 0.1), polarization("circular_plus"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            peaks = [simulate(cm, o, include_hamiltonian=ham).R_peak for o in ("exact", 2, 3)]
        ex, o2, o3 = peaks
        print(f"{N:2d}  {'on ' if ham else 'off'}  {ex:8.4f}  {o2:8.4f}  {o3:8.4f}  "
              f"{(o2 - ex) / ex:+.2%}  {(o3 - ex) / ex:+.2%}")
