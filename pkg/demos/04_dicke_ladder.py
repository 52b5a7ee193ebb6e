"""The Dicke limit: all emitters see the same field.

With identical couplings the dynamics stays on the symmetric ladder
|J, M>, M = N/2 ... -N/2, with step rates (J + M)(J - M + 1).  That ladder is
a classical birth-death chain and needs nothing but a tridiagonal ODE, so it
checks the full 2^N solver independently.  Every single run passes the
ladder rung M = 0 with rate (N/2)(N/2 + 1), but the runs do so at scattered
times, so the averaged rate peaks well below that value.
"""

import numpy as np
from scipy.integrate import solve_ivp

from superradiance import IntegratorConfig, couplings_dicke, simulate


def ladder_peak(N):
    J = N / 2
    M = np.arange(J, -J - 1, -1)
    rates = (J + M) * (J - M + 1)

    def rhs(_t, p):
        out = -rates * p
        out[1:] += rates[:-1] * p[:-1]
        return out

    p0 = np.zeros(len(M))
    p0[0] = 1
    sol = solve_ivp(rhs, (0, 6), p0, method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True)
    ts = np.linspace(0, 6, 20001)
    R = rates @ sol.sol(ts)
    return R.max(), ts[R.argmax()]


cfg = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12, t_end=6)
print(" N   full solver   ladder      (N/2)(N/2+1)")
for N in (4, 6, 8, 10):
    tr = simulate(couplings_dicke(N), "exact", config=cfg)
    lp, _ = ladder_peak(N)
    print(f"{N:2d}  {tr.R_peak:10.5f}  {lp:10.5f}  {N / 2 * (N / 2 + 1):8.1f}")
