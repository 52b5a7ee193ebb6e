"""Emission rate, peak localization and trace output."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .couplings import CouplingMatrix

_GOLDEN = (math.sqrt(5) - 1) / 2
PEAK_RTOL = 1e-6
NEGATIVE_RATE_FRACTION = 0.01


def emission_rate(state, couplings: CouplingMatrix) -> float:
    """``R = sum_nm Gamma_nm <s+_n s-_m>``.

    ``state`` is a :class:`~superradiance.cumulants.CumulantState` or a pair
    ``(z, C)`` where off-diagonal ``C[n, m] = <s+_n s-_m>``; the diagonal is
    always taken from ``(1 + z) / 2``.
    """
    if hasattr(state, "arrays"):
        z, C, *_ = state.arrays()
    else:
        z, C = state
    z = np.real(np.asarray(z))
    C = np.array(C, dtype=complex)
    np.fill_diagonal(C, 0.0)
    Gam = couplings.Gamma
    return float(np.diag(Gam) @ (1 + z) / 2 + np.real(np.sum(Gam * C)))


def golden_max(f, a: float, b: float, xtol: float) -> tuple:
    """Maximize a unimodal scalar function on [a, b]; returns ``(f_max, x_max)``."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (fc, c) if fc >= fd else (fd, d)


def find_peak(rate, t_start: float, t_end: float, samples: int = 401, breakpoints=None,
              rtol: float = PEAK_RTOL) -> tuple:
    """Global maximum ``(R_peak, t_peak)`` of ``rate`` on ``[t_start, t_end]``.

    ``rate`` maps a 1-D array of times to the rates there.

    The function is sampled on a uniform grid merged with ``breakpoints``
    (e.g. accepted integrator steps) and the best sample is refined by
    golden-section search on its neighbouring interval.  A trace that never
    rises above its initial value gives ``(rate(t_start), t_start)``.
    """
    ts = np.linspace(t_start, t_end, samples)
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float)
        ts = np.union1d(ts, bp[(bp >= t_start) & (bp <= t_end)])
    rs = np.asarray(rate(ts), dtype=float).reshape(len(ts))
    i = int(np.argmax(rs))
    best = (float(rs[i]), float(ts[i]))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
    if hi > lo:
        xtol = rtol * max(abs(best[1]), (t_end - t_start) * 1e-3)
        refined = golden_max(lambda t: float(np.asarray(rate(np.array([t])))[0]), lo, hi, xtol)
        if refined[0] > best[0]:
            best = (float(refined[0]), float(refined[1]))
    if best[1] != t_start and best[0] <= rs[0]:
        best = (float(rs[0]), float(t_start))
    return best


@dataclass
class EmissionTrace:
    """Sampled emission rate with its peak and a reliability flag."""

    times: np.ndarray
    rates: np.ndarray
    R_peak: float
    t_peak: float
    reliable: bool = True
    N: int = 0
    meta: dict = field(default_factory=dict)
    interpolant: object = field(default=None, repr=False, compare=False)

    def rate(self, t):
        """Emission rate at arbitrary times from the integrator's dense output."""
        if self.interpolant is None:
            return np.interp(t, self.times, self.rates)
        vals = self.interpolant(t)
        return vals[..., 0]

    def emitted(self, t0: float | None = None, t1: float | None = None) -> float:
        """Number of photons emitted in [t0, t1], i.e. the time integral of R.

        Integrates the piecewise dense output exactly (3-point Gauss-Legendre
        per step; the interpolant is a quartic in time within a step).
        """
        traj = self.interpolant
        t0 = self.times[0] if t0 is None else t0
        t1 = self.times[-1] if t1 is None else t1
        if traj is None:
            mask = (self.times >= t0) & (self.times <= t1)
            return float(np.trapezoid(self.rates[mask], self.times[mask]))
        nodes, weights = np.polynomial.legendre.leggauss(3)
        edges = np.union1d(traj.t[(traj.t > t0) & (traj.t < t1)], [t0, t1])
        a, b = edges[:-1], edges[1:]
        mid, half = (a + b) / 2, (b - a) / 2
        pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        vals = np.asarray(traj(pts))[..., 0].reshape(len(a), 3)
        return float(np.sum(half * (vals @ weights)))

    def write_csv(self, path, extra_meta: dict | None = None) -> None:
        meta = {"N": self.N, "R_peak": repr(self.R_peak), "t_peak": repr(self.t_peak),
                "reliable": str(self.reliable).lower(), **self.meta, **(extra_meta or {})}
        lines = [f"# {k}: {v}" for k, v in meta.items()]
        lines.append("t,R")
        lines += [f"{t!r},{r!r}" for t, r in zip(self.times.tolist(), self.rates.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path) -> tuple:
    """Return ``(meta, times, rates)`` from a trace CSV."""
    meta, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif line and line != "t,R":
            t, r = line.split(",")
            rows.append((float(t), float(r)))
    arr = np.array(rows)
    return meta, arr[:, 0], arr[:, 1]
