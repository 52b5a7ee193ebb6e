"""Single trajectories: couplings in, emission trace out."""

from __future__ import annotations

import logging
import warnings
from dataclasses import replace

import numpy as np

from .couplings import CouplingMatrix
from .cumulants import CumulantSystem, TruncationWarning
from .exact import N_MAX_EXACT, ExactLindblad, trace_guard
from .integrator import IntegratorConfig, integrate
from .observables import NEGATIVE_RATE_FRACTION, EmissionTrace, find_peak

log = logging.getLogger(__name__)

EXACT = "exact"
ORDERS = (2, 3, EXACT)

DEFAULT_EXACT_CONFIG = IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
DEFAULT_CUMULANT_CONFIG = IntegratorConfig(rel_tol=1e-7, abs_tol=1e-10)


def parse_order(order):
    if order in (2, 3, EXACT):
        return order
    if str(order).strip().lower() == EXACT:
        return EXACT
    try:
        val = int(order)
    except (TypeError, ValueError):
        val = None
    if val not in (2, 3):
        raise ValueError(f"order must be 2, 3 or 'exact', got {order!r}")
    return val


def build_system(couplings: CouplingMatrix, order, include_hamiltonian: bool = False,
                 reduction=None, max_exact_n: int = N_MAX_EXACT):
    order = parse_order(order)
    if order == EXACT:
        if reduction is not None:
            raise ValueError("distance-class reduction applies to cumulant runs only")
        return ExactLindblad(couplings, include_hamiltonian, max_exact_n)
    system = CumulantSystem(couplings, order, include_hamiltonian)
    if reduction is not None:
        from .reduction import ReducedSystem
        system = ReducedSystem(system, reduction)
    return system


def simulate(couplings: CouplingMatrix, order=3, *, include_hamiltonian: bool = False,
             config: IntegratorConfig | None = None, reduction=None,
             max_exact_n: int = N_MAX_EXACT, meta: dict | None = None,
             extend_once: bool = True) -> EmissionTrace:
    """Integrate from the fully inverted state and locate the emission peak.

    ``order`` is 2, 3 or ``"exact"``.  ``reduction`` is an optional
    :class:`~superradiance.reduction.DistanceClasses` for translation-reduced
    cumulant runs.  If the rate is still rising at ``t_end`` the run is
    repeated once with twice the horizon.

    When the truncated moments leave their physical range (see
    :class:`~superradiance.cumulants.TruncationWarning`) the peak is searched
    only before that time.  The trace stays ``reliable`` if the rate had
    already dropped below half its maximum by then.
    """
    order = parse_order(order)
    system = build_system(couplings, order, include_hamiltonian, reduction, max_exact_n)
    if config is None:
        config = DEFAULT_EXACT_CONFIG if order == EXACT else DEFAULT_CUMULANT_CONFIG
    N = couplings.N
    flags = {"breakdown": None, "reason": "", "best": (-np.inf, 0.0)}

    if order == EXACT:
        on_step = trace_guard(system)
        y0 = system.initial_vector()
    else:
        y0 = system.initial_vector()

        def on_step(t, y):
            R = float(system.observe(y)[0])
            if R > flags["best"][0]:
                flags["best"] = (R, t)
            if flags["breakdown"] is None:
                bad = system.soft_violation(y)
                if bad is not None:
                    flags.update(breakdown=t, reason=f"{bad[0]}={bad[1]:.4g} at t={t:.4g}")
                    warnings.warn(TruncationWarning(t, *bad), stacklevel=3)
            if flags["breakdown"] is not None:
                # nothing after a breakdown is trusted; stop once the burst is over
                R_best, t_best = flags["best"]
                return t_best < flags["breakdown"] and R < 0.5 * R_best
            return False

    traj = integrate(system.rhs, y0, config, observe=system.observe, on_step=on_step,
                     on_failure="raise" if order == EXACT else "return")

    def rate(ts):
        return np.asarray(traj(ts))[..., 0]

    t_search = traj.t_stop if flags["breakdown"] is None else flags["breakdown"]
    R_peak, t_peak = find_peak(rate, 0.0, t_search, config.dense_samples, breakpoints=traj.t)
    at_end = bool(t_peak >= t_search * (1 - 1e-9) and t_peak > 0)
    clean = flags["breakdown"] is None and traj.info.get("failure") is None
    if extend_once and at_end and clean:
        log.info("emission still rising at t_end=%g; extending once", config.t_end)
        return simulate(couplings, order, include_hamiltonian=include_hamiltonian,
                        config=replace(config, t_end=2 * config.t_end), reduction=reduction,
                        max_exact_n=max_exact_n, meta=meta, extend_once=False)

    # the peak is trusted when the rate had already fallen well below it before any breakdown
    reliable = not at_end
    reason = flags["reason"]
    if not clean:
        limit = t_search if flags["breakdown"] is not None else traj.t_stop
        after = traj.t[(traj.t > t_peak) & (traj.t <= limit)]
        fell = after.size and np.min(rate(after)) < 0.5 * R_peak
        reliable = reliable and bool(fell)
        reason = reason or str(traj.info.get("failure"))
    times = np.linspace(0.0, traj.t_stop, config.dense_samples)
    rates = rate(times)
    if np.min(traj.values[:, 0]) < -NEGATIVE_RATE_FRACTION * N and clean:
        reliable = False
        reason = reason or "negative emission rate"
    info = {"order": str(order), "reservoir": couplings.reservoir.value,
            "hamiltonian": "on" if include_hamiltonian else "off",
            "steps": traj.n_accepted, "rejected": traj.n_rejected, "nfev": traj.nfev,
            "peak_at_end": at_end}
    if flags["breakdown"] is not None:
        info["breakdown_time"] = flags["breakdown"]
    if traj.info.get("failure"):
        info["integration_failure"] = traj.info["failure"]
    if reason:
        info["unreliable_reason" if not reliable else "note"] = reason
    info.update(meta or {})
    return EmissionTrace(times=times, rates=rates, R_peak=R_peak, t_peak=t_peak,
                         reliable=reliable, N=N, meta=info, interpolant=traj)
