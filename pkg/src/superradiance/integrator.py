"""Adaptive Dormand-Prince 5(4) integration with dense output.

The state is any numpy array (real or complex).  Dense output is kept for an
*affine* observable of the state (by default the state itself), which is how
the emission-rate trace of a large moment system is stored without keeping
every intermediate state in memory.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

# Dormand & Prince (1980) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# Hairer's continuous extension (dense output of order 4)
_D = (-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
      -10690763975 / 1880347072, 701980252875 / 199316789632,
      -1453857185 / 822651844, 69997945 / 29380423)

_SAFETY = 0.9
_FAC_MIN = 0.2   # largest step shrink per step is 1/5
_FAC_MAX = 10.0
_BETA = 0.04     # PI (Lund) stabilization
_EXPO = 0.2 - 0.75 * _BETA


class IntegrationError(RuntimeError):
    pass


class StiffnessWarning(RuntimeWarning):
    pass


@dataclass
class IntegratorConfig:
    rel_tol: float = 1e-7
    abs_tol: float = 1e-10
    t_end: float = 10.0
    max_step: float = math.inf
    dense_samples: int = 401
    first_step: float | None = None
    max_steps: int = 200_000
    stiff_rejects: int = 12

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.dense_samples < 2:
            raise ValueError("dense_samples must be at least 2")


@dataclass
class Trajectory:
    """Accepted steps plus the piecewise-polynomial dense output of the observable."""

    t: np.ndarray
    values: np.ndarray
    segments: np.ndarray
    y_final: np.ndarray
    y_eval: np.ndarray | None = None
    t_eval: np.ndarray | None = None
    nfev: int = 0
    n_accepted: int = 0
    n_rejected: int = 0
    stopped_early: bool = False
    info: dict = field(default_factory=dict)

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_stop(self) -> float:
        return float(self.t[-1])

    def __call__(self, t):
        """Observable at time(s) ``t``; exact stored values at accepted step times."""
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(tt < self.t[0]) or np.any(tt > self.t[-1]):
            raise ValueError(f"t outside integrated interval [{self.t[0]}, {self.t[-1]}]")
        idx = np.clip(np.searchsorted(self.t, tt, side="right") - 1, 0, len(self.t) - 2)
        out = np.empty((len(tt),) + self.values.shape[1:], dtype=self.segments.dtype)
        for j, (i, tj) in enumerate(zip(idx, tt)):
            if tj == self.t[i]:
                out[j] = self.values[i]
            elif tj == self.t[i + 1]:
                out[j] = self.values[i + 1]
            else:
                out[j] = _contd5(self.segments[i], (tj - self.t[i]) / (self.t[i + 1] - self.t[i]))
        return out[0] if scalar else out

    def sample(self, n: int | None = None) -> tuple:
        """Uniform grid of ``n`` times over the integrated interval and the observable there."""
        n = n or self.info.get("dense_samples", 401)
        ts = np.linspace(self.t[0], self.t[-1], n)
        return ts, self(ts)


def _contd5(seg, theta):
    r1, r2, r3, r4, r5 = seg
    th1 = 1.0 - theta
    return r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))


def _rms(x):
    return math.sqrt(float(np.mean(np.abs(x) ** 2))) if x.size else 0.0


def _initial_step(rhs, t0, y0, f0, cfg, direction_end):
    sc = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0, d1 = _rms(y0 / sc), _rms(f0 / sc)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, cfg.max_step, direction_end)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = _rms((f1 - f0) / sc) / h0
    dmax = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if dmax <= 1e-15 else (0.01 / dmax) ** 0.2
    return min(100 * h0, h1, cfg.max_step, direction_end)


def integrate(rhs, y0, config: IntegratorConfig | None = None, *, t0: float = 0.0,
              observe=None, t_eval=None, on_step=None, on_failure: str = "raise") -> Trajectory:
    """Integrate ``dy/dt = rhs(t, y)`` from ``t0`` to ``config.t_end``.

    ``observe(y)`` must be affine in ``y``; its dense output is recorded for
    every step.  ``t_eval`` requests full states at the given times.
    ``on_step(t, y)`` runs after each accepted step and may return True to
    stop the integration there.  With ``on_failure="return"`` a numerical
    failure ends the integration and the steps accepted so far are returned,
    with the reason in ``info["failure"]``.
    """
    cfg = config or IntegratorConfig()
    y = np.array(y0, copy=True)
    if observe is None:
        def observe(v):
            return v
    obs0 = np.asarray(observe(np.zeros_like(y)))

    def lin(v):
        return np.asarray(observe(v)) - obs0

    t_end = float(cfg.t_end)
    if t_end <= t0:
        raise ValueError("t_end must exceed t0")
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) < 0) or t_eval[0] < t0 or t_eval[-1] > t_end:
            raise ValueError("t_eval must be ascending and inside [t0, t_end]")
        y_eval = np.empty((len(t_eval),) + y.shape, dtype=y.dtype)
        next_eval = 0
        while next_eval < len(t_eval) and t_eval[next_eval] == t0:
            y_eval[next_eval] = y
            next_eval += 1
    else:
        y_eval = None

    t = float(t0)
    f = rhs(t, y)
    nfev = 1
    if not np.all(np.isfinite(f)):
        raise IntegrationError(f"non-finite derivative at t={t}")
    h = cfg.first_step or _initial_step(rhs, t, y, f, cfg, t_end - t)
    nfev += 0 if cfg.first_step else 1

    times = [t]
    values = [np.asarray(observe(y))]
    segments = []
    n_acc = n_rej = 0
    consecutive_rejects = 0
    nonfinite = 0
    err_old = 1e-4
    warned = False
    stopped = False
    k = [None] * 7

    if on_failure not in ("raise", "return"):
        raise ValueError(f"on_failure must be 'raise' or 'return', got {on_failure!r}")
    failure = None

    def fail(msg):
        # partial results are only useful once something was accepted
        if on_failure == "raise" or n_acc == 0:
            raise IntegrationError(msg)
        return msg

    while t < t_end:
        if n_acc + n_rej >= cfg.max_steps:
            failure = fail(f"exceeded max_steps={cfg.max_steps} at t={t:.6g}")
            break
        h = min(h, cfg.max_step)
        last = t + h >= t_end
        if last:
            h = t_end - t
        if h <= 16 * np.finfo(float).eps * max(abs(t), 1.0):
            failure = fail(f"step size underflow at t={t:.6g} (|y|={_rms(y):.3e})")
            break

        k[0] = f
        for s in range(1, 7):
            acc = y.copy()
            for j, a in enumerate(_A[s]):
                if a:
                    acc += (h * a) * k[j]
            if s == 6:
                y_new = acc
            k[s] = rhs(t + _C[s] * h, acc)
        nfev += 6
        err_vec = h * sum(e * kk for e, kk in zip(_E, k) if e)
        sc = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(err_vec / sc)

        if not (np.isfinite(err) and np.all(np.isfinite(k[6]))):
            nonfinite += 1
            if nonfinite > 5:
                failure = fail(f"non-finite state near t={t:.6g} (|y|={_rms(y):.3e})")
                break
            h *= 0.1
            n_rej += 1
            continue
        nonfinite = 0

        if err <= 1.0:
            fac11 = err**_EXPO if err > 0 else 0.0
            fac = fac11 / err_old**_BETA / _SAFETY
            fac = max(1.0 / _FAC_MAX, min(1.0 / _FAC_MIN, fac))
            h_new = h / fac
            err_old = max(err, 1e-4)

            ydiff = y_new - y
            bspl = h * k[0] - ydiff
            r4 = ydiff - h * k[6] - bspl
            r5 = h * sum(d * kk for d, kk in zip(_D, k) if d)
            segments.append(np.stack([np.asarray(observe(y)), lin(ydiff), lin(bspl), lin(r4), lin(r5)]))

            t_new = t_end if last else t + h
            if y_eval is not None:
                while next_eval < len(t_eval) and t_eval[next_eval] <= t_new:
                    te = t_eval[next_eval]
                    if te == t_new:
                        y_eval[next_eval] = y_new
                    else:
                        theta = (te - t) / h
                        y_eval[next_eval] = _contd5((y, ydiff, bspl, r4, r5), theta)
                    next_eval += 1

            t, y, f = t_new, y_new, k[6]
            times.append(t)
            values.append(np.asarray(observe(y)))
            n_acc += 1
            consecutive_rejects = 0
            if on_step is not None and on_step(t, y):
                stopped = t < t_end
                break
            h = h_new
        else:
            fac11 = err**_EXPO
            h = h / min(1.0 / _FAC_MIN, fac11 / _SAFETY)
            n_rej += 1
            consecutive_rejects += 1
            if consecutive_rejects >= cfg.stiff_rejects and not warned:
                warnings.warn(f"{consecutive_rejects} consecutive step rejections at t={t:.6g}; "
                              "the problem may be stiff, consider a smaller max_step",
                              StiffnessWarning, stacklevel=2)
                warned = True

    if failure is not None:
        stopped = True
    if y_eval is not None and stopped:
        y_eval = y_eval[:next_eval]
        t_eval = t_eval[:next_eval]
    return Trajectory(
        t=np.array(times),
        values=np.array(values),
        segments=np.array(segments) if segments else np.empty((0, 5) + values[0].shape),
        y_final=y,
        y_eval=y_eval,
        t_eval=t_eval,
        nfev=nfev,
        n_accepted=n_acc,
        n_rejected=n_rej,
        stopped_early=stopped,
        info={"dense_samples": cfg.dense_samples, "rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol,
              "failure": failure},
    )
