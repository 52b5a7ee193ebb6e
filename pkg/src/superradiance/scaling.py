"""Sweeps over emitter number and the scaling exponent of the peak rate.

``alpha(N) = d ln R_peak / d ln N`` is estimated by finite differences on
the sampled (ln N, ln R_peak) points.  Interior points use the centered
quotient over their two neighbours, the ends of a run use one-sided
quotients.  Unreliable records split a series into independent runs and
leave an explicit NaN gap.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, SweepPlan

log = logging.getLogger(__name__)

CENTERED, FORWARD, BACKWARD, GAP = "centered", "forward", "backward", "gap"
PARTIAL_FILE = "partial.jsonl"


@dataclass(frozen=True)
class PeakRecord:
    geometry: str
    reservoir: str
    polarization: str
    order: str
    a_or_theta: float | None
    N: int
    R_peak: float
    t_peak: float
    reliable: bool
    status: str = "ok"
    hamiltonian: str = "off"

    @property
    def series(self) -> tuple:
        """Everything except N: records sharing this key form one alpha series."""
        return (self.geometry, self.reservoir, self.polarization, self.order,
                self.a_or_theta, self.hamiltonian)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class AlphaPoint:
    N: int
    alpha: float
    stencil: str


def _as_pairs(records):
    """``(N, R_peak, usable)`` triples from PeakRecords or plain ``(N, R)`` pairs."""
    out = []
    for r in records:
        if isinstance(r, PeakRecord):
            out.append((r.N, r.R_peak, r.reliable and r.ok))
        else:
            n, rp = r
            out.append((n, rp, True))
    return out


def alpha_series(records) -> list:
    """Scaling exponent at every N of one series, with the stencil used.

    Raises ``ValueError`` on duplicate N or a nonpositive usable R_peak.
    """
    rows = sorted(_as_pairs(records), key=lambda x: x[0])
    Ns = [r[0] for r in rows]
    if len(set(Ns)) != len(Ns):
        dup = sorted({n for n in Ns if Ns.count(n) > 1})
        raise ValueError(f"duplicate N in records: {dup}")
    for n, rp, use in rows:
        if use and not rp > 0:
            raise ValueError(f"R_peak must be positive for log differences, got {rp} at N={n}")
    lnN = np.log(np.array(Ns, dtype=float))
    lnR = np.array([math.log(rp) if use else np.nan for _, rp, use in rows])

    out = []
    i = 0
    while i < len(rows):
        if not rows[i][2]:
            out.append(AlphaPoint(Ns[i], math.nan, GAP))
            i += 1
            continue
        j = i
        while j + 1 < len(rows) and rows[j + 1][2]:
            j += 1
        # contiguous reliable run [i, j]
        for k in range(i, j + 1):
            if j == i:
                out.append(AlphaPoint(Ns[k], math.nan, GAP))
            elif k == i:
                out.append(AlphaPoint(Ns[k], (lnR[k + 1] - lnR[k]) / (lnN[k + 1] - lnN[k]), FORWARD))
            elif k == j:
                out.append(AlphaPoint(Ns[k], (lnR[k] - lnR[k - 1]) / (lnN[k] - lnN[k - 1]), BACKWARD))
            else:
                out.append(AlphaPoint(Ns[k], (lnR[k + 1] - lnR[k - 1]) / (lnN[k + 1] - lnN[k - 1]),
                                      CENTERED))
        i = j + 1
    return out


def extract_alpha(records) -> list:
    """``[(N, alpha)]`` for one series; NaN where no reliable stencil exists."""
    return [(p.N, p.alpha) for p in alpha_series(records)]


def interior_alphas(records) -> dict:
    """``{N: alpha}`` restricted to centered stencils."""
    return {p.N: p.alpha for p in alpha_series(records) if p.stencil == CENTERED}


def extract_beta(records, alpha_fixed: float, window: tuple | None = None,
                 return_residual: bool = False):
    """Prefactor ``beta`` of ``R_peak = beta N**alpha_fixed`` by least squares in log space.

    ``window = (N_lo, N_hi)`` restricts the fit (inclusive).
    """
    rows = [(n, rp) for n, rp, use in _as_pairs(records) if use]
    if window is not None:
        rows = [(n, rp) for n, rp in rows if window[0] <= n <= window[1]]
    if not rows:
        raise ValueError("no reliable records in the beta window")
    if any(rp <= 0 for _, rp in rows):
        raise ValueError("R_peak must be positive")
    resid = np.array([math.log(rp) - alpha_fixed * math.log(n) for n, rp in rows])
    ln_beta = float(np.mean(resid))
    beta = math.exp(ln_beta)
    if return_residual:
        return beta, float(np.sqrt(np.mean((resid - ln_beta) ** 2)))
    return beta


@dataclass
class ScalingResult:
    records: list
    config_hash: str = ""
    plan_name: str = ""
    alpha_fixed: float | None = None
    beta_window: tuple | None = None
    alphas: dict = field(default_factory=dict)
    betas: dict = field(default_factory=dict)

    def __post_init__(self):
        self.analyse()

    def analyse(self):
        self.alphas, self.betas = {}, {}
        for key, recs in self.series().items():
            self.alphas[key] = alpha_series(recs)
            if self.alpha_fixed is not None and any(r.reliable and r.ok for r in recs):
                try:
                    self.betas[key] = extract_beta(recs, self.alpha_fixed, self.beta_window)
                except ValueError:
                    pass

    def series(self) -> dict:
        groups: dict = {}
        for r in self.records:
            groups.setdefault(r.series, []).append(r)
        return {k: sorted(v, key=lambda r: r.N) for k, v in groups.items()}

    def alpha_of(self, record: PeakRecord) -> AlphaPoint:
        for p in self.alphas.get(record.series, []):
            if p.N == record.N:
                return p
        return AlphaPoint(record.N, math.nan, GAP)

    @property
    def failed(self) -> list:
        return [r for r in self.records if not r.ok]

    # -- output ----------------------------------------------------------------
    def _header(self) -> str:
        return f"# config_hash: {self.config_hash}\n# plan: {self.plan_name}\n"

    def write(self, out_dir, provenance: dict | None = None) -> dict:
        """Write records, alpha table, JSON mirror and plot-ready .dat files; returns paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}

        lines = ["geometry,reservoir,polarization,order,a_or_theta,N,R_peak,t_peak,"
                 "alpha_if_interior,reliable,status"]
        for r in self.records:
            p = self.alpha_of(r)
            alpha = _fmt(p.alpha) if p.stencil == CENTERED else ""
            lines.append(",".join([r.geometry, r.reservoir, r.polarization, r.order,
                                   _fmt(r.a_or_theta), str(r.N), _fmt(r.R_peak), _fmt(r.t_peak),
                                   alpha, str(r.reliable).lower(), _csv_safe(r.status)]))
        paths["records"] = _write(out / "records.csv", self._header() + "\n".join(lines) + "\n")

        lines = ["geometry,reservoir,polarization,order,a_or_theta,N,alpha,stencil"]
        for key, pts in self.alphas.items():
            g, res, pol, order, par, _ = key
            for p in pts:
                lines.append(",".join([g, res, pol, order, _fmt(par), str(p.N), _fmt(p.alpha), p.stencil]))
        paths["alpha"] = _write(out / "alpha.csv", self._header() + "\n".join(lines) + "\n")

        blocks_lnr, blocks_alpha = [], []
        for key, recs in self.series().items():
            tag = "# series: " + " ".join(_fmt(k) if not isinstance(k, str) else k for k in key)
            rows = [f"{math.log(r.N)!r} {math.log(r.R_peak)!r}" for r in recs
                    if r.ok and r.reliable and r.R_peak > 0]
            blocks_lnr.append("\n".join([tag, "# lnN lnR_peak", *rows]))
            rows = [f"{p.N} {_fmt(p.alpha)}" for p in self.alphas[key]]
            blocks_alpha.append("\n".join([tag, "# N alpha", *rows]))
        paths["lnN_lnR"] = _write(out / "lnN_lnR.dat", self._header() + "\n\n".join(blocks_lnr) + "\n")
        paths["N_alpha"] = _write(out / "N_alpha.dat", self._header() + "\n\n".join(blocks_alpha) + "\n")

        # alpha against spacing at each N, one block per (geometry, reservoir, polarization, order)
        groups: dict = {}
        for key, pts in self.alphas.items():
            g, res, pol, order, par, ham = key
            for p in pts:
                groups.setdefault((g, res, pol, order, ham, p.N), []).append((par, p.alpha))
        blocks = []
        for (g, res, pol, order, ham, n), rows in groups.items():
            if len(rows) < 2 or any(par is None for par, _ in rows):
                continue
            rows.sort()
            blocks.append("\n".join([f"# series: {g} {res} {pol} {order} {ham} N={n}", "# a alpha",
                                     *[f"{par!r} {_fmt(al)}" for par, al in rows]]))
        paths["a_alpha"] = _write(out / "a_alpha.dat", self._header() + "\n\n".join(blocks) + "\n")

        doc = {"config_hash": self.config_hash, "plan": self.plan_name, "code_version": __version__,
               **(provenance or {}),
               "records": [asdict(r) for r in self.records],
               "alphas": [{"series": list(k), "N": p.N, "alpha": None if math.isnan(p.alpha) else p.alpha,
                           "stencil": p.stencil} for k, pts in self.alphas.items() for p in pts],
               "betas": [{"series": list(k), "beta": b, "alpha_fixed": self.alpha_fixed,
                          "window": list(self.beta_window) if self.beta_window else None}
                         for k, b in self.betas.items()]}
        paths["json"] = _write(out / "result.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return paths


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


def _csv_safe(s: str) -> str:
    return s.replace(",", ";").replace("\n", " ")


def _write(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


# -- execution -----------------------------------------------------------------

def run_point(cfg: RunConfig) -> PeakRecord:
    """One plan point; any failure becomes a record with ``status`` explaining it."""
    from .reduction import DistanceClasses
    from .simulation import simulate

    base = dict(geometry=cfg.kind, reservoir=cfg.reservoir,
                polarization=cfg.polarization if cfg.reservoir == "free_space" else "-",
                order=str(cfg.order), a_or_theta=cfg.a_or_theta, N=cfg.N,
                hamiltonian="on" if cfg.include_hamiltonian else "off")
    try:
        array, couplings = cfg.build_couplings()
        reduction = DistanceClasses(array, couplings, cfg.order) if cfg.reduction else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trace = simulate(couplings, cfg.order, include_hamiltonian=cfg.include_hamiltonian,
                             config=cfg.integrator, reduction=reduction, max_exact_n=cfg.max_exact_n)
    except Exception as exc:  # recorded per point, the sweep carries on
        log.warning("point %s failed: %s", cfg.label(), exc)
        return PeakRecord(**base, R_peak=math.nan, t_peak=math.nan, reliable=False,
                          status=f"failed: {type(exc).__name__}: {exc}")
    return PeakRecord(**base, R_peak=trace.R_peak, t_peak=trace.t_peak, reliable=trace.reliable)


def _load_partial(path: Path, plan_hash: str) -> dict:
    done = {}
    if not path.exists():
        return done
    for line in path.read_text().splitlines():
        try:
            row = json.loads(line)
        except json.JSONDecodeError:
            continue  # torn last line from an interrupted write
        if row.get("plan_hash") == plan_hash:
            done[row["index"]] = PeakRecord(**row["record"])
    return done


def run_sweep(plan: SweepPlan, jobs: int = 1, out_dir=None, progress=None) -> ScalingResult:
    """Run every plan point, merge in plan order and (optionally) write outputs.

    With ``out_dir`` each finished point is appended to ``partial.jsonl``
    so an interrupted sweep resumes where it stopped.  ``progress`` is called
    as ``progress(done, total, record)``.
    """
    plan_hash = plan.config_hash()
    points = plan.points
    results: dict = {}
    partial = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        partial = Path(out_dir) / PARTIAL_FILE
        results = {i: r for i, r in _load_partial(partial, plan_hash).items() if i < len(points)}
        if results:
            log.info("resuming: %d of %d points already done", len(results), len(points))

    def finish(i, rec):
        results[i] = rec
        if partial is not None:
            with partial.open("a") as fh:
                fh.write(json.dumps({"plan_hash": plan_hash, "index": i, "record": asdict(rec)}) + "\n")
        if progress is not None:
            progress(len(results), len(points), rec)

    todo = [i for i in range(len(points)) if i not in results]
    if jobs <= 1 or len(todo) <= 1:
        for i in todo:
            finish(i, run_point(points[i]))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run_point, points[i]): i for i in todo}
            for fut in as_completed(futures):
                finish(futures[fut], fut.result())

    result = ScalingResult([results[i] for i in range(len(points))], plan_hash, plan.name,
                           plan.alpha_fixed, plan.beta_window)
    if out_dir is not None:
        first = points[0].integrator if points else None
        prov = {"plan_definition": plan.canonical(),
                "tolerances": {"rel_tol": first.rel_tol, "abs_tol": first.abs_tol} if first else {},
                "numpy_version": np.__version__}
        result.write(out_dir, prov)
    return result
