"""End-to-end acceptance checks.

Each test prints exactly one ``ACCEPTANCE C<k> PASS|FAIL`` line (also echoed in
the pytest terminal summary) and then asserts the same verdict.  Tolerances
are the fixed gates of the criteria; none are tuned to the results.

The sweeps are shared between criteria through module-scoped fixtures.  The
whole module takes roughly a quarter of an hour on a single core.
"""

import math
import os
import time
import warnings

import numpy as np
import pytest

from superradiance import (IntegratorConfig, build_lattice, couplings_dicke, couplings_free_space,
                           couplings_independent, polarization, simulate)
from superradiance.config import load_plan, parse_plan
from superradiance.scaling import CENTERED, GAP, alpha_series, run_sweep

pytestmark = pytest.mark.slow

ACCEPTANCE_LINES = []
JOBS = max(1, min(8, os.cpu_count() or 1))


def verdict(k, ok, detail):
    line = f"ACCEPTANCE C{k} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def chain_couplings(N, a, pol="circular_plus"):
    return couplings_free_space(build_lattice("chain", N, a), polarization(pol))


def alphas_by(result, **match):
    """{a_or_theta or polarization key: [AlphaPoint]} for series matching ``match``."""
    names = ("geometry", "reservoir", "polarization", "order", "a_or_theta", "hamiltonian")
    out = {}
    for key, pts in result.alphas.items():
        d = dict(zip(names, key))
        if all(d[k] == v for k, v in match.items()):
            out[(d["geometry"], d["polarization"], d["a_or_theta"])] = pts
    return out


def fmt(pts):
    return " ".join(f"{p.N}:{p.alpha:.3f}" for p in pts)


# 1 -------------------------------------------------------------------------

def test_c1_single_emitter_exact():
    cfg = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14, t_end=10.0)
    t0 = time.perf_counter()
    tr = simulate(couplings_independent(1), "exact", config=cfg, extend_once=False)
    elapsed = time.perf_counter() - t0
    ts = np.linspace(0.0, 10.0, 2001)
    err = float(np.max(np.abs(tr.rate(ts) - np.exp(-ts)))) if tr.interpolant.t_stop >= 10 else math.inf
    verdict(1, err < 1e-8 and elapsed < 1.0, f"max|R-e^-t|={err:.2e} (<1e-8), runtime {elapsed:.3f}s (<1s)")


# 2 -------------------------------------------------------------------------

def test_c2_photon_conservation():
    cfg = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12, t_end=20.0)
    worst, parts = 0.0, []
    for N in (2, 4, 8):
        tr = simulate(chain_couplings(N, 0.1), "exact", config=cfg, extend_once=False)
        covered = tr.interpolant.t_stop >= 20.0 - 1e-12
        total = tr.emitted(0.0, 20.0) if covered else math.nan
        rel = abs(total - N) / N
        worst = max(worst, rel) if not math.isnan(rel) else math.inf
        parts.append(f"N={N}: {total:.5f}")
    verdict(2, worst < 5e-3, f"{', '.join(parts)}; worst rel dev {worst:.2e} (<5e-3)")


# 3 -------------------------------------------------------------------------

def test_c3_dicke_quadratic():
    # The reference (N/2)(N/2+1) is the Dicke-ladder rate at zero inversion.
    cfg = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12, t_end=10.0)
    recs, parts, peak_ok = [], [], True
    for N in (4, 6, 8, 10):
        tr = simulate(couplings_dicke(N), "exact", config=cfg)
        ref = (N / 2) * (N / 2 + 1)
        dev = abs(tr.R_peak - ref) / ref
        peak_ok &= dev <= 0.10
        parts.append(f"N={N}: {tr.R_peak:.4f} vs {ref:.1f} ({dev:.1%})")
        recs.append((N, tr.R_peak))
    interior = [p for p in alpha_series(recs) if p.stencil == CENTERED]
    alpha_ok = bool(interior) and all(1.7 <= p.alpha <= 2.1 for p in interior)
    verdict(3, peak_ok and alpha_ok,
            f"{'; '.join(parts)} (gate 10%); interior alpha {fmt(interior)} (gate [1.7, 2.1])")


# 4 -------------------------------------------------------------------------

def test_c4_closure_order_ordering():
    cfg = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12)
    ok, parts = True, []
    for N in (5, 6, 7, 8):
        cm = chain_couplings(N, 0.1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ex, o2, o3 = (simulate(cm, o, config=cfg).R_peak for o in ("exact", 2, 3))
        e2, e3 = abs(o2 - ex), abs(o3 - ex)
        ok &= e3 <= e2 and e3 / ex < 0.05
        parts.append(f"N={N}: exact {ex:.4f} o2 {o2:.4f} o3 {o3:.4f} (o3 err {e3 / ex:.2%})")
    verdict(4, ok, "; ".join(parts))


# 5 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def waveguide_sweep():
    return run_sweep(load_plan("fig2d_waveguide"), jobs=JOBS)


def test_c5_waveguide_quadratic(waveguide_sweep):
    ok, parts = True, []
    for key, pts in sorted(alphas_by(waveguide_sweep).items()):
        interior = [p for p in pts if 8 < p.N < 64]
        good = len(interior) == 2 and all(p.stencil == CENTERED and 1.8 <= p.alpha <= 2.1 for p in interior)
        ok &= good
        parts.append(f"theta={key[2]}pi [{fmt(pts)}]")
    ok &= len(parts) == 3 and not waveguide_sweep.failed
    verdict(5, ok, "; ".join(parts) + " (interior gate [1.8, 2.1])")


# 6 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def chain_sweeps():
    return [run_sweep(load_plan(name), jobs=JOBS) for name in ("fig3a_chain_circular", "fig3b_chain_linear")]


def decreasing_after_max(pts):
    vals = [p.alpha for p in pts]
    if any(math.isnan(v) for v in vals):
        return False
    k = int(np.argmax(vals))
    return all(b < a for a, b in zip(vals[k:], vals[k + 1:]))


def test_c6_chain_linearization(chain_sweeps):
    ok, parts = True, []
    for res in chain_sweeps:
        for key, pts in sorted(alphas_by(res).items()):
            last = pts[-1]
            good = decreasing_after_max(pts) and last.N >= 64 and last.alpha < 1.3
            ok &= good
            parts.append(f"{key[1]} a={key[2]} [{fmt(pts)}]{'' if good else ' <-'}")
    ok &= len(parts) == 6
    verdict(6, ok, "; ".join(parts) + " (gate: decreasing after max, alpha(N_max) < 1.3)")


# 7 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def matched_n_sweep():
    plan = parse_plan("""[plan]
name = matched_64
[sweep]
reservoir = free_space
spacing = 0.2
polarization = circular_plus, linear_z
order = 3
[sweep.square]
kind = square
n_per_side = 7, 8
[sweep.cubic]
kind = cubic
n_per_side = 3, 4
""", "<acceptance>")
    return run_sweep(plan, jobs=JOBS)


def alpha_at(result_list, geometry, pol, a, N):
    for res in result_list:
        for key, pts in alphas_by(res, geometry=geometry, polarization=pol).items():
            if key[2] == a:
                for p in pts:
                    if p.N == N:
                        return p
    return None


def test_c7_dimensional_ordering(chain_sweeps, matched_n_sweep):
    # at the top of each grid only the backward one-sided difference exists
    ok, parts = True, []
    for pol in ("circular_plus", "linear_z"):
        got = {g: alpha_at(chain_sweeps + [matched_n_sweep], g, pol, 0.2, 64) for g in ("chain", "square", "cubic")}
        if any(p is None or p.stencil == GAP for p in got.values()):
            ok = False
            parts.append(f"{pol}: missing alpha")
            continue
        a1, a2, a3 = (got[g].alpha for g in ("chain", "square", "cubic"))
        ok &= a3 > a2 > a1
        parts.append(f"{pol}: cube {a3:.3f} > square {a2:.3f} > chain {a1:.3f}")
    verdict(7, ok, "; ".join(parts))


# 8 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def square36_sweep():
    plan = parse_plan("""[plan]
name = square36
[sweep]
reservoir = free_space
kind = square
spacing = 0.15, 0.3, 0.8
polarization = circular_plus, linear_z
n_per_side = 5, 6, 7
order = 3
""", "<acceptance>")
    return run_sweep(plan, jobs=JOBS)


def test_c8_spacing_monotonicity(square36_sweep):
    ok, parts = True, []
    for pol in ("circular_plus", "linear_z"):
        al = []
        for a in (0.15, 0.3, 0.8):
            p = alpha_at([square36_sweep], "square", pol, a, 36)
            al.append(p.alpha if p is not None and p.stencil == CENTERED else math.nan)
        good = al[0] > al[1] > al[2] and al[2] < 1.1
        ok &= good
        parts.append(f"{pol}: " + ", ".join(f"a={a}: {v:.3f}" for a, v in zip((0.15, 0.3, 0.8), al)))
    verdict(8, ok, "; ".join(parts) + " (gate: decreasing in a, alpha(0.8) < 1.1)")


# 9 -------------------------------------------------------------------------

def test_c9_determinism(tmp_path):
    names = ("independent", "dicke_exact")
    ok, parts = True, []
    for name in names:
        for run in ("a", "b"):
            run_sweep(load_plan(name), jobs=2, out_dir=tmp_path / name / run)
        files = sorted(p.name for p in (tmp_path / name / "a").iterdir()
                       if p.suffix in (".csv", ".dat", ".json"))
        same = all((tmp_path / name / "a" / f).read_bytes() == (tmp_path / name / "b" / f).read_bytes()
                   for f in files)
        ok &= same and bool(files)
        parts.append(f"{name}: {len(files)} files {'identical' if same else 'DIFFER'}")
    verdict(9, ok, "; ".join(parts) + " (--jobs 2, two fresh runs)")


# 10 ------------------------------------------------------------------------

def test_c10_performance_n50():
    t0 = time.perf_counter()
    tr = simulate(chain_couplings(50, 0.1), 3)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 600
    line = (f"ACCEPTANCE C10 {'PASS' if ok else 'FAIL (soft)'}: chain N=50 order 3 in {elapsed:.1f}s "
            f"on {os.cpu_count()} core(s) (target < 600s), R_peak={tr.R_peak:.3f}")
    ACCEPTANCE_LINES.append(line)
    print(line)
    if not ok:
        warnings.warn(line)
