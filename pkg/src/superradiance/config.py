"""Run configurations and sweep plans.

Both are flat ``key = value`` files with ``[section]`` headers, ``#`` or
``;`` comments and comma-separated lists.  Every value remembers its line so
errors point at the offending line.

A run file::

    [geometry]
    kind = chain
    N = 4
    spacing = 0.1
    polarization = circular_plus

    [physics]
    reservoir = free_space
    order = exact

A plan file uses ``[sweep]`` with list-valued keys (``N``, ``spacing``,
``theta_over_pi``, ``polarization``, ``order``, ``kind``).  Extra sections
``[sweep.<label>]`` each define a block that inherits the ``[sweep]`` keys.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

from .couplings import CouplingMatrix, Reservoir, build_couplings
from .exact import N_MAX_EXACT
from .geometry import (MAX_EMITTERS, EmitterArray, GeometryError, LatticeKind, build_lattice,
                       load_custom_array, polarization)
from .integrator import IntegratorConfig

PLAN_PACKAGE = "superradiance.plans"


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` reads ``source:line: message``."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.source, self.line, self.message = source, line, message
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass
class Entry:
    value: str
    line: int


def parse_ini(text: str, source: str = "<config>") -> dict:
    """``{section: {key: Entry}}``; keys before any header land in section ``""``."""
    sections: dict = {"": {}}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", source, lineno)
            current = line[1:-1].strip().lower()
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", source, lineno)
            sections[current] = {}
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", source, lineno)
        key = key.strip().lower()
        if not key:
            raise ConfigError("empty key", source, lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r}", source, lineno)
        sections[current][key] = Entry(value.strip(), lineno)
    return sections


class _Reader:
    """Typed access to one section with unknown-key detection."""

    def __init__(self, entries: dict, name: str, source: str):
        self.entries, self.name, self.source = entries, name, source
        self.used: set = set()

    def line(self, key):
        e = self.entries.get(key)
        return e.line if e else None

    def fail(self, key, message):
        raise ConfigError(message, self.source, self.line(key))

    def raw(self, key, default=None):
        self.used.add(key)
        e = self.entries.get(key)
        return default if e is None else e.value

    def get(self, key, conv, default=None):
        raw = self.raw(key)
        if raw is None:
            return default
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.fail(key, f"bad value for {key!r}: {exc}")

    def get_list(self, key, conv, default=None):
        raw = self.raw(key)
        if raw is None:
            return default
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if not items:
            self.fail(key, f"{key!r} is empty")
        try:
            return [conv(s) for s in items]
        except (ValueError, TypeError) as exc:
            self.fail(key, f"bad value in {key!r}: {exc}")

    def finish(self):
        extra = sorted(set(self.entries) - self.used)
        if extra:
            key = min(extra, key=lambda k: self.entries[k].line)
            self.fail(key, f"unknown key {key!r} in [{self.name}]")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {s!r}")


def _order(s):
    v = str(s).strip().lower()
    if v == "exact":
        return "exact"
    if v in ("2", "3"):
        return int(v)
    raise ValueError(f"order must be 2, 3 or exact, got {s!r}")


def _count(s: str) -> int:
    f = float(s)
    if f != int(f) or f < 1:
        raise ValueError(f"expected a positive integer, got {s!r}")
    return int(f)


def _positive(s: str) -> float:
    f = float(s)
    if not f > 0:
        raise ValueError(f"must be positive, got {s!r}")
    return f


def _enum(enum_cls):
    def conv(s):
        try:
            return enum_cls(s.strip().lower()).value
        except ValueError:
            raise ValueError(f"{s!r} is not one of {[e.value for e in enum_cls]}") from None
    return conv


def _polarization(s):
    polarization(s.strip())
    return s.strip()


def _read_integrator(sections, source) -> IntegratorConfig:
    rd = _Reader(sections.get("integrator", {}), "integrator", source)
    base = IntegratorConfig()
    kw = {
        "rel_tol": rd.get("rel_tol", _positive, base.rel_tol),
        "abs_tol": rd.get("abs_tol", _positive, base.abs_tol),
        "t_end": rd.get("t_end", _positive, base.t_end),
        "max_step": rd.get("max_step", _positive, base.max_step),
        "dense_samples": rd.get("dense_samples", _count, base.dense_samples),
        "max_steps": rd.get("max_steps", _count, base.max_steps),
    }
    rd.finish()
    try:
        return IntegratorConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc), source) from None


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one trajectory.  Runs are deterministic (no seeds)."""

    reservoir: str = "free_space"
    kind: str = "chain"
    N: int = 1
    spacing: float | None = None
    theta_over_pi: float | None = None
    polarization: str = "circular_plus"
    order: object = 3
    include_hamiltonian: bool = False
    reduction: bool = False
    max_exact_n: int = N_MAX_EXACT
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    out_dir: str = "out"
    custom_file: str | None = None

    @property
    def theta(self) -> float | None:
        return None if self.theta_over_pi is None else self.theta_over_pi * math.pi

    @property
    def a_or_theta(self) -> float | None:
        return self.theta_over_pi if self.reservoir == "waveguide" else self.spacing

    def build_array(self) -> EmitterArray | None:
        if self.reservoir == "waveguide":
            return build_lattice(LatticeKind.WAVEGUIDE_CHAIN, self.N, self.theta)
        if self.reservoir != "free_space":
            return None
        if self.kind == "custom":
            return load_custom_array(self.custom_file)
        dim = LatticeKind(self.kind).dim
        side = round(self.N ** (1 / dim))
        return build_lattice(self.kind, side, self.spacing)

    def build_couplings(self) -> tuple:
        """``(array or None, CouplingMatrix)``."""
        array = self.build_array()
        pol = polarization(self.polarization) if self.reservoir == "free_space" else None
        return array, build_couplings(self.reservoir, array, pol, N=self.N, theta=self.theta)

    def canonical(self) -> dict:
        d = asdict(self)
        d["order"] = str(self.order)
        d.pop("out_dir")
        d["integrator"] = {k: repr(v) for k, v in asdict(self.integrator).items()}
        return d

    def config_hash(self) -> str:
        return hash_dict(self.canonical())

    def label(self) -> str:
        par = (f"theta{self.theta_over_pi:g}pi" if self.reservoir == "waveguide"
               else f"a{self.spacing:g}" if self.spacing is not None else "")
        parts = [self.reservoir, self.kind if self.reservoir == "free_space" else "",
                 par, self.polarization if self.reservoir == "free_space" else "",
                 f"order{self.order}", f"N{self.N}"]
        return "_".join(p for p in parts if p)

    def validate(self, source: str = "<config>", lines: dict | None = None) -> RunConfig:
        """Check physical consistency; ``lines`` maps field names to source lines."""
        lines = lines or {}

        def fail(key, msg):
            raise ConfigError(msg, source, lines.get(key))

        if self.reservoir == "waveguide" and self.theta_over_pi is None:
            fail("reservoir", "waveguide reservoir needs theta_over_pi")
        if self.reservoir == "free_space":
            if self.kind == "custom":
                if not self.custom_file:
                    fail("kind", "custom geometry needs 'file'")
            else:
                if self.spacing is None:
                    fail("reservoir", "free_space reservoir needs a spacing")
                kind = LatticeKind(self.kind)
                if kind is LatticeKind.WAVEGUIDE_CHAIN:
                    fail("kind", "waveguide_chain geometry requires reservoir = waveguide")
                side = round(self.N ** (1 / kind.dim))
                if side**kind.dim != self.N:
                    fail("n", f"N = {self.N} is not a perfect {['', '', 'square', 'cube'][kind.dim]}"
                              f" for a {kind.value} lattice")
        if self.N > MAX_EMITTERS:
            fail("n", f"N = {self.N} exceeds the maximum of {MAX_EMITTERS} emitters")
        if self.order == "exact" and self.N > self.max_exact_n:
            fail("n", f"capacity: exact propagation is limited to N <= {self.max_exact_n}, got N = {self.N}")
        if self.reduction:
            if self.order == "exact":
                fail("reduction", "distance-class reduction applies to cumulant orders only")
            if self.include_hamiltonian:
                fail("reduction", "distance-class reduction needs hamiltonian = off")
            if self.reservoir not in ("free_space", "waveguide") or self.kind == "custom":
                fail("reduction", "distance-class reduction needs a regular lattice")
        return self


def hash_dict(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _geometry_fields(rd: _Reader, listy: bool) -> dict:
    """Shared keys of [geometry]/[physics] (scalars) or [sweep] blocks (lists)."""
    one = (lambda k, c, d=None: rd.get(k, c, d))
    many = (lambda k, c, d=None: rd.get_list(k, c, d))
    pick = many if listy else one
    out = {
        "reservoir": one("reservoir", _enum(Reservoir)),
        "kind": pick("kind", _enum(LatticeKind)),
        "N": pick("n", _count),
        "n_per_side": pick("n_per_side", _count),
        "spacing": pick("spacing", _positive),
        "theta_over_pi": pick("theta_over_pi", float),
        "polarization": pick("polarization", _polarization),
        "order": pick("order", _order),
        "include_hamiltonian": one("hamiltonian", _bool),
        "reduction": one("reduction", _bool),
        "max_exact_n": one("max_exact_n", _count),
        "custom_file": one("file", str),
    }
    return {k: v for k, v in out.items() if v is not None}


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse a run file; ``overrides`` (order, include_hamiltonian, max_exact_n, out_dir) win."""
    path = Path(path)
    source = str(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source) from None
    return parse_run_config(text, source, overrides, base_dir=path.parent)


def parse_run_config(text: str, source: str = "<config>", overrides: dict | None = None,
                     base_dir: Path | None = None) -> RunConfig:
    sections = parse_ini(text, source)
    known = {"", "geometry", "physics", "integrator", "output"}
    for name in sections:
        if name not in known:
            raise ConfigError(f"unknown section [{name}]", source)
    merged = {**sections.get("geometry", {}), **sections.get("physics", {})}
    clash = set(sections.get("geometry", {})) & set(sections.get("physics", {}))
    if clash:
        key = clash.pop()
        raise ConfigError(f"key {key!r} given in both [geometry] and [physics]", source,
                          sections["physics"][key].line)
    if sections[""]:
        key, e = next(iter(sections[""].items()))
        raise ConfigError(f"key {key!r} outside any section", source, e.line)
    rd = _Reader(merged, "geometry/physics", source)
    vals = _geometry_fields(rd, listy=False)
    rd.finish()
    lines = {k: e.line for k, e in merged.items()}
    vals = _resolve_n(vals, source, lines)
    out = _Reader(sections.get("output", {}), "output", source)
    out_dir = out.get("dir", str, "out")
    out.get("deterministic", _bool, True)
    out.finish()
    if "custom_file" in vals and base_dir is not None and not Path(vals["custom_file"]).is_absolute():
        vals["custom_file"] = str(base_dir / vals["custom_file"])
    if vals.get("kind") == "custom":
        if "custom_file" not in vals:
            raise ConfigError("custom geometry needs 'file'", source, lines.get("kind"))
        try:
            n_file = load_custom_array(vals["custom_file"]).N
        except (OSError, GeometryError) as exc:
            raise ConfigError(f"custom positions: {exc}", source, lines.get("file")) from None
        if vals.setdefault("N", n_file) != n_file:
            raise ConfigError(f"N = {vals['N']} but {vals['custom_file']} holds {n_file} positions",
                              source, lines.get("n"))
    cfg = RunConfig(**vals, integrator=_read_integrator(sections, source), out_dir=out_dir)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate(source, lines)


def _resolve_n(vals: dict, source: str, lines: dict) -> dict:
    vals = dict(vals)
    reservoir = vals.get("reservoir", "free_space")
    if reservoir == "waveguide":
        vals.setdefault("kind", "waveguide_chain")
    elif reservoir in ("dicke", "independent"):
        vals.setdefault("kind", "custom" if "custom_file" in vals else "chain")
    if reservoir != "free_space" and vals.get("kind") not in (None, "waveguide_chain", "chain"):
        raise ConfigError(f"geometry kind is irrelevant for the {reservoir} reservoir", source, lines.get("kind"))
    nps = vals.pop("n_per_side", None)
    if nps is not None:
        if "N" in vals:
            raise ConfigError("give either N or n_per_side, not both", source, lines.get("n_per_side"))
        dim = LatticeKind(vals.get("kind", "chain")).dim or 1
        vals["N"] = nps**dim
    if "N" not in vals and vals.get("kind") != "custom":
        raise ConfigError("missing emitter number N (or n_per_side)", source)
    return vals


# -- plans -------------------------------------------------------------------

@dataclass
class SweepPlan:
    name: str
    description: str
    points: list
    alpha_fixed: float | None = None
    beta_window: tuple | None = None
    source: str = "<plan>"

    def canonical(self) -> dict:
        return {"name": self.name, "alpha_fixed": self.alpha_fixed,
                "beta_window": list(self.beta_window) if self.beta_window else None,
                "points": [p.canonical() for p in self.points]}

    def config_hash(self) -> str:
        return hash_dict(self.canonical())


def bundled_plans() -> list:
    return sorted(p.name[:-4] for p in resources.files(PLAN_PACKAGE).iterdir() if p.name.endswith(".ini"))


def load_plan(path_or_name, overrides: dict | None = None) -> SweepPlan:
    """Load a plan file, or a bundled plan by name (see :func:`bundled_plans`)."""
    path = Path(str(path_or_name))
    if path.exists():
        return parse_plan(path.read_text(), str(path), overrides)
    name = str(path_or_name)
    res = resources.files(PLAN_PACKAGE) / f"{name}.ini"
    if res.is_file():
        return parse_plan(res.read_text(), f"<bundled:{name}>", overrides)
    raise ConfigError(f"no plan file or bundled plan named {name!r}; bundled: {', '.join(bundled_plans())}",
                      name)


def parse_plan(text: str, source: str = "<plan>", overrides: dict | None = None) -> SweepPlan:
    sections = parse_ini(text, source)
    if sections[""]:
        key, e = next(iter(sections[""].items()))
        raise ConfigError(f"key {key!r} outside any section", source, e.line)
    for sec in sections:
        if sec and sec not in ("plan", "sweep", "integrator", "analysis") and not sec.startswith("sweep."):
            raise ConfigError(f"unknown section [{sec}]", source)
    head = _Reader(sections.get("plan", {}), "plan", source)
    name = head.get("name", str, Path(source).stem.strip("<>").split(":")[-1])
    description = head.get("description", str, "")
    head.finish()
    ana = _Reader(sections.get("analysis", {}), "analysis", source)
    alpha_fixed = ana.get("alpha_fixed", float)
    window = ana.get_list("beta_window", _count)
    if window is not None and len(window) != 2:
        ana.fail("beta_window", "beta_window takes two N values: lo, hi")
    ana.finish()
    integ = _read_integrator(sections, source)

    base = sections.get("sweep", {})
    blocks = [s for s in sections if s.startswith("sweep.")] or ["sweep"]
    if "sweep" not in sections and blocks == ["sweep"]:
        raise ConfigError("plan has no [sweep] section", source)
    points = []
    for blk in blocks:
        entries = {**base, **sections.get(blk, {})}
        rd = _Reader(entries, blk, source)
        vals = _geometry_fields(rd, listy=True)
        rd.finish()
        lines = {k: e.line for k, e in entries.items()}
        points += _expand_block(vals, integ, source, lines, overrides)
    return SweepPlan(name, description, points, alpha_fixed, tuple(window) if window else None, source)


def _expand_block(vals, integ, source, lines, overrides) -> list:
    scalars = {k: vals[k] for k in ("reservoir", "include_hamiltonian", "reduction", "max_exact_n",
                                    "custom_file") if k in vals}
    if overrides:
        scalars.update({k: v for k, v in overrides.items()
                        if v is not None and k in ("include_hamiltonian", "max_exact_n")})
    reservoir = scalars.get("reservoir", "free_space")
    kinds = vals.get("kind", ["waveguide_chain" if reservoir == "waveguide" else "chain"])
    if reservoir == "waveguide":
        params = [("theta_over_pi", t) for t in vals.get("theta_over_pi", [None])]
    elif reservoir == "free_space":
        params = [("spacing", a) for a in vals.get("spacing", [None])]
    else:
        params = [(None, None)]
    pols = vals.get("polarization", ["circular_plus"]) if reservoir == "free_space" else ["circular_plus"]
    orders = vals.get("order", [3])
    if overrides and overrides.get("order") is not None:
        orders = [overrides["order"]]
    if "N" in vals and "n_per_side" in vals:
        raise ConfigError("give either N or n_per_side, not both", source, lines.get("n_per_side"))
    points = []
    for kind, (pkey, pval), pol, order in itertools.product(kinds, params, pols, orders):
        if "n_per_side" in vals:
            dim = LatticeKind(kind).dim or 1
            Ns = [s**dim for s in vals["n_per_side"]]
        elif "N" in vals:
            Ns = vals["N"]
        else:
            raise ConfigError("plan block lacks an N list", source)
        if sorted(Ns) != list(Ns) or len(set(Ns)) != len(Ns):
            raise ConfigError("N list must be strictly ascending", source, lines.get("n") or lines.get("n_per_side"))
        for N in Ns:
            kw = dict(scalars, kind=kind, N=N, polarization=pol, order=order)
            if pkey:
                kw[pkey] = pval
            cfg = RunConfig(**kw, integrator=integ)
            try:
                points.append(cfg.validate(source, lines))
            except GeometryError as exc:
                raise ConfigError(str(exc), source, lines.get("kind")) from None
    return points


def couplings_for(cfg: RunConfig) -> CouplingMatrix:
    return cfg.build_couplings()[1]
