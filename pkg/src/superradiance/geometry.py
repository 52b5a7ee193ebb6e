"""Emitter arrays and dipole polarizations.

All lengths are in units of the transition wavelength (lambda_0 = 1), so the
resonant wavenumber is ``K0 = 2 pi``.  Waveguide chains are parameterized by the
phase ``theta = k0 a`` accumulated between neighbours instead of a length.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

K0 = 2.0 * np.pi

MAX_EMITTERS = 4096


class LatticeKind(str, enum.Enum):
    CHAIN = "chain"
    SQUARE = "square"
    CUBIC = "cubic"
    WAVEGUIDE_CHAIN = "waveguide_chain"
    CUSTOM = "custom"

    @property
    def dim(self) -> int:
        return {"chain": 1, "square": 2, "cubic": 3, "waveguide_chain": 1}.get(self.value, 0)


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmitterArray:
    """Positions of ``N`` emitters plus the lattice they were built from.

    ``spacing`` is the nearest-neighbour distance for free-space lattices and
    the phase ``k0 a`` for waveguide chains.  ``sites`` holds integer lattice
    coordinates (``None`` for custom arrays); translation-class reduction of
    the cumulant state relies on them.
    """

    positions: np.ndarray
    kind: LatticeKind
    spacing: float | None = None
    sites: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] != 3:
            raise GeometryError(f"positions must be 3-vectors, got shape {pos.shape}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "kind", LatticeKind(self.kind))
        if len(pos) > 1 and pdist(pos).min() <= 0.0:
            raise GeometryError("emitter positions must be pairwise distinct")

    @property
    def N(self) -> int:
        return len(self.positions)

    def separations(self) -> np.ndarray:
        """Array ``r[n, m] = r_n - r_m`` of shape (N, N, 3)."""
        return self.positions[:, None, :] - self.positions[None, :, :]

    def translated(self, shift) -> EmitterArray:
        return EmitterArray(self.positions + np.asarray(shift, dtype=float), self.kind,
                            self.spacing, self.sites)


@dataclass(frozen=True, eq=False)
class Polarization:
    """Unit-normalized (complex) transition dipole vector."""

    d: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        d = np.asarray(self.d, dtype=complex).reshape(3)
        norm = np.sqrt(np.vdot(d, d).real)
        if norm == 0.0:
            raise GeometryError("dipole vector must be nonzero")
        object.__setattr__(self, "d", d / norm)


_POLARIZATIONS = {
    "linear_z": np.array([0.0, 0.0, 1.0], dtype=complex),
    "linear_x": np.array([1.0, 0.0, 0.0], dtype=complex),
    "circular_plus": np.array([1.0, 1j, 0.0]) / np.sqrt(2.0),
    "circular_minus": np.array([1.0, -1j, 0.0]) / np.sqrt(2.0),
}


def polarization(kind: str) -> Polarization:
    """Named dipole orientation: ``linear_z``, ``linear_x``, ``circular_plus`` or ``circular_minus``."""
    try:
        return Polarization(_POLARIZATIONS[kind], name=kind)
    except KeyError:
        raise GeometryError(f"unknown polarization {kind!r}; "
                            f"choose from {sorted(_POLARIZATIONS)}") from None


def build_lattice(kind, n_per_side: int, a: float, max_emitters: int = MAX_EMITTERS) -> EmitterArray:
    """Regular axis-aligned lattice with one corner at the origin.

    ``a`` is the lattice constant in units of lambda_0, or the phase ``k0 a``
    for ``waveguide_chain`` (emitters then sit at ``x_n = n a / k0``).
    """
    kind = LatticeKind(kind)
    if kind is LatticeKind.CUSTOM:
        raise GeometryError("custom arrays are built with custom_array or load_custom_array")
    if int(n_per_side) != n_per_side or n_per_side < 1:
        raise GeometryError(f"n_per_side must be a positive integer, got {n_per_side}")
    if not a > 0:
        raise GeometryError(f"spacing must be positive, got {a}")
    n_per_side = int(n_per_side)
    dim = kind.dim
    total = n_per_side**dim
    if total > max_emitters:
        raise GeometryError(f"{total} emitters exceeds the configured maximum {max_emitters}")

    axes = [np.arange(n_per_side)] * dim
    # itertools order: last axis fastest, so site index = ((i * n) + j) * n + k
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    sites = np.zeros((total, 3), dtype=int)
    sites[:, :dim] = grid
    step = a / K0 if kind is LatticeKind.WAVEGUIDE_CHAIN else a
    return EmitterArray(sites * step, kind, float(a), sites)


def lattice_for_total(kind, n_total: int, a: float, max_emitters: int = MAX_EMITTERS) -> EmitterArray:
    """Largest regular lattice of ``kind`` with at most ``n_total`` emitters."""
    kind = LatticeKind(kind)
    dim = kind.dim
    if n_total < 1:
        raise GeometryError(f"need at least one emitter, got {n_total}")
    side = int(round(n_total ** (1.0 / dim)))
    while side**dim > n_total:
        side -= 1
    while (side + 1) ** dim <= n_total:
        side += 1
    return build_lattice(kind, side, a, max_emitters)


def custom_array(positions) -> EmitterArray:
    return EmitterArray(np.asarray(positions, dtype=float), LatticeKind.CUSTOM)


def load_custom_array(path) -> EmitterArray:
    """Read an array file: one emitter per line, ``x y z`` in lambda_0 units, ``#`` comments."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GeometryError(f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise GeometryError(f"{path}:{lineno}: could not parse {line!r}") from None
    if not rows:
        raise GeometryError(f"{path}: no emitter positions found")
    return custom_array(rows)


def save_custom_array(array: EmitterArray, path) -> None:
    lines = [f"# {array.N} emitters, kind={array.kind.value}, units of lambda_0"]
    lines += [" ".join(repr(float(c)) for c in r) for r in array.positions]
    Path(path).write_text("\n".join(lines) + "\n")
