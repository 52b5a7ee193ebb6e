"""Translation-reduced cumulant dynamics on regular lattices.

Every tracked moment is assigned to a class of index tuples related by a
lattice translation or by a point-group operation that leaves the coupling
matrix invariant.  Under the translation-invariance approximation all
members of a class share one value, so the state shrinks to one number per
class (a chain has ``N - 1`` two-body classes instead of ``N (N - 1) / 2``).

The reduced derivative is the class average of the full derivative
evaluated at the broadcast state.  This is the orthogonal projection of the
flow onto the class-constant subspace; it keeps the open-boundary error
small on average but does not make each evaluation cheaper.
"""

from __future__ import annotations

import itertools

import numpy as np

from .couplings import CouplingMatrix
from .cumulants import CumulantState, CumulantSystem
from .geometry import EmitterArray, GeometryError, LatticeKind

SYMMETRY_TOL = 1e-9


def _signed_permutations(dim: int):
    for perm in itertools.permutations(range(dim)):
        for signs in itertools.product((1, -1), repeat=dim):
            g = np.zeros((3, 3), dtype=int)
            for row, (col, sgn) in enumerate(zip(perm, signs)):
                g[row, col] = sgn
            yield g


def lattice_symmetries(array: EmitterArray, couplings: CouplingMatrix | None = None,
                       tol: float = SYMMETRY_TOL) -> list:
    """Point-group operations (3x3 integer matrices) mapping the lattice onto itself.

    With ``couplings`` given, only operations that leave J and Gamma unchanged
    under the induced relabelling are kept; e.g. x-polarized dipoles on a
    square lattice lose the x<->y swap.
    """
    sites = array.sites
    lo, hi = sites.min(axis=0), sites.max(axis=0)
    twice_center = lo + hi
    index = {tuple(s): i for i, s in enumerate(sites.tolist())}
    ops = []
    for g in _signed_permutations(array.kind.dim):
        # rotate about the lattice centre: s -> g (s - c) + c, kept in integers via 2c
        mapped = (2 * sites - twice_center) @ g.T + twice_center
        if np.any(mapped % 2):
            continue
        perm = [index.get(tuple(s)) for s in (mapped // 2).tolist()]
        if None in perm:
            continue
        perm = np.array(perm)
        if couplings is not None:
            same = (np.allclose(couplings.Gamma[np.ix_(perm, perm)], couplings.Gamma, atol=tol)
                    and np.allclose(couplings.J[np.ix_(perm, perm)], couplings.J, atol=tol))
            if not same:
                continue
        ops.append(g)
    return ops


def _canonical(disp_variants, ops, extent):
    """Lexicographically smallest image of each row over all ops and role variants.

    ``disp_variants`` is a list of integer arrays of shape (M, k, 3), one per
    admissible reordering of the tuple roles.
    """
    base = 2 * extent + 1
    best = None
    for disp in disp_variants:
        for g in ops:
            img = disp @ g.T + extent              # (M, k, 3), entries in [0, 2 extent]
            flat = img.reshape(len(img), -1)
            code = np.zeros(len(img), dtype=np.int64)
            for col in range(flat.shape[1]):
                code = code * base + flat[:, col]
            best = code if best is None else np.minimum(best, code)
    return best


class DistanceClasses:
    """Class labels for every packed moment of a cumulant layout."""

    def __init__(self, array: EmitterArray, couplings: CouplingMatrix | None = None, order: int = 3):
        if array.kind not in (LatticeKind.CHAIN, LatticeKind.SQUARE, LatticeKind.CUBIC,
                              LatticeKind.WAVEGUIDE_CHAIN) or array.sites is None:
            raise GeometryError(f"distance classes need a regular lattice, got {array.kind.value}")
        if couplings is not None and couplings.N != array.N:
            raise ValueError("array and couplings disagree on N")
        self.array = array
        self.order = order
        self.ops = lattice_symmetries(array, couplings)
        sites = array.sites.astype(np.int64)
        extent = int(np.max(sites.max(axis=0) - sites.min(axis=0))) if array.N > 1 else 0
        N = array.N
        iu, ju = np.triu_indices(N, 1)

        def pair_labels():
            d = (sites[ju] - sites[iu])[:, None, :]
            return _canonical([d, -d], self.ops, extent)

        self.labels = {"z": np.zeros(N, dtype=np.int64), "C": pair_labels()}
        self.labels["Z"] = self.labels["C"].copy()
        if order == 3:
            from .cumulants import MomentLayout
            lay = MomentLayout(N, 3)
            n, m, l_ = lay.tn, lay.tm, lay.tl
            dm, dl = sites[m] - sites[n], sites[l_] - sites[n]
            self.labels["T"] = _canonical([np.stack([dm, dl], 1), np.stack([dl, dm], 1)],
                                          self.ops, extent)
            a, b, c = (sites[i] for i in (lay.yn, lay.ym, lay.yl))
            variants = [np.stack([q - p, r - p], 1) for p, q, r in itertools.permutations((a, b, c))]
            self.labels["Y"] = _canonical(variants, self.ops, extent)
        # compress codes to 0..k-1 per family
        self.counts = {}
        for fam, lab in self.labels.items():
            uniq, inv, cnt = np.unique(lab, return_inverse=True, return_counts=True)
            self.labels[fam] = inv
            self.counts[fam] = cnt

    @property
    def n_classes(self) -> dict:
        return {fam: len(cnt) for fam, cnt in self.counts.items()}


class ReducedSystem:
    """Cumulant system restricted to class-constant moments."""

    def __init__(self, system: CumulantSystem, classes: DistanceClasses):
        if system.complex:
            raise ValueError("distance-class reduction supports the Hamiltonian-off (real) dynamics only")
        if system.order != classes.order or system.N != classes.array.N:
            raise ValueError("classes were built for a different layout")
        self.system = system
        self.classes = classes
        layout = system.layout
        labels, counts, offset = np.empty(layout.size, dtype=np.int64), [], 0
        for fam, sl in layout.slices.items():
            labels[sl] = classes.labels[fam] + offset
            counts.append(classes.counts[fam])
            offset += len(classes.counts[fam])
        self._labels = labels
        self._counts = np.concatenate(counts).astype(float)
        self.size = offset

    @property
    def N(self) -> int:
        return self.system.N

    @property
    def couplings(self):
        return self.system.couplings

    def expand(self, r) -> np.ndarray:
        return np.asarray(r)[self._labels]

    def project(self, v) -> np.ndarray:
        return np.bincount(self._labels, weights=v, minlength=self.size) / self._counts

    def initial_vector(self) -> np.ndarray:
        return self.project(self.system.initial_vector())

    def initial_state(self) -> CumulantState:
        return CumulantState(self.system.layout, self.expand(self.initial_vector()))

    def rhs(self, t, r):
        return self.project(self.system.rhs(t, self.expand(r)))

    def observe(self, r) -> np.ndarray:
        return self.system.observe(self.expand(r))

    def soft_violation(self, r):
        return self.system.soft_violation(self.expand(r))
