"""Symbolic algebra of on-site spin-1/2 operators.

Operators are products of single-site ``+`` (raising), ``-`` (lowering) and
``z`` Pauli operators.  On top of the product rule this module provides the
Heisenberg-picture Lindblad generator, the moment-cumulant closure, and an
:class:`EOMPlan` that turns both into a numerical right-hand side for the
tracked moments.  The plan enumerates every index combination explicitly, so
it is meant for small N: it serves as the reference against which the
vectorized kernels in :mod:`superradiance.cumulants` are checked.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .couplings import CouplingMatrix

PLUS, MINUS, Z = "+", "-", "z"
LABELS = (PLUS, MINUS, Z)
PRUNE_TOL = 1e-14

# single-site products x*y -> [(coef, label or None for identity)]
_SITE_PRODUCT = {
    (PLUS, PLUS): (),
    (MINUS, MINUS): (),
    (PLUS, MINUS): ((0.5, None), (0.5, Z)),
    (MINUS, PLUS): ((0.5, None), (-0.5, Z)),
    (Z, PLUS): ((1.0, PLUS),),
    (PLUS, Z): ((-1.0, PLUS),),
    (Z, MINUS): ((-1.0, MINUS),),
    (MINUS, Z): ((1.0, MINUS),),
    (Z, Z): ((1.0, None),),
}

_DAGGER = {PLUS: MINUS, MINUS: PLUS, Z: Z}


@dataclass(frozen=True, order=True)
class PauliString:
    """Product of single-site operators, sites ascending, at most one per site."""

    factors: tuple = ()

    def __post_init__(self):
        sites = [s for s, _ in self.factors]
        if sites != sorted(set(sites)):
            raise ValueError(f"sites must be unique and ascending: {self.factors}")
        for s, lab in self.factors:
            if lab not in LABELS or s < 0:
                raise ValueError(f"bad factor ({s}, {lab!r})")

    @classmethod
    def of(cls, *ops) -> PauliString:
        """``PauliString.of((0, '+'), (2, 'z'))`` in any site order."""
        return cls(tuple(sorted(ops)))

    @classmethod
    def parse(cls, text: str) -> PauliString:
        """Parse ``"z0 +1 -3"``; the empty string is the identity."""
        ops = [(int(tok[1:]), tok[0]) for tok in text.split()]
        return cls.of(*ops)

    @property
    def sites(self) -> tuple:
        return tuple(s for s, _ in self.factors)

    @property
    def labels(self) -> tuple:
        return tuple(lab for _, lab in self.factors)

    def __len__(self):
        return len(self.factors)

    @property
    def balanced(self) -> bool:
        labs = self.labels
        return labs.count(PLUS) == labs.count(MINUS)

    def dagger(self) -> PauliString:
        return PauliString(tuple((s, _DAGGER[lab]) for s, lab in self.factors))

    def label_at(self, site: int):
        for s, lab in self.factors:
            if s == site:
                return lab
        return None

    def __str__(self):
        return " ".join(f"{lab}{s}" for s, lab in self.factors) or "1"


IDENTITY = PauliString()


class OperatorSum:
    """Linear combination of Pauli strings with complex coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms: dict = {}
        if terms:
            for s, c in (terms.items() if isinstance(terms, dict) else terms):
                self.terms[s] = self.terms.get(s, 0.0) + c
            self.prune()

    @classmethod
    def from_string(cls, s: PauliString, coef: complex = 1.0) -> OperatorSum:
        return cls({s: coef})

    def prune(self, tol: float = PRUNE_TOL) -> OperatorSum:
        self.terms = {s: c for s, c in self.terms.items() if abs(c) >= tol}
        return self

    def __iter__(self):
        return iter(self.terms.items())

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: OperatorSum) -> OperatorSum:
        out = dict(self.terms)
        for s, c in other.terms.items():
            out[s] = out.get(s, 0.0) + c
        return OperatorSum(out)

    def __sub__(self, other: OperatorSum) -> OperatorSum:
        return self + other.scaled(-1.0)

    def scaled(self, k: complex) -> OperatorSum:
        return OperatorSum({s: k * c for s, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return self.scaled(other)
        if isinstance(other, PauliString):
            other = OperatorSum.from_string(other)
        acc = defaultdict(complex)
        for sa, ca in self.terms.items():
            for sb, cb in other.terms.items():
                for s, c in multiply(sa, sb).terms.items():
                    acc[s] += ca * cb * c
        return OperatorSum(acc)

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex)):
            return self.scaled(other)
        return OperatorSum.from_string(other) * self

    def is_zero(self) -> bool:
        return not self.terms

    def close_to(self, other: OperatorSum, tol: float = 1e-12) -> bool:
        diff = self - other
        return all(abs(c) < tol for _, c in diff)

    def __repr__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"({c:.6g})*[{s}]" for s, c in sorted(self.terms.items()))


def multiply(a: PauliString, b: PauliString) -> OperatorSum:
    """Normal-ordered product ``a * b`` using the single-site table."""
    fa, fb = dict(a.factors), dict(b.factors)
    options = []
    for site in sorted(fa.keys() | fb.keys()):
        if site in fa and site in fb:
            prod = _SITE_PRODUCT[(fa[site], fb[site])]
            if not prod:
                return OperatorSum()
            options.append([(c, (site, lab) if lab else None) for c, lab in prod])
        else:
            options.append([(1.0, (site, fa.get(site) or fb.get(site)))])
    acc = defaultdict(complex)
    for combo in itertools.product(*options):
        coef = 1.0
        ops = []
        for c, op in combo:
            coef *= c
            if op is not None:
                ops.append(op)
        acc[PauliString(tuple(ops))] += coef
    return OperatorSum(acc)


def _raise(k):
    return PauliString(((k, PLUS),))


def _lower(k):
    return PauliString(((k, MINUS),))


def adjoint_lindblad(O: PauliString, couplings: CouplingMatrix,
                     include_hamiltonian: bool = False) -> OperatorSum:
    """Operator whose expectation value is d<O>/dt.

    Sum over k, l of ``Gamma_kl (s+_k O s-_l - {s+_k s-_l, O} / 2)`` plus
    ``i [H, O]`` with ``H = sum_{k != l} J_kl s+_k s-_l`` when requested.
    Pairs with neither k nor l in the support of O cancel exactly and are
    skipped.
    """
    N = couplings.N
    support = set(O.sites)
    if any(s >= N for s in support):
        raise ValueError(f"{O} acts outside the {N}-site system")
    Osum = OperatorSum.from_string(O)
    acc = OperatorSum()
    Gam, J = couplings.Gamma, couplings.J
    for k in range(N):
        for l in range(N):
            if k not in support and l not in support:
                continue
            sk, sl = _raise(k), _lower(l)
            hop = multiply(sk, sl)
            gkl = Gam[k, l]
            if gkl != 0.0:
                sandwich = (OperatorSum.from_string(sk) * O) * sl
                anti = hop * Osum + Osum * hop
                acc = acc + (sandwich - anti.scaled(0.5)).scaled(gkl)
            if include_hamiltonian and k != l and J[k, l] != 0.0:
                comm = hop * Osum - Osum * hop
                acc = acc + comm.scaled(1j * J[k, l])
    return acc


def _set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def _poly_mul(p, q):
    out = defaultdict(float)
    for ma, ca in p.items():
        for mb, cb in q.items():
            out[tuple(sorted(ma + mb))] += ca * cb
    return out


@lru_cache(maxsize=None)
def _closure_template(labels: tuple, order: int):
    """Closure of a moment with the given labels, as a polynomial over position subsets.

    Monomials are sorted tuples of position tuples; a factor ``(0, 2)`` stands
    for the moment of the operators at positions 0 and 2.  Unbalanced
    sub-moments vanish for the U(1)-symmetric states considered here.
    """

    def moment(block):
        block = tuple(sorted(block))
        labs = [labels[i] for i in block]
        return block if labs.count(PLUS) == labs.count(MINUS) else None

    def cumulant(block):
        poly = defaultdict(float)
        for sigma in _set_partitions(block):
            factors = [moment(b) for b in sigma]
            if any(f is None for f in factors):
                continue
            k = len(sigma)
            poly[tuple(sorted(factors))] += (-1) ** (k - 1) * math.factorial(k - 1)
        return poly

    total = defaultdict(float)
    for pi in _set_partitions(range(len(labels))):
        if any(len(b) > order for b in pi):
            continue
        term = {(): 1.0}
        for b in pi:
            term = _poly_mul(term, cumulant(b))
            if not term:
                break
        for m, c in term.items():
            total[m] += c
    return {m: c for m, c in total.items() if abs(c) > PRUNE_TOL}


def cumulant_close(moment: PauliString, order: int) -> dict:
    """Express ``<moment>`` through moments on at most ``order`` sites.

    Cumulants of order > ``order`` are set to zero and the moment-cumulant
    relation (sum over set partitions) is inverted.  Returns a polynomial as
    ``{monomial: coef}`` with monomials sorted tuples of PauliStrings; the
    empty monomial is the constant 1.  Moments with unequal numbers of
    raising and lowering operators close to zero.
    """
    if order not in (2, 3):
        raise ValueError(f"closure order must be 2 or 3, got {order}")
    if not moment.balanced:
        return {}
    if len(moment) == 0:
        return {(): 1.0}
    if len(moment) <= order:
        return {(moment,): 1.0}
    factors = moment.factors
    out = {}
    for mono, c in _closure_template(moment.labels, order).items():
        key = tuple(sorted(PauliString(tuple(factors[i] for i in block)) for block in mono))
        out[key] = out.get(key, 0.0) + c
    return out


def tracked_moments(N: int, order: int) -> list:
    """Every U(1)-balanced Pauli string on 1..order sites (all orderings of + and -)."""
    keys = []
    for k in range(1, order + 1):
        for sites in itertools.combinations(range(N), k):
            for labs in itertools.product(LABELS, repeat=k):
                if labs.count(PLUS) == labs.count(MINUS):
                    keys.append(PauliString(tuple(zip(sites, labs))))
    return keys


class EOMPlan:
    """Closed moment equations as flat index lists.

    ``derivative(values)`` maps moment values (ordered as ``keys``) to their
    time derivatives.  Each term is ``coef * prod(values[f] for f in factors)``
    with the constant 1 stored in an extra slot.
    """

    def __init__(self, keys, equations, order):
        self.keys = list(keys)
        self.order = order
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.equations = equations  # key -> {monomial: coef}
        one = len(self.keys)
        width = max((len(m) for eq in equations.values() for m in eq), default=1) or 1
        targets, coefs, factors = [], [], []
        for key in self.keys:
            for mono, c in equations[key].items():
                targets.append(self.index[key])
                coefs.append(c)
                idx = [self.index[f] for f in mono]
                factors.append(idx + [one] * (width - len(idx)))
        self._targets = np.array(targets, dtype=int)
        self._coefs = np.array(coefs, dtype=complex)
        self._factors = np.array(factors, dtype=int).reshape(len(targets), width)

    def derivative(self, values) -> np.ndarray:
        vals = np.append(np.asarray(values, dtype=complex), 1.0)
        contrib = self._coefs * np.prod(vals[self._factors], axis=1)
        out = np.zeros(len(self.keys), dtype=complex)
        np.add.at(out, self._targets, contrib)
        return out

    def dump(self) -> str:
        """One line per tracked moment, e.g. ``d<z0>/dt = (-1)*1 + ...``."""
        lines = []
        for key in self.keys:
            parts = []
            for mono, c in sorted(self.equations[key].items(), key=lambda kv: [str(f) for f in kv[0]]):
                prod = "*".join(f"<{f}>" for f in mono) or "1"
                parts.append(f"({complex(c).real:+.6g}{complex(c).imag:+.6g}j)*{prod}")
            lines.append(f"d<{key}>/dt = " + (" ".join(parts) or "0"))
        return "\n".join(lines) + "\n"


def derive_plan(couplings: CouplingMatrix, order: int,
                include_hamiltonian: bool = False) -> EOMPlan:
    """Derive closed equations for all tracked moments of an ``order`` truncation."""
    keys = tracked_moments(couplings.N, order)
    equations = {}
    for key in keys:
        eq = defaultdict(complex)
        for s, c in adjoint_lindblad(key, couplings, include_hamiltonian):
            for mono, k in cumulant_close(s, order).items():
                eq[mono] += c * k
        equations[key] = {m: c for m, c in eq.items() if abs(c) > PRUNE_TOL}
    return EOMPlan(keys, equations, order)
