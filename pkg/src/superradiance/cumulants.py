"""Truncated moment equations for collective decay from the fully inverted state.

The tracked moments are those with equal numbers of raising and lowering
operators (all others vanish for the inverted initial state):

    z_n    = <s^z_n>
    C_nm   = <s+_n s-_m>             (n != m)
    Z_nm   = <s^z_n s^z_m>           (n != m)
    T_nml  = <s^z_n s+_m s-_l>       (distinct, order 3 only)
    Y_nml  = <s^z_n s^z_m s^z_l>     (distinct, order 3 only)

Second order closes the three-site moments through pair correlations,
third order closes four-site moments.  With ``g = Gamma/2 + iJ`` the
Heisenberg generator is ``sum_kl conj(g_kl) s+_k [O, s-_l] + g_kl [s+_k, O] s-_l``
and every right-hand side below is a vectorized evaluation of it; the two
``matmul`` calls in the three-body equations carry the O(N^4) cost.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .couplings import CouplingMatrix
from .geometry import EmitterArray, LatticeKind
from .spin_algebra import MINUS, PLUS, Z, PauliString

SOFT_BOUND = 1.05


class TruncationWarning(RuntimeWarning):
    """Moments left the physical range; the closure is no longer trustworthy."""

    def __init__(self, t, quantity, value):
        self.t, self.quantity, self.value = t, quantity, value
        super().__init__(f"truncation breakdown at t={t:.4g}: {quantity}={value:.4g}")


class MomentLayout:
    """Packing of the symmetric moment families into one flat vector.

    Only canonical entries are stored: ``C`` and ``Z`` over ``n < m``, ``T``
    over ``m < l`` (``T_nlm = conj(T_nml)``) and ``Y`` over ``n < m < l``.
    """

    def __init__(self, N: int, order: int, dtype=float):
        if order not in (2, 3):
            raise ValueError(f"order must be 2 or 3, got {order}")
        self.N, self.order, self.dtype = N, order, np.dtype(dtype)
        self.iu, self.ju = np.triu_indices(N, 1)
        npair = len(self.iu)
        sizes = [("z", N), ("C", npair), ("Z", npair)]
        if order == 3:
            tn, tm, tl = [], [], []
            for m, l in zip(self.iu, self.ju):
                for n in range(N):
                    if n != m and n != l:
                        tn.append(n), tm.append(m), tl.append(l)
            self.tn, self.tm, self.tl = (np.array(a, dtype=int) for a in (tn, tm, tl))
            trip = np.array(list(itertools.combinations(range(N), 3)), dtype=int).reshape(-1, 3)
            self.yn, self.ym, self.yl = trip.T
            sizes += [("T", len(self.tn)), ("Y", len(trip))]
        self.slices = {}
        start = 0
        for name, size in sizes:
            self.slices[name] = slice(start, start + size)
            start += size
        self.size = start

    def unpack(self, vec):
        """Full arrays ``z, C, Z, T, Y`` (zero on coincident indices, T/Y None at order 2)."""
        N, s = self.N, self.slices
        dt = vec.dtype
        z = vec[s["z"]].real if dt.kind == "c" else vec[s["z"]]
        C = np.zeros((N, N), dtype=dt)
        c = vec[s["C"]]
        C[self.iu, self.ju] = c
        C[self.ju, self.iu] = np.conj(c)
        Zm = np.zeros((N, N), dtype=dt)
        zz = vec[s["Z"]]
        Zm[self.iu, self.ju] = zz
        Zm[self.ju, self.iu] = zz
        if self.order == 2:
            return z, C, Zm, None, None
        T = np.zeros((N, N, N), dtype=dt)
        tv = vec[s["T"]]
        T[self.tn, self.tm, self.tl] = tv
        T[self.tn, self.tl, self.tm] = np.conj(tv)
        Y = np.zeros((N, N, N), dtype=dt)
        yv = vec[s["Y"]]
        a, b, c3 = self.yn, self.ym, self.yl
        for p, q, r in itertools.permutations((a, b, c3)):
            Y[p, q, r] = yv
        return z, C, Zm, T, Y

    def pack(self, z, C, Zm, T=None, Y=None):
        out = np.empty(self.size, dtype=self.dtype)
        s = self.slices
        out[s["z"]] = z
        out[s["C"]] = C[self.iu, self.ju]
        out[s["Z"]] = Zm[self.iu, self.ju]
        if self.order == 3:
            out[s["T"]] = T[self.tn, self.tm, self.tl]
            out[s["Y"]] = Y[self.yn, self.ym, self.yl]
        return out


@dataclass
class CumulantState:
    layout: MomentLayout
    vector: np.ndarray
    t: float = 0.0

    @property
    def N(self) -> int:
        return self.layout.N

    @property
    def order(self) -> int:
        return self.layout.order

    def arrays(self):
        return self.layout.unpack(self.vector)

    @property
    def z(self):
        return self.arrays()[0]

    @property
    def C(self):
        """``<s+_n s-_m>`` including the diagonal ``(1 + z_n) / 2``."""
        z, C, *_ = self.arrays()
        C = C.copy()
        np.fill_diagonal(C, (1 + z) / 2)
        return C

    def moment(self, s: PauliString) -> complex:
        """Value of a tracked moment (on 1 to ``order`` distinct sites)."""
        z, C, Zm, T, Y = self.arrays()
        labs, sites = s.labels, s.sites
        if not s.balanced:
            return 0.0
        if len(s) == 0:
            return 1.0
        if len(s) == 1:
            return z[sites[0]]
        if len(s) > self.order:
            raise ValueError(f"{s} is not tracked at order {self.order}")
        pos = {lab: [site for site, l2 in s.factors if l2 == lab] for lab in (PLUS, MINUS, Z)}
        if len(s) == 2:
            if labs == (Z, Z):
                return Zm[sites]
            return C[pos[PLUS][0], pos[MINUS][0]]
        if labs == (Z, Z, Z):
            return Y[sites]
        return T[pos[Z][0], pos[PLUS][0], pos[MINUS][0]]


def init_fully_excited(N: int, order: int, dtype=float) -> CumulantState:
    layout = MomentLayout(N, order, dtype)
    vec = np.zeros(layout.size, dtype=layout.dtype)
    s = layout.slices
    vec[s["z"]] = 1.0
    vec[s["Z"]] = 1.0
    if order == 3:
        vec[s["Y"]] = 1.0
    return CumulantState(layout, vec, 0.0)


class CumulantSystem:
    """Right-hand side, initial state and observables of a truncated moment system."""

    def __init__(self, couplings: CouplingMatrix, order: int, include_hamiltonian: bool = False):
        self.couplings = couplings
        self.order = order
        self.include_hamiltonian = include_hamiltonian
        g = couplings.rates(include_hamiltonian)
        self.complex = np.iscomplexobj(g)
        self.layout = MomentLayout(couplings.N, order, complex if self.complex else float)
        self.gd = np.diag(g).copy()
        self.G0 = g - np.diag(self.gd)
        self.Gc = np.conj(self.G0)
        N = couplings.N
        if order == 2:
            idx = np.arange(N)
            self._distinct = ((idx[:, None, None] != idx[None, :, None])
                              & (idx[:, None, None] != idx[None, None, :]))
        Gam = couplings.Gamma
        self._diag_gamma = np.diag(Gam).copy()
        self._w_pair = Gam[self.layout.iu, self.layout.ju]

    @property
    def N(self) -> int:
        return self.couplings.N

    def initial_state(self) -> CumulantState:
        return init_fully_excited(self.N, self.order, self.layout.dtype)

    def initial_vector(self) -> np.ndarray:
        return self.initial_state().vector

    # -- observables --------------------------------------------------------
    def emission_rate(self, vec) -> float:
        s = self.layout.slices
        z = vec[s["z"]].real
        return float(self._diag_gamma @ (1 + z) / 2 + 2 * np.real(self._w_pair @ vec[s["C"]]))

    def observe(self, vec) -> np.ndarray:
        """Affine observables ``[R, excitation number]``."""
        z = vec[self.layout.slices["z"]].real
        return np.array([self.emission_rate(vec), float(np.sum(1 + z) / 2)])

    def soft_violation(self, vec):
        """Largest out-of-range quantity as ``(name, value)``, or None."""
        z, C, *_ = self.layout.unpack(vec)
        zmax = float(np.max(np.abs(z)))
        if zmax > SOFT_BOUND:
            return ("|z|", zmax)
        cmax = float(np.max(np.abs(C))) if self.N > 1 else 0.0
        if cmax > SOFT_BOUND:
            return ("|C|", cmax)
        return None

    # -- dynamics ---------------------------------------------------------------
    def rhs(self, t, vec):
        z, C, Zm, T, Y = self.layout.unpack(vec)
        if self.order == 2:
            T = z[:, None, None] * C[None, :, :] * self._distinct
        dz, dC, dZ, dT, dY = self.derivatives(z, C, Zm, T, Y)
        return self.layout.pack(dz, dC, dZ, dT, dY)

    def derivatives(self, z, C, Zm, T, Y):
        """Time derivatives of the full moment arrays (entries on coincident indices are junk)."""
        G0, Gc, gd = self.G0, self.Gc, self.gd
        gdc = np.conj(gd)
        re = np.real

        Pp = np.sum(G0 * C, axis=1)                     # sum_k g_nk C_nk
        dz = -4 * re(gd * (1 + z) / 2 + Pp)

        F = np.einsum("kn,nkm->nm", Gc, T)              # sum_k conj(g_kn) T_nkm
        Fp = np.einsum("aj,abj->ab", G0, T)             # sum_j g_aj T_abj
        U = np.einsum("pk,apk->ap", G0, T)              # sum_k g_pk T_apk
        dC = (-(gdc[:, None] + gd[None, :]) * C
              + Gc * (z[:, None] + Zm) / 2 + G0 * (z[None, :] + Zm) / 2
              + F + Fp.T)
        X = gd[:, None] * (z[None, :] + Zm) / 2 + U.T - G0 * C
        dZ = -4 * re(X + X.T)
        if self.order == 2:
            return dz, dC, dZ, None, None

        n_, m_, l_ = (slice(None), None, None), (None, slice(None), None), (None, None, slice(None))
        zn, zm, zl = z[n_], z[m_], z[l_]
        C_ml = C[None, :, :]
        C_mn = C.T[:, :, None]
        C_nl = C[:, None, :]
        C_ln = C.T[:, None, :]
        C_nm = C[:, :, None]
        T_lmn = T.transpose(2, 1, 0)
        T_mnl = T.transpose(1, 0, 2)
        Z_nm = Zm[:, :, None]
        Z_nl = Zm[:, None, :]
        gc_mn = Gc[:, :, None]
        gc_ln = Gc[:, None, :]
        gc_lm = Gc[None, :, :]
        g_nm = G0[:, :, None]
        g_nl = G0[:, None, :]
        g_lm = G0[None, :, :]
        P = np.sum(Gc * C, axis=0)                      # sum_k conj(g_kn) C_kn
        M = Gc.T @ C                                    # sum_k conj(g_kn) C_kl
        CG = C @ G0.T                                   # sum_j g_nj C_mj -> [m, n]
        Hc = np.matmul(Gc.T, T)                         # sum_k conj(g_km) T_nkl
        Hg = np.matmul(T, G0.T)                         # sum_j g_lj T_nmj

        # s+_k [O, s-_l] with [z_n, s-_n] = -2 s-_n
        t1 = -2 * (gdc[n_] * (C_ml + T) / 2 + gc_ln * (C_mn + T_lmn) / 2
                   + C_ml * (P[n_] - gc_mn * C_mn - gc_ln * C_ln)
                   + C_mn * (M[:, None, :] - gc_mn * C_ml))
        # s+_k [O, s-_l] with [s+_m, s-_m] = z_m
        t2 = (-gc_mn * T_mnl - gdc[m_] * T + gc_lm * (Z_nm + Y) / 2
              + zn * (F[None, :, :] - gc_mn * T_mnl) + zm * Hc
              + (Z_nm - 2 * zn * zm) * (M[None, :, :] - gc_mn * C_nl))
        # [s+_k, O] s-_l with [s+_n, z_n] = -2 s+_n
        t3 = -2 * (gd[n_] * (C_ml + T) / 2 + g_nm * (C_nl + T_mnl) / 2
                   + C_nl * (CG.T[:, :, None] - g_nl * C_ml)
                   + C_ml * (Pp[n_] - g_nm * C_nm - g_nl * C_nl))
        # [s+_k, O] s-_l with [s+_l, s-_l] = z_l
        t4 = (-g_nl * T_lmn + g_lm * (Z_nl + Y) / 2 - gd[l_] * T
              + zn * (Fp.T[None, :, :] - g_nl * T_lmn) + zl * Hg
              + (Z_nl - 2 * zn * zl) * (CG[None, :, :] - g_nl * C_mn))
        dT = t1 + t2 + t3 + t4

        # Y: sum over the site p carrying the lowered z, partners (a, b)
        p_, a_, b_ = n_, m_, l_
        T_bpa = T.transpose(1, 2, 0)
        T_apb = T.transpose(1, 0, 2)
        g_pa = G0[:, :, None]
        g_pb = G0[:, None, :]
        K = (gd[p_] * (Zm[None, :, :] + Y) / 2 - g_pa * T_bpa - g_pb * T_apb
             + z[a_] * (U.T[:, None, :] - g_pa * T_bpa)
             + z[b_] * (U.T[:, :, None] - g_pb * T_apb)
             + (Zm[None, :, :] - 2 * z[a_] * z[b_]) * (Pp[p_] - g_pa * C[:, :, None] - g_pb * C[:, None, :]))
        dY = -4 * re(K + K.transpose(1, 0, 2) + K.transpose(1, 2, 0))
        return dz, dC, dZ, dT, dY

    def check(self, t, vec):
        bad = self.soft_violation(vec)
        if bad is not None:
            warnings.warn(TruncationWarning(t, *bad), stacklevel=2)
        return bad


def state_moment_vector(state: CumulantState, keys) -> np.ndarray:
    """Values of ``keys`` (PauliStrings) in ``state``, e.g. to feed an EOMPlan."""
    return np.array([state.moment(k) for k in keys], dtype=complex)
