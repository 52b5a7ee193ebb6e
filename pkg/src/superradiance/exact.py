"""Exact Lindblad propagation for small emitter numbers.

Starting from the fully inverted state, the density matrix only couples
basis states with equal excitation number on both sides, so it is stored as
blocks ``rho_k`` (k excitations, dimension ``binom(N, k)``).  The
dissipator is applied term by term with sparse sector operators; the 4^N
superoperator is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse as sp

from .couplings import CouplingMatrix
from .integrator import IntegrationError, IntegratorConfig, integrate
from .spin_algebra import MINUS, PLUS, PauliString

N_MAX_EXACT = 12
TRACE_TOL = 1e-6


class CapacityError(ValueError):
    pass


class Sectors:
    """Basis bookkeeping: bit n of a state index is 1 when emitter n is excited."""

    def __init__(self, N: int):
        self.N = N
        states = np.arange(2**N)
        pop = np.array([bin(s).count("1") for s in states])
        self.states = [states[pop == k] for k in range(N + 1)]
        self.pos = np.empty(2**N, dtype=int)
        for blk in self.states:
            self.pos[blk] = np.arange(len(blk))
        self.dims = [len(b) for b in self.states]

    def lowering(self, n: int, k: int) -> sp.csr_matrix:
        """``s-_n`` from sector k to sector k - 1."""
        src = self.states[k]
        src = src[(src >> n) & 1 == 1]
        rows = self.pos[src ^ (1 << n)]
        cols = self.pos[src]
        return sp.csr_matrix((np.ones(len(src)), (rows, cols)), shape=(self.dims[k - 1], self.dims[k]))


@dataclass
class DensityMatrix:
    """Excitation-number-block-diagonal density matrix."""

    N: int
    blocks: list

    @classmethod
    def fully_excited(cls, N: int) -> DensityMatrix:
        blocks = [np.zeros((comb(N, k), comb(N, k)), dtype=complex) for k in range(N + 1)]
        blocks[N][0, 0] = 1.0
        return cls(N, blocks)

    @classmethod
    def maximally_mixed(cls, N: int) -> DensityMatrix:
        return cls(N, [np.eye(comb(N, k), dtype=complex) / 2**N for k in range(N + 1)])

    @classmethod
    def from_vector(cls, N: int, vec) -> DensityMatrix:
        blocks, start = [], 0
        for k in range(N + 1):
            d = comb(N, k)
            blocks.append(np.asarray(vec[start:start + d * d]).reshape(d, d))
            start += d * d
        return cls(N, blocks)

    def vector(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks])

    def trace(self) -> complex:
        return sum(np.trace(b) for b in self.blocks)

    def hermiticity_error(self) -> float:
        return max(float(np.max(np.abs(b - b.conj().T))) for b in self.blocks)

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh((b + b.conj().T) / 2)[0]) for b in self.blocks)

    def full(self) -> np.ndarray:
        """Dense 2^N x 2^N matrix in the computational basis."""
        sec = Sectors(self.N)
        out = np.zeros((2**self.N, 2**self.N), dtype=complex)
        for blk, states in zip(self.blocks, sec.states):
            out[np.ix_(states, states)] = blk
        return out


def _site_operator(label: str) -> np.ndarray:
    # basis |g> = 0, |e> = 1
    return {PLUS: np.array([[0, 0], [1, 0]]), MINUS: np.array([[0, 1], [0, 0]]),
            "z": np.array([[-1, 0], [0, 1]])}[label].astype(complex)


def operator_matrix(string: PauliString, N: int) -> sp.csr_matrix:
    """Sparse 2^N matrix of a Pauli string; site n is bit n of the state index."""
    ops = dict(string.factors)
    out = sp.identity(1, dtype=complex, format="csr")
    for n in reversed(range(N)):  # most significant bit first in the Kronecker product
        op = sp.csr_matrix(_site_operator(ops[n])) if n in ops else sp.identity(2, dtype=complex)
        out = sp.kron(out, op, format="csr")
    return out


def moments_exact(rho: DensityMatrix, string: PauliString) -> complex:
    """``Tr[rho O]`` for a Pauli string O."""
    if any(s >= rho.N for s in string.sites):
        raise ValueError(f"{string} acts outside the {rho.N}-site system")
    if not string.balanced:
        return 0.0  # rho is block diagonal in excitation number
    op = operator_matrix(string, rho.N)
    sec = Sectors(rho.N)
    total = 0.0
    for blk, states in zip(rho.blocks, sec.states):
        sub = op[states][:, states]
        total += (sub.multiply(blk.T)).sum()
    return complex(total)


class ExactLindblad:
    """Sector-resolved Lindblad generator for a given coupling matrix."""

    def __init__(self, couplings: CouplingMatrix, include_hamiltonian: bool = False,
                 max_n: int = N_MAX_EXACT):
        N = couplings.N
        if N > max_n:
            raise CapacityError(f"exact propagation limited to N <= {max_n}, got N = {N}")
        self.couplings = couplings
        self.N = N
        self.sectors = sec = Sectors(N)
        Gam = couplings.Gamma
        Jm = couplings.J if include_hamiltonian else np.zeros_like(Gam)
        coupling = Jm - 0.5j * Gam  # K = sum_nm (J_nm - i Gamma_nm / 2) s+_n s-_m

        gam, vecs = np.linalg.eigh(Gam)
        keep = gam > 1e-12 * max(gam.max(), 1.0)
        self._rates = gam[keep]
        self.K, self.Q, self.jumps = [], [], []
        for k in range(N + 1):
            if k == 0:
                d = sec.dims[0]
                self.K.append(sp.csr_matrix((d, d), dtype=complex))
                self.Q.append(sp.csr_matrix((d, d)))
                self.jumps.append([])
                continue
            low = [sec.lowering(n, k) for n in range(N)]
            K = sp.csr_matrix((sec.dims[k], sec.dims[k]), dtype=complex)
            Q = sp.csr_matrix((sec.dims[k], sec.dims[k]))
            for n in range(N):
                Bn = sum((coupling[n, m] * low[m] for m in range(N) if coupling[n, m] != 0),
                         sp.csr_matrix(low[0].shape, dtype=complex))
                Qn = sum((Gam[n, m] * low[m] for m in range(N) if Gam[n, m] != 0),
                         sp.csr_matrix(low[0].shape))
                K = K + low[n].T @ Bn
                Q = Q + low[n].T @ Qn
            self.K.append(K.tocsr())
            self.Q.append(Q.tocsr())
            self.jumps.append([sum(v[n] * low[n] for n in range(N)).tocsr() for v in vecs[:, keep].T])
        dims = sec.dims
        self.size = sum(d * d for d in dims)
        self._offsets = np.cumsum([0] + [d * d for d in dims])
        # R = Tr[Q rho] and excitation number as linear functionals of the packed vector
        self._w_rate = np.concatenate([np.asarray(Q.T.todense()).ravel() for Q in self.Q])
        self._w_exc = np.concatenate([k * np.eye(d).ravel() for k, d in enumerate(dims)])
        self._w_tr = np.concatenate([np.eye(d).ravel() for d in dims])

    def _blocks(self, vec):
        return [vec[self._offsets[k]:self._offsets[k + 1]].reshape(d, d)
                for k, d in enumerate(self.sectors.dims)]

    def rhs(self, t, vec):
        rho = self._blocks(vec)
        out = np.empty_like(vec)
        dout = self._blocks(out)
        for k in range(self.N + 1):
            X = self.K[k] @ rho[k]
            d = -1j * (X - X.conj().T)
            if k < self.N:
                for rate, L in zip(self._rates, self.jumps[k + 1]):
                    Y = L @ rho[k + 1]
                    d += rate * (L @ Y.T).T
            dout[k][...] = d
        return out

    def observe(self, vec) -> np.ndarray:
        """Affine observables ``[R, excitation number, trace]``."""
        return np.array([np.real(self._w_rate @ vec), np.real(self._w_exc @ vec), np.real(self._w_tr @ vec)])

    def initial_vector(self) -> np.ndarray:
        return DensityMatrix.fully_excited(self.N).vector()

    def correlations(self, vec):
        """``(z_n, <s+_n s-_m>)`` from a packed density matrix."""
        rho = self._blocks(vec)
        sec = self.sectors
        N = self.N
        z = np.zeros(N)
        C = np.zeros((N, N), dtype=complex)
        for k in range(N + 1):
            diag = np.real(np.diag(rho[k]))
            bits = (sec.states[k][:, None] >> np.arange(N)) & 1
            z += (2 * bits - 1).T @ diag
            if k == 0:
                continue
            low = [sec.lowering(n, k) for n in range(N)]
            X = [low[m] @ rho[k] for m in range(N)]   # s-_m rho
            for n in range(N):
                for m in range(N):
                    # Tr[s+_n s-_m rho] = Tr[s-_m rho s+_n]
                    C[n, m] += low[n].multiply(X[m]).sum()
        return z, C


def evolve_exact(rho0: DensityMatrix, couplings: CouplingMatrix, include_hamiltonian: bool = False,
                 t_grid=None, config: IntegratorConfig | None = None,
                 max_n: int = N_MAX_EXACT) -> list:
    """Density matrices at the times in ``t_grid`` (ascending, starting at or after 0)."""
    system = ExactLindblad(couplings, include_hamiltonian, max_n)
    if rho0.N != couplings.N:
        raise ValueError("density matrix and couplings disagree on N")
    t_grid = np.asarray(t_grid, dtype=float)
    cfg = config or IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
    cfg = IntegratorConfig(**{**cfg.__dict__, "t_end": float(t_grid[-1])})
    traj = integrate(system.rhs, rho0.vector(), cfg, t_eval=t_grid,
                     on_step=trace_guard(system))
    return [DensityMatrix.from_vector(rho0.N, v.copy()) for v in traj.y_eval]


def trace_guard(system: ExactLindblad, tol: float = TRACE_TOL):
    def check(t, vec):
        tr = system.observe(vec)[2]
        if abs(tr - 1.0) > tol:
            raise IntegrationError(f"trace drifted to {tr:.10f} at t={t:.4g}")
        return False
    return check
