"""Coherent (J) and dissipative (Gamma) dipole-dipole couplings.

Rates are in units of the single-emitter decay rate and lengths in units of
lambda_0.  The complex coupling ``J_nm - i Gamma_nm / 2`` is
``-(3 pi / k0) d^dagger G(r_nm) d``; the diagonal is fixed to ``Gamma_nn = 1``,
``J_nn = 0`` (the divergent real part of G at r = 0 is a Lamb shift absorbed
into the transition frequency).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import K0, EmitterArray, LatticeKind, Polarization

PSD_TOL = 1e-9


class Reservoir(str, enum.Enum):
    FREE_SPACE = "free_space"
    WAVEGUIDE = "waveguide"
    DICKE = "dicke"
    INDEPENDENT = "independent"


class CouplingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    J: np.ndarray
    Gamma: np.ndarray
    reservoir: Reservoir

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        G = np.array(self.Gamma, dtype=float)
        if J.shape != G.shape or G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise CouplingError(f"J {J.shape} and Gamma {G.shape} must be equal square matrices")
        if not np.array_equal(G, G.T):
            raise CouplingError("Gamma must be exactly symmetric")
        if not np.allclose(J, J.T, rtol=0, atol=1e-12):
            raise CouplingError("J must be symmetric")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "Gamma", G)
        object.__setattr__(self, "reservoir", Reservoir(self.reservoir))

    @property
    def N(self) -> int:
        return self.Gamma.shape[0]

    def rates(self, include_hamiltonian: bool = False) -> np.ndarray:
        """Matrix ``g = Gamma / 2 + i J`` driving the Heisenberg equations.

        Real (float) when the Hamiltonian is excluded or J vanishes, which
        lets the moment equations run in real arithmetic.
        """
        if include_hamiltonian and np.any(self.J):
            return self.Gamma / 2 + 1j * self.J
        return self.Gamma / 2

    def permuted(self, perm) -> CouplingMatrix:
        p = np.asarray(perm)
        return CouplingMatrix(self.J[np.ix_(p, p)], self.Gamma[np.ix_(p, p)], self.reservoir)

    def check_psd(self, tol: float = PSD_TOL) -> float:
        """Smallest eigenvalue of Gamma; raises if below ``-tol``."""
        lam = float(np.linalg.eigvalsh(self.Gamma)[0])
        if lam < -tol:
            raise CouplingError(f"Gamma is not positive semidefinite (min eigenvalue {lam:.3e})")
        return lam

    def to_csv(self, path) -> None:
        """Write J and Gamma row-major, each preceded by a one-line header."""
        path = Path(path)
        with path.open("w") as fh:
            fh.write(f"# N={self.N} reservoir={self.reservoir.value}\n")
            for name, mat in (("J", self.J), ("Gamma", self.Gamma)):
                fh.write(f"# {name}\n")
                for row in mat:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")


def greens_free_space(r, k0: float = K0) -> np.ndarray:
    """Free-space dyadic Green's tensor at separation ``r`` (a 3-vector)."""
    r = np.asarray(r, dtype=float)
    dist = np.linalg.norm(r)
    if dist == 0.0:
        raise CouplingError("Green's tensor diverges at zero separation")
    x = k0 * dist
    rhat = r / dist
    pref = np.exp(1j * x) / (4 * np.pi * k0**2 * dist**3)
    return pref * ((x**2 + 1j * x - 1) * np.eye(3) + (-(x**2) - 3j * x + 3) * np.outer(rhat, rhat))


def _dipole_kernel(r: np.ndarray, d: np.ndarray, k0: float) -> np.ndarray:
    """``-(3 pi / k0) d^dagger G(r) d`` for separations of shape (..., 3), r != 0."""
    dist = np.linalg.norm(r, axis=-1)
    x = k0 * dist
    proj = np.abs(r @ d) ** 2 / dist**2  # |rhat . d|^2
    bracket = (x**2 + 1j * x - 1) * np.vdot(d, d).real + (-(x**2) - 3j * x + 3) * proj
    return -0.75 * np.exp(1j * x) / x**3 * bracket


def couplings_free_space(array: EmitterArray, pol: Polarization, k0: float = K0,
                         check: bool = True) -> CouplingMatrix:
    N = array.N
    iu, ju = np.triu_indices(N, 1)
    sep = array.positions[iu] - array.positions[ju]
    if len(sep) and np.min(np.linalg.norm(sep, axis=1)) == 0.0:
        raise CouplingError("coincident emitters")
    c = _dipole_kernel(sep, pol.d, k0)
    J = np.zeros((N, N))
    Gamma = np.eye(N)
    J[iu, ju] = J[ju, iu] = c.real
    Gamma[iu, ju] = Gamma[ju, iu] = -2.0 * c.imag
    out = CouplingMatrix(J, Gamma, Reservoir.FREE_SPACE)
    if check:
        out.check_psd()
    return out


def couplings_waveguide(N: int, theta: float) -> CouplingMatrix:
    """Bidirectional waveguide: ``J - i Gamma/2 = -(i/2) exp(i theta |n - m|)``."""
    if N < 1:
        raise CouplingError("N must be at least 1")
    phase = theta * np.abs(np.subtract.outer(np.arange(N), np.arange(N)))
    J = 0.5 * np.sin(phase)
    Gamma = np.cos(phase)
    return CouplingMatrix(J, Gamma, Reservoir.WAVEGUIDE)


def couplings_dicke(N: int) -> CouplingMatrix:
    if N < 1:
        raise CouplingError("N must be at least 1")
    return CouplingMatrix(np.zeros((N, N)), np.ones((N, N)), Reservoir.DICKE)


def couplings_independent(N: int) -> CouplingMatrix:
    if N < 1:
        raise CouplingError("N must be at least 1")
    return CouplingMatrix(np.zeros((N, N)), np.eye(N), Reservoir.INDEPENDENT)


def build_couplings(reservoir, array: EmitterArray | None = None, pol: Polarization | None = None,
                    N: int | None = None, theta: float | None = None) -> CouplingMatrix:
    """Dispatch on reservoir kind."""
    reservoir = Reservoir(reservoir)
    if N is None and array is not None:
        N = array.N
    if reservoir is Reservoir.FREE_SPACE:
        if array is None or pol is None:
            raise CouplingError("free-space couplings need an emitter array and a polarization")
        if array.kind is LatticeKind.WAVEGUIDE_CHAIN:
            raise CouplingError("waveguide_chain geometry stores a phase, not a free-space spacing")
        return couplings_free_space(array, pol)
    if reservoir is Reservoir.WAVEGUIDE:
        if theta is None:
            if array is None or array.kind is not LatticeKind.WAVEGUIDE_CHAIN:
                raise CouplingError("waveguide couplings need a phase theta = k0 a")
            theta = array.spacing
        return couplings_waveguide(N, theta)
    if reservoir is Reservoir.DICKE:
        return couplings_dicke(N)
    return couplings_independent(N)
