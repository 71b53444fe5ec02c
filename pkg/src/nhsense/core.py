"""
Chain parameters, perturbations and the quadrature-space dynamical matrix.

The quadrature vector is always ordered (x_1 ... x_N, p_1 ... p_N).  With
no perturbation the x and p blocks are two decoupled Hatano-Nelson chains
with opposite amplification (+A for x, -A for p).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


class StabilityError(ValueError):
    """Raised when w <= delta, i.e. the parametric chain is not dynamically stable."""


class PoleError(ArithmeticError):
    """Raised when a susceptibility is evaluated on (or numerically at) a pole."""


class NumericalError(RuntimeError):
    """Eigensolver, ODE or root-bracketing failure."""


class EvenChainWarning(UserWarning):
    """Even N has no zero-frequency lattice mode; susceptibilities are suppressed by ~kappa/2J."""


def derive_hopping_params(w: float, delta: float) -> tuple[float, float]:
    """Map the hopping ``w`` and two-photon drive ``delta`` to ``(J, A)``.

    J = sqrt(w^2 - delta^2) and A = 1/2 ln((w + delta) / (w - delta)).
    """
    if w < 0 or delta < 0:
        raise ValueError(f"w and delta must be non-negative, got w={w}, delta={delta}")
    if w <= delta:
        raise StabilityError(f"dynamical stability needs w > delta (got w={w}, delta={delta})")
    J = math.sqrt((w - delta) * (w + delta))
    A = 0.5 * (math.log1p(delta / w) - math.log1p(-delta / w))
    return J, A


def invert_hopping_params(J: float, A: float) -> tuple[float, float]:
    """Inverse of :func:`derive_hopping_params`: ``w = J cosh A``, ``delta = J sinh A``."""
    if J <= 0:
        raise ValueError(f"J must be positive, got {J}")
    if A < 0:
        raise ValueError(f"A must be non-negative, got {A}")
    return J * math.cosh(A), J * math.sinh(A)


@dataclass(frozen=True)
class ChainParams:
    """Physical parameters of the driven parametric chain.

    Frequencies (``w``, ``delta``, ``kappa``) share one unit; the library
    conventionally works with ``kappa = 1``.  ``beta`` is the (real, non-negative)
    drive amplitude and ``theta`` its phase.
    """

    N: int
    w: float
    delta: float
    kappa: float = 1.0
    n_th: float = 0.0
    beta: float = 1.0
    theta: float = 0.0
    homodyne_phi: float = math.pi / 2
    J: float = field(init=False, repr=False)
    A: float = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.n_th < 0:
            raise ValueError(f"n_th must be non-negative, got {self.n_th}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        J, A = derive_hopping_params(self.w, self.delta)
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "A", A)
        if self.N % 2 == 0:
            warnings.warn(
                f"N={self.N} is even: no zero-frequency resonance", EvenChainWarning, stacklevel=3
            )

    @classmethod
    def from_hopping(cls, N: int, J: float, A: float, **kwargs) -> "ChainParams":
        """Build from the effective hopping ``J`` and amplification ``A``."""
        w, delta = invert_hopping_params(J, A)
        return cls(N=N, w=w, delta=delta, **kwargs)

    def replace(self, **changes) -> "ChainParams":
        """Return a copy with some fields changed.  ``J``/``A`` may be given instead of ``w``/``delta``."""
        current = dict(
            N=self.N, w=self.w, delta=self.delta, kappa=self.kappa, n_th=self.n_th,
            beta=self.beta, theta=self.theta, homodyne_phi=self.homodyne_phi,
        )
        if "J" in changes or "A" in changes:
            J = changes.pop("J", self.J)
            A = changes.pop("A", self.A)
            current["w"], current["delta"] = invert_hopping_params(J, A)
        current.update(changes)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EvenChainWarning)
            return ChainParams(**current)

    @property
    def gain(self) -> float:
        """End-to-end amplitude gain e^{A(N-1)}."""
        return math.exp(self.A * (self.N - 1))


class PerturbationKind(enum.Enum):
    NONE = "none"
    DISPERSIVE_LAST = "dispersive_last"
    BOUNDARY_HOP = "boundary_hop"


@dataclass(frozen=True)
class Perturbation:
    """Symmetry-breaking (or not) perturbation ``epsilon * V``.

    ``DISPERSIVE_LAST`` is V = a_N^dag a_N.  ``BOUNDARY_HOP`` is
    V = e^{i hop_phase} a_1^dag a_N + h.c.
    """

    kind: PerturbationKind = PerturbationKind.NONE
    epsilon: float = 0.0
    hop_phase: float = 0.0

    def __post_init__(self):
        if self.kind is PerturbationKind.NONE and self.epsilon != 0.0:
            raise ValueError("a NONE perturbation must have epsilon = 0")

    @classmethod
    def none(cls) -> "Perturbation":
        return cls()

    @classmethod
    def dispersive_last(cls, epsilon: float) -> "Perturbation":
        return cls(PerturbationKind.DISPERSIVE_LAST, float(epsilon))

    @classmethod
    def boundary_hop(cls, epsilon: float, hop_phase: float = 0.0) -> "Perturbation":
        return cls(PerturbationKind.BOUNDARY_HOP, float(epsilon), float(hop_phase))

    def with_epsilon(self, epsilon: float) -> "Perturbation":
        if self.kind is PerturbationKind.NONE:
            return self
        return Perturbation(self.kind, float(epsilon), self.hop_phase)


NO_PERTURBATION = Perturbation()


def perturbation_matrix(N: int, pert: Perturbation) -> NDArray[np.float64]:
    """Derivative of the dynamical matrix with respect to epsilon (2N x 2N)."""
    V = np.zeros((2 * N, 2 * N))
    xN, pN = N - 1, 2 * N - 1
    x1, p1 = 0, N
    if pert.kind is PerturbationKind.DISPERSIVE_LAST:
        V[xN, pN] += 1.0
        V[pN, xN] -= 1.0
    elif pert.kind is PerturbationKind.BOUNDARY_HOP:
        s, c = math.sin(pert.hop_phase), math.cos(pert.hop_phase)
        # site 1 rows: d/dt a_1 = -i eps e^{i phase} a_N
        V[x1, xN] += s
        V[x1, pN] += c
        V[p1, xN] -= c
        V[p1, pN] += s
        # site N rows: d/dt a_N = -i eps e^{-i phase} a_1
        V[xN, x1] -= s
        V[xN, p1] += c
        V[pN, x1] -= c
        V[pN, p1] -= s
    return V


def hatano_nelson_block(N: int, J: float, A: float) -> NDArray[np.float64]:
    """Generator of psi_n' = J e^A psi_{n-1} - J e^{-A} psi_{n+1} (open chain)."""
    H = np.zeros((N, N))
    idx = np.arange(1, N)
    H[idx, idx - 1] = J * math.exp(A)
    H[idx - 1, idx] = -J * math.exp(-A)
    return H


def build_dynamical_matrix(
    params: ChainParams, pert: Perturbation = NO_PERTURBATION, *, kappa: float | None = None
) -> NDArray[np.float64]:
    """Real 2N x 2N matrix M with d/dt (x, p) = M (x, p) + forces.

    ``kappa`` overrides ``params.kappa`` (the symmetry check uses kappa = 0).
    """
    N = params.N
    k = params.kappa if kappa is None else kappa
    M = np.zeros((2 * N, 2 * N))
    M[:N, :N] = hatano_nelson_block(N, params.J, params.A)
    M[N:, N:] = hatano_nelson_block(N, params.J, -params.A)
    M[0, 0] -= k / 2
    M[N, N] -= k / 2
    if pert.kind is not PerturbationKind.NONE:
        M += pert.epsilon * perturbation_matrix(N, pert)
    return M


def stability_margin(M: NDArray[np.float64]) -> float:
    """Largest real part of the spectrum of ``M`` (stable iff <= 0)."""
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    return float(np.max(eig.real))


def z2_operator(N: int) -> NDArray[np.float64]:
    """Combined time reversal, quadrature rotation and spatial inversion on (x, p).

    Time reversal is x -> x, p -> -p; rotation is x -> p, p -> -x; inversion
    sends site n to N + 1 - n.
    """
    I = np.eye(N)
    Z = np.zeros((N, N))
    T = np.block([[I, Z], [Z, -I]])
    R = np.block([[Z, I], [-I, Z]])
    P = np.fliplr(I)
    S = np.block([[P, Z], [Z, P]])
    return T @ R @ S


def z2_symmetry_check(params: ChainParams, pert: Perturbation = NO_PERTURBATION, *, atol: float = 1e-12) -> bool:
    """True iff the kappa = 0 generator obeys Q M Q^-1 = -M for the combined Z2 operation.

    The minus sign is the time-reversal sign: an antiunitary symmetry of the
    Hamiltonian flips the sign of the Heisenberg generator.
    """
    M = build_dynamical_matrix(params, pert, kappa=0.0)
    Q = z2_operator(params.N)
    lhs = Q @ M @ np.linalg.inv(Q)
    scale = max(1.0, float(np.max(np.abs(M))))
    return bool(np.allclose(lhs, -M, rtol=0.0, atol=atol * scale))
