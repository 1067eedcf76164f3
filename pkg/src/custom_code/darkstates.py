"""
Dark states of the two tunneling regimes.

Weak tunneling, zero detuning and chi = 0:

    |D_n> = |0>_a 2^{-n/2} sum_j (-1)^j sqrt(C(n, j)) |n - j>_c |j>_d  =  |0>_a (r^+)^n / sqrt(n!) |0, 0>

with the dark mode r = (c - d)/sqrt(2). Photon loss drains the bright mode
s = (c + d)/sqrt(2) and leaves the r-number distribution untouched, which is
what ``predict_steady_mixture`` exploits.
"""

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple
import logging
import math

import numpy as np

from src.custom_code.fock import (
    DensityMatrix,
    ModeLayout,
    SparseOperator,
    StateVector,
    annihilation,
    basis_index,
    basis_state,
)
from src.utils.errors import DomainError

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class DarkFamilyElement:
    n: int
    state: StateVector
    layout: ModeLayout

    def __post_init__(self):
        if not self.state.is_normalized:
            raise DomainError(f"dark state D_{self.n} is not normalized (norm {self.state.norm:.12g})")
        if _photon_weight(self.state, self.layout) > 0:
            raise DomainError(f"dark state D_{self.n} has a photon component")

    def density_matrix(self) -> DensityMatrix:
        return DensityMatrix.from_pure(self.state)


def _require(layout: ModeLayout, labels: Tuple[str, ...]):
    if layout.labels != labels:
        raise DomainError(f"layout must have modes {list(labels)}, got {list(layout.labels)}")


def _photon_weight(state: StateVector, layout: ModeLayout) -> float:
    photons = layout.occupation_table()[:, layout.position("a")]
    return float(np.sum(np.abs(state.amplitudes[photons > 0]) ** 2))


# ---------------------------------------------------------------------------
#  Constructors
# ---------------------------------------------------------------------------
def dark_state_strong(layout: ModeLayout) -> StateVector:
    """|0>_a |0>_b, the only dark state of the strong-tunneling model"""
    _require(layout, ("a", "b"))
    return basis_state(layout, (0, 0))


def dark_state_weak(n: int, layout: ModeLayout) -> DarkFamilyElement:
    _require(layout, ("a", "c", "d"))
    if n < 0:
        raise DomainError(f"dark-state index must be non-negative, got {n}")
    limit = min(layout.mode_dim("c"), layout.mode_dim("d"))
    if n >= limit:
        raise DomainError(f"D_{n} needs c and d dims above {n}, layout allows n < {limit}")

    amps = np.zeros(layout.dim, dtype=complex)
    for j in range(n + 1):
        amps[basis_index(layout, (0, n - j, j))] = (-1) ** j * math.sqrt(math.comb(n, j) / 2 ** n)
    return DarkFamilyElement(n=n, state=StateVector(amps), layout=layout)


def collective_modes(layout: ModeLayout) -> Tuple[SparseOperator, SparseOperator]:
    """Bright s = (c + d)/sqrt(2) and dark r = (c - d)/sqrt(2) annihilators"""
    _require(layout, ("a", "c", "d"))
    c = annihilation(layout, "c")
    d = annihilation(layout, "d")
    return (c + d) * (1 / math.sqrt(2)), (c - d) * (1 / math.sqrt(2))


def dark_mixture_state(weights: Sequence[Tuple[int, float]], layout: ModeLayout) -> DensityMatrix:
    return DensityMatrix.mixture((w, dark_state_weak(n, layout).density_matrix()) for n, w in weights)


# ---------------------------------------------------------------------------
#  Checks and predictions
# ---------------------------------------------------------------------------
def verify_dark(H: SparseOperator, state: StateVector) -> float:
    """||H psi|| / ||psi||; zero for an exact dark state"""
    if state.norm == 0:
        raise DomainError("cannot verify the zero vector")
    return float(np.linalg.norm(H.apply(state)) / state.norm)


def predict_steady_mixture(initial: StateVector, layout: ModeLayout) -> List[Tuple[int, float]]:
    """
    Weights of the dark states D_n reached from an atomic initial state.

    Each |n_c, n_d> is rewritten through c^+ = (s^+ + r^+)/sqrt(2) and
    d^+ = (s^+ - r^+)/sqrt(2); the weight of D_n is the population of the
    r-number n sector. Coherences between sectors die out because they emit
    different numbers of photons.
    """
    _require(layout, ("a", "c", "d"))
    if initial.dim != layout.dim:
        raise DomainError(f"state dimension {initial.dim} does not match layout dimension {layout.dim}")
    leaked = _photon_weight(initial, layout)
    if leaked > WEIGHT_FLOOR:
        raise DomainError(f"predictor needs the photon mode in vacuum (photon weight {leaked:.3e})")

    table = layout.occupation_table()
    amplitudes: Dict[Tuple[int, int], complex] = defaultdict(complex)
    for index in np.flatnonzero(np.abs(initial.amplitudes) > 0):
        _, p, q = (int(x) for x in table[index])
        # |p, q> = (c^+)^p (d^+)^q / sqrt(p! q!) |0>
        prefactor = initial.amplitudes[index] / math.sqrt(math.factorial(p) * math.factorial(q) * 2 ** (p + q))
        for i in range(p + 1):
            for k in range(q + 1):
                n_s, n_r = p - i + q - k, i + k
                coeff = math.comb(p, i) * math.comb(q, k) * (-1) ** k
                amplitudes[(n_s, n_r)] += prefactor * coeff * math.sqrt(math.factorial(n_s) * math.factorial(n_r))

    weights: Dict[int, float] = defaultdict(float)
    for (_, n_r), amp in amplitudes.items():
        weights[n_r] += abs(amp) ** 2
    result = [(n, w) for n, w in sorted(weights.items()) if w > WEIGHT_FLOOR]
    logger.debug(f"predicted dark mixture: {result}")
    return result


def predicted_observables(weights: Sequence[Tuple[int, float]]) -> Dict[str, float]:
    """
    Closed-form steady values for sum_n w_n |D_n><D_n|:
    <n_c> = <n_d> = n/2, <c d^+> = -n/2 and <n_c n_d> = n(n-1)/4 per component.
    """
    mean_n = sum(w * n for n, w in weights)
    correlation = sum(w * n * (n - 1) / 4 for n, w in weights)
    coherence = -mean_n / 2
    return {
        "n_c": mean_n / 2,
        "n_d": mean_n / 2,
        "cd_dag": coherence,
        "n_c_n_d": correlation,
        "W": correlation - coherence ** 2,
    }
