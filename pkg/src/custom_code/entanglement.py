"""
Entanglement metrics for the two atomic modes.

Entropies are in nats, negativities in bits.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple
import logging

import numpy as np
import scipy.linalg as la
from scipy.special import gammaln

from src.custom_code.fock import (
    HERMITIAN_TOL,
    POSITIVITY_TOL,
    DensityMatrix,
    ModeLayout,
    annihilation,
    number,
)
from src.utils.errors import DomainError

logger = logging.getLogger(__name__)

EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class BipartiteSplit:
    layout: ModeLayout
    subsystem_a_modes: Tuple[str, ...]
    subsystem_b_modes: Tuple[str, ...]

    def __post_init__(self):
        a, b = set(self.subsystem_a_modes), set(self.subsystem_b_modes)
        if not a or not b:
            raise DomainError("both sides of a bipartite split must be nonempty")
        if a & b:
            raise DomainError(f"split sides overlap on {sorted(a & b)}")
        if a | b != set(self.layout.labels):
            raise DomainError(
                f"split {sorted(a)} | {sorted(b)} does not cover layout modes {list(self.layout.labels)}"
            )

    @classmethod
    def of(cls, layout: ModeLayout, a_modes: Iterable[str], b_modes: Iterable[str]) -> "BipartiteSplit":
        return cls(layout, tuple(a_modes), tuple(b_modes))


def _check_labels(layout: ModeLayout, labels: Iterable[str]) -> List[int]:
    return sorted(layout.position(label) for label in labels)


def partial_trace(rho: DensityMatrix, layout: ModeLayout, keep: Iterable[str]) -> DensityMatrix:
    """Reduced state on ``keep``; kept modes retain the layout's order"""
    keep = list(keep)
    if not keep:
        raise DomainError("partial_trace needs at least one mode to keep")
    if rho.dim != layout.dim:
        raise DomainError(f"state dimension {rho.dim} does not match layout dimension {layout.dim}")
    kept = _check_labels(layout, keep)

    n = len(layout.dims)
    tensor = rho.elements.reshape(layout.dims + layout.dims)
    # trace out from the last mode so the remaining axis numbers stay valid
    for pos in reversed(range(n)):
        if pos in kept:
            continue
        remaining = tensor.ndim // 2
        tensor = np.trace(tensor, axis1=pos, axis2=pos + remaining)

    kept_dim = int(np.prod([layout.dims[p] for p in kept]))
    return DensityMatrix(tensor.reshape(kept_dim, kept_dim), validate=rho.validate)


def partial_transpose(rho: DensityMatrix, layout: ModeLayout, modes: Iterable[str]) -> np.ndarray:
    if rho.dim != layout.dim:
        raise DomainError(f"state dimension {rho.dim} does not match layout dimension {layout.dim}")
    n = len(layout.dims)
    axes = list(range(2 * n))
    for pos in _check_labels(layout, modes):
        axes[pos], axes[pos + n] = axes[pos + n], axes[pos]
    tensor = rho.elements.reshape(layout.dims + layout.dims).transpose(axes)
    return tensor.reshape(layout.dim, layout.dim)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-tr(rho ln rho) over eigenvalues above EIG_FLOOR"""
    eigs = la.eigvalsh(0.5 * (rho.elements + rho.elements.conj().T))
    if eigs[0] < -POSITIVITY_TOL:
        raise DomainError(f"entropy of a non-positive matrix: min eigenvalue {eigs[0]:.3e}")
    eigs = eigs[eigs > EIG_FLOOR]
    return float(-np.sum(eigs * np.log(eigs)))


def reduced_entropy(rho: DensityMatrix, layout: ModeLayout, keep: Iterable[str]) -> float:
    return von_neumann_entropy(partial_trace(rho, layout, keep))


def dark_state_entropy_formula(n: int) -> float:
    """Marginal entropy of the n-th dark state: binomial(n, 1/2) Shannon entropy in nats"""
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    j = np.arange(n + 1)
    log_p = gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1) - n * np.log(2.0)
    return float(-np.sum(np.exp(log_p) * log_p))


def logarithmic_negativity(rho: DensityMatrix, split: BipartiteSplit) -> float:
    """log2 of the trace norm of rho^{T_a}, clamped at 0"""
    if rho.hermiticity_error() > HERMITIAN_TOL:
        raise DomainError(f"log negativity needs a Hermitian state (error {rho.hermiticity_error():.3e})")
    pt = partial_transpose(rho, split.layout, split.subsystem_a_modes)
    trace_norm = float(np.sum(np.abs(la.eigvalsh(0.5 * (pt + pt.conj().T)))))
    if trace_norm <= 1.0:
        return 0.0
    return float(np.log2(trace_norm))


def witness(rho_cd: DensityMatrix, layout: ModeLayout) -> float:
    """
    W = <n_c n_d> - |<c d^+>|^2 on a two-mode layout (first mode c, second d).
    W < 0 certifies that the two modes are not separable.
    """
    if len(layout.labels) != 2:
        raise DomainError(f"witness needs a two-mode layout, got {list(layout.labels)}")
    c_label, d_label = layout.labels
    n_c = number(layout, c_label)
    n_d = number(layout, d_label)
    hop = annihilation(layout, c_label) @ annihilation(layout, d_label).adjoint()
    correlation = np.real((n_c @ n_d).expectation(rho_cd))
    coherence = hop.expectation(rho_cd)
    return float(correlation - abs(coherence) ** 2)


def entanglement_series(
    states: Sequence[DensityMatrix], layout: ModeLayout, pair: Tuple[str, str] = ("c", "d")
) -> Dict[str, np.ndarray]:
    """W(t) and E_N(t) of the ``pair`` marginal for each stored state"""
    sub = layout.sub_layout(pair)
    split = BipartiteSplit.of(sub, [pair[0]], [pair[1]])
    w_values, en_values = [], []
    for rho in states:
        rho_cd = partial_trace(rho, layout, pair)
        # integrator output is checked by the trajectory diagnostics, not re-validated here
        rho_cd = DensityMatrix(0.5 * (rho_cd.elements + rho_cd.elements.conj().T), validate=False)
        w_values.append(witness(rho_cd, sub))
        en_values.append(logarithmic_negativity(rho_cd, split))
    return {"W": np.array(w_values), "E_N": np.array(en_values)}
