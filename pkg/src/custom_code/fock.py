"""
Fock-space bookkeeping and operator algebra.

Basis ordering is row-major over the layout's mode order (the last mode runs
fastest). The ordering is frozen: CSV outputs and stored states depend on it.

Ladder operators use hard truncation, so the annihilator's adjoint kills the
top level of each mode. Whether a truncation is adequate is checked by the
leakage diagnostics of the integrator, not here.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple, Union
import logging

import numpy as np
import scipy.sparse as sp

from src.utils.errors import DomainError

logger = logging.getLogger(__name__)

# Entries below this magnitude are dropped whenever an operator is built
DROP_TOL = 1e-14
NORM_TOL = 1e-8
TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8


# ---------------------------------------------------------------------------
#  Layout
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ModeLayout:
    """Ordered bosonic modes with per-mode truncation dims (dim = n_max + 1)"""

    modes: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        modes = tuple((str(label), int(dim)) for label, dim in self.modes)
        if not modes:
            raise DomainError("layout needs at least one mode")
        labels = [label for label, _ in modes]
        if len(set(labels)) != len(labels):
            raise DomainError(f"mode labels must be unique, got {labels}")
        for label, dim in modes:
            if dim < 1:
                raise DomainError(f"mode '{label}' has non-positive dimension {dim}")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def of(cls, *pairs: Tuple[str, int]) -> "ModeLayout":
        return cls(tuple(pairs))

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(label for label, _ in self.modes)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(dim for _, dim in self.modes)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def position(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DomainError(f"unknown mode '{label}' (layout has {list(self.labels)})") from None

    def mode_dim(self, label: str) -> int:
        return self.dims[self.position(label)]

    def sub_layout(self, labels: Iterable[str]) -> "ModeLayout":
        wanted = set(labels)
        for label in wanted:
            self.position(label)
        return ModeLayout(tuple(m for m in self.modes if m[0] in wanted))

    def occupation_table(self) -> np.ndarray:
        """(dim, n_modes) array of occupation tuples in basis order"""
        return np.array(np.unravel_index(np.arange(self.dim), self.dims)).T


def basis_index(layout: ModeLayout, occupations: Sequence[int]) -> int:
    if len(occupations) != len(layout.modes):
        raise DomainError(
            f"expected {len(layout.modes)} occupations for modes {list(layout.labels)}, "
            f"got {len(occupations)}"
        )
    for (label, dim), n in zip(layout.modes, occupations):
        if not 0 <= int(n) < dim:
            raise DomainError(f"occupation {n} out of range for mode '{label}' (dim {dim})")
    return int(np.ravel_multi_index(tuple(int(n) for n in occupations), layout.dims))


def occupations_of(layout: ModeLayout, index: int) -> Tuple[int, ...]:
    if not 0 <= int(index) < layout.dim:
        raise DomainError(f"basis index {index} out of range for dimension {layout.dim}")
    return tuple(int(n) for n in np.unravel_index(int(index), layout.dims))


# ---------------------------------------------------------------------------
#  Operators
# ---------------------------------------------------------------------------
def _prune(matrix) -> sp.csr_matrix:
    m = sp.csr_matrix(matrix, dtype=complex, copy=True)
    m.sum_duplicates()
    m.data[np.abs(m.data) < DROP_TOL] = 0
    m.eliminate_zeros()
    return m


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Complex CSR matrix on a layout's Hilbert space; never mutated after build"""

    matrix: sp.csr_matrix

    def __post_init__(self):
        m = _prune(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise DomainError(f"operator must be square, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_entries(cls, dim: int, entries: Iterable[Tuple[int, int, complex]]) -> "SparseOperator":
        entries = list(entries)
        if not entries:
            return cls(sp.csr_matrix((dim, dim), dtype=complex))
        rows, cols, vals = zip(*entries)
        if max(rows) >= dim or max(cols) >= dim:
            raise DomainError(f"entry index out of range for dimension {dim}")
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def entries(self) -> List[Tuple[int, int, complex]]:
        coo = self.matrix.tocoo()
        return [(int(r), int(c), complex(v)) for r, c, v in zip(coo.row, coo.col, coo.data)]

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(self.matrix.conj().T)

    def _check(self, other: "SparseOperator"):
        if other.dim != self.dim:
            raise DomainError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            self._check(other)
            return SparseOperator(self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.matrix + other.matrix)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "SparseOperator":
        return SparseOperator(self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SparseOperator":
        return SparseOperator(-self.matrix)

    def commutator(self, other: "SparseOperator") -> "SparseOperator":
        return self @ other - other @ self

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def apply(self, state: "StateVector") -> np.ndarray:
        if state.dim != self.dim:
            raise DomainError(f"dimension mismatch: operator {self.dim} vs state {state.dim}")
        return self.matrix @ state.amplitudes

    def expectation(self, rho: Union["DensityMatrix", "StateVector"]) -> complex:
        if isinstance(rho, StateVector):
            return complex(np.vdot(rho.amplitudes, self.matrix @ rho.amplitudes))
        if rho.dim != self.dim:
            raise DomainError(f"dimension mismatch: operator {self.dim} vs state {rho.dim}")
        # tr(A rho) without forming the product
        return complex(self.matrix.multiply(rho.elements.T).sum())


def identity(layout: Union[ModeLayout, int]) -> SparseOperator:
    dim = layout if isinstance(layout, int) else layout.dim
    return SparseOperator(sp.identity(dim, dtype=complex, format="csr"))


def local_operator(layout: ModeLayout, label: str, single_mode) -> SparseOperator:
    """Embed a single-mode matrix at ``label``, identity on the other modes"""
    pos = layout.position(label)
    single = sp.csr_matrix(single_mode, dtype=complex)
    if single.shape != (layout.dims[pos],) * 2:
        raise DomainError(
            f"single-mode matrix for '{label}' has shape {single.shape}, expected dim {layout.dims[pos]}"
        )
    factors = [
        single if i == pos else sp.identity(dim, dtype=complex, format="csr")
        for i, dim in enumerate(layout.dims)
    ]
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return SparseOperator(out)


def ladder_matrix(dim: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), offsets=1, shape=(dim, dim), format="csr")


def annihilation(layout: ModeLayout, mode_label: str) -> SparseOperator:
    dim = layout.mode_dim(mode_label)
    return local_operator(layout, mode_label, ladder_matrix(dim))


def creation(layout: ModeLayout, mode_label: str) -> SparseOperator:
    return annihilation(layout, mode_label).adjoint()


def number(layout: ModeLayout, mode_label: str) -> SparseOperator:
    dim = layout.mode_dim(mode_label)
    return local_operator(layout, mode_label, sp.diags(np.arange(dim, dtype=float), format="csr"))


def spin_operators(j: float) -> Tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """
    (S+, S-, Sz) for spin j in the Dicke basis ordered by excitation k = m + j.

    Ordering by k lets a collective spin sit in a ModeLayout like any other
    mode: level k holds k excitations, so sector restriction still applies.
    """
    two_j = int(round(2 * j))
    if two_j < 0 or abs(2 * j - two_j) > 1e-12:
        raise DomainError(f"spin must be a non-negative multiple of 1/2, got {j}")
    m = np.arange(two_j + 1) - j
    raise_elems = np.sqrt(np.clip(j * (j + 1) - m[:-1] * (m[:-1] + 1), 0.0, None))
    s_plus = sp.diags(raise_elems, offsets=-1, shape=(two_j + 1,) * 2, format="csr").astype(complex)
    s_minus = s_plus.conj().T.tocsr()
    s_z = sp.diags(m, format="csr").astype(complex)
    return s_plus, s_minus, s_z


# ---------------------------------------------------------------------------
#  States
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class StateVector:
    """
    Dense ket. ``physical=True`` (default) enforces unit norm; arithmetic
    results are wrapped with ``physical=False`` and report ``is_normalized``.
    """

    amplitudes: np.ndarray
    physical: bool = field(default=True, repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        object.__setattr__(self, "amplitudes", amps)
        if self.physical and abs(self.norm - 1.0) > NORM_TOL:
            raise DomainError(f"state norm {self.norm:.12g} differs from 1 beyond {NORM_TOL}")

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm - 1.0) <= NORM_TOL

    def normalized(self) -> "StateVector":
        n = self.norm
        if n == 0:
            raise DomainError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / n)

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def basis_state(layout: ModeLayout, occupations: Sequence[int]) -> StateVector:
    amps = np.zeros(layout.dim, dtype=complex)
    amps[basis_index(layout, occupations)] = 1.0
    return StateVector(amps)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """
    Dense density operator. Validation (Hermitian, unit trace, PSD within
    tolerance) runs unless ``validate=False``, which is used for
    time derivatives and kernel elements.
    """

    elements: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        rho = np.array(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DomainError(f"density matrix must be square, got shape {rho.shape}")
        object.__setattr__(self, "elements", rho)
        if self.validate:
            if self.hermiticity_error() > HERMITIAN_TOL:
                raise DomainError(f"density matrix not Hermitian (max |rho - rho^+| = {self.hermiticity_error():.3e})")
            if abs(self.trace() - 1.0) > TRACE_TOL:
                raise DomainError(f"density matrix trace {self.trace():.12g} differs from 1")
            if self.min_eigenvalue() < -POSITIVITY_TOL:
                raise DomainError(f"density matrix has negative eigenvalue {self.min_eigenvalue():.3e}")

    @classmethod
    def from_pure(cls, state: StateVector) -> "DensityMatrix":
        return cls(np.outer(state.amplitudes, state.amplitudes.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def mixture(cls, weighted: Iterable[Tuple[float, "DensityMatrix"]]) -> "DensityMatrix":
        weighted = list(weighted)
        return cls(sum(w * rho.elements for w, rho in weighted))

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self.elements)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.elements - self.elements.conj().T)))

    def eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.elements + self.elements.conj().T)
        return np.linalg.eigvalsh(herm)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.elements))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.elements, self.elements)))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    if rho.dim != sigma.dim:
        raise DomainError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    diff = rho.elements - sigma.elements
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def fidelity(rho: DensityMatrix, state: StateVector) -> float:
    """<psi|rho|psi> for a pure reference state"""
    return float(np.real(np.vdot(state.amplitudes, rho.elements @ state.amplitudes)))


# ---------------------------------------------------------------------------
#  Excitation sectors
# ---------------------------------------------------------------------------
def sector_indices(layout: ModeLayout, n_total_max: int) -> np.ndarray:
    if n_total_max < 0:
        raise DomainError(f"n_total_max must be non-negative, got {n_total_max}")
    totals = layout.occupation_table().sum(axis=1)
    return np.flatnonzero(totals <= n_total_max)


def restrict_to_excitation_sector(
    layout: ModeLayout, op: SparseOperator, n_total_max: int
) -> Tuple[SparseOperator, np.ndarray]:
    if op.dim != layout.dim:
        raise DomainError(f"operator dimension {op.dim} does not match layout dimension {layout.dim}")
    index_map = sector_indices(layout, n_total_max)
    block = op.matrix[index_map][:, index_map]
    return SparseOperator(block), index_map


def embed_from_sector(op: SparseOperator, index_map: np.ndarray, dim: int) -> SparseOperator:
    coo = op.matrix.tocoo()
    full = sp.coo_matrix((coo.data, (index_map[coo.row], index_map[coo.col])), shape=(dim, dim))
    return SparseOperator(full)


def restrict_state(rho: DensityMatrix, index_map: np.ndarray) -> DensityMatrix:
    kept = rho.elements[np.ix_(index_map, index_map)]
    lost = rho.trace() - float(np.real(np.trace(kept)))
    if lost > TRACE_TOL:
        raise DomainError(f"state has weight {lost:.3e} outside the excitation sector")
    return DensityMatrix(kept)


def embed_state(rho: DensityMatrix, index_map: np.ndarray, dim: int) -> DensityMatrix:
    full = np.zeros((dim, dim), dtype=complex)
    full[np.ix_(index_map, index_map)] = rho.elements
    return DensityMatrix(full, validate=rho.validate)


def max_excitation(layout: ModeLayout, rho: DensityMatrix, tol: float = 1e-14) -> int:
    """Largest total occupation carrying population in ``rho``"""
    totals = layout.occupation_table().sum(axis=1)
    populated = np.abs(np.real(np.diag(rho.elements))) > tol
    return int(totals[populated].max()) if populated.any() else 0


def operators_for(layout: ModeLayout) -> Dict[str, SparseOperator]:
    """Annihilators for every mode keyed by label"""
    return {label: annihilation(layout, label) for label in layout.labels}
