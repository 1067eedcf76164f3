"""
Hamiltonians of the double-well condensate coupled to a resonator mode.

Units: hbar = 1 and every rate is expressed in units of the single-atom
coupling g, so times come out in units of 1/g (the ``gt`` axis).

Two families are built here:
  - bosonized (Holstein-Primakoff) effective models for the strong- and
    weak-tunneling limits, on layouts {a, b} and {a, c, d};
  - exact collective-spin models (Dicke basis) used to validate the
    bosonization at small atom numbers.
"""

from typing import List, Literal, Optional, Tuple
import logging
import math

from pydantic import BaseModel, ConfigDict, Field, model_validator
import scipy.sparse as sp

from src.custom_code.fock import (
    ModeLayout,
    SparseOperator,
    annihilation,
    local_operator,
    number,
    spin_operators,
)
from src.utils.errors import DomainError, ResourceError
from src.utils.settings import get_settings

logger = logging.getLogger(__name__)


class ModelParams(BaseModel):
    """Parameters of the bosonized models; rates in units of g"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    g: float = Field(1.0, gt=0)
    N: int = Field(..., ge=1)
    detuning: float = 0.0                     # Delta (strong) or Delta_w (weak)
    chi: float = 0.0
    kappa: float = Field(0.0, ge=0)
    photon_dim: int = Field(2, ge=2)
    atomic_dim: int = Field(2, ge=2)


class SpinModelParams(BaseModel):
    """Parameters of the exact collective-spin models"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    g: float = Field(1.0, gt=0)
    N: int = Field(..., ge=1)
    detuning: float = 0.0
    J_e: float = 0.0
    J_g: float = 0.0
    U_ee: float = 0.0
    U_gg: float = 0.0
    U_eg: float = 0.0
    kappa: float = Field(0.0, ge=0)
    photon_dim: int = Field(2, ge=2)
    cap: int = Field(default_factory=lambda: get_settings().exact_cap, ge=1)   # BECSIM_EXACT_CAP

    @model_validator(mode="after")
    def _equal_tunneling(self):
        # the collective-spin form of the strong-tunneling model assumes J_e = J_g
        if self.J_e != self.J_g:
            raise ValueError("exact spin models require J_e == J_g")
        return self

    @property
    def delta(self) -> float:
        return (self.U_ee - self.U_gg) * self.N / 2

    @property
    def chi(self) -> float:
        return self.U_ee + self.U_gg - 2 * self.U_eg


# ---------------------------------------------------------------------------
#  Layout helpers
# ---------------------------------------------------------------------------
def default_truncation(initial_excitations: int, chi: float = 0.0) -> int:
    """
    Per-mode dimension that makes the truncated dynamics exact when chi = 0:
    photon decay never raises the total excitation number. Two guard levels
    are added otherwise.
    """
    if initial_excitations < 0:
        raise DomainError(f"initial excitation count must be non-negative, got {initial_excitations}")
    dim = initial_excitations + 1
    if chi != 0:
        dim += 2
    return max(dim, 2)


def strong_layout(params: ModelParams) -> ModeLayout:
    return ModeLayout.of(("a", params.photon_dim), ("b", params.atomic_dim))


def weak_layout(params: ModelParams) -> ModeLayout:
    return ModeLayout.of(("a", params.photon_dim), ("c", params.atomic_dim), ("d", params.atomic_dim))


def _require_labels(layout: ModeLayout, expected: Tuple[str, ...]):
    if layout.labels != expected:
        raise DomainError(f"layout must have modes {list(expected)}, got {list(layout.labels)}")


def total_excitation_operator(layout: ModeLayout) -> SparseOperator:
    total = number(layout, layout.labels[0])
    for label in layout.labels[1:]:
        total = total + number(layout, label)
    return total


def photon_collapse(params, layout: ModeLayout) -> List[Tuple[SparseOperator, float]]:
    """The single zero-temperature loss channel: a at rate kappa"""
    return [(annihilation(layout, "a"), float(params.kappa))]


# ---------------------------------------------------------------------------
#  Bosonized effective models
# ---------------------------------------------------------------------------
def build_strong_tunneling(params: ModelParams, layout: Optional[ModeLayout] = None) -> SparseOperator:
    """H = Delta b^+ b + g sqrt(N) (a b^+ + b a^+)"""
    layout = layout or strong_layout(params)
    _require_labels(layout, ("a", "b"))

    a = annihilation(layout, "a")
    b = annihilation(layout, "b")
    coupling = params.g * math.sqrt(params.N)
    exchange = a @ b.adjoint()

    H = params.detuning * number(layout, "b") + coupling * (exchange + exchange.adjoint())
    logger.debug(f"strong-tunneling H built: dim={H.dim}, nnz={H.nnz}, coupling={coupling:.6g}")
    return H


def build_weak_tunneling(params: ModelParams, layout: Optional[ModeLayout] = None) -> SparseOperator:
    """H = Delta_w (n_c + n_d) + g sqrt(N/2) [a (c^+ + d^+) + h.c.] + chi (n_c^2 + n_d^2)"""
    if params.N % 2:
        raise DomainError(f"N must be even for the weak-tunneling split, got N={params.N}")
    layout = layout or weak_layout(params)
    _require_labels(layout, ("a", "c", "d"))

    a = annihilation(layout, "a")
    c = annihilation(layout, "c")
    d = annihilation(layout, "d")
    n_c = number(layout, "c")
    n_d = number(layout, "d")
    coupling = params.g * math.sqrt(params.N / 2)
    exchange = a @ (c.adjoint() + d.adjoint())

    H = params.detuning * (n_c + n_d) + coupling * (exchange + exchange.adjoint())
    if params.chi:
        H = H + params.chi * (n_c @ n_c + n_d @ n_d)
    logger.debug(f"weak-tunneling H built: dim={H.dim}, nnz={H.nnz}, coupling={coupling:.6g}")
    return H


# ---------------------------------------------------------------------------
#  Exact collective-spin models
# ---------------------------------------------------------------------------
def exact_spin_layout(params: SpinModelParams, regime: Literal["strong", "weak"]) -> ModeLayout:
    """
    Photon mode plus one (strong) or two (weak) collective spins. A spin-j
    block is stored as a mode of dimension 2j + 1 whose level k carries k
    excitations (m = k - j).
    """
    if regime == "strong":
        layout = ModeLayout.of(("a", params.photon_dim), ("spin", params.N + 1))
    elif regime == "weak":
        if params.N % 2:
            raise DomainError(f"N must be even for the weak-tunneling split, got N={params.N}")
        per_well = params.N // 2 + 1
        layout = ModeLayout.of(("a", params.photon_dim), ("L", per_well), ("R", per_well))
    else:
        raise DomainError(f"unknown regime '{regime}'")

    if layout.dim > params.cap:
        raise ResourceError(
            f"exact {regime} model needs dimension {layout.dim}, above the cap {params.cap}; "
            "lower N or photon_dim, or raise the cap"
        )
    return layout


def _spin_terms(layout: ModeLayout, label: str, j: float):
    s_plus, s_minus, s_z = spin_operators(j)
    return (
        local_operator(layout, label, s_plus),
        local_operator(layout, label, s_minus),
        local_operator(layout, label, s_z),
    )


def build_exact_spin_strong(params: SpinModelParams) -> SparseOperator:
    """H = Delta S_z + g (a S_+ + a^+ S_-) on photon x spin-N/2"""
    layout = exact_spin_layout(params, "strong")
    a = annihilation(layout, "a")
    s_plus, s_minus, s_z = _spin_terms(layout, "spin", params.N / 2)

    H = params.detuning * s_z + params.g * (a @ s_plus + a.adjoint() @ s_minus)
    logger.debug(f"exact strong spin model built: N={params.N}, dim={H.dim}")
    return H


def build_exact_spin_weak(params: SpinModelParams) -> SparseOperator:
    """
    H = sum_{j=L,R} (Delta + delta) S_jz + g (a S_j+ + h.c.) + chi S_jz^2

    with delta = (U_ee - U_gg) N / 2 and chi = U_ee + U_gg - 2 U_eg. Each well
    holds N/2 atoms, i.e. a spin of length N/4.
    """
    layout = exact_spin_layout(params, "weak")
    a = annihilation(layout, "a")
    j = params.N / 4

    H = SparseOperator(sp.csr_matrix((layout.dim, layout.dim), dtype=complex))
    for well in ("L", "R"):
        s_plus, s_minus, s_z = _spin_terms(layout, well, j)
        H = H + (params.detuning + params.delta) * s_z
        H = H + params.g * (a @ s_plus + a.adjoint() @ s_minus)
        if params.chi:
            H = H + params.chi * (s_z @ s_z)
    logger.debug(f"exact weak spin model built: N={params.N}, dim={H.dim}")
    return H


def spin_excitation_operator(layout: ModeLayout, label: str) -> SparseOperator:
    """S_z + j, the number of excited atoms in a collective spin block"""
    return number(layout, label)


def commutator_norm(H: SparseOperator, other: SparseOperator) -> float:
    comm = H.commutator(other)
    return float(abs(comm.matrix).max()) if comm.nnz else 0.0


def is_hermitian(H: SparseOperator, tol: float = 1e-14) -> bool:
    return H.hermiticity_error() < tol


def bosonized_counterpart(params: SpinModelParams, regime: Literal["strong", "weak"], atomic_dim: int) -> ModelParams:
    """Effective-model parameters matching an exact spin model at zero interaction"""
    detuning = params.detuning
    if regime == "weak":
        # (Delta + delta) S_z + chi S_z^2 with S_z = n - N/4 shifts the linear term by -chi N/2
        detuning = params.detuning + params.delta - params.chi * params.N / 2
    return ModelParams(
        g=params.g,
        N=params.N,
        detuning=detuning,
        chi=params.chi if regime == "weak" else 0.0,
        kappa=params.kappa,
        photon_dim=params.photon_dim,
        atomic_dim=atomic_dim,
    )
