"""
Zero-temperature master equation with photon loss.

    drho/dt = -i[H, rho] + sum_k (gamma_k / 2)(2 L_k rho L_k^+ - L_k^+ L_k rho - rho L_k^+ L_k)

The density matrix is kept dense and integrated with an adaptive embedded
Runge-Kutta pair from scipy; operators stay sparse. Time is in units of 1/g.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd
import scipy.linalg as la
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from src.custom_code.fock import (
    DensityMatrix,
    ModeLayout,
    SparseOperator,
    StateVector,
    embed_state,
    max_excitation,
    restrict_state,
    restrict_to_excitation_sector,
)
from src.utils.errors import (
    ConvergenceError,
    DegenerateSteadyStateError,
    DomainError,
    IntegrationError,
    ResourceError,
)

logger = logging.getLogger(__name__)

Collapse = List[Tuple[SparseOperator, float]]

DEFAULT_REL_TOL = 1e-8
DEFAULT_ABS_TOL = 1e-10
STEADY_TOL = 1e-9
STEADY_REL_TOL = 1e-10
STEADY_T_MAX = 50.0
LEAKAGE_TOL = 1e-6
MONOTONICITY_TOL = 1e-9
NULLSPACE_DIM_CAP = 40
KERNEL_RCOND = 1e-10
SUPPORTED_METHODS = ("DOP853", "RK45")


# ---------------------------------------------------------------------------
#  Data classes
# ---------------------------------------------------------------------------
@dataclass
class EvolutionSpec:
    hamiltonian: SparseOperator
    collapse: Collapse
    t_final: float
    n_samples: int = 400
    rel_tol: float = DEFAULT_REL_TOL
    abs_tol: float = DEFAULT_ABS_TOL
    method: str = "DOP853"
    layout: Optional[ModeLayout] = None
    sector_restrict: bool = False
    store_states: bool = False

    def __post_init__(self):
        if not self.t_final > 0:
            raise DomainError(f"t_final must be positive, got {self.t_final}")
        if self.n_samples < 2:
            raise DomainError(f"n_samples must be at least 2, got {self.n_samples}")
        if self.method not in SUPPORTED_METHODS:
            raise DomainError(f"integrator '{self.method}' not supported; choose from {list(SUPPORTED_METHODS)}")
        _check_collapse(self.hamiltonian, self.collapse)
        if self.layout is not None and self.layout.dim != self.hamiltonian.dim:
            raise DomainError(
                f"layout dimension {self.layout.dim} does not match Hamiltonian dimension {self.hamiltonian.dim}"
            )
        if self.sector_restrict and self.layout is None:
            raise DomainError("sector_restrict needs the mode layout")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_samples)


@dataclass
class Diagnostics:
    trace_drift: float = 0.0
    min_eigenvalue: float = 1.0
    hermiticity_error: float = 0.0
    leakage: float = 0.0
    excitation_increase: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "trace_drift": self.trace_drift,
            "min_eigenvalue": self.min_eigenvalue,
            "hermiticity_error": self.hermiticity_error,
            "leakage": self.leakage,
            "excitation_increase": self.excitation_increase,
            "warnings": list(self.warnings),
        }


@dataclass
class Trajectory:
    times: np.ndarray
    series: Dict[str, np.ndarray]
    final_state: DensityMatrix
    diagnostics: Diagnostics
    states: Optional[List[DensityMatrix]] = None

    def __post_init__(self):
        for label, values in self.series.items():
            if len(values) != len(self.times):
                raise DomainError(f"series '{label}' has {len(values)} samples, expected {len(self.times)}")

    def to_frame(self, time_label: str = "gt") -> pd.DataFrame:
        frame = pd.DataFrame({time_label: self.times})
        for label, values in self.series.items():
            frame[label] = values
        return frame


# ---------------------------------------------------------------------------
#  Generator
# ---------------------------------------------------------------------------
def _check_collapse(H: SparseOperator, collapse: Collapse):
    for op, rate in collapse:
        if rate < 0:
            raise DomainError(f"collapse rates must be non-negative, got {rate}")
        if op.dim != H.dim:
            raise DomainError(f"collapse operator dimension {op.dim} does not match Hamiltonian dimension {H.dim}")


class _Generator:
    """
    Applies the Lindblad generator to dense matrices.

    The anti-commutator is folded into the non-Hermitian H_eff = H - (i/2) sum gamma L^+ L,
    so drho/dt = -i H_eff rho + h.c. + sum gamma L rho L^+.
    """

    def __init__(self, H: SparseOperator, collapse: Collapse):
        _check_collapse(H, collapse)
        self.dim = H.dim
        h_eff = H.matrix.astype(complex)
        self.jumps: List[Tuple[float, sp.csr_matrix]] = []
        for op, rate in collapse:
            if rate == 0:
                continue
            h_eff = h_eff - 0.5j * rate * (op.matrix.conj().T @ op.matrix)
            self.jumps.append((float(rate), op.matrix))
        self.h_eff = sp.csr_matrix(h_eff)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        coherent = -1j * (self.h_eff @ rho)
        out = coherent + coherent.conj().T
        for rate, L in self.jumps:
            out = out + rate * (L @ (L @ rho).conj().T)
        return out

    def ode(self, t: float, y: np.ndarray) -> np.ndarray:
        return self(y.reshape(self.dim, self.dim)).reshape(-1)


def lindblad_rhs(H: SparseOperator, collapse: Collapse, rho: DensityMatrix) -> DensityMatrix:
    """Time derivative of ``rho``; the result is traceless and not validated as a state"""
    if rho.dim != H.dim:
        raise DomainError(f"dimension mismatch: Hamiltonian {H.dim} vs state {rho.dim}")
    return DensityMatrix(_Generator(H, collapse)(rho.elements), validate=False)


def _integrate(generator: _Generator, rho0: np.ndarray, t_span, t_eval, method, rel_tol, abs_tol):
    sol = solve_ivp(
        generator.ode,
        t_span=t_span,
        y0=rho0.reshape(-1).astype(complex),
        method=method,
        t_eval=t_eval,
        rtol=rel_tol,
        atol=abs_tol,
    )
    if sol.status == -1:
        t_reached = float(sol.t[-1]) if len(sol.t) else float(t_span[0])
        raise IntegrationError(f"integrator failed: {sol.message}", t_reached=t_reached)
    return sol


def _conserves_excitation(H: SparseOperator, layout: ModeLayout) -> bool:
    totals = layout.occupation_table().sum(axis=1)
    coo = H.matrix.tocoo()
    return bool(np.all(totals[coo.row] == totals[coo.col]))


# ---------------------------------------------------------------------------
#  Time evolution
# ---------------------------------------------------------------------------
def evolve(rho0: DensityMatrix, spec: EvolutionSpec, observables: Dict[str, SparseOperator]) -> Trajectory:
    """
    Integrate the master equation from ``rho0`` and sample ``observables`` on
    ``spec.times``. Positivity, trace, Hermiticity, truncation leakage and
    excitation monotonicity are checked at every sample; violations become
    warnings in the diagnostics.
    """
    H = spec.hamiltonian
    if rho0.dim != H.dim:
        raise DomainError(f"dimension mismatch: Hamiltonian {H.dim} vs initial state {rho0.dim}")
    for label, op in observables.items():
        if op.dim != H.dim:
            raise DomainError(f"observable '{label}' has dimension {op.dim}, expected {H.dim}")

    layout = spec.layout
    conserving = layout is not None and _conserves_excitation(H, layout)
    bound = max_excitation(layout, rho0) if conserving else None

    collapse = list(spec.collapse)
    obs = dict(observables)
    state0 = rho0
    index_map = None
    totals = layout.occupation_table().sum(axis=1) if layout is not None else None
    top_level = _top_level_mask(layout, bound) if layout is not None else None

    if spec.sector_restrict:
        if not conserving:
            raise DomainError("sector restriction requires a Hamiltonian that conserves total excitation")
        H, index_map = restrict_to_excitation_sector(layout, H, bound)
        collapse = [(restrict_to_excitation_sector(layout, op, bound)[0], rate) for op, rate in collapse]
        obs = {label: restrict_to_excitation_sector(layout, op, bound)[0] for label, op in obs.items()}
        state0 = restrict_state(rho0, index_map)
        totals = totals[index_map]
        top_level = top_level[index_map]
        logger.debug(f"evolving in excitation sector <= {bound}: dim {H.dim} of {spec.hamiltonian.dim}")

    generator = _Generator(H, collapse)
    times = spec.times
    logger.debug(f"integrating: dim={H.dim}, t_final={spec.t_final}, samples={spec.n_samples}, method={spec.method}")
    sol = _integrate(generator, state0.elements, (0.0, spec.t_final), times, spec.method, spec.rel_tol, spec.abs_tol)

    d = H.dim
    rhos = sol.y.T.reshape(-1, d, d)
    series = {
        label: np.array([np.real(op.matrix.multiply(rho.T).sum()) for rho in rhos])
        for label, op in obs.items()
    }

    diagnostics = _diagnose(rhos, totals, top_level, conserving)
    for message in diagnostics.warnings:
        logger.warning(message)

    def _lift(rho: np.ndarray) -> DensityMatrix:
        state = DensityMatrix(rho, validate=False)
        if index_map is not None:
            state = embed_state(state, index_map, spec.hamiltonian.dim)
        return state

    states = [_lift(rho) for rho in rhos] if spec.store_states else None
    return Trajectory(
        times=times,
        series=series,
        final_state=_lift(rhos[-1]),
        diagnostics=diagnostics,
        states=states,
    )


def _top_level_mask(layout: ModeLayout, bound: Optional[int]) -> np.ndarray:
    # a mode whose top level is at or above the excitation bound cannot leak
    table = layout.occupation_table()
    mask = np.zeros(layout.dim, dtype=bool)
    for pos, dim in enumerate(layout.dims):
        if bound is None or dim - 1 < bound:
            mask |= table[:, pos] == dim - 1
    return mask


def _diagnose(rhos: np.ndarray, totals, top_level, conserving: bool) -> Diagnostics:
    diag = Diagnostics()
    excitations = []
    for rho in rhos:
        diag.trace_drift = max(diag.trace_drift, abs(float(np.real(np.trace(rho))) - 1.0))
        diag.hermiticity_error = max(diag.hermiticity_error, float(np.max(np.abs(rho - rho.conj().T))))
        diag.min_eigenvalue = min(diag.min_eigenvalue, float(la.eigvalsh(0.5 * (rho + rho.conj().T))[0]))
        if totals is not None:
            populations = np.real(np.diag(rho))
            diag.leakage = max(diag.leakage, float(populations[top_level].sum()))
            excitations.append(float(populations @ totals))

    if conserving and len(excitations) > 1:
        diag.excitation_increase = max(0.0, float(np.max(np.diff(excitations))))

    if diag.trace_drift > 1e-8:
        diag.warnings.append(f"trace drift {diag.trace_drift:.3e} exceeds 1e-8; tighten the tolerances")
    if diag.hermiticity_error > 1e-10:
        diag.warnings.append(f"Hermiticity error {diag.hermiticity_error:.3e} exceeds 1e-10")
    if diag.min_eigenvalue < -1e-8:
        diag.warnings.append(f"positivity violated: min eigenvalue {diag.min_eigenvalue:.3e}")
    if diag.leakage > LEAKAGE_TOL:
        diag.warnings.append(
            f"truncation leakage: top-level population {diag.leakage:.3e} > {LEAKAGE_TOL}; increase the mode dimensions"
        )
    if diag.excitation_increase > MONOTONICITY_TOL:
        diag.warnings.append(f"total excitation increased by {diag.excitation_increase:.3e} between samples")
    return diag


# ---------------------------------------------------------------------------
#  Superoperator
# ---------------------------------------------------------------------------
def liouvillian(H: SparseOperator, collapse: Collapse) -> np.ndarray:
    """
    Dense superoperator acting on row-major vec(rho), i.e. vec(A rho B) = (A kron B^T) vec(rho).
    """
    _check_collapse(H, collapse)
    eye = sp.identity(H.dim, dtype=complex, format="csr")
    L = -1j * (sp.kron(H.matrix, eye) - sp.kron(eye, H.matrix.T))
    for op, rate in collapse:
        A = op.matrix
        AdA = A.conj().T @ A
        L = L + rate * (sp.kron(A, A.conj()) - 0.5 * sp.kron(AdA, eye) - 0.5 * sp.kron(eye, AdA.T))
    return L.toarray()


def liouvillian_kernel(H: SparseOperator, collapse: Collapse) -> List[DensityMatrix]:
    if H.dim > NULLSPACE_DIM_CAP:
        raise ResourceError(
            f"dense Liouvillian for dimension {H.dim} exceeds the null-space cap {NULLSPACE_DIM_CAP}; "
            "use method='evolve' or restrict the excitation sector"
        )
    kernel = la.null_space(liouvillian(H, collapse), rcond=KERNEL_RCOND)
    return [DensityMatrix(kernel[:, k].reshape(H.dim, H.dim), validate=False) for k in range(kernel.shape[1])]


# ---------------------------------------------------------------------------
#  Steady states
# ---------------------------------------------------------------------------
def steady_state(
    H: SparseOperator,
    collapse: Collapse,
    method: str = "evolve",
    rho0: Optional[DensityMatrix] = None,
    tol: float = STEADY_TOL,
    t_max: float = STEADY_T_MAX,
    chunk: float = 1.0,
    rel_tol: Optional[float] = None,
    abs_tol: Optional[float] = None,
) -> DensityMatrix:
    """
    ``evolve`` integrates ``rho0`` in chunks until ||drho/dt||_F < tol, so it
    resolves initial-condition dependent steady states. Integrator tolerances
    default to STEADY_REL_TOL and tol / 1000; looser ones stall the residual
    above tol. ``nullspace`` returns the unique kernel state and raises
    DegenerateSteadyStateError otherwise.
    """
    if method == "nullspace":
        basis = liouvillian_kernel(H, collapse)
        if len(basis) != 1:
            raise DegenerateSteadyStateError(basis)
        raw = basis[0].elements
        rho = raw / np.trace(raw)
        return DensityMatrix(0.5 * (rho + rho.conj().T))

    if method != "evolve":
        raise DomainError(f"unknown steady-state method '{method}'; use 'evolve' or 'nullspace'")
    if rho0 is None:
        raise DomainError("method='evolve' needs an initial state rho0")
    if rho0.dim != H.dim:
        raise DomainError(f"dimension mismatch: Hamiltonian {H.dim} vs initial state {rho0.dim}")

    rel_tol = STEADY_REL_TOL if rel_tol is None else rel_tol
    abs_tol = tol * 1e-3 if abs_tol is None else abs_tol
    generator = _Generator(H, collapse)
    rho = rho0.elements
    t = 0.0
    residual = float(np.linalg.norm(generator(rho)))
    while residual >= tol:
        if t >= t_max:
            hint = ""
            if not generator.jumps:
                hint = "no collapse channel has a positive rate, so the dynamics is unitary and cannot relax"
            raise ConvergenceError(residual, t_max, hint=hint)
        t_next = min(t + chunk, t_max)
        sol = _integrate(generator, rho, (t, t_next), [t_next], "DOP853", rel_tol, abs_tol)
        rho = sol.y[:, -1].reshape(H.dim, H.dim)
        t = t_next
        residual = float(np.linalg.norm(generator(rho)))
        logger.debug(f"steady-state search: gt={t:.3g}, residual={residual:.3e}")

    logger.info(f"steady state reached at gt={t:.3g} (residual {residual:.2e})")
    return DensityMatrix(0.5 * (rho + rho.conj().T))


# ---------------------------------------------------------------------------
#  Oracles
# ---------------------------------------------------------------------------
def sinhc(z) -> np.ndarray:
    """sinh(z) / z, equal to 1 at z = 0"""
    return np.sinc(1j * np.asarray(z, dtype=complex) / np.pi)


def damped_exchange_solution(coupling: float, kappa: float, times: Sequence[float]) -> Dict[str, np.ndarray]:
    """
    Populations for one excitation starting in the atomic mode, exchanged with
    a resonant photon mode that decays at rate ``kappa``:

        ds/dt = -i coupling alpha,  dalpha/dt = -i coupling s - (kappa/2) alpha

    Returns {"a": |alpha|^2, "b": |s|^2}. Under-, critically and over-damped
    cases share one complex-frequency expression.
    """
    if kappa < 0:
        raise DomainError(f"kappa must be non-negative, got {kappa}")
    t = np.asarray(times, dtype=float)
    mu = np.sqrt(complex(kappa ** 2 / 16 - coupling ** 2))
    envelope = np.exp(-kappa * t / 4)
    shc = t * sinhc(mu * t)
    s = envelope * (np.cosh(mu * t) + (kappa / 4) * shc)
    alpha = -1j * coupling * envelope * shc
    return {"a": np.abs(alpha) ** 2, "b": np.abs(s) ** 2}


def unitary_evolve(psi0: StateVector, H: SparseOperator, times: Sequence[float]) -> np.ndarray:
    """Rows are exp(-iHt) psi0 on a uniform time grid"""
    times = np.asarray(times, dtype=float)
    if psi0.dim != H.dim:
        raise DomainError(f"dimension mismatch: Hamiltonian {H.dim} vs state {psi0.dim}")
    if len(times) == 1:
        return expm_multiply(-1j * times[0] * H.matrix.tocsc(), psi0.amplitudes)[None, :]
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise DomainError("unitary_evolve needs a uniform time grid")
    return expm_multiply(
        -1j * H.matrix.tocsc(),
        psi0.amplitudes,
        start=float(times[0]),
        stop=float(times[-1]),
        num=len(times),
        endpoint=True,
    )


def peak_time(times: np.ndarray, values: np.ndarray) -> float:
    return float(times[int(np.argmax(values))])


def settling_time(times: np.ndarray, values: np.ndarray, rel: float = 0.01) -> float:
    """
    First sample time after which |v - v_final| stays below rel * |v_final|.
    A zero final value counts as settled once the samples are exactly zero.
    """
    final = values[-1]
    if final == 0:
        outside = values != 0
    else:
        outside = np.abs(values - final) >= rel * abs(final)
    if not outside.any():
        return float(times[0])
    last = int(np.flatnonzero(outside)[-1])
    if last + 1 >= len(times):
        return math.inf
    return float(times[last + 1])
