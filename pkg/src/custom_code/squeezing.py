"""
Pair creation in the asymmetric atomic mode f.

    H = lambda1 f^+ f + lambda2 (f^+2 + f^2),  lambda1 = J_g + U_gg N,  lambda2 = U_gg N / 2

The evolution operator factorizes into a pair-creation exponential, a
phase in f^+ f and a pair-annihilation exponential, so the evolved vacuum
is a squeezed vacuum with closed-form amplitudes.
With omega = sqrt(lambda1^2 - 4 lambda2^2):

    Lambda1^{1/4} = (cos wt + i (lambda1/w) sin wt)^{-1/2}
    Lambda2       = -2i lambda2 sin wt / (w cos wt + i lambda1 sin wt)
    <f^+ f>(t)    = (4 lambda2^2 / w^2) sin^2(wt)

Times are in units of 1/J_g when J_g = 1.
"""

from typing import Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import gammaln

from src.custom_code.fock import ModeLayout, SparseOperator, StateVector, ladder_matrix
from src.custom_code.lindblad import sinhc
from src.utils.errors import DomainError, NumericError, TruncationError

logger = logging.getLogger(__name__)

SERIES_REL_TOL = 1e-12
SERIES_MAX_TERMS = 500
TAIL_TOL = 1e-10
MIN_DIM = 4


class SqueezingParams(BaseModel):
    """J_g and U_gg N; both in the same frequency unit"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    J_g: float = Field(1.0, gt=0)
    UggN: float = Field(0.0, ge=0)

    @property
    def lambda1(self) -> float:
        return self.J_g + self.UggN

    @property
    def lambda2(self) -> float:
        return self.UggN / 2


def squeezing_layout(dim: int) -> ModeLayout:
    return ModeLayout.of(("f", dim))


def build_squeezing_hamiltonian(params: SqueezingParams, dim: int) -> SparseOperator:
    if dim < MIN_DIM:
        raise DomainError(f"squeezing Hamiltonian needs dim >= {MIN_DIM}, got {dim}")
    f = ladder_matrix(dim).astype(complex)
    fd = f.conj().T
    pair = fd @ fd
    H = params.lambda1 * (fd @ f) + params.lambda2 * (pair + pair.conj().T)
    return SparseOperator(sp.csr_matrix(H))


# ---------------------------------------------------------------------------
#  Factorized propagator
# ---------------------------------------------------------------------------
def _denominator(params: SqueezingParams, t):
    """
    (D, N, beta) with Lambda1 = D^-2 and Lambda2 = N / D, where
    D = cosh(b) - (l1'/2) sinh(b)/b, N = l2' sinh(b)/b and l' = -2i lambda t.
    Works elementwise on arrays of times.
    """
    t = np.asarray(t, dtype=float)
    l1p = -2j * params.lambda1 * t
    l2p = -2j * params.lambda2 * t
    beta = np.sqrt(l1p ** 2 / 4 - l2p ** 2)
    shc = sinhc(beta)
    return np.cosh(beta) - (l1p / 2) * shc, l2p * shc, beta


def factorization_coefficients(params: SqueezingParams, t: float) -> Tuple[complex, complex, complex]:
    """(Lambda1, Lambda2, beta) at time t; beta is the principal root of beta^2"""
    if t < 0:
        raise DomainError(f"time must be non-negative, got {t}")
    denom, numer, beta = (complex(v) for v in _denominator(params, t))
    if abs(denom) < 1e-14:
        raise NumericError(f"vanishing factorization denominator at t={t} (|D| = {abs(denom):.3e}, beta = {beta})")
    return denom ** -2, numer / denom, beta


def factorization_sweep(params: SqueezingParams, times: Sequence[float]) -> pd.DataFrame:
    """
    Lambda1, Lambda2 and beta over an increasing grid, plus Lambda1^{1/4}
    with its sign chosen to stay continuous from one sample to the next.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise DomainError("factorization_sweep needs a non-negative, increasing time grid")
    denom, numer, beta = _denominator(params, times)
    if np.any(np.abs(denom) < 1e-14):
        raise NumericError("vanishing factorization denominator in sweep")

    quarter = denom ** -0.5
    # principal roots flip sign where D crosses the negative real axis; undo the flips
    flips = np.abs(quarter[1:] - quarter[:-1]) > np.abs(quarter[1:] + quarter[:-1])
    signs = np.concatenate([[1.0], np.cumprod(np.where(flips, -1.0, 1.0))])
    return pd.DataFrame({
        "t": times,
        "Lambda1": denom ** -2,
        "Lambda2": numer / denom,
        "beta": beta,
        "Lambda1_quarter": signs * quarter,
    })


# ---------------------------------------------------------------------------
#  Evolved vacuum
# ---------------------------------------------------------------------------
def squeezed_vacuum_state(params: SqueezingParams, t: float, dim: int) -> StateVector:
    """exp(-iHt)|0>: amplitudes Lambda1^{1/4} sqrt((2n)!)/n! (Lambda2/2)^n on level 2n"""
    if dim < 1:
        raise DomainError(f"dim must be positive, got {dim}")
    lam1, lam2, _ = factorization_coefficients(params, t)
    prefactor = lam1 ** 0.25

    amps = np.zeros(dim, dtype=complex)
    n = np.arange((dim + 1) // 2)
    if lam2 == 0:
        amps[0] = prefactor
    else:
        log_mag = 0.5 * gammaln(2 * n + 1) - gammaln(n + 1) + n * math.log(abs(lam2) / 2)
        amps[2 * n] = prefactor * np.exp(log_mag + 1j * n * np.angle(lam2))

    tail = max(0.0, 1.0 - float(np.sum(np.abs(amps) ** 2)))
    if tail > TAIL_TOL:
        raise TruncationError(f"squeezed vacuum at t={t} does not fit", tail_weight=tail, dim=dim)
    logger.debug(f"squeezed vacuum at t={t:.4g}: tail weight {tail:.2e} at dim {dim}")
    return StateVector(amps)


def mean_asymmetric_excitation(params: SqueezingParams, t: float) -> float:
    """
    <f^+ f> = |Lambda1|^{1/2} sum_{n>=1} 2n C(2n, n) (|Lambda2|^2 / 4)^n,
    summed until a term drops below SERIES_REL_TOL of the running total.
    """
    lam1, lam2, _ = factorization_coefficients(params, t)
    modulus = abs(lam2)
    if modulus >= 1:
        raise NumericError(f"<f^+ f> series diverges at t={t}: |Lambda2| = {modulus:.6g} >= 1")
    if modulus == 0:
        return 0.0

    x = modulus ** 2 / 4
    binom_power = 2 * x          # C(2n, n) x^n at n = 1
    total = 0.0
    for n in range(1, SERIES_MAX_TERMS + 1):
        term = 2 * n * binom_power
        total += term
        if term < SERIES_REL_TOL * total:
            return float(math.sqrt(abs(lam1)) * total)
        binom_power *= 2 * (2 * n + 1) / (n + 1) * x
    raise NumericError(f"<f^+ f> series not converged after {SERIES_MAX_TERMS} terms at t={t} (|Lambda2| = {modulus:.6g})")


def asymmetric_occupation_series(params: SqueezingParams, times: Sequence[float]) -> np.ndarray:
    return np.array([mean_asymmetric_excitation(params, float(t)) for t in times])


# ---------------------------------------------------------------------------
#  Bogoliubov oracle
# ---------------------------------------------------------------------------
def bogoliubov_frequency(params: SqueezingParams) -> float:
    return math.sqrt(params.lambda1 ** 2 - 4 * params.lambda2 ** 2)


def bogoliubov_mean_excitation(params: SqueezingParams, t):
    """(4 lambda2^2 / w^2) sin^2(w t); peak 4 lambda2^2 / (lambda1^2 - 4 lambda2^2), period pi / w"""
    omega = bogoliubov_frequency(params)
    return 4 * params.lambda2 ** 2 / omega ** 2 * np.sin(omega * np.asarray(t, dtype=float)) ** 2
