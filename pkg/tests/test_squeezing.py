import math

import numpy as np
import pytest

from src.custom_code.fock import StateVector
from src.custom_code.lindblad import unitary_evolve
from src.custom_code.squeezing import (
    SqueezingParams,
    asymmetric_occupation_series,
    bogoliubov_frequency,
    bogoliubov_mean_excitation,
    build_squeezing_hamiltonian,
    factorization_coefficients,
    factorization_sweep,
    mean_asymmetric_excitation,
    squeezed_vacuum_state,
)
from src.utils.errors import DomainError, TruncationError


def _vacuum(dim: int) -> StateVector:
    amps = np.zeros(dim)
    amps[0] = 1.0
    return StateVector(amps)


# ----------------------------------------------------------------------------
# Hamiltonian
# ----------------------------------------------------------------------------
def test_parameters_derive_lambdas():
    params = SqueezingParams(J_g=1.0, UggN=10.0)
    assert params.lambda1 == 11.0
    assert params.lambda2 == 5.0
    assert bogoliubov_frequency(params) == pytest.approx(math.sqrt(21))


def test_parameters_are_validated():
    with pytest.raises(ValueError):
        SqueezingParams(J_g=0.0)
    with pytest.raises(ValueError):
        SqueezingParams(UggN=-1.0)


def test_hamiltonian_without_pairing_is_diagonal():
    H = build_squeezing_hamiltonian(SqueezingParams(J_g=1.5, UggN=0.0), 8).to_dense()
    assert np.allclose(H, np.diag(1.5 * np.arange(8)))


def test_pair_creation_matrix_elements():
    params = SqueezingParams(J_g=1.0, UggN=3.0)
    H = build_squeezing_hamiltonian(params, 10).to_dense()
    for n in range(8):
        assert H[n + 2, n] == pytest.approx(params.lambda2 * math.sqrt((n + 1) * (n + 2)))
        assert H[n, n] == pytest.approx(params.lambda1 * n)
    assert np.allclose(H, H.conj().T)


def test_hamiltonian_needs_four_levels():
    with pytest.raises(DomainError):
        build_squeezing_hamiltonian(SqueezingParams(), 3)


def test_vacuum_evolution_keeps_parity():
    params = SqueezingParams(J_g=1.0, UggN=5.0)
    dim = 120
    states = unitary_evolve(_vacuum(dim), build_squeezing_hamiltonian(params, dim), np.linspace(0, 3, 31))
    assert np.max(np.abs(states[:, 1::2]) ** 2) < 1e-12


# ----------------------------------------------------------------------------
# Factorized propagator
# ----------------------------------------------------------------------------
def test_coefficients_at_time_zero():
    lam1, lam2, beta = factorization_coefficients(SqueezingParams(UggN=10.0), 0.0)
    assert lam1 == pytest.approx(1.0)
    assert lam2 == 0
    assert beta == 0


def test_no_pairing_means_no_squeezing():
    for t in (0.3, 1.7, 5.0):
        _, lam2, _ = factorization_coefficients(SqueezingParams(J_g=2.0), t)
        assert lam2 == 0


def test_negative_time_is_domain_error():
    with pytest.raises(DomainError):
        factorization_coefficients(SqueezingParams(), -0.1)


def test_coefficients_match_trigonometric_form():
    params = SqueezingParams(J_g=1.0, UggN=5.0)
    omega = bogoliubov_frequency(params)
    for t in (0.1, 0.8, 2.3):
        lam1, lam2, _ = factorization_coefficients(params, t)
        denom = math.cos(omega * t) + 1j * params.lambda1 / omega * math.sin(omega * t)
        assert lam1 == pytest.approx(denom ** -2)
        assert lam2 == pytest.approx(-2j * params.lambda2 * math.sin(omega * t) / (omega * denom))


def test_sweep_is_continuous_on_dense_grid():
    params = SqueezingParams(J_g=1.0, UggN=10.0)
    sweep = factorization_sweep(params, np.linspace(0.0, 10.0, 400001))
    for column in ("Lambda1", "Lambda2", "Lambda1_quarter"):
        values = sweep[column].to_numpy()
        assert np.max(np.abs(np.diff(values))) < 1e-3
    quarter = sweep["Lambda1_quarter"].to_numpy()
    assert np.allclose(quarter ** 4, sweep["Lambda1"].to_numpy())


def test_sweep_needs_increasing_grid():
    with pytest.raises(DomainError):
        factorization_sweep(SqueezingParams(), [0.0, 2.0, 1.0])


# ----------------------------------------------------------------------------
# Evolved vacuum
# ----------------------------------------------------------------------------
def test_state_at_time_zero_is_vacuum():
    state = squeezed_vacuum_state(SqueezingParams(UggN=10.0), 0.0, 40)
    assert np.allclose(state.amplitudes, _vacuum(40).amplitudes)


def test_state_has_only_even_levels():
    state = squeezed_vacuum_state(SqueezingParams(UggN=5.0), 0.7, 81)
    assert np.all(state.amplitudes[1::2] == 0)
    assert state.is_normalized


@pytest.mark.parametrize("UggN, t", [(1.0, math.pi / (2 * math.sqrt(3))), (5.0, 0.4), (10.0, 2.1)])
def test_state_matches_numeric_evolution(UggN, t):
    params = SqueezingParams(J_g=1.0, UggN=UggN)
    dim = 300
    analytic = squeezed_vacuum_state(params, t, dim)
    numeric = unitary_evolve(_vacuum(dim), build_squeezing_hamiltonian(params, dim), [t])[0]
    assert abs(np.vdot(analytic.amplitudes, numeric)) ** 2 > 1 - 1e-8


def test_small_truncation_raises():
    params = SqueezingParams(J_g=1.0, UggN=10.0)
    t = math.pi / (2 * bogoliubov_frequency(params))
    with pytest.raises(TruncationError) as excinfo:
        squeezed_vacuum_state(params, t, 10)
    assert excinfo.value.dim == 10
    assert excinfo.value.tail_weight > 1e-10


# ----------------------------------------------------------------------------
# Mean excitation
# ----------------------------------------------------------------------------
def test_mean_excitation_zero_at_start():
    assert mean_asymmetric_excitation(SqueezingParams(UggN=10.0), 0.0) == 0.0


def test_series_matches_state_occupation():
    params = SqueezingParams(J_g=1.0, UggN=5.0)
    state = squeezed_vacuum_state(params, 0.9, 200)
    occupation = float(np.sum(np.abs(state.amplitudes) ** 2 * np.arange(200)))
    assert mean_asymmetric_excitation(params, 0.9) == pytest.approx(occupation, abs=1e-8)


@pytest.mark.parametrize("UggN", [1.0, 5.0, 10.0])
def test_series_matches_bogoliubov_solution(UggN):
    params = SqueezingParams(J_g=1.0, UggN=UggN)
    times = np.linspace(0.0, 10.0, 201)
    series = asymmetric_occupation_series(params, times)
    assert np.max(np.abs(series - bogoliubov_mean_excitation(params, times))) < 1e-6


@pytest.mark.parametrize("UggN", [1.0, 5.0, 10.0])
def test_series_matches_numeric_evolution(UggN):
    params = SqueezingParams(J_g=1.0, UggN=UggN)
    dim = 300
    times = np.linspace(0.0, 10.0, 101)
    states = unitary_evolve(_vacuum(dim), build_squeezing_hamiltonian(params, dim), times)
    numeric = (np.abs(states) ** 2) @ np.arange(dim)
    assert np.max(np.abs(asymmetric_occupation_series(params, times) - numeric)) < 1e-6


@pytest.mark.parametrize("UggN, peak", [(1.0, 1 / 3), (10.0, 100 / 21)])
def test_peak_occupation(UggN, peak):
    params = SqueezingParams(J_g=1.0, UggN=UggN)
    t_peak = math.pi / (2 * bogoliubov_frequency(params))
    assert mean_asymmetric_excitation(params, t_peak) == pytest.approx(peak, abs=1e-6)


@pytest.mark.parametrize("UggN", [1.0, 5.0, 10.0])
def test_occupation_period(UggN):
    params = SqueezingParams(J_g=1.0, UggN=UggN)
    period = math.pi / bogoliubov_frequency(params)
    for t in (0.13, 0.5, 1.1):
        assert mean_asymmetric_excitation(params, t + period) == pytest.approx(
            mean_asymmetric_excitation(params, t), abs=1e-8
        )

    # neighbouring maxima on a fine grid are one period apart
    times = np.linspace(0.0, 2.5 * period, 5001)
    values = asymmetric_occupation_series(params, times)
    first = int(np.argmax(values[: len(times) // 2]))
    second = first + int(np.argmax(values[first + 20:first + 20 + len(times) // 2])) + 20
    assert (times[second] - times[first]) == pytest.approx(period, rel=2e-3)
