import math

import numpy as np
import pytest

from src.custom_code.fock import basis_index, basis_state
from src.custom_code.lindblad import unitary_evolve
from src.custom_code.models import (
    ModelParams,
    SpinModelParams,
    bosonized_counterpart,
    build_exact_spin_strong,
    build_exact_spin_weak,
    build_strong_tunneling,
    build_weak_tunneling,
    commutator_norm,
    default_truncation,
    exact_spin_layout,
    is_hermitian,
    strong_layout,
    total_excitation_operator,
    weak_layout,
)
from src.utils.errors import DomainError, ResourceError
from src.utils import settings


def _photon_number_series(layout, states):
    photons = layout.occupation_table()[:, layout.position("a")]
    return (np.abs(states) ** 2) @ photons


# ----------------------------------------------------------------------------
# Bosonized models
# ----------------------------------------------------------------------------
@pytest.mark.parametrize("N, expected", [(1, 1.0), (5000, math.sqrt(5000))])
def test_strong_coupling_element(N, expected):
    params = ModelParams(N=N)
    layout = strong_layout(params)
    H = build_strong_tunneling(params, layout).to_dense()
    photon, atom = basis_index(layout, (1, 0)), basis_index(layout, (0, 1))
    assert H[photon, atom] == pytest.approx(expected)
    assert H[atom, photon] == pytest.approx(expected)


@pytest.mark.parametrize("N, expected", [(2, 1.0), (5000, 50.0)])
def test_weak_coupling_elements(N, expected):
    params = ModelParams(N=N)
    layout = weak_layout(params)
    H = build_weak_tunneling(params, layout).to_dense()
    photon = basis_index(layout, (1, 0, 0))
    assert H[photon, basis_index(layout, (0, 1, 0))] == pytest.approx(expected)
    assert H[photon, basis_index(layout, (0, 0, 1))] == pytest.approx(expected)


def test_weak_model_requires_even_N():
    with pytest.raises(DomainError, match="N must be even"):
        build_weak_tunneling(ModelParams(N=3))


def test_wrong_layout_is_domain_error():
    params = ModelParams(N=4)
    with pytest.raises(DomainError):
        build_strong_tunneling(params, weak_layout(params))


@pytest.mark.parametrize(
    "params",
    [
        ModelParams(N=5000, detuning=0.3, photon_dim=3, atomic_dim=3),
        ModelParams(N=40, detuning=-1.0, chi=0.7, photon_dim=4, atomic_dim=4),
    ],
)
def test_models_hermitian_and_conserve_excitation(params):
    for layout, H in (
        (strong_layout(params), build_strong_tunneling(params)),
        (weak_layout(params), build_weak_tunneling(params)),
    ):
        assert is_hermitian(H)
        assert commutator_norm(H, total_excitation_operator(layout)) < 1e-12


@pytest.mark.parametrize("n, chi, expected", [(1, 0.0, 2), (3, 0.0, 4), (1, 0.5, 4), (0, 0.0, 2)])
def test_default_truncation(n, chi, expected):
    assert default_truncation(n, chi) == expected


# ----------------------------------------------------------------------------
# Exact collective-spin models
# ----------------------------------------------------------------------------
def test_exact_strong_spin_one_levels():
    params = SpinModelParams(N=2, photon_dim=2)
    layout = exact_spin_layout(params, "strong")
    assert layout.labels == ("a", "spin")
    H = build_exact_spin_strong(params.model_copy(update={"detuning": 1.0})).to_dense()
    # photon vacuum block is detuning * S_z
    vacuum = [basis_index(layout, (0, k)) for k in range(3)]
    assert np.allclose(np.diag(H)[vacuum], [-1.0, 0.0, 1.0])
    assert is_hermitian(build_exact_spin_strong(params))


def test_exact_weak_chi_term_is_diagonal():
    bare = SpinModelParams(N=4, photon_dim=2)
    interacting = SpinModelParams(N=4, photon_dim=2, U_ee=0.5, U_gg=0.5, U_eg=0.0)
    assert interacting.chi == pytest.approx(1.0)
    assert interacting.delta == pytest.approx(0.0)

    layout = exact_spin_layout(bare, "weak")
    diff = build_exact_spin_weak(interacting).to_dense() - build_exact_spin_weak(bare).to_dense()
    assert np.allclose(diff, np.diag(np.diag(diff)))

    table = layout.occupation_table()
    m_left = table[:, 1] - 1.0
    m_right = table[:, 2] - 1.0
    assert np.allclose(np.diag(diff), m_left ** 2 + m_right ** 2)


def test_exact_model_cap_is_resource_error():
    params = SpinModelParams(N=100, photon_dim=2, cap=50)
    with pytest.raises(ResourceError, match="cap"):
        build_exact_spin_strong(params)


def test_exact_model_cap_comes_from_environment(monkeypatch):
    monkeypatch.setenv("BECSIM_EXACT_CAP", "50")
    monkeypatch.setattr(settings, "_settings", None)
    params = SpinModelParams(N=100, photon_dim=2)
    assert params.cap == 50
    with pytest.raises(ResourceError, match="cap"):
        build_exact_spin_strong(params)


def test_exact_spin_params_require_equal_tunneling():
    with pytest.raises(ValueError):
        SpinModelParams(N=4, J_e=1.0, J_g=0.0)


def _strong_deviation(N: int, excitations: int) -> float:
    exact = SpinModelParams(N=N, photon_dim=excitations + 1)
    exact_layout = exact_spin_layout(exact, "strong")
    H_exact = build_exact_spin_strong(exact)

    bosonic = bosonized_counterpart(exact, "strong", atomic_dim=excitations + 1)
    layout = strong_layout(bosonic)
    H = build_strong_tunneling(bosonic, layout)

    times = np.linspace(0.0, 10 / math.sqrt(N), 201)
    n_exact = _photon_number_series(
        exact_layout, unitary_evolve(basis_state(exact_layout, (0, excitations)), H_exact, times)
    )
    n_bosonic = _photon_number_series(layout, unitary_evolve(basis_state(layout, (0, excitations)), H, times))
    return float(np.max(np.abs(n_exact - n_bosonic)))


@pytest.mark.parametrize("N", [8, 20, 40, 80])
def test_single_excitation_bosonization_is_exact(N):
    assert _strong_deviation(N, 1) < 1e-9


def test_bosonization_error_shrinks_with_atom_number():
    deviations = [_strong_deviation(N, 2) for N in (8, 20, 40, 80)]
    assert all(later < earlier for earlier, later in zip(deviations, deviations[1:]))
    assert deviations[-1] < 0.1


def test_exact_weak_model_matches_bosonized_single_excitation():
    N = 40
    exact = SpinModelParams(N=N, photon_dim=2)
    exact_layout = exact_spin_layout(exact, "weak")
    H_exact = build_exact_spin_weak(exact)

    bosonic = bosonized_counterpart(exact, "weak", atomic_dim=2)
    layout = weak_layout(bosonic)
    H = build_weak_tunneling(bosonic, layout)

    # one exchange period of the bright mode
    times = np.linspace(0.0, 2 * math.pi / math.sqrt(N), 101)
    n_exact = _photon_number_series(exact_layout, unitary_evolve(basis_state(exact_layout, (0, 1, 0)), H_exact, times))
    n_bosonic = _photon_number_series(layout, unitary_evolve(basis_state(layout, (0, 1, 0)), H, times))
    assert np.max(np.abs(n_exact - n_bosonic)) < 1e-9
    assert np.max(n_bosonic) == pytest.approx(0.5, abs=1e-3)
