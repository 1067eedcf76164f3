import math

import numpy as np
import pytest
import scipy.sparse as sp

from src.custom_code.darkstates import dark_mixture_state, dark_state_weak
from src.custom_code.fock import (
    DensityMatrix,
    ModeLayout,
    SparseOperator,
    annihilation,
    basis_state,
    fidelity,
    number,
    trace_distance,
)
from src.custom_code.lindblad import (
    EvolutionSpec,
    damped_exchange_solution,
    evolve,
    lindblad_rhs,
    liouvillian,
    liouvillian_kernel,
    settling_time,
    steady_state,
    unitary_evolve,
)
from src.custom_code.models import (
    ModelParams,
    build_strong_tunneling,
    build_weak_tunneling,
    photon_collapse,
    strong_layout,
    total_excitation_operator,
    weak_layout,
)
from src.utils.errors import (
    ConvergenceError,
    DegenerateSteadyStateError,
    DomainError,
    ResourceError,
)


def _zero(dim: int) -> SparseOperator:
    return SparseOperator(sp.csr_matrix((dim, dim), dtype=complex))


def _decay_system():
    layout = ModeLayout.of(("a", 2))
    return layout, _zero(2), [(annihilation(layout, "a"), 1.0)]


# ----------------------------------------------------------------------------
# Generator
# ----------------------------------------------------------------------------
def test_rhs_pure_decay():
    layout, H, collapse = _decay_system()
    rho = DensityMatrix.from_pure(basis_state(layout, (1,)))
    assert np.allclose(lindblad_rhs(H, collapse, rho).elements, np.diag([1.0, -1.0]))


def test_rhs_is_traceless(weak_system):
    layout, H, collapse = weak_system
    rho = DensityMatrix.maximally_mixed(layout.dim)
    assert abs(np.trace(lindblad_rhs(H, collapse, rho).elements)) < 1e-12


def test_rhs_dimension_mismatch():
    _, H, collapse = _decay_system()
    with pytest.raises(DomainError):
        lindblad_rhs(H, collapse, DensityMatrix.maximally_mixed(3))


@pytest.mark.parametrize("n", range(6))
def test_dark_states_are_stationary(n):
    params = ModelParams(N=5000, kappa=100.0, photon_dim=2, atomic_dim=6)
    layout = weak_layout(params)
    H = build_weak_tunneling(params, layout)
    rho = dark_state_weak(n, layout).density_matrix()
    assert lindblad_rhs(H, photon_collapse(params, layout), rho).frobenius_norm() < 1e-12


def test_strong_vacuum_is_stationary():
    params = ModelParams(N=5000, kappa=100.0)
    layout = strong_layout(params)
    rho = DensityMatrix.from_pure(basis_state(layout, (0, 0)))
    H = build_strong_tunneling(params, layout)
    assert lindblad_rhs(H, photon_collapse(params, layout), rho).frobenius_norm() < 1e-12


def test_liouvillian_matches_rhs(random_rho, weak_system):
    layout, H, collapse = weak_system
    rho = random_rho(layout.dim)
    via_superoperator = liouvillian(H, collapse) @ rho.elements.reshape(-1)
    assert np.allclose(via_superoperator, lindblad_rhs(H, collapse, rho).elements.reshape(-1), atol=1e-9)


def test_spec_validation():
    _, H, collapse = _decay_system()
    with pytest.raises(DomainError):
        EvolutionSpec(hamiltonian=H, collapse=collapse, t_final=0.0)
    with pytest.raises(DomainError):
        EvolutionSpec(hamiltonian=H, collapse=collapse, t_final=1.0, n_samples=1)
    with pytest.raises(DomainError):
        EvolutionSpec(hamiltonian=H, collapse=[(collapse[0][0], -1.0)], t_final=1.0)
    with pytest.raises(DomainError):
        EvolutionSpec(hamiltonian=H, collapse=collapse, t_final=1.0, method="LSODA")


# ----------------------------------------------------------------------------
# Time evolution
# ----------------------------------------------------------------------------
def test_exponential_decay():
    layout, H, collapse = _decay_system()
    spec = EvolutionSpec(hamiltonian=H, collapse=collapse, t_final=5.0, n_samples=101, layout=layout)
    rho0 = DensityMatrix.from_pure(basis_state(layout, (1,)))
    traj = evolve(rho0, spec, {"n_a": number(layout, "a")})
    assert np.allclose(traj.series["n_a"], np.exp(-traj.times), rtol=1e-6, atol=1e-9)
    assert list(traj.to_frame().columns) == ["gt", "n_a"]


@pytest.mark.parametrize("N", [5000, 10000, 20000])
def test_strong_single_excitation_matches_closed_form(N):
    params = ModelParams(N=N, kappa=100.0)
    layout = strong_layout(params)
    spec = EvolutionSpec(
        hamiltonian=build_strong_tunneling(params, layout),
        collapse=photon_collapse(params, layout),
        t_final=1.0,
        layout=layout,
    )
    rho0 = DensityMatrix.from_pure(basis_state(layout, (0, 1)))
    traj = evolve(rho0, spec, {"a": number(layout, "a"), "b": number(layout, "b")})
    oracle = damped_exchange_solution(math.sqrt(N), 100.0, traj.times)
    for label in ("a", "b"):
        assert np.max(np.abs(traj.series[label] - oracle[label])) < 1e-6
        assert traj.series[label][-1] < 1e-3


@pytest.mark.parametrize("coupling, kappa", [(1.0, 4.0), (1.0, 10.0), (1.0, 0.0)])
def test_closed_form_covers_all_damping_regimes(coupling, kappa):
    # critically damped, overdamped and lossless exchange against integration
    params = ModelParams(N=1, g=coupling, kappa=kappa)
    layout = strong_layout(params)
    spec = EvolutionSpec(
        hamiltonian=build_strong_tunneling(params, layout),
        collapse=photon_collapse(params, layout),
        t_final=4.0,
        n_samples=81,
        layout=layout,
    )
    traj = evolve(DensityMatrix.from_pure(basis_state(layout, (0, 1))), spec, {"b": number(layout, "b")})
    oracle = damped_exchange_solution(coupling, kappa, traj.times)
    assert np.max(np.abs(traj.series["b"] - oracle["b"])) < 1e-6


def test_weak_single_excitation_relaxes_to_quarter(weak_system):
    layout, H, collapse = weak_system
    spec = EvolutionSpec(hamiltonian=H, collapse=collapse, t_final=1.0, layout=layout)
    rho0 = DensityMatrix.from_pure(basis_state(layout, (0, 1, 0)))
    traj = evolve(rho0, spec, {label: number(layout, label) for label in ("a", "c", "d")})
    assert traj.series["a"][-1] < 1e-3
    assert traj.series["c"][-1] == pytest.approx(0.25, abs=1e-3)
    assert traj.series["d"][-1] == pytest.approx(0.25, abs=1e-3)


def test_evolution_hygiene(weak_system):
    layout, H, collapse = weak_system
    spec = EvolutionSpec(hamiltonian=H, collapse=collapse, t_final=1.0, layout=layout)
    rho0 = DensityMatrix.from_pure(basis_state(layout, (0, 1, 0)))
    traj = evolve(rho0, spec, {"excitation": total_excitation_operator(layout)})
    diag = traj.diagnostics
    assert diag.trace_drift < 1e-8
    assert diag.hermiticity_error < 1e-10
    assert diag.min_eigenvalue > -1e-8
    assert diag.excitation_increase <= 1e-9
    assert diag.warnings == []
    assert np.all(np.diff(traj.series["excitation"]) <= 1e-9)


def test_evolution_is_deterministic(weak_system):
    layout, H, collapse = weak_system
    spec = EvolutionSpec(hamiltonian=H, collapse=collapse, t_final=0.5, n_samples=50, layout=layout)
    rho0 = DensityMatrix.from_pure(basis_state(layout, (0, 1, 0)))
    first = evolve(rho0, spec, {"n_c": number(layout, "c")})
    second = evolve(rho0, spec, {"n_c": number(layout, "c")})
    assert np.array_equal(first.series["n_c"], second.series["n_c"])


def test_sector_restriction_matches_full_space():
    params = ModelParams(N=5000, kappa=100.0, photon_dim=3, atomic_dim=3)
    layout = weak_layout(params)
    H = build_weak_tunneling(params, layout)
    observables = {label: number(layout, label) for label in ("a", "c", "d")}
    rho0 = DensityMatrix.from_pure(basis_state(layout, (0, 2, 0)))

    def run(restrict: bool):
        spec = EvolutionSpec(
            hamiltonian=H,
            collapse=photon_collapse(params, layout),
            t_final=0.2,
            n_samples=41,
            rel_tol=1e-12,
            abs_tol=1e-14,
            layout=layout,
            sector_restrict=restrict,
        )
        return evolve(rho0, spec, observables)

    full, sector = run(False), run(True)
    for label in observables:
        assert np.max(np.abs(full.series[label] - sector.series[label])) < 1e-10
    assert sector.final_state.dim == layout.dim
    assert trace_distance(
        DensityMatrix(full.final_state.elements, validate=False),
        DensityMatrix(sector.final_state.elements, validate=False),
    ) < 1e-9


def test_sector_restriction_needs_layout():
    _, H, collapse = _decay_system()
    with pytest.raises(DomainError, match="layout"):
        EvolutionSpec(hamiltonian=H, collapse=collapse, t_final=1.0, sector_restrict=True)


def test_truncation_leakage_is_reported():
    layout = ModeLayout.of(("a", 2), ("c", 3), ("d", 2))
    params = ModelParams(N=5000, kappa=100.0)
    H = build_weak_tunneling(params, layout)
    spec = EvolutionSpec(hamiltonian=H, collapse=photon_collapse(params, layout), t_final=0.2, layout=layout)
    traj = evolve(DensityMatrix.from_pure(basis_state(layout, (0, 2, 0))), spec, {})
    assert traj.diagnostics.leakage > 1e-6
    assert any("truncation leakage" in w for w in traj.diagnostics.warnings)


def test_stored_states_follow_samples(weak_system):
    layout, H, collapse = weak_system
    spec = EvolutionSpec(hamiltonian=H, collapse=collapse, t_final=0.1, n_samples=11, layout=layout, store_states=True)
    traj = evolve(DensityMatrix.from_pure(basis_state(layout, (0, 1, 0))), spec, {"n_c": number(layout, "c")})
    assert len(traj.states) == 11
    assert np.real(number(layout, "c").expectation(traj.states[-1])) == pytest.approx(traj.series["n_c"][-1])


# ----------------------------------------------------------------------------
# Steady states
# ----------------------------------------------------------------------------
def test_nullspace_strong_steady_state_is_vacuum():
    params = ModelParams(N=5000, kappa=100.0)
    layout = strong_layout(params)
    rho = steady_state(build_strong_tunneling(params, layout), photon_collapse(params, layout), method="nullspace")
    assert fidelity(rho, basis_state(layout, (0, 0))) > 1 - 1e-8


def test_nullspace_weak_steady_state_is_degenerate(weak_system):
    _, H, collapse = weak_system
    with pytest.raises(DegenerateSteadyStateError) as excinfo:
        steady_state(H, collapse, method="nullspace")
    assert len(excinfo.value.basis) > 1
    assert len(liouvillian_kernel(H, collapse)) == len(excinfo.value.basis)


def test_nullspace_cap():
    params = ModelParams(N=50, kappa=1.0, photon_dim=4, atomic_dim=4)
    layout = weak_layout(params)
    with pytest.raises(ResourceError):
        steady_state(build_weak_tunneling(params, layout), photon_collapse(params, layout), method="nullspace")


def test_evolve_steady_state_is_dark_mixture(weak_system):
    layout, H, collapse = weak_system
    rho0 = DensityMatrix.from_pure(basis_state(layout, (0, 1, 0)))
    rho = steady_state(H, collapse, method="evolve", rho0=rho0)
    expected = dark_mixture_state([(0, 0.5), (1, 0.5)], layout)
    assert trace_distance(rho, expected) < 1e-6


@pytest.mark.parametrize("n, weights", [
    (2, [(0, 0.25), (1, 0.5), (2, 0.25)]),
    (3, [(0, 0.125), (1, 0.375), (2, 0.375), (3, 0.125)]),
])
def test_evolve_steady_state_converges_for_several_excitations(n, weights):
    params = ModelParams(N=5000, kappa=100.0, photon_dim=n + 1, atomic_dim=n + 1)
    layout = weak_layout(params)
    rho0 = DensityMatrix.from_pure(basis_state(layout, (0, n, 0)))
    rho = steady_state(build_weak_tunneling(params, layout), photon_collapse(params, layout), rho0=rho0)
    assert trace_distance(rho, dark_mixture_state(weights, layout)) < 1e-8


def test_evolve_steady_state_needs_initial_state(weak_system):
    _, H, collapse = weak_system
    with pytest.raises(DomainError, match="rho0"):
        steady_state(H, collapse, method="evolve")


def test_unitary_dynamics_never_converges(weak_params):
    params = weak_params.model_copy(update={"kappa": 0.0})
    layout = weak_layout(params)
    H = build_weak_tunneling(params, layout)
    rho0 = DensityMatrix.from_pure(basis_state(layout, (0, 1, 0)))
    with pytest.raises(ConvergenceError, match="unitary") as excinfo:
        steady_state(H, photon_collapse(params, layout), rho0=rho0, t_max=2.0)
    assert excinfo.value.residual > 1e-9


# ----------------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------------
def test_unitary_evolve_requires_uniform_grid():
    layout, H, _ = _decay_system()
    with pytest.raises(DomainError, match="uniform"):
        unitary_evolve(basis_state(layout, (0,)), H, [0.0, 0.1, 0.5])


def test_settling_time():
    times = np.linspace(0.0, 1.0, 11)
    values = np.array([0.0, 2.0, 1.5, 1.2, 1.05, 1.005, 1.0, 1.0, 1.0, 1.0, 1.0])
    assert settling_time(times, values) == pytest.approx(0.5)


def test_settling_time_of_zero_final_value():
    times = np.linspace(0.0, 1.0, 5)
    assert settling_time(times, np.zeros(5)) == 0.0
    assert settling_time(times, np.array([0.3, 0.1, 0.0, 0.0, 0.0])) == pytest.approx(0.5)
