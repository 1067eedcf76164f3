import numpy as np
import pytest

from src.broadcasting.event_broadcaster import EventBroadcaster
from src.custom_code.experiments import ExperimentRunner
from src.custom_code.fock import DensityMatrix, ModeLayout
from src.custom_code.models import ModelParams, build_weak_tunneling, photon_collapse, weak_layout


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def weak_params():
    return ModelParams(N=5000, kappa=100.0, photon_dim=2, atomic_dim=2)


@pytest.fixture
def weak_system(weak_params):
    """(layout, H, collapse) of the single-excitation weak-tunneling model"""
    layout = weak_layout(weak_params)
    return layout, build_weak_tunneling(weak_params, layout), photon_collapse(weak_params, layout)


@pytest.fixture
def cd_layout():
    return ModeLayout.of(("c", 2), ("d", 2))


@pytest.fixture
def runner(tmp_path):
    # private broadcaster so tests never touch the process-wide listeners
    return ExperimentRunner(out_dir=tmp_path, workers=1, broadcaster=EventBroadcaster())


@pytest.fixture
def random_rho(rng):
    """Factory for full-rank random density matrices drawn from the seeded rng"""

    def make(dim: int) -> DensityMatrix:
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        rho = a @ a.conj().T
        return DensityMatrix(rho / np.trace(rho))

    return make
