"""
Experiment orchestration: presets, config-driven runs, parameter sweeps and
the dark-state verification table.

``simulate`` is a pure function of an ExperimentConfig so it can run in a
worker process; ``ExperimentRunner`` schedules simulations, writes the CSV
files and manifest, and publishes progress events.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union
import asyncio
import logging
import math

import numpy as np
import pandas as pd

from src.broadcasting.event_broadcaster import EventBroadcaster, EventType, event_broadcaster
from src.custom_code.darkstates import (
    collective_modes,
    dark_state_strong,
    dark_state_weak,
    predict_steady_mixture,
    predicted_observables,
    verify_dark,
)
from src.custom_code.entanglement import (
    BipartiteSplit,
    dark_state_entropy_formula,
    entanglement_series,
    logarithmic_negativity,
    partial_trace,
    reduced_entropy,
    witness,
)
from src.custom_code.fock import DensityMatrix, ModeLayout, SparseOperator, StateVector, basis_state, number
from src.custom_code.lindblad import (
    EvolutionSpec,
    damped_exchange_solution,
    evolve,
    lindblad_rhs,
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
from src.custom_code.squeezing import (
    asymmetric_occupation_series,
    bogoliubov_frequency,
    build_squeezing_hamiltonian,
)
from src.utils.errors import ConfigError, SimulationError
from src.utils.results import Manifest, ResultTable, RunRecord, load_manifest
from src.utils.schemas import MODES, ExperimentConfig, SweepAxis, apply_axis, load_config, parse_config

logger = logging.getLogger(__name__)

DARK_RESIDUAL_TOL = 1e-12
ENTANGLEMENT_LABELS = ("W", "E_N")

PRESET_KAPPA = 100.0
PRESET_N = (5000, 10000, 20000)
PRESET_DARK_N = (1, 2, 3)
PRESET_UGGN = (1.0, 5.0, 10.0)
PRESET_REL_TOL = 1e-10
PRESET_ABS_TOL = 1e-12


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    frame: pd.DataFrame                         # time column plus one column per observable
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.frame[self.config.time_label].to_numpy()

    def series(self, label: str) -> np.ndarray:
        return self.frame[label].to_numpy()

    def tables(self) -> List[ResultTable]:
        """One (time, value) table per curve"""
        ev = self.config.evolution
        tables = []
        for label in self.config.observable_labels():
            frame = pd.DataFrame({self.config.time_label: self.times, "value": self.series(label)})
            metadata = {
                "config": self.config.resolved(),
                "curve": label,
                "rel_tol": ev.rel_tol,
                "abs_tol": ev.abs_tol,
                "method": ev.method,
            }
            tables.append(ResultTable(name=f"{self.config.output.stem}_{label}", frame=frame, metadata=metadata))
        return tables


# ---------------------------------------------------------------------------
#  System assembly
# ---------------------------------------------------------------------------
def build_system(config: ExperimentConfig) -> Tuple[ModelParams, ModeLayout, SparseOperator]:
    params = config.model_params()
    if config.regime == "strong":
        layout = strong_layout(params)
        H = build_strong_tunneling(params, layout)
    else:
        layout = weak_layout(params)
        H = build_weak_tunneling(params, layout)
    return params, layout, H


def initial_state(config: ExperimentConfig, layout: ModeLayout) -> StateVector:
    init = config.initial_state
    if init.dark is not None:
        if config.regime == "strong":
            return dark_state_strong(layout)
        return dark_state_weak(init.dark, layout).state
    occupations = tuple(init.occupations.get(label, 0) for label in MODES[config.regime])
    return basis_state(layout, occupations)


def observable_operators(config: ExperimentConfig, layout: ModeLayout) -> Dict[str, SparseOperator]:
    ops: Dict[str, SparseOperator] = {}
    for label in config.observable_labels():
        if label in ENTANGLEMENT_LABELS:
            continue
        if label == "excitation":
            ops[label] = total_excitation_operator(layout)
        elif label in ("n_s", "n_r"):
            s, r = collective_modes(layout)
            mode = s if label == "n_s" else r
            ops[label] = mode.adjoint() @ mode
        else:
            ops[label] = number(layout, label.removeprefix("n_"))
    return ops


# ---------------------------------------------------------------------------
#  Simulation
# ---------------------------------------------------------------------------
def simulate(config: ExperimentConfig) -> ExperimentResult:
    if config.regime == "squeezing":
        return _simulate_squeezing(config)
    return _simulate_cavity(config)


def _simulate_cavity(config: ExperimentConfig) -> ExperimentResult:
    params, layout, H = build_system(config)
    collapse = photon_collapse(params, layout)
    psi0 = initial_state(config, layout)
    rho0 = DensityMatrix.from_pure(psi0)
    labels = config.observable_labels()
    wants_entanglement = any(label in ENTANGLEMENT_LABELS for label in labels)

    ev = config.evolution
    spec = EvolutionSpec(
        hamiltonian=H,
        collapse=collapse,
        t_final=ev.t_final,
        n_samples=ev.n_samples,
        rel_tol=ev.rel_tol,
        abs_tol=ev.abs_tol,
        method=ev.method,
        layout=layout,
        sector_restrict=ev.sector_restrict,
        store_states=wants_entanglement,
    )
    logger.info(f"simulating {config.output.stem}: regime={config.regime}, N={params.N}, dim={layout.dim}")
    traj = evolve(rho0, spec, observable_operators(config, layout))

    series = dict(traj.series)
    if wants_entanglement:
        series.update(entanglement_series(traj.states, layout))

    frame = pd.DataFrame({config.time_label: traj.times})
    for label in labels:
        frame[label] = series[label]

    diagnostics = traj.diagnostics.to_dict()
    extra: Dict[str, Any] = {}

    if config.regime == "strong" and _is_single_atomic_excitation(config) and params.detuning == 0:
        oracle = damped_exchange_solution(params.g * math.sqrt(params.N), params.kappa, traj.times)
        deviations = [np.max(np.abs(series[f"n_{m}"] - oracle[m])) for m in ("a", "b") if f"n_{m}" in series]
        if deviations:
            diagnostics["oracle_deviation"] = float(max(deviations))

    if config.regime == "weak" and params.detuning == 0 and params.chi == 0:
        try:
            weights = predict_steady_mixture(psi0, layout)
        except SimulationError as e:
            logger.debug(f"no dark-mixture prediction: {e}")
        else:
            extra["predicted_weights"] = [[n, w] for n, w in weights]
            extra["predicted_observables"] = predicted_observables(weights)

    if config.steady_state is not None:
        ss = config.steady_state
        rho_ss = steady_state(H, collapse, method=ss.method, rho0=rho0, tol=ss.tol, t_max=ss.t_max)
        extra["steady_state"] = _steady_summary(config, layout, rho_ss)

    return ExperimentResult(config=config, frame=frame, diagnostics=diagnostics, extra=extra)


def _is_single_atomic_excitation(config: ExperimentConfig) -> bool:
    occ = config.initial_state.occupations
    return occ is not None and occ.get("a", 0) == 0 and sum(occ.values()) == 1


def _steady_summary(config: ExperimentConfig, layout: ModeLayout, rho: DensityMatrix) -> Dict[str, float]:
    summary = {
        label: float(np.real(op.expectation(rho)))
        for label, op in observable_operators(config, layout).items()
    }
    if config.regime == "weak":
        rho_cd = partial_trace(rho, layout, ("c", "d"))
        sub = layout.sub_layout(("c", "d"))
        summary["W"] = witness(rho_cd, sub)
        summary["E_N"] = logarithmic_negativity(rho_cd, BipartiteSplit.of(sub, ["c"], ["d"]))
    return summary


def _simulate_squeezing(config: ExperimentConfig) -> ExperimentResult:
    params = config.squeezing_params()
    ev = config.evolution
    times = np.linspace(0.0, ev.t_final, ev.n_samples)
    logger.info(f"squeezing series {config.output.stem}: UggN={params.UggN}, J_g={params.J_g}")
    n_f = asymmetric_occupation_series(params, times)

    # numeric cross-check on the truncated mode
    dim = config.squeezing.dim
    H = build_squeezing_hamiltonian(params, dim)
    vacuum = np.zeros(dim, dtype=complex)
    vacuum[0] = 1.0
    states = unitary_evolve(StateVector(vacuum), H, times)
    numeric = (np.abs(states) ** 2) @ np.arange(dim)

    omega = bogoliubov_frequency(params)
    frame = pd.DataFrame({config.time_label: times, "n_f": n_f})
    diagnostics = {"numeric_deviation": float(np.max(np.abs(n_f - numeric)))}
    extra = {
        "bogoliubov_frequency": omega,
        "peak": 4 * params.lambda2 ** 2 / omega ** 2,
        "period": math.pi / omega,
    }
    return ExperimentResult(config=config, frame=frame, diagnostics=diagnostics, extra=extra)


# ---------------------------------------------------------------------------
#  Presets
# ---------------------------------------------------------------------------
PRESETS = ("fig2", "fig3", "fig4", "fig5", "figA")


def _cavity(regime: str, stem: str, N: int, occupations: Dict[str, int], observables: List[str], **evolution) -> ExperimentConfig:
    return parse_config({
        "regime": regime,
        "model": {"N": N, "kappa": PRESET_KAPPA, "detuning": 0.0, "chi": 0.0},
        "initial_state": {"occupations": occupations},
        "evolution": {
            "t_final": 1.0, "n_samples": 400, "rel_tol": PRESET_REL_TOL, "abs_tol": PRESET_ABS_TOL, **evolution,
        },
        "observables": observables,
        "output": {"stem": stem},
    })


def preset_configs(name: str) -> List[ExperimentConfig]:
    if name == "fig2":
        return [_cavity("strong", f"fig2_N{N}", N, {"b": 1}, ["n_a", "n_b"]) for N in PRESET_N]
    if name == "fig3":
        return [_cavity("weak", f"fig3_N{N}", N, {"c": 1}, ["n_a", "n_c", "n_d", "n_s", "n_r"]) for N in PRESET_N]
    if name == "fig4":
        return [_cavity("weak", f"fig4_N{N}", N, {"c": 1}, ["W", "E_N"]) for N in PRESET_N]
    if name == "fig5":
        return [
            _cavity("weak", f"fig5_n{n}", PRESET_N[0], {"c": n}, ["W", "E_N"], sector_restrict=True)
            for n in PRESET_DARK_N
        ]
    if name == "figA":
        return [
            parse_config({
                "regime": "squeezing",
                "squeezing": {"J_g": 1.0, "UggN": u, "dim": 300},
                "evolution": {"t_final": 10.0, "n_samples": 400},
                "observables": ["n_f"],
                "output": {"stem": f"figA_UggN{u:g}"},
            })
            for u in PRESET_UGGN
        ]
    raise ConfigError(f"unknown preset '{name}'; choose from {list(PRESETS)}", key="preset")


def with_tolerance(config: ExperimentConfig, tol: Optional[float]) -> ExperimentConfig:
    """Override rel_tol with ``tol`` and abs_tol with tol/100"""
    if tol is None:
        return config
    data = config.resolved()
    data["evolution"]["rel_tol"] = tol
    data["evolution"]["abs_tol"] = tol / 100
    return parse_config(data)


# ---------------------------------------------------------------------------
#  Sweeps
# ---------------------------------------------------------------------------
def summarize(result: ExperimentResult) -> Dict[str, float]:
    """Final and peak value of every curve, plus settling times of W and E_N"""
    summary: Dict[str, float] = {}
    times = result.times
    for label in result.config.observable_labels():
        values = result.series(label)
        summary[f"final_{label}"] = float(values[-1])
        summary[f"max_{label}"] = float(np.max(values))
        if label in ENTANGLEMENT_LABELS:
            summary[f"t_sat_{label}"] = settling_time(times, values)
    return summary


def sweep_table(base: ExperimentConfig, axis: SweepAxis, results: List[ExperimentResult]) -> ResultTable:
    rows = []
    for value, result in zip(axis.typed_values(), results):
        rows.append({axis.param: value, **summarize(result)})
    return ResultTable(
        name=f"{base.output.stem}_sweep_{axis.param}",
        frame=pd.DataFrame(rows),
        metadata={"config": base.resolved(), "axis": axis.param, "values": axis.typed_values()},
    )


# ---------------------------------------------------------------------------
#  Runner
# ---------------------------------------------------------------------------
class ExperimentRunner:
    """
    Runs experiments and writes their results under ``out_dir``.
    Points execute in a process pool when ``workers > 1``.
    """

    def __init__(
        self,
        out_dir: Union[str, Path],
        workers: int = 1,
        broadcaster: EventBroadcaster = event_broadcaster,
        debug: bool = False,
    ):
        self.out_dir = Path(out_dir)
        self.workers = max(1, int(workers))
        self.broadcaster = broadcaster
        self.debug = debug

    async def _execute(self, configs: List[ExperimentConfig], job_id: str) -> List[ExperimentResult]:
        for config in configs:
            await self.broadcaster.broadcast(EventType.RUN_STARTED, {"stem": config.output.stem}, job_id)
        try:
            if self.workers == 1 or len(configs) == 1:
                results = []
                for config in configs:
                    results.append(simulate(config))
                    await self.broadcaster.broadcast(EventType.RUN_COMPLETED, {"stem": config.output.stem}, job_id)
                return results

            loop = asyncio.get_running_loop()
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                futures = [loop.run_in_executor(pool, simulate, config) for config in configs]
                results = await asyncio.gather(*futures)
            for config in configs:
                await self.broadcaster.broadcast(EventType.RUN_COMPLETED, {"stem": config.output.stem}, job_id)
            return list(results)
        except SimulationError as e:
            await self.broadcaster.broadcast(EventType.ERROR, {"error": str(e), "kind": type(e).__name__}, job_id)
            raise

    def _write(self, result: ExperimentResult) -> RunRecord:
        directory = Path(result.config.output.directory) if result.config.output.directory else self.out_dir
        files = [str(table.save(directory)) for table in result.tables()]
        if self.debug:
            for path in files:
                print(f"💾 wrote {path}")
        return RunRecord(config=result.config.resolved(), files=files, diagnostics=result.diagnostics, extra=result.extra)

    async def run(self, configs: List[ExperimentConfig], job_id: Optional[str] = None) -> Tuple[List[ExperimentResult], Manifest]:
        job_id = job_id or "run"
        results = await self._execute(configs, job_id)
        manifest = Manifest(kind="runs", runs=[self._write(result) for result in results])
        path = manifest.save(self.out_dir)
        await self.broadcaster.broadcast(EventType.FILE_WRITTEN, {"manifest": str(path)}, job_id)
        return results, manifest

    async def sweep(self, base: ExperimentConfig, axis: SweepAxis) -> Tuple[ResultTable, Manifest]:
        job_id = f"sweep_{axis.param}"
        points = [apply_axis(base, axis.param, value) for value in axis.typed_values()]
        await self.broadcaster.broadcast(EventType.SWEEP_STARTED, {"param": axis.param, "values": axis.typed_values()}, job_id)

        results = await self._execute(points, job_id)
        for value, result in zip(axis.typed_values(), results):
            await self.broadcaster.broadcast(
                EventType.SWEEP_POINT_COMPLETED, {axis.param: value, **summarize(result)}, job_id
            )

        table = sweep_table(base, axis, results)
        table_path = table.save(self.out_dir)
        manifest = Manifest(
            kind="sweep",
            runs=[RunRecord(config=r.config.resolved(), files=[], diagnostics=r.diagnostics, extra=r.extra) for r in results],
            sweep={"base": base.resolved(), "param": axis.param, "values": axis.typed_values(), "table": str(table_path)},
        )
        manifest.save(self.out_dir)
        await self.broadcaster.broadcast(EventType.FILE_WRITTEN, {"table": str(table_path)}, job_id)
        return table, manifest

    async def run_preset(self, name: str):
        return await self.run(preset_configs(name), job_id=name)

    async def run_config(self, path: Union[str, Path], tol: Optional[float] = None):
        config = with_tolerance(load_config(path), tol)
        return await self.run([config], job_id=config.output.stem)

    async def rerun(self, manifest_path: Union[str, Path]):
        """Re-execute a stored run or sweep from its resolved configs"""
        manifest = load_manifest(manifest_path)
        if manifest.kind == "sweep":
            info = manifest.sweep
            axis = SweepAxis(param=info["param"], values=[float(v) for v in info["values"]])
            return await self.sweep(parse_config(info["base"]), axis)
        return await self.run([parse_config(run.config) for run in manifest.runs], job_id="rerun")


async def rerun_manifest(manifest_path: Union[str, Path], out_dir: Optional[Union[str, Path]] = None, workers: int = 1):
    """Re-execute a stored run or sweep; results land next to the manifest unless ``out_dir`` is given"""
    path = Path(manifest_path)
    if out_dir is None:
        out_dir = path if path.is_dir() else path.parent
    return await ExperimentRunner(out_dir, workers=workers).rerun(path)


# ---------------------------------------------------------------------------
#  Dark-state verification
# ---------------------------------------------------------------------------
def dark_verify(n_max: int, N: int = PRESET_N[0], kappa: float = PRESET_KAPPA) -> pd.DataFrame:
    """
    Per dark state D_n, n <= n_max: Hamiltonian and Lindblad residuals,
    marginal entropy against its closed form, log negativity and witness.
    """
    if n_max < 0:
        raise ConfigError(f"n-max must be non-negative, got {n_max}", key="n-max")
    params = ModelParams(N=N, kappa=kappa, photon_dim=2, atomic_dim=max(2, n_max + 1))
    layout = weak_layout(params)
    H = build_weak_tunneling(params, layout)
    collapse = photon_collapse(params, layout)
    sub = layout.sub_layout(("c", "d"))
    split = BipartiteSplit.of(sub, ["c"], ["d"])

    rows = []
    for n in range(n_max + 1):
        element = dark_state_weak(n, layout)
        rho = element.density_matrix()
        rho_cd = partial_trace(rho, layout, ("c", "d"))
        rows.append({
            "n": n,
            "hamiltonian_residual": verify_dark(H, element.state),
            "lindblad_residual": lindblad_rhs(H, collapse, rho).frobenius_norm(),
            "entropy": reduced_entropy(rho, layout, ["c"]),
            "entropy_formula": dark_state_entropy_formula(n),
            "log_negativity": logarithmic_negativity(rho_cd, split),
            "witness": witness(rho_cd, sub),
        })
    return pd.DataFrame(rows)


def dark_verify_passed(table: pd.DataFrame) -> bool:
    return bool(
        (table["hamiltonian_residual"] < DARK_RESIDUAL_TOL).all()
        and (table["lindblad_residual"] < DARK_RESIDUAL_TOL).all()
    )
