"""
Configuration models for experiments and sweeps.

A config file is YAML with the sections below; unknown keys anywhere are
rejected.

    regime: weak                 # strong | weak | squeezing
    model: {N: 5000, kappa: 100, detuning: 0, chi: 0}
    squeezing: {J_g: 1, UggN: 10, dim: 300}
    initial_state: {occupations: {a: 0, c: 1, d: 0}}     # or {dark: 1}
    evolution: {t_final: 1.0, n_samples: 400}
    observables: [n_a, n_c, n_d, W, E_N]
    steady_state: {method: evolve}
    output: {stem: fig3}
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
import yaml

from src.custom_code.models import ModelParams, default_truncation
from src.custom_code.squeezing import SqueezingParams
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

Regime = Literal["strong", "weak", "squeezing"]

MODES: Dict[str, Tuple[str, ...]] = {
    "strong": ("a", "b"),
    "weak": ("a", "c", "d"),
    "squeezing": ("f",),
}

OBSERVABLES: Dict[str, Tuple[str, ...]] = {
    "strong": ("n_a", "n_b", "excitation"),
    "weak": ("n_a", "n_c", "n_d", "n_s", "n_r", "excitation", "W", "E_N"),
    "squeezing": ("n_f",),
}

DEFAULT_OBSERVABLES: Dict[str, List[str]] = {
    "strong": ["n_a", "n_b"],
    "weak": ["n_a", "n_c", "n_d"],
    "squeezing": ["n_f"],
}

# first atomic mode per regime; the sweep axis "n" puts its excitations here
ATOMIC_MODE = {"strong": "b", "weak": "c"}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Section):
    g: float = Field(1.0, gt=0)
    N: int = Field(..., ge=1)
    detuning: float = 0.0
    chi: float = 0.0
    kappa: float = Field(0.0, ge=0)
    photon_dim: Optional[int] = Field(None, ge=2)
    atomic_dim: Optional[int] = Field(None, ge=2)


class SqueezingSection(_Section):
    J_g: float = Field(1.0, gt=0)
    UggN: float = Field(0.0, ge=0)
    dim: int = Field(300, ge=4)


class InitialState(_Section):
    occupations: Optional[Dict[str, int]] = None
    dark: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _one_kind(self):
        if (self.occupations is None) == (self.dark is None):
            raise ValueError("give exactly one of 'occupations' or 'dark'")
        if self.occupations is not None and any(n < 0 for n in self.occupations.values()):
            raise ValueError("occupations must be non-negative")
        return self

    def excitations(self) -> int:
        if self.dark is not None:
            return self.dark
        return sum(self.occupations.values())


class EvolutionSection(_Section):
    t_final: float = Field(1.0, gt=0)
    n_samples: int = Field(400, ge=2)
    rel_tol: float = Field(1e-8, gt=0)
    abs_tol: float = Field(1e-10, gt=0)
    method: Literal["DOP853", "RK45"] = "DOP853"
    sector_restrict: bool = False


class SteadyStateSection(_Section):
    method: Literal["evolve", "nullspace"] = "evolve"
    tol: float = Field(1e-9, gt=0)
    t_max: float = Field(50.0, gt=0)


class OutputSection(_Section):
    stem: str = "run"
    directory: Optional[str] = None


class ExperimentConfig(_Section):
    regime: Regime
    model: Optional[ModelSection] = None
    squeezing: Optional[SqueezingSection] = None
    initial_state: Optional[InitialState] = None
    evolution: EvolutionSection = EvolutionSection()
    observables: Optional[List[str]] = None
    steady_state: Optional[SteadyStateSection] = None
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _consistent(self):
        if self.regime == "squeezing":
            if self.squeezing is None:
                raise ValueError("squeezing: section required for regime 'squeezing'")
            if self.steady_state is not None:
                raise ValueError("steady_state: not available for regime 'squeezing'")
        else:
            if self.model is None:
                raise ValueError(f"model: section required for regime '{self.regime}'")
            if self.initial_state is None:
                raise ValueError(f"initial_state: section required for regime '{self.regime}'")
            if self.regime == "weak" and self.model.N % 2:
                raise ValueError(f"model.N: N must be even for the weak-tunneling split, got N={self.model.N}")
            self._check_initial_state()

        unknown = [label for label in self.observable_labels() if label not in OBSERVABLES[self.regime]]
        if unknown:
            raise ValueError(
                f"observables: {unknown} not available for regime '{self.regime}'; "
                f"choose from {list(OBSERVABLES[self.regime])}"
            )
        return self

    def _check_initial_state(self):
        init = self.initial_state
        if init.dark is not None:
            if self.regime == "strong" and init.dark != 0:
                raise ValueError("initial_state.dark: the strong-tunneling model has only the dark state 0")
            return
        modes = MODES[self.regime]
        extra = sorted(set(init.occupations) - set(modes))
        if extra:
            raise ValueError(f"initial_state.occupations: unknown modes {extra} for regime '{self.regime}' (modes {list(modes)})")
        params = self.model_params()
        for label in modes:
            n = init.occupations.get(label, 0)
            dim = params.photon_dim if label == "a" else params.atomic_dim
            if n >= dim:
                raise ValueError(f"initial_state.occupations.{label}: occupation {n} does not fit dimension {dim}")

    # -----------------------------------------------------------------------
    def observable_labels(self) -> List[str]:
        return list(self.observables) if self.observables is not None else list(DEFAULT_OBSERVABLES[self.regime])

    def model_params(self) -> ModelParams:
        """ModelParams with truncations defaulted from the initial excitation count"""
        default_dim = default_truncation(self.initial_state.excitations(), self.model.chi)
        return ModelParams(
            g=self.model.g,
            N=self.model.N,
            detuning=self.model.detuning,
            chi=self.model.chi,
            kappa=self.model.kappa,
            photon_dim=self.model.photon_dim or default_dim,
            atomic_dim=self.model.atomic_dim or default_dim,
        )

    def squeezing_params(self) -> SqueezingParams:
        return SqueezingParams(J_g=self.squeezing.J_g, UggN=self.squeezing.UggN)

    @property
    def time_label(self) -> str:
        return "Jg_t" if self.regime == "squeezing" else "gt"

    def resolved(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


# ---------------------------------------------------------------------------
#  Loading
# ---------------------------------------------------------------------------
def _format_validation_error(err: ValidationError) -> str:
    parts = []
    for item in err.errors():
        path = ".".join(str(p) for p in item["loc"])
        message = item["msg"].removeprefix("Value error, ")
        parts.append(f"{path}: {message}" if path else message)
    return "; ".join(parts)


def parse_config(data: Any) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]["loc"] if e.errors() else ()
        key = ".".join(str(p) for p in first) or None
        raise ConfigError(f"invalid config: {_format_validation_error(e)}", key=key) from None


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"cannot parse {path}: {problem}", line=line) from None
    config = parse_config(data)
    logger.debug(f"loaded config {path}: regime={config.regime}")
    return config


# ---------------------------------------------------------------------------
#  Sweep axes
# ---------------------------------------------------------------------------
INTEGER_AXES = ("N", "n", "photon_dim", "atomic_dim", "dim")
MODEL_AXES = ("g", "N", "detuning", "chi", "kappa", "photon_dim", "atomic_dim")
SQUEEZING_AXES = ("J_g", "UggN", "dim")


class SweepAxis(BaseModel):
    model_config = ConfigDict(frozen=True)

    param: str
    values: List[float]

    @classmethod
    def parse(cls, text: str) -> "SweepAxis":
        """'N=5000,10000,20000' -> SweepAxis"""
        if "=" not in text:
            raise ConfigError(f"sweep axis must look like param=v1,v2,..., got '{text}'", key="axis")
        param, _, raw = text.partition("=")
        param = param.strip()
        try:
            values = [float(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"sweep values must be numbers, got '{raw}'", key="axis") from None
        if not values:
            raise ConfigError("sweep axis has no values", key="axis")
        if param in INTEGER_AXES:
            if any(v != int(v) for v in values):
                raise ConfigError(f"sweep axis '{param}' takes integers, got {values}", key="axis")
        return cls(param=param, values=values)

    def typed_values(self) -> List[Union[int, float]]:
        return [int(v) if self.param in INTEGER_AXES else v for v in self.values]


def apply_axis(config: ExperimentConfig, param: str, value: Union[int, float]) -> ExperimentConfig:
    """Copy of ``config`` with one parameter replaced, revalidated"""
    data = config.resolved()
    if config.regime == "squeezing":
        if param not in SQUEEZING_AXES:
            raise ConfigError(f"unknown sweep parameter '{param}' for regime 'squeezing'; choose from {list(SQUEEZING_AXES)}", key="axis")
        data["squeezing"][param] = value
    elif param in MODEL_AXES:
        data["model"][param] = value
    elif param == "n":
        # truncations are recomputed for the new excitation count
        data["initial_state"] = {"occupations": {ATOMIC_MODE[config.regime]: int(value)}, "dark": None}
        data["model"]["photon_dim"] = None
        data["model"]["atomic_dim"] = None
    else:
        raise ConfigError(
            f"unknown sweep parameter '{param}'; choose from {list(MODEL_AXES) + ['n']}", key="axis"
        )
    data["output"]["stem"] = f"{config.output.stem}_{param}{value:g}"
    return parse_config(data)
