"""Experiment configuration: flat key = value files with sections.

Every key is checked against a per-experiment schema; unknown sections or
keys are hard errors, because a silently ignored typo in an experiment
config invalidates its results.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .kernels import KernelError, KernelPair, make_kernel
from .paths import INITIAL_LAWS, TimeGrid

EXPERIMENTS = (
    "chaos",
    "euler-rate",
    "picard",
    "moments",
    "increments",
    "centered-stats",
    "validate-kernel",
)


class ConfigError(ValueError):
    pass


_KERNEL_PARAMS = {
    "linear": {"a", "c", "s", "dim"},
    "kuramoto": {"kappa", "s"},
    "loglip": {"knot", "s"},
    "loglip-diffusion": {"knot"},
    "zero": {"dim"},
}

_INITIAL_PARAMS = {
    "point_mass": {"x0"},
    "gaussian": {"mean", "cov"},
    "uniform_box": {"lo", "hi"},
}

# section -> {key: (required, parser)}
_COMMON_SCHEMA: dict[str, dict[str, bool]] = {
    "experiment": {"name": True, "seed": True, "replications": False, "out": False, "dim": False, "threads": False},
    "kernel": {"name": True},
    "initial": {"law": True},
    "grid": {"T": True, "h_fine": True},
}

_EXPERIMENT_SCHEMA: dict[str, dict[str, bool]] = {
    "chaos": {"N_list": True, "law_source": False, "M_law": False, "tol": False, "max_iter": False},
    "euler-rate": {"h_list": True, "N": True},
    "picard": {"M_law": False, "tol": False, "max_iter": False},
    "moments": {"N_list": True, "h_coarse": True},
    "increments": {"N": True, "lags": True},
    "centered-stats": {"N_list": True, "law_source": False, "M_law": False, "tol": False, "max_iter": False},
    "validate-kernel": {"n_samples": False, "tolerance": False},
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    replications: int
    out_dir: Path
    dim: int
    threads: int | None
    kernel_name: str
    kernel_params: dict[str, float]
    initial_law: str
    initial_params: dict[str, float]
    horizon: float
    h_fine: float
    n_list: list[int] = field(default_factory=list)
    h_list: list[float] = field(default_factory=list)
    lags: list[float] = field(default_factory=list)
    n_particles: int = 0
    h_coarse: float = 0.0
    law_source: str = "analytic"
    m_law: int = 4000
    tol: float = 1e-6
    max_iter: int = 30
    n_samples: int = 4000
    tolerance: float = 1e-6

    def make_kernel(self) -> KernelPair:
        try:
            return make_kernel(self.kernel_name, self.kernel_params)
        except KernelError as exc:
            raise ConfigError(str(exc)) from None

    def fine_grid(self) -> TimeGrid:
        return TimeGrid.from_step(self.horizon, self.h_fine)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "replications": self.replications,
            "out": str(self.out_dir),
            "dim": self.dim,
            "kernel": {"name": self.kernel_name, **self.kernel_params},
            "initial": {"law": self.initial_law, **self.initial_params},
            "grid": {"T": self.horizon, "h_fine": self.h_fine},
            "N_list": self.n_list,
            "h_list": self.h_list,
            "lags": self.lags,
            "N": self.n_particles,
            "h_coarse": self.h_coarse,
            "law_source": self.law_source,
            "M_law": self.m_law,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "n_samples": self.n_samples,
            "tolerance": self.tolerance,
        }


def _parse_int(section: str, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not an integer") from None


def _parse_float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from None


def _parse_int_list(section: str, key: str, raw: str) -> list[int]:
    return [_parse_int(section, key, tok.strip()) for tok in raw.split(",") if tok.strip()]


def _parse_float_list(section: str, key: str, raw: str) -> list[float]:
    return [_parse_float(section, key, tok.strip()) for tok in raw.split(",") if tok.strip()]


def _divides(small: float, large: float) -> bool:
    ratio = round(large / small)
    return ratio >= 1 and math.isclose(ratio * small, large, rel_tol=1e-9, abs_tol=0.0)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (T, N_list, M_law)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None

    def need(section: str, key: str) -> str:
        if not parser.has_option(section, key):
            raise ConfigError(f"missing required key {key!r} in section [{section}]")
        return parser.get(section, key)

    for section in ("experiment", "kernel", "initial", "grid"):
        if not parser.has_section(section):
            raise ConfigError(f"missing required section [{section}]")

    experiment = need("experiment", "name").strip()
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose one of {', '.join(EXPERIMENTS)}")

    # Reject unknown sections/keys before reading anything else.
    exp_section = experiment
    allowed_sections = set(_COMMON_SCHEMA) | {exp_section}
    for section in parser.sections():
        if section not in allowed_sections:
            raise ConfigError(f"unknown section [{section}] for experiment {experiment!r}")

    for section, keys in _COMMON_SCHEMA.items():
        if section == "kernel" or section == "initial":
            continue
        for key in parser.options(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    kernel_name = need("kernel", "name").strip()
    if kernel_name not in _KERNEL_PARAMS:
        raise ConfigError(f"unknown kernel {kernel_name!r}")
    kernel_params: dict[str, float] = {}
    for key in parser.options("kernel"):
        if key == "name":
            continue
        if key not in _KERNEL_PARAMS[kernel_name]:
            raise ConfigError(f"unknown key {key!r} in section [kernel] for kernel {kernel_name!r}")
        kernel_params[key] = _parse_float("kernel", key, parser.get("kernel", key))

    initial_law = need("initial", "law").strip()
    if initial_law not in INITIAL_LAWS:
        raise ConfigError(f"unknown initial law {initial_law!r}")
    initial_params: dict[str, float] = {}
    for key in parser.options("initial"):
        if key == "law":
            continue
        if key not in _INITIAL_PARAMS[initial_law]:
            raise ConfigError(f"unknown key {key!r} in section [initial] for law {initial_law!r}")
        initial_params[key] = _parse_float("initial", key, parser.get("initial", key))

    schema = _EXPERIMENT_SCHEMA[experiment]
    if parser.has_section(exp_section):
        for key in parser.options(exp_section):
            if key.replace("-", "_") not in {k.replace("-", "_") for k in schema}:
                raise ConfigError(f"unknown key {key!r} in section [{exp_section}]")
    for key, required in schema.items():
        if required and not parser.has_option(exp_section, key):
            raise ConfigError(f"missing required key {key!r} in section [{exp_section}]")

    def opt(section: str, key: str, default: str | None = None) -> str | None:
        return parser.get(section, key) if parser.has_option(section, key) else default

    horizon = _parse_float("grid", "T", need("grid", "T"))
    h_fine = _parse_float("grid", "h_fine", need("grid", "h_fine"))
    if horizon <= 0 or h_fine <= 0:
        raise ConfigError("T and h_fine must be positive")
    if not _divides(h_fine, horizon):
        raise ConfigError(f"h_fine {h_fine} does not divide T {horizon}")

    cfg = ExperimentConfig(
        experiment=experiment,
        seed=_parse_int("experiment", "seed", need("experiment", "seed")),
        replications=_parse_int("experiment", "replications", opt("experiment", "replications", "1")),
        out_dir=Path(opt("experiment", "out", f"results/{experiment}")),
        dim=_parse_int("experiment", "dim", opt("experiment", "dim", "1")),
        threads=(
            _parse_int("experiment", "threads", parser.get("experiment", "threads"))
            if parser.has_option("experiment", "threads")
            else None
        ),
        kernel_name=kernel_name,
        kernel_params=kernel_params,
        initial_law=initial_law,
        initial_params=initial_params,
        horizon=horizon,
        h_fine=h_fine,
    )
    if cfg.replications < 1:
        raise ConfigError("replications must be >= 1")
    if cfg.dim < 1:
        raise ConfigError("dim must be >= 1")

    if experiment in ("chaos", "moments", "centered-stats"):
        cfg.n_list = _parse_int_list(exp_section, "N_list", need(exp_section, "N_list"))
        if len(cfg.n_list) < 1 or any(b <= a for a, b in zip(cfg.n_list, cfg.n_list[1:])):
            raise ConfigError("N_list must be nonempty and strictly increasing")
        if cfg.n_list[0] < 1:
            raise ConfigError("N_list entries must be >= 1")
    if experiment in ("chaos", "centered-stats"):
        cfg.law_source = (opt(exp_section, "law_source", "analytic") or "analytic").strip()
        if cfg.law_source not in ("analytic", "picard"):
            raise ConfigError("law_source must be 'analytic' or 'picard'")
        if cfg.law_source == "analytic" and kernel_name not in ("linear", "zero"):
            raise ConfigError("the analytic law flow is available for the linear kernel only")
    if experiment in ("chaos", "centered-stats", "picard"):
        cfg.m_law = _parse_int(exp_section, "M_law", opt(exp_section, "M_law", "4000"))
        cfg.tol = _parse_float(exp_section, "tol", opt(exp_section, "tol", "1e-6"))
        cfg.max_iter = _parse_int(exp_section, "max_iter", opt(exp_section, "max_iter", "30"))
        if cfg.m_law < 1 or cfg.tol <= 0 or cfg.max_iter < 1:
            raise ConfigError("M_law, tol, max_iter must be positive")
    if experiment == "euler-rate":
        cfg.h_list = _parse_float_list(exp_section, "h_list", need(exp_section, "h_list"))
        cfg.n_particles = _parse_int(exp_section, "N", need(exp_section, "N"))
        if cfg.n_particles < 1:
            raise ConfigError("N must be >= 1")
        if not cfg.h_list:
            raise ConfigError("h_list must be nonempty")
        for h in cfg.h_list:
            if not _divides(h, horizon):
                raise ConfigError(f"h = {h} does not divide T = {horizon}")
            if not _divides(h_fine, h):
                raise ConfigError(f"h = {h} is not an integer multiple of h_fine = {h_fine}")
    if experiment == "moments":
        cfg.h_coarse = _parse_float(exp_section, "h_coarse", need(exp_section, "h_coarse"))
        if not _divides(cfg.h_coarse, horizon) or not _divides(h_fine, cfg.h_coarse):
            raise ConfigError("h_coarse must divide T and be an integer multiple of h_fine")
    if experiment == "increments":
        cfg.n_particles = _parse_int(exp_section, "N", need(exp_section, "N"))
        cfg.lags = _parse_float_list(exp_section, "lags", need(exp_section, "lags"))
        if not cfg.lags or any(lag <= 0 or lag > horizon for lag in cfg.lags):
            raise ConfigError("lags must be nonempty and inside (0, T]")
        for lag in cfg.lags:
            if not _divides(h_fine, lag):
                raise ConfigError(f"lag {lag} is not a multiple of h_fine")
    if experiment == "validate-kernel":
        cfg.n_samples = _parse_int(exp_section, "n_samples", opt(exp_section, "n_samples", "4000"))
        cfg.tolerance = _parse_float(exp_section, "tolerance", opt(exp_section, "tolerance", "1e-6"))
        if cfg.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")

    cfg.make_kernel()  # fail fast on bad kernel parameters
    return cfg
