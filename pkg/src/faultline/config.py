"""Experiment configuration: flat dotted-key config files and defaults.

Config files are plain text, one ``key = value`` pair per line (``#``
comments allowed).  Environment fields use the ``env.`` prefix
(``env.n_seekers = 6``), run hyperparameters the ``run.`` prefix, and the
stress/convergence harness the ``stress.`` prefix.  Every hyperparameter
has a per-environment default (desk-scale: round counts halved from the
reference setup, test sets of 1e4).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

from .envs import (
    FormationConfig,
    FormationEnv,
    GridEnv,
    SearchConfig,
    SearchEnv,
    bundled_case,
    load_case,
)

METHODS = ("ours-mala", "ours-rmh", "dr", "gd")

ENVIRONMENTS = ("search", "formation", "powergrid")

#: per-environment run defaults (rounds halved from the reference setup)
RUN_DEFAULTS = {
    "search": dict(n_designs=10, n_failures=10, rounds=50, substeps=10,
                   stepsize_x=1e-2, stepsize_y=1e-2, quench_rounds=25,
                   temper_rate=0.0),
    "formation": dict(n_designs=5, n_failures=5, rounds=25, substeps=5,
                      stepsize_x=1e-3, stepsize_y=1e-3, quench_rounds=5,
                      temper_rate=0.0),
    "powergrid": dict(n_designs=10, n_failures=10, rounds=50, substeps=10,
                      stepsize_x=1e-6, stepsize_y=1e-2, quench_rounds=10,
                      temper_rate=0.0),
}

STRESS_DEFAULTS = dict(n_test=10_000, batch=200, convergence_points=100,
                       convergence_seed=90210)


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict:
    """Flat dotted-key config text -> {key: string value}."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"config line {lineno}: empty key or value")
        out[key] = value
    return out


def _coerce(value: str, like):
    if isinstance(like, bool):
        low = value.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        parts = [p for p in value.replace(",", " ").split() if p]
        return tuple(type(like[0])(p) for p in parts) if like else tuple(parts)
    return value


@dataclass
class ExperimentConfig:
    environment: str = "search"
    method: str = "ours-mala"
    seed: int = 0
    workers: int = 1
    out_dir: str = "out"
    env_options: dict = field(default_factory=dict)
    run_options: dict = field(default_factory=dict)
    n_test: int = STRESS_DEFAULTS["n_test"]
    stress_batch: int = STRESS_DEFAULTS["batch"]
    convergence_points: int = STRESS_DEFAULTS["convergence_points"]
    convergence_seed: int = STRESS_DEFAULTS["convergence_seed"]

    def validate(self):
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(
                f"environment: expected one of {ENVIRONMENTS}, got {self.environment!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method: expected one of {METHODS}, got {self.method!r}")
        if self.n_test < 1:
            raise ConfigError("stress.n_test: must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        unknown = set(self.run_options) - set(RUN_DEFAULTS[self.environment])
        if unknown:
            raise ConfigError(f"run options not recognized: {sorted(unknown)}")
        return self

    @property
    def run_params(self) -> dict:
        params = dict(RUN_DEFAULTS[self.environment])
        params.update(self.run_options)
        return params


def experiment_from_mapping(mapping: dict) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from parsed dotted keys."""
    cfg = ExperimentConfig()
    for key, value in mapping.items():
        if key == "environment" or key == "env":
            cfg.environment = value
        elif key == "method":
            cfg.method = value
        elif key == "seed":
            cfg.seed = int(value)
        elif key == "workers":
            cfg.workers = int(value)
        elif key == "out":
            cfg.out_dir = value
        elif key.startswith("env."):
            cfg.env_options[key[4:]] = value
        elif key.startswith("run."):
            name = key[4:]
            like = RUN_DEFAULTS["search"].get(name)
            if like is None:
                raise ConfigError(f"unknown run option {name!r}")
            cfg.run_options[name] = _coerce(value, like)
        elif key == "stress.n_test":
            cfg.n_test = int(value)
        elif key == "stress.batch":
            cfg.stress_batch = int(value)
        elif key == "convergence.points":
            cfg.convergence_points = int(value)
        elif key == "convergence.seed":
            cfg.convergence_seed = int(value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return cfg.validate()


def load_experiment_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return experiment_from_mapping(parse_config_text(fh.read()))


def build_environment(cfg: ExperimentConfig):
    """Instantiate the configured environment with ``env.*`` overrides."""
    opts = dict(cfg.env_options)
    if cfg.environment == "powergrid":
        case_name = opts.pop("case", "case14")
        case_path = opts.pop("case_path", None)
        if opts:
            raise ConfigError(f"env options not recognized for powergrid: {sorted(opts)}")
        case = load_case(case_path) if case_path else bundled_case(case_name)
        return GridEnv(case)

    cls = SearchConfig if cfg.environment == "search" else FormationConfig
    valid = {f.name: f for f in dc_fields(cls)}
    kwargs = {}
    for name, value in opts.items():
        if name not in valid:
            raise ConfigError(f"env option not recognized for {cfg.environment}: {name!r}")
        default = valid[name].default
        if default is None:  # e.g. formation control_points
            kwargs[name] = int(value)
        else:
            kwargs[name] = _coerce(value, default)
    env_config = cls(**kwargs)
    return SearchEnv(env_config) if cfg.environment == "search" else FormationEnv(env_config)
