"""Experiment configuration: TOML sections ``problem``, ``network``, ``algorithm``, ``metrics``, ``output``.

Unknown sections or keys are errors. :func:`dump_config` writes the fully
resolved configuration, which :func:`load_config` reads back unchanged.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .engine import FORMULATIONS, VARIANTS

PROBLEM_KINDS = ("logistic_l1", "separable_quadratic", "zero")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "logistic_l1"
    n_points: int = 240
    dim: int = 49
    separation: float = 3.0
    data_seed: int = 2
    dataset: str = ""
    lam: float = 0.1
    target_spread: float = 1.0
    noise_std: float = 0.1

    @property
    def n(self) -> int:
        """Dimension of the decision variable."""
        return self.dim + 1 if self.kind == "logistic_l1" else self.dim


@dataclass(frozen=True)
class NetworkSpec:
    n_agents: int = 48
    edge_prob: float = 0.3
    seed: int = 1
    weights_file: str = ""


@dataclass(frozen=True)
class AlgorithmSpec:
    variant: str = "proximal"
    formulation: str = "compact"
    blocks: tuple[int, ...] = (1,)
    geometry: str = "quadratic"
    feasible_set: str = "all"
    lower: float = -1.0
    upper: float = 1.0
    stepsize: str = "constant"
    alpha: float = 0.2
    exponent: float = 0.75
    p_on: float = 1.0
    block_probs: tuple[float, ...] = ()
    horizon: int = 2000
    scale_with_blocks: bool = True
    seed: int = 0
    initial: str = "uniform"


@dataclass(frozen=True)
class MetricsSpec:
    eval_every: int = 20
    seeds: int = 20
    track_agent_costs: bool = False
    reference_iterations: int = 100_000


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "results"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    algorithm: AlgorithmSpec = field(default_factory=AlgorithmSpec)
    metrics: MetricsSpec = field(default_factory=MetricsSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def horizon(self, B: int) -> int:
        """Rounds simulated for ``B`` blocks."""
        a = self.algorithm
        return a.horizon * B if a.scale_with_blocks else a.horizon

    def eval_every(self, B: int) -> int:
        m = self.metrics.eval_every
        return m * B if self.algorithm.scale_with_blocks else m

    def validate(self) -> "ExperimentConfig":
        p, net, a, m = self.problem, self.network, self.algorithm, self.metrics
        if p.kind not in PROBLEM_KINDS:
            raise ConfigError(f"problem.kind must be one of {PROBLEM_KINDS}, got {p.kind!r}")
        if p.dim < 1:
            raise ConfigError("problem.dim must be >= 1")
        if p.kind == "logistic_l1":
            if not p.dataset and (p.n_points < 2 or p.n_points % 2):
                raise ConfigError("problem.n_points must be even and >= 2")
            if p.lam < 0:
                raise ConfigError("problem.lam must be >= 0")
        if p.noise_std < 0:
            raise ConfigError("problem.noise_std must be >= 0")
        if net.n_agents < 1:
            raise ConfigError("network.n_agents must be >= 1")
        if not net.weights_file and not 0.0 <= net.edge_prob <= 1.0:
            raise ConfigError("network.edge_prob must lie in [0, 1]")
        if a.variant not in VARIANTS:
            raise ConfigError(f"algorithm.variant must be one of {VARIANTS}, got {a.variant!r}")
        if a.formulation not in FORMULATIONS:
            raise ConfigError(f"algorithm.formulation must be one of {FORMULATIONS}, got {a.formulation!r}")
        if not a.blocks:
            raise ConfigError("algorithm.blocks must list at least one block count")
        for B in a.blocks:
            if not 1 <= B <= p.n:
                raise ConfigError(f"block count {B} must lie in [1, n={p.n}]")
        if a.block_probs:
            if len(a.blocks) != 1 or len(a.block_probs) != a.blocks[0]:
                raise ConfigError("algorithm.block_probs needs exactly one block count and one probability per block")
            if min(a.block_probs) <= 0 or abs(sum(a.block_probs) - 1.0) > 1e-12:
                raise ConfigError("algorithm.block_probs must be positive and sum to 1")
        if (a.geometry, a.feasible_set) not in (("quadratic", "all"), ("quadratic", "box"), ("entropy", "simplex")):
            raise ConfigError(f"unsupported geometry {a.geometry!r} on feasible set {a.feasible_set!r}")
        if a.feasible_set == "box" and not a.lower < a.upper:
            raise ConfigError("algorithm.lower must be below algorithm.upper")
        if a.variant == "subgradient" and (a.geometry, a.feasible_set) != ("quadratic", "all"):
            raise ConfigError("the subgradient variant needs quadratic geometry on all of R^n")
        if a.variant == "smooth" and p.kind == "logistic_l1" and p.lam > 0:
            raise ConfigError("the smooth variant needs lam = 0 for the logistic problem")
        if a.variant == "separable" and p.kind == "logistic_l1":
            raise ConfigError("the separable variant needs a separable problem")
        if a.stepsize not in ("constant", "diminishing"):
            raise ConfigError(f"algorithm.stepsize must be 'constant' or 'diminishing', got {a.stepsize!r}")
        if a.alpha <= 0:
            raise ConfigError("algorithm.alpha must be > 0")
        if a.stepsize == "diminishing" and not 0.5 < a.exponent <= 1.0:
            raise ConfigError("algorithm.exponent must lie in (0.5, 1]")
        if not 0.0 < a.p_on <= 1.0:
            raise ConfigError("algorithm.p_on must lie in (0, 1]")
        if a.horizon < 0:
            raise ConfigError("algorithm.horizon must be >= 0")
        if a.initial not in ("uniform", "zeros"):
            raise ConfigError("algorithm.initial must be 'uniform' or 'zeros'")
        if m.eval_every < 1 or m.seeds < 1 or m.reference_iterations < 1:
            raise ConfigError("metrics.eval_every, metrics.seeds and metrics.reference_iterations must be >= 1")
        return self


_SPEC_TYPES = {"problem": ProblemSpec, "network": NetworkSpec, "algorithm": AlgorithmSpec,
               "metrics": MetricsSpec, "output": OutputSpec}


def _coerce(section: str, cls, raw: dict, base_dir: Path | None):
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}")
        default = getattr(cls(), key)
        try:
            if isinstance(default, bool):
                if not isinstance(value, bool):
                    raise TypeError
            elif isinstance(default, int):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise TypeError
            elif isinstance(default, float):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError
                value = float(value)
            elif isinstance(default, str):
                if not isinstance(value, str):
                    raise TypeError
            elif isinstance(default, tuple):
                if not isinstance(value, list):
                    raise TypeError
                conv = int if key == "blocks" else float
                value = tuple(conv(v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{section}.{key}: expected {type(default).__name__}, got {value!r}") from None
        if key in ("dataset", "weights_file") and value and base_dir is not None:
            value = str((base_dir / value).resolve()) if not Path(value).is_absolute() else value
        out[key] = value
    return cls(**out)


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    for section in raw:
        if section not in _SPEC_TYPES:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"[{section}] must be a table")
    parts = {s: _coerce(s, cls, raw.get(s, {}), base_dir) for s, cls in _SPEC_TYPES.items()}
    return ExperimentConfig(**parts).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, path.parent)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    for section in d.values():
        for k, v in section.items():
            if isinstance(v, tuple):
                section[k] = list(v)
    return d


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def with_overrides(cfg: ExperimentConfig, seed: int | None = None, output_dir: str | None = None) -> ExperimentConfig:
    if seed is not None:
        cfg = replace(cfg, algorithm=replace(cfg.algorithm, seed=seed))
    if output_dir is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=output_dir))
    return cfg.validate()
