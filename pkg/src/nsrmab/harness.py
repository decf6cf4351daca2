"""Experiment orchestration: config, oracle, multi-run regret accounting and
CSV output."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .baselines import RandomPolicy, WIQLPolicy, WiqlConstants, ucwhittle_policy
from .environments import FAMILY_DEFAULTS, EnvironmentTruth, build_environment
from .learning.counts import drift_exponent, select_window
from .learning.learner import IndexPolicy, LearnerConfig, SlidingWindowWhittle
from .simulation import decision_rng, run_episode, transition_uniforms

log = logging.getLogger(__name__)

POLICIES = ("ours", "ucwhittle", "wiql", "random", "oracle")
ORACLE = "oracle"
RNG_ALGORITHM = "philox"


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    """A failure inside one (run, policy, episode), with its location."""

    def __init__(self, message: str, run: int, policy: str, episode: int):
        super().__init__(f"run {run}, policy {policy}, episode {episode}: {message}")
        self.run, self.policy, self.episode = run, policy, episode
        self.message = message

    def __reduce__(self):
        return type(self), (self.message, self.run, self.policy, self.episode)


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark setting.

    ``window`` is ``"auto"`` (from the drift exponent), ``"full"`` (all
    history) or a positive integer; it applies to drifting arms only.
    ``drift_exponent`` optionally sets the environment step so that the
    row-level drift is ``T**-k``; otherwise ``k`` is inferred from the step.
    """

    family: str = "onedim"
    N: int = 10
    M: int = 1
    H: int = 100
    T: int = 50
    gamma: float = 0.99
    mix: float = 0.5
    env: dict = field(default_factory=dict)
    window: str | int = "auto"
    drift_exponent: float | None = None
    eta1: float = 0.05
    eta2: float = 0.05
    policies: tuple = ("ours", "ucwhittle", "wiql", "random")
    runs: int = 50
    seed: int = 0
    out: str = "results"
    optimizer: str = "auto"
    wiql: dict = field(default_factory=dict)
    rng: str = RNG_ALGORITHM

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "env", dict(self.env))
        object.__setattr__(self, "wiql", dict(self.wiql))
        self.validate()

    def validate(self):
        if self.family not in FAMILY_DEFAULTS:
            raise ConfigError(f"unknown family {self.family!r}; choose from {sorted(FAMILY_DEFAULTS)}")
        if not 1 <= self.M <= self.N:
            raise ConfigError(f"need 1 <= M <= N, got M={self.M}, N={self.N}")
        if self.H < 1 or self.T < 1:
            raise ConfigError("H and T must be at least 1")
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if not 0 <= self.mix <= 1:
            raise ConfigError("mix must lie in [0, 1]")
        if self.eta1 <= 0 or self.eta2 <= 0:
            raise ConfigError("eta1 and eta2 must be positive")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad or not self.policies:
            raise ConfigError(f"unknown policies {bad}; choose from {list(POLICIES)}")
        if len(set(self.policies)) != len(self.policies):
            raise ConfigError("duplicate policy names")
        unknown = set(self.env) - set(FAMILY_DEFAULTS[self.family])
        if unknown:
            raise ConfigError(f"unknown {self.family} parameters: {sorted(unknown)}")
        if isinstance(self.window, str):
            if self.window not in ("auto", "full"):
                raise ConfigError("window must be 'auto', 'full' or a positive integer")
        elif int(self.window) < 1:
            raise ConfigError("window must be a positive integer")
        if self.drift_exponent is not None and self.drift_exponent <= 0:
            raise ConfigError("drift_exponent must be positive")
        if self.optimizer not in ("auto", "extended", "monotone"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.rng != RNG_ALGORITHM:
            raise ConfigError(f"only the {RNG_ALGORITHM!r} generator is supported")
        try:
            WiqlConstants(gamma=self.gamma, **self.wiql)
        except TypeError as exc:
            raise ConfigError(f"bad wiql constants: {exc}") from None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path} is not valid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policies"] = list(self.policies)
        return d

    def env_params(self) -> dict:
        params = dict(self.env)
        if self.drift_exponent is not None:
            params["epsilon"] = self.T ** -self.drift_exponent / 2.0
        return params

    def step_size(self) -> float:
        return self.env_params().get("epsilon", FAMILY_DEFAULTS[self.family]["epsilon"])

    def drift_window(self) -> int:
        """Window for drifting arms."""
        if self.window == "full":
            return self.T
        if self.window != "auto":
            return min(int(self.window), self.T)
        l1 = 2.0 * self.step_size()
        if l1 <= 0 or self.T < 2:
            return self.T
        k = self.drift_exponent if self.drift_exponent is not None else drift_exponent(min(l1, 0.999), self.T)
        return select_window(self.T, k)


def build_truth(config: ExperimentConfig, run: int) -> EnvironmentTruth:
    return build_environment(config.family, config.N, config.T, config.seed + run, config.mix,
                             **config.env_params())


class WhittleOracle(IndexPolicy):
    """Whittle index policy computed from the true kernels of each episode."""

    name = ORACLE

    def __init__(self, truth: EnvironmentTruth, budget: int, gamma: float):
        super().__init__(truth.n_arms, budget, gamma)
        self.truth = truth

    def begin_episode(self, episode, rng=None):
        kernels = self.truth.kernels(episode)
        self.tables = np.stack([self.index_table(P, r) for P, r in zip(kernels, self.truth.rewards)])


def learner_config(config: ExperimentConfig, truth: EnvironmentTruth) -> LearnerConfig:
    w = config.drift_window()
    windows = tuple(w if spec.drifting else config.T for spec in truth.specs)
    return LearnerConfig(config.N, config.M, config.H, config.T, config.gamma, config.eta1,
                         config.eta2, windows, optimizer=config.optimizer)


def make_policy(name: str, config: ExperimentConfig, truth: EnvironmentTruth):
    if name == "ours":
        return SlidingWindowWhittle(learner_config(config, truth), truth.priors, truth.rewards,
                                    truth.value_orders())
    if name == "ucwhittle":
        return ucwhittle_policy(learner_config(config, truth), truth.priors, truth.rewards,
                                truth.value_orders())
    if name == "wiql":
        return WIQLPolicy(config.N, config.M, truth.n_states, WiqlConstants(gamma=config.gamma, **config.wiql))
    if name == "random":
        return RandomPolicy(config.N, config.M)
    if name == ORACLE:
        return WhittleOracle(truth, config.M, config.gamma)
    raise ConfigError(f"unknown policy {name!r}")


def play(policy, truth: EnvironmentTruth, seed: int, stream_name: str, episode: int, horizon: int,
         gamma: float) -> float:
    uniforms = transition_uniforms(seed, stream_name, episode, truth.n_arms, horizon)
    rng = decision_rng(seed, stream_name, episode)
    trace = run_episode(policy, truth.kernels(episode), truth.rewards, truth.start_states,
                        uniforms, episode, rng)
    return trace.discounted_reward(gamma)


def oracle_episode_reward(truth: EnvironmentTruth, episode: int, seed: int, budget: int, horizon: int,
                          gamma: float, oracle: WhittleOracle | None = None) -> float:
    """Discounted reward of the true-kernel Whittle policy in ``episode``,
    on the oracle's own random stream."""
    if not 1 <= episode <= truth.n_episodes:
        raise ValueError(f"episode {episode} outside 1..{truth.n_episodes}")
    oracle = oracle or WhittleOracle(truth, budget, gamma)
    return play(oracle, truth, seed, ORACLE, episode, horizon, gamma)


@dataclass(frozen=True)
class RegretRecord:
    run: int
    policy: str
    episode: int
    oracle_reward: float
    policy_reward: float
    regret: float
    cumulative_regret: float


def run_single(config: ExperimentConfig, run: int) -> tuple[list[RegretRecord], ExperimentError | None]:
    """All policies of one run. Returns the records produced so far and the
    error that stopped the run, if any."""
    seed = config.seed + run
    records: list[RegretRecord] = []
    policy, episode = ORACLE, 0
    try:
        truth = build_truth(config, run)
        oracle = WhittleOracle(truth, config.M, config.gamma)
        oracle_rewards = []
        for episode in range(1, config.T + 1):
            oracle_rewards.append(oracle_episode_reward(truth, episode, seed, config.M, config.H,
                                                        config.gamma, oracle))
        for policy in config.policies:
            episode = 0
            agent = oracle if policy == ORACLE else make_policy(policy, config, truth)
            cumulative = 0.0
            for episode in range(1, config.T + 1):
                reward = play(agent, truth, seed, policy, episode, config.H, config.gamma)
                regret = oracle_rewards[episode - 1] - reward
                cumulative += regret
                records.append(RegretRecord(run, policy, episode, oracle_rewards[episode - 1], reward,
                                            regret, cumulative))
    except Exception as exc:  # noqa: BLE001 - re-raised with context by the caller
        return records, ExperimentError(f"{type(exc).__name__}: {exc}", run, policy, episode)
    return records, None


def _run_star(args):
    return run_single(*args)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RegretRecord]

    def cumulative(self, policy: str) -> np.ndarray:
        """Cumulative regret, shape ``(runs, T)``."""
        rows = [r for r in self.records if r.policy == policy]
        if not rows:
            raise KeyError(policy)
        runs = sorted({r.run for r in rows})
        out = np.empty((len(runs), self.config.T))
        pos = {run: i for i, run in enumerate(runs)}
        for r in rows:
            out[pos[r.run], r.episode - 1] = r.cumulative_regret
        return out

    def curve(self, policy: str) -> tuple[np.ndarray, np.ndarray]:
        return _mean_std(self.cumulative(policy))

    def final(self, policy: str) -> tuple[float, float]:
        mean, std = self.curve(policy)
        return float(mean[-1]), float(std[-1])


def _mean_std(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros_like(mean)
    return mean, std


def run_experiment(config: ExperimentConfig, workers: int = 1, partial_path=None) -> ExperimentResult:
    """Execute every run and policy. Results are ordered by (run, policy,
    episode) whatever the completion order. On failure the records gathered
    so far are written to ``partial_path`` (if given) before raising."""
    jobs = [(config, run) for run in range(config.runs)]
    if workers > 1 and config.runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_star, jobs))
    else:
        outcomes = []
        for job in jobs:
            outcomes.append(run_single(*job))
            if outcomes[-1][1] is not None:
                break
    records = [r for recs, _ in outcomes for r in recs]
    errors = [err for _, err in outcomes if err is not None]
    if errors:
        if partial_path is not None:
            write_records(records, partial_path)
        raise errors[0]
    order = {p: i for i, p in enumerate(config.policies)}
    records.sort(key=lambda r: (r.run, order[r.policy], r.episode))
    return ExperimentResult(config, records)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_records(records: Sequence[RegretRecord], path) -> Path:
    path = Path(path)
    header = [f.name for f in fields(RegretRecord)]
    rows = [[r.run, r.policy, r.episode] + [_fmt(getattr(r, k)) for k in header[3:]] for r in records]
    _write_csv(path, header, rows)
    return path


def emit_results(result: ExperimentResult, out_dir) -> tuple[Path, Path]:
    """Write ``summary.csv`` (final regret per policy) and ``curves.csv``
    (mean cumulative regret per episode)."""
    if not result.records:
        raise ValueError("no records to write")
    out_dir = Path(out_dir)
    cfg = result.config
    policies = [p for p in cfg.policies if any(r.policy == p for r in result.records)]
    summary, curves = [], []
    for p in policies:
        mean, std = result.curve(p)
        summary.append([p, cfg.N, cfg.M, cfg.H, cfg.T, _fmt(mean[-1]), _fmt(std[-1])])
        curves.extend([p, t + 1, _fmt(m), _fmt(s)] for t, (m, s) in enumerate(zip(mean, std)))
    summary_path, curves_path = out_dir / "summary.csv", out_dir / "curves.csv"
    _write_csv(summary_path, ["policy", "N", "M", "H", "T", "mean_regret", "std"], summary)
    _write_csv(curves_path, ["policy", "episode", "mean_cum_regret", "std"], curves)
    return summary_path, curves_path


def read_curves(path) -> dict[str, np.ndarray]:
    """Mean cumulative regret per policy from a ``curves.csv``."""
    path = Path(path)
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    out: dict[str, list[tuple[int, float]]] = {}
    try:
        for row in rows:
            out.setdefault(row["policy"], []).append((int(row["episode"]), float(row["mean_cum_regret"])))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed curves file ({exc})") from None
    return {p: np.array([v for _, v in sorted(vals)]) for p, vals in out.items()}


class FitError(ValueError):
    pass


def sublinearity_check(curve, min_points: int = 5) -> float:
    """Slope of log cumulative regret against log episode over the second
    half of the curve. Nonpositive entries are skipped."""
    curve = np.asarray(curve, dtype=float)
    if curve.ndim != 1 or curve.size < 10:
        raise FitError("need a curve of at least 10 episodes")
    t = np.arange(1, curve.size + 1)
    half = slice(curve.size // 2, None)
    x, y = t[half], curve[half]
    keep = np.isfinite(y) & (y > 0)
    if keep.sum() < min_points:
        raise FitError(f"only {int(keep.sum())} positive points in the second half; need {min_points}")
    slope, _ = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope)


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **overrides) if overrides else config


def standard_error(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1) / math.sqrt(values.size))
