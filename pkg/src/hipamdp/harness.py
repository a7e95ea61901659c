"""Experiment orchestration: configs, multi-seed runs and result files.

A run directory is named ``<algorithm>-<env>-<hash>`` where the hash covers
everything that influences training except the seed list.  Inside it:

    config.json          resolved configuration
    seed-<n>.csv         per-epoch learning curve of one seed
    seed-<n>.ckpt        final policy parameters
    aggregate.csv        per-epoch mean and std across seeds
    summary.json         best epoch, final return, wall time

Seed files are written once.  A rerun with the same configuration reuses
existing seed files instead of overwriting them.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .envs import ENVIRONMENTS, make_env
from .paddpg import PaddpgConfig, paddpg_train
from .policies import HierarchicalPolicy, PaddpgActor
from .svg0 import Svg0Config, pasvg0_train
from .trpo import (KLEstimator, TrustRegionConfig, collect_rollouts, estimate_kl, patrpo_train,
                   snapshot_behavior, trpo_update)

log = logging.getLogger(__name__)

ALGORITHMS = ("patrpo", "pasvg0", "paddpg")
ENV_PREFIX = "HIPAMDP_"
SECTIONS = {"trpo": TrustRegionConfig, "svg0": Svg0Config, "paddpg": PaddpgConfig}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    algorithm: str = "patrpo"
    env: str = "platform"
    env_overrides: dict = field(default_factory=dict)
    epochs: int = 100
    steps_per_epoch: int = 10_000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    trpo: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    svg0: Svg0Config = field(default_factory=Svg0Config)
    paddpg: PaddpgConfig = field(default_factory=PaddpgConfig)
    out_dir: str = "runs"

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"env must be one of {sorted(ENVIRONMENTS)}, got {self.env!r}")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigError("epochs and steps_per_epoch must be positive")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seeds")
        try:
            make_env(self.env, self.env_overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad env_overrides: {exc}") from exc
        return self

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                v = {k: list(x) if isinstance(x, tuple) else x for k, x in dataclasses.asdict(v).items()}
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = unflatten_keys(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for name, section_cls in SECTIONS.items():
            if name in kwargs:
                sub = kwargs[name]
                if not isinstance(sub, dict):
                    raise ConfigError(f"section {name!r} must be a mapping")
                fields = {f.name for f in dataclasses.fields(section_cls)}
                bad = set(sub) - fields
                if bad:
                    raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
                try:
                    kwargs[name] = section_cls(**sub)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"section {name!r}: {exc}") from exc
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def resolved(self) -> dict:
        """Everything that affects training apart from the seed list."""
        d = self.to_dict()
        d.pop("seeds")
        d.pop("out_dir")
        for name in SECTIONS:
            if name != _section_for(self.algorithm):
                d.pop(name)
        return d

    def run_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def run_dir(self) -> Path:
        return Path(self.out_dir) / f"{self.algorithm}-{self.env}-{self.run_hash()}"

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})


def _section_for(algorithm: str) -> str:
    return {"patrpo": "trpo", "pasvg0": "svg0", "paddpg": "paddpg"}[algorithm]


def unflatten_keys(d: dict) -> dict:
    """Turn ``{"trpo.delta": 0.01}`` into ``{"trpo": {"delta": 0.01}}``."""
    out: dict = {}
    for key, value in d.items():
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"key {key!r} conflicts with a scalar entry")
        if isinstance(value, dict):
            node.setdefault(parts[-1], {}).update(unflatten_keys(value))
        else:
            node[parts[-1]] = value
    return out


def env_overrides(environ=None, prefix: str = ENV_PREFIX) -> dict:
    """Config entries from environment variables.

    ``HIPAMDP_TRPO__DELTA=0.01`` sets ``trpo.delta``; values are parsed as JSON
    when possible and kept as strings otherwise.
    """
    environ = os.environ if environ is None else environ
    out = {}
    for name, raw in environ.items():
        if not name.startswith(prefix):
            continue
        key = name[len(prefix):].lower().replace("__", ".")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None,
                environ=None) -> ExperimentConfig:
    """File, then environment variables, then explicit overrides."""
    d: dict = {}
    if path is not None:
        d = unflatten_keys(json.loads(Path(path).read_text()))
    for layer in (env_overrides(environ), overrides or {}):
        d = _merge(d, unflatten_keys(layer))
    return ExperimentConfig.from_dict(d).validate()


def _merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


# ---------------------------------------------------------------------------
# result files


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    columns: list[str] = []
    for r in rows:
        columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, float("nan"))) for c in columns])
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: _parse(v) for k, v in r.items()} for r in rows]


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def _write_new(path: Path, text: str | bytes):
    """Create ``path``; refuse to replace different existing content."""
    data = text.encode() if isinstance(text, str) else text
    if path.exists():
        if path.read_bytes() != data:
            raise FileExistsError(f"{path} exists with different content; not overwriting")
        return
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def _write_replaceable(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def aggregate_rows(per_seed: dict[int, list[dict]]) -> list[dict]:
    """Per-epoch mean and population std of every numeric column across seeds.

    Text columns (such as update flags) are left out.
    Epochs where a seed recorded NaN (no finished episode) are averaged over
    the remaining seeds.
    """
    seeds = sorted(per_seed)
    n_epochs = min(len(per_seed[s]) for s in seeds)
    columns = [c for c in per_seed[seeds[0]][0] if c not in ("epoch", "env_steps")
               and all(isinstance(r.get(c), (int, float)) for s in seeds for r in per_seed[s])]
    out = []
    for e in range(n_epochs):
        row = {"epoch": e, "env_steps": per_seed[seeds[0]][e]["env_steps"], "n_seeds": len(seeds)}
        for c in columns:
            vals = np.array([float(per_seed[s][e].get(c, float("nan"))) for s in seeds])
            finite = vals[np.isfinite(vals)]
            row[f"{c}_mean"] = float(np.mean(finite)) if finite.size else float("nan")
            row[f"{c}_std"] = float(np.std(finite)) if finite.size else float("nan")
        out.append(row)
    return out


def curve_summary(rows: list[dict], key: str = "mean_return", tail: int = 10) -> dict:
    vals = np.array([float(r[key]) for r in rows])
    finite = np.where(np.isfinite(vals), vals, -np.inf)
    best = int(np.argmax(finite))
    return {
        "best_epoch": best,
        "best_return": float(vals[best]),
        "final_return": float(vals[-1]),
        "final_tail_mean": float(np.nanmean(vals[-tail:])),
    }


# ---------------------------------------------------------------------------
# training dispatch


def train_seed(config: ExperimentConfig, seed: int):
    """Train one seed; returns (rows, ParameterSet of the final policy)."""
    env = make_env(config.env, config.env_overrides)
    if config.algorithm == "patrpo":
        policy, rows = patrpo_train(env, config.trpo, config.epochs, config.steps_per_epoch, seed)
        return rows, policy.params
    if config.algorithm == "pasvg0":
        agent, rows = pasvg0_train(env, config.svg0, config.epochs, config.steps_per_epoch, seed)
        return rows, agent.policy.params
    agent, rows = paddpg_train(env, config.paddpg, config.epochs, config.steps_per_epoch, seed)
    return rows, agent.actor.params


@dataclass
class RunResult:
    run_dir: Path
    per_seed: dict[int, list[dict]]
    aggregate: list[dict]
    summary: dict


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Train every seed that has no result file yet, then aggregate.

    The aggregate covers every seed file in the run directory, so seeds run
    as separate processes (``--seed n``) combine into one curve.
    """
    config.validate()
    run_dir = config.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_new(run_dir / "config.json", json.dumps(config.resolved(), indent=2, sort_keys=True) + "\n")

    per_seed, wall = {}, {}
    summary_path = run_dir / "summary.json"
    previous = json.loads(summary_path.read_text()) if summary_path.exists() else {}
    for seed in config.seeds:
        csv_path = run_dir / f"seed-{seed}.csv"
        if csv_path.exists():
            log.info("seed %d: reusing %s", seed, csv_path)
            per_seed[seed] = read_csv(csv_path)
            wall[seed] = previous.get("seeds", {}).get(str(seed), {}).get("wall_time_s", float("nan"))
            continue
        t0 = time.perf_counter()
        rows, params = train_seed(config, seed)
        wall[seed] = time.perf_counter() - t0
        _write_new(run_dir / f"seed-{seed}.ckpt",
                   dc.parameters_to_bytes(params, {"algorithm": config.algorithm, "seed": seed}))
        _write_new(csv_path, rows_to_csv(rows))
        per_seed[seed] = read_csv(csv_path)

    for path in sorted(run_dir.glob("seed-*.csv")):
        seed = int(path.stem.split("-", 1)[1])
        if seed not in per_seed:
            per_seed[seed] = read_csv(path)
            wall[seed] = previous.get("seeds", {}).get(str(seed), {}).get("wall_time_s", float("nan"))
    agg = aggregate_rows(per_seed)
    _write_replaceable(run_dir / "aggregate.csv", rows_to_csv(agg))
    agg_curve = [{"mean_return": r["mean_return_mean"]} for r in agg]
    summary = {
        "algorithm": config.algorithm,
        "env": config.env,
        "run_hash": config.run_hash(),
        "seeds": {str(s): {**curve_summary(per_seed[s]), "wall_time_s": wall[s]} for s in sorted(per_seed)},
        "aggregate": curve_summary(agg_curve),
        "wall_time_s": float(np.nansum(list(wall.values()))),
    }
    _write_replaceable(summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunResult(run_dir, per_seed, agg, summary)


# ---------------------------------------------------------------------------
# comparisons


def _combine(results: dict[str, RunResult], label: str) -> str:
    rows = []
    for variant, res in results.items():
        for r in res.aggregate:
            rows.append({label: variant, **r})
    return rows_to_csv(rows)


def compare_kl_estimators(config: ExperimentConfig, variance_reps: int = 100,
                          variance_steps: int = 1000) -> dict[str, RunResult]:
    """One run per KL estimator with shared seeds, plus the estimator-variance table."""
    if config.algorithm != "patrpo":
        raise ConfigError("KL estimator comparison needs algorithm = patrpo")
    config.validate()
    results = {}
    for mode in KLEstimator:
        cfg = config.replace(trpo={**config.to_dict()["trpo"], "kl_estimator": mode.value})
        results[mode.value] = run_experiment(cfg)
    out = Path(config.out_dir) / f"compare-kl-{config.env}-{config.run_hash()}"
    out.mkdir(parents=True, exist_ok=True)
    _write_replaceable(out / "aggregate.csv", _combine(results, "kl_estimator"))
    table = estimator_variance(config, reps=variance_reps, steps=variance_steps)
    _write_replaceable(out / "kl_estimator_variance.csv", rows_to_csv(table))
    _write_replaceable(out / "runs.json", json.dumps(
        {k: str(v.run_dir) for k, v in results.items()}, indent=2, sort_keys=True) + "\n")
    return results


def compare_step_sizes(config: ExperimentConfig, deltas=(0.005, 0.01, 0.05)) -> dict[str, RunResult]:
    """One run per trust-region size with shared seeds."""
    if config.algorithm != "patrpo":
        raise ConfigError("step-size comparison needs algorithm = patrpo")
    config.validate()
    results = {}
    for delta in deltas:
        cfg = config.replace(trpo={**config.to_dict()["trpo"], "delta": float(delta)})
        results[repr(float(delta))] = run_experiment(cfg)
    out = Path(config.out_dir) / f"compare-delta-{config.env}-{config.run_hash()}"
    out.mkdir(parents=True, exist_ok=True)
    _write_replaceable(out / "aggregate.csv", _combine(results, "delta"))
    _write_replaceable(out / "runs.json", json.dumps(
        {k: str(v.run_dir) for k, v in results.items()}, indent=2, sort_keys=True) + "\n")
    return results


def estimator_variance(config: ExperimentConfig, reps: int = 100, steps: int = 1000,
                       seed: int = 12345) -> list[dict]:
    """Spread of each KL estimator over repeated batches for one fixed policy pair.

    The pair is a freshly initialised policy and the result of one trust-region
    step from it.  Every repetition draws a new batch from the first policy and
    evaluates all estimators on it, so the columns are paired.
    """
    init_rng, rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    env = make_env(config.env, config.env_overrides)
    old = HierarchicalPolicy(env.spec, config.trpo.hidden_sizes, init_rng, config.trpo.log_std_init)
    new = old.clone()
    batch = collect_rollouts(env, old, steps, rng, config.trpo.gamma)
    batch.advantages = (batch.returns - batch.returns.mean()) / (batch.returns.std() + 1e-8)
    snapshot_behavior(old, batch)
    trpo_update(new, batch, config.trpo)
    samples = {m.value: [] for m in KLEstimator}
    for _ in range(reps):
        b = collect_rollouts(env, old, steps, rng, config.trpo.gamma)
        snapshot_behavior(old, b)
        with dc.no_grad():
            for m in KLEstimator:
                samples[m.value].append(estimate_kl(new, b, m).item())
    table = []
    for m, vals in samples.items():
        v = np.array(vals)
        table.append({"estimator": m, "reps": reps, "batch_steps": steps, "mean": float(v.mean()),
                      "std": float(v.std(ddof=1)), "variance": float(v.var(ddof=1))})
    return table


# ---------------------------------------------------------------------------
# checkpoint evaluation


def load_policy(run_dir: str | Path, seed: int):
    """Rebuild the trained policy of one seed from its run directory."""
    run_dir = Path(run_dir)
    cfg = ExperimentConfig.from_dict(json.loads((run_dir / "config.json").read_text()))
    env = make_env(cfg.env, cfg.env_overrides)
    header, flat = dc.load_parameters(run_dir / f"seed-{seed}.ckpt")
    if cfg.algorithm == "paddpg":
        net = PaddpgActor(env.spec, cfg.paddpg.hidden_sizes)
    else:
        hidden = cfg.trpo.hidden_sizes if cfg.algorithm == "patrpo" else cfg.svg0.hidden_sizes
        net = HierarchicalPolicy(env.spec, hidden)
    if header["names"] != net.params.names:
        raise ValueError(f"checkpoint layout does not match a {cfg.algorithm} policy")
    net.params.set_flat(flat)
    return cfg, env, net


def greedy_eval(run_dir: str | Path, seed: int, episodes: int = 10, env_seed: int = 0) -> float:
    """Mean undiscounted return of the greedy policy stored for ``seed``."""
    from .evaluation import greedy_return, hierarchical_greedy
    from .policies import act_paddpg

    cfg, env, net = load_policy(run_dir, seed)
    rng = np.random.default_rng(env_seed)
    if cfg.algorithm == "paddpg":
        def act(obs):
            return act_paddpg(net, obs, 0.0, 0.0, rng)[0]
    else:
        act = hierarchical_greedy(net)
    return greedy_return(env, act, rng, episodes)
