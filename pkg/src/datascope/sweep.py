"""Dataset-by-algorithm sweeps and their correlation analysis.

For every (environment, dataset seed) an online Q-learning run produces the
expert policy and the replay log. Each scheme's dataset is characterized
against the replay dataset, every offline algorithm is trained on it with
each run seed, and everything lands in one long-format CSV. The
correlation table relates the dataset measures to each algorithm's mean
omega over run seeds.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_positive_int
from .core import average_trajectory_return
from .datagen import (
    SCHEMES,
    GenerationScheme,
    OnlineTrainerConfig,
    generate,
    online_steps,
    train_online,
)
from .envs import make_env
from .io import write_dataset
from .measures import References, characterize
from .offline import ALGORITHMS, OfflineConfig, run_offline
from .stats import CorrelationTable, correlation_table

RESULT_FIELDS = (
    "env", "scheme", "dataset_seed", "algo", "run_seed", "tq", "saco", "lsaco",
    "naive_entropy_ratio", "omega", "best_return", "d_min_return", "d_expert_return",
    "status",
)
MEASURES = ("tq", "saco", "lsaco", "naive_entropy_ratio")


@dataclass(frozen=True)
class SweepSpec:
    """Grid of environments x schemes x dataset seeds x algorithms x run seeds.

    Online training runs for ``online_steps(n_samples)`` steps; the replay
    dataset is the prefix of that log, so every dataset has the same size.
    """

    envs: tuple = ("grid5", "lavagap5", "chain8")
    schemes: tuple = SCHEMES
    dataset_seeds: int = 3
    run_seeds: int = 3
    algorithms: tuple = ALGORITHMS
    n_samples: int = 5_000
    output_dir: str | None = None
    iterations: int = 200
    eval_every: int = 20
    eval_episodes: int = 10
    counter: str = "exact"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("envs", "schemes", "algorithms"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} must be non-empty")
            object.__setattr__(self, name, value)
        for name in ("dataset_seeds", "run_seeds", "n_samples", "workers"):
            check_positive_int(getattr(self, name), name)
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ValueError(f"unknown schemes {sorted(bad)}")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}")

    @property
    def n_runs(self):
        return (len(self.envs) * len(self.schemes) * self.dataset_seeds
                * len(self.algorithms) * self.run_seeds)


@dataclass
class SweepResult:
    rows: list
    table: CorrelationTable
    datasets: dict = field(default_factory=dict)  # (env, scheme, seed) -> Dataset

    @property
    def n_failed(self):
        return sum(r["status"] != "ok" for r in self.rows)

    def to_csv(self):
        return rows_to_csv(self.rows)


def _fmt(v):
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return v


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in RESULT_FIELDS])
    return buf.getvalue()


def read_results(path_or_text):
    text = path_or_text
    if isinstance(path_or_text, Path) or (
        "\n" not in str(path_or_text) and Path(path_or_text).exists()
    ):
        text = Path(path_or_text).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    missing = set(RESULT_FIELDS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"results file lacks columns {sorted(missing)}")
    rows = []
    for rec in reader:
        row = dict(rec)
        for k in ("dataset_seed", "run_seed"):
            row[k] = int(row[k])
        for k in MEASURES + ("omega", "best_return", "d_min_return", "d_expert_return"):
            row[k] = float(row[k]) if row[k] != "" else float("nan")
        rows.append(row)
    return rows


def _dataset_group(spec: SweepSpec, env: str, ds_seed: int):
    """All rows (and datasets) for one environment and dataset seed."""
    mdp = make_env(env)
    seed = spec.seed + ds_seed
    steps = online_steps(spec.n_samples)
    online = train_online(mdp, OnlineTrainerConfig(steps=steps, seed=seed))
    expert, log = online.expert, online.replay_log

    def make(kind):
        return generate(mdp, GenerationScheme(kind, spec.n_samples), expert, log, seed)

    replay = make("replay")
    d_min = average_trajectory_return(make("random"), 1.0)
    d_expert = online.best_eval_return
    refs = References(replay, d_min, d_expert)
    rows, datasets = [], {(env, "replay", ds_seed): replay}
    for scheme in spec.schemes:
        ds = make(scheme)
        datasets[(env, scheme, ds_seed)] = ds
        rep = characterize(ds, refs, spec.counter, 1.0)
        base = dict(env=env, scheme=scheme, dataset_seed=ds_seed, tq=rep.tq, saco=rep.saco,
                    lsaco=rep.lsaco, naive_entropy_ratio=rep.naive_entropy_ratio,
                    d_min_return=d_min, d_expert_return=d_expert)
        for algo in spec.algorithms:
            for run_seed in range(spec.run_seeds):
                cfg = OfflineConfig(algo, iterations=spec.iterations, eval_every=spec.eval_every,
                                    eval_episodes=spec.eval_episodes, seed=run_seed)
                row = dict(base, algo=algo, run_seed=run_seed)
                try:
                    res = run_offline(ds, mdp, cfg, d_min, d_expert)
                    row.update(omega=res.omega, best_return=res.best_eval_return, status="ok")
                except Exception as exc:  # recorded, sweep continues
                    row.update(omega=float("nan"), best_return=float("nan"),
                               status=f"failed: {type(exc).__name__}: {exc}")
                rows.append(row)
    return rows, datasets


def _safe_group(args):
    spec, env, ds_seed = args
    try:
        return _dataset_group(spec, env, ds_seed)
    except Exception as exc:
        status = f"failed: {type(exc).__name__}: {exc}"
        nan = float("nan")
        rows = [
            dict(env=env, scheme=scheme, dataset_seed=ds_seed, algo=algo, run_seed=rs,
                 tq=nan, saco=nan, lsaco=nan, naive_entropy_ratio=nan, omega=nan,
                 best_return=nan, d_min_return=nan, d_expert_return=nan, status=status)
            for scheme in spec.schemes for algo in spec.algorithms
            for rs in range(spec.run_seeds)
        ]
        return rows, {}


def dataset_table(rows, algorithms=None):
    """One record per dataset: its measures and the mean omega of every algorithm."""
    groups = {}
    for row in rows:
        key = (row["env"], row["scheme"], row["dataset_seed"])
        rec = groups.setdefault(key, {m: row[m] for m in MEASURES})
        if row["status"] == "ok":
            rec.setdefault(f"omega_{row['algo']}", []).append(row["omega"])
    algorithms = algorithms or sorted({r["algo"] for r in rows})
    out = {"key": list(groups)}
    for m in MEASURES:
        out[m] = np.array([groups[k][m] for k in groups], dtype=float)
    for algo in algorithms:
        out[f"omega_{algo}"] = np.array(
            [np.mean(groups[k][f"omega_{algo}"]) if groups[k].get(f"omega_{algo}")
             else np.nan for k in groups]
        )
    return out


def correlations(rows, algorithms=None, seed=0) -> CorrelationTable:
    cols = dataset_table(rows, algorithms)
    algos = [k for k in cols if k.startswith("omega_")]
    return correlation_table(cols, ("tq", "saco", "naive_entropy_ratio", "lsaco"), algos, seed)


def run_sweep(spec: SweepSpec, keep_datasets=False) -> SweepResult:
    jobs = [(spec, env, s) for env in spec.envs for s in range(spec.dataset_seeds)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            results = list(pool.map(_safe_group, jobs))
    else:
        results = [_safe_group(j) for j in jobs]
    rows, datasets = [], {}
    for r, d in results:
        rows.extend(r)
        datasets.update(d)
    table = correlations(rows, spec.algorithms, spec.seed)
    result = SweepResult(rows, table, datasets if keep_datasets or spec.output_dir else {})
    if spec.output_dir:
        write_outputs(result, spec.output_dir)
    if not keep_datasets:
        result.datasets = {}
    return result


def write_outputs(result: SweepResult, output_dir):
    out = Path(output_dir)
    (out / "datasets").mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(result.to_csv(), encoding="utf-8")
    (out / "correlations.csv").write_text(result.table.to_csv(), encoding="utf-8")
    for (env, scheme, seed), ds in result.datasets.items():
        write_dataset(ds, out / "datasets" / f"{env}_{scheme}_{seed}.jsonl")
