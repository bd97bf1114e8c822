"""Command line entry point and experiment orchestration.

    dqs evolve|trotter|train|evaluate --config job.json [--out DIR] [--jobs K]
        [--seed-override 1,2,3] [--circuit best_circuit.json]

Every output file is written to a temporary name and renamed into place.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import EvolutionConfig, HamiltonianSpec, LRI, exact_evolve, model_from_dict, trotter_params
from .neural_net import atomic_write_text, save_checkpoint
from .qlearn import TrainConfig, train
from .rewards import RewardKind, fidelity_reward, local_reward, observable_columns, observable_report
from .statevec import CircuitParams, run_circuit

log = logging.getLogger("dqs")

TRACE_COLUMNS = ["episode", "reward", "best_reward"]
AGGREGATE_COLUMNS = ["episode", "mean_reward", "std_reward", "mean_best_reward", "std_best_reward"]
SUMMARY_COLUMNS = ["seed", "status", "best_reward", "seed_reward", "best_fidelity",
                   "best_local_reward", "episodes"]


class ConfigError(ValueError):
    pass


@dataclass
class JobConfig:
    model: dict
    tau: float = 1.0
    n: int = 3
    reward: str = "local"
    seeds: list[int] = field(default_factory=lambda: [0])
    train: dict = field(default_factory=dict)
    evolution: dict = field(default_factory=dict)
    tau_grid: list | dict | None = None
    sweep: dict | None = None
    gate_alpha: float | None = None
    circuit: str | None = None
    checkpoint: bool = True
    out: str = "results"

    def __post_init__(self):
        self.spec()  # validates the model block
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        self.seeds = [int(s) for s in self.seeds]
        try:
            RewardKind(self.reward)
        except ValueError:
            raise ConfigError(f"reward must be 'local' or 'fidelity', got {self.reward!r}") from None
        bad = set(self.train) - TrainConfig.field_names()
        if bad:
            raise ConfigError(f"unknown train keys: {sorted(bad)}")
        clash = set(self.train) & {"seed", "n", "reward_kind", "gate_alpha"}
        if clash:
            raise ConfigError(f"set {sorted(clash)} at the top level, not under 'train'")
        bad = set(self.evolution) - {f.name for f in dataclasses.fields(EvolutionConfig)} | (
            set(self.evolution) & {"tau"})
        if bad:
            raise ConfigError(f"unknown evolution keys: {sorted(bad)}")
        if self.sweep is not None:
            if set(self.sweep) != {"axis", "values"} or self.sweep["axis"] not in ("N", "tau", "n"):
                raise ConfigError("sweep must be {'axis': 'N'|'tau'|'n', 'values': [...]}")
            if not self.sweep["values"]:
                raise ConfigError("sweep values must be non-empty")

    def spec(self) -> HamiltonianSpec:
        try:
            return model_from_dict(self.model)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def evolution_config(self, tau: float | None = None) -> EvolutionConfig:
        try:
            return EvolutionConfig(tau=self.tau if tau is None else tau, **self.evolution)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self, seed: int) -> TrainConfig:
        try:
            return TrainConfig(**self.train, n=self.n, seed=seed, reward_kind=self.reward,
                               gate_alpha=self.gate_alpha)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def taus(self) -> list[float]:
        grid = self.tau_grid
        if grid is None:
            return [0.0, float(self.tau)]
        if isinstance(grid, dict):
            if set(grid) != {"start", "stop", "num"}:
                raise ConfigError("tau_grid dict needs exactly start, stop, num")
            return [float(t) for t in np.linspace(grid["start"], grid["stop"], int(grid["num"]))]
        return [float(t) for t in grid]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path) -> tuple[JobConfig, dict]:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw), raw


def parse_config(raw: dict) -> JobConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(JobConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "model" not in raw:
        raise ConfigError("config needs a 'model' block")
    try:
        return JobConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))  # shortest round-trip form
    return str(value)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    atomic_write_text(path, buf.getvalue())
    return path


def write_json(path: Path, doc) -> Path:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _observables_row(psi, spec, psi0) -> dict:
    return observable_report(psi, spec, psi0).row()


def expand_sweep(cfg: JobConfig, command: str) -> list[tuple[str, JobConfig]]:
    """(subdirectory, config) pairs; a single ("", cfg) without a sweep."""
    if cfg.sweep is None:
        return [("", cfg)]
    axis = cfg.sweep["axis"]
    if axis == "n" and command == "trotter":
        return [("", cfg)]
    if axis == "n" and command == "evolve":
        raise ConfigError("an n sweep has no meaning for 'evolve'")
    out = []
    for value in cfg.sweep["values"]:
        changes = {"sweep": None}
        if axis == "N":
            changes["model"] = {**cfg.model, "N": int(value)}
        elif axis == "tau":
            changes["tau"] = float(value)
        else:
            changes["n"] = int(value)
        out.append((f"{axis}_{_fmt(value)}", dataclasses.replace(cfg, **changes)))
    return out


def cmd_evolve(cfg: JobConfig, out: Path) -> Path:
    spec = cfg.spec()
    taus = cfg.taus()
    if any(b < a for a, b in zip(taus, taus[1:])) or taus[0] < 0:
        raise ConfigError("tau_grid must be non-negative and non-decreasing")
    psi0 = spec.initial_state()
    psi, prev = psi0, 0.0
    rows = []
    for tau in taus:
        psi = exact_evolve(spec, psi, cfg.evolution_config(tau - prev))
        prev = tau
        rows.append({"tau": tau, **_observables_row(psi, spec, psi0)})
    out.mkdir(parents=True, exist_ok=True)
    return write_csv(out / "observables.csv", ["tau"] + observable_columns(spec.N), rows)


def _score(psi, target, spec, psi0) -> dict:
    local = local_reward(psi, target) if spec.N >= 2 else float("nan")
    return {"fidelity": fidelity_reward(psi, target), "local_reward": local,
            **_observables_row(psi, spec, psi0)}


def cmd_trotter(cfg: JobConfig, out: Path) -> Path:
    spec = cfg.spec()
    if not isinstance(spec, LRI):
        raise ConfigError("Trotter baseline is only defined for the LRI model")
    ns = {cfg.n}
    if cfg.sweep is not None and cfg.sweep["axis"] == "n":
        ns |= {int(v) for v in cfg.sweep["values"]}
    psi0 = spec.initial_state()
    target = exact_evolve(spec, psi0, cfg.evolution_config())
    out.mkdir(parents=True, exist_ok=True)
    (out / "circuits").mkdir(exist_ok=True)
    rows = []
    for n in sorted(ns):
        params = trotter_params(spec, cfg.tau, n)
        write_json(out / "circuits" / f"trotter_n{n}.json", params.to_dict())
        rows.append({"n": n, "tau": cfg.tau,
                     **_score(run_circuit(psi0, params), target, spec, psi0)})
    columns = ["n", "tau", "fidelity", "local_reward"] + observable_columns(spec.N)
    return write_csv(out / "trotter.csv", columns, rows)


def _train_seed(cfg: JobConfig, seed: int, out: Path) -> dict:
    spec = cfg.spec()
    tcfg = cfg.train_config(seed)
    result = train(spec, cfg.tau, tcfg, cfg.evolution_config())
    seed_dir = out / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    write_csv(seed_dir / "trace.csv", TRACE_COLUMNS,
              [dict(zip(TRACE_COLUMNS, row)) for row in result.trace])
    write_json(seed_dir / "best_circuit.json", result.best_params.to_dict())
    write_json(seed_dir / "best_actions.json",
               {"reward": result.best_reward, "actions": [a.tolist() for a in result.best_actions]})
    if cfg.checkpoint:
        save_checkpoint(seed_dir / "checkpoint.json", result.agent.behavior,
                        result.agent.adam, result.rng)
    psi0 = spec.initial_state()
    target = exact_evolve(spec, psi0, cfg.evolution_config())
    psi = run_circuit(psi0, result.best_params)
    return {
        "seed": seed, "status": "ok", "best_reward": result.best_reward,
        "seed_reward": result.seed_reward, "best_fidelity": fidelity_reward(psi, target),
        "best_local_reward": local_reward(psi, target), "episodes": tcfg.episodes,
        "trace": [row[1:] for row in result.trace],
    }


def _train_seed_safe(args) -> dict:
    cfg, seed, out = args
    try:
        return _train_seed(cfg, seed, out)
    except Exception as exc:  # one failed seed must not sink the others
        log.exception("seed %s failed", seed)
        return {"seed": seed, "status": f"failed: {type(exc).__name__}: {exc}"}


def cmd_train(cfg: JobConfig, out: Path, jobs: int = 1) -> tuple[Path, bool]:
    """Returns (summary path, all seeds succeeded)."""
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:  # surface config errors before spawning workers
        cfg.train_config(seed)
    tasks = [(cfg, seed, out) for seed in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            records = list(pool.map(_train_seed_safe, tasks))
    else:
        records = [_train_seed_safe(t) for t in tasks]

    ok = [r for r in records if r["status"] == "ok"]
    summary = [{c: r.get(c, float("nan")) for c in SUMMARY_COLUMNS} for r in records]
    if ok:
        traces = np.array([r["trace"] for r in ok])  # (seeds, episodes + 1, 2)
        agg = [{"episode": e, "mean_reward": traces[:, e, 0].mean(),
                "std_reward": traces[:, e, 0].std(), "mean_best_reward": traces[:, e, 1].mean(),
                "std_best_reward": traces[:, e, 1].std()}
               for e in range(traces.shape[1])]
        write_csv(out / "aggregate_trace.csv", AGGREGATE_COLUMNS, agg)
    record = {
        "config_hash": config_hash(cfg.to_dict()),
        "config": cfg.to_dict(),
        "seeds": {str(r["seed"]): {k: r.get(k) for k in ("status", "best_reward")} |
                  ({"trace": f"seed_{r['seed']}/trace.csv",
                    "best_circuit": f"seed_{r['seed']}/best_circuit.json"}
                   if r["status"] == "ok" else {})
                  for r in records},
    }
    write_json(out / "run.json", record)
    path = write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    return path, len(ok) == len(records)


def load_circuit(path) -> CircuitParams:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"circuit file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"circuit file is not valid JSON: {exc}") from None
    try:
        return CircuitParams.from_dict(doc)
    except (ValueError, TypeError, AttributeError) as exc:
        raise ConfigError(f"bad circuit file {path}: {exc}") from None


def cmd_evaluate(cfg: JobConfig, out: Path, circuit_path=None) -> Path:
    circuit_path = circuit_path or cfg.circuit
    if circuit_path is None:
        raise ConfigError("evaluate needs --circuit or a 'circuit' config entry")
    spec = cfg.spec()
    params = load_circuit(circuit_path)
    if params.N != spec.N or params.n != cfg.n:
        raise ConfigError(f"circuit has N={params.N}, n={params.n}; config expects "
                          f"N={spec.N}, n={cfg.n}")
    psi0 = spec.initial_state()
    target = exact_evolve(spec, psi0, cfg.evolution_config())
    row = {"tau": cfg.tau, **_score(run_circuit(psi0, params), target, spec, psi0)}
    out.mkdir(parents=True, exist_ok=True)
    columns = ["tau", "fidelity", "local_reward"] + observable_columns(spec.N)
    return write_csv(out / "evaluation.csv", columns, [row])


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqs", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=["evolve", "trotter", "train", "evaluate"])
    parser.add_argument("--config", required=True, help="job configuration JSON")
    parser.add_argument("--out", help="output directory (overrides config 'out')")
    parser.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    parser.add_argument("--seed-override", type=_parse_seeds, help="comma separated seeds")
    parser.add_argument("--circuit", help="circuit JSON for 'evaluate'")
    return parser


def _error(kind: str, detail: str) -> int:
    print(json.dumps({"error": kind, "detail": detail}), file=sys.stderr)
    return 2


def main(argv=None) -> int:
    level = os.environ.get("DQS_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg, _ = load_config(args.config)
        if args.seed_override:
            cfg = dataclasses.replace(cfg, seeds=args.seed_override)
        out_root = Path(args.out or cfg.out)
        all_ok = True
        for sub, job in expand_sweep(cfg, args.command):
            out = out_root / sub if sub else out_root
            if args.command == "evolve":
                path = cmd_evolve(job, out)
            elif args.command == "trotter":
                path = cmd_trotter(job, out)
            elif args.command == "train":
                path, ok = cmd_train(job, out, args.jobs)
                all_ok &= ok
            else:
                path = cmd_evaluate(job, out, args.circuit)
            print(path)
    except ConfigError as exc:
        return _error("config", str(exc))
    except OSError as exc:
        return _error("io", str(exc))
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
