"""Run artifact persistence: manifest, effective config, metric log,
and model checkpoints.

A run directory is self-describing and sufficient to reproduce the run
bit for bit: the manifest carries the exact command, a hash of the
effective config, and the seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .envs import make_env
from .eql import MLPQ, TabularQ, TrainerConfig
from .errors import ConfigError
from .reward_model import RewardModel
from .trainer import RunArtifacts

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"
METRICS_NAME = "metrics.jsonl"
REWARD_MODEL_NAME = "reward_model.npz"
QFUNCTION_NAME = "qfunction.npz"


def config_to_dict(cfg: TrainerConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> TrainerConfig:
    known = {f.name for f in dataclasses.fields(TrainerConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown trainer config fields: {sorted(unknown)}")
    try:
        return TrainerConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(cfg: TrainerConfig) -> str:
    payload = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def write_run_dir(
    outdir: str | Path,
    artifacts: RunArtifacts,
    command: list[str],
    teacher_mode: str,
    force: bool = False,
) -> Path:
    outdir = Path(outdir)
    if outdir.exists() and any(outdir.iterdir()) and not force:
        raise ConfigError(
            f"output directory {outdir} already holds a run; pass --force to replace it"
        )
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "env": artifacts.env_name,
        "teacher_mode": teacher_mode,
        "oracle": artifacts.oracle,
        "seed": artifacts.seed,
        "config_hash": config_hash(artifacts.config),
        "final_eu": artifacts.final_eu,
        "final_hv": artifacts.final_hv,
    }
    (outdir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (outdir / CONFIG_NAME).write_text(
        json.dumps(config_to_dict(artifacts.config), indent=2, sort_keys=True)
    )
    (outdir / METRICS_NAME).write_text(artifacts.metric_log_text())
    if artifacts.reward_model is not None:
        artifacts.reward_model.save(outdir / REWARD_MODEL_NAME)
    if artifacts.q is not None:
        save_qfunction(artifacts.q, outdir / QFUNCTION_NAME, artifacts.env_name)
    return outdir


def save_qfunction(q, path, env_name: str) -> None:
    arrays = q.save_arrays()
    arch = {"kind": arrays.pop("kind"), "env": env_name, "format_version": 1}
    np.savez(
        path,
        arch=np.frombuffer(json.dumps(arch).encode(), dtype=np.uint8),
        **arrays,
    )


def load_qfunction(path, env=None):
    data = np.load(path)
    arch = json.loads(bytes(data["arch"]).decode())
    if arch["kind"] == "tabular":
        return TabularQ.from_arrays({k: data[k] for k in ("table", "grid")}), arch
    env = env or make_env(arch["env"])
    sizes = [int(v) for v in data["sizes"]]
    q = MLPQ(env, m=env.spec.m, hidden=tuple(sizes[1:-1]))
    q.net.set_flat(data["params"])
    return q, arch


def load_run(outdir: str | Path) -> dict:
    outdir = Path(outdir)
    manifest_path = outdir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ConfigError(f"{outdir} does not contain a run manifest")
    manifest = json.loads(manifest_path.read_text())
    out = {"manifest": manifest, "outdir": outdir}
    out["config"] = config_from_dict(json.loads((outdir / CONFIG_NAME).read_text()))
    records = []
    metrics_path = outdir / METRICS_NAME
    if metrics_path.is_file():
        for line in metrics_path.read_text().splitlines():
            if line.strip():
                records.append(json.loads(line))
    out["metrics"] = records
    env = make_env(manifest["env"])
    out["env"] = env
    q_path = outdir / QFUNCTION_NAME
    if q_path.is_file():
        out["q"], _ = load_qfunction(q_path, env)
    model_path = outdir / REWARD_MODEL_NAME
    if model_path.is_file():
        out["reward_model"] = RewardModel.load(model_path, env)
    return out
