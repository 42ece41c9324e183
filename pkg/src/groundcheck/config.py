"""Run configuration: one YAML document mirroring :class:`RunConfig`.

Example::

    seed: 0
    output_dir: runs/bench
    cache_dir: .cache/llm
    rationale_k: 3
    chunking: {max_chars: 24000, overlap_chars: 2000}
    backends:
      judge:
        base_address: http://localhost:8000/v1
        model_id: my-judge-8b
        max_in_flight: 8
        retry: {max_attempts: 4, base_backoff: 2.0}
      offline:
        mock_reply: '{"rationale": "stub", "output": 1}'
    manifests_file: bench.yaml

Credentials never live here: a backend named ``judge`` reads its key from
``JUDGE_API_KEY`` (or the variable named by ``auth_env``).
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .ingest import DatasetManifest, load_manifests
from .judge import ChunkingPolicy
from .llm import BackendProfile, ChatClient, DiskCache, MockBackend


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BackendSpec:
    profile: BackendProfile
    mock_script: str | None = None
    mock_reply: str | None = None

    @property
    def is_mock(self) -> bool:
        return self.mock_script is not None or self.mock_reply is not None

    def snapshot(self) -> dict[str, Any]:
        p = self.profile
        d = {
            "model_id": p.model_id,
            "base_address": p.base_address,
            "temperature": p.temperature,
            "max_output_tokens": p.max_output_tokens,
            "max_in_flight": p.max_in_flight,
            "retry": p.retry.__dict__,
            "timeout": p.timeout,
            "api_key_env": p.api_key_env,
        }
        if self.is_mock:
            d["mock"] = True
        return d


@dataclass
class RunConfig:
    backends: dict[str, BackendSpec] = field(default_factory=dict)
    manifests: list[DatasetManifest] = field(default_factory=list)
    chunking: ChunkingPolicy = field(default_factory=ChunkingPolicy)
    rationale_k: int = 3
    seed: int = 0
    output_dir: str = "runs"
    cache_dir: str | None = None
    source: str | None = None

    def backend(self, name: str) -> BackendSpec:
        if name not in self.backends:
            known = ", ".join(sorted(self.backends)) or "none configured"
            raise ConfigError(f"unknown backend {name!r} (known: {known})")
        return self.backends[name]

    def client(self, name: str, cache_dir: str | None = None, max_in_flight: int | None = None) -> ChatClient:
        spec = self.backend(name)
        profile = spec.profile
        if max_in_flight is not None:
            profile = replace(profile, max_in_flight=max(1, min(profile.max_in_flight, max_in_flight)))
        cache_root = cache_dir or self.cache_dir
        cache = DiskCache(cache_root) if cache_root else None
        rng = random.Random(self.seed)
        if spec.mock_script is not None:
            with open(spec.mock_script, encoding="utf-8") as fh:
                script = [json.loads(line) for line in fh if line.strip()]
            return ChatClient(profile, MockBackend(script=script), cache, sleep=lambda _s: None, rng=rng)
        if spec.mock_reply is not None:
            reply = spec.mock_reply
            return ChatClient(profile, MockBackend(responder=lambda _m: reply), cache, sleep=lambda _s: None, rng=rng)
        return ChatClient(profile, cache=cache, rng=rng)

    def snapshot(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "cache_dir": self.cache_dir,
            "rationale_k": self.rationale_k,
            "chunking": self.chunking.__dict__,
            "backends": {k: v.snapshot() for k, v in sorted(self.backends.items())},
            "manifests": [m.name for m in self.manifests],
        }


def _backend(name: str, data: Mapping[str, Any], base: Path) -> BackendSpec:
    data = dict(data or {})
    script = data.pop("mock_script", None)
    reply = data.pop("mock_reply", None)
    if script is not None and not os.path.isabs(script):
        script = str(base / script)
    if "model_id" not in data:
        if script is None and reply is None:
            raise ConfigError(f"backend {name!r}: model_id is required")
        data["model_id"] = f"mock:{name}"
    try:
        profile = BackendProfile.from_dict(name, data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"backend {name!r}: {exc}") from exc
    return BackendSpec(profile, script, reply)


def load_config(path: str | os.PathLike | None, seed: int | None = None) -> RunConfig:
    """Load a run config; ``None`` gives the defaults. ``seed`` overrides the file."""
    if path is None:
        return RunConfig(seed=seed or 0)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    base = path.parent
    known = {"backends", "manifests", "manifests_file", "chunking", "rationale_k", "seed", "output_dir", "cache_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    run_seed = seed if seed is not None else int(data.get("seed", 0))
    try:
        manifests = [DatasetManifest.from_dict(m, base, run_seed) for m in data.get("manifests") or []]
        if data.get("manifests_file"):
            manifests += load_manifests(base / data["manifests_file"], run_seed)
        chunking = ChunkingPolicy(**(data.get("chunking") or {}))
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    k = int(data.get("rationale_k", 3))
    if k < 1:
        raise ConfigError("rationale_k must be positive")
    cache_dir = data.get("cache_dir")
    if cache_dir and not os.path.isabs(cache_dir):
        cache_dir = str(base / cache_dir)
    out = data.get("output_dir", "runs")
    if not os.path.isabs(out):
        out = str(base / out)
    return RunConfig(
        backends={n: _backend(n, d, base) for n, d in (data.get("backends") or {}).items()},
        manifests=manifests,
        chunking=chunking,
        rationale_k=k,
        seed=run_seed,
        output_dir=out,
        cache_dir=cache_dir,
        source=str(path),
    )
