"""Persistent run store: per-episode JSON files plus a manifest, resumable."""

from __future__ import annotations

import json
import os
import re
import tempfile
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

MANIFEST = "manifest.json"


class StoreError(RuntimeError):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def timestamp() -> str:
    """UTC creation time; honours SOURCE_DATE_EPOCH so runs can be byte-reproducible."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.replace(microsecond=0).isoformat()


def safe_dirname(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("._") or "api"


def episode_filename(k: int) -> str:
    return f"episode-{k}.json"


class RunStore:
    """One run directory: ``<root>/<run-id>/<api>/episode-<k>.json`` and ``manifest.json``.

    A single instance may be shared by per-API workers; manifest writes are
    serialized through an instance lock.
    """

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self._lock = threading.Lock()
        path = self.run_dir / MANIFEST
        if not path.exists():
            raise StoreError(f"no manifest in {self.run_dir}")
        self._manifest = json.loads(path.read_text(encoding="utf-8"))

    @classmethod
    def open_or_create(cls, root: str | Path, run_id: str, config: dict) -> "RunStore":
        run_dir = Path(root) / run_id
        path = run_dir / MANIFEST
        if path.exists():
            store = cls(run_dir)
            if store.config != config:
                raise StoreError(f"run {run_id!r} already exists with a different configuration")
            return store
        manifest = {"run_id": run_id, "created": timestamp(), "config": config, "apis": {}, "artifacts": []}
        atomic_write(path, dumps(manifest))
        return cls(run_dir)

    @property
    def run_id(self) -> str:
        return self._manifest["run_id"]

    @property
    def config(self) -> dict:
        return self._manifest["config"]

    @property
    def manifest(self) -> dict:
        with self._lock:
            return json.loads(json.dumps(self._manifest))

    @property
    def apis(self) -> list[str]:
        return list(self._manifest["apis"])

    def completed_episodes(self, api: str) -> list[int]:
        with self._lock:
            return list(self._manifest["apis"].get(api, {}).get("episodes", []))

    def _api_dir(self, api: str) -> Path:
        entry = self._manifest["apis"].get(api)
        return self.run_dir / (entry["dir"] if entry else safe_dirname(api))

    def persist_episode(self, api: str, episode: int, trials: list[dict], ltm: list[dict], extra: dict | None = None) -> None:
        doc = {"api": api, "episode": episode, "trials": trials, "ltm": ltm}
        if extra:
            doc.update(extra)
        text = dumps(doc)
        with self._lock:
            entry = self._manifest["apis"].setdefault(api, {"dir": self._unique_dir(api), "episodes": []})
            done = entry["episodes"]
            path = self.run_dir / entry["dir"] / episode_filename(episode)
            if episode in done:
                if path.exists() and path.read_text(encoding="utf-8") == text:
                    return
                raise StoreError(f"{api}: episode {episode} is already persisted with different content")
            expected = len(done) + 1
            if episode != expected:
                raise StoreError(f"{api}: cannot persist episode {episode} before episode {expected}")
            atomic_write(path, text)
            done.append(episode)
            rel = path.relative_to(self.run_dir).as_posix()
            if rel not in self._manifest["artifacts"]:
                self._manifest["artifacts"].append(rel)
            self._write_manifest()

    def _unique_dir(self, api: str) -> str:
        base = safe_dirname(api)
        taken = {e["dir"] for e in self._manifest["apis"].values()}
        name, n = base, 2
        while name in taken:
            name, n = f"{base}-{n}", n + 1
        return name

    def _write_manifest(self) -> None:
        atomic_write(self.run_dir / MANIFEST, dumps(self._manifest))

    def load_episode(self, api: str, episode: int) -> dict:
        path = self._api_dir(api) / episode_filename(episode)
        return json.loads(path.read_text(encoding="utf-8"))

    def load_episodes(self, api: str) -> list[dict]:
        return [self.load_episode(api, k) for k in self.completed_episodes(api)]

    def set_status(self, api: str, status: str) -> None:
        with self._lock:
            entry = self._manifest["apis"].setdefault(api, {"dir": self._unique_dir(api), "episodes": []})
            entry["status"] = status
            self._write_manifest()


def find_runs(path: str | Path) -> list[RunStore]:
    """Run directories at ``path`` itself or anywhere beneath it, in sorted order."""
    p = Path(path)
    if (p / MANIFEST).exists() and "apis" in json.loads((p / MANIFEST).read_text(encoding="utf-8")):
        return [RunStore(p)]
    runs = []
    for m in sorted(p.rglob(MANIFEST)):
        doc = json.loads(m.read_text(encoding="utf-8"))
        if "apis" in doc and "run_id" in doc:
            runs.append(RunStore(m.parent))
    return runs


def write_output_manifest(out_dir: str | Path, kind: str, config: dict, files: Iterable[str]) -> Path:
    """Record non-exploration outputs (datasets, predictions, reports) in ``<out_dir>/manifest.json``.

    Several commands may write into one directory; their entries are merged,
    so each file stays listed exactly once.
    """
    out = Path(out_dir)
    path = out / MANIFEST
    doc = {"created": timestamp(), "artifacts": [], "producers": {}}
    if path.exists():
        old = json.loads(path.read_text(encoding="utf-8"))
        if "run_id" in old:
            raise StoreError(f"{out} holds an exploration run; write outputs elsewhere")
        doc.update({k: old[k] for k in ("created", "artifacts", "producers") if k in old})
    for f in files:
        doc["producers"][f] = {"command": kind, "config": config}
    doc["artifacts"] = sorted(set(doc["artifacts"]) | set(files))
    atomic_write(path, dumps(doc))
    return path
