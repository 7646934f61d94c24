"""
Run Manifests

Every command stamps its output directory with run_manifest.json: what ran, with
which config hash and seed, on what inputs, producing which artifacts (SHA-256),
and on which host.
"""

import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Union

import psutil

from shared import AVSEError, RUN_MANIFEST

logger = logging.getLogger('avse')

PathLike = Union[str, Path]
_CHUNK = 1 << 20


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(_CHUNK), b''):
            digest.update(chunk)
    return digest.hexdigest()


def host_info() -> Dict[str, object]:
    """A small system snapshot, in the spirit of a sysinfo report."""
    mem = psutil.virtual_memory()
    return {
        "hostname": platform.node(),
        "os": f"{platform.system()} {platform.release()}",
        "python": platform.python_version(),
        "physical_cores": psutil.cpu_count(logical=False),
        "logical_cores": psutil.cpu_count(logical=True),
        "total_ram_gb": round(mem.total / (1024 ** 3), 1),
    }


def default_jobs() -> int:
    return psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1


@dataclass
class RunManifest:
    command: str
    argv: List[str] = field(default_factory=list)
    config_hash: str = ""
    seed: int = 0
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)       # relative path -> sha256
    started: str = ""
    finished: str = ""
    host: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'RunManifest':
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    @classmethod
    def begin(cls, command: str, config_hash: str = "", seed: int = 0,
              inputs: Optional[Dict[str, PathLike]] = None) -> 'RunManifest':
        return cls(
            command=command,
            argv=list(sys.argv[1:]),
            config_hash=config_hash,
            seed=seed,
            inputs={k: str(v) for k, v in (inputs or {}).items()},
            started=datetime.now().isoformat(timespec='seconds'),
            host=host_info(),
        )

    def finish(self, out_dir: PathLike) -> Path:
        """Checksum every artifact under out_dir and write the manifest there."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs = {
            p.relative_to(out_dir).as_posix(): sha256_file(p)
            for p in sorted(out_dir.rglob('*'))
            if p.is_file() and p.name != RUN_MANIFEST and not p.name.endswith('.log')
        }
        self.finished = datetime.now().isoformat(timespec='seconds')
        path = out_dir / RUN_MANIFEST
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding='utf-8')
        logger.info(f"RUN | {self.command}: {len(self.outputs)} artifacts recorded in {path}")
        return path


def read_manifest(out_dir: PathLike) -> RunManifest:
    path = Path(out_dir) / RUN_MANIFEST
    if not path.exists():
        raise AVSEError(f"No {RUN_MANIFEST} in {out_dir}")
    return RunManifest.from_dict(json.loads(path.read_text(encoding='utf-8')))
