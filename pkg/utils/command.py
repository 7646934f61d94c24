"""
Command plumbing shared by every module under commands/.

A command module defines a Command subclass and a module-level `setup(cli)` that
registers an instance, the same way extension modules register themselves.
"""

import argparse
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

from shared import CHECKPOINT_MANIFEST
from utils.config import check_sections, config_hash
from utils.corpus import SynthCorpusSpec
from utils.metrics import STOIConfig
from utils.model import AVDCNNConfig, SpeechEnhancer, build_model
from utils.runinfo import RunManifest
from utils.train import CHECKPOINT_DIR, TrainConfig

logger = logging.getLogger('avse')

CONFIG_SECTIONS = {
    "model.": AVDCNNConfig,
    "train.": TrainConfig,
    "synth.": SynthCorpusSpec,
    "stoi.": STOIConfig,
}


@dataclass
class RunContext:
    """Resolved global options handed to every command."""
    config: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    jobs: int = 1

    def __post_init__(self):
        check_sections(self.config, CONFIG_SECTIONS)

    def train_config(self, **flags) -> TrainConfig:
        values = override(self.config, "train.", **flags)
        if self.seed is not None:
            values["train.seed"] = str(self.seed)
        return TrainConfig.from_mapping(values)

    def model_config(self) -> AVDCNNConfig:
        return AVDCNNConfig.from_mapping(self.config)

    def new_model(self, kind: str, cfg: TrainConfig) -> SpeechEnhancer:
        """Fresh network of `kind`; the training init mode wins over `model.init`."""
        return build_model(kind, replace(self.model_config(), init=cfg.init), cfg.seed)

    @property
    def config_hash(self) -> str:
        values = dict(self.config)
        if self.seed is not None:
            values["seed"] = str(self.seed)
        return config_hash(values)

    def seed_or(self, default: int) -> int:
        return default if self.seed is None else self.seed

    def begin(self, command: str, seed: int, **inputs) -> RunManifest:
        return RunManifest.begin(command, self.config_hash, seed, inputs)


class Command:
    """Base class: subclasses set name/help and implement add_arguments and run."""

    name = ""
    help = ""

    def __init__(self, cli):
        self.cli = cli

    def add_arguments(self, parser: argparse.ArgumentParser):
        pass

    def run(self, args: argparse.Namespace, ctx: RunContext):
        raise NotImplementedError


def float_list(text: str) -> List[float]:
    """'-5,0,5' -> [-5.0, 0.0, 5.0]"""
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def override(values: Dict[str, str], prefix: str, **flags) -> Dict[str, str]:
    """Config values with every non-None flag written over `prefix.name`."""
    merged = dict(values)
    for key, value in flags.items():
        if value is not None:
            merged[f"{prefix}{key}"] = str(value)
    return merged


def checkpoint_dir(path) -> Path:
    """Accept either a checkpoint directory or a training run directory."""
    path = Path(path)
    if not (path / CHECKPOINT_MANIFEST).exists() and (path / CHECKPOINT_DIR / CHECKPOINT_MANIFEST).exists():
        return path / CHECKPOINT_DIR
    return path


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
