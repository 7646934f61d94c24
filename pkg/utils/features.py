"""
Feature Extraction

Turns (clean, noisy, mouth frames) triples into network batches and stores a
whole dataset as four TNSR tensors plus an index CSV.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.dsp import Waveform, apply_norm, normalize_utterance, stft
from utils.model import Batch, StreamMismatchError, utterance_inputs
from utils.tensor_store import read_tensor, write_tensor

logger = logging.getLogger('avse')

DATASET_TENSORS = ("X", "Z", "Y", "Zc")
INDEX_FILE = "index.csv"
INDEX_FIELDS = ("utterance_id", "start", "n_frames", "noise", "sir_db", "sar_db")

PathLike = Union[str, Path]


@dataclass
class IndexRow:
    """Where one utterance's frames sit inside the dataset tensors."""
    utterance_id: str
    start: int
    n_frames: int
    noise: str = ""
    sir_db: str = ""
    sar_db: str = ""


def utterance_example(clean: Waveform, noisy: Waveform, images: Optional[np.ndarray]) -> Batch:
    """
    One utterance as a batch of T frames. The clean target is normalized with the
    noisy utterance's statistics so inference can invert it exactly.
    """
    if len(clean) != len(noisy):
        raise StreamMismatchError(f"Clean ({len(clean)}) and noisy ({len(noisy)}) lengths differ")
    noisy_frames = stft(noisy)
    norm_x, stats = normalize_utterance(noisy_frames)
    inputs = utterance_inputs(norm_x, images)
    t = inputs.n_frames
    target = apply_norm(stft(clean).logpow[:t], stats).astype(np.float32)
    return Batch(X=inputs.X, Z=inputs.Z, Y=target, Zc=inputs.central)


def build_dataset(examples: Sequence[Tuple[IndexRow, Batch]]) -> Tuple[Batch, List[IndexRow]]:
    """Concatenate per-utterance batches, filling in each row's start offset."""
    rows, start = [], 0
    for row, batch in examples:
        rows.append(IndexRow(row.utterance_id, start, len(batch), row.noise, row.sir_db, row.sar_db))
        start += len(batch)
    return Batch.concat([b for _, b in examples]), rows


def save_dataset(directory: PathLike, data: Batch, rows: Sequence[IndexRow]) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [write_tensor(directory / f"{name}.tnsr", getattr(data, name)) for name in DATASET_TENSORS]
    index = directory / INDEX_FILE
    with open(index, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=INDEX_FIELDS)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: getattr(r, k) for k in INDEX_FIELDS})
    paths.append(index)
    logger.info(f"FEATURES | {len(data)} frames from {len(rows)} utterances -> {directory}")
    return paths


def load_dataset(directory: PathLike) -> Batch:
    directory = Path(directory)
    tensors: Dict[str, np.ndarray] = {name: read_tensor(directory / f"{name}.tnsr") for name in DATASET_TENSORS}
    return Batch(**tensors)


def read_index(directory: PathLike) -> List[IndexRow]:
    path = Path(directory) / INDEX_FILE
    if not path.exists():
        return []
    with open(path, newline='', encoding='utf-8') as f:
        return [IndexRow(r["utterance_id"], int(r["start"]), int(r["n_frames"]), r.get("noise", ""),
                         r.get("sir_db", ""), r.get("sar_db", "")) for r in csv.DictReader(f)]
