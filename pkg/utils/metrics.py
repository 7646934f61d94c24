"""
Objective Metrics

STOI and SDI on waveforms, the silence-residual level used by the visual probe,
and the score store: CSV import of externally computed PESQ/HASQI/HASPI values,
last-wins merging and per-condition aggregation tables.
"""

import csv
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from pystoi.utils import remove_silent_frames, stft as stoi_stft, thirdoct

from shared import AVSEError, HOP, WINDOW_LEN
from utils.config import dataclass_from_mapping
from utils.dsp import POWER_FLOOR, Waveform, resample_array

logger = logging.getLogger('avse')

METRICS = ("stoi", "sdi", "pesq", "hasqi", "haspi")
SCORE_FIELDS = ("utterance_id", "noise_type", "sir_db", "sar_db", "method", "metric", "value")
GROUPINGS = ("noise_type", "sir", "sar", "sir_sar")
_EPS = np.finfo(np.float64).eps

PathLike = Union[str, Path]


# ============================================================================
# STOI / SDI
# ============================================================================

@dataclass
class STOIConfig:
    fs: int = 10000            # internal sample rate
    frame_len: int = 256       # Hann frame, hop is half of it
    nfft: int = 512
    num_bands: int = 15        # one-third octave bands
    min_freq: float = 150.0
    segment_frames: int = 30   # 384 ms analysis segments
    beta_db: float = -15.0     # lower SDR bound used for clipping
    dyn_range_db: float = 40.0 # frames this far below the loudest are dropped

    @classmethod
    def from_mapping(cls, data: Dict[str, str]) -> 'STOIConfig':
        return dataclass_from_mapping(cls, data, strict=False, prefix="stoi.")


def _trim_pair(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = min(len(a), len(b))
    return a[:n], b[:n]


def sdi(clean: Waveform, enhanced: Waveform) -> float:
    """Speech distortion index: sum (e - c)^2 / sum c^2, lower is better."""
    c, e = _trim_pair(clean.samples.astype(np.float64), enhanced.samples.astype(np.float64))
    energy = float(np.sum(c * c))
    if energy <= 0:
        raise MetricError("Clean reference has zero energy")
    return float(np.sum((e - c) ** 2) / energy)


def stoi(clean: Waveform, degraded: Waveform, config: Optional[STOIConfig] = None) -> float:
    """Short-time objective intelligibility of `degraded` against `clean`."""
    cfg = config or STOIConfig()
    if clean.rate != degraded.rate:
        raise MetricError(f"Sample rates differ: {clean.rate} vs {degraded.rate}")
    x, y = _trim_pair(clean.samples.astype(np.float64), degraded.samples.astype(np.float64))
    x = resample_array(x, clean.rate, cfg.fs)
    y = resample_array(y, clean.rate, cfg.fs)

    x, y = remove_silent_frames(x, y, cfg.dyn_range_db, cfg.frame_len, cfg.frame_len // 2)
    x_spec = stoi_stft(x, cfg.frame_len, cfg.nfft, overlap=2).transpose()
    y_spec = stoi_stft(y, cfg.frame_len, cfg.nfft, overlap=2).transpose()
    n = cfg.segment_frames
    if x_spec.shape[-1] < n:
        raise MetricError(
            f"Only {x_spec.shape[-1]} speech frames after silence removal, need {n} "
            f"({n * cfg.frame_len // 2 * 1000 // cfg.fs} ms)"
        )

    obm, _ = thirdoct(cfg.fs, cfg.nfft, cfg.num_bands, cfg.min_freq)
    x_tob = np.sqrt(obm @ np.abs(x_spec) ** 2)
    y_tob = np.sqrt(obm @ np.abs(y_spec) ** 2)

    frames = x_tob.shape[1]
    x_seg = np.array([x_tob[:, m - n:m] for m in range(n, frames + 1)])   # segments x bands x N
    y_seg = np.array([y_tob[:, m - n:m] for m in range(n, frames + 1)])

    scale = np.linalg.norm(x_seg, axis=2, keepdims=True) / (np.linalg.norm(y_seg, axis=2, keepdims=True) + _EPS)
    y_norm = y_seg * scale
    clip = 10 ** (-cfg.beta_db / 20)
    y_prime = np.minimum(y_norm, x_seg * (1 + clip))

    y_prime = y_prime - y_prime.mean(axis=2, keepdims=True)
    x_c = x_seg - x_seg.mean(axis=2, keepdims=True)
    y_prime /= np.linalg.norm(y_prime, axis=2, keepdims=True) + _EPS
    x_c /= np.linalg.norm(x_c, axis=2, keepdims=True) + _EPS

    score = float(np.sum(y_prime * x_c) / (x_c.shape[0] * x_c.shape[1]))
    return float(np.clip(score, -1.0, 1.0))


def silence_residual_db(clean: Waveform, signal: Waveform, dyn_range_db: float = 40.0) -> float:
    """
    Mean power (dB) of `signal` over the frames where `clean` is silent, i.e. more
    than dyn_range_db below its loudest frame. NaN when the clean has no such frame.
    """
    c, s = _trim_pair(clean.samples.astype(np.float64), signal.samples.astype(np.float64))
    if len(c) < WINDOW_LEN:
        raise MetricError(f"Need at least {WINDOW_LEN} samples, got {len(c)}")
    c_frames = np.lib.stride_tricks.sliding_window_view(c, WINDOW_LEN)[::HOP]
    s_frames = np.lib.stride_tricks.sliding_window_view(s, WINDOW_LEN)[::HOP]
    c_db = 10 * np.log10(np.maximum(np.mean(c_frames ** 2, axis=1), POWER_FLOOR))
    silent = c_db < c_db.max() - dyn_range_db
    if not silent.any():
        return float('nan')
    return float(10 * np.log10(max(float(np.mean(s_frames[silent] ** 2)), POWER_FLOOR)))


# ============================================================================
# SCORE RECORDS
# ============================================================================

@dataclass
class ScoreRecord:
    utterance_id: str
    noise_type: str
    sir_db: float
    sar_db: float
    method: str
    metric: str
    value: float

    def __post_init__(self):
        self.sir_db = float(self.sir_db)
        self.sar_db = float(self.sar_db)
        self.value = float(self.value)
        validate_value(self.metric, self.value)

    @property
    def key(self) -> Tuple:
        return (self.utterance_id, self.noise_type, self.sir_db, self.sar_db, self.method, self.metric)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'ScoreRecord':
        return cls(**{k: data[k] for k in SCORE_FIELDS})


_RANGES = {
    "stoi": (-1.0, 1.0),
    "sdi": (0.0, math.inf),
    "pesq": (0.5, 4.5),
    "hasqi": (0.0, 1.0),
    "haspi": (0.0, 1.0),
}


def validate_value(metric: str, value: float):
    if metric not in METRICS:
        raise MetricError(f"Unknown metric '{metric}', expected one of {METRICS}")
    if not math.isfinite(value):
        raise MetricError(f"{metric} value is not finite: {value}")
    lo, hi = _RANGES[metric]
    if not lo <= value <= hi:
        raise MetricError(f"{metric} value {value} outside [{lo}, {hi}]")


class ScoreStore:
    """Records keyed by (utterance, condition, method, metric); later writes win."""

    def __init__(self):
        self._records: Dict[Tuple, ScoreRecord] = {}

    def add(self, record: ScoreRecord, source: str = "") -> bool:
        """Returns True when an existing record was replaced."""
        replaced = record.key in self._records
        if replaced:
            logger.warning(f"SCORES | duplicate {record.key} {source}, keeping the later value {record.value}")
        self._records[record.key] = record
        return replaced

    def extend(self, records: Iterable[ScoreRecord]):
        for r in records:
            self.add(r)

    def records(self) -> List[ScoreRecord]:
        return list(self._records.values())

    def __len__(self) -> int:
        return len(self._records)

    def write_csv(self, path: PathLike) -> Path:
        return write_scores(path, self.records())


def write_scores(path: PathLike, records: Iterable[ScoreRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=SCORE_FIELDS)
        writer.writeheader()
        for r in records:
            row = r.to_dict()
            row["sir_db"], row["sar_db"] = f"{r.sir_db:g}", f"{r.sar_db:g}"
            row["value"] = repr(r.value)
            writer.writerow(row)
    return path


def import_scores(path: PathLike, store: Optional[ScoreStore] = None, strict: bool = False) -> List[ScoreRecord]:
    """
    Read a score CSV. Bad rows are rejected with their line numbers (a warning each,
    or one ScoreImportError listing them all when strict). Duplicates: last wins.
    """
    path = Path(path)
    if not path.exists():
        raise ScoreImportError(f"Score file not found: {path}", [])
    local = ScoreStore()
    problems: List[str] = []
    with open(path, newline='', encoding='utf-8') as f:
        text = f.read()
    if not text.strip():
        return []

    reader = csv.DictReader(text.splitlines())
    missing = [c for c in SCORE_FIELDS if c not in (reader.fieldnames or [])]
    if missing:
        raise ScoreImportError(f"{path.name}: header lacks {missing}", [])
    for row in reader:
        line = reader.line_num
        try:
            record = ScoreRecord.from_dict(row)
        except (MetricError, ValueError, TypeError) as e:
            problems.append(f"{path.name}:{line}: {e}")
            continue
        local.add(record, f"at {path.name}:{line}")

    if problems:
        if strict:
            raise ScoreImportError(f"{len(problems)} malformed rows in {path.name}", problems)
        for p in problems:
            logger.warning(f"SCORES | rejected {p}")
    records = local.records()
    if store is not None:
        store.extend(records)
    logger.info(f"SCORES | imported {len(records)} records from {path.name} ({len(problems)} rejected)")
    return records


# ============================================================================
# AGGREGATION
# ============================================================================

@dataclass
class AggregateCell:
    group: str
    method: str
    metric: str
    mean: float
    count: int


@dataclass
class AggregateTable:
    group_by: str
    cells: List[AggregateCell] = field(default_factory=list)

    def cell(self, group: str, method: str, metric: str) -> Optional[AggregateCell]:
        for c in self.cells:
            if (c.group, c.method, c.metric) == (group, method, metric):
                return c
        return None

    @property
    def groups(self) -> List[str]:
        return _ordered(c.group for c in self.cells)

    @property
    def methods(self) -> List[str]:
        return _ordered(c.method for c in self.cells)

    @property
    def metrics(self) -> List[str]:
        return _ordered(c.metric for c in self.cells)


def _ordered(values: Iterable[str]) -> List[str]:
    return sorted(set(values), key=_sort_key)


def _sort_key(value: str):
    head = value.split('/')
    try:
        return (0, tuple(float(h) for h in head), value)
    except ValueError:
        return (1, (), value)


def group_key(record: ScoreRecord, group_by: str) -> str:
    if group_by == "noise_type":
        return record.noise_type
    if group_by == "sir":
        return f"{record.sir_db:g}"
    if group_by == "sar":
        return f"{record.sar_db:g}"
    if group_by == "sir_sar":
        return f"{record.sir_db:g}/{record.sar_db:g}"
    raise MetricError(f"Unknown grouping '{group_by}', expected one of {GROUPINGS}")


def aggregate(records: Iterable[ScoreRecord], group_by: str = "noise_type",
              where: Optional[Callable[[ScoreRecord], bool]] = None) -> AggregateTable:
    """Mean value per (group, method, metric) cell; order of records does not matter."""
    buckets: Dict[Tuple[str, str, str], List[float]] = defaultdict(list)
    for r in records:
        if where is not None and not where(r):
            continue
        buckets[(group_key(r, group_by), r.method, r.metric)].append(r.value)
    if not buckets:
        raise MetricError("Nothing to aggregate")
    cells = [AggregateCell(g, m, k, math.fsum(v) / len(v), len(v)) for (g, m, k), v in buckets.items()]
    cells.sort(key=lambda c: (_sort_key(c.group), c.metric, c.method))
    return AggregateTable(group_by=group_by, cells=cells)


def write_table(path: PathLike, table: AggregateTable) -> Path:
    """One row per (group, metric); one column per method."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    methods = table.methods
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow([table.group_by, "metric", *methods])
        for group in table.groups:
            for metric in table.metrics:
                cells = [table.cell(group, m, metric) for m in methods]
                if all(c is None for c in cells):
                    continue
                writer.writerow([group, metric, *("" if c is None else f"{c.mean:.6f}" for c in cells)])
    return path


class MetricError(AVSEError):
    """Raised for invalid metric inputs or score values."""
    pass


class ScoreImportError(MetricError):
    """A score file could not be imported; `problems` lists the offending lines."""

    def __init__(self, message: str, problems: List[str]):
        super().__init__(message if not problems else message + ":\n  " + "\n  ".join(problems))
        self.problems = problems
