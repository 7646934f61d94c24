import argparse
import logging
from functools import partial
from pathlib import Path
from typing import Dict, List, Tuple

from utils.command import Command, ensure_dir
from utils.corpus import MixEntry, read_mix_manifest
from utils.metrics import (
    MetricError, STOIConfig, ScoreRecord, ScoreStore, aggregate, import_scores, sdi, stoi, write_table,
)
from utils.parallel import parallel_map
from utils.wavio import read_wav

logger = logging.getLogger('avse')

NOISY_METHOD = "noisy"
TABLES = (
    ("by_noise.csv", "noise_type"),
    ("by_sir.csv", "sir"),
    ("by_sar.csv", "sar"),
    ("by_sir_sar.csv", "sir_sar"),
)


def method_arg(text: str) -> Tuple[str, str]:
    name, sep, path = text.partition('=')
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=DIR, got '{text}'")
    return name, path


def score_entry(entry: MixEntry, methods: Dict[str, Path], config: STOIConfig) -> List[ScoreRecord]:
    """STOI and SDI of every method's output for one mixture; missing outputs are skipped."""
    clean = read_wav(entry.clean_wav)
    outputs = {NOISY_METHOD: entry.noisy_wav}
    outputs.update({name: d / f"{entry.mix_id}.wav" for name, d in methods.items()})
    records = []
    for method, path in outputs.items():
        if not path.exists():
            logger.warning(f"EVAL | {method}: missing {path}, skipped")
            continue
        out = read_wav(path)
        for metric, fn in (("stoi", lambda c, o: stoi(c, o, config)), ("sdi", sdi)):
            try:
                value = fn(clean, out)
            except MetricError as e:
                logger.warning(f"EVAL | {entry.mix_id} {method} {metric}: {e}, skipped")
                continue
            records.append(ScoreRecord(entry.mix_id, entry.noise, entry.sir_db, entry.sar_db, method, metric, value))
    return records


class EvalCommand(Command):
    name = 'eval'
    help = 'Score enhanced sets against the clean references and write aggregate tables'

    def add_arguments(self, parser):
        parser.add_argument('mix_dir', help='mixed-set directory or mix.csv')
        parser.add_argument('out_dir', help='directory for scores.csv and the tables')
        parser.add_argument('--method', type=method_arg, action='append', default=[],
                            help='NAME=DIR of enhanced WAVs named <mix_id>.wav (repeatable)')
        parser.add_argument('--scores', action='append', default=[], help='import an external score CSV (repeatable)')
        parser.add_argument('--strict', action='store_true', help='fail on any malformed imported row')
        parser.add_argument('--noise-sar', type=float, default=0.0, help='SAR used for the per-noise table')

    def run(self, args, ctx):
        entries = read_mix_manifest(args.mix_dir)
        methods = {name: Path(path) for name, path in args.method}
        if NOISY_METHOD in methods:
            raise MetricError(f"'{NOISY_METHOD}' is reserved for the unprocessed mixtures")
        config = STOIConfig.from_mapping(ctx.config)
        out_dir = ensure_dir(args.out_dir)
        manifest = ctx.begin(self.name, ctx.seed_or(0), mix_dir=args.mix_dir,
                             **{f"method.{k}": v for k, v in methods.items()})

        store = ScoreStore()
        job = partial(score_entry, methods=methods, config=config)
        for records in parallel_map(job, entries, ctx.jobs):
            store.extend(records)
        for path in args.scores:
            imported = import_scores(path, store, strict=args.strict)
            logger.info(f"EVAL | imported {len(imported)} records from {path}")
        if not len(store):
            raise MetricError("No scores to aggregate")

        records = store.records()
        store.write_csv(out_dir / "scores.csv")
        for filename, group_by in TABLES:
            where = None
            if group_by == "noise_type":
                if any(r.sar_db == args.noise_sar for r in records):
                    where = lambda r: r.sar_db == args.noise_sar
                else:
                    logger.warning(f"EVAL | no records at SAR {args.noise_sar:g} dB, per-noise table uses all SARs")
            write_table(out_dir / filename, aggregate(records, group_by, where))
        logger.info(f"EVAL | {len(records)} scores over {len(entries)} mixtures, methods "
                    f"{', '.join([NOISY_METHOD, *methods])} -> {out_dir}")
        manifest.finish(out_dir)


def setup(cli):
    cli.add_command(EvalCommand(cli))
