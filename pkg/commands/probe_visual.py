import csv
import logging
import math
from functools import partial
from typing import List

import numpy as np

from utils.command import Command, checkpoint_dir, ensure_dir
from utils.corpus import MixEntry, fake_mouth_shapes, read_mix_manifest
from utils.model import SpeechEnhancer, read_model
from utils.parallel import parallel_map
from utils.train import TrainError, mismatched_visual_probe
from utils.visual import mouth_opening, read_frames
from utils.wavio import read_wav

logger = logging.getLogger('avse')

PROBE_FIELDS = ("mix_id", "shape", "opening_px", "stoi_true", "stoi_fake", "stoi_delta",
                "sdi_true", "sdi_fake", "sdi_delta", "silence_true_db", "silence_fake_db")


def _probe_entry(entry: MixEntry, model: SpeechEnhancer, shapes: np.ndarray) -> List[dict]:
    clean, noisy, images = read_wav(entry.clean_wav), read_wav(entry.noisy_wav), read_frames(entry.frame_dir)
    openings = mouth_opening(shapes)
    rows = []
    for i, shape in enumerate(shapes):
        result = mismatched_visual_probe(model, clean, noisy, images, shape)
        rows.append({"mix_id": entry.mix_id, "shape": i, "opening_px": float(openings[i]), **result.to_dict()})
    return rows


def _mean(rows: List[dict], key: str) -> float:
    values = [r[key] for r in rows if math.isfinite(r[key])]
    return float(np.mean(values)) if values else float('nan')


class ProbeVisualCommand(Command):
    name = 'probe-visual'
    help = 'Enhance with true mouth frames and with constant fake mouth shapes; report the score gap'

    def add_arguments(self, parser):
        parser.add_argument('checkpoint', help='checkpoint directory or training run directory')
        parser.add_argument('mix_dir', help='mixed-set directory or mix.csv')
        parser.add_argument('out_dir', help='directory for probe.csv')
        parser.add_argument('--shapes', type=int, default=8, help='number of fake mouth shapes, closed to open')
        parser.add_argument('--limit', type=int, default=0, help='probe only the first N mixtures')

    def run(self, args, ctx):
        ckpt = checkpoint_dir(args.checkpoint)
        loaded = read_model(ckpt)
        if not loaded.model.uses_visual:
            raise TrainError(f"{loaded.model.kind} has no visual input to probe")
        entries = read_mix_manifest(args.mix_dir)
        if args.limit:
            entries = entries[:args.limit]
        out_dir = ensure_dir(args.out_dir)
        manifest = ctx.begin(self.name, int(loaded.meta.get("seed", 0)), checkpoint=ckpt, mix_dir=args.mix_dir)

        job = partial(_probe_entry, model=loaded.model, shapes=fake_mouth_shapes(args.shapes))
        rows = [r for rs in parallel_map(job, entries, ctx.jobs) for r in rs]
        with open(out_dir / "probe.csv", 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=PROBE_FIELDS)
            writer.writeheader()
            writer.writerows(rows)
        logger.info(f"PROBE | {len(entries)} mixtures x {args.shapes} shapes: mean STOI drop "
                    f"{_mean(rows, 'stoi_delta'):.4f}, mean SDI rise {_mean(rows, 'sdi_delta'):.4f}, "
                    f"silence residual {_mean(rows, 'silence_true_db'):.1f} -> {_mean(rows, 'silence_fake_db'):.1f} dB")
        manifest.finish(out_dir)


def setup(cli):
    cli.add_command(ProbeVisualCommand(cli))
