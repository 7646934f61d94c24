import logging
from functools import partial
from pathlib import Path
from typing import Optional

import numpy as np

from shared import FRAME_NAME
from utils.command import Command, checkpoint_dir, ensure_dir
from utils.corpus import MixEntry, read_mix_manifest
from utils.model import SpeechEnhancer, StreamMismatchError, enhance_utterance, read_model
from utils.parallel import parallel_map
from utils.visual import difference_image, read_frames, write_frames
from utils.wavio import read_wav, write_wav

logger = logging.getLogger('avse')


def enhance_files(model: SpeechEnhancer, noisy_wav: Path, frame_dir: Optional[Path], out_wav: Path,
                  image_dir: Optional[Path] = None) -> int:
    """Enhance one WAV; with image_dir set, also write reconstructed mouths and difference images."""
    images = read_frames(frame_dir) if frame_dir is not None and model.uses_visual else None
    result = enhance_utterance(model, read_wav(noisy_wav), images)
    write_wav(out_wav, result.waveform)
    if image_dir is not None and result.mouths is not None:
        write_frames(image_dir / "mouths", result.mouths, FRAME_NAME)
        diffs = difference_image(images[:result.n_frames], result.mouths)
        write_frames(image_dir / "diff", diffs, FRAME_NAME)
    return result.n_frames


def _enhance_entry(entry: MixEntry, model: SpeechEnhancer, out_dir: Path, with_images: bool) -> int:
    image_dir = out_dir / "mouths" / entry.mix_id if with_images else None
    n = enhance_files(model, entry.noisy_wav, entry.frame_dir, out_dir / f"{entry.mix_id}.wav", image_dir)
    logger.debug(f"ENHANCE | {entry.mix_id}: {n} frames")
    return n


class EnhanceCommand(Command):
    name = 'enhance'
    help = 'Enhance noisy speech with a trained checkpoint (single file or a whole mixed set)'

    def add_arguments(self, parser):
        parser.add_argument('checkpoint', help='checkpoint directory or training run directory')
        parser.add_argument('out_dir', help='directory for enhanced WAVs and images')
        parser.add_argument('--noisy', help='noisy WAV to enhance')
        parser.add_argument('--frames', help='mouth-frame directory matching --noisy')
        parser.add_argument('--mix-csv', help='enhance every mixture listed in a mix.csv (or its directory)')
        parser.add_argument('--images', action='store_true', help='in --mix-csv mode, also write mouth/difference images')

    def run(self, args, ctx):
        if bool(args.noisy) == bool(args.mix_csv):
            raise StreamMismatchError("Give exactly one of --noisy or --mix-csv")
        ckpt = checkpoint_dir(args.checkpoint)
        loaded = read_model(ckpt)
        model = loaded.model
        out_dir = ensure_dir(args.out_dir)
        manifest = ctx.begin(self.name, int(loaded.meta.get("seed", 0)), checkpoint=ckpt,
                             input=args.noisy or args.mix_csv)
        logger.info(f"ENHANCE | {model.kind} from {ckpt} ({model.parameter_count():,} parameters)")

        if args.noisy:
            if model.uses_visual and not args.frames:
                raise StreamMismatchError(f"{model.kind} needs --frames")
            frames = Path(args.frames) if args.frames else None
            n = enhance_files(model, Path(args.noisy), frames, out_dir / "enhanced.wav", out_dir)
            logger.info(f"ENHANCE | {args.noisy}: {n} frames -> {out_dir}")
        else:
            entries = read_mix_manifest(args.mix_csv)
            job = partial(_enhance_entry, model=model, out_dir=out_dir, with_images=args.images)
            counts = parallel_map(job, entries, ctx.jobs)
            logger.info(f"ENHANCE | {len(entries)} mixtures, {int(np.sum(counts))} frames -> {out_dir}")
        manifest.finish(out_dir)


def setup(cli):
    cli.add_command(EnhanceCommand(cli))
