import logging
import zlib
from functools import partial
from pathlib import Path
from typing import Dict, List, Sequence

from utils.command import Command, ensure_dir, float_list
from utils.corpus import CorpusEntry, CorpusError, MixEntry, read_corpus_manifest, write_mix_manifest
from utils.dsp import MixSpec, Waveform, mix_components
from utils.parallel import parallel_map
from utils.wavio import read_wav, write_wav

logger = logging.getLogger('avse')

DEFAULT_AMBIENT = "white"


def mix_seed(mix_id: str, seed: int) -> int:
    """Per-mixture seed: independent of ordering and worker count."""
    return zlib.crc32(mix_id.encode('utf-8')) ^ (seed & 0xFFFFFFFF)


def mix_id_for(utterance_id: str, noise: str, sir: float, sar: float) -> str:
    return f"{utterance_id}_{noise}_sir{sir:g}_sar{sar:g}"


def pick_ambient(noises: Sequence[str], requested: str = "") -> str:
    if requested:
        if requested not in noises:
            raise CorpusError(f"Ambient noise '{requested}' not in noise directory ({', '.join(noises)})")
        return requested
    return DEFAULT_AMBIENT if DEFAULT_AMBIENT in noises else noises[0]


def _mix_utterance(entry: CorpusEntry, noise_paths: Dict[str, Path], ambient: str, interferers: List[str],
                   sirs: List[float], sars: List[float], out_dir: Path, seed: int) -> List[MixEntry]:
    clean = read_wav(entry.wav_path)
    amb = read_wav(noise_paths[ambient])
    mixes = []
    for noise in interferers:
        interf = read_wav(noise_paths[noise])
        for sir in sirs:
            for sar in sars:
                mix_id = mix_id_for(entry.utterance_id, noise, sir, sar)
                spec = MixSpec(sir, sar, noise, ambient, mix_seed(mix_id, seed))
                result = mix_components(clean, interf, amb, spec)
                noisy_path = write_wav(out_dir / "noisy" / f"{mix_id}.wav", result.noisy)
                logger.info(f"MIX | {mix_id} | achieved SIR {result.achieved_sir_db:.3f} dB, "
                            f"SAR {result.achieved_sar_db:.3f} dB")
                mixes.append(MixEntry(
                    mix_id=mix_id,
                    utterance_id=entry.utterance_id,
                    clean_wav=entry.wav_path,
                    frame_dir=entry.frame_dir,
                    noisy_wav=noisy_path,
                    noise=noise,
                    ambient=ambient,
                    sir_db=sir,
                    sar_db=sar,
                    achieved_sir_db=result.achieved_sir_db,
                    achieved_sar_db=result.achieved_sar_db,
                ))
    return mixes


class MixCommand(Command):
    name = 'mix'
    help = 'Corrupt every corpus utterance with every noise at every SIR/SAR pair'

    def add_arguments(self, parser):
        parser.add_argument('corpus', help='corpus directory or corpus.csv')
        parser.add_argument('noise_dir', help='directory of noise WAVs (one noise type per file)')
        parser.add_argument('out_dir', help='mixed-set directory to create')
        parser.add_argument('--sir', type=float_list, default=[-5.0, 0.0, 5.0], help='SIR list in dB, e.g. -5,0,5')
        parser.add_argument('--sar', type=float_list, default=[-5.0, 0.0, 5.0], help='SAR list in dB')
        parser.add_argument('--ambient', default='', help=f'ambient noise name (default: {DEFAULT_AMBIENT} if present)')

    def run(self, args, ctx):
        corpus = read_corpus_manifest(args.corpus)
        noise_paths = {p.stem: p for p in sorted(Path(args.noise_dir).glob("*.wav"))}
        if not noise_paths:
            raise CorpusError(f"No noise WAVs in {args.noise_dir}")
        if not corpus:
            raise CorpusError(f"Corpus {args.corpus} is empty")
        if not args.sir or not args.sar:
            raise CorpusError("Need at least one SIR and one SAR")

        names = list(noise_paths)
        ambient = pick_ambient(names, args.ambient)
        interferers = [n for n in names if n != ambient] or names
        seed = ctx.seed_or(0)
        out_dir = ensure_dir(args.out_dir)
        manifest = ctx.begin(self.name, seed, corpus=args.corpus, noise_dir=args.noise_dir)
        logger.info(f"MIX | {len(corpus)} utterances x {len(interferers)} noises x {len(args.sir)} SIR "
                    f"x {len(args.sar)} SAR, ambient '{ambient}'")

        job = partial(_mix_utterance, noise_paths=noise_paths, ambient=ambient, interferers=interferers,
                      sirs=args.sir, sars=args.sar, out_dir=out_dir, seed=seed)
        entries = [m for mixes in parallel_map(job, corpus, ctx.jobs) for m in mixes]
        write_mix_manifest(out_dir, entries)
        logger.info(f"MIX | {len(entries)} mixtures -> {out_dir}")
        manifest.finish(out_dir)


def setup(cli):
    cli.add_command(MixCommand(cli))
