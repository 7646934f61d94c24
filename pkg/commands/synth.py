import logging
from functools import partial
from pathlib import Path

from utils.command import Command, ensure_dir, override
from utils.corpus import NOISE_KINDS, SynthCorpusSpec, synth_utterance, write_corpus_manifest, write_noises, write_utterance
from utils.parallel import parallel_map

logger = logging.getLogger('avse')


def _render_one(index: int, spec: SynthCorpusSpec, out_dir: Path) -> dict:
    return write_utterance(out_dir, synth_utterance(spec, index))


class SynthCommand(Command):
    name = 'synth'
    help = 'Generate a synthetic audio-visual corpus (WAV + PPM mouth frames + corpus.csv)'

    def add_arguments(self, parser):
        parser.add_argument('out_dir', help='corpus directory to create')
        parser.add_argument('--n', type=int, help='number of utterances (synth.n_utterances)')
        parser.add_argument('--duration', type=float, help='seconds per utterance (synth.duration_s)')
        parser.add_argument('--noises', metavar='DIR', help='also write one WAV per synthetic noise kind here')
        parser.add_argument('--noise-duration', type=float, default=10.0, help='seconds per noise file')

    def run(self, args, ctx):
        values = override(ctx.config, "synth.", n_utterances=args.n, duration_s=args.duration, seed=ctx.seed)
        spec = SynthCorpusSpec.from_mapping(values)
        out_dir = ensure_dir(args.out_dir)
        manifest = ctx.begin(self.name, spec.seed)

        rows = parallel_map(partial(_render_one, spec=spec, out_dir=out_dir), range(spec.n_utterances), ctx.jobs)
        write_corpus_manifest(out_dir, rows)
        logger.info(f"SYNTH | {len(rows)} utterances of {spec.duration_s:g}s -> {out_dir}")
        manifest.finish(out_dir)

        if args.noises:
            noise_dir = ensure_dir(args.noises)
            noise_manifest = ctx.begin(self.name, spec.seed)
            write_noises(noise_dir, NOISE_KINDS, args.noise_duration, spec.seed)
            noise_manifest.finish(noise_dir)


def setup(cli):
    cli.add_command(SynthCommand(cli))
