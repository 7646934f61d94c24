import logging
from typing import Tuple

from utils.command import Command, ensure_dir
from utils.corpus import CorpusError, MixEntry, read_mix_manifest
from utils.features import IndexRow, build_dataset, save_dataset, utterance_example
from utils.model import Batch
from utils.parallel import parallel_map
from utils.visual import read_frames
from utils.wavio import read_wav

logger = logging.getLogger('avse')


def _extract(entry: MixEntry) -> Tuple[IndexRow, Batch]:
    batch = utterance_example(read_wav(entry.clean_wav), read_wav(entry.noisy_wav), read_frames(entry.frame_dir))
    row = IndexRow(entry.mix_id, 0, len(batch), entry.noise, f"{entry.sir_db:g}", f"{entry.sar_db:g}")
    return row, batch


class FeaturesCommand(Command):
    name = 'features'
    help = 'Turn a mixed set into training tensors (X, Z, Y, Zc + index.csv)'

    def add_arguments(self, parser):
        parser.add_argument('mix_dir', help='mixed-set directory or mix.csv')
        parser.add_argument('out_dir', help='dataset directory to create')
        parser.add_argument('--limit', type=int, default=0, help='use only the first N mixtures')

    def run(self, args, ctx):
        entries = read_mix_manifest(args.mix_dir)
        if args.limit:
            entries = entries[:args.limit]
        if not entries:
            raise CorpusError(f"No mixtures in {args.mix_dir}")
        out_dir = ensure_dir(args.out_dir)
        manifest = ctx.begin(self.name, ctx.seed_or(0), mix_dir=args.mix_dir)

        data, rows = build_dataset(parallel_map(_extract, entries, ctx.jobs))
        save_dataset(out_dir, data, rows)
        manifest.finish(out_dir)


def setup(cli):
    cli.add_command(FeaturesCommand(cli))
