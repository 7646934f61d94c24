import logging
from pathlib import Path

from utils.command import Command, ensure_dir
from utils.dsp import spectrogram_image
from utils.visual import write_pgm
from utils.wavio import read_wav

logger = logging.getLogger('avse')


class SpectrogramCommand(Command):
    name = 'spectrogram'
    help = 'Render log-power spectrograms of WAVs as greyscale PGMs (<stem>.pgm)'

    def add_arguments(self, parser):
        parser.add_argument('out_dir', help='directory for the PGM images')
        parser.add_argument('wavs', nargs='+', help='input WAVs')
        parser.add_argument('--range-db', type=float, default=80.0, help='dynamic range below the peak')

    def run(self, args, ctx):
        out_dir = ensure_dir(args.out_dir)
        manifest = ctx.begin(self.name, ctx.seed_or(0), **{f"wav{i}": w for i, w in enumerate(args.wavs)})
        for wav in args.wavs:
            gray = spectrogram_image(read_wav(wav), args.range_db)
            out = write_pgm(out_dir / f"{Path(wav).stem}.pgm", gray)
            logger.info(f"CMD | spectrogram {gray.shape[1]} frames x {gray.shape[0]} bins -> {out}")
        manifest.finish(out_dir)


def setup(cli):
    cli.add_command(SpectrogramCommand(cli))
