import csv
import logging

from shared import MODEL_KINDS
from utils.command import Command, ensure_dir, float_list
from utils.features import load_dataset
from utils.train import sweep_mu

logger = logging.getLogger('avse')

SWEEP_FIELDS = ("mu", "audio_loss", "visual_loss", "selected_epoch", "epochs")


class SweepMuCommand(Command):
    name = 'sweep-mu'
    help = 'Train once per visual-loss weight and report both losses at the selected epoch'

    def add_arguments(self, parser):
        parser.add_argument('features_dir', help='dataset directory written by `features`')
        parser.add_argument('out_dir', help='directory for sweep.csv and per-mu training logs')
        parser.add_argument('--mus', type=float_list, default=[0.0, 0.5, 1.0, 2.0], help='comma-separated weights')
        parser.add_argument('--kind', choices=[k for k in MODEL_KINDS if k != 'adcnn'], default='avdcnn')
        parser.add_argument('--epochs', type=int, help='train.max_epochs')

    def run(self, args, ctx):
        cfg = ctx.train_config(max_epochs=args.epochs)
        data = load_dataset(args.features_dir)
        out_dir = ensure_dir(args.out_dir)
        manifest = ctx.begin(self.name, cfg.seed, features=args.features_dir)

        results = sweep_mu(lambda: ctx.new_model(args.kind, cfg), data, args.mus, cfg)
        with open(out_dir / "sweep.csv", 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(SWEEP_FIELDS)
            for r in results:
                r.log.config_hash = ctx.config_hash
                r.log.write_csv(out_dir / f"trainlog_mu{r.mu:g}.csv")
                writer.writerow([f"{r.mu:g}", repr(r.audio_loss), repr(r.visual_loss), r.log.selected_epoch, len(r.log)])
        manifest.finish(out_dir)


def setup(cli):
    cli.add_command(SweepMuCommand(cli))
