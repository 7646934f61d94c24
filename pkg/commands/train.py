import logging

from shared import MODEL_KINDS, TRAIN_LOG
from utils.command import Command, ensure_dir
from utils.features import load_dataset
from utils.nn import INIT_MODES
from utils.train import FitResult, POLICIES, SCHEDULES, TrainError, fit, load_run, save_best, save_state

logger = logging.getLogger('avse')


class TrainCommand(Command):
    name = 'train'
    help = 'Train an enhancement network on a feature directory'

    def add_arguments(self, parser):
        parser.add_argument('features_dir', help='dataset directory written by `features`')
        parser.add_argument('out_dir', help='run directory (checkpoint/, state/, trainlog.csv)')
        parser.add_argument('--kind', choices=MODEL_KINDS, default='avdcnn')
        parser.add_argument('--epochs', type=int, help='train.max_epochs')
        parser.add_argument('--batch-size', type=int, help='train.batch_size')
        parser.add_argument('--lr', type=float, help='train.lr')
        parser.add_argument('--mu', type=float, help='train.mu (visual loss weight)')
        parser.add_argument('--schedule', choices=SCHEDULES, help='train.schedule')
        parser.add_argument('--policy', choices=POLICIES, help='train.policy (zero-target policy)')
        parser.add_argument('--init', choices=INIT_MODES, help='train.init')
        parser.add_argument('--resume', action='store_true', help='continue the run saved in out_dir')

    def run(self, args, ctx):
        cfg = ctx.train_config(max_epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, mu=args.mu,
                               schedule=args.schedule, policy=args.policy, init=args.init)
        data = load_dataset(args.features_dir)
        out_dir = ensure_dir(args.out_dir)
        manifest = ctx.begin(self.name, cfg.seed, features=args.features_dir)

        resume = None
        if args.resume:
            model, resume = load_run(out_dir, cfg)
            if model.kind != args.kind:
                raise TrainError(f"{out_dir} holds a {model.kind} run, not {args.kind}")
        else:
            model = ctx.new_model(args.kind, cfg)
        logger.info(f"TRAIN | {model.kind}: {model.parameter_count():,} parameters, {len(data)} frames, "
                    f"schedule {cfg.schedule}, mu {cfg.mu:g}")

        def checkpoint(result: FitResult):
            result.log.config_hash = ctx.config_hash
            save_state(out_dir, model, result)
            if result.state.best_epoch == result.state.next_epoch - 1:
                save_best(out_dir, model, result)

        result = fit(model, data, cfg, resume=resume, on_epoch=checkpoint)
        result.log.config_hash = ctx.config_hash
        save_best(out_dir, model, result)
        result.log.write_csv(out_dir / TRAIN_LOG)
        logger.info(f"TRAIN | done: {len(result.log)} epochs logged, selected epoch {result.state.best_epoch}")
        manifest.finish(out_dir)


def setup(cli):
    cli.add_command(TrainCommand(cli))
