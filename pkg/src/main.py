"""
DPC toolkit - command-line entry point.

Subcommands: train, eval, sweep, baseline, export-maps.
Exit codes: 0 success, 2 configuration error, 3 training divergence,
4 checkpoint or I/O error.
"""

import argparse
import os
import sys
import logging
from pathlib import Path
from typing import Dict, List, Optional, Set

# Add src directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from channel import ChannelConfig, InterferenceModel
from checkpoint_store import load_checkpoint, save_checkpoint
from evaluation import (baseline_curve, decision_region_grid, encoder_map_grid, evaluate_model,
                        lambda_sweep, training_channel)
from neural import train
from result_store import ResultStore
from run_config import BASELINE_SCHEMES, RunConfig, read_config_file, resolve_config
from errors import ConfigurationError, DpcError

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 4


def configure_logging(verbose: bool = False):
    level_name = 'DEBUG' if verbose else os.environ.get('LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.INFO), format=LOG_FORMAT)
    logging.getLogger().setLevel(getattr(logging, level_name, logging.INFO))


def _add_channel_flags(p: argparse.ArgumentParser):
    p.add_argument('--constellation', help='bpsk, qpsk or qpsk:<scale>')
    p.add_argument('--interference', help='gaussian:<var> or qpsk:<power>')
    p.add_argument('--noise-var', dest='noise_var')
    p.add_argument('--seed')
    p.add_argument('--n-eval', dest='n_eval')
    p.add_argument('--workers')
    p.add_argument('--output', help='curve CSV (relative paths go under the data directory)')
    p.add_argument('--append', action='store_const', const='true')


def _add_training_flags(p: argparse.ArgumentParser):
    p.add_argument('--activation', help='sin or leaky_relu')
    p.add_argument('--leaky-slope', dest='leaky_slope')
    p.add_argument('--omega0')
    p.add_argument('--hidden', help='comma-separated hidden layer widths')
    p.add_argument('--epochs')
    p.add_argument('--steps-per-epoch', dest='steps_per_epoch')
    p.add_argument('--batch-size', dest='batch_size')
    p.add_argument('--lr')
    p.add_argument('--lr-milestones', dest='lr_milestones')
    p.add_argument('--log-every', dest='log_every')
    p.add_argument('--checkpoint')


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='key = value configuration file')
    common.add_argument('--verbose', action='store_true', help='debug logging')
    common.add_argument('--data-dir', dest='data_dir', help='output directory (default $DPC_DATA_DIR or data)')

    parser = argparse.ArgumentParser(prog='dpc-toolkit', description='Learned and classical dirty-paper coding')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', parents=[common], help='train one neural DPC model')
    _add_channel_flags(p)
    _add_training_flags(p)
    p.add_argument('--lambda', dest='lambda')
    p.add_argument('--training-log', dest='training_log')

    p = sub.add_parser('eval', parents=[common], help='evaluate a checkpoint')
    _add_channel_flags(p)
    p.add_argument('--checkpoint')
    p.add_argument('--test-interference', dest='test_interference')

    p = sub.add_parser('sweep', parents=[common], help='lambda sweep, or a baseline SNR sweep with --scheme')
    _add_channel_flags(p)
    _add_training_flags(p)
    p.add_argument('--lambdas', help='comma-separated lambda values')
    p.add_argument('--scheme')
    p.add_argument('--snr-list', dest='snr_list')
    p.add_argument('--lattice')
    p.add_argument('--alpha')

    p = sub.add_parser('baseline', parents=[common], help='classical scheme rows')
    _add_channel_flags(p)
    p.add_argument('--scheme', help=' | '.join(BASELINE_SCHEMES))
    p.add_argument('--snr-list', dest='snr_list')
    p.add_argument('--lattice', help='scalar:<d>, cubic2:<d>, hex:<V> or constructionA:<q>:<scale>')
    p.add_argument('--alpha', help='mmse or one')

    p = sub.add_parser('export-maps', parents=[common], help='decision-region / encoder-map grids')
    p.add_argument('--checkpoint')
    p.add_argument('--bounds', help='lo,hi or lo1,hi1,lo2,hi2')
    p.add_argument('--resolution')
    p.add_argument('--maps-dir', dest='maps_dir')
    return parser


_META_KEYS = {'command', 'config', 'verbose', 'data_dir'}


def cmd_train(cfg: RunConfig, store: ResultStore, explicit: Set[str]) -> List[str]:
    """Train, then write the checkpoint and its per-epoch loss log."""
    ckpt = train(cfg.make_constellation(), cfg.make_channel(), cfg.lam, cfg.make_train_config())
    ckpt_path = save_checkpoint(ckpt, store.resolve(cfg.checkpoint))
    log_path = cfg.training_log or str(Path(cfg.checkpoint).with_suffix('.log.csv'))
    log_path = store.write_training_log(log_path, ckpt.loss_history, cfg.echo())
    logger.info(f"Final training loss {ckpt.final_loss:.5f}")
    return [str(ckpt_path), str(log_path)]


def _eval_channel(cfg: RunConfig, trained_on: ChannelConfig, explicit: Set[str]) -> ChannelConfig:
    channel = trained_on
    if 'noise_var' in explicit:
        channel = ChannelConfig(channel.k, cfg.noise_var, channel.interference)
    if 'interference' in explicit:
        channel = channel.with_interference(InterferenceModel.parse(cfg.interference))
    if cfg.test_interference:
        channel = channel.with_interference(InterferenceModel.parse(cfg.test_interference))
    return channel


def cmd_eval(cfg: RunConfig, store: ResultStore, explicit: Set[str]) -> List[str]:
    """Append one curve row for a checkpoint, optionally under other interference."""
    ckpt = load_checkpoint(store.resolve(cfg.checkpoint))
    if 'constellation' in explicit and cfg.make_constellation().k != ckpt.model.k:
        raise ConfigurationError(f"checkpoint holds a {ckpt.model.k}-dimensional "
                                 f"{ckpt.model.constellation.name} model, config asks for {cfg.constellation}")
    trained_on = training_channel(ckpt)
    channel = _eval_channel(cfg, trained_on, explicit)
    if channel.interference != trained_on.interference:
        logger.warning(f"Evaluating under {channel.interference.describe()}, "
                       f"model was trained on {trained_on.interference.describe()}")
    point = evaluate_model(ckpt.model, channel, cfg.n_eval, cfg.seed, cfg.workers)
    logger.info(f"SNR {point.snr_db:.2f} dB, SER {point.ser.ser:.5f} (±{point.ser.ci95_halfwidth:.5f})")
    return [str(store.write_curve(cfg.output, [point], cfg.echo(), append=True))]


def cmd_sweep(cfg: RunConfig, store: ResultStore, explicit: Set[str]) -> List[str]:
    """λ sweep of neural models, or an SNR sweep of a classical scheme when --scheme is set."""
    if cfg.scheme != 'neural':
        return cmd_baseline(cfg, store, explicit)
    lambdas = cfg.lambda_list or (cfg.lam,)
    ckpt_dir = Path(cfg.checkpoint).parent
    written = []

    def keep(lam, ckpt):
        written.append(str(save_checkpoint(ckpt, store.resolve(ckpt_dir / f"sweep_lambda{lam:g}.ndpc"))))

    points = lambda_sweep(list(lambdas), cfg.make_constellation(), cfg.make_channel(), cfg.make_train_config(),
                          cfg.n_eval, cfg.workers, on_trained=keep)
    written.append(str(store.write_curve(cfg.output, points, cfg.echo(), append=cfg.append)))
    return written


def cmd_baseline(cfg: RunConfig, store: ResultStore, explicit: Set[str]) -> List[str]:
    if cfg.scheme not in BASELINE_SCHEMES:
        raise ConfigurationError(f"baseline needs --scheme {' | '.join(BASELINE_SCHEMES)}")
    if not cfg.snr_list:
        raise ConfigurationError("baseline needs --snr-list")
    points = baseline_curve(cfg.scheme, cfg.make_constellation(), cfg.make_channel(), cfg.snr_list,
                            cfg.n_eval, cfg.seed, cfg.lattice or None, cfg.alpha, cfg.workers)
    return [str(store.write_curve(cfg.output, points, cfg.echo(), append=cfg.append))]


def cmd_export_maps(cfg: RunConfig, store: ResultStore, explicit: Set[str]) -> List[str]:
    """Decision regions for 2-D models, encoder maps for 1-D models."""
    ckpt = load_checkpoint(store.resolve(cfg.checkpoint))
    stem = Path(cfg.checkpoint).stem
    if ckpt.model.k == 2:
        table = decision_region_grid(ckpt.model, cfg.grid_bounds(), cfg.resolution)
        path = Path(cfg.maps_dir) / f"{stem}_decision_regions.csv"
    else:
        table = encoder_map_grid(ckpt.model, cfg.bounds[:2], cfg.resolution)
        path = Path(cfg.maps_dir) / f"{stem}_encoder_map.csv"
    return [str(store.write_grid(path, table, cfg.echo()))]


COMMANDS = {
    'train': cmd_train,
    'eval': cmd_eval,
    'sweep': cmd_sweep,
    'baseline': cmd_baseline,
    'export-maps': cmd_export_maps,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main function for the toolkit CLI."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args.verbose)
    logger.info(f"DPC toolkit started: {args.command}")

    flags: Dict[str, str] = {k: v for k, v in vars(args).items() if k not in _META_KEYS and v is not None}
    store = ResultStore(args.data_dir or os.environ.get('DPC_DATA_DIR', 'data'))
    summary = {'command': args.command, 'outputs': [], 'exit_code': EXIT_OK}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(file_values, flags)
        summary['config'] = cfg.echo()
        explicit = set(file_values) | {k.replace('-', '_') for k in flags}
        if 'lambda' in explicit:
            explicit.add('lam')
        summary['outputs'] = COMMANDS[args.command](cfg, store, explicit)
    except DpcError as e:
        logger.error(f"{args.command} failed: {e}")
        summary['exit_code'] = e.exit_code
        summary['error'] = str(e)
    except ValueError as e:
        logger.error(f"{args.command} failed: invalid argument: {e}")
        summary['exit_code'] = ConfigurationError.exit_code
        summary['error'] = str(e)
    except OSError as e:
        logger.error(f"{args.command} failed with an I/O error: {e}")
        summary['exit_code'] = EXIT_IO
        summary['error'] = str(e)

    for path in summary['outputs']:
        logger.info(f"Wrote {path}")
    store.save_run_summary(summary)
    logger.info(f"Processing complete (exit code {summary['exit_code']})")
    return summary['exit_code']


if __name__ == '__main__':
    sys.exit(main())
