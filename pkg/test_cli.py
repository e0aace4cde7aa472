"""End-to-end tests of the command-line entry point."""

import json

import pytest

from main import main

TINY_TRAIN = ['--epochs', '1', '--steps-per-epoch', '2', '--batch-size', '8', '--hidden', '4,4']


def run(tmp_path, *argv):
    return main([argv[0], '--data-dir', str(tmp_path), *argv[1:]])


def summary(tmp_path):
    return json.loads((tmp_path / 'last_run_summary.json').read_text(encoding='utf-8'))


def test_unknown_flag_is_a_usage_error():
    assert main(['train', '--no-such-flag']) == 2


def test_missing_subcommand():
    assert main([]) == 2


def test_train_eval_and_maps(tmp_path):
    assert run(tmp_path, 'train', *TINY_TRAIN, '--lambda', '3') == 0
    assert (tmp_path / 'checkpoints' / 'model.ndpc').exists()
    log = (tmp_path / 'checkpoints' / 'model.log.csv').read_text(encoding='utf-8').splitlines()
    assert log[0].startswith('# dpc-toolkit 1.0.0 ')
    assert 'lambda=3.0' in log[0]
    assert log[1] == 'epoch,loss'
    assert len(log) == 3

    assert run(tmp_path, 'eval', '--n-eval', '2000') == 0
    assert run(tmp_path, 'eval', '--n-eval', '2000', '--test-interference', 'gaussian:1') == 0
    rows = (tmp_path / 'curve.csv').read_text(encoding='utf-8').splitlines()
    assert len(rows) == 4
    assert rows[2].split(',')[6] == 'gaussian:30'
    assert rows[3].split(',')[6] == 'gaussian:1'

    assert run(tmp_path, 'export-maps', '--resolution', '9') == 0
    grid = (tmp_path / 'maps' / 'model_encoder_map.csv').read_text(encoding='utf-8').splitlines()
    assert grid[1] == 's,x_v0,x_v1'
    assert len(grid) == 11


def test_zero_epoch_training(tmp_path):
    assert run(tmp_path, 'train', '--epochs', '0', '--hidden', '3', '--checkpoint', 'init.ndpc') == 0
    assert (tmp_path / 'init.ndpc').exists()
    assert summary(tmp_path)['exit_code'] == 0


def test_qpsk_maps_are_decision_regions(tmp_path):
    assert run(tmp_path, 'train', '--epochs', '0', '--hidden', '3', '--constellation', 'qpsk',
               '--interference', 'qpsk:4.5') == 0
    assert run(tmp_path, 'export-maps', '--resolution', '4', '--bounds=-2,2') == 0
    grid = (tmp_path / 'maps' / 'model_decision_regions.csv').read_text(encoding='utf-8').splitlines()
    assert grid[1] == 'y1,y2,label'
    assert len(grid) == 2 + 16


def test_eval_rejects_wrong_dimension(tmp_path):
    assert run(tmp_path, 'train', '--epochs', '0', '--hidden', '3') == 0
    assert run(tmp_path, 'eval', '--n-eval', '100', '--constellation', 'qpsk',
               '--interference', 'gaussian:1') == 2


def test_missing_checkpoint(tmp_path):
    assert run(tmp_path, 'eval', '--checkpoint', 'absent.ndpc') == 4
    assert 'not found' in summary(tmp_path)['error']


def test_bad_config_value(tmp_path):
    assert run(tmp_path, 'train', '--noise-var', '-1') == 2
    assert run(tmp_path, 'train', '--interference', 'gaussian') == 2


def test_unknown_config_file_key(tmp_path):
    cfg = tmp_path / 'run.cfg'
    cfg.write_text("epochz = 3\n", encoding='utf-8')
    assert run(tmp_path, 'train', '--config', str(cfg)) == 2


def test_divergence_exit_code(tmp_path):
    assert run(tmp_path, 'train', *TINY_TRAIN, '--lambda', 'inf') == 3
    assert not (tmp_path / 'checkpoints' / 'model.ndpc').exists()


def test_awgn_baseline_rows(tmp_path):
    assert run(tmp_path, 'baseline', '--scheme', 'awgn', '--snr-list', '0', '--output', 'awgn.csv') == 0
    rows = (tmp_path / 'awgn.csv').read_text(encoding='utf-8').splitlines()
    fields = rows[2].split(',')
    assert fields[0] == 'awgn'
    assert fields[1] == ''
    assert float(fields[3]) == pytest.approx(0.0786, abs=1e-4)
    assert fields[-1] == '1'


def test_baseline_needs_scheme_and_snrs(tmp_path):
    assert run(tmp_path, 'baseline', '--snr-list', '0') == 2
    assert run(tmp_path, 'baseline', '--scheme', 'thp') == 2


def test_reruns_are_byte_identical(tmp_path):
    argv = ('baseline', '--scheme', 'thp', '--snr-list', '2,6', '--n-eval', '3000', '--seed', '5')
    assert run(tmp_path, *argv) == 0
    first = (tmp_path / 'curve.csv').read_bytes()
    assert run(tmp_path, *argv) == 0
    assert (tmp_path / 'curve.csv').read_bytes() == first


def test_sweep_writes_one_checkpoint_per_lambda(tmp_path):
    assert run(tmp_path, 'sweep', *TINY_TRAIN, '--lambdas', '1,10', '--n-eval', '500') == 0
    assert (tmp_path / 'checkpoints' / 'sweep_lambda1.ndpc').exists()
    assert (tmp_path / 'checkpoints' / 'sweep_lambda10.ndpc').exists()
    rows = (tmp_path / 'curve.csv').read_text(encoding='utf-8').splitlines()
    assert len(rows) == 4


def test_sweep_with_baseline_scheme(tmp_path):
    assert run(tmp_path, 'sweep', '--scheme', 'naive', '--snr-list', '0', '--n-eval', '500') == 0
    assert (tmp_path / 'curve.csv').read_text(encoding='utf-8').splitlines()[2].startswith('naive,')


def test_sweep_reruns_are_byte_identical(tmp_path):
    argv = ('sweep', *TINY_TRAIN, '--lambdas', '2,8', '--n-eval', '800', '--seed', '3', '--output', 'sweep.csv')
    assert run(tmp_path, *argv) == 0
    first = (tmp_path / 'sweep.csv').read_bytes()
    ckpt = (tmp_path / 'checkpoints' / 'sweep_lambda2.ndpc').read_bytes()
    assert run(tmp_path, *argv) == 0
    assert (tmp_path / 'sweep.csv').read_bytes() == first
    assert (tmp_path / 'checkpoints' / 'sweep_lambda2.ndpc').read_bytes() == ckpt
