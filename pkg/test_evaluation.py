"""Tests for Monte Carlo evaluation, sweeps, grids and baseline curves."""

import math
from dataclasses import replace

import numpy as np
import pytest

from core import RngStream, from_db, q_function
from constellation import bpsk, qpsk
from channel import ChannelConfig, InterferenceModel
from classical import awgn_noise_var, awgn_reference_ser, thp_delta_for_power
from errors import ConfigurationError, TrainingDivergedError
from evaluation import (SWEEP_SEED_STRIDE, AwgnSystem, NaiveSystem, SerEstimate, ThpSystem, baseline_curve,
                        build_baseline, decision_region_grid, encoder_map_grid, estimate_power, estimate_ser,
                        eval_stream, evaluate_model, lambda_sweep, mismatch_eval, simulate, thp_wrapped_noise_ser)
from lattice import dither_power
from neural import Activation, TrainConfig, build_model, train

NO_INTERFERENCE = InterferenceModel.gaussian(0.0)
GAUSSIAN_30 = ChannelConfig(1, 1.0, InterferenceModel.gaussian(30.0))
TINY = TrainConfig(epochs=1, steps_per_epoch=2, batch_size=16, hidden=(8, 8))


def within_ci(estimate: SerEstimate, expected: float, sigmas: float = 3.0) -> bool:
    sd = math.sqrt(expected * (1.0 - expected) / estimate.n_samples)
    return abs(estimate.ser - expected) <= sigmas * sd


def test_ser_estimate_from_counts():
    est = SerEstimate.from_counts(100, 10000)
    assert est.ser == 0.01
    assert est.ci95_halfwidth == pytest.approx(1.96 * math.sqrt(0.01 * 0.99 / 10000))
    assert est.log10_ser == pytest.approx(-2.0)
    assert SerEstimate.from_counts(0, 10).log10_ser == float('-inf')
    with pytest.raises(ValueError):
        SerEstimate.from_counts(0, 0)


def test_noiseless_awgn_is_error_free(caplog):
    cfg = ChannelConfig(2, 0.0, NO_INTERFERENCE)
    est = estimate_ser(AwgnSystem(qpsk(), 1.0), cfg, 5000, RngStream(1))
    assert est.ser == 0.0
    assert est.ci95_halfwidth == 0.0
    assert "no symbol errors" in caplog.text


@pytest.mark.parametrize("snr", [0.0, 4.0, 8.0])
def test_awgn_bpsk_matches_closed_form(snr):
    cfg = ChannelConfig(1, awgn_noise_var(bpsk(), snr), NO_INTERFERENCE)
    est = estimate_ser(AwgnSystem(bpsk(), 1.0), cfg, 1 << 20, eval_stream(int(snr)))
    assert within_ci(est, awgn_reference_ser(bpsk(), snr))


def test_awgn_bpsk_zero_db_value():
    cfg = ChannelConfig(1, awgn_noise_var(bpsk(), 0.0), NO_INTERFERENCE)
    est = estimate_ser(AwgnSystem(bpsk(), 1.0), cfg, 1 << 20, eval_stream(0))
    assert within_ci(est, 0.0786, sigmas=3.5)


def test_awgn_qpsk_matches_closed_form():
    snr = 6.0
    cfg = ChannelConfig(2, awgn_noise_var(qpsk(), snr), NO_INTERFERENCE)
    est = estimate_ser(AwgnSystem(qpsk(), 1.0), cfg, 1 << 19, eval_stream(6))
    assert within_ci(est, awgn_reference_ser(qpsk(), snr))


def test_naive_under_strong_interference():
    est = estimate_ser(NaiveSystem(bpsk(), 1.0), GAUSSIAN_30, 1 << 19, eval_stream(2))
    assert within_ci(est, float(q_function(1.0 / math.sqrt(31.0))))


def test_chunking_and_workers_do_not_change_counts():
    system = ThpSystem(4.0, 1, 2)
    rng = eval_stream(3)
    base, base_power = simulate(system, GAUSSIAN_30, 10000, rng, workers=1, chunk_size=10000)
    split, split_power = simulate(system, GAUSSIAN_30, 10000, rng, workers=4, chunk_size=777)
    assert base.errors == split.errors
    assert base_power == pytest.approx(split_power, rel=1e-12)


def test_neural_evaluation_independent_of_workers():
    model = build_model(bpsk(), Activation(), RngStream(4), 1.0, (8, 8))
    one = evaluate_model(model, GAUSSIAN_30, 3 * 65536 + 5, seed=4, workers=1)
    many = evaluate_model(model, GAUSSIAN_30, 3 * 65536 + 5, seed=4, workers=3)
    assert one.ser == many.ser
    assert one.snr_db == many.snr_db


def test_thp_power_is_uniform_variance():
    power = estimate_power(ThpSystem(4.0, 1, 2), GAUSSIAN_30, 1 << 20, eval_stream(5))
    assert power == pytest.approx(16.0 / 12.0, rel=0.01)


def test_thp_matches_wrapped_noise_integral():
    delta = math.sqrt(12.0 * from_db(9.65))
    cfg = ChannelConfig(1, 1.0, InterferenceModel.gaussian(30.0))
    est = estimate_ser(ThpSystem(delta, 1, 2), cfg, 1 << 20, eval_stream(6))
    assert within_ci(est, thp_wrapped_noise_ser(delta, 2, 1.0))


def test_thp_wrapped_noise_limits():
    assert thp_wrapped_noise_ser(4.0, 2, 0.0) == 0.0
    assert thp_wrapped_noise_ser(4.0, 1, 1.0) == 0.0
    assert thp_wrapped_noise_ser(4.0, 2, 1e6) == pytest.approx(0.5, abs=1e-3)
    # wrap-around mass is negligible here, leaving a two-sided tail
    assert thp_wrapped_noise_ser(8.0, 2, 1.0) == pytest.approx(2 * float(q_function(2.0)), abs=1e-8)


def test_evaluate_model_rejects_dimension_mismatch():
    model = build_model(qpsk(), Activation(), RngStream(0), 1.0, (4,))
    with pytest.raises(ConfigurationError):
        evaluate_model(model, GAUSSIAN_30, 100, 0)


def test_evaluate_model_point_fields():
    model = build_model(bpsk(), Activation(), RngStream(0), 2.5, (4,))
    point = evaluate_model(model, GAUSSIAN_30, 2000, 9)
    assert point.scheme == 'neural'
    assert point.lam == 2.5
    assert point.interference == 'gaussian:30'
    assert point.ser.n_samples == 2000
    assert point.snr_db == pytest.approx(10 * math.log10(point.tx_power))


def test_lambda_sweep_orders_by_snr_and_reports_checkpoints():
    seen = []
    points = lambda_sweep([5.0, 0.5], bpsk(), GAUSSIAN_30, replace(TINY, seed=3), n_eval=2000,
                          on_trained=lambda lam, ckpt: seen.append((lam, ckpt.seed)))
    assert seen == [(5.0, 3), (0.5, 3 + SWEEP_SEED_STRIDE)]
    assert [p.snr_db for p in points] == sorted(p.snr_db for p in points)
    assert {p.lam for p in points} == {5.0, 0.5}


def test_lambda_sweep_tags_divergence():
    with pytest.raises(TrainingDivergedError) as excinfo:
        lambda_sweep([1.0, math.inf], bpsk(), GAUSSIAN_30, TINY, n_eval=100)
    assert excinfo.value.lam == math.inf


def test_lambda_sweep_needs_values():
    with pytest.raises(ConfigurationError):
        lambda_sweep([], bpsk(), GAUSSIAN_30, TINY)


def test_mismatch_eval_same_variance_reproduces_curve_point():
    ckpt = train(bpsk(), GAUSSIAN_30, 1.0, TINY)
    own = evaluate_model(ckpt.model, GAUSSIAN_30, 4000, 0)
    points = mismatch_eval(ckpt, [30.0, 1.0], n_samples=4000, seed=0)
    assert points[0].ser == own.ser
    assert points[1].interference == 'gaussian:1'


def test_mismatch_eval_requires_gaussian_training():
    cfg = ChannelConfig(2, 1.0, InterferenceModel.structured_qpsk(4.5))
    ckpt = train(qpsk(), cfg, 1.0, replace(TINY, epochs=0))
    with pytest.raises(ConfigurationError):
        mismatch_eval(ckpt, [1.0], n_samples=100)


def test_decision_regions_of_flat_decoder_are_label_zero():
    model = build_model(qpsk(), Activation(), RngStream(1), 0.0, (4,))
    zero = model.decoder.with_arrays([np.zeros_like(a) for a in model.decoder.arrays()])
    table = decision_region_grid(replace(model, decoder=zero), (-15, 15), 5)
    assert table.columns == ('y1', 'y2', 'label')
    assert table.rows.shape == (25, 3)
    assert np.all(table.rows[:, 2] == 0)
    assert table.rows[0, :2].tolist() == [-15.0, -15.0]
    assert table.rows[1, :2].tolist() == [-15.0, -7.5]


def test_grid_dimension_checks():
    scalar_model = build_model(bpsk(), Activation(), RngStream(1), 0.0, (4,))
    plane_model = build_model(qpsk(), Activation(), RngStream(1), 0.0, (4,))
    with pytest.raises(ConfigurationError):
        decision_region_grid(scalar_model, (-1, 1), 4)
    with pytest.raises(ConfigurationError):
        encoder_map_grid(plane_model, (-1, 1), 4)
    with pytest.raises(ValueError):
        decision_region_grid(plane_model, (-1, 1), 1)


def test_encoder_map_columns():
    model = build_model(bpsk(), Activation(), RngStream(1), 0.0, (4,))
    table = encoder_map_grid(model, (-10, 10), 11)
    assert table.columns == ('s', 'x_v0', 'x_v1')
    assert table.rows.shape == (11, 3)
    assert table.rows[5, 0] == 0.0


def test_awgn_baseline_rows_are_analytic():
    rows = baseline_curve('awgn', bpsk(), GAUSSIAN_30, [0.0, 4.0])
    assert [r.snr_db for r in rows] == [0.0, 4.0]
    assert all(r.analytic for r in rows)
    assert rows[0].ser.ser == awgn_reference_ser(bpsk(), 0.0)
    assert rows[0].ser.n_samples == 0


def test_naive_baseline_hits_target_snr():
    rows = baseline_curve('naive', bpsk(), GAUSSIAN_30, [3.0], n_samples=5000)
    assert rows[0].snr_db == pytest.approx(3.0, abs=1e-9)
    assert rows[0].tx_power == pytest.approx(from_db(3.0))


def test_lattice_baseline_power():
    cfg = ChannelConfig(2, 1.0, InterferenceModel.gaussian(30.0))
    rows = baseline_curve('lattice', qpsk(), cfg, [6.0], n_samples=1 << 17, lattice_spec='hex:1')
    assert rows[0].snr_db == pytest.approx(6.0, abs=0.05)


def test_default_two_dimensional_lattice_is_checkerboard():
    cfg = ChannelConfig(2, 1.0, InterferenceModel.gaussian(30.0))
    system = build_baseline('lattice', qpsk(), cfg, 4.0)
    lat = system.cfg.lattice
    assert lat.name.startswith('constructionA:2:1*')
    assert dither_power(lat) == pytest.approx(4.0)
    assert build_baseline('lattice', bpsk(), GAUSSIAN_30, 4.0).cfg.lattice.name.startswith('scalar:1*')


def test_build_baseline_rejects_bad_choices():
    with pytest.raises(ConfigurationError):
        build_baseline('turbo', bpsk(), GAUSSIAN_30, 1.0)
    with pytest.raises(ConfigurationError):
        build_baseline('lattice', bpsk(), GAUSSIAN_30, 1.0, lattice_spec='hex:1')
    with pytest.raises(ConfigurationError):
        build_baseline('lattice', bpsk(), GAUSSIAN_30, 1.0, alpha_rule='half')
    with pytest.raises(ConfigurationError):
        build_baseline('thp', qpsk(), GAUSSIAN_30, 1.0)


@pytest.mark.slow
def test_learned_code_beats_thp_at_low_snr():
    best = None
    for seed in range(3):
        ckpt = train(bpsk(), GAUSSIAN_30, 4.0, TrainConfig(seed=seed))
        point = evaluate_model(ckpt.model, GAUSSIAN_30, 1 << 20, seed)
        if best is None or point.ser.ser < best.ser.ser:
            best = point
    thp = estimate_ser(ThpSystem(math.sqrt(12.0 * best.tx_power), 1, 2), GAUSSIAN_30, 1 << 20, eval_stream(0))
    assert best.ser.ser + best.ser.ci95_halfwidth < thp.ser - thp.ci95_halfwidth


@pytest.mark.slow
def test_mismatch_ser_does_not_grow_as_interference_shrinks():
    ckpt = train(bpsk(), GAUSSIAN_30, 100.0, TrainConfig(seed=0))
    points = mismatch_eval(ckpt, [30.0, 1.0, 0.5, 0.1], n_samples=1 << 20)
    for before, after in zip(points, points[1:]):
        slack = before.ser.ci95_halfwidth + after.ser.ci95_halfwidth
        assert after.ser.ser <= before.ser.ser + slack


@pytest.mark.slow
def test_learned_code_matches_thp_under_structured_interference():
    cfg = ChannelConfig(2, 1.0, InterferenceModel.structured_qpsk(4.5))
    points = lambda_sweep([0.5, 1.0, 2.0, 4.0], qpsk(), cfg, TrainConfig(seed=0), n_eval=1 << 20)
    compared = 0
    for point in points:
        if point.snr_db >= 6.0:
            continue
        thp_system = ThpSystem(thp_delta_for_power(point.tx_power, 2), 2, 4)
        thp = estimate_ser(thp_system, cfg, 1 << 20, eval_stream(point.seed))
        assert point.ser.ser - point.ser.ci95_halfwidth <= thp.ser + thp.ci95_halfwidth
        compared += 1
    assert compared >= 1
