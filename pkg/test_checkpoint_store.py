"""Tests for the binary checkpoint format."""

import struct

import numpy as np
import pytest

from channel import ChannelConfig, InterferenceModel
from checkpoint_store import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from constellation import bpsk, qpsk
from errors import CheckpointError
from neural import LEAKY_RELU, TrainConfig, train


@pytest.fixture(scope='module')
def checkpoint():
    cfg = TrainConfig(epochs=2, steps_per_epoch=2, batch_size=8, hidden=(5, 3), activation=LEAKY_RELU,
                      leaky_slope=0.2, seed=12, log_every=1)
    channel = ChannelConfig(2, 0.5, InterferenceModel.structured_qpsk(4.5))
    return train(qpsk(), channel, 7.5, cfg)


def test_round_trip_is_exact(checkpoint):
    data = encode_checkpoint(checkpoint)
    assert data[:4] == MAGIC
    restored = decode_checkpoint(data)
    for before, after in ((checkpoint.model.encoder, restored.model.encoder),
                          (checkpoint.model.decoder, restored.model.decoder)):
        assert before.dims == after.dims
        assert all(np.array_equal(a, b) for a, b in zip(before.arrays(), after.arrays()))
        assert after.activation == before.activation
    assert restored.model.constellation == checkpoint.model.constellation
    assert restored.model.lam == 7.5
    assert restored.seed == 12
    assert restored.final_loss == checkpoint.final_loss
    assert restored.loss_history == checkpoint.loss_history
    assert restored.train_config == checkpoint.train_config
    assert encode_checkpoint(restored) == data


def test_untrained_checkpoint_round_trips():
    ckpt = train(bpsk(), ChannelConfig(1, 1.0, InterferenceModel.gaussian(30.0)), 0.0,
                 TrainConfig(epochs=0, hidden=(2,)))
    restored = decode_checkpoint(encode_checkpoint(ckpt))
    assert restored.loss_history == []
    assert np.isnan(restored.final_loss)


def test_save_and_load(tmp_path, checkpoint):
    path = save_checkpoint(checkpoint, tmp_path / 'nested' / 'model.ndpc')
    assert path.exists()
    assert np.array_equal(load_checkpoint(path).model.encoder.flat(), checkpoint.model.encoder.flat())


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / 'absent.ndpc')


def test_bad_magic(checkpoint):
    data = b'XXXX' + encode_checkpoint(checkpoint)[4:]
    with pytest.raises(CheckpointError, match="bad magic"):
        decode_checkpoint(data)


def test_unsupported_version(checkpoint):
    data = encode_checkpoint(checkpoint)
    with pytest.raises(CheckpointError, match="unsupported version"):
        decode_checkpoint(data[:4] + struct.pack('<I', 99) + data[8:])


@pytest.mark.parametrize("keep", [0, 6, 40, -5])
def test_truncated(checkpoint, keep):
    data = encode_checkpoint(checkpoint)
    with pytest.raises(CheckpointError, match="truncated"):
        decode_checkpoint(data[:keep])


def test_flipped_parameter_byte(checkpoint):
    data = bytearray(encode_checkpoint(checkpoint))
    data[-20] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum mismatch"):
        decode_checkpoint(bytes(data))


def test_trailing_bytes(checkpoint):
    with pytest.raises(CheckpointError, match="trailing bytes"):
        decode_checkpoint(encode_checkpoint(checkpoint) + b"\0")


def test_header_field_order(checkpoint):
    data = encode_checkpoint(checkpoint)
    model = checkpoint.model
    assert struct.unpack_from('<4sIQ', data) == (MAGIC, 1, len(data))
    assert struct.unpack_from('<III', data, 16) == (2, 4, 1)
    assert struct.unpack_from('<dd', data, 28)[1] == 7.5
    enc_dims = struct.unpack_from('<I', data, 44)[0]
    assert enc_dims == len(model.encoder.dims)
    dec_at = 48 + 4 * enc_dims
    dec_dims = struct.unpack_from('<I', data, dec_at)[0]
    assert dec_dims == len(model.decoder.dims)
    seed, loss = struct.unpack_from('<Qd', data, dec_at + 4 + 4 * dec_dims)
    assert seed == 12
    assert loss == checkpoint.final_loss


def test_flipped_length_field_is_a_checksum_mismatch(checkpoint):
    data = bytearray(encode_checkpoint(checkpoint))
    data[44] ^= 0x01
    with pytest.raises(CheckpointError, match="checksum mismatch"):
        decode_checkpoint(bytes(data))
