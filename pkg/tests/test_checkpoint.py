import numpy as np
import pytest

from trussim.nn import models
from trussim.nn.checkpoint import (CorruptCheckpoint, VersionMismatch,
                                   load_params, save_params)


@pytest.fixture
def params():
    return models.init_transition(np.random.default_rng(0))


def test_roundtrip_bit_identical(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_params(path, params, "transition", {"seed": 0, "lr": 1e-3})
    loaded, kind, hyper = load_params(path)
    assert kind == "transition"
    assert hyper == {"seed": "0", "lr": "0.001"}
    assert list(loaded) == list(params)
    for name in params:
        assert loaded[name].dtype == np.float32
        assert np.array_equal(loaded[name], params[name])


def test_save_twice_identical_bytes(tmp_path, params):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_params(p1, params, "transition")
    save_params(p2, params, "transition")
    assert p1.read_bytes() == p2.read_bytes()


def test_truncated_file_is_corrupt(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_params(path, params, "transition")
    blob = path.read_bytes()
    for cut in (2, 8, 40, len(blob) - 17):
        (tmp_path / "cut.ckpt").write_bytes(blob[:cut])
        with pytest.raises(CorruptCheckpoint):
            load_params(tmp_path / "cut.ckpt")


def test_trailing_garbage_is_corrupt(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_params(path, params, "transition")
    path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
    with pytest.raises(CorruptCheckpoint):
        load_params(path)


def test_bad_magic_and_version(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_params(path, params, "transition")
    blob = bytearray(path.read_bytes())
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(CorruptCheckpoint):
        load_params(bad)
    blob[4] = 99
    bad.write_bytes(bytes(blob))
    with pytest.raises(VersionMismatch):
        load_params(bad)


def test_autoencoder_roundtrip(tmp_path):
    params = models.init_autoencoder(np.random.default_rng(1))
    path = tmp_path / "ae.ckpt"
    save_params(path, params, "autoencoder")
    loaded, kind, _ = load_params(path)
    assert kind == "autoencoder"
    for name in params:
        assert np.array_equal(loaded[name], params[name])
    # layer order preserved (checkpoints serialize in manifest order)
    assert list(loaded) == list(params)
