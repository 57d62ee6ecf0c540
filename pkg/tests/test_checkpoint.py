import hashlib
import struct

import numpy as np
import pytest

from eanet.checkpoint import (MAGIC, META_NAME, VERSION, checkpoint_bytes,
                              config_text, load_checkpoint, save_checkpoint)
from eanet.errors import CheckpointError
from eanet.model import ModelConfig, TrajectoryModel, toy_instance
from eanet.rng import Xorshift64Star

CONFIG = ModelConfig(stack_layers=3)


def fresh(tmp_path, seed=7, rng=None):
    model = TrajectoryModel(CONFIG, seed=seed)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, str(path), rng=rng)
    return model, path


def test_save_load_save_is_byte_identical(tmp_path):
    model, path = fresh(tmp_path)
    first = path.read_bytes()
    loaded, rng = load_checkpoint(str(path))
    save_checkpoint(loaded, str(path), rng=rng)
    assert path.read_bytes() == first


def test_parameters_survive_the_round_trip_exactly(tmp_path):
    model, path = fresh(tmp_path)
    loaded, _ = load_checkpoint(str(path))
    assert sorted(loaded.params) == sorted(model.params)
    for name, param in model.params.items():
        assert np.array_equal(loaded.params[name].data, param.data), name


def test_rng_state_round_trips(tmp_path):
    rng = Xorshift64Star(99)
    for _ in range(5):
        rng.uniform()
    state = rng.getstate()
    _, path = fresh(tmp_path, rng=rng)
    _, restored = load_checkpoint(str(path))
    assert restored.getstate() == state
    twin = Xorshift64Star(1)
    twin.setstate(state)
    assert restored.uniform() == twin.uniform()


def test_config_survives_the_round_trip(tmp_path):
    config = ModelConfig(t_obs=6, t_pred=10, stack_layers=2, kernel="rbf",
                         rbf_sigma=2.0, prelu_init=0.1)
    model = TrajectoryModel(config, seed=1)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, str(path))
    loaded, _ = load_checkpoint(str(path))
    assert config_text(loaded.config) == config_text(config)


def test_post_save_prediction_matches_reload_exactly(tmp_path):
    #  Saving rounds the live parameters to the stored f32 grid, so the
    #  just-saved model and its reloaded copy agree bit for bit.
    model, path = fresh(tmp_path, seed=3)
    inst = toy_instance(agents=4, config=CONFIG, seed=2)
    after_save = model.predict(inst)
    loaded, _ = load_checkpoint(str(path))
    assert np.array_equal(loaded.predict(inst), after_save)


def test_bad_magic_is_rejected(tmp_path):
    _, path = fresh(tmp_path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(str(path))


def test_unsupported_version_is_rejected(tmp_path):
    _, path = fresh(tmp_path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", VERSION + 1)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(str(path))


def test_truncated_file_is_rejected(tmp_path):
    _, path = fresh(tmp_path)
    blob = path.read_bytes()
    for cut in (3, 10, len(blob) // 2, len(blob) - 1):
        path.write_bytes(blob[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))


def test_trailing_bytes_are_rejected(tmp_path):
    _, path = fresh(tmp_path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(str(path))


def test_unknown_tensor_name_is_rejected(tmp_path):
    model = TrajectoryModel(CONFIG, seed=7)
    blob = checkpoint_bytes(model)
    # Rename the GCN weight in place; same name length keeps offsets valid.
    assert b"gcn/w" in blob
    path = tmp_path / "m.ckpt"
    path.write_bytes(blob.replace(b"gcn/w", b"gcn/q", 1))
    with pytest.raises(CheckpointError, match="unknown tensor|missing"):
        load_checkpoint(str(path))


def test_tampered_config_fails_the_digest(tmp_path):
    model, path = fresh(tmp_path)
    blob = bytearray(path.read_bytes())
    # The meta/config tensor is first; flip its stack_layers entry.
    header = 4 + 4 + 4 + 2 + len(META_NAME.encode()) + 1 + 4
    vec = np.frombuffer(bytes(blob[header:header + 28]), dtype="<f4").copy()
    vec[3] += 1.0
    blob[header:header + 28] = vec.tobytes()
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="digest"):
        load_checkpoint(str(path))


def test_digest_covers_the_canonical_config_text():
    model = TrajectoryModel(CONFIG, seed=0)
    blob = checkpoint_bytes(model)
    want = hashlib.sha256(config_text(CONFIG).encode("utf-8")).digest()
    assert blob[-32:] == want


def test_save_rounds_live_parameters_to_f32(tmp_path):
    model = TrajectoryModel(CONFIG, seed=5)
    model.params["gcn/w"].data[0, 0] = 0.1  # not representable in f32
    save_checkpoint(model, str(tmp_path / "m.ckpt"))
    stored = np.float64(np.float32(0.1))
    assert model.params["gcn/w"].data[0, 0] == stored


def test_checkpoint_bytes_leaves_the_model_alone():
    model = TrajectoryModel(CONFIG, seed=5)
    model.params["gcn/w"].data[0, 0] = 0.1
    checkpoint_bytes(model)
    assert model.params["gcn/w"].data[0, 0] == 0.1
