import struct

import numpy as np
import pytest

from tailflow.checkpoint import MAGIC, CheckpointError, load_model, save_model
from tailflow.flow.fields import GaussianPathField
from tailflow.flow.model import TrainConfig, TrainedModel, train
from tailflow.flow.sampling import sample
from tailflow.flow.schedules import Schedule
from tailflow.transforms import TransformSpec


@pytest.fixture(scope="module")
def model():
    rng = np.random.default_rng(0)
    x = np.column_stack([rng.standard_t(1.5, 200), rng.standard_normal(200)])
    cfg = TrainConfig(max_epochs=5, early_stopping=False, hidden=8, n_layers=2, embed_dim=6,
                      schedule="vp_trig", standardize=True)
    return train(x, cfg, seed=4)


def test_round_trip(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(model, path)
    back = load_model(path)
    assert back.net.params.tobytes() == model.net.params.tobytes()
    assert back.net.frequencies.tobytes() == model.net.frequencies.tobytes()
    assert back.transform == model.transform
    assert back.schedule == model.schedule
    assert back.config == model.config
    assert back.log == model.log and back.seed == 4
    assert np.array_equal(back.shift, model.shift) and np.array_equal(back.scale, model.scale)
    a = sample(model, 50, 10, seed=1).samples
    b = sample(back, 50, 10, seed=1).samples
    assert a.tobytes() == b.tobytes()


def test_layout(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(model, path)
    raw = path.read_bytes()
    magic, version, hlen = struct.unpack_from("<8sIQ", raw)
    assert magic == MAGIC and version == 1
    n_payload = len(raw) - 20 - hlen
    d = model.d
    expected = model.net.n_params + model.net.frequencies.size + 2 * d
    assert n_payload == 8 * expected


def test_corrupt_files(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(model, path)
    raw = path.read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTAFILE" + raw[8:])
    with pytest.raises(CheckpointError, match="magic"):
        load_model(bad)
    bad.write_bytes(raw[:8] + struct.pack("<I", 99) + raw[12:])
    with pytest.raises(CheckpointError, match="version"):
        load_model(bad)
    bad.write_bytes(raw[:-16])
    with pytest.raises(CheckpointError, match="past the end"):
        load_model(bad)
    bad.write_bytes(raw[:5])
    with pytest.raises(CheckpointError):
        load_model(bad)


def test_analytic_fields_are_not_checkpointed(tmp_path):
    s = Schedule()
    m = TrainedModel(GaussianPathField(1), TransformSpec.identity(1), s)
    with pytest.raises(TypeError):
        save_model(m, tmp_path / "x.ckpt")
