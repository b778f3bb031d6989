import numpy as np
import pytest

from freqcap import checkpoint as C
from freqcap import model as M
from freqcap import training as TR
from freqcap import wfe as W
from freqcap.tensor import Rng
from freqcap.wfe import WfeLossConfig


def small_cfg(H=8):
    return M.ModelConfig(D=6, H=H, src_vocab_size=10, tgt_vocab_size=9,
                         dropout_rate=0.0)


@pytest.fixture
def saved(tmp_path):
    cfg = small_cfg()
    params = TR.init_all_params(cfg, Rng(3), with_wfe=True)
    path = tmp_path / "model.ckpt"
    C.save(path, params, cfg, WfeLossConfig())
    return path, cfg, params


def test_round_trip_bit_exact(saved):
    path, cfg, params = saved
    ck = C.load(path)
    assert set(ck.params) == set(params)
    for name in params:
        assert ck.params[name].data.tobytes() == params[name].data.tobytes()
    assert ck.model_cfg == cfg
    assert ck.loss_cfg == WfeLossConfig()
    assert ck.has_wfe


def test_save_load_save_byte_identical(saved, tmp_path):
    path, cfg, _ = saved
    ck = C.load(path)
    path2 = tmp_path / "again.ckpt"
    C.save(path2, ck.params, ck.model_cfg, ck.loss_cfg)
    assert path.read_bytes() == path2.read_bytes()


def test_truncated_file_reports_offset(saved, tmp_path):
    path, _, _ = saved
    blob = path.read_bytes()
    broken = tmp_path / "broken.ckpt"
    broken.write_bytes(blob[:len(blob) // 2])
    with pytest.raises(C.CheckpointFormatError, match="byte offset"):
        C.load(broken)


def test_bad_magic_rejected(saved, tmp_path):
    path, _, _ = saved
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(blob))
    with pytest.raises(C.CheckpointFormatError, match="magic"):
        C.load(bad)


def test_bad_version_rejected(saved, tmp_path):
    path, _, _ = saved
    blob = bytearray(path.read_bytes())
    blob[4:8] = (99).to_bytes(4, "little")
    bad = tmp_path / "badver.ckpt"
    bad.write_bytes(bytes(blob))
    with pytest.raises(C.CheckpointFormatError, match="version"):
        C.load(bad)


def test_trailing_garbage_rejected(saved, tmp_path):
    path, _, _ = saved
    bad = tmp_path / "trailing.ckpt"
    bad.write_bytes(path.read_bytes() + b"\x00\x01")
    with pytest.raises(C.CheckpointFormatError, match="trailing"):
        C.load(bad)


def test_shape_mismatch_names_first_tensor(saved):
    path, _, _ = saved
    smaller = small_cfg(H=4)
    with pytest.raises(C.CheckpointShapeError) as exc:
        C.load(path, expect_model_cfg=smaller)
    # entries are checked in name order; the first H-dependent one is att.W_a
    assert "att.W_a" in str(exc.value)
    assert "(8, 8)" in str(exc.value) and "(4, 4)" in str(exc.value)


def test_matching_config_validates(saved):
    path, cfg, _ = saved
    ck = C.load(path, expect_model_cfg=cfg)
    assert ck.model_cfg == cfg


def test_baseline_checkpoint_lacks_wfe_entries(tmp_path):
    cfg = small_cfg()
    params = TR.init_all_params(cfg, Rng(4), with_wfe=False)
    path = tmp_path / "base.ckpt"
    C.save(path, params, cfg)
    ck = C.load(path)
    assert not ck.has_wfe
    assert not any(name.startswith("wfe.") for name in ck.params)


def test_single_precision_downcast_is_flagged_and_lossy(saved, tmp_path):
    path, cfg, params = saved
    lossy = tmp_path / "lossy.ckpt"
    C.save(lossy, params, cfg, single_precision=True)
    assert lossy.stat().st_size < path.stat().st_size
    ck = C.load(lossy)
    name = "out.W"
    assert ck.params[name].data.tobytes() != params[name].data.tobytes()
    np.testing.assert_allclose(ck.params[name].data, params[name].data, atol=1e-6)
