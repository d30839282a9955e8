# Copyright (c) 2026, The budgetvit Authors
# SPDX-License-Identifier: Apache-2.0

import os
import pathlib

import numpy as np
import pytest

import budgetvit as bv

SOURCE_DIR = pathlib.Path(os.environ.get("BUDGETVIT_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))

TINY = """
[model]
embed_dim = 16
depth = 1
num_heads = 2
num_classes = 10

[schedule]
initial_size = 32
increment = 32
period_epochs = 1
final_size = 64

[optim]
batch_size = 16

[data]
format = synthetic
synthetic_train_per_class = 4
synthetic_val_per_class = 2

[budget]
max_epochs = 2
"""


def test_h_swish_examples():
    y = bv.h_swish(np.array([-4.0, -3.0, 0.0, 1.0, 3.0, 5.0]))
    np.testing.assert_allclose(y, [0.0, 0.0, 0.0, 4.0 / 6.0, 3.0, 5.0], rtol=0, atol=1e-15)


def test_gelu_modes():
    x = np.linspace(-3, 3, 7)
    assert bv.gelu(x)[3] == 0.0
    np.testing.assert_allclose(bv.gelu(x, "tanh"), bv.gelu(x), atol=1e-3)
    with pytest.raises(ValueError):
        bv.gelu(x, "sigmoid")


def test_seq2im_roundtrip():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((36, 5))
    g = bv.seq2im(z)
    assert g.shape == (5, 6, 6)
    assert np.array_equal(bv.im2seq(g), z)
    with pytest.raises(ValueError):
        bv.seq2im(np.zeros((5, 3)))


def test_schedule_table():
    s = bv.ImageSizeSchedule()
    assert [s.size_for_epoch(e) for e in (0, 4, 5, 30, 99)] == [32, 32, 64, 224, 224]
    assert s.patches_for_epoch(30) == 196
    assert [t["epoch"] for t in s.transitions(31)] == [5, 10, 15, 20, 25, 30]
    with pytest.raises(ValueError):
        bv.ImageSizeSchedule(initial_size=40)


def test_param_accounting():
    assert bv.ffn_param_count(384) == 1_196_928
    assert bv.ffn_param_count(384) - bv.ffn_param_count(384, "plain") == 9 * 4 * 384 + 4 * 384


def test_pos_embed_same_grid_identity():
    rows = np.random.default_rng(1).standard_normal((17, 4))
    assert np.array_equal(bv.interpolate_embedding_rows(rows, 4, 4, True), rows)
    flat = np.full((17, 4), 0.25)
    np.testing.assert_allclose(bv.interpolate_embedding_rows(flat, 4, 7, True), 0.25, atol=1e-12)


def test_model_forward_and_grid():
    model = bv.VitModel(TINY, seed=3)
    assert model.current_grid == 4
    logits = model.forward(np.zeros((2, 3, 64, 64)))
    assert logits.shape == (2, 10)
    with pytest.raises(RuntimeError):
        model.forward(np.zeros((1, 3, 32, 32)))
    model.interpolate_pos_embed(2)
    assert model.forward(np.zeros((1, 3, 32, 32))).shape == (1, 10)
    total, modules = model.param_count()
    assert total == sum(modules.values())


def test_cross_entropy():
    loss = bv.cross_entropy_ls(np.zeros((2, 4)), [0, 3], 0.1)
    assert loss == pytest.approx(np.log(4.0))


def test_resolve_default_config():
    text = bv.resolve_config(str(SOURCE_DIR / "configs" / "default.ini"))
    assert "initial_size = 32" in text
    assert "lr = 0.001" in text
    with pytest.raises(ValueError):
        bv.resolve_config(str(SOURCE_DIR / "configs" / "default.ini"), ["optim.nope=1"])


def test_commands(tmp_path):
    code, out, _ = bv.cmd_schedule(str(SOURCE_DIR / "configs" / "default.ini"))
    assert code == 0
    assert out.splitlines()[-1] == "30,224,196"

    cfg = tmp_path / "run.ini"
    cfg.write_text(TINY)
    run_dir = tmp_path / "run"
    code, out, err = bv.cmd_train(str(cfg), ["run.precision=double"], str(run_dir))
    assert code == 0, err
    rows = bv.read_metrics_csv(run_dir / "metrics.csv")
    assert [r["image_size"] for r in rows] == [32, 64]
    ckpt = run_dir / (run_dir / "ckpt_latest").read_text().strip()
    first = bv.cmd_eval(str(ckpt))
    assert first[0] == 0 and first == bv.cmd_eval(str(ckpt))
    assert bv.cmd_eval(str(ckpt), eval_size=100)[0] == 2

    code, _, _ = bv.cmd_train(str(cfg), ["data.format=image-directory", "data.path=/nonexistent"], str(run_dir))
    assert code == 2


def test_gradcheck_primitives():
    reports = bv.gradcheck()
    assert reports and all(passed for _, _, passed in reports)
