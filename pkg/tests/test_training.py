import json
import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from orthtd.checkpoint import load_checkpoint, load_into, read_header, save_checkpoint
from orthtd.decomposition import DecompConfig
from orthtd.encoders import TabularEncoderConfig, TextEncoderConfig
from orthtd.errors import CheckpointError, NumericError
from orthtd.evaluation import evaluate
from orthtd.fusion import FusionConfig
from orthtd.losses import LossConfig
from orthtd.strategies import ModelConfig, StrategyConfig, build_strategy
from orthtd.training import AdamW, TrainConfig, cosine_lr, train, write_history
from orthtd.vitals import VitalFeatureSpec, augment_cohort

TEXT_CFG = TextEncoderConfig(vocab_size=50, embed_dim=8, layers=1, heads=2)


def small_model_config(name="orthtd"):
    return ModelConfig(
        strategy=StrategyConfig(name),
        fusion=FusionConfig(d_hidden=8, layers=1, heads=2),
        decomp=DecompConfig(),
        tabular=TabularEncoderConfig(embed_dim=4),
        text=TEXT_CFG,
    )


# ------------------------------------------------------------- schedule


def test_cosine_lr_boundary_values():
    assert cosine_lr(0, 100, 0.1) == 0.0
    assert cosine_lr(10, 100, 0.1) == 1.0
    assert cosine_lr(100, 100, 0.1) == pytest.approx(0.0, abs=1e-15)
    assert cosine_lr(55, 100, 0.1) == pytest.approx(0.5)


def test_cosine_lr_warmup_is_linear():
    assert cosine_lr(5, 100, 0.1) == pytest.approx(0.5)
    assert cosine_lr(1, 100, 0.1) == pytest.approx(0.1)


def test_cosine_lr_continuous_at_boundary():
    left = cosine_lr(9, 100, 0.1)
    right = cosine_lr(11, 100, 0.1)
    assert left < 1.0 and right < 1.0
    assert cosine_lr(10, 100, 0.1) == 1.0
    # non-increasing after warm-up
    vals = [cosine_lr(s, 100, 0.1) for s in range(10, 101)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_cosine_lr_no_warmup():
    assert cosine_lr(0, 10, 0.0) == 1.0
    assert cosine_lr(5, 10, 0.0) == pytest.approx(0.5)


def test_cosine_lr_out_of_range():
    with pytest.raises(ValueError):
        cosine_lr(-1, 10, 0.1)
    with pytest.raises(ValueError):
        cosine_lr(11, 10, 0.1)


# ------------------------------------------------------------- optimizer


class Scalar(nn.Module):
    def __init__(self, value=1.0):
        super().__init__()
        self.theta = nn.Parameter(torch.tensor([value]))


def test_adamw_zero_grad_zero_decay_is_fixed_point():
    model = Scalar(2.5)
    opt = AdamW(model, TrainConfig(weight_decay=0.0, lr_main=0.1))
    model.theta.grad = torch.zeros(1)
    opt.step(1.0)
    assert model.theta.item() == 2.5


def test_adamw_first_step_magnitude():
    model = Scalar(0.0)
    cfg = TrainConfig(lr_main=1e-3, weight_decay=0.0)
    opt = AdamW(model, cfg)
    model.theta.grad = torch.tensor([1.0])
    opt.step(1.0)
    # first step: -lr * g / (|g| + eps) ~ -lr
    assert model.theta.item() == pytest.approx(-1e-3, rel=1e-5)


def test_adamw_decay_only_shrinks():
    model = Scalar(4.0)
    cfg = TrainConfig(lr_main=0.01, weight_decay=0.5)
    opt = AdamW(model, cfg)
    model.theta.grad = torch.zeros(1)
    opt.step(1.0)
    assert model.theta.item() == pytest.approx(4.0 * (1 - 0.01 * 0.5), rel=1e-7)


def test_adamw_non_finite_gradient_aborts_with_name():
    model = Scalar(1.0)
    opt = AdamW(model, TrainConfig())
    model.theta.grad = torch.tensor([float("nan")])
    with pytest.raises(NumericError, match="theta"):
        opt.step(1.0)


def test_adamw_group_rates():
    model = nn.Module()
    model.text_encoder = nn.Linear(2, 2, bias=False)
    model.main_part = nn.Linear(2, 2, bias=False)
    cfg = TrainConfig(lr_main=1e-2, lr_text=1e-3, weight_decay=0.0)
    opt = AdamW(model, cfg)
    before_text = model.text_encoder.weight.detach().clone()
    before_main = model.main_part.weight.detach().clone()
    for p in model.parameters():
        p.grad = torch.ones_like(p)
    opt.step(1.0)
    move_text = (model.text_encoder.weight - before_text).abs().max().item()
    move_main = (model.main_part.weight - before_main).abs().max().item()
    assert move_text <= (cfg.lr_text / cfg.lr_main) * move_main * (1 + 1e-5)
    assert move_main == pytest.approx(1e-2, rel=1e-5)


# ------------------------------------------------------------- trainer


@pytest.fixture
def aug_cohort(tiny_cohort):
    return augment_cohort(tiny_cohort, VitalFeatureSpec())


def run_training(aug_cohort, seed=1, epochs=2, name="orthtd", val=None):
    torch.manual_seed(seed)
    mc = small_model_config(name)
    model = build_strategy(aug_cohort.schema, mc)
    cfg = TrainConfig(epochs=epochs, batch_size=8, seed=seed)
    history = train(model, aug_cohort, cfg, LossConfig(), TEXT_CFG, val_cohort=val)
    return model, history


def test_train_smoke_and_history_shape(aug_cohort):
    _model, history = run_training(aug_cohort, epochs=2)
    assert len(history) == 2
    for rec in history:
        assert math.isfinite(rec.loss)
        assert rec.ortho is not None and 0.0 <= rec.ortho <= 1.0


def test_train_deterministic_history(aug_cohort, tmp_path):
    _m1, h1 = run_training(aug_cohort, seed=3, epochs=2)
    _m2, h2 = run_training(aug_cohort, seed=3, epochs=2)
    write_history(h1, tmp_path / "a.jsonl")
    write_history(h2, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_train_seed_changes_history(aug_cohort):
    _m1, h1 = run_training(aug_cohort, seed=3, epochs=1)
    _m2, h2 = run_training(aug_cohort, seed=4, epochs=1)
    assert h1[0].loss != h2[0].loss


def test_train_records_val_metrics(aug_cohort):
    _m, history = run_training(aug_cohort, epochs=1, val=aug_cohort)
    assert set(history[0].val_auc) == set(aug_cohort.schema.task_names)


def test_train_hard_sharing_has_no_ortho(aug_cohort):
    _m, history = run_training(aug_cohort, name="hard_sharing", epochs=1)
    assert history[0].ortho is None


def test_history_log_is_json_lines(aug_cohort, tmp_path):
    _m, history = run_training(aug_cohort, epochs=2)
    path = tmp_path / "history.jsonl"
    write_history(history, path)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert {"epoch", "loss", "ortho", "lr_scale", "val_auc"} <= set(rec)


# ------------------------------------------------------------- checkpoint


def test_checkpoint_roundtrip_reproduces_evaluation(aug_cohort, tmp_path):
    model, _h = run_training(aug_cohort, epochs=1)
    mc = small_model_config()
    path = tmp_path / "model.otd"
    save_checkpoint(model, path, aug_cohort.schema, mc, VitalFeatureSpec(), seed=1)
    loaded, schema, loaded_mc, vitals, header = load_checkpoint(path)
    assert schema == aug_cohort.schema
    assert loaded_mc == mc
    r1 = evaluate(model, aug_cohort, TEXT_CFG)
    r2 = evaluate(loaded, aug_cohort, TEXT_CFG)
    assert r1.to_dict() == r2.to_dict()


def test_checkpoint_truncation_detected(aug_cohort, tmp_path):
    model, _h = run_training(aug_cohort, epochs=1)
    path = tmp_path / "model.otd"
    save_checkpoint(model, path, aug_cohort.schema, small_model_config(), VitalFeatureSpec())
    raw = path.read_bytes()
    path.write_bytes(raw[:-20])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_shape_mismatch_names_parameter(aug_cohort, tmp_path):
    model, _h = run_training(aug_cohort, epochs=1)
    path = tmp_path / "model.otd"
    save_checkpoint(model, path, aug_cohort.schema, small_model_config(), VitalFeatureSpec())
    torch.manual_seed(0)
    wide = build_strategy(
        aug_cohort.schema,
        ModelConfig(
            strategy=StrategyConfig("orthtd"),
            fusion=FusionConfig(d_hidden=16, layers=1, heads=2),
            decomp=DecompConfig(),
            tabular=TabularEncoderConfig(embed_dim=4),
            text=TEXT_CFG,
        ),
    )
    with pytest.raises(CheckpointError, match="shape mismatch"):
        load_into(wide, path)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bogus.otd"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        read_header(path)


def test_checkpoint_version_guard(aug_cohort, tmp_path):
    model, _h = run_training(aug_cohort, epochs=1)
    path = tmp_path / "model.otd"
    save_checkpoint(model, path, aug_cohort.schema, small_model_config(), VitalFeatureSpec())
    raw = bytearray(path.read_bytes())
    import struct

    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen].decode())
    header["version"] = 99
    new_header = json.dumps(header, sort_keys=True).encode()
    path.write_bytes(b"OTD1" + struct.pack("<I", len(new_header)) + new_header + raw[8 + hlen :])
    with pytest.raises(CheckpointError, match="version"):
        read_header(path)


def test_checkpoint_stores_optimizer_moments(aug_cohort, tmp_path):
    torch.manual_seed(5)
    mc = small_model_config()
    model = build_strategy(aug_cohort.schema, mc)
    opt = AdamW(model, TrainConfig())
    for p in model.parameters():
        p.grad = torch.ones_like(p)
    opt.step(1.0)
    path = tmp_path / "model.otd"
    save_checkpoint(model, path, aug_cohort.schema, mc, VitalFeatureSpec(), optimizer=opt)
    header, _ = read_header(path)
    kinds = {e["kind"] for e in header["entries"]}
    assert kinds == {"param", "adam_m", "adam_v"}
    assert header["optimizer_step"] == 1
