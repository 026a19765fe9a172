"""Tests for configuration, the composite objective, the training loop and the gradient check."""

import json

import numpy as np
import pytest
import torch

from bagio import Fold, SplitSpec, SynthSpec, class_balanced_weights, generate_synthetic_dataset, stratified_kfold
from trainer import (
    ConfigError,
    NonFiniteLossError,
    TrainConfig,
    TrainingDivergedError,
    build_model,
    class_balanced_sampler,
    evaluate_split,
    lambda1_at,
    load_trained,
    predict,
    prepare_bags,
    preset_config,
    resolve_config,
    run_gradcheck,
    total_loss,
    train,
)
from trainer import loop as loop_module
from trainer.gradcheck import check_instance, gradcheck_config


def fast_config(**overrides):
    values = dict(hidden_dim=8, batch_size=8, max_epochs=2, warmup_epochs=1, seed=5)
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def small_data(small_spec):
    bags = generate_synthetic_dataset(small_spec, seed=11)
    fold = stratified_kfold(bags, SplitSpec(), seed=0)[0]
    return bags, fold


# ============================================================================
# CONFIGURATION
# ============================================================================

def test_default_hyperparameters():
    cfg = TrainConfig()
    assert (cfg.top_m, cfg.k_latent, cfg.k_spatial) == (5, 8, 8)
    assert (cfg.num_layers, cfg.hidden_dim, cfg.dropout) == (1, 64, 0.5)
    assert (cfg.tau, cfg.lambda1, cfg.lambda2) == (0.1, 0.2, 0.1)
    assert (cfg.learning_rate, cfg.weight_decay, cfg.batch_size) == (1e-4, 1e-3, 16)
    assert (cfg.warmup_epochs, cfg.early_stop_patience, cfg.betas) == (10, 9, (0.9, 0.999))
    assert (cfg.alpha, cfg.delta, cfg.rank_k, cfg.bin_width, cfg.pair_cap) == (0.25, 0.02, 16, 0.1, 512)


def test_dataset_presets():
    skin = preset_config("skin")
    assert (skin.tau, skin.lambda1, skin.lambda2, skin.max_epochs, skin.num_classes) == (0.1, 0.2, 0.1, 60, 4)
    head_neck = preset_config("head_neck")
    assert (head_neck.lambda1, head_neck.max_epochs, head_neck.classifier) == (0.1, 100, "linear")
    lung = preset_config("lung")
    assert (lung.tau, lung.lambda1, lung.lambda2, lung.num_classes) == (0.3, 0.3, 0.1, 3)
    single = preset_config("lung", "spatial")
    assert single.graph_mode == "spatial" and single.lambda2 == 0.0
    baseline = preset_config("skin", "none")
    assert baseline.graph_mode == "none" and baseline.lambda2 == 0.0
    with pytest.raises(ConfigError):
        preset_config("skin", "triple")


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"lambda1": 0.3, "learnig_rate": 0.1}), encoding="utf-8")
    with pytest.raises(ConfigError):
        TrainConfig.from_json(path)


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"tau": 0.0})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"graph_mode": "triple"})
    with pytest.raises(ConfigError):
        preset_config("liver")


def test_literal_grade_loss_needs_cosine_classifier(tmp_path):
    assert TrainConfig.from_dict({"grade_loss_mode": "literal"}).classifier == "cosine"
    with pytest.raises(ConfigError, match="cosine classifier"):
        TrainConfig.from_dict({"grade_loss_mode": "literal", "classifier": "linear"})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"grade_loss_mode": "literal"}), encoding="utf-8")
    with pytest.raises(ConfigError):
        resolve_config(preset="head_neck", config_path=path)


def test_json_round_trip(tmp_path):
    cfg = preset_config("head_neck", "latent")
    cfg.to_json(tmp_path / "cfg.json")
    assert TrainConfig.from_json(tmp_path / "cfg.json") == cfg


def test_precedence_flag_file_preset_default(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"lambda1": 0.05, "tau": 0.2}), encoding="utf-8")
    cfg = resolve_config(preset="lung", config_path=path, overrides={"tau": 0.7, "seed": None})
    assert cfg.tau == 0.7
    assert cfg.lambda1 == 0.05
    assert cfg.max_epochs == 100
    assert cfg.hidden_dim == 64


# ============================================================================
# OBJECTIVE
# ============================================================================

def test_lambda1_warmup():
    cfg = TrainConfig(lambda1=0.2, warmup_epochs=10)
    assert lambda1_at(cfg, 0) == 0.0
    assert lambda1_at(cfg, 5) == pytest.approx(0.1)
    assert lambda1_at(cfg, 25) == pytest.approx(0.2)


def _forwards(cfg, bags):
    model = build_model(bags[0].feature_dim, cfg)
    prepared = prepare_bags(bags, cfg)
    model.eval()
    return model, [model(p.features, p.graphs) for p in prepared], [p.label for p in prepared]


def test_zero_lambdas_leave_grade_loss(small_data):
    bags, _ = small_data
    cfg = fast_config(lambda1=0.0, lambda2=0.0)
    model, forwards, labels = _forwards(cfg, bags[:3])
    breakdown = total_loss(model, forwards, labels, cfg, epoch=50)
    assert breakdown.total.item() == pytest.approx(breakdown.grade.item())


def test_first_epoch_has_no_ranking_contribution(small_data):
    bags, _ = small_data
    cfg = fast_config(warmup_epochs=10)
    model, forwards, labels = _forwards(cfg, bags[:3])
    b = total_loss(model, forwards, labels, cfg, epoch=0)
    assert b.total.item() == pytest.approx(b.grade.item() + cfg.lambda2 * b.diversity.item())


def test_non_finite_term_is_named(small_data):
    bags, _ = small_data
    cfg = fast_config()
    model, _, _ = _forwards(cfg, bags[:2])
    with torch.no_grad():
        model.gnn.project.net[0].weight.fill_(float("nan"))
    prepared = prepare_bags(bags[:2], cfg)
    forwards = [model(p.features, p.graphs) for p in prepared]
    with pytest.raises(NonFiniteLossError) as info:
        total_loss(model, forwards, [p.label for p in prepared], cfg, epoch=0)
    assert info.value.term == "grade"


# ============================================================================
# SAMPLING AND OPTIMISER
# ============================================================================

def test_sampler_matches_class_weights():
    counts = (100, 10, 10, 10)
    labels = np.repeat(np.arange(4), counts)
    sampler = class_balanced_sampler(labels.tolist(), TrainConfig(beta_cb=0.999), torch.Generator().manual_seed(0))
    draws = []
    while len(draws) < 100_000:
        draws.extend(sampler)
    frequencies = np.bincount(labels[np.array(draws[:100_000])], minlength=4) / 100_000
    assert np.allclose(frequencies, class_balanced_weights(counts, 0.999), atol=0.02)


def test_zero_gradient_step_leaves_parameters():
    model = build_model(6, fast_config())
    optimizer = torch.optim.AdamW(model.parameters(), lr=1e-2, weight_decay=0.0)
    before = {k: v.clone() for k, v in model.state_dict().items()}
    for p in model.parameters():
        p.grad = torch.zeros_like(p)
    optimizer.step()
    for k, v in model.state_dict().items():
        assert torch.equal(v, before[k]), k


# ============================================================================
# TRAINING LOOP
# ============================================================================

def test_zero_learning_rate_keeps_parameters(tmp_path, small_data):
    bags, fold = small_data
    cfg = fast_config(learning_rate=0.0)
    initial = build_model(bags[0].feature_dim, cfg).state_dict()
    result = train(bags, fold, cfg, tmp_path, progress=False)
    for k, v in result.model.state_dict().items():
        assert torch.allclose(v, initial[k], atol=1e-6), k


def test_same_seed_same_run(tmp_path, small_data):
    bags, fold = small_data
    cfg = fast_config()
    first = train(bags, fold, cfg, tmp_path / "a", progress=False)
    second = train(bags, fold, cfg, tmp_path / "b", progress=False)
    assert (tmp_path / "a" / "training_log.csv").read_bytes() == (tmp_path / "b" / "training_log.csv").read_bytes()
    assert (first.checkpoint_dir / "weights.f32").read_bytes() == (second.checkpoint_dir / "weights.f32").read_bytes()


def test_log_columns(tmp_path, small_data):
    bags, fold = small_data
    result = train(bags, fold, fast_config(), tmp_path, progress=False)
    expected = {"epoch", "loss", "grade", "inter", "intra", "diversity", "lambda1", "val_macro_f1", "val_accuracy", "best"}
    assert expected <= set(result.log.columns)
    assert len(result.log) == 2


def test_early_stopping_after_patience(tmp_path, small_data, monkeypatch):
    bags, fold = small_data
    monkeypatch.setattr(loop_module, "evaluate_split", lambda model, prepared, c: (0.5, 0.5))
    result = train(bags, fold, fast_config(max_epochs=20, early_stop_patience=3), tmp_path, progress=False)
    assert result.log["epoch"].tolist() == [0, 1, 2, 3]
    assert result.best_epoch == 0


def test_divergence_keeps_last_good_checkpoint(tmp_path, small_data, monkeypatch):
    bags, fold = small_data
    real_total_loss = loop_module.total_loss

    def failing(model, forwards, labels, cfg, epoch, **kwargs):
        if epoch >= 1:
            raise NonFiniteLossError("intra", float("nan"))
        return real_total_loss(model, forwards, labels, cfg, epoch, **kwargs)

    monkeypatch.setattr(loop_module, "total_loss", failing)
    with pytest.raises(TrainingDivergedError) as info:
        train(bags, fold, fast_config(max_epochs=5), tmp_path, progress=False)
    assert info.value.checkpoint_dir == tmp_path / "checkpoint"
    assert (tmp_path / "checkpoint" / "weights.f32").is_file()


def test_load_trained_reproduces_predictions(tmp_path, small_data):
    bags, fold = small_data
    cfg = fast_config(graph_mode="latent", lambda2=0.0)
    result = train(bags, fold, cfg, tmp_path, progress=False)
    model, loaded_cfg, metadata = load_trained(result.checkpoint_dir)
    assert loaded_cfg == cfg and metadata["fold"] == fold.index
    prepared = prepare_bags([bags[i] for i in fold.test], cfg)
    a = [f.likelihood for f in predict(result.model, prepared)]
    b = [f.likelihood for f in predict(model, prepared)]
    assert all(torch.equal(x, y) for x, y in zip(a, b))


def test_no_graph_and_linear_variants_train(tmp_path, small_data):
    bags, fold = small_data
    for i, cfg in enumerate([fast_config(graph_mode="none", lambda2=0.0), fast_config(classifier="linear")]):
        result = train(bags, fold, cfg, tmp_path / str(i), progress=False)
        assert np.isfinite(result.log["loss"]).all()


def test_ema_prototypes_stay_unit_norm(tmp_path, small_data):
    bags, fold = small_data
    result = train(bags, fold, fast_config(prototype_mode="ema"), tmp_path, progress=False)
    norms = result.model.head.prototypes.norm(dim=1)
    assert torch.allclose(norms, torch.ones_like(norms), atol=1e-5)


@pytest.mark.slow
def test_planted_dataset_is_learnable(tmp_path):
    bags = generate_synthetic_dataset(SynthSpec(), seed=0)
    everything = Fold(0, list(range(len(bags))), [], [])
    result = train(bags, everything, TrainConfig(max_epochs=60, learning_rate=1e-3), tmp_path, progress=False)
    f1, _ = evaluate_split(result.model, prepare_bags(bags, TrainConfig()), 4)
    assert f1 >= 0.95


# ============================================================================
# GRADIENT CHECK
# ============================================================================

def test_gradcheck_passes_in_both_modes():
    report = run_gradcheck(instances=2, seed=3)
    assert report.passed, report.to_frame().sort_values("max_rel_err").tail()
    assert {c.mode for c in report.checks} == {"default", "literal"}


def test_gradcheck_covers_every_parameter():
    cfg = gradcheck_config()
    checks = check_instance(cfg, np.random.default_rng(0), 0, "default")
    model = build_model(5, cfg)
    assert [c.name for c in checks] == [name for name, _ in model.named_parameters()]


def test_zero_lambda1_removes_ranking_gradient(small_data):
    bags, _ = small_data
    with_rank = fast_config(lambda1=0.0, lambda2=0.1, dropout=0.0)
    model, forwards, labels = _forwards(with_rank, bags[:2])
    total_loss(model, forwards, labels, with_rank, epoch=50).total.backward()
    full = {n: p.grad.clone() for n, p in model.named_parameters() if p.grad is not None}

    model.zero_grad()
    prepared = prepare_bags(bags[:2], with_rank)
    forwards = [model(p.features, p.graphs) for p in prepared]
    b = total_loss(model, forwards, labels, with_rank, epoch=50)
    (b.grade + with_rank.lambda2 * b.diversity).backward()
    for n, p in model.named_parameters():
        if p.grad is not None:
            assert torch.allclose(full[n], p.grad), n


@pytest.mark.slow
def test_gradcheck_five_instances():
    assert run_gradcheck(instances=5, seed=0).passed
