import numpy as np
import pytest

from gift import autodiff as ad
from gift.annotation import derive_velocities
from gift.errors import ConfigError, RangeError
from gift.features import ROLE_CHANNEL, SLICES
from gift.model import (
    AdamW,
    TrainConfig,
    checkpoint_bytes,
    compute_loss,
    forecast_occurrence,
    forward_full,
    load_checkpoint,
    loss_graph,
    model_init,
    occurrence_from_prediction,
    save_checkpoint,
    train,
)
from gift.stgcn import N_BLOCKS
from gift.synth import SynthConfig, generate_corpus

SMALL = dict(embed_dim=8, batch_size=4, precision="float64")


@pytest.fixture(scope="module")
def corpus():
    clips, split = generate_corpus(SynthConfig(seed=3, n_clips=20, T=30, occurrence_range=(16, 25)))
    return [clips[i] for i in split["train"]], [clips[i] for i in split["val"]], [clips[i] for i in split["test"]]


# ------------------------------------------------------------ config


def test_config_defaults():
    cfg = TrainConfig()
    assert (cfg.learning_rate, cfg.weight_decay, cfg.dropout, cfg.epochs) == (1e-3, 1e-4, 0.1, 100)
    assert cfg.embed_dim == 128 and cfg.tau == 10
    assert (cfg.lambda_recon, cfg.lambda_fore, cfg.lambda_const) == (2.0, 0.01, 10.0)
    assert cfg.feature_weights == (0.1, 0.05, 0.001, 0.1, 10.0, 0.1)


@pytest.mark.parametrize("bad", [
    dict(feature_weights=(1.0,) * 5), dict(lambda_fore=-1.0), dict(tau=0), dict(dropout=1.0),
    dict(residual="none"), dict(precision="float16"), dict(dct_keep=0),
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad)


def test_config_dict_roundtrip():
    cfg = TrainConfig(embed_dim=16, dct_keep=4)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"banana": 1})


# ------------------------------------------------------------ forward


def test_model_structure_and_default_embed():
    m = model_init(TrainConfig(embed_dim=128))
    assert len(m.encoder) == N_BLOCKS and len(m.decoder) == N_BLOCKS
    assert m.params["lift.weight"].shape == (46, 128)
    assert m.params["out.weight"].shape == (128, 46)


def test_forward_shape_chain(corpus):
    m = model_init(TrainConfig(**SMALL))
    pred, latent, hidden = m.forward(np.zeros((10, 10, 46)), 50)
    assert pred.shape == (50, 10, 46)
    assert latent.shape == (10, 10, 8)
    assert hidden.shape == (50, 10, 8)
    c = derive_velocities(corpus[0][0])
    a = forward_full(m, c)
    assert a.shape == (c.T, 10, 46)
    np.testing.assert_array_equal(a, forward_full(m, c))
    with pytest.raises(RangeError):
        forward_full(m, c, tau=c.T)


def test_same_seed_same_checkpoint():
    a = checkpoint_bytes(model_init(TrainConfig(**SMALL), seed=5))
    assert a == checkpoint_bytes(model_init(TrainConfig(**SMALL), seed=5))
    assert a != checkpoint_bytes(model_init(TrainConfig(**SMALL), seed=6))


def test_checkpoint_roundtrip(tmp_path, corpus):
    cfg = TrainConfig(embed_dim=8, precision="float32")
    m = model_init(cfg, seed=1)
    save_checkpoint(m, tmp_path / "m.json")
    back = load_checkpoint(tmp_path / "m.json")
    assert back.config == cfg
    for name, p in m.params.items():
        assert back.params[name].data.dtype == p.data.dtype
        np.testing.assert_array_equal(back.params[name].data, p.data)
    assert checkpoint_bytes(back) == checkpoint_bytes(m)


def test_load_rejects_foreign_file(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "x.json")


# ------------------------------------------------------------ loss


def test_loss_zero_at_target(rng):
    t = rng.normal(size=(12, 10, 46))
    bd = compute_loss(t.copy(), t, 5, TrainConfig())
    assert bd.recon == 0.0 and bd.fore == 0.0 and bd.total == 0.0


def test_role_perturbation_moves_one_term(rng):
    cfg = TrainConfig()
    T, tau, delta = 12, 5, 0.7
    t = rng.normal(size=(T, 10, 46))
    p = t.copy()
    p[8, 2, ROLE_CHANNEL] += delta
    bd = compute_loss(p, t, tau, cfg)
    n_role = (T - tau) * 10 * 1
    assert bd.fore_terms["role"] == pytest.approx(delta ** 2 / n_role, rel=1e-12)
    assert all(v == 0.0 for k, v in bd.fore_terms.items() if k != "role")
    assert all(v == 0.0 for v in bd.recon_terms.values())
    assert bd.fore == pytest.approx(cfg.weights["role"] * delta ** 2 / n_role, rel=1e-12)


@pytest.mark.parametrize("name", list(SLICES))
def test_each_slice_owns_one_term(name, rng):
    t = rng.normal(size=(8, 10, 46))
    p = t.copy()
    p[1, :, SLICES[name]] += 0.5
    bd = compute_loss(p, t, 4, TrainConfig())
    changed = [k for k, v in bd.recon_terms.items() if v != 0.0]
    assert changed == [name]


def test_lambda_recon_linear(rng):
    t = rng.normal(size=(8, 10, 46))
    p = t + rng.normal(size=t.shape)
    a = compute_loss(p, t, 4, TrainConfig(lambda_recon=1.0))
    b = compute_loss(p, t, 4, TrainConfig(lambda_recon=2.0))
    assert b.total - a.total == pytest.approx(a.recon, rel=1e-12)


def test_breakdown_recombines_graph_total(rng):
    cfg = TrainConfig()
    t = rng.normal(size=(8, 10, 46))
    total, bd = loss_graph(t + 0.1, t, 4, cfg, ad.Tensor(np.ones((4, 10, 3))), ad.Tensor(np.zeros((8, 10, 3))))
    assert bd.const == pytest.approx(1.0)
    assert float(total.data) == pytest.approx(bd.recombined(cfg), abs=1e-9)


def test_adamw_decoupled_decay():
    p = ad.Parameter(np.array([2.0]), "p")
    opt = AdamW([p], lr=0.1, weight_decay=0.5)
    p.grad = np.array([0.0])
    opt.step()
    # zero gradient: only the decay step applies
    assert p.data[0] == pytest.approx(2.0 * (1 - 0.1 * 0.5))


# ------------------------------------------------------------ training


def test_five_epochs_reduce_training_loss(corpus):
    tr, va, _ = corpus
    _, hist = train(tr, va, TrainConfig(epochs=5, learning_rate=3e-3, **SMALL))
    totals = [r["train"].total for r in hist.epochs]
    assert totals[-1] < totals[0]


def test_zero_learning_rate_constant_history(corpus):
    tr, va, _ = corpus
    _, hist = train(tr, va, TrainConfig(epochs=3, learning_rate=0.0, weight_decay=0.0, dropout=0.0, **SMALL))
    vals = [r["val"].total for r in hist.epochs]
    assert vals[0] == vals[1] == vals[2]


def test_seeded_rerun_identical(corpus):
    tr, va, _ = corpus
    cfg = TrainConfig(epochs=2, **SMALL)
    m1, h1 = train(tr, va, cfg)
    m2, h2 = train(tr, va, cfg)
    assert h1.to_csv() == h2.to_csv()
    assert checkpoint_bytes(m1) == checkpoint_bytes(m2)


def test_history_outputs(corpus):
    tr, va, _ = corpus
    _, hist = train(tr, va, TrainConfig(epochs=2, **SMALL))
    lines = hist.to_csv().splitlines()
    assert len(lines) == 3 and lines[0].startswith("epoch,train_total")
    assert 1 <= hist.best_epoch <= 2


# ------------------------------------------------------------ occurrence


def _pred(T=50):
    return np.zeros((T, 10, 46))


def test_first_crossing_wins():
    p = _pred()
    p[29:, 2, ROLE_CHANNEL] = 1.0  # player 3 from frame 30
    o = occurrence_from_prediction(p, 10, 0.5)
    assert (o.point_estimate, o.crossed_threshold) == (30, True)


def test_argmax_fallback():
    p = _pred()
    p[36, 1, ROLE_CHANNEL] = 0.4  # frame 37
    o = occurrence_from_prediction(p, 10, 0.5)
    assert (o.point_estimate, o.crossed_threshold) == (37, False)
    assert o.peak_score == pytest.approx(0.4)


def test_defenders_and_seen_frames_ignored():
    p = _pred()
    p[:10, 0, ROLE_CHANNEL] = 1.0  # seen window
    p[20, 7, ROLE_CHANNEL] = 1.0  # defender
    p[40, 4, ROLE_CHANNEL] = 0.6
    o = occurrence_from_prediction(p, 10, 0.5)
    assert (o.point_estimate, o.crossed_threshold) == (41, True)


def test_point_estimate_after_seen_window(corpus, rng):
    m = model_init(TrainConfig(**SMALL))
    for c in corpus[2]:
        assert forecast_occurrence(m, derive_velocities(c)).point_estimate > 10
    for _ in range(20):
        assert occurrence_from_prediction(rng.normal(size=(30, 10, 46)), 10).point_estimate > 10


def test_occurrence_range_checks():
    with pytest.raises(RangeError):
        occurrence_from_prediction(_pred(10), 10)
