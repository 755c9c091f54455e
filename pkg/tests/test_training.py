from dataclasses import replace

import numpy as np
import pytest

from fallrep.data_model import PhysicsLabel, feature_matrix
from fallrep.encoder import Adam, EncoderParams, backward, forward
from fallrep.labeling import label_dataset
from fallrep.losses import LossConfig, composite_loss, loss_gradient
from fallrep.relations import build_relations
from fallrep.synth import SynthConfig, generate
from fallrep.training import Checkpoint, MemoryBank, TrainConfig, embed, train, write_history
from conftest import labeled_batch, window
from test_losses import max_relative_error, numeric_gradient


@pytest.fixture(scope="module")
def small_ds():
    raw, _ = generate(SynthConfig(num_trajectories=30, seed=4))
    return label_dataset(raw)


def quick(**kw):
    base = dict(epochs=4, warmup_epochs=2, batch_size=32, bank_capacity=48, quota_head=2,
                quota_trunk=4, learning_rate=1e-3, hidden_dim=16, embed_dim=8)
    base.update(kw)
    return TrainConfig(**base)


def test_same_seed_bit_identical(small_ds, tmp_path):
    a = train(small_ds, quick())
    b = train(small_ds, quick())
    write_history(tmp_path / "a.csv", a.history)
    write_history(tmp_path / "b.csv", b.history)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    for k, v in a.final.params.arrays().items():
        np.testing.assert_array_equal(v, b.final.params.arrays()[k])
    c = train(small_ds, quick(seed=1))
    assert c.history != a.history


def test_warmup_schedule():
    cfg = TrainConfig(warmup_epochs=10, epochs=20)
    assert cfg.lambda_phys_at(0) == 0.0
    assert cfg.lambda_phys_at(5) == pytest.approx(0.5)
    assert all(cfg.lambda_phys_at(e) == 1.0 for e in (10, 11, 19))
    assert TrainConfig(variant="vanilla").lambda_phys_at(50) == 0.0


def test_recorded_effective_lambda(small_ds):
    hist = train(small_ds, quick(epochs=4, warmup_epochs=2)).history
    assert [h["effective_lambda_phys"] for h in hist] == [0.0, 0.5, 1.0, 1.0]
    assert hist[0]["train_physics"] >= 0.0


def test_vanilla_effective_loss():
    eff = TrainConfig(variant="vanilla").effective_loss()
    assert eff.lambda_phys == 0.0 and eff.lambda_var == 0.0
    with pytest.raises(ValueError):
        TrainConfig(variant="other")
    with pytest.raises(ValueError):
        TrainConfig(epochs=5, warmup_epochs=6)


@pytest.mark.parametrize("n_batches,size,cap", [(1, 4, 10), (3, 4, 10), (5, 7, 10), (4, 5, 0)])
def test_bank_fifo(n_batches, size, cap):
    bank = MemoryBank(cap, 3)
    rng = np.random.default_rng(0)
    pushed = []
    for b in range(n_batches):
        ws = [window(f"b{b}_{i}", "T", label=PhysicsLabel.Trunk) for i in range(size)]
        bank.push(ws, rng.normal(size=(size, 3)))
        pushed += [w.window_id for w in ws]
    assert len(bank) == min(n_batches * size, cap) == bank.embeddings.shape[0]
    assert bank.window_ids == (pushed[-cap:] if cap else [])


def test_embed_contract(small_ds):
    params = EncoderParams.init(feature_matrix(small_ds.windows), 16, 8, np.random.default_rng(0))
    ws = list(small_ds.windows[:20])
    e = embed(params, ws)
    np.testing.assert_allclose(np.linalg.norm(e.z, axis=1), 1.0, atol=1e-6)
    perm = np.random.default_rng(1).permutation(20)
    ep = embed(params, [ws[i] for i in perm])
    np.testing.assert_array_equal(ep.z, e.z[perm])
    dup = embed(params, [ws[3], ws[3]])
    np.testing.assert_array_equal(dup.z[0], dup.z[1])
    # labels play no part in inference
    stripped = [replace(w, phys_label=None) for w in ws]
    np.testing.assert_array_equal(embed(params, stripped).z, e.z)


def test_checkpoint_round_trip(small_ds, tmp_path):
    res = train(small_ds, quick(epochs=2, warmup_epochs=1))
    path = res.final.save(tmp_path / "final.ckpt")
    back = Checkpoint.load(path)
    assert back.epoch == 1 and back.config == res.final.config
    for k, v in res.final.params.arrays().items():
        np.testing.assert_array_equal(v, back.params.arrays()[k])
    assert back.bank.window_ids == res.final.bank.window_ids
    np.testing.assert_array_equal(back.bank.embeddings, res.final.bank.embeddings)
    res.final.save(tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_resume_is_bit_identical(small_ds, tmp_path):
    full = train(small_ds, quick(epochs=4, warmup_epochs=2))
    half = train(small_ds, quick(epochs=2, warmup_epochs=2))
    ck = Checkpoint.load(half.final.save(tmp_path / "half.ckpt"))
    best = Checkpoint.load(half.best.save(tmp_path / "best.ckpt"))
    resumed = train(small_ds, quick(epochs=4, warmup_epochs=2), resume=ck, history=half.history, best=best)
    assert resumed.history == full.history
    for k, v in full.final.params.arrays().items():
        np.testing.assert_array_equal(v, resumed.final.params.arrays()[k])
    assert resumed.best.epoch == full.best.epoch


def test_best_checkpoint_has_minimum_val(small_ds):
    res = train(small_ds, quick(epochs=5))
    vals = [h["val_total"] for h in res.history]
    assert res.best.epoch == int(np.argmin(vals))
    assert res.best.val_loss == min(vals)
    assert res.final.epoch == 4


def test_adam_first_step_moves_by_lr():
    p = EncoderParams(W1=np.zeros((2, 2)), b1=np.zeros(2), W2=np.zeros((2, 2)), b2=np.zeros(2),
                      in_mean=np.zeros(2), in_scale=np.ones(2))
    g = {"W1": np.array([[1.0, -2.0], [0.5, 0.0]]), "b1": np.ones(2), "W2": np.zeros((2, 2)), "b2": np.zeros(2)}
    Adam(lr=0.1).step(p, g)
    np.testing.assert_allclose(p.W1, -0.1 * np.sign(g["W1"]), atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_parameter_gradient_through_encoder(seed):
    rng = np.random.default_rng(seed)
    batch = labeled_batch(rng, 7, 3)
    while not build_relations(batch).traj_pos.any():
        batch = labeled_batch(rng, 7, 3)
    x = rng.normal(size=(7, 5))
    params = EncoderParams.init(x, 6, 4, rng)
    params.b1 += rng.normal(scale=0.1, size=6)
    g = build_relations(batch)
    cfg = LossConfig(lambda_phys=0.8, lambda_var=0.5)

    def total():
        c = forward(params, x)
        return composite_loss(g, c.z, c.u, cfg).total

    cache = forward(params, x)
    _, gz, gu = loss_gradient(g, cache.z, cache.u, cfg)
    grads = backward(params, cache, gz, gu)
    for name, analytic in grads.items():
        numeric = numeric_gradient(total, getattr(params, name))
        assert max_relative_error(analytic, numeric) < 1e-4, name
