import numpy as np
import pytest

from wasecom import models as M
from wasecom.optim import Sgd
from wasecom.tensor import Tensor


def image_bundle(seed=0, **kw):
    dims = M.ModelDims(input_dim=64, semantic_dim=16, signal_dim=16, hidden_dim=32)
    return M.ModelBundle(M.TaskKind.IMAGE, dims, seed=seed, **kw)


def text_bundle(seed=0):
    dims = M.ModelDims(input_dim=96, semantic_dim=48, signal_dim=24, hidden_dim=32,
                       vocab_size=32, seq_len=12, embed_dim=8)
    return M.ModelBundle(M.TaskKind.TEXT, dims, seed=seed)


def test_image_pipeline_shapes():
    b = image_bundle()
    x = Tensor(np.random.default_rng(0).uniform(size=(5, 64)))
    s = M.semantic_encode(b, x)
    u = M.channel_encode(b, s)
    s_hat = M.channel_decode(b, u)
    x_hat = M.semantic_decode(b, s_hat)
    assert s.shape == (5, 16) and u.shape == (5, 16)
    assert s_hat.shape == (5, 16) and x_hat.shape == (5, 64)


def test_text_pipeline_shapes_and_decode():
    b = text_bundle()
    ids = np.random.default_rng(1).integers(0, 32, size=(4, 12))
    s = M.semantic_encode(b, ids)
    u = M.channel_encode(b, s)
    logits = M.semantic_decode(b, M.channel_decode(b, u))
    assert s.shape == (4, 48) and u.shape == (4, 24) and logits.shape == (48, 32)
    decoded = M.greedy_decode(logits.data, 4, 12)
    assert decoded.shape == (4, 12) and decoded.dtype.kind == "i"


def test_zero_initialized_encoder_maps_to_zero():
    b = image_bundle(init="zeros")
    s = M.semantic_encode(b, Tensor(np.ones((3, 64))))
    assert np.array_equal(s.data, np.zeros((3, 16)))


def test_power_normalization_unit_power_per_sample():
    b = image_bundle(seed=3)
    x = Tensor(np.random.default_rng(2).uniform(size=(50, 64)))
    u = M.channel_encode(b, M.semantic_encode(b, x))
    per_sample = np.mean(u.data**2, axis=1)
    assert np.all(np.abs(per_sample - 1.0) <= 1e-9)


def test_normalization_can_be_disabled():
    b = image_bundle(seed=3, normalize_signal=False)
    x = Tensor(np.random.default_rng(2).uniform(size=(10, 64)))
    u = M.channel_encode(b, M.semantic_encode(b, x))
    assert np.abs(np.mean(u.data**2, axis=1) - 1.0).max() > 1e-6


def test_identity_bundle_reconstructs_exactly():
    b = M.make_identity_bundle(6)
    x = np.random.default_rng(3).normal(size=(4, 6))
    out = M.semantic_decode(b, M.channel_decode(b, M.channel_encode(b, M.semantic_encode(b, Tensor(x)))))
    assert np.array_equal(out.data, x)


def test_cross_entropy_uniform_logits_is_log_vocab():
    b = text_bundle()
    ids = np.zeros((2, 12), dtype=int)
    logits = Tensor(np.zeros((24, 32)))
    loss = M.reconstruction_loss(b, ids, logits)
    assert abs(float(loss.data) - np.log(32)) < 1e-12


def test_per_sample_loss_mean_matches_scalar_loss():
    b = image_bundle()
    rng = np.random.default_rng(4)
    x, y = Tensor(rng.normal(size=(7, 64))), Tensor(rng.normal(size=(7, 64)))
    per = M.per_sample_reconstruction_loss(b, x, y)
    total = M.reconstruction_loss(b, x, y)
    assert per.shape == (7,)
    assert float(total.data) == float(per.data.mean())


def test_parameter_groups_are_disjoint_and_isolated():
    b = image_bundle(seed=5)
    sem_ids = {id(p) for p in b.semantic_params()}
    chan_ids = {id(p) for p in b.channel_params()}
    assert not (sem_ids & chan_ids)
    assert len(sem_ids) + len(chan_ids) == len(b.named_params())

    # stepping the channel group must not move semantic parameters
    before = [p.data.copy() for p in b.semantic_params()]
    x = Tensor(np.random.default_rng(6).uniform(size=(4, 64)))
    out = M.semantic_decode(b, M.channel_decode(b, M.channel_encode(b, M.semantic_encode(b, x))))
    M.reconstruction_loss(b, x, out).backward()
    Sgd(b.channel_params(), lr=0.1).step()
    for prev, p in zip(before, b.semantic_params()):
        assert np.array_equal(prev, p.data)


def test_frozen_view_shares_values_but_takes_no_grads():
    b = image_bundle(seed=7)
    fz = b.frozen()
    x = Tensor(np.random.default_rng(8).uniform(size=(3, 64)), requires_grad=True)
    out = M.semantic_decode(fz, M.channel_decode(fz, M.channel_encode(fz, M.semantic_encode(fz, x))))
    M.reconstruction_loss(fz, x.detach(), out).backward()
    assert np.any(x.grad != 0)
    for _, p in b.named_params():
        assert np.array_equal(p.grad, np.zeros_like(p.data))
    # shared storage: mutating the original is visible through the view
    b.sem_enc.weights[0].data[0, 0] += 1.0
    assert fz.sem_enc.weights[0].data[0, 0] == b.sem_enc.weights[0].data[0, 0]


def test_estimate_lipschitz_linear_map():
    rng = np.random.default_rng(9)
    w = rng.normal(size=4)
    samples = rng.normal(size=(40, 4))
    est = M.estimate_lipschitz(lambda x: float(w @ x), samples, n_pairs=400, rng=rng)
    true_l = float(np.linalg.norm(w))
    assert est <= true_l + 1e-9
    assert est >= 0.5 * true_l  # pairs give a decent lower estimate


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    for b in (image_bundle(seed=11), text_bundle(seed=12)):
        path = tmp_path / "ckpt.bin"
        M.save_checkpoint(b, path)
        loaded = M.load_checkpoint(path)
        assert loaded.task == b.task and loaded.dims == b.dims
        assert loaded.param_bytes() == b.param_bytes()


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(ValueError, match="magic"):
        M.load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    b = image_bundle(seed=13)
    path = tmp_path / "ckpt.bin"
    M.save_checkpoint(b, path)
    blob = path.read_bytes()
    cut = tmp_path / "cut.bin"
    cut.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(ValueError, match="truncated"):
        M.load_checkpoint(cut)


def test_dims_validation():
    with pytest.raises(ValueError, match="vocab_size"):
        M.ModelDims(input_dim=10, semantic_dim=4, signal_dim=4, hidden_dim=8,
                    vocab_size=128, seq_len=10, embed_dim=1)
    with pytest.raises(ValueError, match="divisible"):
        M.ModelDims(input_dim=96, semantic_dim=47, signal_dim=24, hidden_dim=8,
                    vocab_size=32, seq_len=12, embed_dim=8)
