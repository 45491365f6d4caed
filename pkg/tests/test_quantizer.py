import numpy as np
import pytest

from semqam import autodiff as ad
from semqam.autodiff import Tensor, backward, gradcheck, zero_grad
from semqam.quantizer import (
    Codebook,
    assign_nearest,
    hard_usage_histogram,
    init_codebook,
    load_codebook_csv,
    perplexity,
    quantize_gumbel,
    quantize_ste,
    save_codebook_csv,
    usage_distribution,
    vq_losses,
)


def test_init_codebook_deterministic():
    a = init_codebook(16, 8, "uniform", seed=5)
    b = init_codebook(16, 8, "uniform", seed=5)
    assert np.array_equal(a.embeddings.value, b.embeddings.value)
    assert a.embeddings.value.shape == (16, 8)


def test_init_codebook_uniform_bounded():
    cb = init_codebook(16, 8, "uniform", seed=0)
    assert np.abs(cb.embeddings.value).max() <= 1.0 / 16


def test_init_codebook_shape_and_scheme_errors():
    assert init_codebook(16, 8, "gaussian", seed=1).embeddings.value.shape == (16, 8)
    with pytest.raises(ValueError, match="scheme"):
        init_codebook(4, 2, "xavier", seed=0)
    with pytest.raises(ValueError):
        init_codebook(0, 2, "uniform", seed=0)


def test_assign_nearest_matches_bruteforce():
    cb = init_codebook(12, 6, "gaussian", seed=2)
    z = np.random.default_rng(3).standard_normal((40, 6))
    got = assign_nearest(cb, z)
    want = np.array([
        int(np.argmin([np.sum((t - e) ** 2) for e in cb.embeddings.value])) for t in z
    ])
    assert np.array_equal(got, want)


def test_assign_nearest_exact_z():
    cb = init_codebook(8, 4, "gaussian", seed=4)
    idx = assign_nearest(cb, cb.embeddings.value[[3, 0, 7]])
    assert np.array_equal(idx, [3, 0, 7])


def test_assign_nearest_tie_breaks_low():
    emb = np.random.default_rng(0).standard_normal((6, 3))
    emb[5] = emb[2]  # exact duplicate: ties resolve to index 2
    cb = Codebook(6, 3, Tensor(emb, requires_grad=True))
    z = emb[[2]] + 0.01
    assert assign_nearest(cb, z)[0] == 2


def test_assign_nearest_dimension_mismatch():
    cb = init_codebook(4, 3, "uniform", seed=0)
    with pytest.raises(ValueError, match="dimension"):
        assign_nearest(cb, np.zeros((2, 5)))


def test_ste_forward_is_hard_lookup():
    cb = init_codebook(16, 8, "gaussian", seed=1)
    z = Tensor(np.random.default_rng(5).standard_normal((10, 8)), requires_grad=True)
    out = quantize_ste(cb, z)
    assert out.estimator == "ste"
    assert np.array_equal(out.quantized.value, cb.embeddings.value[out.indices])


def test_ste_identity_gradient():
    cb = init_codebook(16, 8, "gaussian", seed=1)
    z = Tensor(np.random.default_rng(5).standard_normal((10, 8)), requires_grad=True)
    out = quantize_ste(cb, z)
    backward(ad.mean(ad.mul(out.quantized, out.quantized)))
    expect = 2.0 * out.quantized.value / out.quantized.value.size
    assert np.allclose(z.grad, expect)


def test_ste_soft_assign_argmax_matches_hard():
    cb = init_codebook(16, 8, "gaussian", seed=1)
    z = Tensor(np.random.default_rng(6).standard_normal((64, 8)), requires_grad=True)
    for tau_soft in (1.0, 0.5):
        out = quantize_ste(cb, z, tau_soft=tau_soft)
        assert np.array_equal(out.soft_assign.value.argmax(axis=1), out.indices)
        assert np.allclose(out.soft_assign.value.sum(axis=1), 1.0)


def test_gumbel_requires_positive_tau():
    cb = init_codebook(4, 2, "uniform", seed=0)
    z = Tensor(np.zeros((1, 2)))
    with pytest.raises(ValueError, match="tau"):
        quantize_gumbel(cb, z, tau=0.0, seed=0)


def test_gumbel_low_tau_one_hot_at_noisy_argmax():
    cb = init_codebook(8, 4, "gaussian", seed=3)
    z = Tensor(np.random.default_rng(7).standard_normal((20, 4)))
    out = quantize_gumbel(cb, z, tau=1e-6, seed=21)
    assert np.all(out.soft_assign.value.max(axis=1) > 1.0 - 1e-9)
    assert np.array_equal(out.soft_assign.value.argmax(axis=1), out.indices)


def test_gumbel_high_tau_uniform():
    cb = init_codebook(8, 4, "gaussian", seed=3)
    z = Tensor(np.random.default_rng(7).standard_normal((20, 4)))
    out = quantize_gumbel(cb, z, tau=1e7, seed=21)
    assert np.allclose(out.soft_assign.value, 1.0 / 8, atol=1e-5)


def test_gumbel_deterministic_given_seed():
    cb = init_codebook(8, 4, "gaussian", seed=3)
    z = Tensor(np.random.default_rng(7).standard_normal((20, 4)))
    a = quantize_gumbel(cb, z, tau=1.0, seed=13)
    b = quantize_gumbel(cb, z, tau=1.0, seed=13)
    assert np.array_equal(a.indices, b.indices)
    assert np.array_equal(a.soft_assign.value, b.soft_assign.value)


def test_gumbel_gradient_matches_finite_differences():
    cb = init_codebook(3, 4, "gaussian", seed=2)
    z = Tensor(np.random.default_rng(8).standard_normal((5, 4)), requires_grad=True)

    def build():
        out = quantize_gumbel(cb, z, tau=1.0, seed=11)
        return ad.mean(ad.mul(out.quantized, out.quantized))

    assert gradcheck(build, [z], h=1e-6) < 1e-4


def test_gumbel_hard_eval_uses_lookup():
    cb = init_codebook(8, 4, "gaussian", seed=3)
    z = Tensor(np.random.default_rng(9).standard_normal((6, 4)))
    out = quantize_gumbel(cb, z, tau=0.7, seed=5, hard_eval=True)
    assert np.array_equal(out.quantized.value, cb.embeddings.value[out.indices])
    assert np.all(out.indices < 8)


def test_vq_losses_zero_on_codewords():
    cb = init_codebook(8, 4, "gaussian", seed=1)
    z = Tensor(cb.embeddings.value[[0, 3, 5]].copy(), requires_grad=True)
    cb_loss, commit = vq_losses(z, cb, np.array([0, 3, 5]))
    assert float(cb_loss.value) == pytest.approx(0.0, abs=1e-16)
    assert float(commit.value) == pytest.approx(0.0, abs=1e-16)


def test_vq_losses_single_token_distance():
    emb = np.zeros((4, 2))
    cb = Codebook(4, 2, Tensor(emb, requires_grad=True))
    z = Tensor(np.array([[3.0, 4.0]]), requires_grad=True)  # distance 5 from codeword 0
    cb_loss, commit = vq_losses(z, cb, np.array([0]))
    assert float(cb_loss.value) == pytest.approx(25.0)
    assert float(commit.value) == pytest.approx(25.0)


def test_vq_losses_gradient_routing():
    cb = init_codebook(6, 3, "gaussian", seed=2)
    z = Tensor(np.random.default_rng(1).standard_normal((5, 3)), requires_grad=True)
    idx = assign_nearest(cb, z.value)
    cb_loss, commit = vq_losses(z, cb, idx)
    zero_grad([z, cb.embeddings])
    backward(cb_loss)
    assert z.grad is None
    assert np.abs(cb.embeddings.grad).sum() > 0
    zero_grad([z, cb.embeddings])
    backward(commit)
    assert cb.embeddings.grad is None
    assert np.abs(z.grad).sum() > 0


def test_usage_distribution_one_hot_rows():
    rows = Tensor(np.eye(4)[[2, 2, 2]])
    u = usage_distribution(rows)
    assert np.allclose(u.value, [0, 0, 1, 0])
    rows = Tensor(np.eye(4)[[0, 1]])
    assert np.allclose(usage_distribution(rows).value, [0.5, 0.5, 0, 0])


def test_usage_distribution_matches_hard_histogram_at_low_tau():
    cb = init_codebook(8, 4, "gaussian", seed=3)
    z = Tensor(np.random.default_rng(11).standard_normal((200, 4)))
    out = quantize_ste(cb, z, tau_soft=1e-4)
    u = usage_distribution(out.soft_assign).value
    hist = hard_usage_histogram(out.indices, 8)
    assert np.allclose(u, hist, atol=1e-8)


def test_usage_distribution_simplex_property():
    rng = np.random.default_rng(12)
    for _ in range(20):
        rows = rng.random((np.random.default_rng(1).integers(1, 50), 6))
        rows /= rows.sum(axis=1, keepdims=True)
        u = usage_distribution(Tensor(rows)).value
        assert np.all(u >= 0)
        assert abs(u.sum() - 1.0) < 1e-12


def test_usage_distribution_empty_batch():
    with pytest.raises(ValueError, match="nonempty"):
        usage_distribution(Tensor(np.zeros((0, 4))))


def test_usage_gradient_reaches_tokens():
    cb = init_codebook(8, 4, "gaussian", seed=3)
    z = Tensor(np.random.default_rng(13).standard_normal((10, 4)), requires_grad=True)
    out = quantize_ste(cb, z)
    u = usage_distribution(out.soft_assign)
    f = np.random.default_rng(14).standard_normal(8)
    backward(ad.sum_(ad.mul(u, ad.constant(f))))
    assert np.abs(z.grad).sum() > 0


def test_perplexity_values():
    assert perplexity(np.full(16, 1 / 16)) == pytest.approx(16.0)
    assert perplexity(np.eye(16)[0]) == pytest.approx(1.0)
    assert perplexity(np.array([0.5, 0.25, 0.25, 0.0])) == pytest.approx(2 ** 1.5)


def test_hard_usage_histogram():
    hist = hard_usage_histogram(np.array([0, 1, 1, 3]), 5)
    assert np.allclose(hist, [0.25, 0.5, 0, 0.25, 0])
    with pytest.raises(ValueError, match="empty"):
        hard_usage_histogram(np.array([], dtype=int), 4)


def test_codebook_csv_round_trip(tmp_path):
    cb = init_codebook(8, 4, "gaussian", seed=17)
    path = tmp_path / "cb.csv"
    save_codebook_csv(cb, path)
    back = load_codebook_csv(path)
    assert back.k == 8 and back.d == 4
    assert np.array_equal(back.embeddings.value, cb.embeddings.value)
    with pytest.raises(ValueError, match="codebook"):
        other = tmp_path / "junk.csv"
        other.write_text("index,prob\n0,1.0\n")
        load_codebook_csv(other)
