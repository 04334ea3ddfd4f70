import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discoadapt.autodiff import Tape, Tensor, no_tape, ops
from discoadapt.heads import (
    Classifier,
    Discriminator,
    Reconstructor,
    SpectralState,
    power_iterate,
    predict_labels,
    smoothed_target_distribution,
    smoothed_targets,
    spectral_normalize,
)


def test_smoothed_distribution_oracle():
    q = smoothed_target_distribution(0, 0.1, 4)
    np.testing.assert_allclose(q, [0.925, 0.025, 0.025, 0.025], atol=1e-15)
    assert abs(q.sum() - 1.0) < 1e-12


def test_zero_smoothing_is_one_hot():
    np.testing.assert_array_equal(smoothed_targets(np.array([2, 0]), 0.0, 3), [[0, 0, 1], [1, 0, 0]])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 12), st.data(), st.floats(0.0, 0.7499))
def test_smoothing_sums_to_one_and_keeps_argmax(K, data, eps):
    y = data.draw(st.integers(0, K - 1))
    q = smoothed_target_distribution(y, eps, K)
    assert abs(q.sum() - 1.0) < 1e-12
    assert np.argmax(q) == y
    np.testing.assert_array_equal(smoothed_targets(np.array([y]), eps, K)[0], q)


@pytest.mark.parametrize("eps", [-0.1, 1.0, 1.5])
def test_smoothing_coefficient_range(eps):
    with pytest.raises(ValueError):
        smoothed_target_distribution(0, eps, 4)


def test_out_of_range_label_rejected():
    with pytest.raises(ValueError, match="out of range"):
        smoothed_targets(np.array([0, 4]), 0.1, 4)


def test_classifier_probabilities(rng):
    clf = Classifier(8, 4, rng)
    with no_tape():
        p = clf(Tensor(rng.normal(size=(5, 8)))).data
    assert p.shape == (5, 4)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert set(clf.params()) == {"fc.W", "fc.b"}


def test_argmax_ties_go_to_lowest_index():
    assert list(predict_labels(np.array([[0.25, 0.25, 0.25, 0.25], [0.1, 0.4, 0.4, 0.1]]))) == [0, 1]


def fixed_matrix(rng, spectrum=(4.0, 2.5, 2.0, 1.0, 0.5)):
    U, _ = np.linalg.qr(rng.normal(size=(20, len(spectrum))))
    V, _ = np.linalg.qr(rng.normal(size=(12, len(spectrum))))
    return U @ np.diag(spectrum) @ V.T


def test_power_iteration_converges_to_svd(rng):
    W = fixed_matrix(rng)
    sigma = power_iterate(W, SpectralState.init(W.shape, rng), 50)
    assert abs(sigma - np.linalg.svd(W, compute_uv=False)[0]) < 1e-6


def test_power_iteration_on_gaussian_matrix(rng):
    # small spectral gap, so allow more iterations
    W = rng.normal(size=(20, 12))
    sigma = power_iterate(W, SpectralState.init(W.shape, rng), 1000)
    assert abs(sigma - np.linalg.svd(W, compute_uv=False)[0]) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_power_iteration_sigma_never_exceeds_true_norm(m, n, seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(m, n))
    st_ = SpectralState.init(W.shape, rng)
    top = np.linalg.svd(W, compute_uv=False)[0]
    prev = 0.0
    for _ in range(5):
        s = power_iterate(W, st_, 1)
        assert s <= top + 1e-9
        assert s >= prev - 1e-9
        prev = s


def test_normalized_weight_has_unit_spectral_norm_after_convergence(rng):
    W = Tensor(rng.normal(size=(6, 4)) * 3.0)
    st_ = SpectralState.init(W.shape, rng)
    normed, sigma = spectral_normalize(W, st_, 60)
    assert abs(np.linalg.svd(normed.data, compute_uv=False)[0] - 1.0) < 1e-6


def test_normalize_without_update_keeps_state(rng):
    W = Tensor(rng.normal(size=(5, 3)))
    st_ = SpectralState.init(W.shape, rng)
    u, v = st_.u.copy(), st_.v.copy()
    spectral_normalize(W, st_, 1, update=False)
    np.testing.assert_array_equal(st_.u, u)
    np.testing.assert_array_equal(st_.v, v)


def test_zero_weight_uses_floor(rng):
    W = Tensor(np.zeros((3, 3)))
    normed, sigma = spectral_normalize(W, SpectralState.init((3, 3), rng), 1)
    assert np.all(np.isfinite(normed.data)) and sigma > 0


def test_discriminator_shapes_and_sn_state(rng):
    d = Discriminator(10, (7, 5), True, rng)
    assert [layer.W.shape for layer in d.layers] == [(10, 7), (7, 5), (5, 2)]
    x = Tensor(rng.normal(size=(4, 10)))
    with no_tape():
        p = d(x).data
        lp = d.log_probs(x).data
    assert p.shape == (4,) and np.all((p > 0) & (p < 1))
    np.testing.assert_allclose(np.exp(lp[:, 0]), p, atol=1e-12)
    before = d.sn_arrays()
    with no_tape():
        d.logits(x, update=True)
    after = d.sn_arrays()
    assert any(not np.array_equal(before[k], after[k]) for k in before)
    d.load_sn_arrays(before)
    for k, v in d.sn_arrays().items():
        np.testing.assert_array_equal(v, before[k])


def test_discriminator_gradient_flows_through_sigma(rng):
    d = Discriminator(4, (3,), True, rng)
    x = Tensor(rng.normal(size=(2, 4)))
    params = d.params()
    with Tape() as tape:
        loss = ops.sum(d.log_probs(x, update=True)[:, 0])
    grads = tape.gradient(loss, list(params.values()))
    assert all(np.any(g != 0) for g in grads)


def test_reconstructor_maps_back_to_input_width(rng):
    r = Reconstructor(200, rng=rng)
    assert [layer.W.shape for layer in r.layers] == [(200, 120), (120, 15), (15, 120), (120, 200)]
    with no_tape():
        assert r(Tensor(rng.normal(size=(3, 200)))).shape == (3, 200)
