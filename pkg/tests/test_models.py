import numpy as np
import pytest

from trussim.nn import models, ops
from trussim.nn.models import (decode, encode, generate_next_image,
                               init_autoencoder, init_transition,
                               transition_forward)


@pytest.fixture(scope="module")
def ae_params():
    return init_autoencoder(np.random.default_rng(0))


@pytest.fixture(scope="module")
def tn_params():
    return init_transition(np.random.default_rng(1))


def test_autoencoder_shapes(ae_params):
    rng = np.random.default_rng(2)
    imgs = rng.random((3, 76, 76), dtype=np.float32)
    z = encode(ae_params, imgs)
    assert z.shape == (3, 512)
    out = decode(ae_params, z)
    assert out.shape == (3, 76, 76)
    single = encode(ae_params, imgs[0])
    assert single.shape == (512,)
    assert decode(ae_params, single).shape == (76, 76)


def test_embedding_and_output_ranges(ae_params):
    rng = np.random.default_rng(3)
    # range contract holds for arbitrary weights: sigmoid at both ends
    for _ in range(10):
        params = init_autoencoder(rng)
        imgs = rng.random((10, 76, 76), dtype=np.float32)
        z = encode(params, imgs)
        assert ((z > 0.0) & (z < 1.0)).all()
        out = decode(params, z)
        assert ((out > 0.0) & (out < 1.0)).all()


def test_encode_rejects_bad_shapes(ae_params):
    with pytest.raises(ValueError):
        encode(ae_params, np.zeros((2, 2, 76, 76, 1), dtype=np.float32))
    with pytest.raises(ValueError):
        decode(ae_params, np.zeros((2, 100), dtype=np.float32))


def test_autoencoder_gradients_match_finite_difference(ae_params):
    # end-to-end gradcheck through conv/pad/pool/linear/sigmoid in float64
    rng = np.random.default_rng(4)
    params = {k: v.astype(np.float64) for k, v in init_autoencoder(rng).items()}
    x = rng.random((2, 1, 76, 76))
    target = rng.random((2, 1, 76, 76))

    cache = {}
    y = models.autoencoder_forward(params, x, cache)
    loss, gy = ops.mse_loss(y, target)
    grads = models.autoencoder_backward(params, cache, gy)

    def loss_at():
        return ops.mse_loss(models.autoencoder_forward(params, x), target)[0]

    h = 1e-5
    checked = 0
    for name in ["conv1_w", "conv3_w", "fc_enc_w", "fc_dec_w", "deconv1_w",
                 "deconv3_w", "conv2_b", "deconv2_b"]:
        flat = params[name].reshape(-1)
        gflat = grads[name].reshape(-1)
        idx = rng.integers(0, flat.size, size=4)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_at()
            flat[i] = orig - h
            down = loss_at()
            flat[i] = orig
            fd = (up - down) / (2 * h)
            assert gflat[i] == pytest.approx(fd, rel=2e-3, abs=1e-9)
            checked += 1
    assert checked == 32


def test_transition_shapes_and_errors(tn_params):
    rng = np.random.default_rng(5)
    hist = rng.random((5, 512), dtype=np.float32)
    out = transition_forward(tn_params, hist)
    assert out.shape == (512,)
    batch = rng.random((7, 5, 512), dtype=np.float32)
    assert transition_forward(tn_params, batch).shape == (7, 512)
    with pytest.raises(ValueError):
        transition_forward(tn_params, rng.random((4, 512), dtype=np.float32))
    with pytest.raises(ValueError):
        transition_forward(tn_params, rng.random((5, 100), dtype=np.float32))


def test_transition_deterministic_and_order_sensitive(tn_params):
    rng = np.random.default_rng(6)
    hist = rng.random((5, 512), dtype=np.float32)
    a = transition_forward(tn_params, hist)
    b = transition_forward(tn_params, hist)
    assert np.array_equal(a, b)
    shuffled = hist[::-1].copy()
    c = transition_forward(tn_params, shuffled)
    assert not np.array_equal(a, c)


def test_transition_gradients(tn_params):
    rng = np.random.default_rng(7)
    params = {k: v.astype(np.float64) for k, v in init_transition(rng).items()}
    hist = rng.random((3, 5, 512))
    target = rng.random((3, 512))

    cache = {}
    out = transition_forward(params, hist, cache)
    loss, gy = ops.mse_loss(out, target)
    grads = models.transition_backward(params, cache, gy)

    h = 1e-5
    for name in ["l1_w", "l2_w", "l1_b", "l2_b"]:
        flat = params[name].reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in rng.integers(0, flat.size, size=4):
            orig = flat[i]
            flat[i] = orig + h
            up = ops.mse_loss(transition_forward(params, hist), target)[0]
            flat[i] = orig - h
            down = ops.mse_loss(transition_forward(params, hist), target)[0]
            flat[i] = orig
            assert gflat[i] == pytest.approx((up - down) / (2 * h), rel=2e-3, abs=1e-9)


def test_generate_next_image(ae_params, tn_params):
    rng = np.random.default_rng(8)
    history = rng.random((5, 76, 76), dtype=np.float32)
    img, embeddings = generate_next_image(ae_params, tn_params, history)
    assert img.shape == (76, 76)
    assert embeddings.shape == (5, 512)
    assert ((img > 0.0) & (img < 1.0)).all()
    with pytest.raises(ValueError):
        generate_next_image(ae_params, tn_params, history[:4])


def test_init_is_deterministic():
    a = init_autoencoder(np.random.default_rng(9))
    b = init_autoencoder(np.random.default_rng(9))
    assert a.keys() == b.keys()
    for k in a:
        assert np.array_equal(a[k], b[k])
