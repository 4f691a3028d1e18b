"""The two models: a convolutional autoencoder mapping 76x76 design images to
512-dim embeddings and back, and the transition network predicting the next
embedding from the 5 most recent ones.

Encoder: three stride-2 convolutions with kernels 12, 9, 5 and channels 32,
64, 128, a 2x2 max-pool, then a linear layer to 512 with sigmoid (so every
embedding lives in (0, 1)).  Decoder: linear back to 128x5x5, a fixed
top-left unpool (the generative decoder has no access to encoder argmax
indices), then three stride-2 transposed convolutions with kernels 7, 9, 12
down to one channel, sigmoid output.  All other activations are ReLU.

Transition network: concat of 5 embeddings (2560) -> 1024 -> 512 with
Leaky-ReLU on both layers.  Before decoding a predicted embedding, values are
clamped to [0, 1] to stay on the decoder's input manifold.

Parameters are flat dicts of float32 arrays; insertion order is the canonical
layer order used by checkpoints.
"""

from __future__ import annotations

import numpy as np

from . import ops

IMG_SIZE = 76
EMBEDDING_DIM = 512
HISTORY_LEN = 5
LEAKY_SLOPE = 0.01

# (name, out_ch, in_ch, kernel, stride, pad) for the encoder convolutions.
_ENC_CONVS = (
    ("conv1", 32, 1, 12, 2, 5),    # 76 -> 38
    ("conv2", 64, 32, 9, 2, 4),    # 38 -> 19 (then one-sided pad to 20)
    ("conv3", 128, 64, 5, 2, 2),   # 20 -> 10
)
# (name, in_ch, out_ch, kernel, stride, pad, out_size) for the decoder.
_DEC_DECONVS = (
    ("deconv1", 128, 64, 7, 2, 3, 20),   # 10 -> 20
    ("deconv2", 64, 32, 9, 2, 5, 38),    # 20 -> 38
    ("deconv3", 32, 1, 12, 2, 5, 76),    # 38 -> 76
)
_FLAT = 128 * 5 * 5

# Truss rasters are ~96% background; starting the output sigmoid near that
# base rate keeps early gradients alive (a zero bias collapses training into
# the all-black local minimum within one epoch).
OUTPUT_BIAS_INIT = -3.0


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape).astype(np.float32)


def init_autoencoder(rng: np.random.Generator) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    for name, o, c, k, _, _ in _ENC_CONVS:
        p[f"{name}_w"] = _glorot(rng, (o, c, k, k), c * k * k, o * k * k)
        p[f"{name}_b"] = np.zeros(o, dtype=np.float32)
    p["fc_enc_w"] = _glorot(rng, (_FLAT, EMBEDDING_DIM), _FLAT, EMBEDDING_DIM)
    p["fc_enc_b"] = np.zeros(EMBEDDING_DIM, dtype=np.float32)
    p["fc_dec_w"] = _glorot(rng, (EMBEDDING_DIM, _FLAT), EMBEDDING_DIM, _FLAT)
    p["fc_dec_b"] = np.zeros(_FLAT, dtype=np.float32)
    for name, a, b, k, _, _, _ in _DEC_DECONVS:
        p[f"{name}_w"] = _glorot(rng, (a, b, k, k), a * k * k, b * k * k)
        p[f"{name}_b"] = np.zeros(b, dtype=np.float32)
    p["deconv3_b"][:] = OUTPUT_BIAS_INIT
    return p


def _as_batch(images: np.ndarray) -> tuple[np.ndarray, bool]:
    if images.ndim == 2:
        return images[None, None], True
    if images.ndim == 3:
        return images[:, None], False
    if images.ndim == 4:
        return images, False
    raise ValueError(f"expected (H, W), (N, H, W) or (N, 1, H, W), got {images.shape}")


def encoder_forward(params: dict, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
    a = x
    acts = [x]
    pres = []
    op_caches = [{} for _ in _ENC_CONVS] if cache is not None else [None] * len(_ENC_CONVS)
    for (name, _, _, _, stride, pad), op_cache in zip(_ENC_CONVS, op_caches):
        if name == "conv3":
            a = np.pad(a, ((0, 0), (0, 0), (0, 1), (0, 1)))  # 19 -> 20
            acts[-1] = a
        pre = ops.conv2d_forward(a, params[f"{name}_w"], params[f"{name}_b"], stride, pad,
                                 cache=op_cache)
        a = ops.relu(pre)
        pres.append(pre)
        acts.append(a)
    pooled, idx = ops.maxpool_forward(a)
    flat = pooled.reshape(pooled.shape[0], -1)
    z = ops.sigmoid(ops.linear_forward(flat, params["fc_enc_w"], params["fc_enc_b"]))
    if cache is not None:
        cache.update(enc_acts=acts, enc_pres=pres, enc_op_caches=op_caches, pool_idx=idx,
                     pool_in_shape=a.shape, enc_flat=flat, z=z)
    return z


def decoder_forward(params: dict, z: np.ndarray, cache: dict | None = None) -> np.ndarray:
    pre_fc = ops.linear_forward(z, params["fc_dec_w"], params["fc_dec_b"])
    a = ops.relu(pre_fc).reshape(z.shape[0], 128, 5, 5)
    a = ops.unpool(a)  # fixed top-left unpool: 5 -> 10
    acts = [a]
    pres = []
    op_caches = [{} for _ in _DEC_DECONVS] if cache is not None else [None] * len(_DEC_DECONVS)
    for i, (name, _, _, _, stride, pad, out) in enumerate(_DEC_DECONVS):
        pre = ops.deconv2d_forward(a, params[f"{name}_w"], params[f"{name}_b"],
                                   stride, pad, out_hw=(out, out), cache=op_caches[i])
        a = ops.sigmoid(pre) if i == len(_DEC_DECONVS) - 1 else ops.relu(pre)
        pres.append(pre)
        acts.append(a)
    if cache is not None:
        cache.update(dec_z=z, dec_pre_fc=pre_fc, dec_acts=acts, dec_pres=pres,
                     dec_op_caches=op_caches)
    return a


def autoencoder_forward(params: dict, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
    return decoder_forward(params, encoder_forward(params, x, cache), cache)


def decoder_backward(params: dict, cache: dict, gy: np.ndarray,
                     need_weight_grads: bool = True) -> tuple[np.ndarray, dict]:
    """Grad wrt the decoder input embedding, plus decoder weight grads (the
    latter skipped on the frozen path used by transition training)."""
    grads: dict[str, np.ndarray] = {}
    acts, pres = cache["dec_acts"], cache["dec_pres"]
    g = gy
    for i in range(len(_DEC_DECONVS) - 1, -1, -1):
        name, _, _, _, stride, pad, _ = _DEC_DECONVS[i]
        if i == len(_DEC_DECONVS) - 1:
            g = ops.sigmoid_backward(acts[i + 1], g)
        else:
            g = ops.relu_backward(pres[i], g)
        g, gw, gb = ops.deconv2d_backward(acts[i], params[f"{name}_w"], g, stride, pad,
                                          cache=cache["dec_op_caches"][i],
                                          need_weight_grad=need_weight_grads)
        if need_weight_grads:
            grads[f"{name}_w"] = gw
            grads[f"{name}_b"] = gb
    g = ops.unpool_backward(g, None, (g.shape[0], 128, 5, 5))
    g = g.reshape(g.shape[0], -1)
    g = ops.relu_backward(cache["dec_pre_fc"], g)
    gz, gw, gb = ops.linear_backward(cache["dec_z"], params["fc_dec_w"], g,
                                     need_weight_grad=need_weight_grads)
    if need_weight_grads:
        grads["fc_dec_w"] = gw
        grads["fc_dec_b"] = gb
    return gz, grads


def encoder_backward(params: dict, cache: dict, gz: np.ndarray) -> dict:
    grads: dict[str, np.ndarray] = {}
    g = ops.sigmoid_backward(cache["z"], gz)
    g, gw, gb = ops.linear_backward(cache["enc_flat"], params["fc_enc_w"], g)
    grads["fc_enc_w"] = gw
    grads["fc_enc_b"] = gb
    n = g.shape[0]
    g = g.reshape(n, 128, 5, 5)
    g = ops.maxpool_backward(g, cache["pool_idx"], cache["pool_in_shape"])
    acts, pres = cache["enc_acts"], cache["enc_pres"]
    for i in range(len(_ENC_CONVS) - 1, -1, -1):
        name, _, _, _, stride, pad = _ENC_CONVS[i]
        g = ops.relu_backward(pres[i], g)
        need_gx = i > 0
        g, gw, gb = ops.conv2d_backward(acts[i], params[f"{name}_w"], g, stride, pad,
                                        cache=cache["enc_op_caches"][i],
                                        need_input_grad=need_gx)
        grads[f"{name}_w"] = gw
        grads[f"{name}_b"] = gb
        if name == "conv3" and need_gx:
            g = g[:, :, :19, :19]  # undo the one-sided pad
    return grads


def autoencoder_backward(params: dict, cache: dict, gy: np.ndarray) -> dict:
    gz, grads = decoder_backward(params, cache, gy)
    grads.update(encoder_backward(params, cache, gz))
    return grads


def encode(params: dict, images: np.ndarray) -> np.ndarray:
    """Images (76, 76), (N, 76, 76) or (N, 1, 76, 76) -> embeddings in (0, 1)."""
    x, single = _as_batch(np.asarray(images, dtype=np.float32))
    z = encoder_forward(params, x)
    return z[0] if single else z


def decode(params: dict, z: np.ndarray) -> np.ndarray:
    """Embeddings (512,) or (N, 512) -> images in (0, 1)."""
    z = np.asarray(z, dtype=np.float32)
    single = z.ndim == 1
    if single:
        z = z[None]
    if z.shape[1] != EMBEDDING_DIM:
        raise ValueError(f"embedding dim must be {EMBEDDING_DIM}, got {z.shape[1]}")
    y = decoder_forward(params, z)[:, 0]
    return y[0] if single else y


def init_transition(rng: np.random.Generator) -> dict[str, np.ndarray]:
    d_in = HISTORY_LEN * EMBEDDING_DIM
    return {
        "l1_w": _glorot(rng, (d_in, 1024), d_in, 1024),
        "l1_b": np.zeros(1024, dtype=np.float32),
        "l2_w": _glorot(rng, (1024, EMBEDDING_DIM), 1024, EMBEDDING_DIM),
        "l2_b": np.zeros(EMBEDDING_DIM, dtype=np.float32),
    }


def transition_forward(params: dict, history: np.ndarray,
                       cache: dict | None = None) -> np.ndarray:
    """history (5, 512) or (N, 5, 512), oldest first -> predicted embedding."""
    h = np.asarray(history, dtype=np.float32)
    single = h.ndim == 2
    if single:
        h = h[None]
    if h.shape[1:] != (HISTORY_LEN, EMBEDDING_DIM):
        raise ValueError(
            f"history must be ({HISTORY_LEN}, {EMBEDDING_DIM}) per sample, got {h.shape[1:]}")
    flat = h.reshape(h.shape[0], -1)
    pre1 = ops.linear_forward(flat, params["l1_w"], params["l1_b"])
    a1 = ops.leaky_relu(pre1, LEAKY_SLOPE)
    pre2 = ops.linear_forward(a1, params["l2_w"], params["l2_b"])
    out = ops.leaky_relu(pre2, LEAKY_SLOPE)
    if cache is not None:
        cache.update(tn_flat=flat, tn_pre1=pre1, tn_a1=a1, tn_pre2=pre2)
    return out[0] if single else out


def transition_backward(params: dict, cache: dict, gy: np.ndarray) -> dict:
    g = ops.leaky_relu_backward(cache["tn_pre2"], gy, LEAKY_SLOPE)
    g, gw2, gb2 = ops.linear_backward(cache["tn_a1"], params["l2_w"], g)
    g = ops.leaky_relu_backward(cache["tn_pre1"], g, LEAKY_SLOPE)
    _, gw1, gb1 = ops.linear_backward(cache["tn_flat"], params["l1_w"], g,
                                      need_input_grad=False)
    return {"l1_w": gw1, "l1_b": gb1, "l2_w": gw2, "l2_b": gb2}


def generate_next_image(ae_params: dict, tn_params: dict,
                        history_images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run the full framework on 5 history images (5, 76, 76): encode, predict
    the next embedding, clamp it into the decoder's (0, 1) input range, and
    decode.  Returns (generated image, history embeddings)."""
    imgs = np.asarray(history_images, dtype=np.float32)
    if imgs.shape != (HISTORY_LEN, IMG_SIZE, IMG_SIZE):
        raise ValueError(f"expected {(HISTORY_LEN, IMG_SIZE, IMG_SIZE)}, got {imgs.shape}")
    embeddings = encode(ae_params, imgs)
    z = transition_forward(tn_params, embeddings)
    z = np.clip(z, 0.0, 1.0)
    return decode(ae_params, z), embeddings
