import numpy as np
import pytest

from beamseg.features import PolarImage, PolarLayout, valid_disk
from beamseg.unet.model import (ATTENTION_MODES, UNetConfig, forward,
                                forward_batch, gradients, infer_probabilities,
                                init_params, open_attention_gates, pad_image,
                                pad_to_multiple, param_count)


def expected_shapes(cfg):
    """Architecture walk kept independent of the model implementation."""
    k = cfg.kernel
    shapes = {}

    def conv(name, c_in, c_out):
        shapes[f"{name}_w"] = (c_out, c_in, k, k)
        shapes[f"{name}_b"] = (c_out,)

    def gate(name, c_s, c_g):
        ci = max(1, c_s // 2)
        shapes[f"{name}_wx"] = (ci, c_s, 1, 1)
        shapes[f"{name}_wg"] = (ci, c_g, 1, 1)
        shapes[f"{name}_bj"] = (ci,)
        shapes[f"{name}_psi_w"] = (1, ci, 1, 1)
        shapes[f"{name}_psi_b"] = (1,)

    for level in range(cfg.depth):
        c_in = cfg.in_channels if level == 0 \
            else cfg.base_filters * 2 ** (level - 1)
        c_out = cfg.base_filters * 2 ** level
        conv(f"enc{level}_c1", c_in, c_out)
        conv(f"enc{level}_c2", c_out, c_out)
    c_bot = cfg.base_filters * 2 ** cfg.depth
    conv("bot_c1", c_bot // 2, c_bot)
    conv("bot_c2", c_bot, c_bot)
    if cfg.attention in ("bottleneck", "both"):
        gate("bot_att", c_bot, c_bot)
    for level in range(cfg.depth):
        c_skip = cfg.base_filters * 2 ** level
        c_deep = c_skip * 2
        if cfg.attention in ("skip", "both"):
            gate(f"dec{level}_att", c_skip, c_deep)
        conv(f"dec{level}_c1", c_deep + c_skip, c_skip)
        conv(f"dec{level}_c2", c_skip, c_skip)
    shapes["out_w"] = (1, cfg.base_filters, 1, 1)
    shapes["out_b"] = (1,)
    return shapes


def test_config_validation():
    with pytest.raises(ValueError):
        UNetConfig(depth=0)
    with pytest.raises(ValueError):
        UNetConfig(kernel=4)
    with pytest.raises(ValueError):
        UNetConfig(attention="everywhere")
    with pytest.raises(ValueError):
        UNetConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        UNetConfig(alpha=0.0)
    cfg = UNetConfig(in_channels=5, base_filters=3, depth=2,
                     attention="both", seed=7)
    assert UNetConfig.from_dict(cfg.to_dict()) == cfg


def test_pad_to_multiple():
    assert pad_to_multiple(46, 3) == 48
    assert pad_to_multiple(48, 3) == 48
    assert pad_to_multiple(1, 1) == 2
    assert pad_to_multiple(8, 3) == 8


def test_pad_image_layout():
    rng = np.random.default_rng(0)
    img = rng.standard_normal((5, 5, 2))
    out = pad_image(img, 8)
    assert out.shape == (2, 8, 8)
    np.testing.assert_array_equal(out[:, :5, :5], np.moveaxis(img, -1, 0))
    assert np.all(out[:, 5:, :] == 0) and np.all(out[:, :, 5:] == 0)
    with pytest.raises(ValueError):
        pad_image(img, 4)


@pytest.mark.parametrize("mode", ATTENTION_MODES)
def test_parameter_shapes_per_mode(mode):
    cfg = UNetConfig(in_channels=3, base_filters=4, depth=2, attention=mode,
                     seed=5)
    params = init_params(cfg)
    expect = expected_shapes(cfg)
    assert set(params) == set(expect)
    for name, shape in expect.items():
        assert params[name].shape == shape, name
    assert param_count(params) == sum(
        int(np.prod(s)) for s in expect.values())


def test_init_seeded_and_biases_zero():
    cfg = UNetConfig(in_channels=2, base_filters=2, depth=1, seed=3)
    a = init_params(cfg)
    b = init_params(cfg)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])
    c = init_params(UNetConfig(in_channels=2, base_filters=2, depth=1,
                               seed=4))
    assert any(not np.array_equal(a[n], c[n]) for n in a)
    for name in a:
        if name.endswith("_b") and not name.endswith("psi_b"):
            np.testing.assert_array_equal(a[name], 0.0)


def test_forward_shape_and_range():
    cfg = UNetConfig(in_channels=3, base_filters=2, depth=2, seed=1)
    params = init_params(cfg)
    x = np.random.default_rng(2).standard_normal((2, 3, 16, 16))
    yhat, _ = forward_batch(params, cfg, x)
    assert yhat.shape == (2, 1, 16, 16)
    assert yhat.min() > 0.0 and yhat.max() < 1.0
    with pytest.raises(ValueError):
        forward_batch(params, cfg, x[:, :2])
    with pytest.raises(ValueError):
        forward_batch(params, cfg, x[:, :, :14, :14])


@pytest.mark.parametrize("mode", ["skip", "bottleneck", "both"])
def test_open_gates_reduce_to_plain_network(mode):
    """Forcing every attention gate to output 1 must reproduce the gateless
    network that shares the same convolution weights."""
    plain = UNetConfig(in_channels=3, base_filters=2, depth=2,
                       attention="none", seed=9)
    gated = UNetConfig(in_channels=3, base_filters=2, depth=2,
                       attention=mode, seed=9)
    p_plain = init_params(plain)
    p_gated = init_params(gated)
    for name, v in p_plain.items():
        p_gated[name] = v
    p_gated = open_attention_gates(p_gated)
    x = np.random.default_rng(10).standard_normal((2, 3, 8, 8))
    y_plain, _ = forward_batch(p_plain, plain, x)
    y_gated, _ = forward_batch(p_gated, gated, x)
    np.testing.assert_allclose(y_gated, y_plain, atol=1e-12)


def test_infer_probabilities_batch_invariance():
    cfg = UNetConfig(in_channels=2, base_filters=2, depth=1, seed=6)
    params = init_params(cfg)
    x = np.random.default_rng(7).standard_normal((7, 2, 8, 8))
    full = infer_probabilities(params, cfg, x, batch_size=64)
    split = infer_probabilities(params, cfg, x, batch_size=3)
    np.testing.assert_array_equal(full, split)
    direct, _ = forward_batch(params, cfg, x)
    np.testing.assert_array_equal(full, direct[:, 0])


def test_forward_masks_outside_disk():
    layout = PolarLayout(side=10)
    disk = valid_disk(layout)
    rng = np.random.default_rng(4)
    field = np.where(disk[..., None], rng.random((10, 10, 3)), 0.0)
    img = PolarImage(data=field, validity=disk)
    cfg = UNetConfig(in_channels=3, base_filters=2, depth=1, seed=2)
    mask = forward(init_params(cfg), cfg, img)
    assert mask.data.shape == (10, 10)
    assert np.all(mask.data[~disk] == 0.0)
    assert np.all(mask.data[disk] > 0.0)


def test_gradients_match_finite_differences():
    cfg = UNetConfig(in_channels=2, base_filters=2, depth=1, seed=12)
    params = init_params(cfg)
    jit = np.random.default_rng(99)
    for name in params:
        # zero biases sit on ReLU kinks where finite differences lie
        params[name] = params[name] + 0.05 * jit.standard_normal(
            params[name].shape)
    rng = np.random.default_rng(13)
    x = rng.standard_normal((2, 2, 8, 8))
    y = (rng.random((2, 8, 8)) < 0.3).astype(np.uint8)
    valid = np.ones((8, 8), dtype=bool)
    loss, grads = gradients(params, cfg, x, y, valid)
    assert set(grads) == set(params)
    assert 0.0 < loss < 1.0

    h = 1e-5
    worst = 0.0
    for name, g in grads.items():
        flat = params[name].reshape(-1)
        idx = jit.choice(flat.size, size=min(4, flat.size), replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            up, _ = gradients(params, cfg, x, y, valid)
            flat[i] = keep - h
            dn, _ = gradients(params, cfg, x, y, valid)
            flat[i] = keep
            fd = (up - dn) / (2 * h)
            denom = max(abs(fd), abs(g.reshape(-1)[i]), 1e-8)
            worst = max(worst, abs(fd - g.reshape(-1)[i]) / denom)
    assert worst < 1e-4


def test_gradients_reject_empty_batch():
    cfg = UNetConfig(in_channels=2, base_filters=2, depth=1)
    params = init_params(cfg)
    with pytest.raises(ValueError):
        gradients(params, cfg, np.zeros((0, 2, 8, 8)),
                  np.zeros((0, 8, 8), dtype=np.uint8),
                  np.ones((8, 8), dtype=bool))
