import numpy as np
import pytest

from hybridvc.errors import ValidationError
from hybridvc.neural import (
    Tensor,
    backward,
    bilinear_sample,
    check_gradients,
    clamp_min,
    concat_channels,
    conv2d,
    deform_conv2d,
    leaky_relu,
    mean_all,
    mean_pool2,
    mse_loss,
    mul,
    no_grad,
    pow_const,
    sigmoid,
    slice_channels,
)


def identity_kernel(c):
    w = np.zeros((c, c, 3, 3))
    for i in range(c):
        w[i, i, 1, 1] = 1.0
    return w


def rand(rng, *shape):
    return rng.normal(size=shape)


# -- bilinear sampling ---------------------------------------------------------

def test_bilinear_integer_coordinates_exact():
    img = Tensor(np.arange(24, dtype=float).reshape(1, 2, 3, 4))
    out = bilinear_sample(img, np.array([[2.0]]), np.array([[3.0]]))
    assert out.data[0, 0, 0] == img.data[0, 0, 2, 3]
    assert out.data[0, 1, 0] == img.data[0, 1, 2, 3]


def test_bilinear_midpoint_average():
    img = Tensor(np.arange(12, dtype=float).reshape(1, 1, 3, 4))
    out = bilinear_sample(img, np.array([[1.0]]), np.array([[1.5]]))
    assert out.data[0, 0, 0] == (img.data[0, 0, 1, 1] + img.data[0, 0, 1, 2]) / 2


def test_bilinear_fully_outside_is_zero():
    img = Tensor(np.ones((1, 3, 4, 4)))
    for y, x in ((-5.0, -5.0), (10.0, 2.0), (-1.0, 2.0), (4.0, 0.0)):
        out = bilinear_sample(img, np.array([[y]]), np.array([[x]]))
        assert np.all(out.data == 0.0), (y, x)


def test_bilinear_partial_overlap_blends_with_zero():
    img = Tensor(np.full((1, 1, 4, 4), 2.0))
    out = bilinear_sample(img, np.array([[-0.5]]), np.array([[1.0]]))
    assert out.data[0, 0, 0] == pytest.approx(1.0)  # half in, half zero pad


def test_bilinear_linear_in_input():
    rng = np.random.default_rng(0)
    a, b = rand(rng, 1, 3, 5, 5), rand(rng, 1, 3, 5, 5)
    ys, xs = rng.uniform(-1, 5, (1, 7)), rng.uniform(-1, 5, (1, 7))
    lhs = bilinear_sample(Tensor(0.7 * a - 1.3 * b), ys, xs).data
    rhs = (0.7 * bilinear_sample(Tensor(a), ys, xs).data
           - 1.3 * bilinear_sample(Tensor(b), ys, xs).data)
    assert np.allclose(lhs, rhs, atol=1e-12)


# -- deformable convolution ------------------------------------------------------

def test_identity_configuration_matches_plain_conv():
    rng = np.random.default_rng(1)
    x = Tensor(rand(rng, 2, 4, 9, 11))
    w = Tensor(rand(rng, 5, 4, 3, 3))
    b = Tensor(rand(rng, 5))
    off = Tensor(np.zeros((2, 18, 9, 11)))
    mask = Tensor(np.ones((2, 9, 9, 11)))
    plain = conv2d(x, w, b)
    deform = deform_conv2d(x, off, mask, w, b)
    assert np.abs(plain.data - deform.data).max() <= 1e-6


def test_integer_shift_oracle():
    rng = np.random.default_rng(2)
    c = 3
    x = rand(rng, 1, c, 8, 8)
    w = Tensor(identity_kernel(c))
    b = Tensor(np.zeros(c))
    mask = Tensor(np.ones((1, 9, 8, 8)))
    for dy, dx in ((0, 1), (1, 0), (-2, 3), (0, -1)):
        off = np.zeros((1, 18, 8, 8))
        off[:, 0::2] = dy
        off[:, 1::2] = dx
        out = deform_conv2d(Tensor(x), Tensor(off), mask, w, b)
        # brute-force shift with zero fill
        expect = np.zeros_like(x)
        for i in range(8):
            for j in range(8):
                si, sj = i + dy, j + dx
                if 0 <= si < 8 and 0 <= sj < 8:
                    expect[0, :, i, j] = x[0, :, si, sj]
        assert np.abs(out.data - expect).max() <= 1e-6, (dy, dx)


def test_half_pixel_shift_on_ramp_hits_midpoints():
    c = 2
    ramp = np.tile(np.arange(8, dtype=float)[None, None, None, :], (1, c, 8, 1))
    w = Tensor(identity_kernel(c))
    b = Tensor(np.zeros(c))
    off = np.zeros((1, 18, 8, 8))
    off[:, 1::2] = 0.5  # dx = +0.5 on every tap
    out = deform_conv2d(Tensor(ramp), Tensor(off), Tensor(np.ones((1, 9, 8, 8))), w, b)
    interior = out.data[0, :, :, :7]
    expect = ramp[0, :, :, :7] + 0.5
    assert np.abs(interior - expect).max() <= 1e-6


def test_deform_shape_validation():
    rng = np.random.default_rng(3)
    x = Tensor(rand(rng, 1, 4, 6, 6))
    w = Tensor(rand(rng, 4, 4, 3, 3))
    b = Tensor(np.zeros(4))
    with pytest.raises(ValidationError):
        deform_conv2d(x, Tensor(np.zeros((1, 10, 6, 6))), Tensor(np.ones((1, 9, 6, 6))), w, b)
    with pytest.raises(ValidationError):
        deform_conv2d(x, Tensor(np.zeros((1, 18, 6, 6))), Tensor(np.ones((1, 4, 6, 6))), w, b)
    with pytest.raises(ValidationError):
        conv2d(x, Tensor(rand(rng, 4, 5, 3, 3)), b)


# -- gradient contract ------------------------------------------------------------

def _random_instance(rng):
    n, c, f = 1, int(rng.integers(1, 4)), int(rng.integers(1, 4))
    h = w = int(rng.integers(4, 8))
    x = Tensor(rand(rng, n, c, h, w), requires_grad=True)
    # keep sampling points off the integer lattice so the bilinear kink
    # never coincides with the finite-difference probe
    off = rng.uniform(-2.0, 2.0, size=(n, 18, h, w))
    off += np.where(np.abs(off - np.round(off)) < 0.05, 0.11, 0.0)
    offsets = Tensor(off, requires_grad=True)
    mask = Tensor(rng.uniform(0.1, 0.9, size=(n, 9, h, w)), requires_grad=True)
    wt = Tensor(rand(rng, f, c, 3, 3) * 0.5, requires_grad=True)
    b = Tensor(rand(rng, f) * 0.1, requires_grad=True)
    target = rand(rng, n, f, h, w)
    return x, offsets, mask, wt, b, target


def test_deformable_gradients_match_finite_differences_many_instances():
    rng = np.random.default_rng(2024)
    for trial in range(50):
        x, offsets, mask, wt, b, target = _random_instance(rng)

        def fn(xx, oo, mm, ww, bb):
            return mse_loss(deform_conv2d(xx, oo, mm, ww, bb), target)

        check_gradients(fn, [x, offsets, mask, wt, b], step=1e-4, rtol=1e-3)


def test_conv_gradients_weights_and_input():
    rng = np.random.default_rng(7)
    for _ in range(10):
        c, f, h = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(4, 8))
        x = Tensor(rand(rng, 1, c, h, h), requires_grad=True)
        w = Tensor(rand(rng, f, c, 3, 3) * 0.5, requires_grad=True)
        b = Tensor(rand(rng, f) * 0.1, requires_grad=True)
        target = rand(rng, 1, f, h, h)
        check_gradients(lambda xx, ww, bb: mse_loss(conv2d(xx, ww, bb), target),
                        [x, w, b])


def test_gradients_at_padding_boundary():
    # offsets park every tap in the outer half-pixel band where samples blend
    # with zero padding; probes sit off the integer lattice
    rng = np.random.default_rng(11)
    x = Tensor(rand(rng, 1, 2, 5, 5), requires_grad=True)
    off = np.full((1, 18, 5, 5), 3.6)
    off[:, 0::2] = -3.4
    offsets = Tensor(off, requires_grad=True)
    mask = Tensor(rng.uniform(0.2, 0.8, (1, 9, 5, 5)), requires_grad=True)
    w = Tensor(rand(rng, 2, 2, 3, 3) * 0.5, requires_grad=True)
    b = Tensor(np.zeros(2), requires_grad=True)
    target = rand(rng, 1, 2, 5, 5)
    check_gradients(lambda xx, oo, mm, ww, bb: mse_loss(
        deform_conv2d(xx, oo, mm, ww, bb), target), [x, offsets, mask, w, b])


def test_pointwise_and_pool_gradients():
    rng = np.random.default_rng(13)
    x = Tensor(rand(rng, 1, 2, 6, 6) + 0.31, requires_grad=True)
    target = rand(rng, 1, 2, 3, 3)
    check_gradients(lambda xx: mse_loss(mean_pool2(sigmoid(xx)), target), [x])
    y = Tensor(np.abs(rand(rng, 1, 2, 4, 4)) + 0.5, requires_grad=True)
    check_gradients(lambda yy: mean_all(pow_const(clamp_min(yy, 0.1), 1.7)), [y])
    z = Tensor(rand(rng, 1, 2, 4, 4) + 0.4, requires_grad=True)
    check_gradients(lambda zz: mse_loss(leaky_relu(zz, 0.1), np.zeros((1, 2, 4, 4))), [z])


def test_bilinear_sample_input_gradient():
    rng = np.random.default_rng(17)
    x = Tensor(rand(rng, 1, 2, 5, 5), requires_grad=True)
    ys = rng.uniform(-0.6, 4.6, (1, 9))
    xs = rng.uniform(-0.6, 4.6, (1, 9))
    target = rand(rng, 1, 2, 9)
    check_gradients(lambda xx: mse_loss(bilinear_sample(xx, ys, xs), target), [x])


# -- structural ops ----------------------------------------------------------------

def test_concat_slice_roundtrip_and_grads():
    rng = np.random.default_rng(19)
    a = Tensor(rand(rng, 1, 3, 4, 4), requires_grad=True)
    b = Tensor(rand(rng, 1, 2, 4, 4), requires_grad=True)
    cat = concat_channels(a, b)
    assert cat.data.shape == (1, 5, 4, 4)
    assert np.array_equal(slice_channels(cat, 0, 3).data, a.data)
    assert np.array_equal(slice_channels(cat, 3, 5).data, b.data)
    target = rand(rng, 1, 2, 4, 4)
    check_gradients(lambda aa, bb: mse_loss(
        slice_channels(concat_channels(aa, bb), 2, 4), target), [a, b])


def test_mul_broadcast_gate_gradients():
    rng = np.random.default_rng(23)
    gate = Tensor(rng.uniform(0.1, 0.9, (1, 1, 4, 4)), requires_grad=True)
    feat = Tensor(rand(rng, 1, 3, 4, 4), requires_grad=True)
    target = rand(rng, 1, 3, 4, 4)
    check_gradients(lambda g, f: mse_loss(mul(g, f), target), [gate, feat])


def test_no_grad_scopes_do_not_leak_across_threads():
    import time
    from concurrent.futures import ThreadPoolExecutor

    from hybridvc.neural import grad_enabled

    def worker(_):
        with no_grad():
            time.sleep(0.002)
            return grad_enabled()

    with ThreadPoolExecutor(max_workers=4) as pool:
        inside = list(pool.map(worker, range(32)))
    assert not any(inside)
    assert grad_enabled()  # the calling thread's mode survives the stampede


def test_no_grad_blocks_graph():
    x = Tensor(np.ones((1, 1, 4, 4)), requires_grad=True)
    w = Tensor(np.ones((1, 1, 3, 3)), requires_grad=True)
    b = Tensor(np.zeros(1), requires_grad=True)
    with no_grad():
        out = conv2d(x, w, b)
    assert not out.requires_grad
    out2 = conv2d(x, w, b)
    assert out2.requires_grad
    backward(mse_loss(out2, np.zeros((1, 1, 4, 4))))
    assert w.grad is not None


def test_resolution_preserved_by_all_spatial_ops():
    rng = np.random.default_rng(29)
    x = Tensor(rand(rng, 2, 3, 10, 13))
    w = Tensor(rand(rng, 4, 3, 3, 3))
    b = Tensor(np.zeros(4))
    assert conv2d(x, w, b).data.shape == (2, 4, 10, 13)
    off = Tensor(np.zeros((2, 18, 10, 13)))
    m = Tensor(np.ones((2, 9, 10, 13)))
    assert deform_conv2d(x, off, m, w, b).data.shape == (2, 4, 10, 13)
