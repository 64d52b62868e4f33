import numpy as np
import pytest

from cwtkit import transforms as tf
from cwtkit.rng import Rng

from oracles import naive_cwt, naive_resize, naive_rotate


def rand_image(seed, c, h, w, dtype=np.float32):
    return np.random.default_rng(seed).random((c, h, w)).astype(dtype)


# ---------------------------------------------------------------------------
# partition / reassemble


def test_partition_even_split():
    img = rand_image(0, 3, 4, 4)
    grid, blocks = tf.partition(img, 2)
    assert [b.shape for b in blocks] == [(3, 2, 2)] * 4


def test_partition_remainder_to_last():
    img = rand_image(1, 1, 5, 5)
    grid, blocks = tf.partition(img, 2)
    assert [b.shape[1:] for b in blocks] == [(2, 2), (2, 3), (3, 2), (3, 3)]
    assert np.array_equal(tf.reassemble(grid, blocks), img)


def test_partition_n1_identity():
    img = rand_image(2, 2, 6, 7)
    grid, blocks = tf.partition(img, 1)
    assert len(blocks) == 1 and np.array_equal(blocks[0], img)


def test_partition_too_many_blocks():
    with pytest.raises(ValueError, match="3x3"):
        tf.partition(rand_image(0, 1, 2, 8), 3)


def test_reassemble_roundtrip_exact():
    img = rand_image(3, 3, 8, 8)
    grid, blocks = tf.partition(img, 2)
    assert np.array_equal(tf.reassemble(grid, blocks), img)


def test_reassemble_zero_blocks():
    grid, blocks = tf.partition(rand_image(4, 1, 6, 6), 3)
    out = tf.reassemble(grid, [np.zeros_like(b) for b in blocks])
    assert not out.any()


def test_reassemble_swapped_blocks():
    img = rand_image(5, 1, 6, 6)
    grid, blocks = tf.partition(img, 2)
    blocks[0], blocks[3] = blocks[3], blocks[0]
    out = tf.reassemble(grid, blocks)
    assert np.array_equal(out[:, :3, :3], img[:, 3:, 3:])
    assert np.array_equal(out[:, 3:, 3:], img[:, :3, :3])
    assert np.array_equal(out[:, :3, 3:], img[:, :3, 3:])


def test_reassemble_size_mismatch_names_block():
    grid, blocks = tf.partition(rand_image(6, 1, 6, 6), 2)
    blocks[2] = np.zeros((1, 5, 5), dtype=np.float32)
    with pytest.raises(ValueError, match="block 2"):
        tf.reassemble(grid, blocks)


# ---------------------------------------------------------------------------
# resize


def test_resize_2x2_to_1x1_bilinear():
    blk = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
    assert np.allclose(tf.resize(blk, 1, 1), [[[2.5]]])


def test_resize_same_size_identity_bitexact():
    for kernel in (tf.BILINEAR, tf.NEAREST):
        blk = rand_image(7, 3, 5, 9)
        assert np.array_equal(tf.resize(blk, 5, 9, kernel), blk)


def test_resize_constant_stays_constant():
    blk = np.full((2, 4, 6), 0.7, dtype=np.float32)
    for out_h, out_w in ((3, 3), (9, 2), (1, 11)):
        out = tf.resize(blk, out_h, out_w)
        assert np.allclose(out, 0.7, atol=1e-6)


def test_resize_matches_naive_oracle():
    rng = Rng(100)
    for kernel in (tf.BILINEAR, tf.NEAREST):
        for t in range(8):
            r = rng.split(t + (0 if kernel == tf.BILINEAR else 50))
            h, w = 2 + r.below(7), 2 + r.below(7)
            oh, ow = 1 + r.below(12), 1 + r.below(12)
            blk = rand_image(1000 + t, 2, h, w)
            got = tf.resize(blk, oh, ow, kernel)
            want = naive_resize(blk, oh, ow, kernel)
            assert np.allclose(got, want, atol=1e-5), (kernel, h, w, oh, ow)


def test_resize_rejects_empty_target():
    with pytest.raises(ValueError):
        tf.resize(rand_image(0, 1, 4, 4), 0, 3)


def test_resize_vjp_averaging_transpose():
    up = np.ones((1, 1, 1), dtype=np.float32)
    assert np.allclose(tf.resize_vjp(up, 2, 2), np.full((1, 2, 2), 0.25))


def test_resize_vjp_zero_and_identity():
    assert not tf.resize_vjp(np.zeros((2, 3, 3), dtype=np.float32), 5, 5).any()
    up = rand_image(8, 2, 6, 6)
    assert np.array_equal(tf.resize_vjp(up, 6, 6), up)


# ---------------------------------------------------------------------------
# rotate


def test_rotate_zero_angle_identity():
    blk = rand_image(9, 3, 5, 7)
    assert np.array_equal(tf.rotate(blk, 0.0), blk)


def test_rotate_180_flips():
    blk = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
    assert np.allclose(tf.rotate(blk, 180.0), [[[4.0, 3.0], [2.0, 1.0]]], atol=1e-6)


def test_rotate_ones_zero_padding_bleeds():
    blk = np.ones((1, 8, 8), dtype=np.float32)
    out = tf.rotate(blk, 26.0)
    assert out.min() >= 0.0 and out.max() <= 1.0 + 1e-6
    for y, x in ((0, 0), (0, 7), (7, 0), (7, 7)):
        assert out[0, y, x] < 1.0
    assert np.allclose(out, naive_rotate(blk, 26.0), atol=1e-5)


def test_rotate_matches_naive_oracle():
    rng = Rng(200)
    for kernel in (tf.BILINEAR, tf.NEAREST):
        for t in range(6):
            r = rng.split(t + (0 if kernel == tf.BILINEAR else 50))
            h, w = 2 + r.below(8), 2 + r.below(8)
            angle = r.uniform(-170.0, 170.0)
            blk = rand_image(2000 + t, 2, h, w)
            got = tf.rotate(blk, angle, kernel)
            want = naive_rotate(blk, angle, kernel)
            assert np.allclose(got, want, atol=1e-5), (kernel, h, w, angle)


def test_rotate_vjp_zero_angle_and_180():
    up = rand_image(10, 2, 5, 5)
    assert np.array_equal(tf.rotate_vjp(up, 0.0), up)
    rev = tf.rotate_vjp(up, 180.0)
    assert np.allclose(rev, up[:, ::-1, ::-1], atol=1e-5)


# ---------------------------------------------------------------------------
# crop


def test_crop_full_extent_identity():
    blk = rand_image(11, 2, 4, 6)
    assert np.array_equal(tf.crop(blk, 0, 0, 4, 6), blk)


def test_crop_indexing():
    blk = np.arange(1.0, 10.0, dtype=np.float32).reshape(1, 3, 3)
    assert np.array_equal(tf.crop(blk, 1, 1, 2, 2), [[[5.0, 6.0], [8.0, 9.0]]])


def test_crop_out_of_bounds():
    with pytest.raises(ValueError, match="exceeds"):
        tf.crop(rand_image(0, 1, 4, 4), 2, 0, 3, 4)


def test_crop_vjp_then_crop_recovers():
    up = rand_image(12, 2, 3, 4)
    scattered = tf.crop_vjp(up, 2, 1, 7, 8)
    assert scattered.shape == (2, 7, 8)
    assert np.array_equal(tf.crop(scattered, 2, 1, 3, 4), up)
    mask = np.ones_like(scattered, dtype=bool)
    mask[:, 2:5, 1:5] = False
    assert not scattered[mask].any()


# ---------------------------------------------------------------------------
# the block-wise pipeline


PAPER_PARAMS = tf.CwtParams(n=2, num_copies=20, s_min=1.0, s_max=1.3,
                            r_max_deg=26.0, k=2)


def test_cwt_sample_degenerate_scale_forces_origin():
    params = tf.CwtParams(n=2, s_min=1.0, s_max=1.0, k=0)
    trace = tf.cwt_sample(params, (28, 28), Rng(0))
    assert all(size == (14, 14) for size in trace.up_sizes)
    assert all(off == (0, 0) for off in trace.offsets)


def test_cwt_sample_paper_configuration():
    trace = tf.cwt_sample(PAPER_PARAMS, (28, 28), Rng(1))
    assert len(trace.scales) == 4
    assert len(trace.rotated) == 2
    assert len(set(trace.rotated)) == 2
    assert all(1.0 <= s <= 1.3 for s in trace.scales)
    assert all(-26.0 <= a <= 26.0 for a in trace.angles)
    for b, (uh, uw) in enumerate(trace.up_sizes):
        assert uh == int(np.floor(14 * trace.scales[b]))
        assert uw == int(np.floor(14 * trace.scales[b]))
    for (oy, ox), (uh, uw) in zip(trace.offsets, trace.up_sizes):
        assert 0 <= oy <= uh - 14 and 0 <= ox <= uw - 14


def test_cwt_sample_k_zero_empty_rotation_set():
    params = tf.CwtParams(n=2, k=0)
    trace = tf.cwt_sample(params, (16, 16), Rng(2))
    assert trace.rotated == () and trace.angles == ()


def test_cwt_sample_pre_sizes_follow_floor_rule():
    trace = tf.cwt_sample(PAPER_PARAMS, (28, 28), Rng(3))
    for b, (ph, pw) in enumerate(trace.pre_sizes):
        assert ph == max(1, int(np.floor(14 / trace.scales[b])))
        assert pw == max(1, int(np.floor(14 / trace.scales[b])))


def test_cwt_identity_degeneracy_bitexact():
    params = tf.CwtParams(n=2, s_min=1.0, s_max=1.0, k=0)
    for seed in range(5):
        img = rand_image(3000 + seed, 3, 20, 20)
        trace = tf.cwt_sample(params, (20, 20), Rng(seed))
        assert np.array_equal(tf.cwt_forward(img, trace, params), img)


def test_cwt_constant_image_stays_constant():
    params = tf.CwtParams(n=2, s_min=1.0, s_max=1.3, k=0)
    img = np.full((1, 16, 16), 0.42, dtype=np.float32)
    trace = tf.cwt_sample(params, (16, 16), Rng(7))
    assert np.allclose(tf.cwt_forward(img, trace, params), 0.42, atol=1e-6)


@pytest.mark.parametrize("pre_interpolation", [True, False])
@pytest.mark.parametrize("kernel", [tf.BILINEAR, tf.NEAREST])
def test_cwt_forward_matches_straight_line_oracle(pre_interpolation, kernel):
    params = tf.CwtParams(n=2, s_min=1.0, s_max=1.3, r_max_deg=26.0, k=2,
                          kernel=kernel, pre_interpolation=pre_interpolation)
    img = rand_image(4000, 3, 28, 28)
    for t in range(3):
        trace = tf.cwt_sample(params, (28, 28), Rng(500 + t))
        got = tf.cwt_forward(img, trace, params)
        want = naive_cwt(img, trace, params)
        assert np.allclose(got, want, atol=1e-5)


def test_cwt_forward_shape_and_range():
    img = rand_image(5000, 3, 29, 31)
    params = tf.CwtParams(n=3, s_max=1.4, k=4)
    trace = tf.cwt_sample(params, (29, 31), Rng(9))
    out = tf.cwt_forward(img, trace, params)
    assert out.shape == img.shape
    assert out.min() >= -1e-6 and out.max() <= 1.0 + 1e-6


def test_cwt_trace_dims_mismatch_errors():
    params = tf.CwtParams()
    trace = tf.cwt_sample(params, (16, 16), Rng(0))
    with pytest.raises(ValueError, match="sampled for"):
        tf.cwt_forward(rand_image(0, 1, 18, 18), trace, params)
    with pytest.raises(ValueError, match="sampled for"):
        tf.cwt_vjp(rand_image(0, 1, 18, 18), trace, params)


def test_cwt_vjp_identity_trace_and_zero():
    params = tf.CwtParams(n=2, s_min=1.0, s_max=1.0, k=0)
    trace = tf.cwt_sample(params, (12, 12), Rng(1))
    up = rand_image(6000, 2, 12, 12)
    assert np.array_equal(tf.cwt_vjp(up, trace, params), up)
    assert not tf.cwt_vjp(np.zeros_like(up), trace, params).any()


def test_cwt_linearity_in_the_image():
    params = PAPER_PARAMS
    trace = tf.cwt_sample(params, (20, 20), Rng(77))
    x = rand_image(7000, 3, 20, 20)
    y = rand_image(7001, 3, 20, 20)
    a, b = np.float32(0.3), np.float32(-1.7)
    lhs = tf.cwt_forward(a * x + b * y, trace, params)
    rhs = a * tf.cwt_forward(x, trace, params) + b * tf.cwt_forward(y, trace, params)
    assert np.allclose(lhs, rhs, rtol=1e-5, atol=1e-5)


# ---------------------------------------------------------------------------
# resize-and-pad baseline


def test_dim_identity_branch():
    img = rand_image(8000, 3, 14, 14)
    trace = tf.DimTrace(14, 14, applied=False)
    assert np.array_equal(tf.dim_forward(img, trace), img)
    up = rand_image(8001, 3, 14, 14)
    assert np.array_equal(tf.dim_vjp(up, trace), up)


def test_dim_keep_size_branch_is_pure_pad_roundtrip():
    # resize target == input size: the transform reduces to zero-pad + resize back
    img = rand_image(8100, 1, 10, 10)
    trace = tf.DimTrace(10, 10, applied=True, resized=(10, 10), pad=(1, 0))
    got = tf.dim_forward(img, trace)
    canvas = np.zeros((1, 11, 11))
    canvas[:, 1:11, 0:10] = img
    want = naive_resize(canvas, 10, 10, tf.BILINEAR)
    assert np.allclose(got, want, atol=1e-5)


def test_dim_sampled_traces_are_valid_and_preserve_shape():
    seen_applied, seen_skipped = 0, 0
    img = rand_image(8200, 3, 20, 20)
    for t in range(40):
        trace = tf.dim_sample((20, 20), Rng(100).split(t))
        out = tf.dim_forward(img, trace)
        assert out.shape == img.shape
        if trace.applied:
            seen_applied += 1
            rh, rw = trace.resized
            assert 20 <= rh <= 22 and 20 <= rw <= 22
            assert 0 <= trace.pad[0] <= 22 - rh and 0 <= trace.pad[1] <= 22 - rw
        else:
            seen_skipped += 1
            assert np.array_equal(out, img)
    assert seen_applied > 5 and seen_skipped > 5


# ---------------------------------------------------------------------------
# scale-copy baseline


def test_sim_single_copy():
    img = rand_image(8300, 1, 4, 4)
    copies = tf.sim_copies(img, 1)
    assert len(copies) == 1 and np.array_equal(copies[0], img)


def test_sim_powers_of_two():
    copies = tf.sim_copies(np.ones((1, 2, 2), dtype=np.float32), 3)
    assert [float(c[0, 0, 0]) for c in copies] == [1.0, 0.5, 0.25]


def test_sim_vjp_scales_upstream():
    up = rand_image(8400, 2, 3, 3)
    assert np.allclose(tf.sim_vjp(up, 2), up / 4.0)


# ---------------------------------------------------------------------------
# shuffle-and-rotate baseline


def test_bsr_identity_permutation_zero_angles():
    img = rand_image(8500, 3, 8, 8)
    trace = tf.BsrTrace(8, 8, 2, perm=(0, 1, 2, 3), angles=(0.0,) * 4)
    assert np.array_equal(tf.bsr_forward(img, trace), img)


def test_bsr_known_permutation_bookkeeping():
    img = rand_image(8600, 1, 4, 4)
    trace = tf.BsrTrace(4, 4, 2, perm=(3, 2, 1, 0), angles=(0.0,) * 4)
    out = tf.bsr_forward(img, trace)
    assert np.array_equal(out[:, :2, :2], img[:, 2:, 2:])
    assert np.array_equal(out[:, :2, 2:], img[:, 2:, :2])
    assert np.array_equal(out[:, 2:, :2], img[:, :2, 2:])
    assert np.array_equal(out[:, 2:, 2:], img[:, :2, :2])


def test_bsr_unequal_blocks_shuffle_within_size_groups():
    # 5x5 with n=2 has four distinct block sizes: permutation must be identity
    img = rand_image(8700, 1, 5, 5)
    for t in range(10):
        trace = tf.bsr_sample((5, 5), 2, 0.0, Rng(t))
        assert trace.perm == (0, 1, 2, 3)
        assert np.array_equal(tf.bsr_forward(img, trace), img)


def test_bsr_sampled_shapes_and_determinism():
    img = rand_image(8800, 3, 12, 12)
    out1, tr1 = tf.bsr_transform(img, 3, 30.0, Rng(5))
    out2, tr2 = tf.bsr_transform(img, 3, 30.0, Rng(5))
    assert np.array_equal(out1, out2) and tr1 == tr2
    assert out1.shape == img.shape
    assert sorted(tr1.perm) == list(range(9))


# ---------------------------------------------------------------------------
# cross-cutting properties


def test_all_transforms_linear_for_fixed_trace():
    x = rand_image(9000, 3, 16, 16)
    y = rand_image(9001, 3, 16, 16)
    a, b = np.float32(1.3), np.float32(-0.4)
    cases = []
    trace = tf.cwt_sample(PAPER_PARAMS, (16, 16), Rng(1))
    cases.append(lambda img: tf.cwt_forward(img, trace, PAPER_PARAMS))
    dtrace = tf.DimTrace(16, 16, True, (17, 16), (1, 2))
    cases.append(lambda img: tf.dim_forward(img, dtrace))
    btrace = tf.bsr_sample((16, 16), 2, 25.0, Rng(2))
    cases.append(lambda img: tf.bsr_forward(img, btrace))
    cases.append(lambda img: tf.sim_scale(img, 2))
    for fwd in cases:
        lhs = fwd(a * x + b * y)
        rhs = a * fwd(x) + b * fwd(y)
        assert np.allclose(lhs, rhs, rtol=1e-5, atol=1e-5)


def test_range_preserved_for_unit_inputs():
    img = np.random.default_rng(3).random((3, 16, 16)).astype(np.float32)
    for kernel in (tf.BILINEAR, tf.NEAREST):
        params = tf.CwtParams(n=2, s_max=1.3, k=2, kernel=kernel)
        for t in range(5):
            trace = tf.cwt_sample(params, (16, 16), Rng(t))
            out = tf.cwt_forward(img, trace, params)
            assert out.min() >= -1e-6 and out.max() <= 1.0 + 1e-6


def test_trace_debug_text_lists_fields():
    trace = tf.cwt_sample(PAPER_PARAMS, (16, 16), Rng(0))
    text = tf.trace_debug_text(trace)
    assert "type=CwtTrace" in text
    assert "scales=" in text and "offsets=" in text
