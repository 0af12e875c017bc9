"""Guided feature modulation: kernel structure, topologies, locality."""

import numpy as np
import pytest

from metadet.errors import ConfigError
from metadet.modulation import (TOPOLOGIES, FeatureModulator,
                                build_spatial_kernels, kernel_tree_sum,
                                modulator_param_count, spatial_response)
from metadet.nn import Tensor, ops
from metadet.nn.rng import RngStream


# -- generated kernel structure ---------------------------------------------------

def test_spatial_kernels_cross_structure():
    sm = Tensor(np.arange(1.0, 17.0).reshape(2, 8))
    k1, k2 = build_spatial_kernels(sm)
    assert k1.shape == (2, 1, 3, 3) and k2.shape == (2, 1, 3, 3)
    k = k1.data[0, 0]
    assert k[0, 1] == 1.0 and k[1, 0] == 2.0 and k[1, 2] == 3.0 and k[2, 1] == 4.0
    assert k[1, 1] == -((1.0 + 2.0) + (3.0 + 4.0))
    k = k2.data[1, 0]
    assert k[0, 1] == 13.0 and k[2, 1] == 16.0


def test_spatial_kernels_corners_exactly_zero():
    for seed in range(10):
        sm = Tensor(RngStream(seed).normal((4, 8)))
        for k in build_spatial_kernels(sm):
            corners = k.data[:, :, [0, 0, 2, 2], [0, 2, 0, 2]]
            assert np.all(corners == 0.0)


def test_spatial_kernels_sum_exactly_zero_any_params():
    """The zero-sum invariant must hold bit-for-bit for arbitrary tap values,
    including extreme magnitudes, in both precisions."""
    for seed in range(20):
        rng = RngStream(seed)
        scale = 10.0 ** float(rng.integers(-6, 7))
        for dtype in (np.float32, np.float64):
            sm = Tensor((rng.normal((8, 8)) * scale).astype(dtype))
            for k in build_spatial_kernels(sm):
                assert np.all(kernel_tree_sum(k.data) == 0.0)


def test_spatial_kernels_tap_count_checked():
    with pytest.raises(ConfigError):
        build_spatial_kernels(Tensor(np.zeros((2, 7))))


def test_spatial_response_grouped_equals_loop():
    """Folding the batch into a grouped conv must match per-sample convs
    bitwise; this is what makes per-sample kernels batch-safe."""
    rng = RngStream(21)
    x = Tensor(rng.normal((4, 6, 10, 10), dtype=np.float32))
    sm = Tensor(rng.normal((4, 8), dtype=np.float32))
    k1, k2 = build_spatial_kernels(sm)
    full = spatial_response(x, k1, k2).data
    for b in range(4):
        xb = Tensor(x.data[b:b + 1])
        k1b, k2b = Tensor(k1.data[b:b + 1]), Tensor(k2.data[b:b + 1])
        rb = spatial_response(xb, k1b, k2b).data
        assert np.array_equal(full[b], rb[0])


# -- modulator ---------------------------------------------------------------------

def make_mod(c=8, d_a=16, seed=0, **kw):
    return FeatureModulator(c, d_a, RngStream(seed), **kw)


def test_forward_shapes_all_topologies():
    rng = RngStream(22)
    x = Tensor(rng.normal((3, 8, 9, 9)))
    a = Tensor(rng.normal((3, 16)))
    for topo in TOPOLOGIES:
        mod = make_mod(topology=topo)
        out = mod.forward(x, a)
        assert out.shape == x.shape
        assert np.all(np.isfinite(out.data))


def test_single_branch_topologies_have_one_cascade():
    mc = make_mod(topology="channel_only")
    ms = make_mod(topology="spatial_only")
    assert not hasattr(mc, "cascade_s") and not hasattr(mc, "cascade")
    assert not hasattr(ms, "cascade_c") and not hasattr(ms, "cascade")


def test_unknown_topology_rejected():
    with pytest.raises(ConfigError):
        make_mod(topology="diagonal")


def test_neutral_parameters_triple_the_input():
    """With the expansion zeroed, gains and taps are all zero: the channel
    gate sits at one half, the spatial gate at one half, and the parallel
    sum collapses to 3x."""
    mod = make_mod(c=4, d_a=8)
    mod.cascade.expand.w.data[:] = 0.0
    mod.cascade.expand.b.data[:] = 0.0
    rng = RngStream(23)
    x = Tensor(rng.normal((2, 4, 6, 6)))
    a = Tensor(rng.normal((2, 8)))
    out = mod.forward(x, a)
    np.testing.assert_allclose(out.data, 3.0 * x.data, rtol=1e-14, atol=1e-14)


def test_param_count_closed_form_all_variants():
    for topo in TOPOLOGIES:
        for share in (True, False):
            mod = make_mod(c=16, d_a=12, topology=topo, share_cascade=share)
            want = modulator_param_count(16, 12, share_cascade=share, topology=topo)
            assert mod.num_parameters() == want, (topo, share)


def test_shared_cascade_is_smaller():
    shared = modulator_param_count(32, 16, share_cascade=True)
    split = modulator_param_count(32, 16, share_cascade=False)
    assert shared < split


def test_guidance_changes_output():
    mod = make_mod(seed=3)
    rng = RngStream(24)
    x = Tensor(rng.normal((2, 8, 7, 7)))
    a1 = Tensor(rng.normal((2, 16)))
    a2 = Tensor(rng.normal((2, 16)))
    o1 = mod.forward(x, a1).data
    o2 = mod.forward(x, a2).data
    assert not np.array_equal(o1, o2)


def test_per_sample_locality_inputs_and_guidance():
    """Perturbing one sample's features or guidance leaves every other
    sample's output bitwise untouched."""
    mod = make_mod(seed=4)
    rng = RngStream(25)
    x = rng.normal((4, 8, 8, 8))
    a = rng.normal((4, 16))
    base = mod.forward(Tensor(x), Tensor(a)).data
    xj = x.copy()
    xj[1] *= 1.3
    out = mod.forward(Tensor(xj), Tensor(a)).data
    for b in (0, 2, 3):
        assert np.array_equal(out[b], base[b])
    aj = a.copy()
    aj[3] += 1.0
    out = mod.forward(Tensor(x), Tensor(aj)).data
    for b in (0, 1, 2):
        assert np.array_equal(out[b], base[b])
    assert not np.array_equal(out[3], base[3])


def test_modulator_gradients():
    from metadet.nn.gradcheck import grad_check
    mod = make_mod(c=4, d_a=6, seed=5)
    rng = RngStream(26)
    x = Tensor(rng.normal((2, 4, 5, 5)))
    a = Tensor(rng.normal((2, 6)))

    def f():
        return ops.sum_all(ops.sigmoid(mod.forward(x, a)))

    rep = grad_check(f, mod.parameters(), step=1e-6, tol=2e-6, max_entries=40)
    assert rep["ok"], rep


def test_sequential_topologies_differ_from_parallel():
    rng = RngStream(27)
    x = Tensor(rng.normal((2, 8, 6, 6)))
    a = Tensor(rng.normal((2, 16)))
    outs = {}
    for topo in ("parallel", "channel_then_spatial", "spatial_then_channel"):
        outs[topo] = make_mod(seed=6, topology=topo, share_cascade=False).forward(x, a).data
    assert not np.array_equal(outs["parallel"], outs["channel_then_spatial"])
    assert not np.array_equal(outs["channel_then_spatial"], outs["spatial_then_channel"])
