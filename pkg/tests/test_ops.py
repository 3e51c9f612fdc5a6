from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtn import DistParams, InvalidArgument, ResourceError, Tensor, gather_index, permute, rebcast, scatter_index
from qtn.ops import reshape

from conftest import crandn, run

WORLD = 16


@st.composite
def shapes(draw, max_rank=6):
    """Dims, split and a random array whose distributed size fits the world."""
    rank = draw(st.integers(1, max_rank))
    dims = tuple(draw(st.lists(st.integers(1, 3), min_size=rank, max_size=rank)))
    splits = [s for s in range(rank + 1) if math.prod(dims[:s]) <= WORLD]
    split = draw(st.sampled_from(splits))
    seed = draw(st.integers(0, 2**16))
    return dims, split, seed


def _perm_and_split(draw, dims):
    perm = draw(st.permutations(range(len(dims))))
    new_dims = [dims[p] for p in perm]
    splits = [s for s in range(len(dims) + 1) if math.prod(new_dims[:s]) <= WORLD]
    return list(perm), draw(st.sampled_from(splits))


def test_identity_permutation_keeps_blocks(rng):
    arr = crandn((2, 2, 4, 2), rng)

    def program(ctx):
        t = Tensor.from_global(ctx, arr, 1)
        p = permute(t, [0, 1, 2, 3])
        return t.local is None or np.array_equal(p.local, t.local), p.to_global()

    for same, glob in run(2, program):
        assert same and np.array_equal(glob, arr)


def test_asymmetric_permutation_needs_more_ranks(rng):
    arr = crandn((2, 2, 4, 2), rng)

    def program(ctx):
        t = Tensor.from_global(ctx, arr, 1)
        p = permute(t, [2, 0, 1, 3], new_split=1)
        return p.dims, p.split, p.to_global()

    out = run(4, program)
    assert out[0][:2] == ((4, 2, 2, 2), 1)
    assert all(np.array_equal(g, arr.transpose(2, 0, 1, 3)) for _, _, g in out)
    with pytest.raises(ResourceError) as info:
        run(2, program)
    assert info.value.required == 4


def test_transpose_2x2(ctx):
    t = Tensor.from_global(ctx, np.array([[1, 2], [3, 4]]))
    assert np.array_equal(permute(t, [1, 0]).to_global(), [[1, 3], [2, 4]])


def test_bad_permutation(ctx):
    with pytest.raises(InvalidArgument):
        permute(Tensor.from_global(ctx, np.zeros((2, 2))), [0, 0])


@pytest.mark.parametrize(
    "new,locals_",
    [
        (DistParams(2, 1, 0), {0: 0, 1: 0, 2: 1, 3: 1}),
        (DistParams(1, 2, 0), {0: 0, 1: 1, 2: 0, 3: 1}),
    ],
)
def test_rebcast_patterns(new, locals_):
    arr = np.arange(4).reshape(2, 2) + 0j

    def program(ctx):
        t = rebcast(Tensor.from_global(ctx, arr, 1), new)
        return t.dist, t.local, t.to_global()

    for rank, (dist, local, glob) in enumerate(run(4, program)):
        assert dist == new
        assert np.array_equal(local, arr[locals_[rank]])
        assert np.array_equal(glob, arr)


def test_rebcast_to_same_dist_is_noop(ctx, rng):
    arr = crandn((3, 2), rng)
    t = Tensor.from_global(ctx, arr)
    assert np.array_equal(rebcast(t, t.dist).to_global(), arr)


def test_rebcast_beyond_world():
    def program(ctx):
        rebcast(Tensor.from_global(ctx, np.zeros((2, 2)), 1), DistParams(2, 1, 1))

    with pytest.raises(ResourceError):
        run(4, program)


def test_scatter_gather_examples(rng):
    arr = crandn((2, 2), rng)

    def program(ctx):
        t = Tensor.from_global(ctx, arr, 0)
        s = scatter_index(t, 0)
        g = gather_index(s, 0)
        return (s.dims, s.split), (g.dims, g.split), s.to_global(), g.to_global()

    out = run(2, program)
    for s_shape, g_shape, s_glob, _ in out:
        assert s_shape == ((2, 2), 1)
        assert g_shape == ((2, 2), 0)
        assert np.array_equal(s_glob, arr)
    # the gathered tensor has distributed size 1, so only rank 0 still holds it
    assert np.array_equal(out[0][3], arr) and out[1][3] is None


def test_scatter_exceeding_world():
    def program(ctx):
        scatter_index(Tensor.from_global(ctx, np.zeros((4, 2)), 0), 0)

    with pytest.raises(ResourceError):
        run(2, program)


def test_reshape_merges_local_indices(ctx, rng):
    arr = crandn((2, 3, 2), rng)
    t = reshape(Tensor.from_global(ctx, arr), (6, 2), 0)
    assert np.array_equal(t.to_global(), arr.reshape(6, 2))
    with pytest.raises(InvalidArgument):
        reshape(Tensor.from_global(ctx, arr), (6, 2), 1)


@settings(max_examples=30, deadline=None)
@given(shapes(), st.data())
def test_permute_round_trip(shape, data):
    dims, split, seed = shape
    perm, new_split = _perm_and_split(data.draw, dims)
    inv = list(np.argsort(perm))
    arr = crandn(dims, np.random.default_rng(seed))

    def program(ctx):
        t = Tensor.from_global(ctx, arr, split)
        p = permute(t, perm, new_split)
        back = permute(p, inv, split)
        return p.to_global(), back.to_global()

    p_glob, back = run(WORLD, program)[0]
    np.testing.assert_allclose(p_glob, np.transpose(arr, perm), rtol=0, atol=1e-12)
    np.testing.assert_allclose(back, arr, rtol=0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(shapes(max_rank=4), st.data())
def test_permute_composition(shape, data):
    dims, split, seed = shape
    q = list(data.draw(st.permutations(range(len(dims)))))
    p = list(data.draw(st.permutations(range(len(dims)))))
    arr = crandn(dims, np.random.default_rng(seed))
    composed = [q[i] for i in p]

    def program(ctx):
        t = Tensor.from_global(ctx, arr, split)
        nested = permute(permute(t, q, 0), p, 0)
        direct = permute(t, composed, 0)
        return nested.to_global(), direct.to_global()

    nested, direct = run(WORLD, program)[0]
    np.testing.assert_array_equal(nested, direct)


@settings(max_examples=25, deadline=None)
@given(shapes(), st.integers(1, 2), st.integers(1, 2), st.integers(0, 3))
def test_rebcast_preserves_values(shape, stretch, cycles, offset):
    dims, split, seed = shape
    n_d = math.prod(dims[:split])
    new = DistParams(stretch, cycles, offset)
    if offset + new.span(n_d) > WORLD:
        return
    arr = crandn(dims, np.random.default_rng(seed))

    def program(ctx):
        t = rebcast(Tensor.from_global(ctx, arr, split), new)
        return ctx.rank in t.span_ranks, t.to_global()

    for inside, glob in run(WORLD, program):
        if inside:
            np.testing.assert_allclose(glob, arr, rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(shapes(), st.data())
def test_scatter_gather_inverse(shape, data):
    dims, split, seed = shape
    if split == len(dims) or math.prod(dims[: split + 1]) > WORLD:
        return
    pos = data.draw(st.integers(0, len(dims) - split - 1))
    if math.prod(dims[:split]) * dims[split + pos] > WORLD:
        return
    arr = crandn(dims, np.random.default_rng(seed))

    def program(ctx):
        t = Tensor.from_global(ctx, arr, split)
        s = scatter_index(t, pos)
        g = gather_index(s, split)
        back = permute(g, list(np.argsort(_scatter_gather_perm(len(dims), split, pos))), split)
        return back.to_global()

    np.testing.assert_allclose(run(WORLD, program)[0], arr, rtol=0, atol=1e-12)


def _scatter_gather_perm(rank, split, pos):
    """Index order produced by scatter(pos) followed by gather(last distributed)."""
    moved = split + pos
    after_scatter = list(range(split)) + [moved] + [i for i in range(split, rank) if i != moved]
    return after_scatter[:split] + [after_scatter[split]] + after_scatter[split + 1:]
