from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtn import InvalidArgument, NumericalError, Tensor
from qtn.linalg import (
    BlockCyclicMatrix,
    grid_shape,
    matrix_to_tensor,
    pgemm,
    psvd,
    svd_local,
    tensor_to_matrix,
    truncate_svd,
)

from conftest import crandn, run


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("p,expected", [(1, (1, 1)), (4, (2, 2)), (6, (2, 3)), (7, (1, 7)), (16, (4, 4))])
def test_grid_shape(p, expected):
    assert grid_shape(p) == expected


def test_block_cyclic_tile_owner():
    a = np.arange(36).reshape(6, 6) + 0j

    def program(ctx):
        m = BlockCyclicMatrix.from_global(ctx, a, range(4), blocks=(2, 1))
        rows = m.layout.local_rows(ctx.rank)
        cols = m.layout.local_cols(ctx.rank)
        return m.layout.coords(ctx.rank), rows.tolist(), cols.tolist(), m.to_global()

    for pr_pc, rows, cols, glob in run(4, program):
        pr, pc = pr_pc
        assert all((r // 2) % 2 == pr for r in rows)
        assert all(c % 2 == pc for c in cols)
        assert np.array_equal(glob, a)


def test_tensor_to_matrix_examples(ctx, rng):
    t = crandn((2, 3), rng)
    m = tensor_to_matrix(Tensor.from_global(ctx, t), [0], [1])
    assert np.array_equal(m.to_global(), t)

    t3 = crandn((2, 2, 2), rng)

    def program(c):
        mat = tensor_to_matrix(Tensor.from_global(c, t3, 1), [0, 1], [2])
        back = matrix_to_tensor(mat, (2, 2), (2,), split=1)
        return mat.to_global(), back.to_global()

    for mat, back in run(2, program):
        assert mat.shape == (4, 2)
        for i, j, k in np.ndindex(2, 2, 2):
            assert mat[i * 2 + j, k] == t3[i, j, k]
        assert np.array_equal(back, t3)


def test_tensor_to_matrix_partition_errors(ctx):
    t = Tensor.from_global(ctx, np.zeros((2, 2, 2)))
    with pytest.raises(InvalidArgument):
        tensor_to_matrix(t, [0, 1], [1, 2])
    with pytest.raises(InvalidArgument):
        tensor_to_matrix(t, [0], [2])


def test_matrix_tensor_round_trip_permuted(rng):
    arr = crandn((2, 3, 2, 2), rng)

    def program(ctx):
        t = Tensor.from_global(ctx, arr, 2)
        m = tensor_to_matrix(t, [3, 1], [0, 2], members=range(4))
        natural = np.transpose(arr, (3, 1, 0, 2))
        back = matrix_to_tensor(m, (2, 3), (2, 2), order=[2, 1, 3, 0], split=2)
        return m.to_global(), natural.reshape(6, 4), back.to_global()

    mat, expect, back = run(6, program)[0]
    assert np.array_equal(mat, expect)
    assert np.array_equal(back, arr)


def _pgemm_program(ctx, a, b, p):
    ma = BlockCyclicMatrix.from_global(ctx, a, range(p))
    mb = BlockCyclicMatrix.from_global(ctx, b, range(p))
    return pgemm(ma, mb).to_global()


def test_pgemm_examples(rng):
    a = crandn((4, 4), rng)
    assert np.allclose(run(4, _pgemm_program, a, np.eye(4), 4)[0], a, rtol=0, atol=1e-14)
    x, y = 2 - 1j, 0.5j
    out = run(2, _pgemm_program, np.array([[0, 1], [1, 0]]), np.array([[x], [y]]), 2)[0]
    assert np.array_equal(out, [[y], [x]])


def test_pgemm_random_2x2_grid(rng):
    a, b = crandn((8, 6), rng), crandn((6, 4), rng)
    out = run(4, _pgemm_program, a, b, 4)[0]
    assert _rel(out, a @ b) <= 1e-12


def test_pgemm_dimension_mismatch(rng):
    with pytest.raises(InvalidArgument):
        run(1, _pgemm_program, crandn((2, 3), rng), crandn((2, 3), rng), 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 9), st.sampled_from([1, 2, 3, 4, 6]),
       st.integers(1, 3), st.integers(0, 2**16))
def test_pgemm_matches_reference(m, k, n, p, kb, seed):
    rng = np.random.default_rng(seed)
    a, b = crandn((m, k), rng), crandn((k, n), rng)

    def program(ctx):
        grid = grid_shape(p)
        ma = BlockCyclicMatrix.from_global(ctx, a, range(p), blocks=(max(1, -(-m // grid[0])), kb))
        mb = BlockCyclicMatrix.from_global(ctx, b, range(p), blocks=(kb + 1, max(1, -(-n // grid[1]))))
        return pgemm(ma, mb).to_global()

    assert _rel(run(p, program)[0], a @ b) <= 1e-12


def _psvd_program(ctx, a, p):
    u, s, vh = psvd(BlockCyclicMatrix.from_global(ctx, a, range(p)))
    return u.to_global(), s, vh.to_global()


def test_psvd_diagonal():
    u, s, vh = run(4, _psvd_program, np.diag([3.0, 2.0, 1.0]), 4)[0]
    np.testing.assert_allclose(s, [3, 2, 1], atol=1e-14)
    np.testing.assert_allclose(np.abs(u), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(np.abs(vh), np.eye(3), atol=1e-14)


def test_psvd_rank_one(rng):
    u, v = crandn(5, rng), crandn(4, rng)
    _, s, _ = run(4, _psvd_program, np.outer(u, v.conj()), 4)[0]
    assert abs(s[0] - np.linalg.norm(u) * np.linalg.norm(v)) <= 1e-12 * s[0]
    assert np.all(s[1:] <= 1e-12 * s[0])


@pytest.mark.parametrize("p", [1, 4, 6])
def test_psvd_reconstruction_and_orthonormality(rng, p):
    a = crandn((8, 8), rng)
    u, s, vh = run(p, _psvd_program, a, p)[0]
    assert _rel(u @ np.diag(s) @ vh, a) < 1e-12
    np.testing.assert_allclose(u.conj().T @ u, np.eye(8), atol=1e-12)
    np.testing.assert_allclose(vh @ vh.conj().T, np.eye(8), atol=1e-12)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**16))
def test_psvd_grid_invariant_singular_values(m, n, seed):
    a = crandn((m, n), np.random.default_rng(seed))
    ref = run(1, _psvd_program, a, 1)[0][1]
    for p in (2, 4, 6):
        _, s, _ = run(p, _psvd_program, a, p)[0]
        np.testing.assert_allclose(s, ref, rtol=0, atol=1e-10 * max(ref[0], 1))


def test_psvd_non_finite_is_numerical_error():
    a = np.ones((3, 3))
    a[1, 1] = np.nan
    with pytest.raises(NumericalError):
        run(4, _psvd_program, a, 4)
    with pytest.raises(NumericalError):
        svd_local(a)


def test_truncate_svd_examples():
    u, s, vh = np.eye(3), np.array([3.0, 2.0, 1.0]), np.eye(3)
    u2, s2, vh2 = truncate_svd(u, s, vh, 2)
    assert s2.tolist() == [3, 2] and u2.shape == (3, 2) and vh2.shape == (2, 3)
    u4, s4, vh4 = truncate_svd(np.ones((2, 1)), np.array([3.0]), np.ones((1, 5)), 4)
    assert s4.tolist() == [3, 0, 0, 0]
    assert u4.shape == (2, 4) and not u4[:, 1:].any()
    assert vh4.shape == (4, 5) and not vh4[1:].any()
    same = truncate_svd(u, s, vh, 3)
    assert all(np.array_equal(x, y) for x, y in zip(same, (u, s, vh)))
    with pytest.raises(InvalidArgument):
        truncate_svd(u, s, vh, 0)


@pytest.mark.parametrize("p", [1, 4])
def test_discarded_weight_identity(rng, p):
    a = crandn((6, 5), rng)

    def program(ctx):
        u, s, vh = psvd(BlockCyclicMatrix.from_global(ctx, a, range(p)))
        ut, st_, vht = truncate_svd(u, s, vh, 2)
        return pgemm(ut.scale_columns(st_), vht).to_global(), s

    approx, s = run(p, program)[0]
    err2 = np.linalg.norm(a - approx) ** 2
    assert abs(err2 - np.sum(s[2:] ** 2)) <= 1e-10 * np.sum(s**2)
