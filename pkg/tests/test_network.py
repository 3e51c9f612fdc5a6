from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtn import DistParams, InvalidArgument, ResourceError, SpecialTensor, Tensor
from qtn.network import TensorNetwork, contract_tensors, decompose_tensor

from conftest import crandn, run


def _net(ctx, **tensors):
    net = TensorNetwork(ctx)
    for name, (arr, split) in tensors.items():
        net.add_tensor(Tensor.from_global(ctx, arr, split), name)
    return net


def test_matrix_vector(ctx):
    net = _net(ctx, A=(np.array([[0, 1], [1, 0]]), 0), v=(np.array([1, 0]), 0))
    net.add_bond("A", 1, "v", 0)
    out = net.contract("A", "v")
    assert out == "A" and set(net.tensors) == {"A"}
    assert np.array_equal(net.result("A"), [0, 1])


def test_contract_with_identity_changes_index_type(rng):
    arr = crandn((2, 3), rng)

    def program(ctx):
        net = _net(ctx, T=(arr, 0))
        nid = net.insert_identity("T", 0, distributed=True)
        net.contract("T", nid, "R")
        t = net.tensors["R"]
        return t.split, net.result("R", [("T", 0), ("T", 1)])

    for split, glob in run(2, program)[:1]:
        assert split == 1
        assert np.array_equal(glob, arr)


def test_three_index_contraction_against_loops(rng):
    a, b = crandn((2, 3), rng), crandn((2, 2, 2), rng)
    expect = np.zeros((3, 2, 2), complex)
    for j in range(3):
        for k in range(2):
            for m in range(2):
                for i in range(2):
                    expect[j, k, m] += a[i, j] * b[k, i, m]

    def program(ctx):
        return contract_tensors(Tensor.from_global(ctx, a), Tensor.from_global(ctx, b, 1), [(0, 1)]).to_global()

    got = run(2, program)[0]
    # B's distributed open index k comes first in the result
    np.testing.assert_allclose(np.transpose(got, (1, 0, 2)), expect, rtol=0, atol=1e-12)


def test_bond_validation(ctx):
    net = _net(ctx, A=(np.zeros((2, 2)), 0), B=(np.zeros((2, 2, 3)), 0))
    net.add_bond("A", 0, "B", 0)
    with pytest.raises(InvalidArgument, match="already carries"):
        net.add_bond("A", 0, "B", 1)
    with pytest.raises(InvalidArgument, match="dimensions"):
        net.add_bond("A", 1, "B", 2)
    with pytest.raises(InvalidArgument):
        net.add_bond("A", 1, "A", 0)


def test_mixed_type_bond_rejected():
    def program(ctx):
        net = _net(ctx, A=(np.zeros((2, 2)), 1), B=(np.zeros((2, 2)), 0))
        net.add_bond("A", 0, "B", 0)

    with pytest.raises(InvalidArgument, match="distributed and a local"):
        run(2, program)


def test_contract_result_too_large_for_world():
    def program(ctx):
        a = Tensor.from_global(ctx, np.ones((2, 2)), 1)
        b = Tensor.from_global(ctx, np.ones((2, 2)), 1)
        contract_tensors(a, b, [])

    with pytest.raises(ResourceError):
        run(2, program)


def test_decompose_product_state(ctx, rng):
    u, v = crandn(3, rng), crandn(4, rng)
    net = _net(ctx, T=(np.outer(u, v), 0))
    left, right = net.decompose("T", [0], [1], chi=1)
    assert net.tensors[left].dims == (3, 1) and net.tensors[right].dims == (1, 4)
    net.contract(left, right)
    np.testing.assert_allclose(net.result(left), np.outer(u, v), atol=1e-12)


def test_decompose_bell_pair(ctx):
    bell = np.array([[1, 0], [0, 1]]) / math.sqrt(2)
    _, _, s = decompose_tensor(Tensor.from_global(ctx, bell), [0], [1], 2)
    np.testing.assert_allclose(s, [1 / math.sqrt(2)] * 2, atol=1e-15)


@pytest.mark.parametrize("world", [1, 4])
@pytest.mark.parametrize("absorb", ["left", "right", "split"])
def test_decompose_random_reconstruction(world, absorb):
    arr = crandn((4, 4), np.random.default_rng(3))

    def program(ctx):
        t = Tensor.from_global(ctx, arr, 1 if world > 1 else 0)
        out = []
        for chi in (4, 2):
            left, right, s = decompose_tensor(t, [0], [1], chi, absorb=absorb)
            out.append((contract_tensors(left, right, [(left.ndim - 1, 0)]).to_global(), s))
        return out

    (full, s), (trunc, _) = run(world, program)[0]
    np.testing.assert_allclose(full, arr, rtol=0, atol=1e-10)
    err2 = np.linalg.norm(arr - trunc) ** 2
    assert abs(err2 - np.sum(s[2:] ** 2)) <= 1e-10


def test_decompose_chi_zero(ctx):
    with pytest.raises(InvalidArgument):
        decompose_tensor(Tensor.from_global(ctx, np.eye(2)), [0], [1], 0)


def test_decompose_distributed_bond():
    arr = crandn((2, 2, 3, 3), np.random.default_rng(8))

    def program(ctx):
        t = Tensor.from_global(ctx, arr, 2)
        left, right, _ = decompose_tensor(t, [0, 2], [1, 3], 6, bond="distributed")
        back = contract_tensors(left, right, [(1, 0)])
        return left.split, right.split, back.to_global()

    ls, rs, back = run(16, program)[0]
    assert (ls, rs) == (2, 2)
    np.testing.assert_allclose(back, arr, rtol=0, atol=1e-10)


def test_decompose_then_contract_restores_network_bonds(ctx, rng):
    arr, vec = crandn((2, 3, 4), rng), crandn(4, rng)
    net = _net(ctx, T=(arr, 0), w=(vec, 0))
    net.add_bond("T", 2, "w", 0)
    left, right = net.decompose("T", [0], [1, 2], chi=2)
    (bid,) = net.bonds_between(right, "w")
    assert net.bonds[bid].dim == 4
    net.contract(left, right, "T2")
    net.contract("T2", "w")
    np.testing.assert_allclose(net.result("T2"), arr @ vec, atol=1e-12)


def test_truncate_to_current_dim_is_noop(ctx, rng):
    net = _net(ctx, A=(crandn((2, 2), rng), 0), B=(crandn((2, 2), rng), 0))
    bid = net.add_bond("A", 1, "B", 0)
    before = {k: v.to_global().copy() for k, v in net.tensors.items()}
    net.truncate(bid, 2)
    assert all(np.array_equal(net.tensors[k].to_global(), v) for k, v in before.items())


def test_truncate_zero_mode(ctx):
    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    net = _net(ctx, A=(a, 0), B=(np.eye(2), 0))
    bid = net.add_bond("A", 1, "B", 0)
    net.truncate(bid, 1)
    assert net.bonds[bid].dim == 1
    net.contract("A", "B")
    np.testing.assert_allclose(net.result("A"), a, atol=1e-12)


@pytest.mark.parametrize("world", [1, 4])
def test_truncate_bell_bond(world):
    def program(ctx):
        split = 1 if world > 1 else 0
        net = _net(ctx, A=(np.eye(2) / math.sqrt(2), split), B=(np.eye(2), 0))
        bid = net.add_bond("A", 1, "B", 0)
        net.truncate(bid, 1)
        net.contract("A", "B")
        out = net.result("A")
        return None if out is None else float(np.sum(np.abs(out) ** 2))

    assert abs(run(world, program)[0] - 0.5) <= 1e-12


def test_truncate_pads_with_zeros(ctx, rng):
    a, b = crandn((3, 2), rng), crandn((2, 3), rng)
    net = _net(ctx, A=(a, 0), B=(b, 0))
    bid = net.add_bond("A", 1, "B", 0)
    net.truncate(bid, 4)
    assert net.tensors["A"].dims == (3, 4)
    net.contract("A", "B")
    np.testing.assert_allclose(net.result("A"), a @ b, atol=1e-12)


def test_contract_order_two_tensors(ctx, rng):
    a, b = crandn((2, 3), rng), crandn((3,), rng)
    net = _net(ctx, A=(a, 0), B=(b, 0))
    net.add_bond("A", 1, "B", 0)
    assert net.contract_order([("A", "B")]) == "A"
    np.testing.assert_allclose(net.result("A"), a @ b, atol=1e-14)


def test_contract_order_consumed_id(ctx, rng):
    net = _net(ctx, A=(crandn((2,), rng), 0), B=(crandn((2,), rng), 0), C=(crandn((2,), rng), 0))
    with pytest.raises(InvalidArgument, match="consumed"):
        net.contract_order([("A", "B"), ("B", "C")])


RING = [crandn((2, 2, 2), np.random.default_rng(40 + i)) for i in range(4)]
RING_ORACLE = np.einsum("aij,bjk,ckl,dli->abcd", *RING)


def _ring(ctx):
    """Four tensors (open_d; left_l, right_l) bonded in a ring."""
    net = TensorNetwork(ctx)
    for i, arr in enumerate(RING):
        net.add_tensor(Tensor.from_global(ctx, arr, 1), i)
    for i in range(4):
        net.add_bond(i, 2, (i + 1) % 4, 1)
    return net


@st.composite
def elimination_orders(draw):
    alive, order = [0, 1, 2, 3], []
    while len(alive) > 1:
        a, b = draw(st.permutations(alive))[:2]
        order.append((a, b))
        alive.remove(b)
    return order


@settings(max_examples=12, deadline=None)
@given(elimination_orders())
def test_any_order_matches_brute_force(order):
    def program(ctx):
        net = _ring(ctx)
        last = net.contract_order(order)
        return net.result(last, [(i, 0) for i in range(4)])

    out = run(16, program)[0]
    np.testing.assert_allclose(out, RING_ORACLE, rtol=0, atol=1e-10)


@st.composite
def contraction_cases(draw):
    """Two random tensors sharing 1-2 bonds, with random index types and spans."""
    k = draw(st.integers(1, 2))
    bond_dims = draw(st.lists(st.integers(1, 3), min_size=k, max_size=k))
    bond_dist = draw(st.lists(st.booleans(), min_size=k, max_size=k))
    a_open = draw(st.lists(st.tuples(st.integers(1, 3), st.booleans()), max_size=2))
    b_open = draw(st.lists(st.tuples(st.integers(1, 3), st.booleans()), max_size=2))
    a_idx = [(d, f, ("bond", i)) for i, (d, f) in enumerate(zip(bond_dims, bond_dist))] + [
        (d, f, ("a", i)) for i, (d, f) in enumerate(a_open)]
    b_idx = [(d, f, ("bond", i)) for i, (d, f) in enumerate(zip(bond_dims, bond_dist))] + [
        (d, f, ("b", i)) for i, (d, f) in enumerate(b_open)]
    a_idx = draw(st.permutations(a_idx))
    b_idx = draw(st.permutations(b_idx))
    # distributed indices must lead the tuple
    a_idx = [x for x in a_idx if x[1]] + [x for x in a_idx if not x[1]]
    b_idx = [x for x in b_idx if x[1]] + [x for x in b_idx if not x[1]]
    seed = draw(st.integers(0, 2**16))
    return a_idx, b_idx, seed


@settings(max_examples=30, deadline=None)
@given(contraction_cases())
def test_distributed_contraction_matches_single_rank(case):
    a_idx, b_idx, seed = case
    rng = np.random.default_rng(seed)
    a = crandn(tuple(d for d, _, _ in a_idx), rng)
    b = crandn(tuple(d for d, _, _ in b_idx), rng)
    sa, sb = sum(f for _, f, _ in a_idx), sum(f for _, f, _ in b_idx)
    pairs = [(i, next(j for j, y in enumerate(b_idx) if y[2] == x[2])) for i, x in enumerate(a_idx) if x[2][0] == "bond"]
    n_a = math.prod(d for d, f, _ in a_idx if f)
    n_b = math.prod(d for d, f, _ in b_idx if f)
    n_out = math.prod(d for d, f, lab in a_idx + b_idx if f and lab[0] != "bond")
    if max(n_a, n_b, n_out) > 16:
        return
    ref = np.tensordot(a, b, axes=([i for i, _ in pairs], [j for _, j in pairs]))

    def program(ctx):
        return contract_tensors(Tensor.from_global(ctx, a, sa), Tensor.from_global(ctx, b, sb), pairs).to_global()

    got = run(16, program)[0]
    # reorder the reference into the typed result order
    a_open = [i for i in range(len(a_idx)) if i not in [p for p, _ in pairs]]
    b_open = [j for j in range(len(b_idx)) if j not in [q for _, q in pairs]]
    natural = [("a", i) for i in a_open] + [("b", j) for j in b_open]
    flag = {("a", i): a_idx[i][1] for i in a_open} | {("b", j): b_idx[j][1] for j in b_open}
    order = [k for k, x in enumerate(natural) if flag[x]] + [k for k, x in enumerate(natural) if not flag[x]]
    np.testing.assert_allclose(got, np.transpose(ref, order), rtol=0, atol=1e-12)


def test_broadcast_copies_contract_once():
    a, b = crandn((2, 2), np.random.default_rng(1)), crandn((2, 2), np.random.default_rng(2))

    def program(ctx):
        ta = Tensor.from_global(ctx, a, 1, DistParams(1, 2, 0))
        tb = Tensor.from_global(ctx, b, 0, DistParams(1, 1, 0))
        c = contract_tensors(ta, tb, [(1, 0)])
        return c.dist, c.to_global()

    out = run(4, program)
    assert out[0][0] == DistParams(1, 2, 0)
    for rank in range(4):
        np.testing.assert_allclose(out[rank][1], a @ b, atol=1e-12)


def test_special_identity_contraction_preserves_values(ctx, rng):
    arr = crandn((2, 3), rng)
    ident = SpecialTensor.identity(ctx, [3])
    out = contract_tensors(Tensor.from_global(ctx, arr), ident, [(1, 0)])
    np.testing.assert_allclose(out.to_global(), arr, atol=0)
