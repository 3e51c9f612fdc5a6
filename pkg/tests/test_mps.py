from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn, dense_apply, random_state, run
from qtn import DegenerateStateError, InvalidArgument, PreconditionError, ResourceError, local_context
from qtn.circuits import build_fsim_mpo, build_qft_mpo_layer, gate_matrix
from qtn.mps import (
    Mpo,
    apply_mpo,
    apply_raw_gate,
    canonicalize,
    effective_bond_dims,
    load_mps,
    mps_bitstring,
    mps_from_statevector,
    mps_random,
    mps_to_statevector,
    norm2,
    overlap,
    renormalise,
    sample,
    save_mps,
)

H = gate_matrix("H").matrix
CNOT = np.eye(4, dtype=complex)[[0, 1, 3, 2]]


def bell(ctx, chi_d=1, chi_l=2):
    m = mps_bitstring(ctx, [0, 0], chi_d, chi_l)
    apply_raw_gate(m, [0], H)
    return apply_raw_gate(m, [0, 1], CNOT)


# -- construction ---------------------------------------------------------------------


def test_bitstring_zero(ctx):
    psi = mps_to_statevector(mps_bitstring(ctx, [0, 0, 0]))
    np.testing.assert_allclose(psi, np.eye(8)[0])


def test_bitstring_index_and_norm(ctx):
    m = mps_bitstring(ctx, [1, 0])
    psi = mps_to_statevector(m)
    assert np.argmax(np.abs(psi)) == 2
    assert norm2(m) == pytest.approx(1.0)


def test_bitstring_rejects_bad_values(ctx):
    with pytest.raises(InvalidArgument):
        mps_bitstring(ctx, [0, 2])
    with pytest.raises(InvalidArgument):
        mps_bitstring(ctx, [])


def test_random_chi1_is_product(ctx):
    m = mps_random(ctx, 6, 1, seed=3)
    assert effective_bond_dims(m) == [1] * 5
    assert norm2(m) == pytest.approx(1.0, abs=1e-12)


def test_random_deterministic_and_normalised(ctx):
    a = mps_to_statevector(mps_random(ctx, 6, 4, 1, 4, seed=11))
    b = mps_to_statevector(mps_random(ctx, 6, 4, 1, 8, seed=11))
    np.testing.assert_allclose(a, b, atol=1e-14)
    assert np.vdot(a, a).real == pytest.approx(1.0, abs=1e-12)


def test_random_chi_exceeding_capacity(ctx):
    with pytest.raises(InvalidArgument):
        mps_random(ctx, 4, 8, 1, 4)


def test_distributed_chi_needs_ranks(ctx):
    with pytest.raises(ResourceError) as exc:
        mps_bitstring(ctx, [0, 0], chi_d=2, chi_l=1)
    assert exc.value.required == 4


def test_statevector_round_trip(ctx, rng):
    psi = random_state(4, rng)
    m = mps_from_statevector(ctx, psi, 1, 4)
    np.testing.assert_allclose(mps_to_statevector(m), psi, atol=1e-12)


def test_statevector_guard(ctx):
    with pytest.raises(ResourceError):
        mps_to_statevector(mps_bitstring(ctx, [0] * 27))


# -- canonical form -------------------------------------------------------------------


def _left_identity(core):
    dl, d, dr = core.shape
    mat = core.reshape(dl * d, dr)
    return mat.conj().T @ mat


def _right_identity(core):
    dl, d, dr = core.shape
    mat = core.reshape(dl, d * dr)
    return mat @ mat.conj().T


@pytest.mark.parametrize("centre", [0, 3, 6])
def test_canonical_identities(ctx, centre):
    m = mps_random(ctx, 7, 4, 1, 4, seed=5)
    before = m.copy()
    canonicalize(m, centre)
    for i, core in enumerate(m.cores):
        if i < centre:
            np.testing.assert_allclose(_left_identity(core), np.eye(core.shape[2]), atol=1e-10)
        elif i > centre:
            np.testing.assert_allclose(_right_identity(core), np.eye(core.shape[0]), atol=1e-10)
    assert overlap(before, m) == pytest.approx(1.0, abs=1e-10)


def test_canonicalize_idempotent(ctx):
    m = mps_random(ctx, 6, 4, 1, 4, seed=2)
    canonicalize(m, 2)
    once = [c.copy() for c in m.cores]
    canonicalize(m, 2)
    for a, b in zip(once, m.cores):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_canonicalize_bad_centre(ctx):
    with pytest.raises(InvalidArgument):
        canonicalize(mps_bitstring(ctx, [0, 0]), 2)


# -- gates ----------------------------------------------------------------------------


def test_identity_gate(ctx):
    m = mps_random(ctx, 5, 4, 1, 4, seed=8)
    before = mps_to_statevector(m)
    apply_raw_gate(m, [1, 2], np.eye(4))
    np.testing.assert_allclose(mps_to_statevector(m), before, atol=1e-12)


def test_hadamard_on_first_site(ctx):
    n = 4
    m = apply_raw_gate(mps_bitstring(ctx, [0] * n), [0], H)
    psi = mps_to_statevector(m)
    assert sorted(np.flatnonzero(np.abs(psi) > 1e-12).tolist()) == [0, 2 ** (n - 1)]
    np.testing.assert_allclose(psi[[0, 2 ** (n - 1)]], [2**-0.5, 2**-0.5])


def test_bell_matches_dense(ctx):
    psi = mps_to_statevector(bell(ctx))
    ref = dense_apply(dense_apply(np.eye(4)[0].astype(complex), 2, [0], H), 2, [0, 1], CNOT)
    np.testing.assert_allclose(psi, ref, atol=1e-12)


def test_gate_dimension_mismatch(ctx):
    m = mps_bitstring(ctx, [0, 0, 0])
    with pytest.raises(InvalidArgument):
        apply_raw_gate(m, [0, 1], np.eye(2))
    with pytest.raises(InvalidArgument):
        apply_raw_gate(m, [2, 1], np.eye(4))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.integers(0, 5), gap=st.integers(1, 3))
def test_random_nonlocal_gate_matches_dense(seed, a, gap):
    n = 6
    b = min(a + gap, n - 1)
    if a == b:
        a -= 1
    rng = np.random.default_rng(seed)
    ctx = local_context()
    m = mps_random(ctx, n, 4, 1, 8, seed=seed)
    psi = mps_to_statevector(m)
    gate = crandn((4, 4), rng)
    apply_raw_gate(m, [a, b], gate)
    np.testing.assert_allclose(mps_to_statevector(m), dense_apply(psi, n, [a, b], gate), atol=1e-9)


# -- MPOs -----------------------------------------------------------------------------


def test_identity_mpo(ctx):
    m = mps_random(ctx, 5, 4, 1, 4, seed=4)
    before = mps_to_statevector(m)
    apply_mpo(m, Mpo.identity(1, 3))
    np.testing.assert_allclose(mps_to_statevector(m), before, atol=1e-12)


def test_fsim_phase_on_11(ctx):
    m = apply_mpo(mps_bitstring(ctx, [1, 1], 1, 4), build_fsim_mpo(0, 0))
    psi = mps_to_statevector(m)
    np.testing.assert_allclose(psi, [0, 0, 0, np.exp(-1j * np.pi / 6)], atol=1e-12)


def test_qft_layer_matches_dense(ctx, rng):
    n = 6
    m = mps_random(ctx, n, 8, 1, 16, seed=21)
    psi = mps_to_statevector(m)
    layer = build_qft_mpo_layer(1, n)
    apply_mpo(m, layer)
    ref = dense_apply(psi, n, list(layer.sites), layer.to_matrix())
    np.testing.assert_allclose(mps_to_statevector(m), ref, atol=1e-9)


def test_mpo_truncation_reduces_norm(ctx):
    n = 8
    norms = []
    for chi in (2, 4, 8, 16):
        m = mps_random(ctx, n, 16, 1, 16, seed=9)
        m.chi_l = chi
        for c in range(n - 1):
            apply_mpo(m, build_qft_mpo_layer(c, n))
        norms.append(norm2(m))
    assert all(a <= b + 1e-12 for a, b in zip(norms, norms[1:]))
    assert norms[-1] == pytest.approx(1.0, abs=1e-10)


def test_mpo_bad_range(ctx):
    with pytest.raises(InvalidArgument):
        apply_mpo(mps_bitstring(ctx, [0, 0]), Mpo.identity(1, 2))


# -- scalars --------------------------------------------------------------------------


def test_overlap_self_and_orthogonal(ctx):
    a = mps_random(ctx, 5, 4, 1, 4, seed=1)
    assert overlap(a, a) == pytest.approx(1.0, abs=1e-12)
    assert overlap(mps_bitstring(ctx, [0, 1]), mps_bitstring(ctx, [1, 0])) == 0


def test_overlap_matches_dense(ctx):
    a = mps_random(ctx, 6, 4, 1, 4, seed=1)
    b = mps_random(ctx, 6, 3, 1, 4, seed=2)
    ref = np.vdot(mps_to_statevector(b), mps_to_statevector(a))
    assert overlap(a, b) == pytest.approx(ref, abs=1e-10)


def test_overlap_size_mismatch(ctx):
    with pytest.raises(InvalidArgument):
        overlap(mps_bitstring(ctx, [0, 0]), mps_bitstring(ctx, [0, 0, 0]))


def test_norm_scaling_and_renormalise(ctx):
    m = mps_bitstring(ctx, [0, 1, 0])
    m.cores[1] = 2 * m.cores[1]
    m.centre = None
    assert norm2(m) == pytest.approx(4.0)
    for mode in ("uniform", "centre"):
        assert norm2(renormalise(m.copy(), mode)) == pytest.approx(1.0, abs=1e-12)


def test_renormalise_zero_state(ctx):
    m = mps_bitstring(ctx, [0, 0])
    m.cores[0] = 0 * m.cores[0]
    with pytest.raises(DegenerateStateError):
        renormalise(m)


# -- sampling -------------------------------------------------------------------------


def test_sample_bitstring(ctx):
    m = mps_bitstring(ctx, [1, 0, 1, 1])
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert sample(m, [0, 1, 2, 3], rng) == [1, 0, 1, 1]


def test_sample_uniform_frequencies(ctx):
    m = mps_bitstring(ctx, [0, 0])
    apply_raw_gate(m, [0], H)
    apply_raw_gate(m, [1], H)
    rng = np.random.default_rng(5)
    draws = 100_000
    counts = np.zeros(4)
    for _ in range(draws):
        a, b = sample(m, [0, 1], rng)
        counts[2 * a + b] += 1
    np.testing.assert_allclose(counts / draws, 0.25, atol=0.01)


def test_sample_bell_correlated(ctx):
    m = bell(ctx)
    rng = np.random.default_rng(1)
    seen = {tuple(sample(m, [0, 1], rng)) for _ in range(200)}
    assert seen == {(0, 0), (1, 1)}


def test_sample_unnormalised(ctx):
    m = mps_bitstring(ctx, [0, 0])
    m.cores[0] = 2 * m.cores[0]
    with pytest.raises(PreconditionError):
        sample(m, [0], np.random.default_rng(0))


# -- bonds and checkpoints ------------------------------------------------------------


def test_effective_bonds(ctx):
    assert effective_bond_dims(mps_bitstring(ctx, [0, 1, 0, 1])) == [1, 1, 1]
    assert effective_bond_dims(bell(ctx)) == [2]
    dims = effective_bond_dims(mps_random(ctx, 8, 4, 1, 8, seed=3))
    assert max(dims) <= 4 and dims[0] == 2


def test_fixed_shape_after_gates(ctx):
    m = mps_random(ctx, 6, 4, 1, 4, seed=3)
    apply_raw_gate(m, [1, 4], crandn((4, 4), np.random.default_rng(0)))
    assert all(c.shape[0] <= 4 and c.shape[2] <= 4 for c in m.cores)


def test_checkpoint_round_trip(ctx, tmp_path):
    m = mps_random(ctx, 5, 4, 1, 4, seed=6)
    save_mps(m, tmp_path / "state.qtn")
    back = load_mps(ctx, tmp_path / "state.qtn")
    assert (back.n_sites, back.chi_d, back.chi_l) == (5, 1, 4)
    np.testing.assert_allclose(mps_to_statevector(back), mps_to_statevector(m), atol=1e-14)


# -- distributed kernel ---------------------------------------------------------------


def _distributed_program(ctx):
    n = 5
    m = mps_random(ctx, n, 4, 2, 2, seed=13)
    psi = mps_to_statevector(m)
    g2 = crandn((4, 4), np.random.default_rng(2))
    apply_raw_gate(m, [0], H)
    apply_raw_gate(m, [1, 3], g2)
    apply_mpo(m, build_qft_mpo_layer(2, n))
    other = mps_random(ctx, n, 2, 2, 2, seed=14)
    return dict(psi=psi, out=mps_to_statevector(m), n2=norm2(m), ov=overlap(m, other),
                other=mps_to_statevector(other), bonds=effective_bond_dims(m))


def test_distributed_kernel_matches_dense():
    n = 5
    results = run(4, _distributed_program)
    r = results[0]
    ref = dense_apply(r["psi"], n, [0], H)
    ref = dense_apply(ref, n, [1, 3], crandn((4, 4), np.random.default_rng(2)))
    layer = build_qft_mpo_layer(2, n)
    ref = dense_apply(ref, n, list(layer.sites), layer.to_matrix())
    np.testing.assert_allclose(r["out"], ref, atol=1e-9)
    assert r["n2"] == pytest.approx(np.vdot(ref, ref).real, abs=1e-9)
    assert r["ov"] == pytest.approx(np.vdot(r["other"], ref), abs=1e-9)
    assert max(r["bonds"]) <= 4
    local = mps_to_statevector(mps_random(local_context(), n, 4, 1, 4, seed=13))
    np.testing.assert_allclose(r["psi"], local, atol=1e-12)
    for other in results[1:]:
        np.testing.assert_allclose(other["out"], r["out"], atol=1e-12)


def _distributed_sample(ctx):
    m = mps_bitstring(ctx, [1, 0, 1], 2, 1)
    return sample(m, [0, 1, 2], np.random.default_rng(0))


def test_distributed_sample():
    assert run(4, _distributed_sample) == [[1, 0, 1]] * 4
