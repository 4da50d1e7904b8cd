import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qracp import quantum as q
from qracp.sampling import rng_for

H = q.NAMED_GATES["H"]


def test_identity_leaves_state_alone():
    rho = q.random_density(2, np.random.default_rng(1))
    out = q.apply(q.identity_op(2), rho)
    assert q.trace_distance(out, rho) < 1e-12


def test_hadamard_on_zero():
    out = q.apply(q.named_gate("H"), q.basis_state(2))
    np.testing.assert_allclose(out.entries, 0.5 * np.ones((2, 2)), atol=1e-12)


def test_measurement_branch_leaves_unnormalised_state():
    out = q.apply(q.projector_op(2, 0), q.maximally_mixed(2))
    np.testing.assert_allclose(out.entries, np.diag([0.5, 0.0]), atol=1e-12)
    assert out.weight == pytest.approx(0.5)


def test_snapshot_reversal_is_exact():
    rho = q.random_density(2, np.random.default_rng(7))
    h = q.named_gate("H")
    after = q.apply(h, rho)
    back = q.reverse_apply(h, 1, {1: rho}, after, mode="snapshot")
    assert back == rho


def test_inverse_reversal_of_unitary():
    rho = q.random_density(4, np.random.default_rng(3))
    u = q.random_superop(4, np.random.default_rng(4), kind="unitary")
    back = q.reverse_apply(u, 1, {}, q.apply(u, rho), mode="inverse")
    assert q.trace_distance(back, rho) < 1e-12


def test_inverse_mode_needs_a_declared_reverse():
    op = q.random_superop(2, np.random.default_rng(5), kind="general")
    with pytest.raises(q.QuantumError):
        q.reverse_apply(op, 1, {}, q.basis_state(2), mode="inverse")


def test_missing_snapshot_is_an_error():
    with pytest.raises(q.QuantumError):
        q.reverse_apply(q.named_gate("X"), 3, {}, q.basis_state(2))


def test_tensor_products():
    z = q.basis_state(2)
    np.testing.assert_allclose(q.tensor(z, z).entries, q.basis_state(4).entries)
    np.testing.assert_allclose(q.tensor(q.maximally_mixed(2), q.maximally_mixed(2)).entries,
                               np.eye(4) / 4)


def test_trace_distance_extremes():
    assert q.trace_distance(q.basis_state(2, 0), q.basis_state(2, 1)) == pytest.approx(1.0)
    rho = q.random_density(2, np.random.default_rng(0))
    assert q.trace_distance(rho, rho) == 0.0


def test_invalid_states_rejected():
    with pytest.raises(q.QuantumError):
        q.DensityMatrix([[1, 1], [0, 0]])
    with pytest.raises(q.QuantumError):
        q.DensityMatrix([[2, 0], [0, -1]])
    with pytest.raises(q.QuantumError):
        q.DensityMatrix([[1, 0, 0], [0, 0, 0]])


def test_invalid_superops_rejected():
    with pytest.raises(q.QuantumError):
        q.SuperOp("u", [H, H], kind="unitary")
    with pytest.raises(q.QuantumError):
        q.SuperOp("u", [2 * H], kind="unitary")
    with pytest.raises(q.QuantumError):
        q.SuperOp("u", [], kind="general")
    with pytest.raises(q.QuantumError):
        q.SuperOp("u", [H], kind="bogus")


def test_impossible_branch_raises():
    with pytest.raises(q.QuantumError):
        q.apply(q.projector_op(2, 1), q.basis_state(2, 0))


def test_embed_matches_kron():
    x = q.named_gate("X")
    lifted = q.embed(x, 1, 2)
    np.testing.assert_allclose(lifted.kraus[0], np.kron(np.eye(2), q.NAMED_GATES["X"]))


def test_fingerprint_ignores_negative_zero():
    a = q.DensityMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    b = q.DensityMatrix(np.array([[1.0, -0.0], [-0.0, 0.0]]))
    assert a.fingerprint() == b.fingerprint()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([2, 4]),
       kind=st.sampled_from(q.KINDS))
def test_random_operations_keep_states_physical(seed, dim, kind):
    rng = np.random.default_rng(seed)
    op = q.random_superop(dim, rng, kind=kind)
    rho = q.random_density(dim, rng)
    out = q.apply(op, rho)
    m = out.entries
    assert np.max(np.abs(m - m.conj().T)) <= 1e-12
    assert np.linalg.eigvalsh(m).min() >= -1e-12
    assert out.weight <= 1 + 1e-12
    if kind == "unitary":
        assert abs(out.weight - rho.weight) <= 1e-12


def _kraus_corpus(seed, n=200):
    """Labelled corpus: exact sets, sets scaled by 1+delta with known deviation delta."""
    rng = rng_for(seed, "kraus-corpus")
    out = []
    for i in range(n):
        dim = (2, 4)[i % 2]
        mats = q.random_kraus(dim, int(rng.integers(1, 4)), rng)
        if i % 4 == 0:
            out.append((mats, True))
        elif i % 4 == 1:
            delta = 10 ** rng.uniform(-12, -9)       # below the threshold: still complete
            out.append(([np.sqrt(1 + delta) * m for m in mats], True))
        else:
            delta = 10 ** rng.uniform(-7.9, -1)      # sum becomes (1 + delta) I
            sign = 1 if i % 4 == 2 else -1
            out.append(([np.sqrt(1 + sign * delta) * m for m in mats], False))
    return out


def test_kraus_validator_on_labelled_corpus():
    wrong = [(i, ok) for i, (mats, ok) in enumerate(_kraus_corpus(0))
             if q.kraus_valid(mats, trace_preserving=True) != ok]
    assert wrong == []


def test_trace_decreasing_sets_accepted_only_below_identity():
    rng = np.random.default_rng(11)
    mats = q.random_kraus(2, 2, rng, trace_preserving=False)
    assert q.kraus_valid(mats, trace_preserving=False)
    assert not q.kraus_valid([1.01 * m for m in q.random_kraus(2, 2, rng)], trace_preserving=False)
