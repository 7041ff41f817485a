import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import coherent_instance, coherent_vector, composition_instance, xa_marginal
from qcap.linalg import (
    DensityOperator,
    LayoutError,
    PureState,
    StateError,
    SystemLayout,
    coherent_purification,
    cq_pair,
    dephase,
    generalized_fidelity,
    haar_unitary,
    max_entangled,
    partial_trace,
    partial_trace_matrix,
    permute,
    permute_matrix,
    purified_distance,
    purify,
    random_density_matrix,
    random_state,
    tensor,
    trace_distance,
    trace_norm,
)


def test_layout_rejects_duplicates_and_bad_split():
    with pytest.raises(LayoutError):
        SystemLayout.of(("A", 2), ("A", 3))
    with pytest.raises(LayoutError):
        SystemLayout.of(("A", 4), classical_split=("A", 3, 2))
    lay = SystemLayout.of(("A", 6), ("B", 2), classical_split=("A", 3, 2))
    assert lay.dim == 12 and lay.dims == (6, 2)


def test_density_operator_validation():
    lay = SystemLayout.of(("A", 2))
    with pytest.raises(StateError):
        DensityOperator.from_matrix(np.array([[1, 1], [0, 0]]), lay)
    with pytest.raises(StateError):
        DensityOperator.from_matrix(np.diag([1.2, -0.2]), lay)
    with pytest.raises(StateError):
        DensityOperator.from_matrix(np.diag([0.7, 0.7]), lay)
    sub = DensityOperator.from_matrix(np.diag([0.3, 0.2]), lay)
    assert sub.trace == pytest.approx(0.5)


def test_partial_trace_of_product(rng):
    a = random_state(SystemLayout.of(("A", 2)), rng=rng)
    b = random_state(SystemLayout.of(("B", 3)), rng=rng)
    ab = tensor(a, b)
    assert np.allclose(partial_trace(ab, ["A"]).matrix, a.matrix)
    assert np.allclose(partial_trace(ab, ["B"]).matrix, b.matrix)


def test_permute_round_trip(rng):
    m = random_density_matrix(12, None, rng)
    dims = [2, 3, 2]
    back = permute_matrix(permute_matrix(m, dims, [2, 0, 1]), [2, 2, 3], [1, 2, 0])
    assert np.allclose(back, m)
    rho = DensityOperator.from_matrix(m, SystemLayout.of(("A", 2), ("B", 3), ("C", 2)))
    swapped = permute(rho, ["C", "A", "B"])
    assert swapped.labels == ("C", "A", "B")
    assert np.allclose(partial_trace(swapped, ["B"]).matrix, partial_trace(rho, ["B"]).matrix)


def test_purify_reproduces_state(rng):
    rho = random_state(SystemLayout.of(("A", 3)), rank=2, rng=rng)
    pure = purify(rho)
    assert pure.layout.labels == ("A", "P")
    assert np.allclose(partial_trace(pure.density(), ["A"]).matrix, rho.matrix)


def test_fidelity_and_distances(rng):
    rho = random_density_matrix(3, None, rng)
    assert generalized_fidelity(rho, rho) == pytest.approx(1.0)
    assert purified_distance(rho, rho) == pytest.approx(0.0, abs=1e-7)
    # orthogonal pure states: trace norm 2, purified distance 1
    e0, e1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    assert trace_distance(e0, e1) == pytest.approx(2.0)
    assert purified_distance(e0, e1) == pytest.approx(1.0)
    # subnormalized credit: F(rho, 0) = sqrt(1 - Tr rho) * 1
    half = np.diag([0.25, 0.25])
    assert generalized_fidelity(half, np.zeros((2, 2))) == pytest.approx(np.sqrt(0.5))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 5))
def test_purified_distance_dominates_half_trace_distance(seed, d):
    rng = np.random.default_rng(seed)
    a, b = random_density_matrix(d, None, rng), random_density_matrix(d, None, rng)
    assert 0.5 * trace_distance(a, b) <= purified_distance(a, b) + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_haar_unitary_is_unitary(seed, d):
    u = haar_unitary(d, np.random.default_rng(seed))
    assert np.allclose(u @ u.conj().T, np.eye(d), atol=1e-12)


def test_dephase_kills_off_diagonal_blocks():
    phi = max_entangled(2)
    d = dephase(phi, "A")
    assert np.allclose(d.matrix, np.diag([0.5, 0, 0, 0.5]))


def test_pure_state_norm_check():
    with pytest.raises(StateError):
        PureState(np.array([1.0, 1.0]), SystemLayout.of(("A", 2)))


def test_trace_norm_matches_singular_values(rng):
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    m = m + m.conj().T
    assert trace_norm(m) == pytest.approx(np.abs(np.linalg.eigvalsh(m)).sum())


# composition and coherent purification bounds -------------------------------


def test_cq_pair_trace_one_and_hypotheses(rng):
    rho_b, sig_b, p = composition_instance(rng)
    rho, sigma, hyp_c, hyp_q = cq_pair(rho_b, sig_b, p)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.trace(sigma).real == pytest.approx(1.0)
    assert hyp_c == pytest.approx(np.mean(1 - np.diag(p)))
    assert hyp_q >= 0


def test_cq_pair_exact_match_has_zero_distance(rng):
    blocks = [random_density_matrix(2, None, rng) for _ in range(3)]
    sig = np.array([[blocks[k]] * 3 for k in range(3)])
    rho, sigma, hyp_c, hyp_q = cq_pair(blocks, sig, np.eye(3))
    assert trace_distance(rho, sigma) == pytest.approx(0.0, abs=1e-12)
    assert hyp_c == 0 and hyp_q == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_composition_bound_property(seed):
    rho_b, sig_b, p = composition_instance(np.random.default_rng(seed))
    rho, sigma, hyp_c, hyp_q = cq_pair(rho_b, sig_b, p)
    delta = 3 * max(hyp_c, hyp_q)
    assert trace_distance(rho, sigma) <= delta + 1e-12


def test_coherent_purification_purifies_rho(rng):
    probs, states, phis, db = coherent_instance(rng)
    da, nblk = states[0].shape[0], len(probs)
    psi = coherent_purification(probs, states, phis, db)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    want = np.zeros((nblk * da, nblk * da), dtype=np.complex128)
    for k in range(nblk):
        want[k * da:(k + 1) * da, k * da:(k + 1) * da] = probs[k] * states[k]
    assert np.allclose(xa_marginal(psi, nblk, da, db), want, atol=1e-12)


def test_coherent_purification_recovers_exact_purification(rng):
    probs, states, phis, db = coherent_instance(rng)
    da = states[0].shape[0]
    exact = [partial_trace_matrix(np.outer(v, v.conj()), [da, db], [0]) for v in phis]
    psi = coherent_purification(probs, exact, phis, db)
    phi = coherent_vector(probs, phis, da, db)
    assert abs(np.vdot(psi, phi)) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_coherent_purification_bound_property(seed):
    probs, states, phis, db = coherent_instance(np.random.default_rng(seed))
    da, nblk = states[0].shape[0], len(probs)
    phi = coherent_vector(probs, phis, da, db)
    rho_xa = np.zeros((nblk * da, nblk * da), dtype=np.complex128)
    for k in range(nblk):
        rho_xa[k * da:(k + 1) * da, k * da:(k + 1) * da] = probs[k] * states[k]
    delta = trace_distance(xa_marginal(phi, nblk, da, db), rho_xa)
    psi = coherent_purification(probs, states, phis, db)
    dist = trace_distance(np.outer(psi, psi.conj()), np.outer(phi, phi.conj()))
    assert dist <= 2 * np.sqrt(delta) + 1e-9


def test_coherent_purification_needs_large_enough_b():
    with pytest.raises(LayoutError):
        coherent_purification([1.0], [np.eye(3) / 3], [np.zeros(6)], 2)
