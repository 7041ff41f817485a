import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcap.asymptotic import random_ensemble
from qcap.bounds import CodeParams, InputEnsemble
from qcap.channels import depolarizing, identity_channel, partial_trace_channel, random_channel, trace_channel
from qcap.decoupling import (
    HypothesisError,
    RunningStats,
    averaged_state,
    build_psi_rho,
    cc_layout,
    cc_max_entangled,
    check_converse_theorem,
    coherence_residual,
    converse_lambda,
    converse_lambda_prime,
    decoupled_omega,
    delta_statistics,
    direct_bound_rhs,
    empirical_average,
    encoder_output_marginal,
    make_instance,
    random_cc_state,
    sample_delta,
    sample_delta_with,
    verify_direct_theorem,
    verify_encoder_identity,
)
from qcap.linalg import DensityOperator, StateError, haar_unitary, random_density_matrix


def test_random_cc_state_is_coherent(rng):
    psi = random_cc_state(3, 2, 2, None, rng)
    assert coherence_residual(psi.matrix, 3, 2, 2) == 0.0
    assert psi.trace == pytest.approx(1.0)


def test_incoherent_state_rejected(rng):
    m = random_density_matrix(2 * 2 * 1, None, rng)
    psi = DensityOperator.from_matrix(m, cc_layout(2, 1, 1))
    with pytest.raises(StateError):
        make_instance(psi, identity_channel(2))


def test_map_dimension_checked(rng):
    with pytest.raises(StateError):
        make_instance(random_cc_state(2, 2, 1, None, rng), identity_channel(3))


def test_averaged_state_closed_form_vs_monte_carlo(rng):
    inst = make_instance(random_cc_state(2, 2, 2, None, rng), identity_channel(4))
    exact = averaged_state(inst).matrix
    mc = empirical_average(inst, 4000, seed=3)
    assert np.abs(mc - exact).max() < 0.02
    assert np.trace(exact).real == pytest.approx(1.0)


def test_max_entangled_average_is_block_diagonal():
    inst = make_instance(cc_max_entangled(2, 2), identity_channel(4))
    av = averaged_state(inst).matrix
    assert np.allclose(av, np.diag(np.diag(av)))
    assert np.allclose(np.diag(av).sum(), 1.0)


def test_delta_is_permutation_and_unitary_invariant_for_identity(rng):
    # identity T: unitary invariance of the trace norm makes Delta constant
    inst = make_instance(random_cc_state(2, 2, 1, None, rng), identity_channel(4))
    ref = sample_delta(inst, seed=0)
    for s in range(5):
        assert sample_delta(inst, seed=s) == pytest.approx(ref, abs=1e-12)
    us = np.stack([haar_unitary(2, rng) for _ in range(2)])
    assert sample_delta_with(inst, [1, 0], us) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=40), st.integers(1, 39))
def test_running_stats_merge(values, cut):
    cut = min(cut, len(values) - 1)
    a, b = RunningStats(), RunningStats()
    for x in values[:cut]:
        a.push(x)
    for x in values[cut:]:
        b.push(x)
    m = a.merge(b)
    assert m.count == len(values)
    assert m.mean == pytest.approx(np.mean(values), abs=1e-9)
    assert m.variance == pytest.approx(np.var(values, ddof=1), rel=1e-7, abs=1e-9)


def test_delta_statistics_reproducible_and_worker_independent(rng):
    inst = make_instance(random_cc_state(2, 2, 1, None, rng), random_channel(4, 2, 2, rng))
    a = delta_statistics(inst, 600, seed=11)
    b = delta_statistics(inst, 600, seed=11, workers=3)
    assert (a.count, a.mean, a.m2) == (b.count, b.mean, b.m2)
    c = delta_statistics(inst, 600, seed=12)
    assert c.mean != a.mean


def test_bound_terms_follow_case_split(rng):
    psi = random_cc_state(1, 2, 2, None, rng)
    terms = direct_bound_rhs(make_instance(psi, partial_trace_channel([1, 2], [1])))
    assert terms.H_I is None and terms.theta_I == 0.0 and terms.H_II is not None
    psi = random_cc_state(2, 1, 1, None, rng)
    terms = direct_bound_rhs(make_instance(psi, random_channel(2, 2, 1, rng)))
    assert terms.H_II is None and terms.theta_II == 0.0 and terms.H_I is not None


def test_direct_theorem_small_instance(rng):
    inst = make_instance(random_cc_state(2, 2, 2, None, rng), random_channel(4, 2, 2, rng), epsilon=0.0)
    rep = verify_direct_theorem(inst, 500, seed=1)
    assert rep.passed
    assert rep.n_samples == 500
    assert rep.bound_rhs == pytest.approx(sum(rep.thetas))


def test_fully_depolarizing_decouples_exactly(rng):
    inst = make_instance(random_cc_state(2, 2, 1, None, rng), depolarizing(1.0, 4))
    st_ = delta_statistics(inst, 50, seed=0)
    assert st_.mean == pytest.approx(0.0, abs=1e-12)


# converse ----------------------------------------------------------------------


def test_converse_parameters():
    assert converse_lambda(0.0, 0.01) == pytest.approx(0.2)
    assert converse_lambda_prime(0.0, 0.01) == pytest.approx(np.sqrt(0.4))
    assert converse_lambda(0.05, 0.01) > 1


def test_converse_holds_for_trace_map(rng):
    psi = random_cc_state(2, 2, 1, 1, rng)
    inst = make_instance(psi, trace_channel(4))
    omega = decoupled_omega(inst, [np.eye(1)] * 2)
    chk = check_converse_theorem(inst, omega, 0.0, 0.01)
    assert chk.distance == pytest.approx(0.0, abs=1e-12)
    assert chk.holds and not chk.saturated_first and not chk.saturated_second


def test_converse_saturates_for_large_delta(rng):
    psi = random_cc_state(2, 2, 1, 1, rng)
    inst = make_instance(psi, trace_channel(4))
    omega = decoupled_omega(inst, [np.eye(1)] * 2)
    chk = check_converse_theorem(inst, omega, 0.05, 0.01)
    assert chk.holds and chk.saturated_first and chk.saturated_second
    assert chk.lhs_first is None


def test_converse_hypothesis_violation(rng):
    psi = random_cc_state(2, 2, 1, None, rng)
    inst = make_instance(psi, identity_channel(4))
    omega = decoupled_omega(inst, [np.eye(4) / 4] * 2)
    with pytest.raises(HypothesisError):
        check_converse_theorem(inst, omega, 0.1, 0.5)


# encoder ---------------------------------------------------------------------------


@pytest.mark.parametrize("code,dsc,dsr", [((1, 0, 0), 2, 1), ((0, 1, 0), 1, 2), ((1, 1, 0), 2, 2)])
def test_encoder_identity(code, dsc, dsr, rng):
    ens = random_ensemble(2, dsc, dsr, rng)
    ch = random_channel(2, 2, 2, rng)
    for _ in range(3):
        perm = rng.permutation(dsc)
        us = np.stack([haar_unitary(dsr, rng) for _ in range(dsc)])
        chk = verify_encoder_identity(ens, ch, CodeParams(*code), perm, us)
        assert chk.identity_residual < 1e-8
        assert chk.dephasing_residual < 1e-10


def test_encoder_rejects_oversized_code(rng):
    ens = random_ensemble(2, 1, 2, rng)
    with pytest.raises(ValueError):
        verify_encoder_identity(ens, identity_channel(2), CodeParams(1, 0, 0), [0], np.eye(2)[None])


def test_psi_rho_marginal_is_channel_output(rng):
    ens = random_ensemble(2, 2, 2, rng)
    ch = random_channel(2, 3, 2, rng)
    keep, out = encoder_output_marginal(ens, ch)
    assert np.allclose(keep, out, atol=1e-12)
    assert build_psi_rho(ens, ch).layout.labels[:3] == ("Rc_hat", "Rr_hat", "B")


def test_psi_rho_needs_maximally_mixed_input(rng):
    blocks = [random_density_matrix(4, None, rng)]
    ens = InputEnsemble.from_blocks(blocks, 2)
    with pytest.raises(StateError):
        build_psi_rho(ens, identity_channel(2))
