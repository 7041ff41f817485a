import numpy as np
import pytest

from qcap.asymptotic import random_ensemble
from qcap.bounds import (
    BoundError,
    CodeParams,
    GridConfig,
    InputEnsemble,
    SearchConfig,
    SmoothingBudget,
    budget_for_error,
    capacity_estimate,
    converse_holds,
    delta_prime_for_error,
    direct_error,
    direct_feasible,
    inner_inequalities,
    isotropic_ensemble,
    lam,
    lam_prime,
    output_state,
    simultaneous_region,
    table_epsilon,
    unlimited_converse,
    unlimited_direct,
    unlimited_error,
)
from qcap.channels import depolarizing, identity_channel
from qcap.linalg import DensityOperator, StateError, SystemLayout, random_density_matrix

IDENTITY = identity_channel(2)


def test_code_params_validation():
    with pytest.raises(BoundError):
        CodeParams(c=-1)
    with pytest.raises(BoundError):
        CodeParams(delta=0.0)
    with pytest.raises(BoundError):
        SmoothingBudget(iota=0.0)
    with pytest.raises(BoundError):
        SmoothingBudget(delta1=0.0)


def test_ensemble_constructors():
    phi = InputEnsemble.maximally_entangled(2)
    assert (phi.d_sc, phi.d_sr, phi.d_a) == (1, 2, 2)
    cl = InputEnsemble.classical(3)
    assert (cl.d_sc, cl.d_sr, cl.d_a) == (3, 1, 3)
    assert np.allclose(cl.probs, 1 / 3)
    pad = InputEnsemble.padded(phi, 2)
    assert (pad.d_sc, pad.d_sr) == (2, 2)
    pad.require_maximally_mixed()


def test_ensemble_rejects_coherence_in_sc(rng):
    m = random_density_matrix(8, None, rng)
    lay = SystemLayout.of(("Sc", 2), ("Sr", 2), ("A", 2))
    with pytest.raises(StateError):
        InputEnsemble(DensityOperator.from_matrix(m, lay))


def test_isotropic_ensemble_marginal():
    for t, w in ((0, 0), (1, 0), (0.3, 0.7)):
        isotropic_ensemble(2, t, w).require_maximally_mixed()


# smoothing parameters ------------------------------------------------------------


def test_lambda_closed_forms():
    assert lam(0.0, 0.04) == pytest.approx(0.4)
    assert lam_prime(0.0, 0.04) == pytest.approx(np.sqrt(4 * 0.2))
    # both become vacuous well before delta = 0.5
    assert lam(0.5, 1e-3) >= 1 and lam_prime(0.5, 1e-3) >= 1
    assert lam(1e-12, 0.01) < 1


def test_table_epsilon_vanishes_at_largest_delta_prime():
    assert table_epsilon(1.0, 1 / 16) == pytest.approx(0.0)
    assert table_epsilon(1.0, 1e-4) == pytest.approx(1 / 16 - 0.0025)


def test_direct_error_inverse():
    ens = InputEnsemble.padded(InputEnsemble.maximally_entangled(2), 2)
    b = budget_for_error(1.0, 0.01, ens, CodeParams(1, 1, 0))
    assert direct_error(b.delta1, b.delta2, 0.01) == pytest.approx(1.0)
    assert b.delta1 == pytest.approx(b.delta2)
    dp = delta_prime_for_error(1.0, 0.01)
    assert unlimited_error(dp, 0.01) == pytest.approx(1.0)
    with pytest.raises(BoundError):
        budget_for_error(0.1, 0.01, ens, CodeParams())


def test_budget_skips_inactive_condition():
    phi = InputEnsemble.maximally_entangled(2)
    b = budget_for_error(2.0, 0.0, phi, CodeParams(0, 1, 0))
    assert b.delta2 == pytest.approx(1.0)
    assert direct_error(0.0, b.delta2, 0.0) == pytest.approx(2.0)


# direct and converse conditions -------------------------------------------------


def test_output_state_dimension_check():
    with pytest.raises(BoundError):
        output_state(InputEnsemble.maximally_entangled(3), IDENTITY)


def test_direct_identity_qubit():
    phi = InputEnsemble.maximally_entangled(2)
    ok = direct_feasible(phi, IDENTITY, CodeParams(0, 1, 0), SmoothingBudget(delta2=1.0))
    assert ok.feasible
    assert ok.entropies["Hmax(Sr|BSc)"] == pytest.approx(-1.0, abs=1e-6)
    assert ok.slacks["classical"] == float("inf")
    assert ok.achieved_error == pytest.approx(2.0)
    tight = direct_feasible(phi, IDENTITY, CodeParams(0, 1, 0), SmoothingBudget(delta2=1 / 16))
    assert not tight.feasible
    assert tight.slacks["quantum"] == pytest.approx(-4.0, abs=1e-6)


def test_direct_dimension_limit():
    r = direct_feasible(InputEnsemble.classical(2), IDENTITY, CodeParams(10, 0, 0))
    assert not r.feasible
    assert r.slacks["dimension"] == pytest.approx(-9.0)


def test_direct_depolarized_channel_infeasible():
    ens = InputEnsemble.classical(2)
    r = direct_feasible(ens, depolarizing(1.0), CodeParams(1, 0, 0), SmoothingBudget(delta1=1.0))
    assert not r.feasible


def test_converse_identity():
    phi = InputEnsemble.maximally_entangled(2)
    r = converse_holds(phi, IDENTITY, CodeParams(0, 1, 0, 1e-12), 0.01)
    assert r.holds
    assert r.saturated == (False, True)
    bad = converse_holds(phi, IDENTITY, CodeParams(0, 3, 0, 1e-12), 0.01)
    assert not bad.holds and bad.slacks["total"] == pytest.approx(-2.0)


def test_converse_vacuous_at_table_deltas():
    phi = InputEnsemble.maximally_entangled(2)
    for delta in (0.5, 1.0):
        r = converse_holds(phi, IDENTITY, CodeParams(0, 1, 0, delta), 1e-3)
        assert r.saturated == (True, True) and r.holds


def test_unlimited_entanglement_conditions():
    phi = InputEnsemble.maximally_entangled(2)
    b = SmoothingBudget(delta_prime=1.0)
    assert unlimited_direct(phi, IDENTITY, (2.0, 0.0), b).feasible
    assert not unlimited_direct(phi, IDENTITY, (2.1, 0.0), b).feasible
    dep = unlimited_direct(phi, depolarizing(1.0), (0.0, 0.0), b)
    assert dep.slacks["rate"] == pytest.approx(0.0, abs=1e-6)
    conv = unlimited_converse(phi, IDENTITY, (2.0, 0.0), 0.01, 1e-12)
    assert conv.holds
    with pytest.raises(BoundError):
        unlimited_direct(phi, IDENTITY, (0.0, 0.0), SmoothingBudget(epsilon=0.1, delta_prime=0.9))


# capacity estimates and regions ------------------------------------------------


def test_capacity_estimate_identity_quantum():
    est = capacity_estimate(IDENTITY, ("quantum", "none"), 0.5, SearchConfig(grid=2, refine=False))
    assert est.lower >= 0
    assert est.upper == float("inf")
    with pytest.raises(BoundError):
        capacity_estimate(IDENTITY, ("quantum", "bogus"), 0.5)


def test_inner_inequalities_need_valid_epsilon():
    phi = InputEnsemble.maximally_entangled(2)
    out = output_state(phi, IDENTITY)
    assert inner_inequalities(phi, out, 1.0, 1.0) is None


def test_simultaneous_region_identity(rng):
    fam = [InputEnsemble.maximally_entangled(2), InputEnsemble.classical(2), random_ensemble(2, 2, 2, rng)]
    regs = simultaneous_region(IDENTITY, 1.0, fam, GridConfig(2, 3))
    assert len(regs.outer) == 3
    for v in regs.inner_vertices():
        assert regs.outer_contains(v)
        # log delta' <= log(delta^4 / 16) = -4 bits keeps every inner rate below 0.5
        assert v[0] < 0.5
