"""Acceptance suite.

Each test prints one ``criterion N: PASS|FAIL`` line (visible with or without
``-s``) and then asserts.  All tolerances are pinned in ``TOL`` below.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from helpers import (
    coherent_instance,
    coherent_vector,
    composition_instance,
    random_tripartite,
    schmidt_state,
    xa_marginal,
)
from qcap.asymptotic import (
    RateRegion,
    lambda_inequalities,
    lambda_region,
    lambda_vertices_from,
    fqaep_rates,
    random_ensemble,
    region_entropies,
    region_union,
    theta_region,
)
from qcap.bounds import CodeParams, GridConfig, InputEnsemble, simultaneous_region
from qcap.channels import (
    amplitude_damping,
    depolarizing,
    identity_channel,
    partial_trace_channel,
    random_channel,
)
from qcap.decoupling import make_instance, random_cc_state, verify_direct_theorem, verify_encoder_identity
from qcap.entropies import hmax, hmax_smooth, hmin, hmin_smooth, von_neumann_cond
from qcap.io import state_to_doc
from qcap.linalg import (
    DensityOperator,
    SystemLayout,
    cq_pair,
    coherent_purification,
    haar_unitary,
    max_entangled,
    random_state,
    tensor,
    trace_distance,
)

TOL = {
    "duality": 1e-5,
    "closed_form": 1e-6,
    "encoder_identity": 1e-8,
    "encoder_dephasing": 1e-10,
    "region_contains": 1e-6,
    "collapse": 1e-6,
    "theta_in_lambda": 1e-9,
    "vertex_feasible": 1e-8,
    "vertex_tight": 1e-8,
    "inner_in_outer": 1e-8,
    "fqaep_slack": 0.02,
    "lemma": 1e-9,
}
SEED = 20240611


@pytest.fixture
def report(pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        with capman.global_and_fixture_disabled():
            print("\n" + line)
        return ok

    return emit


def test_criterion_01_duality(report):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for i in range(50):
        _, ab, ac = random_tripartite((2, 2, 2) if i % 2 == 0 else (2, 3, 2), rng)
        for eps in (0.0, 0.05, 0.2):
            gap = abs(hmax_smooth(ab, eps, ["A"], ["B"]).value + hmin_smooth(ac, eps, ["A"], ["C"]).value)
            worst = max(worst, gap)
    assert report(1, worst < TOL["duality"], f"max |Hmax(A|B) + Hmin(A|C)| = {worst:.2e} over 150 cases")


def test_criterion_02_closed_forms(report):
    rng = np.random.default_rng(SEED)
    errs = []
    for d in (2, 3):
        phi = max_entangled(d)
        errs += [abs(hmin(phi).value + np.log2(d)), abs(hmax(phi).value + np.log2(d))]
    sigma = random_state(SystemLayout.of(("B", 2)), rng=rng)
    pi_a = DensityOperator.from_matrix(np.eye(3) / 3, SystemLayout.of(("A", 3)))
    prod = tensor(pi_a, sigma)
    errs += [abs(hmin(prod).value - np.log2(3)), abs(hmax(prod).value - np.log2(3))]
    worst = max(errs)
    assert report(2, worst < TOL["closed_form"], f"max closed-form error = {worst:.2e}")


def _sweep():
    rng = np.random.default_rng(SEED)
    for nblk in (1, 2, 3):
        for r in (1, 2):
            d = nblk * r
            eps = 0.05 if d <= 3 else 0.0
            trace_out = random_channel(1, 1, 1, rng) if d == 1 else partial_trace_channel([nblk, r], [1])
            rand = random_channel(d, 2, max(2, -(-d // 2)), rng)
            for name, ch in (("partial-trace", trace_out), ("random", rand)):
                psi = random_cc_state(nblk, r, 1, None, rng)
                yield (nblk, r, name), make_instance(psi, ch, epsilon=eps)


def test_criterion_03_decoupling_sweep(report):
    failed = []
    count = 0
    for key, inst in _sweep():
        rep = verify_direct_theorem(inst, 2000, seed=SEED)
        count += 1
        if not rep.passed:
            failed.append((key, rep.mean_delta, rep.std_error, rep.bound_rhs))
    assert report(3, not failed, f"{count - len(failed)}/{count} instances satisfy mean - 3 se <= bound"
                  + (f"; failures {failed}" if failed else ""))


def test_criterion_04_encoder_identity(report):
    rng = np.random.default_rng(SEED)
    worst_id = worst_ph = 0.0
    for code, dsc, dsr in (((1, 0, 0), 2, 1), ((0, 1, 0), 1, 2), ((1, 1, 0), 2, 2)):
        ens = random_ensemble(2, dsc, dsr, rng)
        ch = random_channel(2, 2, 2, rng)
        for _ in range(20):
            perm = rng.permutation(dsc)
            us = np.stack([haar_unitary(dsr, rng) for _ in range(dsc)])
            chk = verify_encoder_identity(ens, ch, CodeParams(*code), perm, us)
            worst_id = max(worst_id, chk.identity_residual)
            worst_ph = max(worst_ph, chk.dephasing_residual)
    ok = worst_id < TOL["encoder_identity"] and worst_ph < TOL["encoder_dephasing"]
    assert report(4, ok, f"identity residual {worst_id:.1e}, dephasing residual {worst_ph:.1e}")


def test_criterion_05_asymptotic_region(report):
    rng = np.random.default_rng(SEED)
    fam = [InputEnsemble.maximally_entangled(2), InputEnsemble.classical(2)]
    ident = region_union(identity_channel(2), fam)
    unit = ident.contains([1, 0, 0], TOL["region_contains"]) and ident.contains([0, 1, 0], TOL["region_contains"])
    dep = region_union(depolarizing(1.0), fam)
    collapse = all(abs(v[0]) < TOL["collapse"] and abs(v[1]) < TOL["collapse"] for v in dep.vertices)
    outside = 0
    for _ in range(100):
        ens = random_ensemble(2, 2, 2, rng)
        ch = random_channel(2, 2, 2, rng)
        lam = lambda_region(ch, ens)
        outside += sum(not lam.contains(v, TOL["theta_in_lambda"]) for v in theta_region(ch, ens).vertices)
    ok = unit and collapse and outside == 0
    assert report(5, ok, f"identity unit rates {unit}, depolarized collapse {collapse}, "
                         f"Theta vertices outside Lambda {outside}/100 pairs")


def test_criterion_06_lambda_vertices(report):
    rng = np.random.default_rng(SEED)
    plus = {"P0", "P1+", "P2", "P3+", "P4", "P5", "P6"}
    minus = {"P1-", "P2", "P3-", "P4", "P6"}
    bad = []
    for i in range(20):
        h = region_entropies(random_channel(2, 2, 2, rng), random_ensemble(2, 2, 2, rng))
        reg = RateRegion(lambda_inequalities(h), [])
        lv = lambda_vertices_from(h)
        for name, p in lv.points.items():
            if not reg.contains(p, TOL["vertex_feasible"]) or not reg.tight(p, TOL["vertex_tight"]):
                bad.append((i, name))
        if lv.degenerate:
            want = plus | minus
        else:
            want = plus if -h.H_Sr_given_BSc > 0 else minus
        if set(lv.points) != want:
            bad.append((i, "subset"))
    assert report(6, not bad, f"20 pairs, violations {bad}")


def test_criterion_07_inner_in_outer(report):
    rng = np.random.default_rng(SEED)
    fam = [InputEnsemble.maximally_entangled(2), InputEnsemble.classical(2), random_ensemble(2, 2, 2, rng)]
    worst = -np.inf
    n_vertices = 0
    for ch in (identity_channel(2), depolarizing(0.5), amplitude_damping(0.3)):
        for delta in (0.5, 1.0):
            regs = simultaneous_region(ch, delta, fam, GridConfig(2, 3))
            for v in regs.inner_vertices():
                n_vertices += 1
                worst = max(worst, min(-reg.slack(v) for reg in regs.outer))
    ok = worst <= TOL["inner_in_outer"]
    assert report(7, ok, f"{n_vertices} inner vertices, largest outer violation {worst:.2e}")


def test_criterion_08_fqaep(report):
    rho = schmidt_state(0.55)
    h = von_neumann_cond(rho)
    rates = fqaep_rates(rho, [1, 2, 3], 0.1)
    gaps = [abs(x - h) for x in rates]
    ok = all(b <= a + TOL["fqaep_slack"] for a, b in zip(gaps, gaps[1:]))
    assert report(8, ok, "gaps " + ", ".join(f"{g:.4f}" for g in gaps))


def _cli(argv):
    proc = subprocess.run([sys.executable, "-m", "qcap.cli", *argv], capture_output=True, check=False)
    return proc.returncode, proc.stdout


def test_criterion_09_cli_determinism(report, tmp_path):
    ident = tmp_path / "id.json"
    ident.write_text(json.dumps({"version": 1, "kind": "standard", "dims": [2, 2], "data": {"name": "identity"}}))
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps({
        "version": 1, "J": 2, "r": 2, "d_rr": 1, "state": {"kind": "random", "seed": 4},
        "map": {"version": 1, "kind": "standard", "dims": [4, 4], "data": {"name": "depolarizing", "param": 0.3}}}))
    phi = tmp_path / "phi.json"
    phi.write_text(json.dumps(state_to_doc(max_entangled(2))))
    commands = [
        ["decouple", "--instance", str(inst), "--samples", "300", "--seed", "5"],
        ["bound", "--channel", str(ident), "--mode", "direct", "--c", "0", "--q", "1", "--e", "0", "--delta", "2"],
        ["region", "--channel", str(ident), "--mode", "asymptotic", "--samples", "3", "--seed", "1"],
        ["entropy", "--state", str(phi), "--which", "hmin"],
    ]
    differing = []
    for argv in commands:
        a, b = _cli(argv), _cli(argv)
        if a[0] != 0 or a != b:
            differing.append(argv[0])
    assert report(9, not differing, f"{len(commands)} commands, non-identical or failing: {differing}")


def test_criterion_10_lemmas(report):
    rng = np.random.default_rng(SEED)
    comp = coh = 0
    for _ in range(100):
        rho_b, sig_b, p = composition_instance(rng)
        rho, sigma, hyp_c, hyp_q = cq_pair(rho_b, sig_b, p)
        comp += trace_distance(rho, sigma) > 3 * max(hyp_c, hyp_q) + TOL["lemma"]
    for _ in range(100):
        probs, states, phis, db = coherent_instance(rng)
        da, nblk = states[0].shape[0], len(probs)
        phi = coherent_vector(probs, phis, da, db)
        rho_xa = np.zeros((nblk * da, nblk * da), dtype=np.complex128)
        for k in range(nblk):
            rho_xa[k * da:(k + 1) * da, k * da:(k + 1) * da] = probs[k] * states[k]
        delta = trace_distance(xa_marginal(phi, nblk, da, db), rho_xa)
        psi = coherent_purification(probs, states, phis, db)
        dist = trace_distance(np.outer(psi, psi.conj()), np.outer(phi, phi.conj()))
        coh += dist > 2 * np.sqrt(delta) + TOL["lemma"]
    assert report(10, comp == 0 and coh == 0,
                  f"composition violations {comp}/100, coherent purification violations {coh}/100")
