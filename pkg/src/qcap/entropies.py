"""Conditional min/max entropies (plain and smoothed) and von Neumann quantities.

All values are in bits.  Every function takes a :class:`DensityOperator`
and the labels of the conditioned system ``a`` and the conditioning system
``b``; factors in neither list are traced out.  With a two-factor layout
the defaults are ``a = first`` and ``b = second``.  Pass ``b=[]`` to
condition on nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qcap import sdp
from qcap.config import TOL
from qcap.linalg import (
    DensityOperator,
    LayoutError,
    SystemLayout,
    _purify_matrix,
    hermitian_part,
    partial_trace_matrix,
    permute_matrix,
    purified_distance,
    psd_inv_sqrt,
    psd_sqrt,
    trace_norm,
)

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near-optimal"
INFEASIBLE = "infeasible"

# fidelity blocks are ill-conditioned near the ball boundary; solve them tighter
FIDELITY_TIGHTEN = 1e-2
SUPPORT_CUTOFF = 1e-12


class EntropyError(ValueError):
    """Raised for invalid smoothing parameters or system selections."""


@dataclass(frozen=True)
class SmoothEntropyResult:
    """Outcome of an entropy program.

    ``achiever`` is the smoothed state for ``hmin_smooth`` and the optimal
    (normalized) conditioning state for ``hmin``; ``sigma`` always holds the
    conditioning state when one was computed.
    """

    value: float
    epsilon: float
    achiever: DensityOperator | None
    status: str
    duality_gap: float
    sigma: DensityOperator | None = None

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise EntropyError(f"epsilon {self.epsilon} outside [0, 1)")
        if self.duality_gap < 0:
            raise EntropyError("negative duality gap")

    def __float__(self) -> float:
        return float(self.value)


# ---------------------------------------------------------------------------
# system selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Bipartite:
    matrix: np.ndarray
    la: SystemLayout
    lb: SystemLayout

    @property
    def da(self) -> int:
        return self.la.dim

    @property
    def db(self) -> int:
        return self.lb.dim


def _split(rho: DensityOperator, a: Sequence[str] | None, b: Sequence[str] | None) -> _Bipartite:
    labels = rho.layout.labels
    if a is None and b is None:
        if len(labels) != 2:
            raise EntropyError(f"specify systems explicitly for a {len(labels)}-factor layout")
        a, b = [labels[0]], [labels[1]]
    elif a is None:
        a = [lab for lab in labels if lab not in b]
    elif b is None:
        b = [lab for lab in labels if lab not in a]
    a, b = list(a), list(b)
    if set(a) & set(b):
        raise EntropyError(f"systems overlap: {sorted(set(a) & set(b))}")
    if not a:
        raise EntropyError("conditioned system is empty")
    pos_a = [rho.layout.index(x) for x in a]
    pos_b = [rho.layout.index(x) for x in b]
    keep = sorted(pos_a + pos_b)
    m = partial_trace_matrix(rho.matrix, rho.dims, keep)
    kept_dims = [rho.dims[p] for p in keep]
    order = [keep.index(p) for p in pos_a + pos_b]
    m = permute_matrix(m, kept_dims, order)
    la = SystemLayout(tuple(rho.layout.factors[p] for p in pos_a))
    lb = SystemLayout(tuple(rho.layout.factors[p] for p in pos_b))
    return _Bipartite(hermitian_part(m), la, lb)


def _state(m: np.ndarray, layout: SystemLayout) -> DensityOperator:
    return DensityOperator.from_matrix(m, layout, clean=True)


def _check_eps(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not 0 <= epsilon < 1:
        raise EntropyError(f"smoothing parameter {epsilon} outside [0, 1)")
    return epsilon


def _gap_bits(sol: sdp.Solution) -> float:
    """Duality gap expressed in bits, ``|log2(primal / dual)|``."""
    if not (sol.primal > 0 and sol.dual > 0):
        return float(sol.gap)
    return float(abs(np.log2(sol.primal / sol.dual)))


def _status(sol: sdp.Solution, gap_bits: float) -> str:
    if sol.status == INFEASIBLE:
        return INFEASIBLE
    return OPTIMAL if sol.status == OPTIMAL and gap_bits <= TOL.near_optimal_gap else NEAR_OPTIMAL


# ---------------------------------------------------------------------------
# min-entropy
# ---------------------------------------------------------------------------


def hmin_fixed(rho: DensityOperator, varsigma: DensityOperator, a=None, b=None) -> float:
    """``H_min(A|B)_{rho|varsigma}``; ``-inf`` if ``rho`` is not supported on ``I (x) supp(varsigma)``."""
    bp = _split(rho, a, b)
    if varsigma.layout.dim != bp.db:
        raise LayoutError(f"conditioning state has dimension {varsigma.layout.dim}, expected {bp.db}")
    w, v = np.linalg.eigh(hermitian_part(varsigma.matrix))
    off = v[:, w <= TOL.kraus_rank_cutoff]
    if off.shape[1]:
        proj = np.kron(np.eye(bp.da), off @ off.conj().T)
        if np.abs(np.trace(proj @ bp.matrix)) > TOL.equality:
            return float("-inf")
    s = np.kron(np.eye(bp.da), psd_inv_sqrt(varsigma.matrix, TOL.kraus_rank_cutoff))
    top = np.linalg.eigvalsh(hermitian_part(s @ bp.matrix @ s)).max()
    if top <= 0:
        return float("inf")
    return float(-np.log2(top))


def _hmin_program(bp: _Bipartite):
    m = sdp.Model()
    sig = m.hermitian(bp.db)
    m.psd(sdp.kron_eye_left(bp.da, sig) - bp.matrix)
    m.psd(sig)
    return m, sig


def _feasible_sigma(rho: np.ndarray, sig: np.ndarray, da: int) -> np.ndarray:
    """Shift ``sig`` by a multiple of the identity until ``I (x) sig >= rho`` holds exactly."""
    w, v = np.linalg.eigh(hermitian_part(sig))
    sig = (v * np.clip(w, 0, None)) @ v.conj().T
    db = sig.shape[0]
    excess = np.linalg.eigvalsh(hermitian_part(rho - np.kron(np.eye(da), sig))).max()
    if excess > 0:
        sig = sig + excess * np.eye(db)
    return sig


def _hmin_matrix(bp: _Bipartite):
    """Solve the min-entropy program; returns ``(value, sigma, status, gap_bits)``."""
    m, sig = _hmin_program(bp)
    sol = m.solve(sig.trace(), "min")
    if sol.status == INFEASIBLE:
        return float("nan"), None, INFEASIBLE, float("inf")
    s = _feasible_sigma(bp.matrix, sol.value(sig), bp.da)
    tr = np.trace(s).real
    if tr <= 0:
        return float("inf"), None, _status(sol, 0.0), 0.0
    value = float(-np.log2(tr))
    gap = abs(np.log2(tr / sol.dual)) if sol.dual > 0 else _gap_bits(sol)
    return value, s, _status(sol, gap), float(gap)


def hmin(rho: DensityOperator, a=None, b=None) -> SmoothEntropyResult:
    """``H_min(A|B)_rho = -log min{Tr sigma : I (x) sigma >= rho}``.

    The reported value comes from an exactly feasible ``sigma``, so it never
    overstates the min-entropy; the gap is measured against the dual bound.
    """
    bp = _split(rho, a, b)
    value, s, status, gap = _hmin_matrix(bp)
    if s is None:
        return SmoothEntropyResult(value, 0.0, None, status, gap)
    sigma = _state(s / np.trace(s).real, bp.lb)
    return SmoothEntropyResult(value, 0.0, sigma, status, gap, sigma)


def hmin_smooth(rho: DensityOperator, epsilon: float, a=None, b=None) -> SmoothEntropyResult:
    """``max`` of ``H_min(A|B)`` over the purified-distance ball of radius ``epsilon``.

    The fidelity condition is ``F(rho, rho_hat) + sqrt((1 - Tr rho)(1 - Tr rho_hat)) >= sqrt(1 - eps^2)``
    with ``F(rho, rho_hat) = max Re Tr X`` subject to ``[[rho, X], [X^dag, rho_hat]] >= 0``.
    """
    epsilon = _check_eps(epsilon)
    if epsilon == 0:
        return hmin(rho, a, b)
    bp = _split(rho, a, b)
    sol, rh_val = _hmin_smooth_program(bp, np.sqrt(1 - epsilon**2))
    if sol.status == INFEASIBLE:
        return SmoothEntropyResult(float("nan"), epsilon, None, INFEASIBLE, float("inf"))
    hat = _pull_into_ball(bp.matrix, rh_val, epsilon)
    # evaluate the in-ball point exactly; the conic optimum bounds it from above
    value, s, status, gap = _hmin_matrix(_Bipartite(hat, bp.la, bp.lb))
    sdp_value = float(-np.log2(sol.primal))
    gap = gap + max(0.0, sdp_value - value) + _gap_bits(sol)
    if status != INFEASIBLE:
        status = _status(sol, gap)
    sigma = _state(s / np.trace(s).real, bp.lb) if s is not None and np.trace(s).real > 0 else None
    return SmoothEntropyResult(value, epsilon, _state(hat, bp.la.concat(bp.lb)), status, gap, sigma)


def _hmin_smooth_program(bp: "_Bipartite", target: float):
    """Conic program for the smoothed min-entropy with fidelity target ``target``."""
    n = bp.da * bp.db
    m = sdp.Model()
    sig = m.hermitian(bp.db)
    rh = m.hermitian(n)
    # restrict the fidelity block to the support of rho, so that it has a strictly
    # feasible point; X = V Y with rho = V D V^dag
    w, v = np.linalg.eigh(bp.matrix)
    keep = w > SUPPORT_CUTOFF * max(w[-1], 1e-300)
    v, w = v[:, keep], w[keep]
    y = m.complex_matrix(len(w), n)
    m.psd(sdp.kron_eye_left(bp.da, sig) - rh)
    m.psd(sig)
    m.psd(rh)
    m.nonneg(1 - rh.trace())
    m.psd(sdp.block([[sdp.Affine.const(np.diag(w).astype(complex)), y], [y.H, rh]]))
    fid = y.lmul(v).trace().real()
    deficit = 1 - np.trace(bp.matrix).real
    if deficit > TOL.trace:
        t = m.real()
        m.nonneg(t)
        m.rotated_soc(t, sdp.Affine.const(deficit), 1 - rh.trace())
        m.nonneg(fid + t - target)
    else:
        m.nonneg(fid - target)
    sol = m.solve(sig.trace(), "min", tighten=FIDELITY_TIGHTEN)
    rh_val = None if sol.status == INFEASIBLE else hermitian_part(sol.value(rh))
    return sol, rh_val


def _clean_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    m = (v * np.clip(w, 0, None)) @ v.conj().T
    tr = np.trace(m).real
    return m / tr if tr > 1 else m


def _pull_into_ball(rho: np.ndarray, hat: np.ndarray, eps: float) -> np.ndarray:
    """Clean solver output and, if it sits even marginally outside the ball, mix it toward ``rho``."""
    hat = _clean_psd(hat)
    if purified_distance(rho, hat) <= eps:
        return hat
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if purified_distance(rho, (1 - mid) * hat + mid * rho) <= eps:
            hi = mid
        else:
            lo = mid
    return (1 - hi) * hat + hi * rho


# ---------------------------------------------------------------------------
# max-entropy
# ---------------------------------------------------------------------------


def _purified_ac(bp: _Bipartite) -> DensityOperator:
    """Marginal on ``A C`` of a purification ``ABC`` of the bipartite operator."""
    vec, dc = _purify_matrix(bp.matrix)
    t = vec.reshape(bp.da, bp.db, dc)
    m = np.einsum("abc,xby->acxy", t, t.conj()).reshape(bp.da * dc, bp.da * dc)
    layout = bp.la.concat(SystemLayout.of(("_purifier", dc)))
    return DensityOperator.from_matrix(m, layout, clean=True)


def hmax_direct(rho: DensityOperator, a=None, b=None) -> SmoothEntropyResult:
    """``H_max(A|B) = 2 log max_varsigma F(rho, I (x) varsigma)`` solved as a fidelity program."""
    bp = _split(rho, a, b)
    n = bp.da * bp.db
    m = sdp.Model()
    vs = m.hermitian(bp.db)
    x = m.complex_matrix(n, n)
    m.psd(vs)
    m.equal(vs.trace() - 1)
    m.psd(sdp.block([[sdp.Affine.const(bp.matrix), x], [x.H, sdp.kron_eye_left(bp.da, vs)]]))
    sol = m.solve(x.trace().real(), "max", tighten=FIDELITY_TIGHTEN)
    if sol.status == INFEASIBLE:
        return SmoothEntropyResult(float("nan"), 0.0, None, INFEASIBLE, float("inf"))
    w, v = np.linalg.eigh(hermitian_part(sol.value(vs)))
    s = (v * np.clip(w, 0, None)) @ v.conj().T
    s = s / np.trace(s).real
    # exact fidelity at the cleaned conditioning state is a valid lower bound
    fid = trace_norm(psd_sqrt(bp.matrix) @ np.kron(np.eye(bp.da), psd_sqrt(s)))
    value = float(2 * np.log2(fid))
    gap = 2 * _gap_bits(sol) + max(0.0, 2 * np.log2(sol.primal) - value)
    sigma = _state(s, bp.lb)
    return SmoothEntropyResult(value, 0.0, sigma, _status(sol, gap), gap, sigma)


def hmax(rho: DensityOperator, a=None, b=None, method: str = "dual") -> SmoothEntropyResult:
    """``H_max(A|B)_rho``; ``method`` is ``"dual"`` (``-H_min(A|C)`` of a purification) or ``"direct"``."""
    if method == "direct":
        return hmax_direct(rho, a, b)
    if method != "dual":
        raise EntropyError(f"unknown method {method!r}")
    bp = _split(rho, a, b)
    ac = _purified_ac(bp)
    r = hmin(ac, list(bp.la.labels), ["_purifier"])
    return SmoothEntropyResult(-r.value, 0.0, None, r.status, r.duality_gap)


def hmax_smooth(rho: DensityOperator, epsilon: float, a=None, b=None) -> SmoothEntropyResult:
    """``H_max^eps(A|B)_rho = -H_min^eps(A|C)`` for a purification on ``ABC``."""
    epsilon = _check_eps(epsilon)
    bp = _split(rho, a, b)
    ac = _purified_ac(bp)
    r = hmin_smooth(ac, epsilon, list(bp.la.labels), ["_purifier"])
    return SmoothEntropyResult(-r.value, epsilon, None, r.status, r.duality_gap)


# ---------------------------------------------------------------------------
# von Neumann quantities
# ---------------------------------------------------------------------------


def entropy_of_matrix(m: np.ndarray) -> float:
    w = np.linalg.eigvalsh(hermitian_part(m))
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log2(w)))


def entropy(rho: DensityOperator, labels: Sequence[str] | None = None) -> float:
    if labels is None:
        return entropy_of_matrix(rho.matrix)
    labels = list(labels)
    if not labels:
        return 0.0
    pos = [rho.layout.index(x) for x in labels]
    return entropy_of_matrix(partial_trace_matrix(rho.matrix, rho.dims, pos))


def von_neumann_cond(rho: DensityOperator, a=None, b=None) -> float:
    """``H(A|B) = H(AB) - H(B)``."""
    bp = _split(rho, a, b)
    mb = partial_trace_matrix(bp.matrix, [bp.da, bp.db], [1])
    return entropy_of_matrix(bp.matrix) - entropy_of_matrix(mb)


def mutual_info(rho: DensityOperator, a=None, b=None) -> float:
    """``I(A:B) = H(A) + H(B) - H(AB)``."""
    bp = _split(rho, a, b)
    ma = partial_trace_matrix(bp.matrix, [bp.da, bp.db], [0])
    mb = partial_trace_matrix(bp.matrix, [bp.da, bp.db], [1])
    return entropy_of_matrix(ma) + entropy_of_matrix(mb) - entropy_of_matrix(bp.matrix)


def cond_mutual_info(rho: DensityOperator, a: Sequence[str], b: Sequence[str], c: Sequence[str]) -> float:
    """``I(A:B|C) = H(AC) + H(BC) - H(ABC) - H(C)``."""
    a, b, c = list(a), list(b), list(c)
    return entropy(rho, a + c) + entropy(rho, b + c) - entropy(rho, a + b + c) - entropy(rho, c)


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def continuity_deficit(epsilon: float, d_a: int) -> float:
    """Lower-bound slack for ``H_max^eps(A|B) >= H(A|B) - deficit`` (requires ``eps < 1/2``).

    A smoothed state in the ball, once renormalized, is within trace distance
    ``t = 2 eps`` (half-norm) of ``rho``; the Alicki-Fannes-Winter bound gives
    ``2 t log d_A + (1 + t) h(t / (1 + t))``, and renormalization costs
    ``-log(1 - 2 eps)``.
    """
    if not 0 <= epsilon < 0.5:
        raise EntropyError("continuity deficit needs epsilon in [0, 1/2)")
    t = 2 * epsilon
    return float(2 * t * np.log2(d_a) + (1 + t) * binary_entropy(t / (1 + t)) - np.log2(1 - 2 * epsilon))
