"""One-shot direct and converse conditions for simultaneous classical-quantum coding.

An input ensemble is a state ``rho`` on ``[Sc, Sr, A]`` that is block diagonal
in ``Sc``.  Every condition is evaluated on the channel output ``N(rho)`` on
``[Sc, Sr, B]``.  Logarithms are base 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from qcap.channels import ChannelRep, apply
from qcap.config import TOL
from qcap.entropies import hmax_smooth
from qcap.linalg import (
    DensityOperator,
    StateError,
    SystemLayout,
    dephase,
    max_entangled_vector,
    partial_trace_matrix,
)

# numerical slack when comparing rates with SDP-derived entropies
FEASIBILITY_SLACK = 1e-6

CLASSICAL, QUANTUM = "classical", "quantum"
NONE, UNLIMITED = "none", "unlimited"


class BoundError(ValueError):
    """Raised for invalid codes, budgets or ensembles."""


@dataclass(frozen=True)
class CodeParams:
    """Target rates ``(c, q, e)`` and the tolerated error ``delta``."""

    c: float = 0.0
    q: float = 0.0
    e: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        if self.c < 0 or self.q < 0:
            raise BoundError(f"rates must be nonnegative, got c={self.c}, q={self.q}")
        if not 0 < self.delta <= 2:
            raise BoundError(f"delta = {self.delta} outside (0, 2]")


@dataclass(frozen=True)
class SmoothingBudget:
    """Free parameters of the direct and converse theorems."""

    epsilon: float = 0.0
    delta1: float = 0.5
    delta2: float = 0.5
    delta_prime: float = 0.5
    iota: float = 1.0

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise BoundError(f"epsilon = {self.epsilon} outside [0, 1)")
        if not 0 < self.iota <= 1:
            raise BoundError(f"iota = {self.iota} outside (0, 1]")
        for name in ("delta1", "delta2", "delta_prime"):
            if getattr(self, name) <= 0:
                raise BoundError(f"{name} must be positive")


@dataclass(frozen=True)
class InputEnsemble:
    """``rho`` on ``[Sc, Sr, A]`` with ``rho = sum_j p_j |j><j| (x) rho_j``."""

    rho: DensityOperator

    def __post_init__(self):
        if self.rho.layout.labels != ("Sc", "Sr", "A"):
            raise StateError(f"ensemble layout must be [Sc, Sr, A], got {self.rho.layout.labels}")
        resid = np.abs(self.rho.matrix - dephase(self.rho, "Sc").matrix).max()
        if resid > TOL.hermitian:
            raise StateError(f"ensemble is not block diagonal in Sc (residual {resid:.3e})")

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray], d_sr: int, probs: Sequence[float] | None = None
                    ) -> "InputEnsemble":
        """Assemble ``sum_j p_j |j><j| (x) rho_j`` from normalized blocks on ``[Sr, A]``."""
        blocks = [np.asarray(b, dtype=np.complex128) for b in blocks]
        dsc = len(blocks)
        n = blocks[0].shape[0]
        if n % d_sr:
            raise StateError(f"block dimension {n} is not a multiple of d_Sr = {d_sr}")
        probs = np.full(dsc, 1 / dsc) if probs is None else np.asarray(probs, dtype=float)
        m = np.zeros((dsc * n, dsc * n), dtype=np.complex128)
        for j, (p, b) in enumerate(zip(probs, blocks)):
            m[j * n:(j + 1) * n, j * n:(j + 1) * n] = p * b
        lay = SystemLayout.of(("Sc", dsc), ("Sr", d_sr), ("A", n // d_sr))
        return cls(DensityOperator.from_matrix(m, lay, "normalized", clean=True))

    @classmethod
    def maximally_entangled(cls, d: int) -> "InputEnsemble":
        """``Phi_d`` between ``S = S_r`` and ``A`` (``d_Sc = 1``)."""
        v = max_entangled_vector(d)
        return cls.from_blocks([np.outer(v, v.conj())], d)

    @classmethod
    def classical(cls, d: int) -> "InputEnsemble":
        """``(1/d) sum_j |j><j|_{S_c} (x) |j><j|_A`` (``d_Sr = 1``)."""
        return cls.from_blocks([np.diag(np.eye(d)[j]) for j in range(d)], 1)

    @classmethod
    def padded(cls, ens: "InputEnsemble", d_sc: int) -> "InputEnsemble":
        """``(1/d') sum_j |j><j| (x) rho^{SA}`` with the whole old ``S`` as the new ``S_r``."""
        merged = ens.rho.matrix
        d_s = ens.d_sc * ens.d_sr
        return cls.from_blocks([merged] * d_sc, d_s)

    @property
    def d_sc(self) -> int:
        return self.rho.layout.dim_of("Sc")

    @property
    def d_sr(self) -> int:
        return self.rho.layout.dim_of("Sr")

    @property
    def d_a(self) -> int:
        return self.rho.layout.dim_of("A")

    @property
    def d_s(self) -> int:
        return self.d_sc * self.d_sr

    @property
    def probs(self) -> np.ndarray:
        n = self.d_sr * self.d_a
        return np.array([np.trace(self.rho.matrix[j * n:(j + 1) * n, j * n:(j + 1) * n]).real
                         for j in range(self.d_sc)])

    def blocks(self) -> list[np.ndarray]:
        """Normalized ``rho_j`` on ``[Sr, A]`` (maximally mixed where ``p_j = 0``)."""
        n = self.d_sr * self.d_a
        out = []
        for j, p in enumerate(self.probs):
            b = self.rho.matrix[j * n:(j + 1) * n, j * n:(j + 1) * n]
            out.append(b / p if p > TOL.trace else np.eye(n) / n)
        return out

    def marginal_s(self) -> np.ndarray:
        return partial_trace_matrix(self.rho.matrix, self.rho.dims, [0, 1])

    def require_maximally_mixed(self) -> None:
        resid = np.abs(self.marginal_s() - np.eye(self.d_s) / self.d_s).max()
        if resid > TOL.equality:
            raise StateError(f"rho^S is not maximally mixed (residual {resid:.3e})")


def channel_on_a(channel: ChannelRep) -> ChannelRep:
    return ChannelRep(channel.kind, channel.data, SystemLayout.of(("A", channel.d_in)),
                      SystemLayout.of(("B", channel.d_out)), channel.env_label)


def output_state(ens: InputEnsemble, channel: ChannelRep) -> DensityOperator:
    """``N(rho)`` on ``[Sc, Sr, B]``."""
    if channel.d_in != ens.d_a:
        raise BoundError(f"channel input dimension {channel.d_in} differs from dim A = {ens.d_a}")
    return apply(channel_on_a(channel), ens.rho, on=["A"])


def _hmax(state: DensityOperator, eps: float, a: list[str], b: list[str]) -> float:
    return float(hmax_smooth(state, eps, a, b).value)


def _log(x: float) -> float:
    return float(np.log2(x)) if x > 0 else float("-inf")


# ---------------------------------------------------------------------------
# smoothing parameters of the converse
# ---------------------------------------------------------------------------


def converse_x(delta: float) -> float:
    return float(2 * delta ** 0.125)


def lam(delta: float, iota: float) -> float:
    """``2 sqrt(iota + 2 x^2) + x + 2 x^2`` with ``x = 2 delta^{1/8}``."""
    x = converse_x(delta)
    return float(2 * np.sqrt(iota + 2 * x * x) + x + 2 * x * x)


def lam_prime(delta: float, iota: float) -> float:
    """``sqrt(4 sqrt(iota + 2x) + 2 sqrt(x) + (4 sqrt(iota + 8) + 24) x)``."""
    x = converse_x(delta)
    return float(np.sqrt(4 * np.sqrt(iota + 2 * x) + 2 * np.sqrt(x) + (4 * np.sqrt(iota + 8) + 24) * x))


def table_epsilon(delta: float, delta_prime: float) -> float:
    """``delta^2 / 16 - sqrt(delta') / 4``."""
    return float(delta ** 2 / 16 - np.sqrt(delta_prime) / 4)


# ---------------------------------------------------------------------------
# limited entanglement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectResult:
    feasible: bool
    achieved_error: float
    slacks: dict
    entropies: dict = field(default_factory=dict)


def direct_error(delta1: float, delta2: float, epsilon: float) -> float:
    return float(2 * np.sqrt(np.sqrt(delta1) + np.sqrt(delta2) + 4 * epsilon))


def budget_for_error(delta: float, epsilon: float, ens: InputEnsemble, code: CodeParams,
                     delta1: float | None = None, delta2: float | None = None) -> SmoothingBudget:
    """Split the target error equally between the active conditions unless ``delta_i`` are given.

    Solves ``2 sqrt(sqrt(delta1) + sqrt(delta2) + 4 eps) = delta`` for the unspecified ``delta_i``.
    """
    room = delta ** 2 / 4 - 4 * epsilon
    if room <= 0:
        raise BoundError(f"epsilon = {epsilon} leaves no room for error {delta}")
    active1 = not (ens.d_sc == 1 and code.c == 0)
    active2 = not (ens.d_sr == 1 and code.q == 0 and code.e == 0)
    fixed = sum(np.sqrt(x) for x in (delta1, delta2) if x is not None)
    free = [k for k, (v, act) in enumerate(((delta1, active1), (delta2, active2))) if v is None and act]
    share = (room - fixed) / len(free) if free else 0.0
    if free and share <= 0:
        raise BoundError("given delta1/delta2 already exceed the error budget")
    d = [delta1, delta2]
    for k in free:
        d[k] = share ** 2
    d = [x if x is not None else 0.5 for x in d]
    return SmoothingBudget(epsilon=epsilon, delta1=d[0], delta2=d[1])


def delta_prime_for_error(delta: float, epsilon: float) -> float:
    """Largest ``delta'`` with ``2 sqrt(sqrt(2 delta') + sqrt(delta') + 4 eps) <= delta``, capped at ``1 - 2 eps``."""
    room = delta ** 2 / 4 - 4 * epsilon
    if room <= 0:
        raise BoundError(f"epsilon = {epsilon} leaves no room for error {delta}")
    return float(min((room / (1 + np.sqrt(2))) ** 2, 1 - 2 * epsilon))


def direct_feasible(ens: InputEnsemble, channel: ChannelRep, code: CodeParams,
                    budget: SmoothingBudget = SmoothingBudget()) -> DirectResult:
    """Check the sufficient conditions for ``(c, q, e)`` at the error they certify.

    Slack keys are ``dimension`` (``log d_Sc - c``), ``total`` (``log d_Sr - q - e``),
    ``classical`` and ``quantum``.  A condition removed by a degenerate branch
    has slack ``+inf`` and its ``delta_i`` does not enter the error.
    """
    eps = budget.epsilon
    out = output_state(ens, channel)
    no_classical = ens.d_sc == 1 and code.c == 0
    no_quantum = ens.d_sr == 1 and code.q == 0 and code.e == 0
    if ens.d_sc < 2 and not no_classical:
        slacks = {"dimension": _log(ens.d_sc) - code.c}
        return DirectResult(False, float("nan"), slacks)
    slacks = {"dimension": _log(ens.d_sc) - code.c, "total": _log(ens.d_sr) - code.q - code.e}
    ent = {}
    if no_classical:
        slacks["classical"] = float("inf")
        d1 = 0.0
    else:
        h = _hmax(out, eps, ["Sc", "Sr"], ["B"])
        ent["Hmax(S|B)"] = h
        slacks["classical"] = -h + _log(ens.d_sc - 1) + _log(budget.delta1) - (code.c + code.q - code.e)
        d1 = budget.delta1
    if no_quantum:
        slacks["quantum"] = float("inf")
        d2 = 0.0
    else:
        h = _hmax(out, eps, ["Sr"], ["B", "Sc"])
        ent["Hmax(Sr|BSc)"] = h
        slacks["quantum"] = -h + _log(budget.delta2) - (code.q - code.e)
        d2 = budget.delta2
    ok = all(v >= -FEASIBILITY_SLACK for v in slacks.values())
    return DirectResult(ok, direct_error(d1, d2, eps), slacks, ent)


@dataclass(frozen=True)
class ConverseResult:
    holds: bool
    lam: float
    lam_prime: float
    saturated: tuple
    slacks: dict
    entropies: dict = field(default_factory=dict)


def converse_holds(ens: InputEnsemble, channel: ChannelRep, code: CodeParams, iota: float) -> ConverseResult:
    """Evaluate the three necessary conditions for ``ens`` at ``delta = code.delta``.

    A smoothing parameter ``>= 1`` makes its inequality vacuous; it is then
    reported as holding and saturated.
    """
    if not 0 < iota <= 1:
        raise BoundError(f"iota = {iota} outside (0, 1]")
    ens.require_maximally_mixed()
    out = output_state(ens, channel)
    lm, lp = lam(code.delta, iota), lam_prime(code.delta, iota)
    slacks = {"total": _log(ens.d_sr) - code.q - code.e}
    ent = {}
    if lm < 1:
        h = _hmax(out, lm, ["Sc", "Sr"], ["B"])
        ent["Hmax(S|B)"] = h
        slacks["classical"] = -h + _log(ens.d_sc) - _log(iota) - (code.c + code.q - code.e)
    else:
        slacks["classical"] = float("inf")
    if lp < 1:
        h = _hmax(out, lp, ["Sr"], ["B", "Sc"])
        ent["Hmax(Sr|BSc)"] = h
        slacks["quantum"] = -h - _log(iota) - (code.q - code.e)
    else:
        slacks["quantum"] = float("inf")
    ok = all(v >= -FEASIBILITY_SLACK for v in slacks.values())
    return ConverseResult(ok, lm, lp, (lm >= 1, lp >= 1), slacks, ent)


# ---------------------------------------------------------------------------
# unlimited entanglement
# ---------------------------------------------------------------------------


def unlimited_error(delta_prime: float, epsilon: float) -> float:
    return float(2 * np.sqrt(np.sqrt(2 * delta_prime) + np.sqrt(delta_prime) + 4 * epsilon))


def unlimited_direct(ens: InputEnsemble, channel: ChannelRep, code_cq: tuple[float, float],
                     budget: SmoothingBudget = SmoothingBudget()) -> DirectResult:
    """``c + 2q <= log d_S - H_max^eps(S|B) + log delta'``."""
    c, q = code_cq
    eps, dp = budget.epsilon, budget.delta_prime
    if not 0 <= eps < 0.5:
        raise BoundError(f"epsilon = {eps} outside [0, 1/2)")
    if not 0 < dp <= 1 - 2 * eps:
        raise BoundError(f"delta' = {dp} outside (0, 1 - 2 epsilon]")
    ens.require_maximally_mixed()
    h = _hmax(output_state(ens, channel), eps, ["Sc", "Sr"], ["B"])
    slack = _log(ens.d_s) - h + _log(dp) - (c + 2 * q)
    return DirectResult(slack >= -FEASIBILITY_SLACK, unlimited_error(dp, eps), {"rate": slack}, {"Hmax(S|B)": h})


def unlimited_converse(ens: InputEnsemble, channel: ChannelRep, code_cq: tuple[float, float],
                       iota: float, delta: float) -> ConverseResult:
    """``c + 2q <= log d_S - H_max^lambda(S|B) - log iota``."""
    c, q = code_cq
    if not 0 < iota <= 1:
        raise BoundError(f"iota = {iota} outside (0, 1]")
    ens.require_maximally_mixed()
    lm = lam(delta, iota)
    ent = {}
    if lm < 1:
        h = _hmax(output_state(ens, channel), lm, ["Sc", "Sr"], ["B"])
        ent["Hmax(S|B)"] = h
        slack = _log(ens.d_s) - h - _log(iota) - (c + 2 * q)
    else:
        slack = float("inf")
    return ConverseResult(slack >= -FEASIBILITY_SLACK, lm, lam_prime(delta, iota), (lm >= 1, False),
                          {"rate": slack}, ent)


# ---------------------------------------------------------------------------
# capacity estimates per assistance scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchConfig:
    grid: int = 3
    n_delta_prime: int = 4
    n_iota: int = 5
    refine: bool = True
    maxiter: int = 20


def isotropic_ensemble(d: int, coherence: float, noise: float) -> InputEnsemble:
    """``(1 - w) [t Phi + (1 - t) C(Phi)] + w pi (x) pi`` on ``S = S_r`` and ``A``; ``rho^S`` stays maximally mixed."""
    v = max_entangled_vector(d)
    phi = np.outer(v, v.conj())
    deph = np.diag(np.diag(phi))
    m = (1 - noise) * (coherence * phi + (1 - coherence) * deph) + noise * np.eye(d * d) / (d * d)
    return InputEnsemble.from_blocks([m], d)


def _scenario_state(out: DensityOperator, classical_none: bool) -> DensityOperator:
    if classical_none:
        return dephase(dephase(out, "Sc"), "Sr")
    return out


def _lower_value(out: DensityOperator, d_s: int, scenario: tuple[str, str], delta: float,
                 dps: np.ndarray) -> tuple[float, float]:
    kind, ent = scenario
    cn = kind == CLASSICAL and ent == NONE
    st = _scenario_state(out, cn)
    best, best_dp = -np.inf, float(dps[-1])
    for dp in dps:
        eps = max(0.0, table_epsilon(delta, dp))
        h = _hmax(st, eps, ["Sc", "Sr"], ["B"])
        if cn:
            v = _log(d_s) - h + _log(2 * dp)
        elif kind == CLASSICAL:
            v = _log(d_s) - h + _log(dp)
        elif ent == NONE:
            v = -h + _log(dp)
        else:
            v = 0.5 * (_log(d_s) - h + _log(dp))
        if v > best:
            best, best_dp = v, float(dp)
    return best, best_dp


def _upper_value(out: DensityOperator, d_s: int, scenario: tuple[str, str], delta: float,
                 iotas: np.ndarray) -> tuple[float, float]:
    kind, ent = scenario
    cn = kind == CLASSICAL and ent == NONE
    st = _scenario_state(out, cn)
    best, best_iota = np.inf, 1.0
    for iota in iotas:
        smooth = lam(delta, iota) if cn else lam_prime(delta, iota)
        if smooth >= 1:
            continue
        h = _hmax(st, smooth, ["Sc", "Sr"], ["B"])
        if kind == QUANTUM and ent == NONE:
            v = -h - _log(iota)
        elif kind == QUANTUM:
            v = 0.5 * (_log(d_s) - h - _log(iota))
        else:
            v = _log(d_s) - h - _log(iota)
        if v < best:
            best, best_iota = v, float(iota)
    return best, best_iota


@dataclass(frozen=True)
class CapacityEstimate:
    lower: float
    upper: float
    best_ensemble: tuple
    best_delta_prime: float
    raw_lower: float
    raw_upper: float


def capacity_estimate(channel: ChannelRep, scenario: tuple[str, str], delta: float,
                      search_cfg: SearchConfig = SearchConfig()) -> CapacityEstimate:
    """Lower and upper capacity expressions optimized over the isotropic ensemble family.

    The lower bound is a sup over the family and ``delta'``.  The upper entry
    is the sup over the same family of the inf over ``iota``; a vacuous
    smoothing at every ``iota`` gives ``+inf``.  Both are clamped below at 0.
    """
    kind, ent = scenario
    if kind not in (CLASSICAL, QUANTUM) or ent not in (NONE, UNLIMITED):
        raise BoundError(f"unknown scenario {scenario}")
    if not 0 < delta <= 2:
        raise BoundError(f"delta = {delta} outside (0, 2]")
    d = channel.d_in
    dps = np.geomspace(delta ** 4 / 16 * 1e-3, delta ** 4 / 16, search_cfg.n_delta_prime)
    iotas = np.geomspace(1e-3, 1.0, search_cfg.n_iota)
    cache: dict = {}

    def evaluate(t: float, w: float):
        t, w = float(np.clip(t, 0, 1)), float(np.clip(w, 0, 1))
        key = (round(t, 10), round(w, 10))
        if key not in cache:
            ens = isotropic_ensemble(d, t, w)
            out = output_state(ens, channel)
            lo, dp = _lower_value(out, ens.d_s, scenario, delta, dps)
            hi, _ = _upper_value(out, ens.d_s, scenario, delta, iotas)
            cache[key] = (lo, dp, hi)
        return cache[key]

    grid = np.linspace(0, 1, search_cfg.grid)
    pts = [(t, w) for t in grid for w in grid]
    vals = {p: evaluate(*p) for p in pts}
    best = max(pts, key=lambda p: vals[p][0])
    best_lo, best_dp, _ = vals[best]
    if search_cfg.refine and np.isfinite(best_lo):
        res = minimize(lambda z: -evaluate(*z)[0], np.array(best), method="Nelder-Mead",
                       options={"maxiter": search_cfg.maxiter, "xatol": 1e-3, "fatol": 1e-6})
        z = tuple(float(v) for v in np.clip(res.x, 0, 1))
        if evaluate(*z)[0] > best_lo:
            best = z
            best_lo, best_dp, _ = evaluate(*z)
    upper = max(v[2] for v in cache.values())
    return CapacityEstimate(max(0.0, best_lo), max(0.0, upper), best, best_dp, best_lo, upper)


# ---------------------------------------------------------------------------
# simultaneous rate regions
# ---------------------------------------------------------------------------


@dataclass
class OneShotRegions:
    inner: list
    outer: list
    skipped: list

    def inner_vertices(self) -> list:
        return [v for reg in self.inner for v in reg.vertices]

    def outer_contains(self, point, tol: float = 1e-8) -> bool:
        return any(reg.contains(point, tol) for reg in self.outer)


@dataclass(frozen=True)
class GridConfig:
    n_delta_prime: int = 4
    n_iota: int = 6


def inner_inequalities(ens: InputEnsemble, out: DensityOperator, delta: float, delta_prime: float):
    """Half-planes of ``Gamma_in`` in ``(c, q)`` plus the code-size limits of the direct theorem."""
    from qcap.asymptotic import nonnegativity

    eps = table_epsilon(delta, delta_prime)
    if eps < 0:
        return None
    ineq = nonnegativity(2)
    ineq.append((np.array([1.0, 0.0]), _log(ens.d_sc)))
    ineq.append((np.array([0.0, 1.0]), _log(ens.d_sr)))
    if ens.d_sc >= 2:
        h = _hmax(out, eps, ["Sc", "Sr"], ["B"])
        ineq.append((np.array([1.0, 1.0]), -h + _log(ens.d_sc - 1) + _log(delta_prime)))
    else:
        ineq.append((np.array([1.0, 0.0]), 0.0))
    if ens.d_sr >= 2:
        h = _hmax(out, eps, ["Sr"], ["B", "Sc"])
        ineq.append((np.array([0.0, 1.0]), -h + _log(delta_prime * (1 - 2 * eps))))
    else:
        ineq.append((np.array([0.0, 1.0]), 0.0))
    return ineq


def outer_inequalities(ens: InputEnsemble, out: DensityOperator, delta: float, iotas: Sequence[float]):
    """Intersection over ``iota`` of the ``Gamma_out`` half-planes."""
    from qcap.asymptotic import nonnegativity

    ineq = nonnegativity(2)
    for iota in iotas:
        lm, lp = lam(delta, iota), lam_prime(delta, iota)
        if lm < 1:
            h = _hmax(out, lm, ["Sc", "Sr"], ["B"])
            ineq.append((np.array([1.0, 1.0]), -h + _log(ens.d_sc) - _log(iota)))
        if lp < 1:
            h = _hmax(out, lp, ["Sr"], ["B", "Sc"])
            ineq.append((np.array([0.0, 1.0]), -h - _log(iota)))
    return ineq


def simultaneous_region(channel: ChannelRep, delta: float, rho_family: Sequence[InputEnsemble],
                        grid_cfg: GridConfig = GridConfig()) -> OneShotRegions:
    """Per-ensemble inner polygons (one per ``delta'``) and outer polygons (intersection over ``iota``).

    An empty inner polygon is replaced by the origin, since rates are nonnegative.
    """
    from qcap.asymptotic import polytope

    if not 0 < delta <= 2:
        raise BoundError(f"delta = {delta} outside (0, 2]")
    dps = np.geomspace(delta ** 4 / 16 * 1e-4, delta ** 4 / 16, grid_cfg.n_delta_prime)
    iotas = np.geomspace(1e-4, 1.0, grid_cfg.n_iota)
    inner, outer, skipped = [], [], []
    for k, ens in enumerate(rho_family):
        ens.require_maximally_mixed()
        out = output_state(ens, channel)
        for dp in dps:
            ineq = inner_inequalities(ens, out, delta, dp)
            if ineq is None:
                skipped.append((k, float(dp)))
                continue
            inner.append(_clamped(polytope(ineq, f"inner[{k}] delta'={dp:.3g}")))
        outer.append(_clamped(polytope(outer_inequalities(ens, out, delta, iotas), f"outer[{k}]")))
    return OneShotRegions(inner, outer, skipped)


def _clamped(reg):
    """Replace an empty polygon by the origin, which a trivial ``S`` always contributes."""
    from qcap.asymptotic import RateRegion, nonnegativity

    if not reg.is_empty:
        return reg
    ineq = nonnegativity(2) + [(np.array([1.0, 0.0]), 0.0), (np.array([0.0, 1.0]), 0.0)]
    return RateRegion(ineq, [np.zeros(2)], reg.label + " (origin)")


__all__ = [
    "CodeParams", "SmoothingBudget", "InputEnsemble", "BoundError", "DirectResult", "ConverseResult",
    "CapacityEstimate", "SearchConfig", "GridConfig", "OneShotRegions", "direct_feasible", "converse_holds",
    "unlimited_direct", "unlimited_converse", "capacity_estimate", "simultaneous_region", "lam", "lam_prime",
    "table_epsilon", "direct_error", "budget_for_error", "delta_prime_for_error", "unlimited_error", "output_state", "isotropic_ensemble",
]
