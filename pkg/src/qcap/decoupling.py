"""Monte-Carlo verification of randomized partial decoupling and of the encoder identity.

A decoupling instance holds a classically coherent state on
``A (x) R_c (x) R_r`` where ``A = A_c (x) A_r`` has ``J`` blocks of size
``r``, together with a CP map ``T: A -> E``.  Matrices are ordered
``[A_c, A_r, R_c, R_r]`` so that the block index of ``A`` is ``j * r + a``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from qcap import kernels
from qcap.bounds import CodeParams, InputEnsemble
from qcap.channels import (
    ChannelRep,
    apply_to_matrix,
    complementary,
    isometry,
    to_choi,
)
from qcap.config import TOL
from qcap.entropies import hmax_smooth, hmin_smooth
from qcap.linalg import (
    DensityOperator,
    PureState,
    StateError,
    SystemLayout,
    as_generator,
    dephase,
    haar_unitary,
    hermitian_part,
    partial_trace_matrix,
    trace_distance,
    trace_norm,
)

CHUNK = 250
DEFAULT_SAMPLES = 2000


class HypothesisError(ValueError):
    """Raised when the premise of the converse bound does not hold for the supplied state."""


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------


def coherence_residual(m: np.ndarray, nblk: int, r: int, d_rr: int) -> float:
    """Largest entry of ``m`` that violates the classically coherent pattern ``|k><l| (x) . (x) |k><l|``."""
    t = np.asarray(m).reshape(nblk, r, nblk, d_rr, nblk, r, nblk, d_rr)
    k = np.arange(nblk)
    mask = np.zeros((nblk, nblk, nblk, nblk), dtype=bool)
    mask[k[:, None], k[:, None], k[None, :], k[None, :]] = True
    allowed = mask[:, None, :, None, :, None, :, None]
    bad = np.where(allowed, 0, np.abs(t))
    return float(bad.max()) if bad.size else 0.0


@dataclass(frozen=True)
class RPDInstance:
    """A classically coherent state ``psi`` on ``[A, Rc, Rr]`` and a CP map ``T: A -> E``."""

    psi: DensityOperator
    map_T: ChannelRep
    epsilon: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        lay = self.psi.layout
        if lay.labels != ("A", "Rc", "Rr") or lay.classical_split is None:
            raise StateError("decoupling state must have layout [A (split), Rc, Rr]")
        _, nblk, r = lay.classical_split
        if lay.dim_of("Rc") != nblk:
            raise StateError(f"dim(Rc) = {lay.dim_of('Rc')} must equal the number of blocks {nblk}")
        res = coherence_residual(self.psi.matrix, nblk, r, lay.dim_of("Rr"))
        if res > TOL.hermitian:
            raise StateError(f"state is not classically coherent (residual {res:.3e})")
        if self.map_T.d_in != nblk * r:
            raise StateError(f"map input dimension {self.map_T.d_in} differs from dim A = {nblk * r}")
        for name, v in (("epsilon", self.epsilon), ("mu", self.mu)):
            if not 0 <= v < 1:
                raise ValueError(f"{name} = {v} outside [0, 1)")

    @property
    def J(self) -> int:
        return self.psi.layout.classical_split[1]

    @property
    def r(self) -> int:
        return self.psi.layout.classical_split[2]

    @property
    def d_rr(self) -> int:
        return self.psi.layout.dim_of("Rr")

    @property
    def d_r(self) -> int:
        return self.J * self.d_rr


def cc_layout(nblk: int, r: int, d_rr: int) -> SystemLayout:
    return SystemLayout.of(("A", nblk * r), ("Rc", nblk), ("Rr", d_rr), classical_split=("A", nblk, r))


def split_layout(nblk: int, r: int, d_rr: int) -> SystemLayout:
    return SystemLayout.of(("Ac", nblk), ("Ar", r), ("Rc", nblk), ("Rr", d_rr))


def coherent_embedding(nblk: int, r: int, d_rr: int) -> np.ndarray:
    """Isometry ``|k, a, b> -> |k>_{A_c} |a>_{A_r} |k>_{R_c} |b>_{R_r}``."""
    v = np.zeros((nblk, r, nblk, d_rr, nblk, r, d_rr))
    for k in range(nblk):
        v[k, :, k, :, k, :, :] = np.einsum("ac,bd->abcd", np.eye(r), np.eye(d_rr))
    return v.reshape(nblk * r * nblk * d_rr, nblk * r * d_rr)


def random_cc_state(nblk: int, r: int, d_rr: int, rank: int | None = None, rng=None) -> DensityOperator:
    """``V M V^dag`` with ``M`` a random density matrix on ``K (x) A_r (x) R_r``."""
    rng = as_generator(rng)
    n = nblk * r * d_rr
    rank = n if rank is None else rank
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    m = g @ g.conj().T
    m /= np.trace(m).real
    v = coherent_embedding(nblk, r, d_rr)
    return DensityOperator.from_matrix(v @ m @ v.T, cc_layout(nblk, r, d_rr), "normalized")


def cc_max_entangled(nblk: int, r: int) -> DensityOperator:
    """``J^{-1/2} sum_k |k>|k> (x) Phi_r`` between ``A`` and ``R`` (with ``d_{R_r} = r``)."""
    w = np.zeros((nblk, r, r), dtype=np.complex128)
    for k in range(nblk):
        w[k] = np.eye(r)
    vec = coherent_embedding(nblk, r, r) @ (w.reshape(-1) / np.sqrt(nblk * r))
    return PureState(vec, cc_layout(nblk, r, r)).density()


def make_instance(psi: DensityOperator, map_T: ChannelRep, epsilon: float = 0.0, mu: float = 0.0) -> RPDInstance:
    """Relabel ``map_T`` so its input is ``A`` and build the instance."""
    t = map_T
    if t.in_layout.labels != ("A",):
        t = ChannelRep(t.kind, t.data, SystemLayout.of(("A", t.d_in)), t.out_layout, t.env_label)
    if t.out_layout.labels != ("E",):
        t = ChannelRep(t.kind, t.data, t.in_layout, SystemLayout.of(("E", t.d_out)), t.env_label)
    return RPDInstance(psi, t, epsilon, mu)


# ---------------------------------------------------------------------------
# averaging and sampling
# ---------------------------------------------------------------------------


def averaged_matrix(m: np.ndarray, nblk: int, r: int, d_rest: int) -> np.ndarray:
    """``sum_j |j><j| (x) pi_r (x) Tr_{A_r} <j| m |j>`` for ``m`` on ``[A_c, A_r, rest]``."""
    t = np.asarray(m).reshape(nblk, r, d_rest, nblk, r, d_rest)
    out = np.zeros_like(t)
    for j in range(nblk):
        red = np.einsum("axay->xy", t[j, :, :, j, :, :])
        for a in range(r):
            out[j, a, :, j, a, :] = red / r
    n = nblk * r * d_rest
    return out.reshape(n, n)


def averaged_state(inst: RPDInstance) -> DensityOperator:
    """Closed form of the block-Haar average of ``U psi U^dag``."""
    m = averaged_matrix(inst.psi.matrix, inst.J, inst.r, inst.d_r)
    return DensityOperator(m, inst.psi.layout, inst.psi.normalization)


def sample_block_unitary(nblk: int, r: int, rng) -> np.ndarray:
    return np.stack([haar_unitary(r, rng) for _ in range(nblk)])


def empirical_average(inst: RPDInstance, n: int, seed=0) -> np.ndarray:
    """Monte-Carlo estimate of the block-Haar average (for comparison with :func:`averaged_state`)."""
    rng = as_generator(seed)
    acc = np.zeros_like(inst.psi.matrix)
    m = np.ascontiguousarray(inst.psi.matrix)
    for _ in range(n):
        acc += kernels.block_conjugate(m, sample_block_unitary(inst.J, inst.r, rng), inst.d_r)
    return acc / n


def _permuted_kraus(kraus: np.ndarray, perm: np.ndarray, nblk: int, r: int) -> np.ndarray:
    """Kraus operators of ``T o G_s``: column block ``j`` of ``K G_s`` is column block ``s(j)`` of ``K``."""
    m, dout, _ = kraus.shape
    k4 = kraus.reshape(m, dout, nblk, r)
    return np.ascontiguousarray(k4[:, :, perm, :].reshape(m, dout, nblk * r))


def _delta(diff: np.ndarray, kraus: np.ndarray, nblk: int, r: int, d_r: int, perm, us) -> float:
    x = kernels.block_conjugate(diff, us, d_r)
    y = kernels.kraus_apply(_permuted_kraus(kraus, perm, nblk, r), x, d_r)
    return float(np.abs(np.linalg.eigvalsh(hermitian_part(y))).sum())


def sample_delta(inst: RPDInstance, seed=None) -> float:
    """One draw of ``|| T o G_s (U psi U^dag - psi_av) ||_1``."""
    rng = as_generator(seed)
    diff = np.ascontiguousarray(inst.psi.matrix - averaged_state(inst).matrix)
    perm = rng.permutation(inst.J)
    us = sample_block_unitary(inst.J, inst.r, rng)
    return _delta(diff, inst.map_T.kraus, inst.J, inst.r, inst.d_r, perm, us)


def sample_delta_with(inst: RPDInstance, perm, us) -> float:
    """``Delta_{s,U}`` for an explicit permutation and block unitaries."""
    diff = np.ascontiguousarray(inst.psi.matrix - averaged_state(inst).matrix)
    return _delta(diff, inst.map_T.kraus, inst.J, inst.r, inst.d_r, np.asarray(perm), np.asarray(us))


@dataclass
class RunningStats:
    """Welford accumulator with Chan's parallel merge."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    def merge(self, other: "RunningStats") -> "RunningStats":
        n = self.count + other.count
        if n == 0:
            return RunningStats()
        d = other.mean - self.mean
        mean = self.mean + d * other.count / n
        m2 = self.m2 + other.m2 + d * d * self.count * other.count / n
        return RunningStats(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else 0.0


def _chunk_stats(diff, kraus, nblk, r, d_r, seed_seq, n) -> RunningStats:
    rng = np.random.default_rng(seed_seq)
    st = RunningStats()
    for _ in range(n):
        perm = rng.permutation(nblk)
        us = sample_block_unitary(nblk, r, rng)
        st.push(_delta(diff, kraus, nblk, r, d_r, perm, us))
    return st


def delta_statistics(inst: RPDInstance, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                     workers: int = 1) -> RunningStats:
    """Sample ``Delta_{s,U}`` in fixed-size chunks with one spawned RNG stream per chunk.

    The result depends only on ``(seed, n_samples)``, not on ``workers``.
    """
    diff = np.ascontiguousarray(inst.psi.matrix - averaged_state(inst).matrix)
    kraus = inst.map_T.kraus
    sizes = [CHUNK] * (n_samples // CHUNK)
    if n_samples % CHUNK:
        sizes.append(n_samples % CHUNK)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(diff, kraus, inst.J, inst.r, inst.d_r, ss, n) for ss, n in zip(streams, sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda a: _chunk_stats(*a), args))
    else:
        parts = [_chunk_stats(*a) for a in args]
    total = RunningStats()
    for p in parts:
        total = total.merge(p)
    return total


# ---------------------------------------------------------------------------
# the direct bound
# ---------------------------------------------------------------------------


def _split_view(rho: DensityOperator, nblk: int, r: int) -> DensityOperator:
    """Reinterpret factor ``A`` of dimension ``nblk * r`` as ``A_c (x) A_r``."""
    factors = []
    for lab, d in rho.layout.factors:
        if lab == "A":
            factors += [("Ac", nblk), ("Ar", r)]
        else:
            factors.append((lab, d))
    return DensityOperator(rho.matrix, SystemLayout(tuple(factors)), rho.normalization)


def complementary_choi(map_T: ChannelRep) -> DensityOperator:
    """Choi state on ``[A, C]`` of the complementary map of ``T``."""
    comp = complementary(map_T, env_label="C")
    comp = ChannelRep(comp.kind, comp.data, SystemLayout.of(("A", map_T.d_in)), comp.out_layout)
    return to_choi(comp)


@dataclass(frozen=True)
class BoundTerms:
    bound: float
    H_I: float | None
    H_II: float | None
    theta_I: float
    theta_II: float


def direct_bound_rhs(inst: RPDInstance) -> BoundTerms:
    """``theta_I + theta_II + 4 (eps + mu + eps mu)`` with the exponents from smooth entropies.

    Smoothed entropies are evaluated at exactly feasible points, so the
    exponents are lower bounds and the returned bound is conservative.
    An exponent is ``None`` when its ``theta`` vanishes by the dimension case split.
    """
    nblk, r, eps, mu = inst.J, inst.r, inst.epsilon, inst.mu
    psi = _split_view(inst.psi, nblk, r)
    tau = dephase(_split_view(complementary_choi(inst.map_T), nblk, r), "Ac")
    h_i = h_ii = None
    theta_i = theta_ii = 0.0
    if nblk >= 2:
        hmin_psi = hmin_smooth(psi, eps, ["Ac", "Ar"], ["Rc", "Rr"]).value
        hmax_tau = hmax_smooth(tau, mu, ["Ac", "Ar"], ["C"]).value
        h_i = float(np.log2(nblk - 1) + hmin_psi - hmax_tau)
        theta_i = float(2 ** (-0.5 * h_i))
    if r >= 2:
        hmin_cpsi = hmin_smooth(dephase(psi, "Ac"), eps, ["Ac", "Ar"], ["Rc", "Rr"]).value
        hmax_tau_r = hmax_smooth(tau, mu, ["Ar"], ["C", "Ac"]).value
        h_ii = float(hmin_cpsi - hmax_tau_r)
        theta_ii = float(2 ** (-0.5 * h_ii))
    bound = theta_i + theta_ii + 4 * (eps + mu + eps * mu)
    return BoundTerms(float(bound), h_i, h_ii, theta_i, theta_ii)


@dataclass(frozen=True)
class DecouplingReport:
    mean_delta: float
    std_error: float
    bound_rhs: float
    n_samples: int
    exponents: tuple
    thetas: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.mean_delta < 0 or self.bound_rhs < 0:
            raise ValueError("decoupling report with negative mean or bound")

    @property
    def passed(self) -> bool:
        """Statistical acceptance: ``mean - 3 stderr <= bound``."""
        return self.mean_delta - 3 * self.std_error <= self.bound_rhs


def verify_direct_theorem(inst: RPDInstance, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                          workers: int = 1) -> DecouplingReport:
    terms = direct_bound_rhs(inst)
    st = delta_statistics(inst, n_samples, seed, workers)
    return DecouplingReport(max(0.0, st.mean), st.std_error, terms.bound, st.count,
                            (terms.H_I, terms.H_II), (terms.theta_I, terms.theta_II))


# ---------------------------------------------------------------------------
# the converse bound
# ---------------------------------------------------------------------------


def converse_lambda(delta: float, iota: float, upsilon: float = 0.0) -> float:
    y = 20 * upsilon + 2 * delta
    return float(2 * np.sqrt(iota + 4 * np.sqrt(y)) + np.sqrt(2 * np.sqrt(y)) + 2 * np.sqrt(2 * delta)
                 + 2 * np.sqrt(y) + 3 * upsilon)


def converse_lambda_prime(delta: float, iota: float, upsilon: float = 0.0) -> float:
    x = np.sqrt(2) * (24 * upsilon + 2 * delta) ** 0.25
    return float(upsilon + np.sqrt(4 * np.sqrt(iota + 2 * x) + 2 * np.sqrt(x) + (4 * np.sqrt(iota + 8) + 24) * x))


def decoupled_omega(inst: RPDInstance, varsigmas) -> DensityOperator:
    """``sum_j p_j varsigma_j (x) Psi_j^{R_r} (x) |j><j|_{R_c}`` on ``[E, Rc, Rr]``."""
    nblk, r, d_rr = inst.J, inst.r, inst.d_rr
    t = inst.psi.matrix.reshape(nblk, r, nblk, d_rr, nblk, r, nblk, d_rr)
    de = inst.map_T.d_out
    out = np.zeros((de, nblk, d_rr, de, nblk, d_rr), dtype=np.complex128)
    for j in range(nblk):
        blk = np.einsum("axay->xy", t[j, :, j, :, j, :, j, :])  # p_j Psi_j^{R_r}
        out[:, j, :, :, j, :] = np.einsum("ab,xy->axby", np.asarray(varsigmas[j]), blk)
    n = de * nblk * d_rr
    layout = SystemLayout.of(("E", de), ("Rc", nblk), ("Rr", d_rr))
    return DensityOperator.from_matrix(out.reshape(n, n), layout, clean=True)


def _check_omega_form(inst: RPDInstance, omega: DensityOperator) -> None:
    nblk, d_rr, de = inst.J, inst.d_rr, inst.map_T.d_out
    if omega.layout.labels != ("E", "Rc", "Rr") or omega.dims != (de, nblk, d_rr):
        raise HypothesisError(f"Omega must live on [E:{de}, Rc:{nblk}, Rr:{d_rr}]")
    t = omega.matrix.reshape(de, nblk, d_rr, de, nblk, d_rr)
    psi_t = inst.psi.matrix.reshape(nblk, inst.r, nblk, d_rr, nblk, inst.r, nblk, d_rr)
    for j in range(nblk):
        for k in range(nblk):
            if j != k and np.abs(t[:, j, :, :, k, :]).max() > TOL.equality:
                raise HypothesisError("Omega is not block diagonal in R_c")
        blk = t[:, j, :, :, j, :].reshape(de * d_rr, de * d_rr)
        pj_psi = np.einsum("axay->xy", psi_t[j, :, j, :, j, :, j, :])
        pj = np.trace(pj_psi).real
        if pj <= TOL.equality:
            continue
        vs = partial_trace_matrix(blk, [de, d_rr], [0]) / pj
        if np.abs(blk - np.kron(vs, pj_psi)).max() > TOL.equality:
            raise HypothesisError(f"block {j} of Omega is not of the form p_j varsigma_j (x) Psi_j^(R_r)")


@dataclass(frozen=True)
class ConverseCheck:
    distance: float
    lam: float
    lam_prime: float
    lhs_first: float | None
    rhs_first: float
    holds_first: bool
    saturated_first: bool
    lhs_second: float | None
    rhs_second: float
    holds_second: bool
    saturated_second: bool

    @property
    def holds(self) -> bool:
        return self.holds_first and self.holds_second


def check_converse_theorem(inst: RPDInstance, omega: DensityOperator, delta: float, iota: float,
                           upsilon: float = 0.0) -> ConverseCheck:
    """Evaluate both converse inequalities after verifying ``||T(psi) - Omega||_1 <= delta``.

    Smoothing parameters ``>= 1`` make an inequality vacuous; it is then
    reported as holding and saturated without evaluating entropies.
    """
    if not 0 < iota <= 1:
        raise ValueError(f"iota = {iota} outside (0, 1]")
    if not 0 <= upsilon < 0.5:
        raise ValueError(f"upsilon = {upsilon} outside [0, 1/2)")
    if inst.map_T.trace_flag != "trace-preserving":
        raise HypothesisError("the converse bound needs a trace-preserving map")
    _check_omega_form(inst, omega)
    out, lay = apply_to_matrix(inst.map_T, inst.psi.matrix, inst.psi.layout)
    dist = trace_distance(out, omega.matrix)
    if dist > delta + TOL.equality:
        raise HypothesisError(f"||T(Psi) - Omega||_1 = {dist:.6g} exceeds delta = {delta}")
    lam = converse_lambda(delta, iota, upsilon)
    lam_p = converse_lambda_prime(delta, iota, upsilon)
    nblk, r = inst.J, inst.r
    rhs1 = float(np.log2(iota))
    rhs2 = float(np.log2(iota) + np.log2(1 - 2 * upsilon))

    need_first, need_second = lam < 1, lam_p < 1
    lhs1 = lhs2 = None
    if need_first or need_second:
        joint = _complementary_output(inst)
    if need_first:
        h_a = hmin_smooth(_split_view(inst.psi, nblk, r), lam, ["Ac", "Ar"], ["Rc", "Rr"]).value
        h_b = hmin_smooth(joint, upsilon, ["B", "Rc", "Rr"], ["C"]).value
        lhs1 = float(h_a - h_b + np.log2(nblk))
    if need_second:
        cpsi = dephase(_split_view(inst.psi, nblk, r), "Ac")
        h_a = hmin_smooth(cpsi, lam_p, ["Ac", "Ar"], ["Rc", "Rr"]).value
        h_b = hmin_smooth(joint, upsilon, ["B", "Rr"], ["C", "Rc"]).value
        lhs2 = float(h_a - h_b)
    slack = 1e-6
    holds1 = (not need_first) or lhs1 >= rhs1 - slack
    holds2 = (not need_second) or lhs2 >= rhs2 - slack
    return ConverseCheck(dist, lam, lam_p, lhs1, rhs1, holds1, not need_first,
                         lhs2, rhs2, holds2, not need_second)


def _complementary_output(inst: RPDInstance) -> DensityOperator:
    """``T^c o C`` applied to a purification ``|Psi>^{ABR}``, on ``[C, B, Rc, Rr]``."""
    from qcap.linalg import _purify_matrix

    nblk, r = inst.J, inst.r
    vec, db = _purify_matrix(inst.psi.matrix)
    lay = inst.psi.layout.concat(SystemLayout.of(("B", db)))
    pure = np.outer(vec, vec.conj())
    split = _split_view(DensityOperator.from_matrix(pure, lay, clean=True), nblk, r)
    deph = dephase(split, "Ac")
    comp = complementary(inst.map_T, env_label="C")
    comp = ChannelRep(comp.kind, comp.data, SystemLayout.of(("A", inst.map_T.d_in)), comp.out_layout)
    merged = DensityOperator(deph.matrix, lay, deph.normalization)
    m, out_lay = apply_to_matrix(comp, merged.matrix, merged.layout)
    return DensityOperator.from_matrix(m, out_lay, clean=True)


# ---------------------------------------------------------------------------
# the encoder identity
# ---------------------------------------------------------------------------


def _embedding(small: int, big: int) -> np.ndarray:
    p = np.zeros((big, small))
    p[np.arange(small), np.arange(small)] = 1
    return p


def _block_stinespring(ens: InputEnsemble) -> np.ndarray:
    """``V_rho = sum_j |j>_{E_c} <j|_{S_c} (x) V_{rho_j}`` as a matrix ``S -> A E_0 E_c``."""
    dsc, dsr, da = ens.d_sc, ens.d_sr, ens.d_a
    isos = []
    for rho_j in ens.blocks():
        lay = SystemLayout.of(("Sr", dsr), ("A", da))
        choi = DensityOperator.from_matrix(rho_j, lay, clean=True)
        kraus = _kraus_of_choi_state(choi, dsr, da)
        isos.append(kraus)
    m0 = max(k.shape[0] for k in isos)
    v = np.zeros((da, m0, dsc, dsc, dsr), dtype=np.complex128)  # [A, E0, Ec] x [Sc, Sr]
    for j, k in enumerate(isos):
        for e in range(k.shape[0]):
            v[:, e, j, j, :] = k[e]
    return v.reshape(da * m0 * dsc, dsc * dsr), m0


def _kraus_of_choi_state(choi: DensityOperator, din: int, dout: int) -> np.ndarray:
    from qcap.channels import _kraus_from_choi_matrix

    return _kraus_from_choi_matrix(choi.matrix, din, dout)


def encoder_map(ens: InputEnsemble) -> ChannelRep:
    """``E_rho = J^{-1}(rho)`` from ``S = S_c S_r`` to ``A`` in Kraus form."""
    v, m0 = _block_stinespring(ens)
    da, ds = ens.d_a, ens.d_sc * ens.d_sr
    kraus = v.reshape(da, m0 * ens.d_sc, ds).transpose(1, 0, 2)
    return ChannelRep("kraus", kraus, SystemLayout.of(("S", ds)), SystemLayout.of(("A", da)))


def build_psi_rho(ens: InputEnsemble, channel: ChannelRep, code: CodeParams | None = None) -> PureState:
    """``W_N V_rho |Phi_ext>`` on ``[Rhat_c, Rhat_r, B, E, E_0, E_c]``."""
    ens.require_maximally_mixed()
    if code is not None:
        _check_embedding(ens, code)
    if channel.d_in != ens.d_a:
        raise ValueError(f"channel input dimension {channel.d_in} differs from dim A = {ens.d_a}")
    dsc, dsr = ens.d_sc, ens.d_sr
    ds = dsc * dsr
    v, m0 = _block_stinespring(ens)  # (A E0 Ec) x S
    w = isometry(channel)  # (B E) x A
    db = channel.d_out
    de = w.shape[0] // db
    phi_ext = np.eye(ds).reshape(-1) / np.sqrt(ds)  # [S, Rhat]
    t = phi_ext.reshape(ds, ds)  # S x Rhat
    t = v @ t  # (A E0 Ec) x Rhat
    t = t.reshape(ens.d_a, m0 * dsc * ds)
    t = w @ t  # (B E) x (E0 Ec Rhat)
    t = t.reshape(db, de, m0, dsc, dsc, dsr)  # B, E, E0, Ec, Rhat_c, Rhat_r
    vec = t.transpose(4, 5, 0, 1, 2, 3).reshape(-1)
    layout = SystemLayout.of(("Rc_hat", dsc), ("Rr_hat", dsr), ("B", db), ("E", de), ("E0", m0), ("Ec", dsc))
    return PureState(vec / np.linalg.norm(vec), layout)


def _check_embedding(ens: InputEnsemble, code: CodeParams) -> None:
    c, q, e = code.c, code.q, code.e
    for name, v in (("c", c), ("q", q), ("e", e)):
        if abs(v - round(v)) > 1e-12 or v < 0:
            raise ValueError(f"the encoder construction needs nonnegative integer {name}, got {v}")
    if ens.d_sc < 2 ** round(c):
        raise ValueError(f"d_Sc = {ens.d_sc} < 2^c = {2 ** round(c)}")
    if ens.d_sr < 2 ** round(q + e):
        raise ValueError(f"d_Sr = {ens.d_sr} < 2^(q+e) = {2 ** round(q + e)}")


@dataclass(frozen=True)
class EncoderCheck:
    identity_residual: float
    dephasing_residual: float


def verify_encoder_identity(ens: InputEnsemble, channel: ChannelRep, code: CodeParams,
                            perm, us) -> EncoderCheck:
    """Compare both sides of the encoder identity for one permutation ``s`` and block unitary ``U``.

    ``perm[j] = s(j)`` permutes ``{0..d_Sc-1}`` and ``us`` holds ``d_Sc``
    unitaries on ``S_r``.  Both sides are operators on ``[R_c, R_q, F_B, B]``.
    Also returns the residual of ``E_{rho,s,U} = E_{rho,s,U} o C^{M_c}`` measured on Choi matrices.
    """
    _check_embedding(ens, code)
    ens.require_maximally_mixed()
    c, q, e = round(code.c), round(code.q), round(code.e)
    mc, mq, fa = 2**c, 2**q, 2**e
    dsc, dsr = ens.d_sc, ens.d_sr
    ds = dsc * dsr
    perm = np.asarray(perm)
    us = np.asarray(us, dtype=np.complex128)
    if sorted(perm.tolist()) != list(range(dsc)) or us.shape != (dsc, dsr, dsr):
        raise ValueError("need a permutation of the S_c basis and d_Sc unitaries on S_r")
    # isometric embeddings of M F_A into S and of R F_B into Rhat (same pattern)
    p_mfa = np.kron(_embedding(mc, dsc), _embedding(mq * fa, dsr))
    g = np.zeros((dsc, dsc))
    g[perm, np.arange(dsc)] = 1  # G_s |j> = |s(j)>
    u_big = np.zeros((ds, ds), dtype=np.complex128)
    for j in range(dsc):
        u_big[j * dsr:(j + 1) * dsr, j * dsr:(j + 1) * dsr] = us[j]
    g_big = np.kron(g, np.eye(dsr))
    scale = np.sqrt(ds / (mc * mq * fa))

    v, m0 = _block_stinespring(ens)
    w = isometry(channel)
    db = channel.d_out
    env = (w.shape[0] // db) * m0 * dsc

    def channel_part(t):
        # t: S x rest  ->  (B, Ebar) x rest
        t = v @ t
        t = t.reshape(ens.d_a, -1)
        t = w @ t
        return t.reshape(db, env, -1)

    # left side: Ptilde_{s,U} on Rhat applied to |Psi_rho>
    ptilde = scale * p_mfa.T @ g_big @ u_big  # Rhat -> R F_B
    nm = mc * mq * fa
    phi_vec = np.eye(ds).reshape(-1) / np.sqrt(ds)  # |Phi> on S (x) Rhat
    lhs = channel_part((np.kron(np.eye(ds), ptilde) @ phi_vec).reshape(ds, nm))  # B, Ebar, (R F_B)
    # right side: W V_rho P_{s,U} |Phi_pur>
    p_su = u_big.T @ np.kron(g.T, np.eye(dsr)) @ p_mfa  # U^T G_{s^{-1}} P
    phi_pur = np.eye(nm) / np.sqrt(nm)  # (M F_A) x (R F_B)
    rhs = channel_part(p_su @ phi_pur)

    def reduce(t):
        t = t.transpose(2, 0, 1).reshape(nm * db, env)  # [R F_B, B] x Ebar
        return t @ t.conj().T

    resid = trace_norm(reduce(lhs) - reduce(rhs))

    # classical-encoder property on Choi matrices
    enc = encoder_map(ens).kraus  # (m, A, S)
    k_su = np.einsum("mas,sn->man", enc, p_su)
    choi_plain = _choi_of_kraus(k_su, nm)
    k_deph = []
    for j in range(mc):
        proj = np.kron(np.outer(np.eye(mc)[j], np.eye(mc)[j]), np.eye(mq * fa))
        k_deph.append(np.einsum("man,nk->mak", k_su, proj))
    choi_deph = _choi_of_kraus(np.concatenate(k_deph), nm)
    return EncoderCheck(float(resid), float(np.abs(choi_plain - choi_deph).max()))


def _choi_of_kraus(kraus: np.ndarray, din: int) -> np.ndarray:
    m = np.einsum("kba->kab", kraus).reshape(kraus.shape[0], -1) / np.sqrt(din)
    return m.T @ m.conj()


def encoder_output_marginal(ens: InputEnsemble, channel: ChannelRep) -> tuple[np.ndarray, np.ndarray]:
    """``Psi_rho^{Rhat B}`` and ``(id (x) N)(rho^{SA})``, which coincide up to relabeling ``S -> Rhat``."""
    psi = build_psi_rho(ens, channel)
    lay = psi.layout
    m = np.outer(psi.vector, psi.vector.conj())
    keep = partial_trace_matrix(m, lay.dims, [0, 1, 2])
    out, _ = apply_to_matrix(channel.relabel({channel.in_layout.labels[0]: "A"}),
                             ens.rho.matrix, ens.rho.layout, on=["A"])
    return keep, out


__all__ = [
    "RPDInstance", "DecouplingReport", "BoundTerms", "ConverseCheck", "EncoderCheck", "HypothesisError",
    "RunningStats", "averaged_state", "sample_delta", "direct_bound_rhs", "verify_direct_theorem",
    "check_converse_theorem", "build_psi_rho", "verify_encoder_identity", "random_cc_state",
    "cc_max_entangled", "make_instance", "delta_statistics", "converse_lambda", "converse_lambda_prime",
    "decoupled_omega", "encoder_map", "encoder_output_marginal", "empirical_average", "coherence_residual",
]
