"""Asymptotic rate-region polytopes, their vertices, and method-of-types helpers.

Rate triplets are ordered ``(C, Q, E)``: classical bits, qubits and ebits per
channel use.  Regions are stored as half-spaces ``a . x <= b``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from qcap.channels import ChannelRep, apply, tensor_power
from qcap.entropies import cond_mutual_info, entropy, hmax_smooth, hmin_smooth, mutual_info, von_neumann_cond
from qcap.linalg import DensityOperator, SystemLayout, as_generator, permute_matrix

VERTEX_TOL = 1e-9
DEGENERACY_TOL = 1e-9


class RegionError(ValueError):
    """Raised for unsupported region requests."""


@dataclass
class RateRegion:
    """A polyhedron ``{x : a . x <= b}`` with its vertex list.

    ``inequalities`` holds ``(a, b)`` pairs.  ``vertices`` are the extreme
    points; an unbounded region additionally lists its recession directions in
    ``rays``.  A region built as a hull of points may have no inequalities if
    the points are not full-dimensional; membership then uses the vertices.
    """

    inequalities: list
    vertices: list
    label: str = ""
    rays: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        if self.inequalities:
            return len(self.inequalities[0][0])
        return len(self.vertices[0]) if self.vertices else 0

    def slack(self, point) -> float:
        """Smallest ``b - a . x`` over the inequalities (negative means violated)."""
        x = np.asarray(point, dtype=float)
        return min(float(b - np.dot(a, x)) for a, b in self.inequalities)

    def contains(self, point, tol: float = VERTEX_TOL) -> bool:
        if self.inequalities:
            return self.slack(point) >= -tol
        return _in_hull(np.asarray(self.vertices, dtype=float), np.asarray(point, dtype=float), tol)

    def tight(self, point, tol: float = 1e-8) -> list[int]:
        x = np.asarray(point, dtype=float)
        return [i for i, (a, b) in enumerate(self.inequalities) if abs(b - np.dot(a, x)) <= tol]

    @property
    def is_empty(self) -> bool:
        return not self.vertices


def _in_hull(points: np.ndarray, x: np.ndarray, tol: float) -> bool:
    """Whether ``x`` is a convex combination of ``points`` (up to ``tol`` per coordinate)."""
    if len(points) == 0:
        return False
    n, d = points.shape
    # minimise s subject to |P^T w - x| <= s, sum w = 1, w >= 0
    c = np.zeros(n + 1)
    c[-1] = 1.0
    a_ub = np.block([[points.T, -np.ones((d, 1))], [-points.T, -np.ones((d, 1))]])
    b_ub = np.concatenate([x, -x])
    a_eq = np.concatenate([np.ones(n), [0.0]])[None]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (n + 1), method="highs")
    return bool(res.status == 0 and res.fun <= tol)


def nonnegativity(dim: int) -> list:
    return [(-np.eye(dim)[i], 0.0) for i in range(dim)]


def enumerate_vertices(inequalities: Sequence, tol: float = VERTEX_TOL) -> list[np.ndarray]:
    """Extreme points by intersecting every ``dim``-subset of hyperplanes and keeping feasible ones."""
    if not inequalities:
        return []
    a = np.array([np.asarray(x, dtype=float) for x, _ in inequalities])
    b = np.array([float(y) for _, y in inequalities])
    dim = a.shape[1]
    found: list[np.ndarray] = []
    for idx in itertools.combinations(range(len(b)), dim):
        sub = a[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(idx)])
        if np.all(a @ x <= b + tol * max(1.0, np.abs(b).max())):
            x = np.where(np.abs(x) < 1e-13, 0.0, x)
            if not any(np.allclose(x, y, atol=1e-10) for y in found):
                found.append(x)
    return found


def polytope(inequalities: Sequence, label: str = "") -> RateRegion:
    ineq = [(np.asarray(x, dtype=float), float(y)) for x, y in inequalities]
    return RateRegion(ineq, enumerate_vertices(ineq), label)


# ---------------------------------------------------------------------------
# entropic ingredients
# ---------------------------------------------------------------------------


def channel_output(channel: ChannelRep, ens) -> DensityOperator:
    """``N(rho)`` on ``[Sc, Sr, B]``."""
    ch = ChannelRep(channel.kind, channel.data, SystemLayout.of(("A", channel.d_in)),
                    SystemLayout.of(("B", channel.d_out)), channel.env_label)
    return apply(ch, ens.rho, on=["A"])


@dataclass(frozen=True)
class RegionEntropies:
    """Von Neumann quantities of ``N(rho)`` that define the asymptotic regions."""

    H_Sr_given_Sc: float
    H_Sc: float
    H_S_given_B: float
    H_Sr_given_BSc: float
    I_S_B: float
    I_Sc_B: float
    I_Sr_B_given_Sc: float

    @property
    def coherent(self) -> float:
        """``-H(S_r|B S_c)``."""
        return -self.H_Sr_given_BSc


def region_entropies(channel: ChannelRep, ens) -> RegionEntropies:
    out = channel_output(channel, ens)
    return RegionEntropies(
        H_Sr_given_Sc=von_neumann_cond(out, ["Sr"], ["Sc"]),
        H_Sc=entropy(out, ["Sc"]),
        H_S_given_B=von_neumann_cond(out, ["Sc", "Sr"], ["B"]),
        H_Sr_given_BSc=von_neumann_cond(out, ["Sr"], ["B", "Sc"]),
        I_S_B=mutual_info(out, ["Sc", "Sr"], ["B"]),
        I_Sc_B=mutual_info(out, ["Sc"], ["B"]),
        I_Sr_B_given_Sc=cond_mutual_info(out, ["Sr"], ["B"], ["Sc"]),
    )


def theta_inequalities(h: RegionEntropies) -> list:
    return [
        (np.array([0.0, 1.0, 1.0]), h.H_Sr_given_Sc),
        (np.array([1.0, 1.0, -1.0]), h.H_Sc - h.H_S_given_B),
        (np.array([0.0, 1.0, -1.0]), -h.H_Sr_given_BSc),
    ] + nonnegativity(3)


def lambda_inequalities(h: RegionEntropies) -> list:
    return [
        (np.array([1.0, 2.0, 0.0]), h.I_S_B),
        (np.array([1.0, 1.0, -1.0]), h.H_Sc - h.H_S_given_B),
        (np.array([0.0, 1.0, -1.0]), -h.H_Sr_given_BSc),
    ] + nonnegativity(3)


def theta_region(channel: ChannelRep, ens) -> RateRegion:
    """``Theta(N, rho)``: a bounded polytope in ``(C, Q, E)``."""
    return polytope(theta_inequalities(region_entropies(channel, ens)), "Theta")


def lambda_region(channel: ChannelRep, ens) -> RateRegion:
    """``Lambda(N, rho)``: unbounded along ``+E``; ``rays`` records that direction."""
    reg = polytope(lambda_inequalities(region_entropies(channel, ens)), "Lambda")
    reg.rays = [np.array([0.0, 0.0, 1.0])]
    return reg


@dataclass(frozen=True)
class LabeledVertices:
    points: dict
    degenerate: bool
    sign: int


def lambda_vertices(channel: ChannelRep, ens) -> LabeledVertices:
    """Closed-form vertices of ``Lambda(N, rho)`` selected by the sign of ``-H(S_r|B S_c)``."""
    return lambda_vertices_from(region_entropies(channel, ens))


def lambda_vertices_from(h: RegionEntropies) -> LabeledVertices:
    hc = h.H_Sr_given_BSc
    i_sb, i_cb, i_rb = h.I_S_B, h.I_Sc_B, h.I_Sr_B_given_Sc
    pts = {
        "P0": (0.0, 0.0, 0.0),
        "P1+": (0.0, -hc, 0.0),
        "P1-": (0.0, 0.0, hc),
        "P2": (0.0, i_sb / 2, i_sb / 2 + hc),
        "P3+": (i_cb, -hc, 0.0),
        "P3-": (i_cb, 0.0, hc),
        "P4": (i_cb, i_rb / 2, i_rb / 2 + hc),
        "P5": (h.H_Sc - h.H_S_given_B, 0.0, 0.0),
        "P6": (i_sb, 0.0, h.H_Sr_given_Sc),
    }
    plus = ["P0", "P1+", "P2", "P3+", "P4", "P5", "P6"]
    minus = ["P1-", "P2", "P3-", "P4", "P6"]
    if abs(hc) < DEGENERACY_TOL:
        keys, sign, degenerate = sorted(set(plus) | set(minus)), 0, True
    elif -hc > 0:
        keys, sign, degenerate = plus, 1, False
    else:
        keys, sign, degenerate = minus, -1, False
    return LabeledVertices({k: np.array(pts[k]) for k in keys}, degenerate, sign)


# ---------------------------------------------------------------------------
# ensembles and unions
# ---------------------------------------------------------------------------


def tensor_ensemble(ens, n: int):
    """``rho^{(x) n}`` regrouped as ``[Sc^n, Sr^n, A^n]``."""
    from qcap.bounds import InputEnsemble

    m = ens.rho.matrix
    dims = list(ens.rho.dims)
    for _ in range(n - 1):
        big = np.kron(m, ens.rho.matrix)
        k = len(dims) // 3
        full = dims + list(ens.rho.dims)
        order = list(range(k)) + [3 * k] + list(range(k, 2 * k)) + [3 * k + 1] + list(range(2 * k, 3 * k)) + [3 * k + 2]
        m = permute_matrix(big, full, order)
        dims = [full[i] for i in order]
    dsc, dsr, da = ens.d_sc ** n, ens.d_sr ** n, ens.d_a ** n
    lay = SystemLayout.of(("Sc", dsc), ("Sr", dsr), ("A", da))
    return InputEnsemble(DensityOperator.from_matrix(m, lay, clean=True))


def region_union(channel: ChannelRep, rho_family: Sequence, n_max: int = 1) -> RateRegion:
    """Convex hull of ``(1/n) Theta(N^{(x) n}, rho^{(x) n})`` over the family, for ``n <= n_max``."""
    if n_max not in (1, 2):
        raise RegionError(f"n_max = {n_max} not supported (only 1 or 2)")
    pts = []
    for ens in rho_family:
        pts += theta_region(channel, ens).vertices
        if n_max == 2:
            ch2 = tensor_power(channel, 2)
            pts += [v / 2 for v in theta_region(ch2, tensor_ensemble(ens, 2)).vertices]
    return hull_region(pts, "Theta-union")


def hull_region(points: Sequence, label: str = "") -> RateRegion:
    pts = np.unique(np.round(np.asarray(points, dtype=float), 12), axis=0)
    if len(pts) == 0:
        return RateRegion([], [], label)
    try:
        hull = ConvexHull(pts)
    except (QhullError, ValueError):
        return RateRegion([], [p for p in pts], label)
    ineq = [(eq[:-1], float(-eq[-1])) for eq in hull.equations]
    return RateRegion(ineq, [pts[i] for i in hull.vertices], label)


def _channel_from_isometry(v: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """Kraus stack of the channel whose Stinespring isometry is ``v`` (output ``[out, env]``)."""
    denv = v.shape[0] // d_out
    return v.reshape(d_out, denv, d_in).transpose(1, 0, 2)


def ensemble_from_channels(kraus_per_block: Sequence[np.ndarray], d_sr: int):
    """``rho_j = (id (x) E_j)(Phi_{d_sr})`` with equal weights, so ``rho^S`` is maximally mixed."""
    from qcap.bounds import InputEnsemble

    blocks = []
    phi = np.eye(d_sr).reshape(-1) / np.sqrt(d_sr)
    for k in kraus_per_block:
        da = k.shape[1]
        vecs = np.einsum("mab,sb->msa", k, phi.reshape(d_sr, d_sr)).reshape(k.shape[0], d_sr * da)
        blocks.append(vecs.T @ vecs.conj())
    return InputEnsemble.from_blocks(blocks, d_sr)


def random_ensemble(d_a: int, d_sc: int, d_sr: int, rng=None, n_kraus: int = 2):
    """Random ensemble with ``rho^S`` maximally mixed (per-block random channels ``S_r -> A``)."""
    from qcap.linalg import haar_unitary

    rng = as_generator(rng)
    ks = []
    for _ in range(d_sc):
        iso = haar_unitary(d_a * n_kraus, rng)[:, :d_sr]
        ks.append(_channel_from_isometry(iso, d_sr, d_a))
    return ensemble_from_channels(ks, d_sr)


def default_family(d_a: int, n_samples: int = 200, rng=0) -> list:
    """Canonical ensembles plus random ones over ``J in {1, 2}`` and ``d_Sr in {1, d_A}``."""
    from qcap.bounds import InputEnsemble

    rng = as_generator(rng)
    fam = [InputEnsemble.maximally_entangled(d_a), InputEnsemble.classical(d_a)]
    shapes = [(1, d_a), (2, 1), (2, d_a)]
    for i in range(n_samples):
        d_sc, d_sr = shapes[i % len(shapes)]
        fam.append(random_ensemble(d_a, d_sc, d_sr, rng))
    return fam


# ---------------------------------------------------------------------------
# method of types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeDistribution:
    counts: tuple
    n: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 0 for c in counts) or sum(counts) != self.n:
            raise ValueError(f"counts {counts} are not a type of length {self.n}")

    @property
    def frequencies(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n


def enumerate_types(alphabet_size: int, n: int) -> list[TypeDistribution]:
    """All compositions of ``n`` into ``alphabet_size`` nonnegative parts."""
    out = []
    for bars in itertools.combinations(range(n + alphabet_size - 1), alphabet_size - 1):
        prev, counts = -1, []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(n + alphabet_size - 2 - prev)
        out.append(TypeDistribution(tuple(counts), n))
    return out


def type_class_size(t: TypeDistribution) -> int:
    size = math.factorial(t.n)
    for c in t.counts:
        size //= math.factorial(c)
    return size


def sequence_type(seq: Sequence[int], alphabet_size: int) -> TypeDistribution:
    return TypeDistribution(tuple(np.bincount(np.asarray(seq, dtype=int), minlength=alphabet_size)), len(seq))


def type_projector(t: TypeDistribution, basis: np.ndarray | None = None) -> np.ndarray:
    """Projector onto ``span{|x_1 ... x_n> : type(x) = t}`` in the given single-letter basis."""
    k = len(t.counts)
    basis = np.eye(k) if basis is None else np.asarray(basis)
    dim = k ** t.n
    diag = np.zeros(dim)
    for idx, seq in enumerate(itertools.product(range(k), repeat=t.n)):
        if np.array_equal(np.bincount(seq, minlength=k), t.counts):
            diag[idx] = 1.0
    u = basis
    for _ in range(t.n - 1):
        u = np.kron(u, basis)
    return (u * diag) @ u.conj().T


# ---------------------------------------------------------------------------
# fully quantum asymptotic equipartition
# ---------------------------------------------------------------------------


def fqaep_rates(rho: DensityOperator, ns: Sequence[int], epsilon: float = 0.1) -> list[float]:
    """``(1/n) H_max^eps(A^n|B^n)`` for ``rho^{(x) n}`` on two factors ``[A, B]``.

    For a pure ``rho`` the purifying system is trivial, so the duality relation
    gives ``H_max^eps(A^n|B^n) = -H_min^eps(A^n)``, which needs only the
    ``d_A^n``-dimensional marginal.
    """
    da, db = rho.dims
    w = np.linalg.eigvalsh(rho.matrix)
    pure = w[-1] > 1 - 1e-10
    out = []
    for n in ns:
        if pure:
            ra = np.einsum("ibjb->ij", rho.matrix.reshape(da, db, da, db))
            m = ra
            for _ in range(n - 1):
                m = np.kron(m, ra)
            st = DensityOperator.from_matrix(m, SystemLayout.of(("An", da ** n), ("Bn", 1)), clean=True)
            val = -hmin_smooth(st, epsilon, ["An"], []).value
        else:
            m = rho.matrix
            for _ in range(n - 1):
                m = np.kron(m, rho.matrix)
            order = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
            m = permute_matrix(m, [da, db] * n, order)
            st = DensityOperator.from_matrix(m, SystemLayout.of(("An", da ** n), ("Bn", db ** n)), clean=True)
            val = hmax_smooth(st, epsilon, ["An"], ["Bn"]).value
        out.append(float(val / n))
    return out


__all__ = [
    "RateRegion", "RegionError", "RegionEntropies", "LabeledVertices", "TypeDistribution",
    "theta_region", "lambda_region", "lambda_vertices", "lambda_vertices_from", "region_entropies",
    "region_union", "hull_region", "polytope", "enumerate_vertices", "channel_output",
    "random_ensemble", "default_family", "tensor_ensemble", "enumerate_types", "type_class_size",
    "type_projector", "sequence_type", "fqaep_rates",
]
