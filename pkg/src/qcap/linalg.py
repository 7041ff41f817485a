"""Dense linear algebra on labeled multipartite spaces.

Operators carry a :class:`SystemLayout`: an ordered list of ``(label, dim)``
tensor factors.  Factor order is significant and never changed implicitly;
use :func:`permute` to reorder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from qcap.config import TOL


class LayoutError(ValueError):
    """Raised for unknown labels, label collisions or dimension mismatches."""


class StateError(ValueError):
    """Raised when a matrix violates the invariants of a density operator."""


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemLayout:
    """Ordered tensor factors, optionally with one factor split as ``A = A_c (x) A_r``.

    ``classical_split`` is ``(label, J, r)``: the factor ``label`` has
    dimension ``J * r`` and basis index ``j * r + a`` corresponds to
    ``|j>_{A_c} |a>_{A_r}``.
    """

    factors: tuple[tuple[str, int], ...]
    classical_split: tuple[str, int, int] | None = None

    def __post_init__(self):
        factors = tuple((str(lab), int(d)) for lab, d in self.factors)
        object.__setattr__(self, "factors", factors)
        labels = [lab for lab, _ in factors]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate labels in layout {labels}")
        for lab, d in factors:
            if d < 1:
                raise LayoutError(f"factor {lab!r} has dimension {d} < 1")
        if self.classical_split is not None:
            lab, nblk, r = self.classical_split
            split = (str(lab), int(nblk), int(r))
            object.__setattr__(self, "classical_split", split)
            if lab not in labels:
                raise LayoutError(f"classical split refers to unknown factor {lab!r}")
            if self.dim_of(lab) != nblk * r:
                raise LayoutError(
                    f"classical split {nblk}x{r} does not match dim {self.dim_of(lab)} of {lab!r}"
                )

    @classmethod
    def of(cls, *factors: tuple[str, int], classical_split=None) -> "SystemLayout":
        return cls(tuple(factors), classical_split)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.factors else 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown label {label!r}; layout has {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.factors[self.index(label)][1]

    def __contains__(self, label) -> bool:
        return label in self.labels

    def concat(self, other: "SystemLayout") -> "SystemLayout":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise LayoutError(f"label collision between layouts: {sorted(clash)}")
        if self.classical_split and other.classical_split:
            raise LayoutError("both layouts carry a classical split")
        return SystemLayout(self.factors + other.factors, self.classical_split or other.classical_split)

    def select(self, labels: Iterable[str]) -> "SystemLayout":
        """Sub-layout of ``labels`` in the order they appear in this layout."""
        wanted = set(labels)
        for lab in wanted:
            self.index(lab)
        split = self.classical_split if self.classical_split and self.classical_split[0] in wanted else None
        return SystemLayout(tuple(f for f in self.factors if f[0] in wanted), split)

    def reordered(self, labels: Sequence[str]) -> "SystemLayout":
        if sorted(labels) != sorted(self.labels):
            raise LayoutError(f"{list(labels)} is not a permutation of {list(self.labels)}")
        return SystemLayout(tuple(self.factors[self.index(lab)] for lab in labels), self.classical_split)

    def relabel(self, mapping: dict[str, str]) -> "SystemLayout":
        factors = tuple((mapping.get(lab, lab), d) for lab, d in self.factors)
        split = None
        if self.classical_split:
            lab, nblk, r = self.classical_split
            split = (mapping.get(lab, lab), nblk, r)
        return SystemLayout(factors, split)

    def with_split(self, label: str, nblk: int, r: int) -> "SystemLayout":
        return SystemLayout(self.factors, (label, nblk, r))


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DensityOperator:
    matrix: np.ndarray
    layout: SystemLayout
    normalization: str = "normalized"

    def __post_init__(self):
        m = _frozen(self.matrix)
        object.__setattr__(self, "matrix", m)
        if self.normalization not in ("normalized", "subnormalized"):
            raise StateError(f"unknown normalization tag {self.normalization!r}")
        n = self.layout.dim
        if m.shape != (n, n):
            raise LayoutError(f"matrix shape {m.shape} does not match layout dimension {n}")
        herm = np.max(np.abs(m - m.conj().T)) if n else 0.0
        if herm > TOL.hermitian:
            raise StateError(f"matrix is not Hermitian (max deviation {herm:.3e})")
        evmin = np.linalg.eigvalsh(m).min()
        if evmin < TOL.psd_floor:
            raise StateError(f"matrix is not positive semidefinite (min eigenvalue {evmin:.3e})")
        tr = np.trace(m).real
        if tr > 1 + TOL.trace:
            raise StateError(f"trace {tr:.12f} exceeds 1")
        if self.normalization == "normalized" and abs(tr - 1) > TOL.trace:
            raise StateError(f"state tagged normalized has trace {tr:.12f}")

    @classmethod
    def from_matrix(cls, matrix, layout: SystemLayout, normalization: str | None = None,
                    clean: bool = False) -> "DensityOperator":
        """Build a state, optionally symmetrizing and clipping tiny negative eigenvalues.

        With ``normalization=None`` the tag is inferred from the trace.
        """
        m = np.asarray(matrix, dtype=np.complex128)
        if clean:
            m = 0.5 * (m + m.conj().T)
            w, v = np.linalg.eigh(m)
            if w.min() < 0:
                m = (v * np.clip(w, 0, None)) @ v.conj().T
            tr = np.trace(m).real
            if tr > 1:
                m = m / tr
        if normalization is None:
            tr = np.trace(m).real
            normalization = "normalized" if abs(tr - 1) <= TOL.trace else "subnormalized"
        return cls(m, layout, normalization)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.layout.dims

    @property
    def labels(self) -> tuple[str, ...]:
        return self.layout.labels

    def relabel(self, mapping: dict[str, str]) -> "DensityOperator":
        return DensityOperator(self.matrix, self.layout.relabel(mapping), self.normalization)

    def scaled(self, factor: float) -> "DensityOperator":
        return DensityOperator.from_matrix(factor * self.matrix, self.layout)

    def __repr__(self) -> str:
        fac = ", ".join(f"{lab}:{d}" for lab, d in self.layout.factors)
        return f"DensityOperator([{fac}], trace={self.trace:.6g})"


@dataclass(frozen=True)
class PureState:
    vector: np.ndarray
    layout: SystemLayout
    normalized: bool = field(default=True)

    def __post_init__(self):
        v = _frozen(np.asarray(self.vector).reshape(-1))
        object.__setattr__(self, "vector", v)
        if v.size != self.layout.dim:
            raise LayoutError(f"vector length {v.size} does not match layout dimension {self.layout.dim}")
        norm = np.linalg.norm(v)
        if self.normalized and abs(norm - 1) > TOL.pure_norm:
            raise StateError(f"pure state has norm {norm:.12f}")
        if not self.normalized and norm > 1 + TOL.pure_norm:
            raise StateError(f"subnormalized pure state has norm {norm:.12f} > 1")

    def density(self) -> DensityOperator:
        m = np.outer(self.vector, self.vector.conj())
        return DensityOperator.from_matrix(m, self.layout, "normalized" if self.normalized else None)


# ---------------------------------------------------------------------------
# matrix helpers
# ---------------------------------------------------------------------------


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(hermitian_part(m))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def psd_inv_sqrt(m: np.ndarray, cutoff: float = 1e-12) -> np.ndarray:
    """Inverse square root on the support (pseudo-inverse convention)."""
    w, v = np.linalg.eigh(hermitian_part(m))
    inv = np.where(w > cutoff, 1.0 / np.sqrt(np.where(w > cutoff, w, 1.0)), 0.0)
    return (v * inv) @ v.conj().T


def trace_norm(m: np.ndarray) -> float:
    m = np.asarray(m)
    if np.allclose(m, m.conj().T, atol=1e-12):
        return float(np.abs(np.linalg.eigvalsh(hermitian_part(m))).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def _as_matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, DensityOperator) else np.asarray(x, dtype=np.complex128)


def partial_trace_matrix(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every factor whose position is not in ``keep``; kept order follows ``dims``."""
    dims = list(dims)
    n = len(dims)
    keep = sorted(set(keep))
    drop = [i for i in range(n) if i not in keep]
    if not drop:
        return np.array(m, copy=True)
    t = np.asarray(m).reshape(dims + dims)
    perm = keep + drop + [n + i for i in keep] + [n + i for i in drop]
    dk = int(np.prod([dims[i] for i in keep], dtype=np.int64))
    dd = int(np.prod([dims[i] for i in drop], dtype=np.int64))
    t = t.transpose(perm).reshape(dk, dd, dk, dd)
    return np.einsum("iaja->ij", t)


def permute_matrix(m: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: new factor ``i`` is old factor ``order[i]``."""
    dims = list(dims)
    n = len(dims)
    if list(order) == list(range(n)):
        return np.array(m, copy=True)
    t = np.asarray(m).reshape(dims + dims)
    t = t.transpose(list(order) + [n + i for i in order])
    d = int(np.prod(dims, dtype=np.int64))
    return t.reshape(d, d)


def permute_vector(v: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    t = np.asarray(v).reshape(list(dims)).transpose(list(order))
    return t.reshape(-1)


def embed_operator(op: np.ndarray, dims: Sequence[int], pos: int) -> np.ndarray:
    """``I (x) op (x) I`` acting on factor ``pos``."""
    left = int(np.prod(dims[:pos], dtype=np.int64))
    right = int(np.prod(dims[pos + 1:], dtype=np.int64))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def tensor(a: DensityOperator, b: DensityOperator) -> DensityOperator:
    layout = a.layout.concat(b.layout)
    return DensityOperator.from_matrix(np.kron(a.matrix, b.matrix), layout)


def partial_trace(rho: DensityOperator, keep: Iterable[str]) -> DensityOperator:
    keep = list(keep)
    pos = [rho.layout.index(lab) for lab in keep]
    m = partial_trace_matrix(rho.matrix, rho.dims, pos)
    return DensityOperator.from_matrix(m, rho.layout.select(keep), rho.normalization)


def permute(rho: DensityOperator, labels: Sequence[str]) -> DensityOperator:
    layout = rho.layout.reordered(labels)
    order = [rho.layout.index(lab) for lab in labels]
    return DensityOperator(permute_matrix(rho.matrix, rho.dims, order), layout, rho.normalization)


def purify(rho: DensityOperator, ref_label: str = "P", pad: bool = False) -> PureState:
    """Purification on ``layout (x) ref``, with ``dim(ref) = rank(rho)`` unless ``pad``."""
    if rho.normalization != "normalized":
        raise StateError("purify requires a normalized state")
    if ref_label in rho.layout:
        raise LayoutError(f"reference label {ref_label!r} already used")
    vec, dref = _purify_matrix(rho.matrix, pad=pad)
    layout = rho.layout.concat(SystemLayout.of((ref_label, dref)))
    return PureState(vec / np.linalg.norm(vec), layout)


def _purify_matrix(m: np.ndarray, pad: bool = False, cutoff: float = 1e-12):
    """Return ``(vector, dim_ref)`` with ``Tr_ref |v><v| = m`` for PSD ``m`` (any trace)."""
    w, v = np.linalg.eigh(hermitian_part(m))
    w = np.clip(w, 0, None)
    idx = np.nonzero(w > cutoff * max(1.0, w.max(initial=0.0)))[0] if not pad else np.arange(len(w))
    if idx.size == 0:
        idx = np.array([int(np.argmax(w))])
    dref = idx.size
    vec = np.zeros((m.shape[0], dref), dtype=np.complex128)
    for k, i in enumerate(idx):
        vec[:, k] = np.sqrt(w[i]) * v[:, i]
    return vec.reshape(-1), dref


def generalized_fidelity(rho, sigma) -> float:
    a, b = _as_matrix(rho), _as_matrix(sigma)
    _check_same(rho, sigma, a, b)
    f = trace_norm(psd_sqrt(a) @ psd_sqrt(b))
    ta, tb = np.trace(a).real, np.trace(b).real
    f += np.sqrt(max(0.0, (1 - ta)) * max(0.0, (1 - tb)))
    return float(min(1.0, max(0.0, f)))


def purified_distance(rho, sigma) -> float:
    f = generalized_fidelity(rho, sigma)
    return float(np.sqrt(max(0.0, 1 - f * f)))


def trace_distance(rho, sigma) -> float:
    """Trace norm ``||rho - sigma||_1`` (no factor 1/2)."""
    a, b = _as_matrix(rho), _as_matrix(sigma)
    _check_same(rho, sigma, a, b)
    return trace_norm(a - b)


def _check_same(x, y, a, b):
    if a.shape != b.shape:
        raise LayoutError(f"dimension mismatch {a.shape} vs {b.shape}")
    if isinstance(x, DensityOperator) and isinstance(y, DensityOperator) and x.dims != y.dims:
        raise LayoutError(f"layout mismatch {x.layout.factors} vs {y.layout.factors}")


def dephase_matrix(m: np.ndarray, dims: Sequence[int], pos: int) -> np.ndarray:
    dims = list(dims)
    pre = int(np.prod(dims[:pos], dtype=np.int64))
    post = int(np.prod(dims[pos + 1:], dtype=np.int64))
    d = dims[pos]
    t = np.asarray(m).reshape(pre, d, post, pre, d, post)
    mask = np.eye(d).reshape(1, d, 1, 1, d, 1)
    n = pre * d * post
    return (t * mask).reshape(n, n)


def dephase(rho: DensityOperator, factor: str) -> DensityOperator:
    pos = rho.layout.index(factor)
    return DensityOperator(dephase_matrix(rho.matrix, rho.dims, pos), rho.layout, rho.normalization)


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_unitary(dim: int, rng_seed=None) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Ginibre matrix."""
    rng = as_generator(rng_seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


# ---------------------------------------------------------------------------
# standard states and random instances
# ---------------------------------------------------------------------------


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[index] = 1
    return v


def basis_state(index: int, label: str, dim: int) -> DensityOperator:
    v = ket(index, dim)
    return DensityOperator(np.outer(v, v), SystemLayout.of((label, dim)))


def maximally_mixed(layout: SystemLayout) -> DensityOperator:
    return DensityOperator(np.eye(layout.dim) / layout.dim, layout)


def max_entangled_vector(d: int) -> np.ndarray:
    return np.eye(d, dtype=np.complex128).reshape(-1) / np.sqrt(d)


def max_entangled(d: int, labels=("A", "B")) -> DensityOperator:
    v = max_entangled_vector(d)
    return DensityOperator(np.outer(v, v.conj()), SystemLayout.of((labels[0], d), (labels[1], d)))


def random_density_matrix(dim: int, rank: int | None = None, rng=None) -> np.ndarray:
    rng = as_generator(rng)
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_state(layout: SystemLayout, rank: int | None = None, rng=None) -> DensityOperator:
    return DensityOperator.from_matrix(random_density_matrix(layout.dim, rank, rng), layout, "normalized")


def random_pure_vector(dim: int, rng=None) -> np.ndarray:
    rng = as_generator(rng)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# helpers for the classical-quantum composition and coherent-purification bounds
# ---------------------------------------------------------------------------


def cq_pair(rho_blocks: Sequence[np.ndarray], sigma_blocks: np.ndarray, p_cond: np.ndarray):
    """Build the two block states of the classical-quantum composition bound.

    ``rho = 1/K sum_k |k><k| (x) |k><k| (x) rho_k`` and
    ``sigma = 1/K sum_k |k><k| (x) sum_k' p(k'|k) |k'><k'| (x) sigma_{kk'}``.
    Returns ``(rho, sigma, hyp_classical, hyp_quantum)`` where the two
    hypotheses are the averaged quantities that must be at most ``delta/3``.
    """
    nblk = len(rho_blocks)
    da = rho_blocks[0].shape[0]
    rho = np.zeros((nblk * nblk * da,) * 2, dtype=np.complex128)
    sigma = np.zeros_like(rho)
    hyp_q = 0.0
    for k in range(nblk):
        i = (k * nblk + k) * da
        rho[i:i + da, i:i + da] = rho_blocks[k] / nblk
        mix = np.zeros((da, da), dtype=np.complex128)
        for kp in range(nblk):
            j = (k * nblk + kp) * da
            sigma[j:j + da, j:j + da] = p_cond[k, kp] * sigma_blocks[k, kp] / nblk
            mix += p_cond[k, kp] * sigma_blocks[k, kp]
        hyp_q += trace_norm(rho_blocks[k] - mix) / nblk
    hyp_c = float(np.mean(1 - np.diag(p_cond)))
    return rho, sigma, hyp_c, hyp_q


def coherent_purification(probs: Sequence[float], states: Sequence[np.ndarray],
                          phi_blocks: Sequence[np.ndarray], db: int) -> np.ndarray:
    """Classically coherent purification closest to a given coherent pure state.

    ``phi_blocks[k]`` is the vector ``|phi_k>`` on ``A (x) B`` (``db >= dim A``);
    the result is ``sum_k sqrt(p_k) |k>|k> |psi_k*>`` with ``|psi_k*>`` the
    purification of ``states[k]`` of maximal overlap with ``|phi_k>``.
    Ordering of the returned vector is ``X, Y, A, B``.
    """
    nblk = len(probs)
    da = states[0].shape[0]
    if db < da:
        raise LayoutError("purifying system must be at least as large as A")
    out = np.zeros((nblk, nblk, da * db), dtype=np.complex128)
    for k in range(nblk):
        sq = psd_sqrt(states[k])
        mphi = np.asarray(phi_blocks[k]).reshape(da, db)
        u, _, vh = np.linalg.svd(sq @ mphi, full_matrices=False)
        # overlap Tr(V^dag sq mphi) is maximal for V = u vh; V V^dag = I_A since db >= da
        mpsi = sq @ (u @ vh)
        out[k, k] = np.sqrt(probs[k]) * mpsi.reshape(-1)
    return out.reshape(-1)
