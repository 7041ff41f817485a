"""Completely positive maps in Kraus, Choi and Stinespring form.

The Choi state uses the normalized maximally entangled state,
``J(T) = (id (x) T)(Phi)`` with ``Phi = |Phi><Phi|`` and
``|Phi> = d^{-1/2} sum_i |i>|i>``, so a trace-preserving map has a trace-one
Choi state whose input marginal is maximally mixed.  The reference copy of
the input comes first in the Choi layout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qcap import kernels
from qcap.config import TOL
from qcap.linalg import (
    DensityOperator,
    LayoutError,
    SystemLayout,
    as_generator,
    haar_unitary,
    partial_trace_matrix,
    permute_matrix,
)

TP = "trace-preserving"
TNI = "trace-non-increasing"
CP = "general-CP"
KINDS = ("kraus", "choi", "stinespring")


class ChannelError(ValueError):
    """Raised when a representation violates the invariants of its kind."""


def _classify(kraus: np.ndarray) -> tuple[str, float]:
    din = kraus.shape[2]
    s = np.einsum("kba,kbc->ac", kraus.conj(), kraus)
    resid = float(np.max(np.abs(s - np.eye(din)))) if din else 0.0
    if resid <= TOL.equality:
        return TP, resid
    top = np.linalg.eigvalsh(0.5 * (s + s.conj().T)).max()
    return (TNI if top <= 1 + TOL.equality else CP), resid


def _kraus_from_choi_matrix(j: np.ndarray, din: int, dout: int) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (j + j.conj().T))
    keep = np.nonzero(w > TOL.kraus_rank_cutoff)[0][::-1]
    if keep.size == 0:
        return np.zeros((1, dout, din), dtype=np.complex128)
    ops = [np.sqrt(din * w[i]) * v[:, i].reshape(din, dout).T for i in keep]
    return np.ascontiguousarray(np.array(ops, dtype=np.complex128))


@dataclass(frozen=True)
class ChannelRep:
    """A CP map ``in_layout -> out_layout``.

    ``data`` depends on ``kind``: a stack of Kraus operators ``(m, d_out, d_in)``,
    a Choi matrix ``(d_in d_out, d_in d_out)`` on ``[in, out]``, or a
    Stinespring isometry ``(d_out d_env, d_in)`` with output ordered ``[out, env]``.
    """

    kind: str
    data: np.ndarray
    in_layout: SystemLayout
    out_layout: SystemLayout
    env_label: str = "E"
    trace_flag: str = field(default="", compare=False)
    _kraus: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ChannelError(f"unknown channel kind {self.kind!r}")
        data = np.array(self.data, dtype=np.complex128, copy=True)
        din, dout = self.in_layout.dim, self.out_layout.dim
        if self.kind == "kraus":
            if data.ndim == 2:
                data = data[None]
            if data.ndim != 3 or data.shape[1:] != (dout, din):
                raise ChannelError(f"Kraus stack shape {data.shape} incompatible with ({dout}, {din})")
            kraus = data
        elif self.kind == "choi":
            n = din * dout
            if data.shape != (n, n):
                raise ChannelError(f"Choi matrix shape {data.shape} incompatible with {din}x{dout}")
            if np.max(np.abs(data - data.conj().T)) > TOL.hermitian:
                raise ChannelError("Choi matrix is not Hermitian")
            if np.linalg.eigvalsh(0.5 * (data + data.conj().T)).min() < TOL.psd_floor:
                raise ChannelError("Choi matrix is not positive semidefinite")
            kraus = _kraus_from_choi_matrix(data, din, dout)
        else:
            if data.ndim != 2 or data.shape[1] != din or data.shape[0] % dout:
                raise ChannelError(f"isometry shape {data.shape} incompatible with input {din}, output {dout}")
            denv = data.shape[0] // dout
            kraus = np.ascontiguousarray(data.reshape(dout, denv, din).transpose(1, 0, 2))
        data.setflags(write=False)
        kraus.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "_kraus", kraus)
        flag, resid = _classify(kraus)
        if self.trace_flag and self.trace_flag != flag:
            if self.trace_flag == TP:
                raise ChannelError(f"map tagged trace-preserving has residual {resid:.3e}")
            if self.trace_flag == TNI and flag == CP:
                raise ChannelError("map tagged trace-non-increasing increases trace")
        if not self.trace_flag:
            object.__setattr__(self, "trace_flag", flag)
        if self.kind == "stinespring" and self.trace_flag == TP:
            gram = data.conj().T @ data
            if np.max(np.abs(gram - np.eye(din))) > TOL.equality:
                raise ChannelError("Stinespring operator is not an isometry")

    @classmethod
    def from_kraus(cls, ops, d_in: int | SystemLayout, d_out: int | SystemLayout | None = None,
                   labels=("A", "B")) -> "ChannelRep":
        ops = np.asarray(ops, dtype=np.complex128)
        if ops.ndim == 2:
            ops = ops[None]
        lin = d_in if isinstance(d_in, SystemLayout) else SystemLayout.of((labels[0], int(d_in)))
        if d_out is None:
            d_out = ops.shape[1]
        lout = d_out if isinstance(d_out, SystemLayout) else SystemLayout.of((labels[1], int(d_out)))
        return cls("kraus", ops, lin, lout)

    @property
    def kraus(self) -> np.ndarray:
        return self._kraus

    @property
    def d_in(self) -> int:
        return self.in_layout.dim

    @property
    def d_out(self) -> int:
        return self.out_layout.dim

    def as_kraus(self) -> "ChannelRep":
        return ChannelRep("kraus", self.kraus, self.in_layout, self.out_layout, self.env_label)

    def relabel(self, in_map: dict | None = None, out_map: dict | None = None) -> "ChannelRep":
        return ChannelRep(self.kind, self.data, self.in_layout.relabel(in_map or {}),
                          self.out_layout.relabel(out_map or {}), self.env_label)


# ---------------------------------------------------------------------------
# conversions
# ---------------------------------------------------------------------------


def _choi_layout(ch: ChannelRep) -> SystemLayout:
    clash = set(ch.in_layout.labels) & set(ch.out_layout.labels)
    ref = ch.in_layout.relabel({lab: lab + "_in" for lab in clash})
    return ref.concat(ch.out_layout)


def choi_matrix(ch: ChannelRep) -> np.ndarray:
    din = ch.d_in
    # column k of the Kraus stack gives (I (x) K)|Phi> = d^{-1/2} sum_a |a> K|a>
    m = np.einsum("kba->kab", ch.kraus)
    m = m.reshape(ch.kraus.shape[0], din * ch.d_out) / np.sqrt(din)
    return m.T @ m.conj()


def to_choi(ch: ChannelRep) -> DensityOperator:
    j = choi_matrix(ch)
    return DensityOperator.from_matrix(j, _choi_layout(ch))


def choi_inverse(choi: DensityOperator, varsigma: DensityOperator, in_labels: Sequence[str] | None = None
                 ) -> DensityOperator:
    """Apply the map encoded by ``choi`` to ``varsigma``: ``d_A Tr_A[(varsigma^T (x) I) J]``.

    ``in_labels`` names the input factors of ``choi``; by default the leading
    factors whose dimensions multiply to ``dim(varsigma)``.
    """
    layout = choi.layout
    if in_labels is None:
        acc, k = 1, 0
        while k < len(layout.dims) and acc < varsigma.layout.dim:
            acc *= layout.dims[k]
            k += 1
        in_labels = layout.labels[:k]
    pos_in = [layout.index(lab) for lab in in_labels]
    din = int(np.prod([layout.dims[p] for p in pos_in], dtype=np.int64))
    if din != varsigma.layout.dim:
        raise LayoutError(f"input dimension {din} of Choi state does not match state dimension {varsigma.layout.dim}")
    rest = [p for p in range(len(layout.dims)) if p not in pos_in]
    m = permute_matrix(choi.matrix, layout.dims, pos_in + rest)
    dout = m.shape[0] // din
    t = m.reshape(din, dout, din, dout)
    out = din * np.einsum("ba,aibj->ij", varsigma.matrix.T, t)
    out_layout = SystemLayout(tuple(layout.factors[p] for p in rest))
    return DensityOperator.from_matrix(out, out_layout)


def stinespring(ch: ChannelRep) -> ChannelRep:
    """Stinespring form with one environment level per (rank-truncated) Kraus operator."""
    kraus = _kraus_from_choi_matrix(choi_matrix(ch), ch.d_in, ch.d_out) if ch.kind != "stinespring" else ch.kraus
    m = kraus.shape[0]
    iso = kraus.transpose(1, 0, 2).reshape(ch.d_out * m, ch.d_in)
    return ChannelRep("stinespring", iso, ch.in_layout, ch.out_layout, ch.env_label)


def env_dim(ch: ChannelRep) -> int:
    return stinespring(ch).data.shape[0] // ch.d_out


def isometry(ch: ChannelRep) -> np.ndarray:
    """The Stinespring operator ``A -> B (x) E`` as a matrix."""
    return np.array(stinespring(ch).data)


def complementary(ch: ChannelRep, env_label: str | None = None) -> ChannelRep:
    """``rho -> Tr_B V rho V^dagger`` for the Stinespring isometry ``V``; output is the environment."""
    st = stinespring(ch)
    k = st.kraus  # (m, dout, din)
    comp = np.ascontiguousarray(k.transpose(1, 0, 2))  # (dout, m, din)
    label = env_label or ch.env_label
    out = SystemLayout.of((label, comp.shape[1]))
    return ChannelRep("kraus", comp, ch.in_layout, out, env_label=ch.out_layout.labels[0])


# ---------------------------------------------------------------------------
# action on states
# ---------------------------------------------------------------------------


def apply_to_matrix(ch: ChannelRep, matrix: np.ndarray, layout: SystemLayout,
                    on: Sequence[str] | None = None) -> tuple[np.ndarray, SystemLayout]:
    """Apply ``ch`` to an arbitrary (not necessarily positive) operator on ``layout``.

    The channel acts on the factors named ``on`` (default: the labels of its
    input layout).  Output factors take the position of the first input factor.
    """
    on = list(on) if on is not None else list(ch.in_layout.labels)
    pos = [layout.index(lab) for lab in on]
    din = int(np.prod([layout.dims[p] for p in pos], dtype=np.int64))
    if din != ch.d_in:
        raise LayoutError(f"channel input dimension {ch.d_in} does not match factors {on} (dim {din})")
    rest = [p for p in range(len(layout.dims)) if p not in pos]
    clash = set(ch.out_layout.labels) & {layout.labels[p] for p in rest}
    if clash:
        raise LayoutError(f"channel output labels collide with untouched factors: {sorted(clash)}")
    m = permute_matrix(matrix, layout.dims, pos + rest)
    d_rest = matrix.shape[0] // din
    out = kernels.kraus_apply(ch.kraus, m, d_rest)
    insert_at = sum(1 for p in rest if p < min(pos))
    rest_f = [layout.factors[p] for p in rest]
    new_f = rest_f[:insert_at] + list(ch.out_layout.factors) + rest_f[insert_at:]
    nout = len(ch.out_layout.factors)
    cur = list(ch.out_layout.factors) + rest_f
    dims_cur = [d for _, d in cur]
    perm = list(range(nout, nout + insert_at)) + list(range(nout)) + list(range(nout + insert_at, len(cur)))
    out = permute_matrix(out, dims_cur, perm)
    split = layout.classical_split if layout.classical_split and layout.classical_split[0] not in on else None
    return out, SystemLayout(tuple(new_f), split)


def apply(ch: ChannelRep, rho: DensityOperator, on: Sequence[str] | None = None) -> DensityOperator:
    out, layout = apply_to_matrix(ch, rho.matrix, rho.layout, on)
    tag = rho.normalization if ch.trace_flag == TP else None
    if tag == "normalized" and abs(np.trace(out).real - 1) > TOL.trace:
        tag = None
    return DensityOperator.from_matrix(out, layout, tag)


def compose(second: ChannelRep, first: ChannelRep) -> ChannelRep:
    """Kraus form of ``second o first``."""
    if second.d_in != first.d_out:
        raise LayoutError("composition dimension mismatch")
    ops = np.einsum("mab,nbc->mnac", second.kraus, first.kraus)
    ops = ops.reshape(-1, second.d_out, first.d_in)
    return ChannelRep("kraus", ops, first.in_layout, second.out_layout)


def tensor_channels(a: ChannelRep, b: ChannelRep) -> ChannelRep:
    ops = np.array([np.kron(x, y) for x in a.kraus for y in b.kraus])
    return ChannelRep("kraus", ops, a.in_layout.concat(b.in_layout), a.out_layout.concat(b.out_layout))


def tensor_power(ch: ChannelRep, n: int) -> ChannelRep:
    """``ch^{(x) n}`` with factor labels suffixed by the copy index ``1..n``."""
    if n < 1:
        raise ValueError("tensor power needs n >= 1")
    if n == 1:
        return ch
    copies = [ch.relabel({lab: f"{lab}{i}" for lab in ch.in_layout.labels},
                         {lab: f"{lab}{i}" for lab in ch.out_layout.labels}) for i in range(1, n + 1)]
    out = copies[0]
    for c in copies[1:]:
        out = tensor_channels(out, c)
    return out


# ---------------------------------------------------------------------------
# channel zoo
# ---------------------------------------------------------------------------


def weyl_operators(d: int) -> list[np.ndarray]:
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return [np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b) for a in range(d) for b in range(d)]


def identity_channel(d: int, labels=("A", "B")) -> ChannelRep:
    return ChannelRep.from_kraus(np.eye(d), d, d, labels)


def depolarizing(p: float, d: int = 2, labels=("A", "B")) -> ChannelRep:
    """``rho -> (1-p) rho + p Tr(rho) I/d`` for ``p`` in ``[0, 1 + 1/(d^2-1)]``."""
    w = weyl_operators(d)
    c0 = 1 - p + p / d**2
    if c0 < -1e-15 or p < 0:
        raise ValueError(f"depolarizing parameter {p} out of range")
    ops = [np.sqrt(max(c0, 0.0)) * w[0]] + [np.sqrt(p) / d * u for u in w[1:]]
    return ChannelRep.from_kraus(ops, d, d, labels)


def dephasing(p: float, d: int = 2, labels=("A", "B")) -> ChannelRep:
    """``rho -> (1-p) rho + p sum_i |i><i| rho |i><i|``."""
    if not 0 <= p <= 1:
        raise ValueError(f"dephasing parameter {p} out of [0, 1]")
    ops = [np.sqrt(1 - p) * np.eye(d)]
    for i in range(d):
        proj = np.zeros((d, d))
        proj[i, i] = 1
        ops.append(np.sqrt(p) * proj)
    return ChannelRep.from_kraus(ops, d, d, labels)


def amplitude_damping(gamma: float, labels=("A", "B")) -> ChannelRep:
    if not 0 <= gamma <= 1:
        raise ValueError(f"damping parameter {gamma} out of [0, 1]")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]])
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]])
    return ChannelRep.from_kraus([k0, k1], 2, 2, labels)


def erasure(p: float, d: int = 2, labels=("A", "B")) -> ChannelRep:
    """Output dimension ``d + 1``; the last level flags an erasure."""
    if not 0 <= p <= 1:
        raise ValueError(f"erasure probability {p} out of [0, 1]")
    keep = np.zeros((d + 1, d))
    keep[:d, :d] = np.sqrt(1 - p) * np.eye(d)
    ops = [keep]
    for i in range(d):
        k = np.zeros((d + 1, d))
        k[d, i] = np.sqrt(p)
        ops.append(k)
    return ChannelRep.from_kraus(ops, d, d + 1, labels)


STANDARD = {
    "depolarizing": depolarizing,
    "dephasing": dephasing,
    "amplitude_damping": amplitude_damping,
    "erasure": erasure,
}


def standard_channel(name: str, param: float, d: int = 2, labels=("A", "B")) -> ChannelRep:
    if name not in STANDARD:
        raise ValueError(f"unknown standard channel {name!r}; choose from {sorted(STANDARD)}")
    if name == "amplitude_damping":
        if d != 2:
            raise ValueError("amplitude damping is defined for qubits only")
        return amplitude_damping(param, labels)
    return STANDARD[name](param, d, labels)


def trace_channel(d: int, labels=("A", "B")) -> ChannelRep:
    """The trace map onto a one-dimensional output."""
    return ChannelRep.from_kraus([np.eye(d)[i:i + 1] for i in range(d)], d, 1, labels)


def partial_trace_channel(dims: Sequence[int], keep: Sequence[int], labels=("A", "B")) -> ChannelRep:
    """Trace out the factors not in ``keep`` of an input with the given dims."""
    dims = list(dims)
    keep = sorted(keep)
    drop = [i for i in range(len(dims)) if i not in keep]
    din = int(np.prod(dims))
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    ops = []
    for idx in itertools.product(*[range(dims[i]) for i in drop]):
        k = np.zeros((dk, din))
        for kidx in itertools.product(*[range(dims[i]) for i in keep]):
            full = [0] * len(dims)
            for i, v in zip(keep, kidx):
                full[i] = v
            for i, v in zip(drop, idx):
                full[i] = v
            col = int(np.ravel_multi_index(full, dims))
            row = int(np.ravel_multi_index(kidx, [dims[i] for i in keep])) if keep else 0
            k[row, col] = 1
        ops.append(k)
    return ChannelRep.from_kraus(ops, din, dk, labels)


def random_channel(d_in: int, d_out: int, n_kraus: int = 2, rng=None, labels=("A", "B")) -> ChannelRep:
    """Random CPTP map from the first ``d_in`` columns of a Haar unitary on ``d_out * n_kraus``."""
    rng = as_generator(rng)
    big = d_out * n_kraus
    if big < d_in:
        raise ValueError("not enough Kraus operators for an isometry")
    iso = haar_unitary(big, rng)[:, :d_in]
    kraus = iso.reshape(d_out, n_kraus, d_in).transpose(1, 0, 2)
    return ChannelRep.from_kraus(kraus, d_in, d_out, labels)


def dephasing_matrix_channel(d: int, labels=("A", "B")) -> ChannelRep:
    """Completely dephasing map in the computational basis."""
    return dephasing(1.0, d, labels)


def joint_output(ch: ChannelRep, rho: DensityOperator) -> DensityOperator:
    """``V rho V^dagger`` on ``out (x) env (x) rest`` for the Stinespring isometry ``V``."""
    st = stinespring(ch)
    denv = st.data.shape[0] // ch.d_out
    env = ch.env_label
    if env in rho.layout or env in ch.out_layout:
        env = env + "_env"
    out_layout = ch.out_layout.concat(SystemLayout.of((env, denv)))
    wide = ChannelRep("kraus", st.data[None], ch.in_layout, out_layout)
    return apply(wide, rho)


__all__ = [
    "ChannelRep", "ChannelError", "to_choi", "choi_matrix", "choi_inverse", "stinespring",
    "complementary", "apply", "apply_to_matrix", "compose", "tensor_channels", "tensor_power",
    "standard_channel", "identity_channel", "depolarizing", "dephasing", "amplitude_damping", "erasure",
    "trace_channel", "partial_trace_channel", "random_channel", "joint_output", "isometry", "env_dim",
    "partial_trace_matrix",
]
