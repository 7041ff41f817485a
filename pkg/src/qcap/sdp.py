"""A small conic modelling layer over Clarabel (and SCS for very large cones).

Complex matrix expressions are affine maps of a real variable vector.  A
Hermitian constraint ``M >= 0`` is passed to the solver as the real
symmetric constraint ``[[Re M, -Im M], [Im M, Re M]] >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from qcap.config import solver_tolerances

# realified PSD blocks above this size go to the first-order solver
DENSE_PSD_LIMIT = 64
SCS_EPS = 1e-7
SCS_MAX_ITERS = 20000
# a small program on which the interior-point solver stalls is re-solved by SCS
REFINE_EPS = 1e-9
REFINE_MAX_ITERS = 100000
REFINE_SECONDS = 20.0


class SolverError(RuntimeError):
    """Raised when the conic solver fails outright (not merely inaccurate)."""


def _pad(m: sp.csr_matrix, ncols: int) -> sp.csr_matrix:
    if m.shape[1] == ncols:
        return m
    m = m.tocoo()
    return sp.csr_matrix((m.data, (m.row, m.col)), shape=(m.shape[0], ncols))


class Affine:
    """Complex ``rows x cols`` matrix ``(Are + i Aim) x + (cre + i cim)`` with row-major entries."""

    __array_priority__ = 100

    def __init__(self, are, aim, cre, cim, shape):
        self.are = sp.csr_matrix(are)
        self.aim = sp.csr_matrix(aim)
        self.cre = np.asarray(cre, dtype=float)
        self.cim = np.asarray(cim, dtype=float)
        self.shape = tuple(shape)

    @property
    def nvars(self) -> int:
        return self.are.shape[1]

    @classmethod
    def const(cls, m, nvars: int = 0) -> "Affine":
        m = np.atleast_2d(np.asarray(m, dtype=np.complex128))
        k = m.size
        z = sp.csr_matrix((k, nvars))
        return cls(z, z, m.real.reshape(-1), m.imag.reshape(-1), m.shape)

    def _map(self, sel: sp.spmatrix, shape) -> "Affine":
        return Affine(sel @ self.are, sel @ self.aim, sel @ self.cre, sel @ self.cim, shape)

    def _aligned(self, other: "Affine"):
        n = max(self.nvars, other.nvars)
        return (_pad(self.are, n), _pad(self.aim, n), _pad(other.are, n), _pad(other.aim, n))

    def __add__(self, other):
        if not isinstance(other, Affine):
            other = Affine.const(np.broadcast_to(other, self.shape), self.nvars)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        a1, b1, a2, b2 = self._aligned(other)
        return Affine(a1 + a2, b1 + b2, self.cre + other.cre, self.cim + other.cim, self.shape)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.are, -self.aim, -self.cre, -self.cim, self.shape)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Affine) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        s = complex(s)
        if s.imag == 0:
            r = s.real
            return Affine(r * self.are, r * self.aim, r * self.cre, r * self.cim, self.shape)
        a, b = s.real, s.imag
        return Affine(a * self.are - b * self.aim, a * self.aim + b * self.are,
                      a * self.cre - b * self.cim, a * self.cim + b * self.cre, self.shape)

    __rmul__ = __mul__

    def lmul(self, c) -> "Affine":
        """``C @ self`` for a constant matrix ``C``."""
        c = np.asarray(c, dtype=np.complex128)
        s = self.shape[1]
        kr = sp.kron(sp.csr_matrix(c.real), sp.identity(s), format="csr")
        ki = sp.kron(sp.csr_matrix(c.imag), sp.identity(s), format="csr")
        shape = (c.shape[0], s)
        return Affine(kr @ self.are - ki @ self.aim, kr @ self.aim + ki @ self.are,
                      kr @ self.cre - ki @ self.cim, kr @ self.cim + ki @ self.cre, shape)

    def rmul(self, d) -> "Affine":
        """``self @ D`` for a constant matrix ``D``."""
        return self.T.lmul(np.asarray(d).T).T

    @property
    def T(self) -> "Affine":
        r, c = self.shape
        idx = np.arange(r * c).reshape(r, c).T.reshape(-1)
        sel = sp.csr_matrix((np.ones(r * c), (np.arange(r * c), idx)), shape=(r * c, r * c))
        return self._map(sel, (c, r))

    @property
    def H(self) -> "Affine":
        t = self.T
        return Affine(t.are, -t.aim, t.cre, -t.cim, t.shape)

    def trace(self) -> "Affine":
        r, c = self.shape
        n = min(r, c)
        idx = np.arange(n) * c + np.arange(n)
        sel = sp.csr_matrix((np.ones(n), (np.zeros(n, dtype=int), idx)), shape=(1, r * c))
        return self._map(sel, (1, 1))

    def real(self) -> "Affine":
        z = sp.csr_matrix(self.aim.shape)
        return Affine(self.are, z, self.cre, np.zeros_like(self.cim), self.shape)

    def entry(self, i: int, j: int) -> "Affine":
        k = i * self.shape[1] + j
        sel = sp.csr_matrix(([1.0], ([0], [k])), shape=(1, self.shape[0] * self.shape[1]))
        return self._map(sel, (1, 1))

    def value(self, x: np.ndarray) -> np.ndarray:
        n = self.nvars
        v = (self.are @ x[:n] + self.cre) + 1j * (self.aim @ x[:n] + self.cim)
        return v.reshape(self.shape)


def kron_eye_left(d: int, x: Affine) -> Affine:
    """``I_d (x) X``."""
    m, n = x.shape
    a, i, j = np.meshgrid(np.arange(d), np.arange(m), np.arange(n), indexing="ij")
    rows = ((a * m + i) * (d * n) + (a * n + j)).reshape(-1)
    cols = (i * n + j).reshape(-1)
    sel = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(d * m * d * n, m * n))
    return x._map(sel, (d * m, d * n))


def kron_eye_right(x: Affine, d: int) -> Affine:
    """``X (x) I_d``."""
    m, n = x.shape
    i, j, a = np.meshgrid(np.arange(m), np.arange(n), np.arange(d), indexing="ij")
    rows = ((i * d + a) * (n * d) + (j * d + a)).reshape(-1)
    cols = (i * n + j).reshape(-1)
    sel = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(m * d * n * d, m * n))
    return x._map(sel, (m * d, n * d))


def block(blocks: list[list[Affine]]) -> Affine:
    """Assemble a block matrix from affine blocks of compatible shapes."""
    nv = max(b.nvars for row in blocks for b in row)
    heights = [row[0].shape[0] for row in blocks]
    widths = [b.shape[1] for b in blocks[0]]
    tot_r, tot_c = sum(heights), sum(widths)
    are, aim, cre, cim = [], [], [], []
    rows_all = []
    r0 = 0
    for bi, row in enumerate(blocks):
        c0 = 0
        for bj, b in enumerate(row):
            h, w = b.shape
            if (h, w) != (heights[bi], widths[bj]):
                raise ValueError("inconsistent block shapes")
            ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
            rows_all.append(((r0 + ii) * tot_c + (c0 + jj)).reshape(-1))
            are.append(_pad(b.are, nv))
            aim.append(_pad(b.aim, nv))
            cre.append(b.cre)
            cim.append(b.cim)
            c0 += w
        r0 += heights[bi]
    order = np.concatenate(rows_all)
    perm = sp.csr_matrix((np.ones(order.size), (order, np.arange(order.size))), shape=(tot_r * tot_c, order.size))
    return Affine(perm @ sp.vstack(are), perm @ sp.vstack(aim), perm @ np.concatenate(cre),
                  perm @ np.concatenate(cim), (tot_r, tot_c))


@lru_cache(maxsize=64)
def _svec_selector(n: int, lower: bool) -> sp.csr_matrix:
    """Map stacked ``[Re vec M; Im vec M]`` to the scaled triangle of the realified ``2n`` matrix."""
    big = 2 * n
    rows, cols, vals = [], [], []
    k = 0
    for j in range(big):
        irange = range(j, big) if lower else range(j + 1)
        for i in irange:
            scale = 1.0 if i == j else np.sqrt(2.0)
            bi, bj, ii, jj = i >= n, j >= n, i % n, j % n
            if bi == bj:
                src, sgn = ii * n + jj, 1.0
            elif bi and not bj:
                src, sgn = n * n + ii * n + jj, 1.0
            else:
                src, sgn = n * n + ii * n + jj, -1.0
            rows.append(k)
            cols.append(src)
            vals.append(sgn * scale)
            k += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(k, 2 * n * n))


@dataclass
class Solution:
    status: str
    x: np.ndarray
    primal: float
    dual: float
    gap: float
    backend: str
    converged: bool = True

    def value(self, expr: Affine) -> np.ndarray:
        return expr.value(self.x)


class Model:
    """Linear objective over real variables with zero, nonnegative, second-order and PSD cone constraints."""

    def __init__(self):
        self.n = 0
        self._zero: list[Affine] = []
        self._nonneg: list[Affine] = []
        self._soc: list[Affine] = []
        self._psd: list[Affine] = []

    # variables -------------------------------------------------------------

    def _new(self, k: int) -> np.ndarray:
        idx = np.arange(self.n, self.n + k)
        self.n += k
        return idx

    def real(self, k: int = 1) -> Affine:
        idx = self._new(k)
        are = sp.csr_matrix((np.ones(k), (np.arange(k), idx)), shape=(k, self.n))
        return Affine(are, sp.csr_matrix((k, self.n)), np.zeros(k), np.zeros(k), (k, 1))

    def hermitian(self, d: int) -> Affine:
        iu, ju = np.triu_indices(d, 1)
        ndiag, noff = d, iu.size
        idx = self._new(ndiag + 2 * noff)
        dg, re_off, im_off = idx[:ndiag], idx[ndiag:ndiag + noff], idx[ndiag + noff:]
        n2 = d * d
        r_rows = np.concatenate([np.arange(d) * (d + 1), iu * d + ju, ju * d + iu])
        r_cols = np.concatenate([dg, re_off, re_off])
        are = sp.csr_matrix((np.ones(r_rows.size), (r_rows, r_cols)), shape=(n2, self.n))
        i_rows = np.concatenate([iu * d + ju, ju * d + iu])
        i_cols = np.concatenate([im_off, im_off])
        i_vals = np.concatenate([np.ones(noff), -np.ones(noff)])
        aim = sp.csr_matrix((i_vals, (i_rows, i_cols)), shape=(n2, self.n))
        return Affine(are, aim, np.zeros(n2), np.zeros(n2), (d, d))

    def complex_matrix(self, rows: int, cols: int) -> Affine:
        k = rows * cols
        idx = self._new(2 * k)
        are = sp.csr_matrix((np.ones(k), (np.arange(k), idx[:k])), shape=(k, self.n))
        aim = sp.csr_matrix((np.ones(k), (np.arange(k), idx[k:])), shape=(k, self.n))
        return Affine(are, aim, np.zeros(k), np.zeros(k), (rows, cols))

    # constraints -----------------------------------------------------------

    def psd(self, m: Affine) -> None:
        if m.shape[0] != m.shape[1]:
            raise ValueError("PSD constraint on a non-square expression")
        self._psd.append(m)

    def nonneg(self, e: Affine) -> None:
        self._nonneg.append(e.real())

    def equal(self, e: Affine) -> None:
        self._zero.append(e.real())
        if np.any(e.cim) or e.aim.nnz:
            self._zero.append(Affine(e.aim, sp.csr_matrix(e.aim.shape), e.cim, np.zeros_like(e.cim), e.shape))

    def soc(self, head: Affine, tail: list[Affine]) -> None:
        """``head >= || tail ||_2`` for real scalar expressions."""
        self._soc.append([head.real()] + [t.real() for t in tail])

    def rotated_soc(self, t: Affine, y: Affine, z: Affine) -> None:
        """``t^2 <= y z`` with ``y, z >= 0``."""
        self.soc(y + z, [2 * t, y - z])

    # solve -----------------------------------------------------------------

    def _rows(self, lower: bool):
        a_blocks, b_blocks = [], []
        cones = {"z": 0, "l": 0, "q": [], "s": []}

        def add(e: Affine):
            a_blocks.append(-_pad(e.are, self.n))
            b_blocks.append(e.cre)

        for e in self._zero:
            add(e)
            cones["z"] += e.shape[0] * e.shape[1]
        for e in self._nonneg:
            add(e)
            cones["l"] += e.shape[0] * e.shape[1]
        for parts in self._soc:
            for e in parts:
                add(e)
            cones["q"].append(len(parts))
        for m in self._psd:
            k = m.shape[0]
            sel = _svec_selector(k, lower)
            stacked = sp.vstack([_pad(m.are, self.n), _pad(m.aim, self.n)])
            a_blocks.append(-(sel @ stacked))
            b_blocks.append(sel @ np.concatenate([m.cre, m.cim]))
            cones["s"].append(2 * k)
        a = sp.vstack(a_blocks, format="csc") if a_blocks else sp.csc_matrix((0, self.n))
        b = np.concatenate(b_blocks) if b_blocks else np.zeros(0)
        return a, b, cones

    def solve(self, objective: Affine, sense: str = "min", tighten: float = 1.0) -> Solution:
        """Optimize; ``tighten < 1`` scales the gap and feasibility tolerances down."""
        tol = solver_tolerances()
        if tighten != 1.0:
            tol = replace(tol, solver_gap=tol.solver_gap * tighten, solver_feas=tol.solver_feas * tighten)
        q = _pad(objective.are, self.n).toarray().reshape(-1)
        offset = float(objective.cre[0])
        sign = 1.0 if sense == "min" else -1.0
        big = max(self._psd_sizes(), default=0) > DENSE_PSD_LIMIT
        if big:
            sol = self._solve_scs(sign * q, tol)
        else:
            sol = self._solve_clarabel(sign * q, tol)
            if not sol.converged:
                sol = self._refine(sign * q, tol, sol)
        sol.primal = sign * sol.primal + offset
        sol.dual = sign * sol.dual + offset
        return sol

    def _psd_sizes(self):
        return [2 * m.shape[0] for m in self._psd]

    def _solve_clarabel(self, q, tol) -> Solution:
        import clarabel

        a, b, cones = self._rows(lower=False)
        cl = []
        if cones["z"]:
            cl.append(clarabel.ZeroConeT(cones["z"]))
        if cones["l"]:
            cl.append(clarabel.NonnegativeConeT(cones["l"]))
        cl += [clarabel.SecondOrderConeT(k) for k in cones["q"]]
        cl += [clarabel.PSDTriangleConeT(k) for k in cones["s"]]
        st = clarabel.DefaultSettings()
        st.verbose = False
        st.tol_gap_rel = tol.solver_gap
        st.tol_gap_abs = tol.solver_gap
        st.tol_feas = tol.solver_feas
        st.max_iter = 500
        p = sp.csc_matrix((self.n, self.n))
        res = clarabel.DefaultSolver(p, q, a, b, cl, st).solve()
        status = str(res.status)
        x = np.array(res.x)
        if status in ("PrimalInfeasible", "DualInfeasible", "AlmostPrimalInfeasible", "AlmostDualInfeasible"):
            return Solution("infeasible", x, np.nan, np.nan, np.inf, "clarabel")
        if status not in ("Solved", "AlmostSolved", "MaxIterations", "InsufficientProgress", "MaxTime"):
            raise SolverError(f"conic solver failed with status {status}")
        primal, dual = float(res.obj_val), float(res.obj_val_dual)
        if not (np.isfinite(primal) and np.isfinite(dual)):
            raise SolverError(f"conic solver returned non-finite objective ({status})")
        gap = abs(primal - dual)
        ok = status in ("Solved", "AlmostSolved") and gap <= tol.near_optimal_gap
        return Solution("optimal" if ok else "near-optimal", x, primal, dual, gap, "clarabel", status == "Solved")

    def _refine(self, q, tol, fallback: Solution) -> Solution:
        try:
            sol = self._solve_scs(q, tol, REFINE_EPS, REFINE_MAX_ITERS, REFINE_SECONDS)
        except SolverError:
            return fallback
        return sol if sol.converged and sol.status == "optimal" else fallback

    def _solve_scs(self, q, tol, eps: float = SCS_EPS, max_iters: int = SCS_MAX_ITERS,
                   seconds: float = 0.0) -> Solution:
        import scs

        a, b, cones = self._rows(lower=True)
        cone = {k: v for k, v in cones.items() if v}
        solver = scs.SCS({"A": a, "b": b, "c": q}, cone, eps_abs=eps, eps_rel=eps, max_iters=max_iters,
                         time_limit_secs=seconds, verbose=False, acceleration_lookback=20)
        res = solver.solve()
        info = res["info"]
        status = info["status"]
        x = np.asarray(res["x"])
        if "infeasible" in status:
            return Solution("infeasible", x, np.nan, np.nan, np.inf, "scs")
        if "solved" not in status:
            raise SolverError(f"first-order solver failed with status {status}")
        primal, dual = float(info["pobj"]), float(info["dobj"])
        gap = abs(primal - dual)
        ok = status == "solved" and gap <= tol.near_optimal_gap
        return Solution("optimal" if ok else "near-optimal", x, primal, dual, gap, "scs", status == "solved")
