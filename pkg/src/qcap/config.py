"""Numerical tolerances shared by every module."""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

ENV_SOLVER_TOL = "QCAP_SOLVER_TOL"


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-10
    psd_floor: float = -1e-9
    trace: float = 1e-9
    equality: float = 1e-8
    pure_norm: float = 1e-10
    kraus_rank_cutoff: float = 1e-10
    solver_gap: float = 1e-7
    solver_feas: float = 1e-8
    near_optimal_gap: float = 1e-5
    ball_slack: float = 1e-6


def _from_env() -> Tolerances:
    tol = Tolerances()
    raw = os.environ.get(ENV_SOLVER_TOL)
    if raw:
        try:
            gap = float(raw)
        except ValueError as exc:
            raise ValueError(f"{ENV_SOLVER_TOL} must be a float, got {raw!r}") from exc
        if not 0 < gap < 1:
            raise ValueError(f"{ENV_SOLVER_TOL} must lie in (0, 1), got {gap}")
        tol = replace(tol, solver_gap=gap)
    return tol


TOL = _from_env()


def solver_tolerances() -> Tolerances:
    """Re-read the environment; the CLI calls this so an exported override is honoured."""
    return _from_env()
