"""Command-line interface.

Results go to stdout as JSON with sorted keys and floats rounded to 9
significant digits, so identical inputs give byte-identical output.  Wall
time is reported on stderr.  Exit codes: 0 success, 2 input error, 3 solver
failure, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from qcap import __version__
from qcap.config import solver_tolerances

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_INTERNAL = 0, 2, 3, 4


class InputError(ValueError):
    """Invalid flag combination detected after parsing."""


def _labels(raw: str | None) -> list[str] | None:
    if raw is None:
        return None
    return [x for x in (s.strip() for s in raw.split(",")) if x] if raw else []


def _file_digest(path: str | None) -> str | None:
    if not path:
        return None
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return None


def _config_hash(args: argparse.Namespace, echo: dict) -> str:
    inputs = {k: _file_digest(v) for k, v in echo.items()
              if k in ("channel", "state", "ensemble", "instance") and v}
    blob = json.dumps({"args": echo, "inputs": inputs}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_entropy(args) -> tuple[dict, int]:
    from qcap import entropies as ent
    from qcap.io import load_state

    rho = load_state(args.state)
    a, b = _labels(args.a), _labels(args.b)
    if a is None and b is None:
        a = [rho.layout.labels[0]]
        b = list(rho.layout.labels[1:])
    which, eps = args.which, args.eps
    if not 0 <= eps < 1:
        raise InputError(f"--eps {eps} outside [0, 1)")
    if which in ("hmin", "hmax", "vn") and eps != 0:
        raise InputError(f"--eps is only meaningful for smoothed entropies, not {which}")
    if which == "vn":
        return {"value": ent.von_neumann_cond(rho, a, b) if b else ent.entropy(rho, a),
                "status": "exact", "duality_gap": 0.0}, EXIT_OK
    fn = {"hmin": lambda: ent.hmin(rho, a, b), "hmax": lambda: ent.hmax(rho, a, b),
          "hmin_smooth": lambda: ent.hmin_smooth(rho, eps, a, b),
          "hmax_smooth": lambda: ent.hmax_smooth(rho, eps, a, b)}[which]
    r = fn()
    code = EXIT_SOLVER if r.status == ent.INFEASIBLE else EXIT_OK
    return {"value": r.value, "status": r.status, "duality_gap": r.duality_gap, "epsilon": eps}, code


def _default_ensemble(d_a: int, c: float):
    from qcap.bounds import InputEnsemble

    phi = InputEnsemble.maximally_entangled(d_a)
    if c == 0:
        return phi
    return InputEnsemble.padded(phi, max(2, 2 ** math.ceil(c)))


def cmd_bound(args) -> tuple[dict, int]:
    from qcap import bounds as bd
    from qcap.bounds import InputEnsemble
    from qcap.io import load_channel, load_state

    ch = load_channel(args.channel)
    if args.c is None or args.q is None:
        raise InputError("--c and --q are required")
    limited = args.mode in ("direct", "converse")
    if limited and args.e is None:
        raise InputError(f"--e is required for mode {args.mode}")
    e = args.e or 0.0
    ens = InputEnsemble(load_state(args.ensemble)) if args.ensemble else _default_ensemble(ch.d_in, args.c)
    res: dict = {"mode": args.mode, "ensemble": {"d_Sc": ens.d_sc, "d_Sr": ens.d_sr}}
    if args.mode == "direct":
        code = bd.CodeParams(args.c, args.q, e, args.delta)
        budget = bd.budget_for_error(args.delta, args.eps, ens, code, args.delta1, args.delta2)
        r = bd.direct_feasible(ens, ch, code, budget)
        smoothing = {"epsilon": budget.epsilon}
        if math.isfinite(r.slacks.get("classical", 0.0)):
            smoothing["delta1"] = budget.delta1
        if math.isfinite(r.slacks.get("quantum", 0.0)):
            smoothing["delta2"] = budget.delta2
        res.update(feasible=r.feasible, achieved_error=r.achieved_error, slacks=r.slacks, entropies=r.entropies,
                   smoothing=smoothing)
    elif args.mode == "converse":
        code = bd.CodeParams(args.c, args.q, e, args.delta)
        r = bd.converse_holds(ens, ch, code, args.iota)
        res.update(holds=r.holds, slacks=r.slacks, entropies=r.entropies,
                   smoothing={"lambda": r.lam, "lambda_prime": r.lam_prime, "iota": args.iota},
                   saturated=list(r.saturated))
    elif args.mode == "unlimited-direct":
        dp = args.delta_prime if args.delta_prime is not None else bd.delta_prime_for_error(args.delta, args.eps)
        r = bd.unlimited_direct(ens, ch, (args.c, args.q), bd.SmoothingBudget(epsilon=args.eps, delta_prime=dp))
        res.update(feasible=r.feasible, achieved_error=r.achieved_error, slacks=r.slacks, entropies=r.entropies,
                   smoothing={"epsilon": args.eps, "delta_prime": dp})
    else:
        r = bd.unlimited_converse(ens, ch, (args.c, args.q), args.iota, args.delta)
        res.update(holds=r.holds, slacks=r.slacks, entropies=r.entropies,
                   smoothing={"lambda": r.lam, "iota": args.iota}, saturated=r.saturated[0])
    return res, EXIT_OK


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    from qcap.io import canonical

    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(canonical(row))


def _ineq_doc(reg) -> list:
    return [{"normal": list(a), "offset": b} for a, b in reg.inequalities]


def cmd_region(args) -> tuple[dict, int]:
    from qcap import asymptotic as asy
    from qcap import bounds as bd
    from qcap.io import dumps, load_channel

    ch = load_channel(args.channel)
    out = Path(args.out) if args.out else None
    rng = np.random.default_rng(args.seed)
    if args.mode == "asymptotic":
        fam = asy.default_family(ch.d_in, args.samples, rng)
        reg = asy.region_union(ch, fam, args.n_max)
        rows = [list(v) for v in sorted(reg.vertices, key=lambda v: tuple(np.round(v, 9)))]
        res = {"mode": "asymptotic", "n_ensembles": len(fam), "n_vertices": len(rows), "vertices": rows}
        if out:
            _write_csv(out, ["C", "Q", "E"], rows)
            out.with_suffix(".json").write_text(dumps({"label": reg.label, "inequalities": _ineq_doc(reg)}))
        return res, EXIT_OK
    fam = [bd.InputEnsemble.maximally_entangled(ch.d_in), bd.InputEnsemble.classical(ch.d_in)]
    fam += [asy.random_ensemble(ch.d_in, 2, ch.d_in, rng) for _ in range(args.samples)]
    regs = bd.simultaneous_region(ch, args.delta, fam, bd.GridConfig(args.grid, args.grid + 2))
    rows = []
    for kind, group in (("inner", regs.inner), ("outer", regs.outer)):
        for i, reg in enumerate(group):
            rows += [[kind, i, v[0], v[1]] for v in reg.vertices]
    violations = [v for v in regs.inner_vertices() if not regs.outer_contains(v)]
    res = {"mode": "oneshot", "delta": args.delta, "n_inner": len(regs.inner), "n_outer": len(regs.outer),
           "skipped": len(regs.skipped), "inner_in_outer": not violations, "rows": rows}
    if out:
        _write_csv(out, ["region", "index", "c", "q"], rows)
        side = {"inner": [_ineq_doc(r) for r in regs.inner], "outer": [_ineq_doc(r) for r in regs.outer]}
        out.with_suffix(".json").write_text(dumps(side))
    return res, EXIT_OK


def cmd_decouple(args) -> tuple[dict, int]:
    from qcap.decoupling import verify_direct_theorem
    from qcap.io import load_instance

    inst = load_instance(args.instance)
    if args.samples < 2:
        raise InputError("--samples must be at least 2")
    rep = verify_direct_theorem(inst, args.samples, args.seed, args.workers)
    return {"mean_delta": rep.mean_delta, "std_error": rep.std_error, "bound_rhs": rep.bound_rhs,
            "n_samples": rep.n_samples, "H_I": rep.exponents[0], "H_II": rep.exponents[1],
            "verdict": "PASS" if rep.passed else "FAIL"}, EXIT_OK


def cmd_channel_validate(args) -> tuple[dict, int]:
    from qcap.channels import choi_matrix
    from qcap.io import load_channel

    ch = load_channel(args.channel)
    w = np.linalg.eigvalsh(choi_matrix(ch))
    return {"d_in": ch.d_in, "d_out": ch.d_out, "kind": ch.kind, "n_kraus": int(ch.kraus.shape[0]),
            "trace_flag": ch.trace_flag, "choi_min_eigenvalue": float(w.min())}, EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcap", description="Capacity bounds and decoupling checks for quantum channels.")
    p.add_argument("--version", action="version", version=f"qcap {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    e = sub.add_parser("entropy", help="conditional min/max/von Neumann entropy of a state file")
    e.add_argument("--state", required=True)
    e.add_argument("--which", required=True, choices=["hmin", "hmax", "hmin_smooth", "hmax_smooth", "vn"])
    e.add_argument("--eps", type=float, default=0.0)
    e.add_argument("--a", help="comma-separated labels of the conditioned system")
    e.add_argument("--b", help="comma-separated labels of the conditioning system")
    e.set_defaults(func=cmd_entropy)

    b = sub.add_parser("bound", help="one-shot direct or converse conditions")
    b.add_argument("--channel", required=True)
    b.add_argument("--mode", required=True, choices=["direct", "converse", "unlimited-direct", "unlimited-converse"])
    b.add_argument("--c", type=float)
    b.add_argument("--q", type=float)
    b.add_argument("--e", type=float)
    b.add_argument("--delta", type=float, default=1.0)
    b.add_argument("--eps", type=float, default=0.0)
    b.add_argument("--delta1", type=float)
    b.add_argument("--delta2", type=float)
    b.add_argument("--delta-prime", dest="delta_prime", type=float)
    b.add_argument("--iota", type=float, default=1.0)
    b.add_argument("--ensemble", help="state file on [Sc, Sr, A]")
    b.set_defaults(func=cmd_bound)

    r = sub.add_parser("region", help="one-shot or asymptotic rate regions")
    r.add_argument("--channel", required=True)
    r.add_argument("--mode", required=True, choices=["oneshot", "asymptotic"])
    r.add_argument("--delta", type=float, default=1.0)
    r.add_argument("--grid", type=int, default=3)
    r.add_argument("--samples", type=int, default=2)
    r.add_argument("--n-max", dest="n_max", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_region)

    d = sub.add_parser("decouple", help="Monte-Carlo check of the partial decoupling bound")
    d.add_argument("--instance", required=True)
    d.add_argument("--samples", type=int, default=2000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--workers", type=int, default=1)
    d.set_defaults(func=cmd_decouple)

    c = sub.add_parser("channel", help="channel utilities")
    csub = c.add_subparsers(dest="action", required=True)
    v = csub.add_parser("validate", help="parse a channel file and report its properties")
    v.add_argument("--channel", required=True)
    v.set_defaults(func=cmd_channel_validate)
    return p


def _classify(exc: Exception) -> int:
    from qcap.sdp import SolverError

    if isinstance(exc, SolverError):
        return EXIT_SOLVER
    if isinstance(exc, (ValueError, KeyError, OSError)):
        return EXIT_INPUT
    return EXIT_INTERNAL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    echo = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    try:
        solver_tolerances()
        results, code = args.func(args)
    except Exception as exc:  # noqa: BLE001
        code = _classify(exc)
        print(f"qcap: error: {exc}", file=sys.stderr)
        return code
    from qcap.io import dumps

    report = {"command": echo, "config_hash": _config_hash(args, echo), "seed": echo.get("seed"),
              "version": __version__, "results": results}
    sys.stdout.write(dumps(report))
    print(f"wall time: {time.perf_counter() - start:.3f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
