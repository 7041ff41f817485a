"""JSON formats for channels, states and decoupling instances.

Complex entries are two-element ``[re, im]`` arrays and matrices are
row-major nested lists.  Every file carries ``"version": 1``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from qcap.channels import ChannelError, ChannelRep, identity_channel, standard_channel
from qcap.linalg import DensityOperator, LayoutError, PureState, StateError, SystemLayout

FORMAT_VERSION = 1
CHANNEL_KINDS = ("kraus", "choi", "stinespring", "standard")


class SpecError(ValueError):
    """Malformed input file; the message names the file and the offending field."""


def _fail(src: str, where: str, msg: str):
    raise SpecError(f"{src}: field {where!r}: {msg}")


def read_json(path: str | Path) -> dict:
    src = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"{src}: cannot read file ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{src}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SpecError(f"{src}: top level must be a JSON object")
    return doc


def _check_version(doc: dict, src: str) -> None:
    if doc.get("version") != FORMAT_VERSION:
        _fail(src, "version", f"expected {FORMAT_VERSION}, got {doc.get('version')!r}")


def complex_array(data: Any, src: str = "<input>", where: str = "data") -> np.ndarray:
    """Nested lists ending in ``[re, im]`` pairs to a complex array."""
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError):
        _fail(src, where, "entries must be numbers arranged as [re, im] pairs")
    if arr.ndim < 1 or arr.shape[-1] != 2:
        _fail(src, where, f"innermost arrays must be [re, im] pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        _fail(src, where, "non-finite entry")
    return arr[..., 0] + 1j * arr[..., 1]


def encode_complex(a: np.ndarray) -> list:
    a = np.asarray(a, dtype=np.complex128)
    return np.stack([a.real, a.imag], axis=-1).tolist()


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------


def parse_channel(doc: dict, src: str = "<input>") -> ChannelRep:
    _check_version(doc, src)
    kind = doc.get("kind")
    if kind not in CHANNEL_KINDS:
        _fail(src, "kind", f"must be one of {CHANNEL_KINDS}, got {kind!r}")
    dims = doc.get("dims")
    if not (isinstance(dims, list) and len(dims) == 2 and all(isinstance(d, int) and d >= 1 for d in dims)):
        _fail(src, "dims", "must be [d_in, d_out] with positive integers")
    din, dout = dims
    try:
        if kind == "standard":
            data = doc.get("data")
            if not isinstance(data, dict) or "name" not in data:
                _fail(src, "data", "standard channels need {\"name\": ..., \"param\": ...}")
            name = str(data["name"])
            ch = identity_channel(din) if name == "identity" else standard_channel(name, float(data.get("param", 0.0)), din)
            if ch.d_out != dout:
                _fail(src, "dims", f"{name} on dimension {din} has output dimension {ch.d_out}, not {dout}")
            return ch
        arr = complex_array(doc.get("data"), src)
        lin = SystemLayout.of(("A", din))
        lout = SystemLayout.of(("B", dout))
        return ChannelRep(kind, arr, lin, lout)
    except (ChannelError, LayoutError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"{src}: field 'data': {exc}") from None


def load_channel(path: str | Path) -> ChannelRep:
    return parse_channel(read_json(path), str(path))


def channel_to_doc(ch: ChannelRep) -> dict:
    return {"version": FORMAT_VERSION, "kind": "kraus", "dims": [ch.d_in, ch.d_out], "data": encode_complex(ch.kraus)}


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


def parse_layout(raw: Any, src: str, split: Any = None) -> SystemLayout:
    if not isinstance(raw, list) or not raw:
        _fail(src, "layout", "must be a non-empty list of [label, dim] pairs")
    try:
        factors = tuple((str(lab), int(d)) for lab, d in raw)
        return SystemLayout(factors, tuple(split) if split else None)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{src}: field 'layout': {exc}") from None


def parse_state(doc: dict, src: str = "<input>") -> DensityOperator:
    _check_version(doc, src)
    layout = parse_layout(doc.get("layout"), src, doc.get("classical_split"))
    try:
        if "vector" in doc:
            vec = complex_array(doc["vector"], src, "vector")
            return PureState(vec, layout).density()
        if "matrix" in doc:
            m = complex_array(doc["matrix"], src, "matrix")
            return DensityOperator.from_matrix(m, layout, doc.get("normalization"))
    except (StateError, LayoutError) as exc:
        raise SpecError(f"{src}: {exc}") from None
    _fail(src, "matrix", "state files need either 'matrix' or 'vector'")


def load_state(path: str | Path) -> DensityOperator:
    return parse_state(read_json(path), str(path))


def state_to_doc(rho: DensityOperator) -> dict:
    doc = {"version": FORMAT_VERSION, "layout": [list(f) for f in rho.layout.factors],
           "matrix": encode_complex(rho.matrix)}
    if rho.layout.classical_split:
        doc["classical_split"] = list(rho.layout.classical_split)
    return doc


# ---------------------------------------------------------------------------
# decoupling instances
# ---------------------------------------------------------------------------


def parse_instance(doc: dict, src: str = "<input>"):
    """Decoupling instance: block structure, state recipe, map ``T`` and smoothing parameters."""
    from qcap.decoupling import cc_layout, cc_max_entangled, make_instance, random_cc_state

    _check_version(doc, src)
    for key in ("J", "r"):
        if not isinstance(doc.get(key), int) or doc[key] < 1:
            _fail(src, key, "must be a positive integer")
    nblk, r = doc["J"], doc["r"]
    d_rr = doc.get("d_rr", r)
    if not isinstance(d_rr, int) or d_rr < 1:
        _fail(src, "d_rr", "must be a positive integer")
    st = doc.get("state", {"kind": "random"})
    kind = st.get("kind") if isinstance(st, dict) else None
    if kind == "random":
        rank = st.get("rank")
        psi = random_cc_state(nblk, r, d_rr, rank, np.random.default_rng(int(st.get("seed", 0))))
    elif kind == "max_entangled":
        if d_rr != r:
            _fail(src, "d_rr", "max_entangled needs d_rr == r")
        psi = cc_max_entangled(nblk, r)
    elif kind == "matrix":
        m = complex_array(st.get("matrix"), src, "state.matrix")
        try:
            psi = DensityOperator.from_matrix(m, cc_layout(nblk, r, d_rr))
        except (StateError, LayoutError) as exc:
            raise SpecError(f"{src}: field 'state': {exc}") from None
    else:
        _fail(src, "state.kind", "must be 'random', 'max_entangled' or 'matrix'")
    if "map" not in doc:
        _fail(src, "map", "missing channel spec for T")
    t = parse_channel(doc["map"], src + ":map")
    eps, mu = float(doc.get("epsilon", 0.0)), float(doc.get("mu", 0.0))
    try:
        return make_instance(psi, t, eps, mu)
    except (StateError, ValueError) as exc:
        raise SpecError(f"{src}: {exc}") from None


def load_instance(path: str | Path):
    return parse_instance(read_json(path), str(path))


# ---------------------------------------------------------------------------
# deterministic output
# ---------------------------------------------------------------------------


def canonical(obj: Any) -> Any:
    """Round floats to 9 significant digits and make the structure JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        x = float(f"{x:.9g}")
        return 0.0 if x == 0 else x
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2) + "\n"
