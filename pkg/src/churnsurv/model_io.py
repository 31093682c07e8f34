"""Versioned, checksummed model files.

One envelope serves every model kind so tooling can sniff a single format:

    magic   b"SRVM"
    version u16 little-endian (currently 1)
    kind    u8: 1 full forest, 2 partial forest, 3 cox, 4 km baseline
    header  u32 length + canonical JSON (sorted keys, no whitespace)
    payload kind-specific blocks, little-endian raw arrays
    sha256  32-byte digest of everything before it

Serialization is byte-deterministic: identical models produce identical
files, which is how the trainer's worker-count invariance is checked. A
partial forest uses the same layout as a full one plus an index range in
the header; partials written by different machines against the same
dataset and parameters merge losslessly.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np

from .survival import CumulativeHazard, SurvivalCurve

MAGIC = b"SRVM"
VERSION = 1
KIND_FOREST = 1
KIND_PARTIAL = 2
KIND_COX = 3
KIND_KM = 4

__all__ = [
    "ModelFormatError",
    "save_model",
    "load_model",
    "model_to_bytes",
    "model_from_bytes",
    "tree_to_bytes",
    "tree_from_bytes",
]


class ModelFormatError(Exception):
    """Unreadable model file: bad magic, version, checksum or layout."""


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_block(buf: io.BytesIO, data: bytes) -> None:
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def _read_block(buf: io.BytesIO) -> bytes:
    raw = buf.read(4)
    if len(raw) != 4:
        raise ModelFormatError("truncated model payload")
    (nbytes,) = struct.unpack("<I", raw)
    data = buf.read(nbytes)
    if len(data) != nbytes:
        raise ModelFormatError("truncated model payload")
    return data


def _write_array(buf, arr, dtype) -> None:
    _write_block(buf, np.ascontiguousarray(arr).astype(dtype).tobytes())


def _read_array(buf, dtype, out_dtype=None):
    arr = np.frombuffer(_read_block(buf), dtype=dtype)
    return arr.astype(out_dtype or arr.dtype)


# -- tree node streams -------------------------------------------------------

def tree_to_bytes(root) -> bytes:
    """Preorder node stream for one tree; round-trips bit-identically."""
    from .tree import InternalNode

    body = io.BytesIO()
    stack = [root]
    count = 0
    while stack:
        node = stack.pop()
        count += 1
        if isinstance(node, InternalNode):
            body.write(struct.pack("<BId", 1, node.covariate_index, node.threshold))
            stack.append(node.right)
            stack.append(node.left)
        else:
            body.write(struct.pack("<BI", 0, len(node.sample_indices)))
            body.write(node.sample_indices.astype("<i4").tobytes())
            body.write(node.sample_weights.astype("<f8").tobytes())
    return struct.pack("<I", count) + body.getvalue()


def tree_from_bytes(data: bytes):
    from .tree import InternalNode, LeafNode

    buf = io.BytesIO(data)
    buf.read(4)  # node count, redundant with the stream itself

    def read_node():
        (tag,) = struct.unpack("<B", buf.read(1))
        if tag == 1:
            cov, thr = struct.unpack("<Id", buf.read(12))
            left = read_node()
            right = read_node()
            return InternalNode(covariate_index=cov, threshold=thr, left=left, right=right)
        (nnz,) = struct.unpack("<I", buf.read(4))
        idx = np.frombuffer(buf.read(4 * nnz), dtype="<i4").astype(np.int32)
        w = np.frombuffer(buf.read(8 * nnz), dtype="<f8").astype(np.float64)
        return LeafNode(sample_indices=idx, sample_weights=w)

    return read_node()


# -- per-kind encoders --------------------------------------------------------

def _tree_params_dict(tp) -> dict:
    return {
        "alpha": tp.alpha,
        "min_node_weight": tp.min_node_weight,
        "min_child_weight": tp.min_child_weight,
        "mtry": tp.mtry,
        "bonferroni": tp.bonferroni,
        "selection_influence": tp.selection_influence,
    }


def _forest_params_dict(fp) -> dict:
    return {
        "n_trees": fp.n_trees,
        "subsample_fraction": fp.subsample_fraction,
        "master_seed": fp.master_seed,
        "tree_params": _tree_params_dict(fp.tree_params),
    }


def _tree_params_from(d):
    from .tree import TreeParams

    return TreeParams(
        alpha=d["alpha"],
        min_node_weight=d["min_node_weight"],
        min_child_weight=d["min_child_weight"],
        mtry=d["mtry"],
        bonferroni=d["bonferroni"],
        selection_influence=d["selection_influence"],
    )


def _forest_params_from(d):
    from .ensemble import ForestParams

    return ForestParams(
        n_trees=d["n_trees"],
        subsample_fraction=d["subsample_fraction"],
        master_seed=d["master_seed"],
        tree_params=_tree_params_from(d["tree_params"]),
    )


def _encode_forest_like(obj, kind: int, header_extra: dict):
    header = {
        "params": _forest_params_dict(obj.params),
        "schema": list(obj.schema),
        "model_kind": obj.model_kind,
        "n_samples": int(len(obj.times)),
    }
    header.update(header_extra)
    payload = io.BytesIO()
    _write_array(payload, obj.times, "<f8")
    _write_array(payload, obj.events, "<u1")
    payload.write(struct.pack("<I", len(obj.trees)))
    for tree_index, tree in zip(obj.tree_indices, obj.trees):
        payload.write(struct.pack("<I", tree_index))
        _write_block(payload, tree_to_bytes(tree.root))
    return kind, header, payload.getvalue()


def _decode_forest_like(kind, header, payload):
    from .ensemble import PartialModel, SurvivalForest
    from .tree import SurvivalTree

    buf = io.BytesIO(payload)
    times = _read_array(buf, "<f8", np.float64)
    events = _read_array(buf, "<u1").astype(bool)
    params = _forest_params_from(header["params"])
    (n_trees,) = struct.unpack("<I", buf.read(4))
    indices = []
    trees = []
    n_features = len(header["schema"])
    for _ in range(n_trees):
        (k,) = struct.unpack("<I", buf.read(4))
        root = tree_from_bytes(_read_block(buf))
        indices.append(k)
        trees.append(
            SurvivalTree(
                params=params.tree_params,
                n_samples=len(times),
                n_features=n_features,
                root=root,
                times=times,
                events=events,
            )
        )
    common = dict(
        params=params,
        schema=list(header["schema"]),
        times=times,
        events=events,
        tree_indices=indices,
        trees=trees,
        model_kind=header["model_kind"],
    )
    if kind == KIND_PARTIAL:
        return PartialModel(
            index_start=header["index_start"], index_stop=header["index_stop"], **common
        )
    return SurvivalForest(**common)


def _encode_cox(model):
    header = {
        "schema": list(model.schema),
        "beta": [float(b) for b in model.beta],
        "covariate_means": [float(m) for m in model.covariate_means],
    }
    payload = io.BytesIO()
    _write_array(payload, model.baseline_cumhaz.grid, "<f8")
    _write_array(payload, model.baseline_cumhaz.values, "<f8")
    return KIND_COX, header, payload.getvalue()


def _decode_cox(header, payload):
    from .baselines import CoxModel

    buf = io.BytesIO(payload)
    grid = _read_array(buf, "<f8", np.float64)
    values = _read_array(buf, "<f8", np.float64)
    return CoxModel(
        beta=np.array(header["beta"], dtype=np.float64),
        baseline_cumhaz=CumulativeHazard(grid=grid, values=values),
        covariate_means=np.array(header["covariate_means"], dtype=np.float64),
        schema=list(header["schema"]),
    )


def _encode_km(curve):
    payload = io.BytesIO()
    _write_array(payload, curve.grid, "<f8")
    _write_array(payload, curve.probs, "<f8")
    return KIND_KM, {}, payload.getvalue()


def _decode_km(header, payload):
    buf = io.BytesIO(payload)
    grid = _read_array(buf, "<f8", np.float64)
    probs = _read_array(buf, "<f8", np.float64)
    return SurvivalCurve(grid=grid, probs=probs)


# -- envelope ------------------------------------------------------------------

def model_to_bytes(obj) -> bytes:
    from .baselines import CoxModel
    from .ensemble import PartialModel, SurvivalForest

    if isinstance(obj, PartialModel):
        kind, header, payload = _encode_forest_like(
            obj, KIND_PARTIAL,
            {"index_start": int(obj.index_start), "index_stop": int(obj.index_stop)},
        )
    elif isinstance(obj, SurvivalForest):
        kind, header, payload = _encode_forest_like(obj, KIND_FOREST, {})
    elif isinstance(obj, CoxModel):
        kind, header, payload = _encode_cox(obj)
    elif isinstance(obj, SurvivalCurve):
        kind, header, payload = _encode_km(obj)
    else:
        raise TypeError(f"cannot serialize object of type {type(obj).__name__}")

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HB", VERSION, kind))
    _write_block(buf, _canonical_json(header))
    buf.write(payload)
    digest = hashlib.sha256(buf.getvalue()).digest()
    buf.write(digest)
    return buf.getvalue()


def model_from_bytes(data: bytes):
    if len(data) < len(MAGIC) + 3 + 32:
        raise ModelFormatError("file too short to be a model")
    if data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("bad magic: not a model file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError("checksum mismatch: file is corrupt or truncated")
    buf = io.BytesIO(body)
    buf.read(len(MAGIC))
    version, kind = struct.unpack("<HB", buf.read(3))
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    header = json.loads(_read_block(buf).decode("utf-8"))
    payload = buf.read()
    if kind in (KIND_FOREST, KIND_PARTIAL):
        return _decode_forest_like(kind, header, payload)
    if kind == KIND_COX:
        return _decode_cox(header, payload)
    if kind == KIND_KM:
        return _decode_km(header, payload)
    raise ModelFormatError(f"unknown model kind {kind}")


def save_model(obj, path) -> None:
    data = model_to_bytes(obj)
    with open(path, "wb") as fh:
        fh.write(data)


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return model_from_bytes(data)
