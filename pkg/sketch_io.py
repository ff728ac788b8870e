# sketch_io.py

"""
Files the CLI reads and writes.

Row streams come either as LPSS1 binary files (little-endian header, then float64 rows
with an optional weight and label byte) or as plain CSV; the two are told apart by the
magic bytes. Sketches are saved as versioned JSON documents whose arrays are base64
encoded float64 buffers, so a load/save round trip reproduces estimates bit for bit.
"""

import base64
import json
import logging
import struct
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterator, NamedTuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from coreset_engine import CoresetSketch, EquatorBands
from core_model import InputError, UnsupportedError, WeightedPointSet, _validated
from linear_rounding import RoundingTransform
from streaming import FourierSketch, RegionEnsemble, RegionRecord, RegionSketch
from svm_pointquery import SvmSketch

logger = logging.getLogger(__name__)

MAGIC = b"LPSS1"
HEADER = struct.Struct("<5sIIIQB")
HAS_WEIGHTS = 1
HAS_LABELS = 2
CHUNK_ROWS = 65536
P_DENOMINATOR_LIMIT = 1 << 16

SKETCH_FORMAT = "subspace-sketch"
SKETCH_VERSION = 1
SKETCH_KINDS = ("coreset", "region", "fourier", "svm")


class StreamHeader(BaseModel):
    d: int = Field(ge=1)
    p_num: int = Field(ge=1)
    p_den: int = Field(ge=1)
    count: int = Field(default=0, ge=0)
    has_weights: bool = False
    has_labels: bool = False

    @property
    def p(self) -> float:
        return self.p_num / self.p_den

    @classmethod
    def for_p(cls, d: int, p: float, count: int = 0, has_weights: bool = False, has_labels: bool = False) -> "StreamHeader":
        ratio = Fraction(p).limit_denominator(P_DENOMINATOR_LIMIT)
        return _validated(
            cls, d=d, p_num=ratio.numerator, p_den=ratio.denominator, count=count,
            has_weights=has_weights, has_labels=has_labels,
        )

    def record_dtype(self) -> np.dtype:
        fields = [("x", "<f8", (self.d,))]
        if self.has_weights:
            fields.append(("w", "<f8"))
        if self.has_labels:
            fields.append(("y", "i1"))
        return np.dtype(fields)


class StreamChunk(NamedTuple):
    points: np.ndarray
    weights: np.ndarray
    labels: np.ndarray | None


def write_stream(path, points, p: float, weights=None, labels=None) -> StreamHeader:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    header = StreamHeader.for_p(
        points.shape[1], p, count=len(points), has_weights=weights is not None, has_labels=labels is not None
    )
    records = np.zeros(len(points), dtype=header.record_dtype())
    records["x"] = points
    if weights is not None:
        records["w"] = weights
    if labels is not None:
        records["y"] = labels
    flags = HAS_WEIGHTS * header.has_weights | HAS_LABELS * header.has_labels
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, header.d, header.p_num, header.p_den, header.count, flags))
        f.write(records.tobytes())
    return header


def write_csv_stream(path, points, weights=None, labels=None) -> None:
    frame = pd.DataFrame(np.atleast_2d(np.asarray(points, dtype=np.float64)))
    if weights is not None:
        frame["w"] = np.asarray(weights, dtype=np.float64)
    if labels is not None:
        frame["y"] = np.asarray(labels, dtype=np.int64)
    frame.to_csv(path, header=False, index=False, float_format="%.17g")


def is_binary_stream(path) -> bool:
    with open(path, "rb") as f:
        return f.read(len(MAGIC)) == MAGIC


def _read_header(f) -> StreamHeader:
    raw = f.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise InputError("stream file is shorter than its header")
    magic, d, p_num, p_den, count, flags = HEADER.unpack(raw)
    if magic != MAGIC:
        raise InputError(f"bad magic {magic!r}, expected {MAGIC!r}")
    return _validated(
        StreamHeader, d=d, p_num=p_num, p_den=p_den, count=count,
        has_weights=bool(flags & HAS_WEIGHTS), has_labels=bool(flags & HAS_LABELS),
    )


def _binary_chunks(path) -> Iterator[StreamChunk]:
    with open(path, "rb") as f:
        header = _read_header(f)
        dtype = header.record_dtype()
        seen = 0
        while chunk := f.read(CHUNK_ROWS * dtype.itemsize):
            if len(chunk) % dtype.itemsize:
                raise InputError(f"payload ends inside a record after {seen} rows")
            records = np.frombuffer(chunk, dtype=dtype)
            seen += len(records)
            yield StreamChunk(
                points=np.array(records["x"]),
                weights=np.array(records["w"]) if header.has_weights else np.ones(len(records)),
                labels=np.array(records["y"], dtype=np.int64) if header.has_labels else None,
            )
        if header.count and seen != header.count:
            raise InputError(f"header announces {header.count} rows, payload has {seen}")


def _csv_chunks(path, has_weights: bool, has_labels: bool) -> Iterator[StreamChunk]:
    extra = int(has_weights) + int(has_labels)
    try:
        reader = pd.read_csv(path, header=None, chunksize=CHUNK_ROWS, dtype=np.float64)
        for frame in reader:
            values = frame.to_numpy()
            if values.shape[1] <= extra or np.isnan(values).any():
                raise InputError("CSV rows must hold d >= 1 numbers plus the announced weight and label columns")
            d = values.shape[1] - extra
            yield StreamChunk(
                points=values[:, :d],
                weights=values[:, d] if has_weights else np.ones(len(values)),
                labels=values[:, -1].astype(np.int64) if has_labels else None,
            )
    except pd.errors.EmptyDataError:
        return
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed CSV stream: {exc}") from exc


class StreamFile:
    """
    One pass over a row stream on disk.

    For CSV input p and the presence of weight and label columns come from the caller;
    a binary header overrides has_weights and has_labels and supplies p unless one is given.
    """

    def __init__(self, path, p: float | None = None, has_weights: bool = False, has_labels: bool = False):
        self.path = Path(path)
        if not self.path.exists():
            raise InputError(f"no such stream file: {self.path}")
        self.binary = is_binary_stream(self.path)
        self._p, self._has_weights, self._has_labels = p, has_weights, has_labels
        self.header: StreamHeader | None = None
        if self.binary:
            with open(self.path, "rb") as f:
                self.header = _read_header(f)

    @property
    def p(self) -> float:
        if self._p is not None:
            return float(self._p)
        if self.header is None:
            raise InputError("CSV streams need p from the caller")
        return self.header.p

    def chunks(self) -> Iterator[StreamChunk]:
        if self.binary:
            return _binary_chunks(self.path)
        return _csv_chunks(self.path, self._has_weights, self._has_labels)

    def rows(self) -> Iterator[tuple[np.ndarray, float, int | None]]:
        for chunk in self.chunks():
            for i in range(len(chunk.points)):
                yield chunk.points[i], float(chunk.weights[i]), None if chunk.labels is None else int(chunk.labels[i])

    def read_all(self) -> tuple[WeightedPointSet, np.ndarray | None]:
        chunks = list(self.chunks())
        if not chunks:
            if self.header is None:
                raise InputError(f"stream {self.path} holds no rows")
            return WeightedPointSet.empty(self.header.d, self.p), None
        points = np.vstack([c.points for c in chunks])
        weights = np.concatenate([c.weights for c in chunks])
        labels = None if chunks[0].labels is None else np.concatenate([c.labels for c in chunks])
        logger.debug("read %d rows of dimension %d from %s", len(points), points.shape[1], self.path)
        return WeightedPointSet.from_rows(points, weights, p=self.p), labels


def _encode(array) -> dict:
    array = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    return {"shape": list(array.shape), "data": base64.b64encode(array.tobytes()).decode("ascii")}


def _decode(blob: dict) -> np.ndarray:
    raw = base64.b64decode(blob["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(blob["shape"]).copy()


class SketchFile(BaseModel):
    format: str = SKETCH_FORMAT
    version: int = SKETCH_VERSION
    kind: str
    params: dict[str, Any]
    payload: dict[str, Any]


def _points_payload(P: WeightedPointSet) -> dict:
    return {"points": _encode(P.points), "weights": _encode(P.weights), "p": float(P.p)}


def _points_from(payload: dict) -> WeightedPointSet:
    points, weights = _decode(payload["points"]), _decode(payload["weights"])
    return _validated(WeightedPointSet, points=points, weights=weights, p=payload["p"])


def _coreset_payload(S: CoresetSketch) -> dict:
    payload = {
        "base": _points_payload(S.base),
        "error_budget": float(S.error_budget),
        "rounds": int(S.rounds),
        "loss": S.loss,
        "lifted": S.lifted,
        "source_size": int(S.source_size),
        "multiplicative": S.multiplicative,
        "bands": None,
        "transform": None,
    }
    if S.bands is not None:
        payload["bands"] = {
            "centers": _encode(S.bands.centers), "radii": _encode(S.bands.radii),
            "coeffs": _encode(S.bands.coeffs), "p": float(S.bands.p),
        }
    if S.transform is not None:
        t = S.transform
        payload["transform"] = {
            "T": _encode(t.T), "left_inverse": _encode(t.left_inverse), "distortion": float(t.distortion),
            "certified": bool(t.certified), "rank": int(t.rank), "rank_deficient": bool(t.rank_deficient),
            "cuts": int(t.cuts),
        }
    return payload


def _coreset_from(payload: dict) -> CoresetSketch:
    bands = transform = None
    if payload["bands"] is not None:
        b = payload["bands"]
        bands = EquatorBands(
            centers=_decode(b["centers"]), radii=_decode(b["radii"]), coeffs=_decode(b["coeffs"]), p=b["p"]
        )
    if payload["transform"] is not None:
        t = payload["transform"]
        transform = RoundingTransform(
            T=_decode(t["T"]), left_inverse=_decode(t["left_inverse"]), distortion=t["distortion"],
            certified=t["certified"], rank=t["rank"], rank_deficient=t["rank_deficient"], cuts=t["cuts"],
        )
    return CoresetSketch(
        base=_points_from(payload["base"]),
        error_budget=payload["error_budget"],
        bands=bands,
        transform=transform,
        rounds=payload["rounds"],
        loss=payload["loss"],
        lifted=payload["lifted"],
        source_size=payload["source_size"],
        multiplicative=payload["multiplicative"],
    )


def _region_payload(S: RegionSketch) -> dict:
    records = [
        {
            "center": _encode(r.center), "level": int(r.level), "index": int(r.index), "generation": int(r.generation),
            "tensor": _encode(r.tensor), "count": int(r.count), "sample": _encode(r.sample), "radius": float(r.radius),
            "closed": bool(r.closed),
        }
        for r in S.records
    ]
    return {
        "d": S.d, "p": S.p, "eps": S.eps, "seed": S.seed, "n_hint": S.n_hint, "tight": S.tight,
        "n_seen": S.n_seen, "ignored": S.ignored, "slot_updates": S.slot_updates,
        "split": [list(key) for key in S.split_keys],
        "rng": S.rng.bit_generator.state,
        "records": records,
    }


def _region_from(payload: dict) -> RegionSketch:
    S = RegionSketch(
        payload["d"], payload["p"], payload["eps"], seed=payload["seed"], n_hint=payload["n_hint"], tight=payload["tight"]
    )
    records = [
        RegionRecord(
            center=_decode(blob["center"]), level=blob["level"], index=blob["index"], generation=blob["generation"],
            tensor=_decode(blob["tensor"]), count=blob["count"], sample=_decode(blob["sample"]),
            radius=blob["radius"], closed=blob["closed"],
        )
        for blob in payload["records"]
    ]
    return S.restore(
        records, payload["split"], payload["rng"], payload["n_seen"], payload["ignored"], payload["slot_updates"]
    )


def _fourier_payload(F: FourierSketch) -> dict:
    return {"p": float(F.p), "K": int(F.K), "cos": _encode(F.cos_moments), "sin": _encode(F.sin_moments)}


def _fourier_from(payload: dict) -> FourierSketch:
    F = FourierSketch(p=payload["p"], K=payload["K"])
    F.cos_moments, F.sin_moments = _decode(payload["cos"]), _decode(payload["sin"])
    return F


def _svm_payload(S: SvmSketch) -> dict:
    return {
        "d": int(S.d), "lam": float(S.lam), "eps": float(S.eps), "presample": int(S.presample),
        "counts": {str(label): int(count) for label, count in S.counts.items()},
        "sketches": {str(label): _coreset_payload(sketch) for label, sketch in S.sketches.items()},
    }


def _svm_from(payload: dict) -> SvmSketch:
    return SvmSketch(
        d=payload["d"], lam=payload["lam"], eps=payload["eps"], presample=payload["presample"],
        counts={int(label): count for label, count in payload["counts"].items()},
        sketches={int(label): _coreset_from(blob) for label, blob in payload["sketches"].items()},
    )


def sketch_kind(sketch) -> str:
    if isinstance(sketch, CoresetSketch):
        return "coreset"
    if isinstance(sketch, (RegionSketch, RegionEnsemble)):
        return "region"
    if isinstance(sketch, FourierSketch):
        return "fourier"
    if isinstance(sketch, SvmSketch):
        return "svm"
    raise UnsupportedError(f"cannot save objects of type {type(sketch).__name__}")


def dump_sketch(sketch, **params) -> str:
    """JSON text of a sketch; params (d, p, eps, seed, ...) are recorded as given."""
    kind = sketch_kind(sketch)
    if kind == "coreset":
        payload = _coreset_payload(sketch)
    elif kind == "region":
        replicas = sketch.sketches if isinstance(sketch, RegionEnsemble) else [sketch]
        payload = {"replicas": [_region_payload(s) for s in replicas]}
    elif kind == "fourier":
        payload = _fourier_payload(sketch)
    else:
        payload = _svm_payload(sketch)
    document = SketchFile(kind=kind, params=params, payload=payload)
    return json.dumps(document.model_dump(), sort_keys=True, separators=(",", ":"))


def parse_sketch(text: str) -> tuple[SketchFile, Any]:
    try:
        document = SketchFile.model_validate_json(text)
    except ValidationError as exc:
        raise InputError(f"not a sketch file: {exc.errors()[0]['msg']}") from exc
    if document.format != SKETCH_FORMAT:
        raise InputError(f"unknown sketch format {document.format!r}")
    if document.version != SKETCH_VERSION:
        raise UnsupportedError(f"sketch file version {document.version} is not supported")
    if document.kind not in SKETCH_KINDS:
        raise InputError(f"unknown sketch kind {document.kind!r}")
    try:
        if document.kind == "coreset":
            sketch = _coreset_from(document.payload)
        elif document.kind == "region":
            sketch = RegionEnsemble([_region_from(blob) for blob in document.payload["replicas"]])
        elif document.kind == "fourier":
            sketch = _fourier_from(document.payload)
        else:
            sketch = _svm_from(document.payload)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"corrupt {document.kind} payload: {exc!r}") from exc
    return document, sketch


def save_sketch(path, sketch, **params) -> None:
    Path(path).write_text(dump_sketch(sketch, **params), encoding="utf-8")


def load_sketch(path) -> tuple[SketchFile, Any]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such sketch file: {path}")
    return parse_sketch(path.read_text(encoding="utf-8"))
