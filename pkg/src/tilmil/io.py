"""On-disk formats: bag files, label manifests, checkpoints, prediction CSVs.

Bag file (little-endian)::

    "WKSB" | u32 version=1 | u32 h_dim | u32 n_tiles
    n_tiles x ( u32 col | u32 row | h_dim x f32 )

Checkpoint (little-endian)::

    "WKSM" | u32 version=1 | u8 kind | u32 H | u32 hidden
    f64 parameters: (w, b) or (W1 row-major, b1, w2, b2)
"""
from __future__ import annotations

import csv
import io as _io
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import BagValidationError, EvalReport, FeatureBag, check_bag
from .model import HeadKind, ModelHead

BAG_MAGIC = b"WKSB"
CKPT_MAGIC = b"WKSM"
VERSION = 1
BAG_SUFFIX = ".wksb"
_BAG_HEADER = struct.Struct("<4sIII")
_CKPT_HEADER = struct.Struct("<4sIBII")
MANIFEST_FIELDS = ("patient_id", "slide_id", "stil_fraction", "stratum")


class FormatError(ValueError):
    """Malformed file; the message carries the byte offset when known."""


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- bags ---------------------------------------------------------------------

def encode_bag(bag: FeatureBag) -> bytes:
    check_bag(bag)
    with np.errstate(over="ignore"):
        f32 = bag.features.astype("<f4")
    if not np.isfinite(f32).all():
        raise FormatError(f"{bag.slide_id}: feature not representable as finite f32")
    if (bag.coords > 0xFFFFFFFF).any():
        raise FormatError(f"{bag.slide_id}: coordinate exceeds u32")
    n, h = f32.shape
    record = np.dtype([("col", "<u4"), ("row", "<u4"), ("feat", "<f4", (h,))])
    body = np.empty(n, dtype=record)
    body["col"] = bag.coords[:, 0]
    body["row"] = bag.coords[:, 1]
    body["feat"] = f32
    return _BAG_HEADER.pack(BAG_MAGIC, VERSION, h, n) + body.tobytes()


def decode_bag(data: bytes, *, patient_id: str = "", slide_id: str = "", label: float = 0.0,
               stratum: str = "") -> FeatureBag:
    """Parse bag bytes. Slide metadata is not stored in the file and comes
    from the caller (normally the label manifest)."""
    if len(data) < 4 or data[:4] != BAG_MAGIC:
        raise FormatError("bad magic at offset 0")
    if len(data) < _BAG_HEADER.size:
        raise FormatError(f"truncated header at offset {len(data)}")
    _, version, h, n = _BAG_HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if h == 0:
        raise FormatError("h_dim must be positive (offset 8)")
    if n == 0:
        raise FormatError("n_tiles must be positive (offset 12)")
    rec_size = 8 + 4 * h
    expected = _BAG_HEADER.size + n * rec_size
    if len(data) < expected:
        complete = (len(data) - _BAG_HEADER.size) // rec_size
        raise FormatError(f"truncated at record {complete} (offset {_BAG_HEADER.size + complete * rec_size})")
    if len(data) > expected:
        raise FormatError(f"trailing bytes at offset {expected}")
    record = np.dtype([("col", "<u4"), ("row", "<u4"), ("feat", "<f4", (h,))])
    body = np.frombuffer(data, dtype=record, count=n, offset=_BAG_HEADER.size)
    coords = np.stack([body["col"].astype(np.int64), body["row"].astype(np.int64)], axis=1)
    feats = body["feat"].astype(np.float64).reshape(n, h)
    bag = FeatureBag(patient_id, slide_id, coords, feats, label, stratum, h)
    return check_bag(bag)


def write_bag(bag: FeatureBag, path) -> None:
    atomic_write(path, encode_bag(bag))


def read_bag(path, **meta) -> FeatureBag:
    path = Path(path)
    meta.setdefault("slide_id", path.stem)
    meta.setdefault("patient_id", meta["slide_id"])
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return decode_bag(data, **meta)
    except (FormatError, BagValidationError) as exc:
        raise type(exc)(f"{path.name}: {exc}") from None


def bag_path(bag_dir, slide_id: str) -> Path:
    return Path(bag_dir) / f"{slide_id}{BAG_SUFFIX}"


# -- manifest -----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRow:
    patient_id: str
    slide_id: str
    label: float
    stratum: str


class DatasetError(ValueError):
    pass


def read_csv_records(path, fields: Sequence[str], error=None) -> list[tuple[int, dict[str, str]]]:
    """Rows of a headed CSV as (line number, record) pairs. Undecodable
    text, malformed quoting, a wrong header, and rows with missing or extra
    cells all raise ``error`` (FormatError by default) naming the file."""
    error = error or FormatError
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except OSError as exc:
        raise error(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError as exc:
        raise error(f"{path.name}: not UTF-8 text (byte offset {exc.start})") from None
    try:
        rows = list(csv.reader(_io.StringIO(text, newline="")))
    except csv.Error as exc:
        raise error(f"{path.name}: malformed CSV: {exc}") from None
    if not rows or tuple(rows[0]) != tuple(fields):
        raise error(f"{path.name}: header must be {','.join(fields)}")
    out = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(fields):
            raise error(f"{path.name}: line {line_no}: expected {len(fields)} fields, got {len(row)}")
        out.append((line_no, dict(zip(fields, row))))
    return out


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    records = read_csv_records(path, MANIFEST_FIELDS, DatasetError)
    rows, problems, seen = [], [], set()
    for line_no, rec in records:
        sid = rec["slide_id"]
        try:
            label = float(rec["stil_fraction"])
        except (TypeError, ValueError):
            problems.append(f"line {line_no}: stil_fraction {rec['stil_fraction']!r} is not a number")
            continue
        if not (math.isfinite(label) and 0.0 <= label <= 1.0):
            problems.append(f"line {line_no}: label out of range (expected fraction, got {rec['stil_fraction']})")
        if sid in seen:
            problems.append(f"line {line_no}: duplicate slide_id {sid}")
        seen.add(sid)
        if not sid or not rec["patient_id"]:
            problems.append(f"line {line_no}: empty patient_id or slide_id")
        rows.append(ManifestRow(rec["patient_id"], sid, label, rec["stratum"] or ""))
    if problems:
        raise DatasetError(f"{path.name}: " + "; ".join(problems))
    if not rows:
        raise DatasetError(f"{path.name}: no samples")
    return rows


def write_manifest(bags: Sequence[FeatureBag], path) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_FIELDS)
    for bag in bags:
        w.writerow([bag.patient_id, bag.slide_id, repr(float(bag.label)), bag.stratum])
    atomic_write(path, buf.getvalue())


def load_dataset(manifest_path, bag_dir) -> list[FeatureBag]:
    """Load every bag named in the manifest; any failure rejects the whole
    load and all failures are listed."""
    rows = read_manifest(manifest_path)
    bags, problems = [], []
    for row in rows:
        p = bag_path(bag_dir, row.slide_id)
        if not p.exists():
            problems.append(f"missing bag file {p}")
            continue
        try:
            bags.append(read_bag(p, patient_id=row.patient_id, slide_id=row.slide_id,
                                 label=row.label, stratum=row.stratum))
        except (FormatError, BagValidationError) as exc:
            problems.append(str(exc))
    if not problems:
        dims = sorted({b.h_dim for b in bags})
        if len(dims) > 1:
            problems.append(f"bags disagree on feature dimension: {dims}")
    if problems:
        raise DatasetError("; ".join(problems))
    return bags


def save_dataset(bags: Sequence[FeatureBag], manifest_path, bag_dir) -> None:
    for bag in bags:
        write_bag(bag, bag_path(bag_dir, bag.slide_id))
    write_manifest(bags, manifest_path)


# -- checkpoints --------------------------------------------------------------

def encode_checkpoint(head: ModelHead) -> bytes:
    if not head.is_finite():
        raise FormatError("refusing to write a checkpoint with non-finite parameters")
    header = _CKPT_HEADER.pack(CKPT_MAGIC, VERSION, head.kind.code, head.h_dim, head.hidden)
    flat = np.concatenate([np.ravel(v) for v in head.params.values()]).astype("<f8")
    return header + flat.tobytes()


def decode_checkpoint(data: bytes) -> ModelHead:
    if len(data) < 4 or data[:4] != CKPT_MAGIC:
        raise FormatError("bad magic at offset 0")
    if len(data) < _CKPT_HEADER.size:
        raise FormatError(f"truncated header at offset {len(data)}")
    _, version, code, h, hidden = _CKPT_HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    try:
        kind = HeadKind.from_code(code)
    except ValueError:
        raise FormatError(f"unknown head kind {code} at offset 8") from None
    if h == 0:
        raise FormatError("H must be positive (offset 9)")
    if kind is HeadKind.LINEAR:
        if hidden != 0:
            raise FormatError("linear checkpoint must have hidden=0 (offset 13)")
        shapes = {"w": (h,), "b": ()}
    else:
        if hidden == 0:
            raise FormatError("MLP checkpoint needs hidden > 0 (offset 13)")
        shapes = {"W1": (h, hidden), "b1": (hidden,), "w2": (hidden,), "b2": ()}
    count = sum(int(np.prod(s)) for s in shapes.values())
    expected = _CKPT_HEADER.size + 8 * count
    if len(data) != expected:
        raise FormatError(f"checkpoint length {len(data)} != expected {expected}"
                          + (f"; truncated at offset {len(data)}" if len(data) < expected else ""))
    flat = np.frombuffer(data, dtype="<f8", count=count, offset=_CKPT_HEADER.size).astype(np.float64)
    if not np.isfinite(flat).all():
        bad = int(np.flatnonzero(~np.isfinite(flat))[0])
        raise FormatError(f"non-finite parameter at offset {_CKPT_HEADER.size + 8 * bad}")
    params, pos = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        params[name] = flat[pos : pos + size].reshape(shape)
        pos += size
    return ModelHead(kind, params)


def write_checkpoint(head: ModelHead, path) -> None:
    atomic_write(path, encode_checkpoint(head))


def read_checkpoint(path) -> ModelHead:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    return decode_checkpoint(data)


# -- predictions --------------------------------------------------------------

def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def predictions_csv(report: EvalReport) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slide_id", "true_stil", "pred_stil"])
    for rec in report.records:
        w.writerow([rec.slide_id, f"{rec.true_label:.6f}", f"{rec.predicted:.6f}"])
    return buf.getvalue()


def summary_csv(report: EvalReport) -> str:
    """``metric,value`` rows; undefined metrics are left with an empty value."""
    lines = ["metric,value", f"n,{len(report.records)}", f"threshold,{report.threshold!r}"]
    lines += [f"{k},{_fmt(v)}" for k, v in report.metrics().items()]
    return "\n".join(lines) + "\n"


def read_predictions(path) -> list[tuple[str, float, float]]:
    out = []
    for line_no, r in read_csv_records(path, ("slide_id", "true_stil", "pred_stil")):
        try:
            out.append((r["slide_id"], float(r["true_stil"]), float(r["pred_stil"])))
        except ValueError:
            raise FormatError(f"{Path(path).name}: line {line_no}: score is not a number") from None
    return out
