"""Binary multi-subject recording container.

Layout (all integers little-endian)::

    header   b"SKNA" | u16 version | u16 endian tag 0xFEFF | f64 fs
             | u32 n_records | u32 flags | u32 len | manifest JSON (utf-8)
    record   b"REC\\0" | u16 len | subject id | u8 role | f64 fs
             | u32 n_periods | n * (u64 start, u64 end, u8 condition)
             | u64 n_samples | n_samples * f32
    model    b"MODL" | u32 len | model manifest JSON | u64 n | n * f32
             (present only when flags bit 0 is set)
    trailer  b"END\\0"
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import CONDITIONS, SampledSignal
from .errors import FormatError

MAGIC = b"SKNA"
VERSION = 1
ENDIAN_TAG = 0xFEFF
ROLES = ("skna", "emg")
FLAG_MODEL = 1


@dataclass
class Record:
    subject_id: str
    role: str
    signal: SampledSignal

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")


@dataclass
class ModelSection:
    manifest: dict
    values: np.ndarray


@dataclass
class RecordingContainer:
    records: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    fs: float = 0.0
    model: ModelSection | None = None

    def by_role(self, role: str) -> list:
        return [r for r in self.records if r.role == role]

    def get(self, subject_id: str, role: str = "skna") -> Record:
        for r in self.records:
            if r.subject_id == subject_id and r.role == role:
                return r
        raise KeyError(f"no {role} record for subject {subject_id!r}")

    def subject_ids(self, role: str = "skna") -> list:
        return [r.subject_id for r in self.records if r.role == role]


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def to_bytes(c: RecordingContainer) -> bytes:
    out = bytearray()
    manifest = _json_bytes(c.manifest)
    flags = FLAG_MODEL if c.model is not None else 0
    out += MAGIC + struct.pack("<HHdIII", VERSION, ENDIAN_TAG, float(c.fs), len(c.records), flags, len(manifest))
    out += manifest
    for r in c.records:
        sid = r.subject_id.encode("utf-8")
        sig = r.signal
        out += b"REC\x00" + struct.pack("<H", len(sid)) + sid
        out += struct.pack("<BdI", ROLES.index(r.role), float(sig.fs), len(sig.periods))
        for p in sig.periods:
            out += struct.pack("<QQB", p.start, p.end, CONDITIONS.index(p.condition))
        out += struct.pack("<Q", len(sig.samples))
        out += np.asarray(sig.samples, dtype="<f4").tobytes()
    if c.model is not None:
        mm = _json_bytes(c.model.manifest)
        vals = np.asarray(c.model.values, dtype="<f4")
        out += b"MODL" + struct.pack("<I", len(mm)) + mm + struct.pack("<Q", vals.size) + vals.tobytes()
    out += b"END\x00"
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0
        self.record = None

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated: need {n} bytes, {len(self.buf) - self.pos} left",
                              offset=self.pos, record=self.record)
        b = self.buf[self.pos : self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def tag(self, expected: bytes):
        at = self.pos
        got = self.take(len(expected))
        if got != expected:
            raise FormatError(f"expected block tag {expected!r}, found {got!r}", offset=at, record=self.record)


def from_bytes(buf: bytes) -> RecordingContainer:
    rd = _Reader(buf)
    magic = rd.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    version, tag, fs, n_records, flags, mlen = rd.unpack("<HHdIII")
    if tag != ENDIAN_TAG:
        raise FormatError(f"bad endianness tag 0x{tag:04X}", offset=6)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    try:
        manifest = json.loads(rd.take(mlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}", offset=rd.pos) from None
    records = []
    for i in range(n_records):
        rd.record = f"#{i}"
        rd.tag(b"REC\x00")
        (idlen,) = rd.unpack("<H")
        sid = rd.take(idlen).decode("utf-8")
        rd.record = f"#{i} ({sid})"
        role_code, rfs, n_periods = rd.unpack("<BdI")
        if role_code >= len(ROLES):
            raise FormatError(f"unknown role code {role_code}", offset=rd.pos, record=rd.record)
        periods = []
        for _ in range(n_periods):
            s, e, cond = rd.unpack("<QQB")
            if cond >= len(CONDITIONS):
                raise FormatError(f"unknown condition code {cond}", offset=rd.pos, record=rd.record)
            periods.append((s, e, CONDITIONS[cond]))
        (n,) = rd.unpack("<Q")
        at = rd.pos
        payload = np.frombuffer(rd.take(4 * n), dtype="<f4").astype(np.float64)
        try:
            sig = SampledSignal(payload, rfs, periods)
        except ValueError as exc:
            raise FormatError(f"invalid signal: {exc}", offset=at, record=rd.record) from None
        records.append(Record(sid, ROLES[role_code], sig))
    rd.record = None
    model = None
    if flags & FLAG_MODEL:
        rd.record = "model"
        rd.tag(b"MODL")
        (mlen,) = rd.unpack("<I")
        mm = json.loads(rd.take(mlen).decode("utf-8"))
        (n,) = rd.unpack("<Q")
        vals = np.frombuffer(rd.take(4 * n), dtype="<f4").astype(np.float32)
        model = ModelSection(mm, vals)
        rd.record = None
    rd.tag(b"END\x00")
    if rd.pos != len(buf):
        raise FormatError(f"{len(buf) - rd.pos} trailing bytes after end marker", offset=rd.pos)
    return RecordingContainer(records, manifest, fs, model)


def write_container(c: RecordingContainer, path) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(c))
    return path


def read_container(path) -> RecordingContainer:
    return from_bytes(Path(path).read_bytes())


def container_io(path, mode: str, container: RecordingContainer | None = None):
    """Read or write a container depending on ``mode``."""
    if mode == "read":
        return read_container(path)
    if mode == "write":
        if container is None:
            raise ValueError("write mode needs a container")
        write_container(container, path)
        return container
    raise ValueError(f"mode must be 'read' or 'write', got {mode!r}")
