"""Binary CSI capture file: versioned little-endian record stream."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .phy.grids import ChannelMode

__all__ = ["CaptureRecord", "CaptureError", "write_capture", "read_capture",
           "encode_record", "decode_record", "mode_byte", "mode_from_byte"]

MAGIC = b"CSF1"
VERSION = 1
_HEADER = struct.Struct("<4sHH")  # magic, version, endianness canary (1)

_FIXED_HEAD = struct.Struct("<QQQBBBH")  # timestamp, cf, sf, mode, mcs, seed, n_tones
_FIXED_TAIL = struct.Struct("<qi")  # cfo (uHz), evm (centi-dB)

_MODE_CODE = {
    ChannelMode.NON_HT: 0,
    ChannelMode.HT20: 1,
    ChannelMode.HT40_PLUS: 2,
    ChannelMode.HT40_MINUS: 3,
}
_CODE_MODE = {v: k for k, v in _MODE_CODE.items()}
_SHORT_GI_FLAG = 0x10
_HALF_BAND_FLAG = 0x20


class CaptureError(ValueError):
    pass


def mode_byte(mode: ChannelMode, short_gi: bool = False, half_band: bool = False) -> int:
    b = _MODE_CODE[mode]
    if short_gi:
        b |= _SHORT_GI_FLAG
    if half_band:
        b |= _HALF_BAND_FLAG
    return b


def mode_from_byte(b: int) -> tuple[ChannelMode, bool, bool]:
    mode = _CODE_MODE.get(b & 0x03)
    if mode is None:
        raise CaptureError(f"unknown channel-mode code {b & 0x03}")
    return mode, bool(b & _SHORT_GI_FLAG), bool(b & _HALF_BAND_FLAG)


@dataclass
class CaptureRecord:
    """One per-packet CSI measurement as stored on disk."""

    timestamp_us: int
    cf_hz: int
    sf_hz: int
    channel_mode: ChannelMode
    mcs: int
    seed: int
    tone_indices: np.ndarray
    csi: np.ndarray
    data_csi: np.ndarray  # (n_data_symbols, n_tones) complex, may be empty
    cfo_uhz: int
    evm_cdb: int
    short_gi: bool = False
    half_band: bool = False

    def __post_init__(self):
        self.tone_indices = np.asarray(self.tone_indices, dtype=np.int16)
        self.csi = np.asarray(self.csi, dtype=np.complex128)
        self.data_csi = np.asarray(self.data_csi, dtype=np.complex128).reshape(
            -1, len(self.tone_indices) if len(self.tone_indices) else 0
        )
        if len(self.csi) != len(self.tone_indices):
            raise CaptureError("CSI length does not match tone index list")
        if np.any(np.diff(self.tone_indices.astype(np.int64)) <= 0):
            raise CaptureError("tone index list must be strictly increasing")

    @property
    def n_data_symbols(self) -> int:
        return self.data_csi.shape[0]

    @property
    def cfo_hz(self) -> float:
        return self.cfo_uhz / 1e6

    @property
    def evm_db(self) -> float:
        return self.evm_cdb / 100.0

    @property
    def sym_duration(self) -> float:
        n = self.channel_mode.fft_size
        cp = n // 8 if self.short_gi else n // 4
        return (n + cp) / float(self.sf_hz)


def _pack_complex_f32(values: np.ndarray) -> bytes:
    flat = np.empty(2 * values.size, dtype="<f4")
    flat[0::2] = values.real.reshape(-1)
    flat[1::2] = values.imag.reshape(-1)
    return flat.tobytes()


def _unpack_complex_f32(buf: bytes, count: int) -> np.ndarray:
    flat = np.frombuffer(buf, dtype="<f4", count=2 * count)
    return flat[0::2].astype(np.float64) + 1j * flat[1::2].astype(np.float64)


def encode_record(rec: CaptureRecord) -> bytes:
    n_tones = len(rec.tone_indices)
    body = bytearray()
    body += _FIXED_HEAD.pack(
        rec.timestamp_us,
        rec.cf_hz,
        rec.sf_hz,
        mode_byte(rec.channel_mode, rec.short_gi, rec.half_band),
        rec.mcs,
        rec.seed,
        n_tones,
    )
    body += rec.tone_indices.astype("<i2").tobytes()
    body += _pack_complex_f32(rec.csi)
    body += struct.pack("<H", rec.n_data_symbols)
    body += _pack_complex_f32(rec.data_csi)
    body += _FIXED_TAIL.pack(rec.cfo_uhz, rec.evm_cdb)
    return struct.pack("<I", len(body)) + bytes(body)


def decode_record(buf: bytes, offset: int = 0) -> tuple[CaptureRecord, int]:
    """Decode one record; returns (record, next offset)."""
    if len(buf) - offset < 4:
        raise CaptureError("truncated record length field")
    (rec_len,) = struct.unpack_from("<I", buf, offset)
    start = offset + 4
    end = start + rec_len
    if end > len(buf):
        raise CaptureError("record extends past end of buffer")
    ts, cf, sf, mode_b, mcs, seed, n_tones = _FIXED_HEAD.unpack_from(buf, start)
    pos = start + _FIXED_HEAD.size
    idx = np.frombuffer(buf, dtype="<i2", count=n_tones, offset=pos).copy()
    pos += 2 * n_tones
    csi = _unpack_complex_f32(buf[pos:], n_tones)
    pos += 8 * n_tones
    (n_sym,) = struct.unpack_from("<H", buf, pos)
    pos += 2
    data = _unpack_complex_f32(buf[pos:], n_sym * n_tones).reshape(n_sym, n_tones)
    pos += 8 * n_sym * n_tones
    cfo_uhz, evm_cdb = _FIXED_TAIL.unpack_from(buf, pos)
    pos += _FIXED_TAIL.size
    if pos != end:
        raise CaptureError(
            f"record length {rec_len} inconsistent with contents ({pos - start} used)"
        )
    mode, short_gi, half_band = mode_from_byte(mode_b)
    rec = CaptureRecord(
        timestamp_us=ts,
        cf_hz=cf,
        sf_hz=sf,
        channel_mode=mode,
        mcs=mcs,
        seed=seed,
        tone_indices=idx,
        csi=csi,
        data_csi=data,
        cfo_uhz=cfo_uhz,
        evm_cdb=evm_cdb,
        short_gi=short_gi,
        half_band=half_band,
    )
    return rec, end


def write_capture(records, path: str | Path) -> None:
    out = bytearray(_HEADER.pack(MAGIC, VERSION, 1))
    for rec in records:
        out += encode_record(rec)
    Path(path).write_bytes(bytes(out))


def read_capture(path: str | Path) -> list[CaptureRecord]:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise CaptureError(f"{path}: too short for a capture header")
    magic, version, endian = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CaptureError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CaptureError(f"{path}: unsupported version {version}")
    if endian != 1:
        raise CaptureError(f"{path}: endianness canary mismatch")
    records = []
    offset = _HEADER.size
    while offset < len(buf):
        rec, offset = decode_record(buf, offset)
        records.append(rec)
    return records
