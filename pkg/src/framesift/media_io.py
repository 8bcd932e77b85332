"""Readers and writers for uncompressed video, PNM stills, detection CSV and manifests.

Formats handled here:

* YUV4MPEG2 (``.y4m``), 4:2:0 chroma only. Luma is always decoded; chroma is
  kept on request or converted to RGB with a fixed-point BT.601 full-range
  inverse transform.
* Binary PGM (P5) and PPM (P6) with maxval 255.
* Detection / ground-truth CSV rows
  ``video_id,frame_id,bb_left,bb_top,bb_width,bb_height,class_id[,confidence]``.
* The JSON sample manifest (schema in :data:`MANIFEST_SCHEMA`).
"""

from __future__ import annotations

import io
import json
import math
import mmap
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import jsonschema
import numpy as np

from . import __version__, kernels
from ._util import canonical_json, json_pointer


class MediaError(ValueError):
    """Base class for malformed input files."""


class Y4MError(MediaError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class Y4MBadMagicError(Y4MError):
    pass


class Y4MMissingTokenError(Y4MError):
    pass


class Y4MTruncatedFrameError(Y4MError):
    pass


class PnmError(MediaError):
    pass


class DetectionFormatError(MediaError):
    def __init__(self, message: str, row: int | None = None, source: str | None = None):
        where = ""
        if source is not None:
            where += f"{source}:"
        if row is not None:
            where += f"row {row}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.row = row
        self.source = source


class ManifestError(MediaError):
    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


# --------------------------------------------------------------------------- frames


@dataclass(frozen=True, eq=False)
class Frame:
    """One decoded image.

    ``pixels`` is ``(H, W)`` luma or ``(H, W, 3)`` RGB, uint8, read-only.
    ``chroma`` optionally carries the original 4:2:0 ``(U, V)`` planes of a
    Y4M frame so it can be written back unchanged.
    """

    pixels: np.ndarray
    video_id: int = 1
    frame_index: int = 0
    chroma: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise ValueError(f"pixels must be (H, W) or (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")
        if self.video_id < 1:
            raise ValueError("video_id must be positive")
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")
        px = np.array(px, copy=True, order="C")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)
        if self.chroma is not None:
            cw, ch = (px.shape[1] + 1) // 2, (px.shape[0] + 1) // 2
            planes = []
            for plane in self.chroma:
                plane = np.array(plane, dtype=np.uint8, copy=True, order="C")
                if plane.shape != (ch, cw):
                    raise ValueError(f"chroma plane must be {(ch, cw)}, got {plane.shape}")
                plane.flags.writeable = False
                planes.append(plane)
            object.__setattr__(self, "chroma", tuple(planes))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def is_rgb(self) -> bool:
        return self.pixels.ndim == 3

    def luma(self) -> np.ndarray:
        if self.is_rgb:
            return kernels.rgb_to_luma(self.pixels)
        return self.pixels

    def with_pixels(self, pixels: np.ndarray) -> "Frame":
        return Frame(pixels, self.video_id, self.frame_index)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.video_id == other.video_id
            and self.frame_index == other.frame_index
            and self.pixels.shape == other.pixels.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )

    __hash__ = None


@dataclass(frozen=True)
class VideoSource:
    video_id: int
    path: str | None
    fps: Fraction
    frame_count: int
    width: int
    height: int
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.frame_count < 0:
            raise ValueError("frame_count must be non-negative")

    @property
    def duration(self) -> Fraction:
        return self.frame_count / self.fps


# --------------------------------------------------------------------------- colour


def yuv420_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Full-range BT.601 inverse in 16.16 fixed point, chroma upsampled nearest-neighbour."""
    H, W = y.shape
    uu = u.repeat(2, axis=0).repeat(2, axis=1)[:H, :W].astype(np.int32) - 128
    vv = v.repeat(2, axis=0).repeat(2, axis=1)[:H, :W].astype(np.int32) - 128
    yy = y.astype(np.int32)
    r = yy + ((91881 * vv + 32768) >> 16)
    g = yy - ((22554 * uu + 46802 * vv + 32768) >> 16)
    b = yy + ((116130 * uu + 32768) >> 16)
    return np.clip(np.stack([r, g, b], axis=-1), 0, 255).astype(np.uint8)


def rgb_to_yuv420(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    y = kernels.rgb_to_luma(rgb)
    c = rgb.astype(np.int64)
    u = 128 * 65536 + (-11058 * c[..., 0] - 21710 * c[..., 1] + 32768 * c[..., 2])
    v = 128 * 65536 + (32768 * c[..., 0] - 27439 * c[..., 1] - 5329 * c[..., 2])
    return y, _subsample(u), _subsample(v)


def _subsample(full: np.ndarray) -> np.ndarray:
    """2x2 box average of a 16.16 fixed-point plane, rounded half up, edge-replicated."""
    H, W = full.shape
    padded = np.pad(full, ((0, H % 2), (0, W % 2)), mode="edge")
    s = padded[0::2, 0::2] + padded[1::2, 0::2] + padded[0::2, 1::2] + padded[1::2, 1::2]
    return np.clip((s + 2 * 65536) // (4 * 65536), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------- Y4M

_Y4M_MAGIC = b"YUV4MPEG2"
_Y4M_TOKENS_ORDER = ("I", "A", "C", "X")


def _parse_y4m_header(buf, start: int = 0):
    nl = buf.find(b"\n", start)
    if not buf[start:start + len(_Y4M_MAGIC)] == _Y4M_MAGIC:
        raise Y4MBadMagicError("stream does not start with YUV4MPEG2 signature", start)
    if nl < 0:
        raise Y4MMissingTokenError("unterminated Y4M header", start)
    tokens = bytes(buf[start:nl]).split(b" ")
    if tokens[0] != _Y4M_MAGIC:
        raise Y4MBadMagicError("stream does not start with YUV4MPEG2 signature", start)
    width = height = fps = None
    params: dict[str, str] = {}
    for tok in tokens[1:]:
        if not tok:
            continue
        key, val = chr(tok[0]), tok[1:].decode("ascii", "replace")
        try:
            if key == "W":
                width = int(val)
            elif key == "H":
                height = int(val)
            elif key == "F":
                num, den = val.split(":")
                if int(num) <= 0 or int(den) <= 0:
                    raise ValueError(val)
                fps = Fraction(int(num), int(den))
            elif key == "X" and "X" in params:
                params["X"] += " X" + val
            elif key in _Y4M_TOKENS_ORDER:
                params.setdefault(key, val)
        except ValueError:
            raise Y4MError(f"malformed header token {tok.decode('ascii', 'replace')!r}", start) from None
    for name, value in (("W", width), ("H", height), ("F", fps)):
        if value is None:
            raise Y4MMissingTokenError(f"Y4M header lacks required {name} token", start)
    if width < 1 or height < 1:
        raise Y4MError("Y4M frame dimensions must be positive", start)
    chroma = params.get("C", "420jpeg")
    if not chroma.startswith("420"):
        raise Y4MError(f"unsupported chroma subsampling C{chroma}; only the C420 family is read", start)
    return width, height, fps, params, nl + 1


class Y4MVideo:
    """Random-access view of a Y4M stream.

    Frame offsets are indexed once at construction, so decoding frame ``i``
    touches only that frame's bytes.
    """

    def __init__(self, data, video_id: int = 1, path: str | None = None):
        self._data = data
        width, height, fps, params, pos = _parse_y4m_header(data)
        self.luma_size = width * height
        cw, ch = (width + 1) // 2, (height + 1) // 2
        self.chroma_shape = (ch, cw)
        self.frame_size = self.luma_size + 2 * cw * ch
        self._offsets: list[int] = []
        n = len(data)
        while pos < n:
            if data[pos:pos + 5] != b"FRAME":
                raise Y4MError("expected FRAME marker", pos)
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise Y4MTruncatedFrameError("unterminated FRAME header", pos)
            payload = nl + 1
            if payload + self.frame_size > n:
                raise Y4MTruncatedFrameError(
                    f"frame {len(self._offsets)} payload truncated: need {self.frame_size} bytes, "
                    f"have {n - payload}",
                    payload,
                )
            self._offsets.append(payload)
            pos = payload + self.frame_size
        self.source = VideoSource(video_id, path, fps, len(self._offsets), width, height, params)

    @classmethod
    def open(cls, path, video_id: int = 1) -> "Y4MVideo":
        path = os.fspath(path)
        with open(path, "rb") as fh:
            size = os.fstat(fh.fileno()).st_size
            data = mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ) if size else b""
        return cls(data, video_id, path)

    def __len__(self) -> int:
        return len(self._offsets)

    def frame(self, index: int, rgb: bool = False, keep_chroma: bool = False) -> Frame:
        if not 0 <= index < len(self._offsets):
            raise IndexError(f"frame {index} out of range for {len(self._offsets)} frames")
        off = self._offsets[index]
        W, H = self.source.width, self.source.height
        raw = np.frombuffer(self._data, dtype=np.uint8, count=self.frame_size, offset=off)
        y = raw[: self.luma_size].reshape(H, W)
        csize = self.chroma_shape[0] * self.chroma_shape[1]
        u = raw[self.luma_size:self.luma_size + csize].reshape(self.chroma_shape)
        v = raw[self.luma_size + csize:].reshape(self.chroma_shape)
        vid = self.source.video_id
        if rgb:
            return Frame(yuv420_to_rgb(y, u, v), vid, index)
        return Frame(y, vid, index, (u, v) if keep_chroma else None)

    def frames(self, rgb: bool = False, keep_chroma: bool = False) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self.frame(i, rgb=rgb, keep_chroma=keep_chroma)

    __iter__ = frames


def _read_all(stream) -> bytes:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        return bytes(stream)
    if isinstance(stream, (str, os.PathLike)):
        return Path(stream).read_bytes()
    return stream.read()


def read_y4m(stream, video_id: int = 1, rgb: bool = False,
             keep_chroma: bool = False) -> tuple[VideoSource, Iterator[Frame]]:
    """Parse a Y4M byte source (bytes, path or binary file object)."""
    if isinstance(stream, (str, os.PathLike)):
        video = Y4MVideo.open(stream, video_id)
    else:
        video = Y4MVideo(_read_all(stream), video_id)
    return video.source, video.frames(rgb=rgb, keep_chroma=keep_chroma)


def encode_y4m(frames: Iterable[Frame], fps: Fraction | int = 10, params: dict | None = None,
               size: tuple[int, int] | None = None) -> bytes:
    """Serialise frames to Y4M.

    The header is canonicalised to ``W H F`` followed by whichever of
    ``I A C X`` appear in ``params`` (in that order). Frame headers are
    written as a bare ``FRAME``. Luma frames without stored chroma get
    neutral (128) chroma; RGB frames are converted.
    """
    frames = list(frames)
    if size is None:
        if not frames:
            raise ValueError("cannot infer frame size from an empty sequence")
        size = (frames[0].width, frames[0].height)
    W, H = size
    fps = Fraction(fps)
    header = [f"YUV4MPEG2 W{W} H{H} F{fps.numerator}:{fps.denominator}"]
    for key in _Y4M_TOKENS_ORDER:
        if params and key in params:
            header.append(f"{key}{params[key]}")
    out = io.BytesIO()
    out.write((" ".join(header) + "\n").encode("ascii"))
    cshape = ((H + 1) // 2, (W + 1) // 2)
    neutral = np.full(cshape, 128, dtype=np.uint8).tobytes()
    for fr in frames:
        if (fr.width, fr.height) != (W, H):
            raise ValueError(f"frame {fr.frame_index} is {fr.width}x{fr.height}, stream is {W}x{H}")
        out.write(b"FRAME\n")
        if fr.is_rgb:
            y, u, v = rgb_to_yuv420(fr.pixels)
            out.write(y.tobytes() + u.tobytes() + v.tobytes())
        else:
            out.write(fr.pixels.tobytes())
            if fr.chroma is not None:
                out.write(fr.chroma[0].tobytes() + fr.chroma[1].tobytes())
            else:
                out.write(neutral + neutral)
    return out.getvalue()


def write_y4m(path, frames: Iterable[Frame], fps: Fraction | int = 10, params: dict | None = None) -> None:
    Path(path).write_bytes(encode_y4m(frames, fps, params))


# --------------------------------------------------------------------------- PNM

_PNM_WS = b" \t\n\r\v\f"


def _pnm_tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    toks = []
    n = len(data)
    while len(toks) < count:
        while pos < n and data[pos] in _PNM_WS:
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < n and data[pos] not in _PNM_WS and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise PnmError("truncated PNM header")
        toks.append(data[start:pos])
    return toks, pos


def pnm_header(data: bytes) -> tuple[bytes, int, int, int]:
    """Return ``(magic, width, height, payload_offset)``."""
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"unsupported PNM magic {magic!r}; expected binary P5 or P6")
    toks, pos = _pnm_tokens(data, 3, 2)
    try:
        width, height, maxval = (int(t) for t in toks)
    except ValueError:
        raise PnmError(f"non-numeric PNM header field in {toks!r}") from None
    if maxval != 255:
        raise PnmError(f"maxval {maxval} not supported; only 255")
    if width < 1 or height < 1:
        raise PnmError("PNM dimensions must be positive")
    if pos >= len(data) or data[pos] not in _PNM_WS:
        raise PnmError("missing whitespace before PNM payload")
    return magic, width, height, pos + 1


def decode_pnm(data: bytes, video_id: int = 1, frame_index: int = 0) -> Frame:
    magic, width, height, off = pnm_header(data)
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    if len(data) - off < need:
        raise PnmError(f"PNM payload truncated: need {need} bytes, have {len(data) - off}")
    px = np.frombuffer(data, dtype=np.uint8, count=need, offset=off)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Frame(px.reshape(shape), video_id, frame_index)


def encode_pnm(frame: Frame) -> bytes:
    magic = b"P6" if frame.is_rgb else b"P5"
    return magic + f"\n{frame.width} {frame.height}\n255\n".encode("ascii") + frame.pixels.tobytes()


def read_pnm(path, video_id: int = 1, frame_index: int = 0) -> Frame:
    return decode_pnm(Path(path).read_bytes(), video_id, frame_index)


def write_pnm(path, frame: Frame) -> None:
    Path(path).write_bytes(encode_pnm(frame))


def pnm_suffix(frame: Frame) -> str:
    return ".ppm" if frame.is_rgb else ".pgm"


# --------------------------------------------------------------------------- videos


class PnmSequence:
    """A directory of ``.pgm``/``.ppm`` files read as one video, in filename order."""

    def __init__(self, directory, video_id: int = 1, fps: Fraction | int = 10):
        self.directory = Path(directory)
        self.paths = sorted(p for p in self.directory.iterdir() if p.suffix.lower() in (".pgm", ".ppm"))
        dims = set()
        for p in self.paths:
            with open(p, "rb") as fh:
                _, w, h, _ = pnm_header(fh.read(4096))
            dims.add((w, h))
        if len(dims) > 1:
            raise MediaError(f"{self.directory}: mixed frame sizes {sorted(dims)} are not supported")
        w, h = dims.pop() if dims else (1, 1)
        self.source = VideoSource(video_id, str(self.directory), Fraction(fps), len(self.paths), w, h)

    def __len__(self) -> int:
        return len(self.paths)

    def frame(self, index: int, rgb: bool = False, keep_chroma: bool = False) -> Frame:
        fr = read_pnm(self.paths[index], self.source.video_id, index)
        if not rgb and fr.is_rgb:
            return Frame(fr.luma(), fr.video_id, index)
        if rgb and not fr.is_rgb:
            return Frame(np.repeat(fr.pixels[..., None], 3, axis=2), fr.video_id, index)
        return fr

    def frames(self, rgb: bool = False, keep_chroma: bool = False) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self.frame(i, rgb=rgb)

    __iter__ = frames


class InMemoryVideo:
    """Frames held in memory; used for synthetic inputs."""

    def __init__(self, frames: Sequence[Frame] | Sequence[np.ndarray], video_id: int = 1,
                 fps: Fraction | int = 10):
        self._frames = [
            Frame(f.pixels if isinstance(f, Frame) else f, video_id, i) for i, f in enumerate(frames)
        ]
        if not self._frames:
            raise ValueError("InMemoryVideo needs at least one frame")
        shapes = {f.pixels.shape[:2] for f in self._frames}
        if len(shapes) > 1:
            raise MediaError(f"mixed frame sizes {sorted(shapes)} are not supported")
        h, w = shapes.pop()
        self.source = VideoSource(video_id, None, Fraction(fps), len(self._frames), w, h)

    def __len__(self) -> int:
        return len(self._frames)

    def frame(self, index: int, rgb: bool = False, keep_chroma: bool = False) -> Frame:
        fr = self._frames[index]
        if not rgb and fr.is_rgb:
            return Frame(fr.luma(), fr.video_id, index)
        return fr

    def frames(self, rgb: bool = False, keep_chroma: bool = False) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self.frame(i, rgb=rgb)

    __iter__ = frames


def open_video(path, video_id: int = 1, fps: Fraction | int = 10):
    path = Path(path)
    if path.is_dir():
        return PnmSequence(path, video_id, fps)
    return Y4MVideo.open(path, video_id)


def list_videos(directory, fps: Fraction | int = 10) -> list:
    """Open every video under ``directory``.

    ``.y4m`` files and sub-directories of PNM frames are both videos. IDs are
    assigned 1, 2, ... in alphabetical order of their names.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"video directory not found: {directory}")
    entries = sorted(
        p for p in directory.iterdir()
        if (p.is_file() and p.suffix.lower() == ".y4m") or p.is_dir()
    )
    return [open_video(p, i + 1, fps) for i, p in enumerate(entries)]


# --------------------------------------------------------------------------- detections


@dataclass(frozen=True)
class DetectionRecord:
    """One submission row. ``confidence`` is ``None`` for ground truth."""

    video_id: int
    frame_id: int
    bb_left: float
    bb_top: float
    bb_width: float
    bb_height: float
    class_id: int
    confidence: float | None = None

    def __post_init__(self):
        if self.video_id < 1:
            raise ValueError("video_id must be positive")
        if self.frame_id < 0:
            raise ValueError("frame_id must be non-negative")
        if not self.bb_width > 0:
            raise ValueError("bb_width must be positive")
        if not self.bb_height > 0:
            raise ValueError("bb_height must be positive")
        if self.class_id < 1:
            raise ValueError("class_id must be >= 1")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be within [0, 1]")

    @property
    def box(self) -> tuple:
        return (self.bb_left, self.bb_top, self.bb_width, self.bb_height)

    @property
    def key(self) -> tuple[int, int]:
        return (self.video_id, self.frame_id)


_INT_RE = re.compile(r"^[+-]?\d+$")


def _parse_int(tok: str, name: str) -> int:
    if not _INT_RE.match(tok):
        raise ValueError(f"{name} must be an integer, got {tok!r}")
    return int(tok)


def _parse_num(tok: str, name: str):
    if _INT_RE.match(tok):
        return int(tok)
    try:
        val = float(tok)
    except ValueError:
        raise ValueError(f"{name} must be numeric, got {tok!r}") from None
    if not math.isfinite(val):
        raise ValueError(f"{name} must be finite, got {tok!r}")
    return val


def parse_detection_row(line: str, has_confidence: bool) -> DetectionRecord:
    fields = [f.strip() for f in line.split(",")]
    expected = 8 if has_confidence else 7
    if len(fields) != expected:
        raise ValueError(f"expected {expected} columns, found {len(fields)}")
    conf = None
    if has_confidence:
        conf = _parse_num(fields[7], "confidence")
        conf = float(conf)
    return DetectionRecord(
        _parse_int(fields[0], "video_id"),
        _parse_int(fields[1], "frame_id"),
        _parse_num(fields[2], "bb_left"),
        _parse_num(fields[3], "bb_top"),
        _parse_num(fields[4], "bb_width"),
        _parse_num(fields[5], "bb_height"),
        _parse_int(fields[6], "class_id"),
        conf,
    )


def parse_detections(text: str, has_confidence: bool, source: str | None = None) -> list[DetectionRecord]:
    records = []
    for row, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        try:
            records.append(parse_detection_row(line, has_confidence))
        except ValueError as exc:
            raise DetectionFormatError(str(exc), row, source) from None
    return records


def read_detections(path, has_confidence: bool) -> list[DetectionRecord]:
    return parse_detections(Path(path).read_text(encoding="utf-8"), has_confidence, str(path))


def format_number(v) -> str:
    """Integers verbatim; other values rounded to 3 decimals with trailing zeros stripped."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = round(float(v), 3)
    if v == 0:
        return "0"
    if v.is_integer():
        return str(int(v))
    return f"{v:.3f}".rstrip("0").rstrip(".")


def format_detection(rec: DetectionRecord, with_confidence: bool | None = None) -> str:
    cols = [
        str(rec.video_id), str(rec.frame_id),
        format_number(rec.bb_left), format_number(rec.bb_top),
        format_number(rec.bb_width), format_number(rec.bb_height),
        str(rec.class_id),
    ]
    if with_confidence is None:
        with_confidence = rec.confidence is not None
    if with_confidence:
        cols.append(f"{rec.confidence:.6f}")
    return ",".join(cols)


def format_detections(records: Iterable[DetectionRecord], with_confidence: bool | None = None) -> str:
    return "".join(format_detection(r, with_confidence) + "\n" for r in records)


def write_detections(path, records: Iterable[DetectionRecord], with_confidence: bool | None = None) -> None:
    Path(path).write_text(format_detections(records, with_confidence), encoding="utf-8", newline="\n")


# --------------------------------------------------------------------------- manifest

CATEGORIES = ("night", "fog", "day")
SPLITS = ("train", "val", "none")
MODES = ("paper", "balanced")

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "framesift sample manifest",
    "type": "object",
    "required": ["tool_version", "seed", "mode", "entries"],
    "additionalProperties": False,
    "properties": {
        "tool_version": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "mode": {"enum": list(MODES)},
        "entries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["video_id", "frame_index", "category", "split", "is_negative", "stride",
                             "provenance"],
                "additionalProperties": False,
                "properties": {
                    "video_id": {"type": "integer", "minimum": 1},
                    "frame_index": {"type": "integer", "minimum": 0},
                    "category": {"enum": list(CATEGORIES)},
                    "split": {"enum": list(SPLITS)},
                    "is_negative": {"type": "boolean"},
                    "stride": {"type": "integer", "minimum": 0},
                    "provenance": {"type": "string"},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class ManifestEntry:
    """One selected frame.

    For negatives (``is_negative``) ``frame_index`` is the variant number of
    the background image: 0 is the plain background, 1..k its augmentations.
    ``stride`` is the sampling stride the frame was selected at (0 if none).
    """

    video_id: int
    frame_index: int
    category: str
    split: str = "none"
    is_negative: bool = False
    stride: int = 0
    provenance: str = ""

    @property
    def key(self) -> tuple[int, int, bool]:
        return (self.video_id, self.frame_index, self.is_negative)

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "frame_index": self.frame_index,
            "category": self.category,
            "split": self.split,
            "is_negative": self.is_negative,
            "stride": self.stride,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class SampleManifest:
    seed: int
    mode: str
    entries: tuple[ManifestEntry, ...] = ()
    tool_version: str = __version__

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        _check_unique(self.entries)

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "seed": self.seed,
            "mode": self.mode,
            "entries": [e.to_dict() for e in self.entries],
        }

    def dumps(self) -> str:
        return canonical_json(self.to_dict())

    def replace_entries(self, entries: Iterable[ManifestEntry]) -> "SampleManifest":
        return SampleManifest(self.seed, self.mode, tuple(entries), self.tool_version)

    @property
    def positives(self) -> list[ManifestEntry]:
        return [e for e in self.entries if not e.is_negative]

    @property
    def negatives(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.is_negative]


def _check_unique(entries: Sequence[ManifestEntry]) -> None:
    seen: dict[tuple, int] = {}
    for i, e in enumerate(entries):
        if e.key in seen:
            raise ManifestError(
                f"/entries/{i}",
                f"duplicate (video_id, frame_index, is_negative) {e.key}, first at /entries/{seen[e.key]}",
            )
        seen[e.key] = i


_MANIFEST_VALIDATOR = jsonschema.Draft202012Validator(MANIFEST_SCHEMA)


def manifest_from_dict(doc) -> SampleManifest:
    errors = sorted(_MANIFEST_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise ManifestError(json_pointer(err.absolute_path), err.message)
    entries = [ManifestEntry(**e) for e in doc["entries"]]
    return SampleManifest(doc["seed"], doc["mode"], tuple(entries), doc["tool_version"])


def loads_manifest(text: str) -> SampleManifest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError("", f"invalid JSON: {exc}") from None
    return manifest_from_dict(doc)


def read_manifest(path) -> SampleManifest:
    return loads_manifest(Path(path).read_text(encoding="utf-8"))


def write_manifest(path, manifest: SampleManifest) -> None:
    Path(path).write_text(manifest.dumps(), encoding="utf-8", newline="\n")
