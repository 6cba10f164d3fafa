"""RIFF/WAVE reading and writing, and the in-memory audio buffer."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PreconditionError, WavFormatError

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioBuffer:
    """Audio samples with shape ``(channels, frames)`` and a sample rate in Hz.

    Samples are float64 with nominal range [-1, 1]. The array is made
    read-only so buffers can be shared between threads.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] < 1:
            raise PreconditionError(f"samples must be 1-D or (channels, frames), got shape {data.shape}")
        if int(self.sample_rate) <= 0:
            raise PreconditionError(f"sample_rate must be positive, got {self.sample_rate}")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_frames(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_frames / self.sample_rate

    @property
    def mono(self) -> np.ndarray:
        """The single channel as a 1-D array. Raises for multichannel buffers."""
        if self.channels != 1:
            raise PreconditionError(f"expected a mono buffer, got {self.channels} channels")
        return self.samples[0]


def as_mono_array(x) -> np.ndarray:
    """Accept an AudioBuffer or array-like and return a 1-D float64 array."""
    if isinstance(x, AudioBuffer):
        return x.mono
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 1:
        raise PreconditionError(f"expected a mono signal, got shape {arr.shape}")
    return arr


def _parse_fmt(chunk: bytes, path) -> tuple[int, int, int, int]:
    if len(chunk) < 16:
        raise WavFormatError(f"{path}: fmt chunk too short ({len(chunk)} bytes)")
    fmt_code, channels, rate, _byte_rate, _align, bits = struct.unpack("<HHIIHH", chunk[:16])
    if fmt_code == WAVE_FORMAT_EXTENSIBLE and len(chunk) >= 26:
        fmt_code = struct.unpack("<H", chunk[24:26])[0]
    return fmt_code, channels, rate, bits


def load_wav(path) -> AudioBuffer:
    """Read a 16-bit integer or 32-bit float PCM WAV file.

    16-bit samples are mapped with ``s / 32768`` so they lie in [-1, 1).
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        size = struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = raw[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(body, path)
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")

    fmt_code, channels, rate, bits = fmt
    if fmt_code == WAVE_FORMAT_PCM and bits == 16:
        frames = np.frombuffer(data[: len(data) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
    elif fmt_code == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        frames = np.frombuffer(data[: len(data) // 4 * 4], dtype="<f4").astype(np.float64)
    elif fmt_code in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
        raise WavFormatError(f"{path}: unsupported bit depth {bits} for format {fmt_code}")
    else:
        raise WavFormatError(f"{path}: unsupported codec (format tag {fmt_code:#06x}); only PCM and IEEE float")
    if channels < 1:
        raise WavFormatError(f"{path}: invalid channel count {channels}")
    if rate <= 0:
        raise WavFormatError(f"{path}: invalid sample rate {rate}")
    usable = len(frames) // channels * channels
    return AudioBuffer(frames[:usable].reshape(-1, channels).T, rate)


def encode_wav(buffer: AudioBuffer, bit_depth: int = 16) -> bytes:
    """Serialize a buffer to WAV bytes with a canonical 44-byte header."""
    if buffer.num_frames == 0:
        raise PreconditionError("cannot write an empty buffer")
    interleaved = buffer.samples.T.reshape(-1)
    if bit_depth == 16:
        ints = np.clip(np.round(interleaved * 32768.0), -32768, 32767).astype("<i2")
        payload = ints.tobytes()
        fmt_code = WAVE_FORMAT_PCM
    elif bit_depth == 32:
        payload = interleaved.astype("<f4").tobytes()
        fmt_code = WAVE_FORMAT_IEEE_FLOAT
    else:
        raise PreconditionError(f"bit_depth must be 16 or 32, got {bit_depth}")
    block_align = buffer.channels * bit_depth // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, fmt_code, buffer.channels, buffer.sample_rate,
        buffer.sample_rate * block_align, block_align, bit_depth,
        b"data", len(payload),
    )
    return header + payload


def save_wav(buffer: AudioBuffer, path, bit_depth: int = 16) -> None:
    """Write ``buffer`` as 16-bit PCM (values outside [-1, 1] saturate) or 32-bit float."""
    Path(path).write_bytes(encode_wav(buffer, bit_depth))


def downmix_to_mono(buffer: AudioBuffer) -> AudioBuffer:
    """Unweighted mean across channels."""
    if buffer.channels == 1:
        return buffer
    return AudioBuffer(buffer.samples.mean(axis=0), buffer.sample_rate)
