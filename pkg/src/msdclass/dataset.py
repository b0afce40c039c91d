"""Recording manifests, WAV decoding and preprocessing to 16 kHz."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from math import gcd
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

from msdclass.errors import AudioError, ManifestError
from msdclass.labels import ClassLabel

TARGET_RATE = 16000


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise AudioError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise AudioError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ManifestEntry:
    recording_id: str
    audio_paths: tuple[Path, ...]
    label: ClassLabel
    speaker_meta: dict[str, str] = field(default_factory=dict)
    trim_spans: tuple[tuple[float, float], ...] | None = None


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read a JSON Lines manifest; relative audio paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    entries = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        entry = _parse_entry(obj, path.parent, f"{path}:{lineno}")
        if entry.recording_id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate recording id {entry.recording_id!r}")
        seen.add(entry.recording_id)
        entries.append(entry)
    return entries


def _parse_entry(obj, base: Path, where: str) -> ManifestEntry:
    if not isinstance(obj, dict):
        raise ManifestError(f"{where}: expected a JSON object")
    for key in ("id", "paths", "label"):
        if key not in obj:
            raise ManifestError(f"{where}: missing key {key!r}")
    unknown = set(obj) - {"id", "paths", "label", "trim", "meta"}
    if unknown:
        raise ManifestError(f"{where}: unknown keys {sorted(unknown)}")
    paths = obj["paths"]
    if isinstance(paths, str):
        paths = [paths]
    if not paths:
        raise ManifestError(f"{where}: 'paths' must be non-empty")
    try:
        label = ClassLabel.parse(obj["label"])
    except ValueError as exc:
        raise ManifestError(f"{where}: {exc}") from None
    trims = obj.get("trim")
    if trims is not None:
        if len(trims) != len(paths):
            raise ManifestError(f"{where}: 'trim' needs one [lead, trail] pair per path")
        trims = tuple((float(a), float(b)) for a, b in trims)
        if any(a < 0 or b < 0 for a, b in trims):
            raise ManifestError(f"{where}: trim spans must be non-negative")
    meta = {str(k): str(v) for k, v in (obj.get("meta") or {}).items()}
    resolved = tuple(p if Path(p).is_absolute() else base / p for p in map(Path, paths))
    return ManifestEntry(str(obj["id"]), resolved, label, meta, trims)


def decode_audio(path: str | Path) -> Waveform:
    """Decode a PCM WAV file to a mono float waveform in [-1, 1]."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(str(path))
    except FileNotFoundError as exc:
        raise AudioError(f"{path}: file not found") from exc
    except (ValueError, wavfile.WavFileWarning, OSError, EOFError) as exc:
        raise AudioError(f"{path}: unreadable or truncated WAV ({exc})") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioError(f"{path}: unsupported sample format {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Waveform(samples, int(rate))


def resample(w: Waveform, rate: int = TARGET_RATE, kaiser_beta: float = 8.0) -> Waveform:
    """Polyphase windowed-sinc resampling (Kaiser window)."""
    if w.sample_rate == rate:
        return Waveform(w.samples.copy(), rate)
    g = gcd(int(rate), int(w.sample_rate))
    up, down = rate // g, w.sample_rate // g
    try:
        out = signal.resample_poly(w.samples, up, down, window=("kaiser", kaiser_beta))
    except ValueError as exc:
        raise AudioError(f"resampling {w.sample_rate} -> {rate} Hz failed: {exc}") from exc
    return Waveform(out, rate)


def trim(w: Waveform, lead_s: float, trail_s: float) -> Waveform:
    lead = int(round(lead_s * w.sample_rate))
    trail = int(round(trail_s * w.sample_rate))
    if lead + trail >= len(w.samples):
        raise AudioError(f"trim ({lead_s} s, {trail_s} s) removes the whole {w.duration:.3f} s file")
    return Waveform(w.samples[lead:len(w.samples) - trail], w.sample_rate)


def preprocess(entry: ManifestEntry, rate: int = TARGET_RATE, kaiser_beta: float = 8.0) -> Waveform:
    """Resample every file of ``entry``, apply its trims, and concatenate in order."""
    pieces = []
    for n, path in enumerate(entry.audio_paths):
        w = resample(decode_audio(path), rate, kaiser_beta)
        if entry.trim_spans is not None:
            w = trim(w, *entry.trim_spans[n])
        pieces.append(w.samples)
    return Waveform(np.concatenate(pieces), rate)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int, dtype=np.int16) -> None:
    """Write mono or (n, channels) samples in [-1, 1] as PCM16 or float32 WAV."""
    samples = np.asarray(samples, dtype=np.float64)
    if np.dtype(dtype) == np.int16:
        data = np.clip(np.round(samples * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = samples.astype(np.float32)
    wavfile.write(str(path), int(sample_rate), data)
