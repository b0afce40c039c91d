"""The 28-dimensional handcrafted feature vector and its CSV persistence."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from msdclass import dsp
from msdclass.config import Config, DspConfig, FeatureConfig
from msdclass.dataset import Waveform
from msdclass.errors import DataError, FeatureExtractionError
from msdclass.labels import ClassLabel

_STATS = ("mean", "std", "kurtosis", "skewness")
_BANDS = ("31hz", "62hz", "125hz", "250hz", "500hz", "1khz", "2khz", "4khz", "8khz")

F1_NAMES = tuple(f"spectral_sparsity_{s}" for s in _STATS)
F2_NAMES = (tuple(f"formant1_{s}" for s in _STATS) + tuple(f"formant2_{s}" for s in _STATS)
            + ("voiced_duration_mean", "voiced_duration_std"))
F3_NAMES = ("loudness_peaks_per_s",) + tuple(f"ltas_{b}_db" for b in _BANDS)
F4_NAMES = tuple(f"temporal_sparsity_{s}" for s in _STATS)
FEATURE_NAMES = F1_NAMES + F2_NAMES + F3_NAMES + F4_NAMES
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray

    def __post_init__(self):
        sizes = tuple(len(v) for v in (self.f1, self.f2, self.f3, self.f4))
        if sizes != (4, 10, 10, 4):
            raise ValueError(f"feature blocks must have sizes (4, 10, 10, 4), got {sizes}")

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.f1, self.f2, self.f3, self.f4])

    names = FEATURE_NAMES


def _shape_stats(columns: np.ndarray, cfg: DspConfig, min_items: int, what: str) -> np.ndarray:
    # all-zero series carry no shape information and are skipped
    valid = columns.max(axis=0) > 0
    if valid.sum() < min_items:
        raise FeatureExtractionError(f"{what}: only {int(valid.sum())} non-silent series, need {min_items}")
    shapes = dsp.fit_chi_shapes(columns[:, valid], cfg)
    return np.array(dsp.descriptive_stats(shapes).as_tuple())


def spectral_sparsity_features(s: dsp.Spectrogram, cfg: Config = Config()) -> np.ndarray:
    """Moments of the per-frame Chi shape fitted across frequency bins."""
    return _shape_stats(s.magnitudes.T, cfg.dsp, cfg.features.min_fit_items, "spectral sparsity")


def temporal_sparsity_features(s: dsp.Spectrogram, cfg: Config = Config()) -> np.ndarray:
    """Moments of the per-bin Chi shape fitted across time frames."""
    if s.n_frames < 8:
        raise FeatureExtractionError(f"temporal sparsity needs at least 8 frames, got {s.n_frames}")
    return _shape_stats(s.magnitudes, cfg.dsp, cfg.features.min_fit_items, "temporal sparsity")


def voiced_regions(voiced: np.ndarray, merge_gap: int = 2, min_frames: int = 3) -> list[tuple[int, int]]:
    """Maximal voiced runs as ``(start, stop)`` frame ranges.

    Unvoiced gaps of at most ``merge_gap`` frames between two runs are
    absorbed; runs shorter than ``min_frames`` are dropped.
    """
    voiced = np.asarray(voiced, dtype=bool)
    padded = np.concatenate(([False], voiced, [False])).astype(np.int8)
    d = np.diff(padded)
    starts, stops = np.flatnonzero(d == 1), np.flatnonzero(d == -1)
    runs = []
    for a, b in zip(starts, stops):
        if runs and a - runs[-1][1] <= merge_gap:
            runs[-1] = (runs[-1][0], b)
        else:
            runs.append((a, b))
    return [(int(a), int(b)) for a, b in runs if b - a >= min_frames]


def formant_voicing_features(ft: dsp.FormantTrack, v: dsp.VoicingTrack, frame_rate: float,
                             cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    ok = np.isfinite(ft.f1_hz) & np.isfinite(ft.f2_hz)
    if ok.sum() < cfg.min_voiced_frames:
        raise FeatureExtractionError(
            f"only {int(ok.sum())} voiced frames with formants, need {cfg.min_voiced_frames}")
    regions = voiced_regions(v.voiced, cfg.region_merge_gap, cfg.region_min_frames)
    if not regions:
        raise FeatureExtractionError("no continuously voiced region found")
    durations = np.array([(b - a) / frame_rate for a, b in regions])
    dur = dsp.descriptive_stats(durations)
    return np.array(dsp.descriptive_stats(ft.f1_hz[ok]).as_tuple()
                    + dsp.descriptive_stats(ft.f2_hz[ok]).as_tuple()
                    + (dur.mean, dur.std))


def loudness_ltas_features(w: Waveform, s: dsp.Spectrogram, cfg: DspConfig = DspConfig()) -> np.ndarray:
    contour = dsp.loudness_contour(w, cfg)
    rate = dsp.count_loudness_peaks(contour, w.sample_rate / cfg.hop_length, w.duration,
                                    cfg.peak_prominence_db)
    bands = dsp.octave_band_powers(s, cfg.ltas_gate_db, cfg.ltas_floor_db)
    return np.concatenate(([rate], bands))


def extract_features(w: Waveform, cfg: Config = Config(), recording_id: str | None = None) -> FeatureVector:
    """Compute f = [f1; f2; f3; f4] for a preprocessed waveform."""
    try:
        s = dsp.stft(w, cfg.dsp)
        voicing = dsp.detect_voicing(w, cfg.dsp)
        formants = dsp.estimate_formants(w, voicing, cfg.dsp)
        fv = FeatureVector(
            spectral_sparsity_features(s, cfg),
            formant_voicing_features(formants, voicing, s.frame_rate, cfg.features),
            loudness_ltas_features(w, s, cfg.dsp),
            temporal_sparsity_features(s, cfg),
        )
    except FeatureExtractionError as exc:
        if recording_id is None or exc.recording_id is not None:
            raise
        raise FeatureExtractionError(str(exc), recording_id) from exc
    except (ValueError, FloatingPointError) as exc:
        raise FeatureExtractionError(str(exc), recording_id) from exc
    if not np.all(np.isfinite(fv.values)):
        raise FeatureExtractionError("non-finite feature value", recording_id)
    return fv


# ---------------------------------------------------------------------------
# Feature matrices
# ---------------------------------------------------------------------------

@dataclass
class FeatureMatrix:
    ids: list[str]
    labels: list[ClassLabel]
    values: np.ndarray  # (recordings, features)
    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.ids), len(self.names)):
            raise DataError(f"feature matrix shape {self.values.shape} does not match "
                            f"{len(self.ids)} ids x {len(self.names)} names")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate recording ids in feature matrix")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def label_array(self) -> np.ndarray:
        return np.array([c.order for c in self.labels])


def format_value(x: float) -> str:
    return repr(float(x))


def write_feature_csv(path: str | Path, fm: FeatureMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label", *fm.names])
        for rid, label, row in zip(fm.ids, fm.labels, fm.values):
            writer.writerow([rid, label.value, *map(format_value, row)])


def read_feature_csv(path: str | Path, require_standard: bool = False) -> FeatureMatrix:
    """Read a feature CSV with ``id`` and ``label`` columns plus any numeric feature columns.

    Non-standard columns are accepted unless ``require_standard`` is set, so
    externally computed feature sets can be imported with the same layout.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read feature CSV {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty feature CSV") from None
        if "id" not in header or "label" not in header:
            raise DataError(f"{path}: header needs 'id' and 'label' columns")
        id_col, label_col = header.index("id"), header.index("label")
        feat_cols = [i for i in range(len(header)) if i not in (id_col, label_col)]
        names = tuple(header[i] for i in feat_cols)
        if require_standard and names != FEATURE_NAMES:
            raise DataError(f"{path}: columns do not match the 28 standard feature names")
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                labels.append(ClassLabel.parse(row[label_col]))
                rows.append([float(row[i]) for i in feat_cols])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            ids.append(row[id_col])
    values = np.array(rows, dtype=np.float64).reshape(len(ids), len(names))
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite feature values")
    return FeatureMatrix(ids, labels, values, names)
