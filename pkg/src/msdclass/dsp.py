"""Signal-analysis primitives used by the feature extractors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg, ndimage
from scipy import signal as sps
from scipy.special import gammaln

from msdclass import kernels
from msdclass.config import DspConfig
from msdclass.dataset import Waveform
from msdclass.errors import FeatureExtractionError

# c-statistic grid: removes rounding noise introduced by rescaling the input
_C_QUANTUM = 2.0 ** -36


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # (frames, bins)
    frame_rate: float
    bin_freqs: np.ndarray
    sample_rate: int
    window: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    def frame_rms(self) -> np.ndarray:
        """Window-compensated RMS of each frame, via Parseval."""
        power = self.magnitudes ** 2
        nfft = 2 * (power.shape[1] - 1)
        energy = 2.0 * power.sum(axis=1) - power[:, 0] - power[:, -1]
        return np.sqrt(energy / nfft / np.sum(self.window ** 2))


@dataclass(frozen=True)
class VoicingTrack:
    voiced: np.ndarray  # bool per frame
    f0: np.ndarray  # Hz, NaN where unvoiced
    frame_rate: float


@dataclass(frozen=True)
class FormantTrack:
    f1_hz: np.ndarray  # NaN where absent
    f2_hz: np.ndarray


@dataclass(frozen=True)
class StatsQuad:
    mean: float
    std: float
    kurtosis: float
    skewness: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.mean, self.std, self.kurtosis, self.skewness)


def frame_signal(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    if len(x) < win:
        raise FeatureExtractionError(f"waveform has {len(x)} samples, shorter than one {win}-sample window")
    return sliding_window_view(x, win)[::hop]


def stft(w: Waveform, cfg: DspConfig = DspConfig()) -> Spectrogram:
    """Magnitude STFT with a periodic Hann window; ``floor((N - win)/hop) + 1`` frames."""
    win, hop = cfg.win_length, cfg.hop_length
    if win > cfg.nfft or hop > win:
        raise ValueError("need window <= nfft and hop <= window")
    window = sps.get_window("hann", win, fftbins=True)
    frames = frame_signal(w.samples, win, hop)
    mags = np.abs(np.fft.rfft(frames * window, n=cfg.nfft, axis=1))
    freqs = np.fft.rfftfreq(cfg.nfft, d=1.0 / w.sample_rate)
    return Spectrogram(mags, w.sample_rate / hop, freqs, w.sample_rate, window)


# ---------------------------------------------------------------------------
# Chi shape fitting
# ---------------------------------------------------------------------------

def _chi_statistic(columns: np.ndarray, floor: float) -> np.ndarray:
    # columns: (n_samples, n_series); each series normalised by its own maximum
    # so the statistic, and hence the shape, does not depend on scale
    z = columns / columns.max(axis=0, keepdims=True)
    z = np.maximum(z, floor)
    c = np.log(np.mean(z * z, axis=0)) - 2.0 * np.mean(np.log(z), axis=0)
    return np.round(np.maximum(c, 0.0) / _C_QUANTUM) * _C_QUANTUM


def fit_chi_shapes(columns: np.ndarray, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Maximum-likelihood Chi shape of every column of a non-negative matrix.

    The scale is profiled out analytically, leaving a one-dimensional
    equation in the shape solved by safeguarded Newton. Columns must each
    contain a positive entry.
    """
    columns = np.asarray(columns, dtype=np.float64)
    if columns.ndim == 1:
        columns = columns[:, None]
    c = _chi_statistic(columns, cfg.chi_floor)
    u = kernels.chi_half_shape(c, cfg.chi_k_min / 2, cfg.chi_k_max / 2, cfg.chi_tol / 2, cfg.chi_max_iter)
    return 2.0 * u


def fit_chi_shape(samples, cfg: DspConfig = DspConfig()) -> float:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 8:
        raise ValueError(f"need at least 8 samples for a Chi fit, got {x.size}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("Chi fit needs finite non-negative samples")
    if not np.any(x > 0):
        raise ValueError("Chi fit on an all-zero sample")
    return float(fit_chi_shapes(x[:, None], cfg)[0])


def chi_profile_loglik(samples, k: float, floor: float = 1e-12) -> float:
    """Chi(k) log-likelihood with the scale at its conditional optimum ``sqrt(mean(x^2)/k)``."""
    x = np.maximum(np.asarray(samples, dtype=np.float64), floor)
    n = x.size
    s2 = np.mean(x * x) / k
    return float((k - 1) * np.sum(np.log(x)) - np.sum(x * x) / (2 * s2)
                 - n * (k / 2 - 1) * np.log(2.0) - n * gammaln(k / 2) - n * k / 2 * np.log(s2))


# ---------------------------------------------------------------------------
# Voicing, formants
# ---------------------------------------------------------------------------

def _normalized_lag_correlation(frames: np.ndarray, lag_min: int, lag_max: int) -> np.ndarray:
    # r(t) / sqrt(E_head(t) E_tail(t)) for each frame and lag in [lag_min, lag_max]
    win = frames.shape[1]
    nfft = 1 << int(np.ceil(np.log2(2 * win)))
    spec = np.fft.rfft(frames, n=nfft, axis=1)
    r = np.fft.irfft(spec * np.conj(spec), n=nfft, axis=1)[:, lag_min:lag_max + 1]
    sq = np.cumsum(frames ** 2, axis=1)
    total = sq[:, -1:]
    lags = np.arange(lag_min, lag_max + 1)
    head = sq[:, win - lags - 1]  # energy of x[0 : win - lag]
    tail = total - sq[:, lags - 1]  # energy of x[lag : win]
    denom = np.sqrt(head * tail)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0, r / denom, 0.0)
    return out


def detect_voicing(w: Waveform, cfg: DspConfig = DspConfig()) -> VoicingTrack:
    """Frame-level voicing from normalized autocorrelation plus an energy gate."""
    win, hop = cfg.win_length, cfg.hop_length
    frame_rate = w.sample_rate / hop
    if len(w.samples) < win:
        empty = np.zeros(0)
        return VoicingTrack(empty.astype(bool), empty, frame_rate)
    frames = frame_signal(w.samples, win, hop)
    frames = frames - frames.mean(axis=1, keepdims=True)
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    active = rms > 1e-10
    if not active.any():
        n = len(frames)
        return VoicingTrack(np.zeros(n, dtype=bool), np.full(n, np.nan), frame_rate)
    gate = cfg.voicing_energy_ratio * np.median(rms[active])

    lag_min = int(np.floor(w.sample_rate / cfg.f0_max))
    lag_max = min(int(np.ceil(w.sample_rate / cfg.f0_min)), win - 2)
    rho = _normalized_lag_correlation(frames, lag_min, lag_max)
    best = rho.max(axis=1)
    # earliest local peak reaching 85% of the best guards against octave errors
    is_peak = np.zeros_like(rho, dtype=bool)
    is_peak[:, 1:-1] = (rho[:, 1:-1] >= rho[:, :-2]) & (rho[:, 1:-1] >= rho[:, 2:])
    is_peak[np.arange(len(rho)), rho.argmax(axis=1)] = True
    strong = is_peak & (rho >= 0.85 * best[:, None])
    pick = strong.argmax(axis=1)

    rows = np.arange(len(rho))
    lag = pick.astype(np.float64)
    inner = (pick > 0) & (pick < rho.shape[1] - 1)
    y0 = rho[rows[inner], pick[inner] - 1]
    y1 = rho[rows[inner], pick[inner]]
    y2 = rho[rows[inner], pick[inner] + 1]
    den = y0 - 2 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(den < 0, 0.5 * (y0 - y2) / den, 0.0)
    lag[inner] += np.clip(shift, -0.5, 0.5)
    f0 = w.sample_rate / (lag + lag_min)

    voiced = (best > cfg.voicing_threshold) & (rms > gate) & (f0 >= cfg.f0_min) & (f0 <= cfg.f0_max)
    return VoicingTrack(voiced, np.where(voiced, f0, np.nan), frame_rate)


def lpc(frame: np.ndarray, order: int) -> np.ndarray | None:
    """Autocorrelation-method LPC polynomial ``[1, a1, ..., ap]``."""
    r = np.correlate(frame, frame, mode="full")[len(frame) - 1:len(frame) + order]
    if r[0] <= 0:
        return None
    r = r.copy()
    r[0] *= 1.0 + 1e-9  # white-noise correction keeps the Toeplitz system definite
    try:
        a = linalg.solve_toeplitz(r[:order], -r[1:order + 1])
    except (linalg.LinAlgError, ValueError):
        return None
    return np.concatenate(([1.0], a))


def estimate_formants(w: Waveform, v: VoicingTrack, cfg: DspConfig = DspConfig()) -> FormantTrack:
    """F1/F2 per voiced frame from the roots of an LPC polynomial."""
    n = len(v.voiced)
    f1 = np.full(n, np.nan)
    f2 = np.full(n, np.nan)
    if n == 0 or not v.voiced.any():
        return FormantTrack(f1, f2)
    win, hop = cfg.win_length, cfg.hop_length
    x = np.append(w.samples[0], w.samples[1:] - cfg.preemphasis * w.samples[:-1])
    frames = frame_signal(x, win, hop)[:n]
    window = np.hamming(win)
    fs = w.sample_rate
    for t in np.flatnonzero(v.voiced):
        a = lpc(frames[t] * window, cfg.lpc_order)
        if a is None:
            continue
        roots = np.roots(a)
        roots = roots[np.imag(roots) > 0]
        freqs = np.angle(roots) * fs / (2 * np.pi)
        bws = -np.log(np.abs(roots)) * fs / np.pi
        keep = (bws < cfg.formant_max_bandwidth) & (freqs >= cfg.formant_min_hz) & (freqs <= cfg.formant_max_hz)
        cand = np.sort(freqs[keep])
        if cand.size >= 2 and cand[0] < cand[1]:
            f1[t], f2[t] = cand[0], cand[1]
    return FormantTrack(f1, f2)


# ---------------------------------------------------------------------------
# Loudness and long-term spectrum
# ---------------------------------------------------------------------------

def loudness_contour(w: Waveform, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Per-frame RMS level in dB, floored and smoothed by a centred moving average."""
    win, hop = cfg.win_length, cfg.hop_length
    x = w.samples
    if len(x) == 0:
        raise ValueError("loudness contour of an empty waveform")
    if len(x) < win:
        x = np.pad(x, (0, win - len(x)))
    frames = frame_signal(x, win, hop)
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    with np.errstate(divide="ignore"):
        db = np.maximum(20 * np.log10(rms), cfg.loudness_floor_db)
    width = int(round(cfg.loudness_smooth_ms / cfg.hop_ms)) | 1
    return ndimage.uniform_filter1d(db, size=width, mode="nearest")


def count_loudness_peaks(contour, frame_rate: float, duration_s: float,
                         prominence_db: float = 1.2) -> float:
    """Local maxima of ``contour`` with at least ``prominence_db`` prominence, per second."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    return len(loudness_peaks(contour, prominence_db)) / duration_s


def loudness_peaks(contour, prominence_db: float = 1.2) -> np.ndarray:
    """Indices of contour maxima rising at least ``prominence_db`` above their valleys.

    A side of a peak that runs into the end of the contour without meeting
    a higher point is ignored, so peaks cut by the recording boundary are
    judged by the valley on their other side. A peak higher than everything
    else is judged against the lower of its two valleys.
    """
    c = np.asarray(contour, dtype=np.float64)
    peaks, _ = sps.find_peaks(c)
    if peaks.size == 0:
        return peaks
    _, lb, rb = sps.peak_prominences(c, peaks)
    before = np.concatenate(([-np.inf], np.maximum.accumulate(c)[:-1]))
    after = np.concatenate((np.maximum.accumulate(c[::-1])[::-1][1:], [-np.inf]))
    left_closed = before[peaks] > c[peaks]
    right_closed = after[peaks] > c[peaks]
    lv, rv = c[lb], c[rb]
    base = np.where(left_closed & right_closed, np.maximum(lv, rv),
                    np.where(left_closed, lv, np.where(right_closed, rv, np.minimum(lv, rv))))
    return peaks[c[peaks] - base >= prominence_db]


def octave_band_edges(sample_rate: int, n_bands: int = 9) -> np.ndarray:
    """Band edges ``[0, e1, ..., nyquist]`` for centres 31.25 * 2**k Hz."""
    centres = 31.25 * 2.0 ** np.arange(n_bands)
    edges = np.concatenate(([0.0], centres[:-1] * np.sqrt(2.0), [sample_rate / 2.0]))
    return edges


def octave_band_powers(s: Spectrogram, gate_db: float = -60.0, floor_db: float = -120.0) -> np.ndarray:
    """Mean power (dB) in nine octave bands over frames whose level exceeds ``gate_db``.

    Bin power is normalised so that summing all bins of a frame gives the
    frame's mean-square value; each band owns the bins with
    ``lower < f <= upper``.
    """
    edges = octave_band_edges(s.sample_rate)
    power = s.magnitudes ** 2
    nfft = 2 * (power.shape[1] - 1)
    scale = np.full(power.shape[1], 2.0)
    scale[0] = scale[-1] = 1.0
    power = power * scale / nfft / np.sum(s.window ** 2)
    with np.errstate(divide="ignore"):
        level = 20 * np.log10(s.frame_rms())
    active = level > gate_db
    out = np.full(len(edges) - 1, floor_db)
    if not active.any():
        return out
    mean_power = power[active].mean(axis=0)
    for b in range(len(edges) - 1):
        sel = (s.bin_freqs > edges[b]) & (s.bin_freqs <= edges[b + 1])
        total = mean_power[sel].sum()
        if total > 0:
            out[b] = max(10 * np.log10(total), floor_db)
    return out


def descriptive_stats(x) -> StatsQuad:
    """Population mean, standard deviation, excess kurtosis and skewness.

    Sums are correctly rounded, so the result does not depend on input order.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("statistics of an empty sequence")
    n = x.size
    mean = math.fsum(x) / n
    d = x - mean
    m2 = math.fsum(d * d) / n
    if m2 <= (1e-13 * abs(mean)) ** 2:
        return StatsQuad(mean, 0.0, 0.0, 0.0)
    sd = math.sqrt(m2)
    z = d / sd  # standardize first so tiny spreads do not underflow m2**2
    return StatsQuad(mean, sd, math.fsum(z ** 4) / n - 3.0, math.fsum(z ** 3) / n)
