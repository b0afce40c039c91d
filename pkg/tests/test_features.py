import numpy as np
import pytest
from scipy import stats

import signals as S
from msdclass import dsp
from msdclass.config import Config
from msdclass.dataset import Waveform
from msdclass.errors import DataError, FeatureExtractionError
from msdclass.features import (F1_NAMES, F2_NAMES, F3_NAMES, F4_NAMES, FEATURE_NAMES, FeatureMatrix, FeatureVector,
                               extract_features, formant_voicing_features, loudness_ltas_features,
                               read_feature_csv, spectral_sparsity_features, temporal_sparsity_features,
                               voiced_regions, write_feature_csv)
from msdclass.labels import ClassLabel


def scaled(w, c):
    return Waveform(c * w.samples, w.sample_rate)


def test_names_and_dimensions():
    assert (len(F1_NAMES), len(F2_NAMES), len(F3_NAMES), len(F4_NAMES)) == (4, 10, 10, 4)
    assert len(FEATURE_NAMES) == 28 == len(set(FEATURE_NAMES))
    assert FEATURE_NAMES[:2] == ("spectral_sparsity_mean", "spectral_sparsity_std")
    assert FEATURE_NAMES[-1] == "temporal_sparsity_skewness"


def test_feature_vector_rejects_wrong_sizes():
    with pytest.raises(ValueError):
        FeatureVector(np.zeros(3), np.zeros(10), np.zeros(10), np.zeros(4))


# --- f1 / f4 -----------------------------------------------------------------

def test_spectral_sparsity_white_noise_concentrated():
    f1 = spectral_sparsity_features(dsp.stft(S.white_noise(2.0)))
    assert f1[1] < 0.5 * f1[0]


def test_temporal_sparsity_stationary_noise_matches_generator():
    # STFT bins of white noise are complex Gaussian, so magnitudes are Rayleigh = Chi(2)
    f4 = temporal_sparsity_features(dsp.stft(S.white_noise(6.0, seed=3)))
    assert f4[0] == pytest.approx(2.0, rel=0.15)


def test_temporal_sparsity_lower_for_gated_noise():
    cont = S.white_noise(4.0, seed=4)
    t = np.arange(len(cont.samples)) / 16000
    gate = (np.sin(2 * np.pi * 4 * t) > 0).astype(float)
    gated = Waveform(cont.samples * (gate + 1e-3), 16000)
    f_cont = temporal_sparsity_features(dsp.stft(cont))
    f_gated = temporal_sparsity_features(dsp.stft(gated))
    assert f_gated[0] < f_cont[0]


@pytest.mark.parametrize("c", [10.0, 0.01, 3.7])
def test_sparsity_scale_invariant(c):
    w = S.speech_like(2.0, seed=1)
    a, b = dsp.stft(w), dsp.stft(scaled(w, c))
    np.testing.assert_array_equal(spectral_sparsity_features(a), spectral_sparsity_features(b))
    np.testing.assert_array_equal(temporal_sparsity_features(a), temporal_sparsity_features(b))


def test_spectral_sparsity_changes_with_pauses():
    w = S.speech_like(3.0, seed=2)
    p = S.speech_like(3.0, seed=2, pauses=[(0.9, 0.7), (2.1, 0.5)])
    a = spectral_sparsity_features(dsp.stft(w))
    b = spectral_sparsity_features(dsp.stft(p))
    assert not np.array_equal(a, b)


def test_sparsity_skips_silent_frames_and_bins():
    w = S.white_noise(1.0, seed=6)
    padded = Waveform(np.concatenate([np.zeros(16000), w.samples, np.zeros(16000)]), 16000)
    s_pad = dsp.stft(padded)
    silent = s_pad.magnitudes.max(axis=1) == 0
    assert silent.sum() > 50
    manual = dsp.descriptive_stats(dsp.fit_chi_shapes(s_pad.magnitudes[~silent].T)).as_tuple()
    np.testing.assert_array_equal(spectral_sparsity_features(s_pad), manual)


def test_sparsity_errors_on_silence():
    s = dsp.stft(Waveform(np.zeros(16000), 16000))
    with pytest.raises(FeatureExtractionError, match="spectral sparsity"):
        spectral_sparsity_features(s)
    with pytest.raises(FeatureExtractionError, match="temporal sparsity"):
        temporal_sparsity_features(s)


# --- f2 ----------------------------------------------------------------------

def test_voiced_regions_merge_and_minimum():
    v = np.array([1, 1, 1, 0, 0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 1], dtype=bool)
    assert voiced_regions(v) == [(0, 7), (16, 19)]
    assert voiced_regions(v, merge_gap=0) == [(0, 3), (16, 19)]
    assert voiced_regions(np.zeros(5, dtype=bool)) == []


def test_region_durations_population_std():
    frame_rate = 100.0
    voiced = np.zeros(200, dtype=bool)
    voiced[10:50] = True
    voiced[100:160] = True
    f1 = np.where(voiced, 700.0, np.nan)
    f2 = np.where(voiced, 1200.0, np.nan)
    out = formant_voicing_features(dsp.FormantTrack(f1, f2), dsp.VoicingTrack(voiced, f1, frame_rate), frame_rate)
    np.testing.assert_allclose(out, [700, 0, 0, 0, 1200, 0, 0, 0, 0.5, 0.1], atol=1e-12)


def test_held_vowel_single_region():
    w = S.vowel(seconds=1.0)
    v = dsp.detect_voicing(w)
    s = dsp.stft(w)
    out = formant_voicing_features(dsp.estimate_formants(w, v), v, s.frame_rate)
    # 97 frames of 10 ms cover 0.97 s of a 1 s vowel
    assert out[8] == pytest.approx(1.0, abs=0.05)
    assert out[9] == 0.0


def test_formant_features_need_voicing():
    n = 100
    none = np.zeros(n, dtype=bool)
    nan = np.full(n, np.nan)
    with pytest.raises(FeatureExtractionError, match="voiced frames"):
        formant_voicing_features(dsp.FormantTrack(nan, nan), dsp.VoicingTrack(none, nan, 100.0), 100.0)


# --- f3 ----------------------------------------------------------------------

def test_loudness_ltas_am_tone():
    w = S.am_tone(4.0, 5.0)
    out = loudness_ltas_features(w, dsp.stft(w))
    assert out[0] == pytest.approx(4.0, abs=0.4)
    assert np.argmax(out[1:]) == 5


def test_loudness_ltas_silence():
    w = Waveform(np.zeros(32000), 16000)
    out = loudness_ltas_features(w, dsp.stft(w))
    assert out[0] == 0.0 and np.all(out[1:] == -120.0)


def test_loudness_ltas_amplitude_doubling():
    w = S.speech_like(2.0, seed=5)
    a = loudness_ltas_features(w, dsp.stft(w))
    w2 = scaled(w, 2.0)
    b = loudness_ltas_features(w2, dsp.stft(w2))
    assert a[0] == b[0]
    np.testing.assert_allclose(b[1:] - a[1:], 20 * np.log10(2.0), atol=1e-9)


# --- full vector --------------------------------------------------------------

def test_extract_is_concatenation_and_deterministic():
    w = S.speech_like(3.0, seed=7, pauses=[(1.2, 0.4)])
    fv = extract_features(w)
    s = dsp.stft(w)
    v = dsp.detect_voicing(w)
    cfg = Config()
    expected = np.concatenate([
        spectral_sparsity_features(s, cfg),
        formant_voicing_features(dsp.estimate_formants(w, v), v, s.frame_rate),
        loudness_ltas_features(w, s),
        temporal_sparsity_features(s, cfg),
    ])
    np.testing.assert_array_equal(fv.values, expected)
    np.testing.assert_array_equal(extract_features(w).values, fv.values)
    assert fv.values.shape == (28,) and np.all(np.isfinite(fv.values))


@pytest.mark.parametrize("c", [0.5, 1.7])
def test_extract_amplitude_behaviour(c):
    w = S.speech_like(3.0, seed=8)
    a, b = extract_features(w).values, extract_features(scaled(w, c)).values
    np.testing.assert_array_equal(a[:4], b[:4])
    np.testing.assert_array_equal(a[24:], b[24:])
    assert a[14] == b[14]
    np.testing.assert_allclose(b[15:24] - a[15:24], 20 * np.log10(c), atol=1e-9)
    # voicing decisions are unchanged at these scales, so f2 agrees up to rounding
    np.testing.assert_allclose(b[4:14], a[4:14], rtol=1e-6, atol=1e-9)


def test_extract_error_names_recording():
    with pytest.raises(FeatureExtractionError) as err:
        extract_features(Waveform(np.zeros(16000), 16000), recording_id="S042")
    assert err.value.recording_id == "S042" and "S042" in str(err.value)


# --- CSV ---------------------------------------------------------------------

def small_matrix():
    rng = np.random.default_rng(0)
    labels = [ClassLabel.NEUROTYPICAL, ClassLabel.DYSARTHRIA, ClassLabel.AOS]
    return FeatureMatrix(["a", "b", "c"], labels, rng.standard_normal((3, 28)) * 1e3)


def test_csv_round_trip_exact(tmp_path):
    fm = small_matrix()
    p = tmp_path / "f.csv"
    write_feature_csv(p, fm)
    back = read_feature_csv(p, require_standard=True)
    assert back.ids == fm.ids and back.labels == fm.labels and back.names == FEATURE_NAMES
    np.testing.assert_array_equal(back.values, fm.values)
    header = p.read_text().splitlines()[0].split(",")
    assert header[:2] == ["id", "label"] and len(header) == 30


def test_csv_rewrite_is_byte_identical(tmp_path):
    fm = small_matrix()
    write_feature_csv(tmp_path / "a.csv", fm)
    write_feature_csv(tmp_path / "b.csv", read_feature_csv(tmp_path / "a.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_csv_external_feature_import(tmp_path):
    p = tmp_path / "ext.csv"
    p.write_text("label,id,egemaps_1,egemaps_2\naos,x,1.5,2\nneurotypical,y,3,4e-3\n")
    fm = read_feature_csv(p)
    assert fm.names == ("egemaps_1", "egemaps_2") and fm.ids == ["x", "y"]
    np.testing.assert_array_equal(fm.values, [[1.5, 2.0], [3.0, 0.004]])
    with pytest.raises(DataError, match="standard"):
        read_feature_csv(p, require_standard=True)


@pytest.mark.parametrize("body, message", [
    ("id,label,a\nx,aos,notanumber\n", "bad.csv:2"),
    ("id,label,a\nx,unknown,1\n", "unknown"),
    ("id,a\nx,1\n", "label"),
    ("id,label,a\nx,aos,1\nx,aos,2\n", "duplicate"),
    ("id,label,a\nx,aos,nan\n", "finite"),
])
def test_csv_errors(tmp_path, body, message):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=message):
        read_feature_csv(p)
