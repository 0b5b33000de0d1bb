"""Time- and frequency-domain features of EEG/GSR recordings.

Conventions used throughout:

* variance is the population variance (divide by ``n``);
* spectra come from the one-sided real DFT, bins ``0 .. n//2``;
* bands are half-open ``[low, high)`` in Hz (see :data:`schema.BANDS`).
"""

from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import find_peaks
from sklearn.base import BaseEstimator, TransformerMixin

from . import schema
from .exceptions import (
    EmptyBandError,
    InvalidSignalError,
    InvalidWindowError,
    SchemaError,
    UndefinedCorrelationError,
    UndefinedSpectrumError,
)

DEFAULT_SAMPLING_RATE = 128.0
DEFAULT_WINDOW_S = 2.0
DEFAULT_TONIC_WINDOW_S = 4.0
# Minimum prominence (microsiemens) for a phasic bump to count as a response.
PHASIC_PEAK_PROMINENCE = 0.05


@dataclass(frozen=True)
class FrequencyBand:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not (0.0 <= self.low_hz < self.high_hz):
            raise InvalidSignalError(
                f"band {self.name!r} needs 0 <= low < high, got [{self.low_hz}, {self.high_hz})"
            )

    def mask(self, freqs):
        return (freqs >= self.low_hz) & (freqs < self.high_hz)


CANONICAL_BANDS = tuple(FrequencyBand(name, lo, hi) for name, (lo, hi) in schema.BANDS.items())
BAND_BY_NAME = {b.name: b for b in CANONICAL_BANDS}


def _as_signal(samples, min_length=2):
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise InvalidSignalError(f"expected a 1-d sample sequence, got shape {x.shape}")
    if x.size < min_length:
        raise InvalidSignalError(f"need at least {min_length} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidSignalError("signal contains non-finite samples")
    return x


def _check_rate(sampling_rate):
    if not (np.isfinite(sampling_rate) and sampling_rate > 0):
        raise InvalidSignalError(f"sampling_rate must be positive, got {sampling_rate}")
    return float(sampling_rate)


@dataclass(frozen=True)
class SignalRecording:
    """Equal-length channels (EEG in microvolts, GSR in microsiemens) at one sampling rate."""

    channels: dict
    sampling_rate: float

    def __post_init__(self):
        _check_rate(self.sampling_rate)
        if not self.channels:
            raise InvalidSignalError("recording has no channels")
        frozen = {}
        length = None
        for name, samples in self.channels.items():
            if name not in schema.MONTAGE:
                raise SchemaError(f"unknown channel {name!r}; expected one of {schema.MONTAGE}")
            x = _as_signal(samples).copy()
            x.flags.writeable = False
            if length is None:
                length = x.size
            elif x.size != length:
                raise InvalidSignalError(
                    f"channel {name!r} has {x.size} samples, expected {length}"
                )
            frozen[name] = x
        object.__setattr__(self, "channels", MappingProxyType(frozen))
        object.__setattr__(self, "sampling_rate", float(self.sampling_rate))

    @property
    def n_samples(self):
        return next(iter(self.channels.values())).size

    @property
    def duration(self):
        return self.n_samples / self.sampling_rate


@dataclass(frozen=True)
class FeatureVector:
    """Named feature values plus optional label (trust=1, distrust=0) and subject id.

    ``degenerate`` names the entries that were undefined for this input
    (flat channel, zero spectrum) and were emitted as 0.
    """

    names: tuple
    values: np.ndarray
    label: int = None
    subject_id: int = 0
    degenerate: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        names = tuple(self.names)
        values = np.array(self.values, dtype=float)
        if values.shape != (len(names),):
            raise SchemaError(f"{len(names)} names but values have shape {values.shape}")
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if not np.all(np.isfinite(values)):
            bad = [n for n, v in zip(names, values) if not np.isfinite(v)]
            raise SchemaError(f"non-finite feature values: {bad[:5]}")
        if self.label is not None and self.label not in (0, 1):
            raise SchemaError(f"label must be 0 or 1, got {self.label!r}")
        values.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "degenerate", frozenset(self.degenerate))

    def __getitem__(self, name):
        return self.values[self.names.index(name)]

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))


# --- single-channel operations ------------------------------------------------


def time_domain_features(samples):
    """Mean, variance, peak-to-peak, RMS and energy of one channel.

    Mean frequency needs the sampling rate and lives in :func:`mean_frequency`.
    """
    x = _as_signal(samples)
    mean = x.mean()
    energy = float(np.dot(x, x))
    return {
        "mean": float(mean),
        "variance": float(np.mean((x - mean) ** 2)),
        "peak_to_peak": float(x.max() - x.min()),
        "rms": float(np.sqrt(energy / x.size)),
        "signal_energy": energy,
    }


def _spectrum(x, sampling_rate):
    return np.fft.rfftfreq(x.size, d=1.0 / sampling_rate), np.fft.rfft(x)


def _centroid(freqs, spec):
    power = spec.real**2 + spec.imag**2
    total = power.sum()
    if total == 0.0:
        raise UndefinedSpectrumError("mean frequency is undefined for a zero-power signal")
    return float(np.dot(freqs, power) / total)


def mean_frequency(samples, sampling_rate):
    """Power-weighted spectral centroid in Hz over DFT bins 0..Nyquist."""
    x = _as_signal(samples, min_length=4)
    freqs, spec = _spectrum(x, _check_rate(sampling_rate))
    return _centroid(freqs, spec)


def _band_limit_from_spectrum(spec, freqs, n, band):
    mask = band.mask(freqs)
    if not mask.any():
        raise EmptyBandError(
            f"no DFT bin in {band.name} [{band.low_hz}, {band.high_hz}) Hz "
            f"(Nyquist {freqs[-1]:g} Hz, resolution {freqs[1] - freqs[0]:g} Hz)"
        )
    return np.fft.irfft(np.where(mask, spec, 0.0), n=n)


def band_limit(samples, sampling_rate, band):
    """Signal restricted to the DFT bins with ``low <= f < high``."""
    x = _as_signal(samples, min_length=4)
    freqs, spec = _spectrum(x, _check_rate(sampling_rate))
    return _band_limit_from_spectrum(spec, freqs, x.size, band)


def _sum_square_and_variance(y):
    return float(np.dot(y, y)), float(np.var(y))


def band_features(samples, sampling_rate, band):
    """``(sum_square, variance)`` of the band-limited signal."""
    return _sum_square_and_variance(band_limit(samples, sampling_rate, band))


def channel_correlation(a, b):
    """Pearson correlation of two equal-length channels."""
    a = _as_signal(a)
    b = _as_signal(b)
    if a.size != b.size:
        raise InvalidSignalError(f"length mismatch: {a.size} vs {b.size}")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.dot(da, da)
    sb = np.dot(db, db)
    if sa == 0.0 or sb == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance channel")
    r = np.dot(da, db) / np.sqrt(sa * sb)
    return float(np.clip(r, -1.0, 1.0))


def _median_window(tonic_window_s, sampling_rate):
    w = int(round(tonic_window_s * sampling_rate))
    if w < 1:
        raise InvalidWindowError(f"tonic window of {tonic_window_s} s is shorter than one sample")
    # Odd length keeps the window centred on each sample.
    return w if w % 2 else w + 1


def _moving_median(x, width):
    return median_filter(x, size=width, mode="nearest")


def gsr_decompose(samples, sampling_rate, tonic_window_s=DEFAULT_TONIC_WINDOW_S):
    """Split skin conductance into tonic (centred moving median) and phasic (residual).

    Returns ``(tonic, phasic, max_phasic)``; ``tonic + phasic`` is the input.
    """
    x = _as_signal(samples)
    rate = _check_rate(sampling_rate)
    if np.any(x < 0):
        raise InvalidSignalError("skin conductance must be nonnegative")
    if tonic_window_s * rate > x.size:
        raise InvalidWindowError(
            f"tonic window {tonic_window_s} s needs {tonic_window_s * rate:g} samples, "
            f"signal has {x.size}"
        )
    width = min(_median_window(tonic_window_s, rate), x.size if x.size % 2 else x.size - 1)
    tonic = _moving_median(x, width)
    phasic = x - tonic
    return tonic, phasic, float(phasic.max())


# --- whole-recording extraction -----------------------------------------------


def _channel_block(x, rate):
    """Time, spectral and band features of one EEG channel."""
    out = {}
    flags = set()
    td = time_domain_features(x)
    freqs, spec = _spectrum(x, rate)
    try:
        mf = _centroid(freqs, spec)
    except UndefinedSpectrumError:
        mf, flags = 0.0, {"Mean Frequency"}
    out.update(
        {
            "Mean": td["mean"],
            "Variance": td["variance"],
            "Peak-to-peak": td["peak_to_peak"],
            "RMS": td["rms"],
            "Energy": td["signal_energy"],
            "Mean Frequency": mf,
        }
    )
    mag = np.abs(spec) / x.size
    spectral = {
        "Mean": float(mag.mean()),
        "Variance": float(mag.var()),
        "Peak-to-peak": float(mag.max() - mag.min()),
        "RMS": float(np.sqrt(np.mean(mag**2))),
        "Energy": float(np.dot(mag, mag)),
    }
    bands = {}
    for band in CANONICAL_BANDS:
        y = _band_limit_from_spectrum(spec, freqs, x.size, band)
        bands[band.name] = _sum_square_and_variance(y)
    return out, spectral, bands, flags


def _gsr_block(x, rate, tonic_window_s):
    flags = set()
    # Short windows cannot hold the default tonic window; clamp it to the recording.
    window_s = min(tonic_window_s, x.size / rate)
    tonic, phasic, max_phasic = gsr_decompose(x, rate, window_s)
    td = time_domain_features(x)
    freqs, spec = _spectrum(x, rate)
    try:
        mf = _centroid(freqs, spec)
    except UndefinedSpectrumError:
        mf = 0.0
        flags.add("GSR_MeanFrequency")
    peaks, _ = find_peaks(phasic, prominence=PHASIC_PEAK_PROMINENCE)
    values = {
        "GSR_Mean": td["mean"],
        "GSR_Variance": td["variance"],
        "GSR_PeakToPeak": td["peak_to_peak"],
        "GSR_RMS": td["rms"],
        "GSR_Energy": td["signal_energy"],
        "GSR_MeanFrequency": mf,
        "GSR_TonicMean": float(tonic.mean()),
        "GSR_TonicVariance": float(tonic.var()),
        "GSR_PhasicMean": float(phasic.mean()),
        "GSR_PhasicVariance": float(phasic.var()),
        "GSR_PhasicRMS": float(np.sqrt(np.mean(phasic**2))),
        "GSR_PhasicEnergy": float(np.dot(phasic, phasic)),
        "GSR_MaxPhasic": max_phasic,
        "GSR_PhasicPeaks": float(peaks.size),
    }
    return values, flags


def extract_features(rec, label=None, subject_id=0, tonic_window_s=DEFAULT_TONIC_WINDOW_S):
    """Map a recording to the 200-entry :data:`schema.FEATURE_NAMES` vector.

    Undefined entries (flat channels, zero spectra) are emitted as 0 and
    listed in ``FeatureVector.degenerate``.
    """
    for ch in schema.MONTAGE:
        if ch not in rec.channels:
            raise SchemaError(f"recording is missing channel {ch!r}")
    if rec.n_samples < 4:
        raise InvalidSignalError("feature extraction needs at least 4 samples per channel")
    rate = rec.sampling_rate
    feats = {}
    degenerate = set()
    sum_squares = {}

    for ch in schema.EEG_CHANNELS:
        x = rec.channels[ch]
        timed, spectral, bands, flags = _channel_block(x, rate)
        for stat, value in timed.items():
            feats[schema.time_feature_name(stat, ch)] = value
        degenerate.update(schema.time_feature_name(stat, ch) for stat in flags)
        for stat, value in spectral.items():
            feats[schema.spectral_feature_name(stat, ch)] = value
        for band, (ss, var) in bands.items():
            feats[schema.band_feature_name("SumSquare", band, ch)] = ss
            feats[schema.band_feature_name("Variance", band, ch)] = var
            sum_squares[band, ch] = ss

    for a, b in schema.channel_pairs():
        name = schema.correlation_feature_name(a, b)
        try:
            feats[name] = channel_correlation(rec.channels[a], rec.channels[b])
        except UndefinedCorrelationError:
            feats[name] = 0.0
            degenerate.add(name)

    for left, right in schema.ASYMMETRY_PAIRS:
        for band in schema.ASYMMETRY_BANDS:
            name = schema.asymmetry_feature_name(band, left, right)
            lv, rv = sum_squares[band, left], sum_squares[band, right]
            if lv + rv == 0.0:
                feats[name] = 0.0
                degenerate.add(name)
            else:
                feats[name] = (rv - lv) / (rv + lv)

    gsr, flags = _gsr_block(rec.channels[schema.GSR_CHANNEL], rate, tonic_window_s)
    feats.update(gsr)
    degenerate.update(flags)

    values = [feats[name] for name in schema.FEATURE_NAMES]
    return FeatureVector(
        schema.FEATURE_NAMES, values, label=label, subject_id=subject_id, degenerate=degenerate
    )


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer from a sequence of :class:`SignalRecording` to a feature matrix.

    Parameters
    ----------
    tonic_window_s : float, default=4.0
        Moving-median window for the GSR tonic component, clamped to the
        recording length.
    """

    def __init__(self, tonic_window_s=DEFAULT_TONIC_WINDOW_S):
        self.tonic_window_s = tonic_window_s

    def fit(self, X, y=None):
        self.n_features_in_ = schema.N_FEATURES
        return self

    def transform(self, X):
        rows = [extract_features(rec, tonic_window_s=self.tonic_window_s).values for rec in X]
        return np.vstack(rows) if rows else np.empty((0, schema.N_FEATURES))

    def get_feature_names_out(self, input_features=None):
        return np.asarray(schema.FEATURE_NAMES, dtype=object)
