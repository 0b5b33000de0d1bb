"""Seeded synthetic EEG/GSR recordings with class-conditional structure.

This stands in for data that cannot be redistributed. The generator plants
label-dependent differences in the quantities the reference feature list
relies on: central-channel beta power, mean frequency, inter-channel
coupling, parietal peak-to-peak, POz delta power and GSR phasic activity.

Config files are plain ``key = value`` lines (``#`` starts a comment)::

    sampling_rate = 128
    duration_s = 2
    noise_level = 1.0
    seed = 7
    coupling.trust = 0.75
    gsr_event_rate.distrust = 0.2
    band_gain.trust.Beta.C4 = 1.6
    band_gain.trust.Beta.* = 1.1     # every EEG channel
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import schema
from .dataset import FeatureTable
from .exceptions import ParameterError
from .signals import SignalRecording, extract_features

# Non-overlapping generation bands; feature extraction keeps the overlapping ones.
_GEN_BANDS = {"Delta": (0.5, 4.0), "Theta": (4.0, 8.0), "Alpha": (8.0, 12.0), "Beta": (12.0, 30.0)}
_CLASS_NAMES = {"trust": 1, "distrust": 0}
_COUPLED = ("F3", "F4", "C3", "C4")


def _default_amplitudes():
    return {"Delta": 20.0, "Theta": 10.0, "Alpha": 8.0, "Beta": 4.0}


def _default_gains():
    return {
        (1, "Beta", "C3"): 1.2,
        (1, "Beta", "C4"): 1.4,
        (1, "Beta", "Cz"): 1.15,
        (1, "Beta", "P4"): 1.15,
        (1, "Theta", "P3"): 1.15,
        (0, "Delta", "POz"): 1.15,
    }


@dataclass(frozen=True)
class SynthesisSpec:
    """Generator parameters; amplitudes in microvolts (EEG) and microsiemens (GSR)."""

    sampling_rate: float = 128.0
    duration_s: float = 2.0
    noise_level: float = 1.0
    seed: int = 0
    band_amplitude: dict = field(default_factory=_default_amplitudes)
    # (label, band, channel) -> amplitude multiplier; missing keys mean 1.
    band_gain: dict = field(default_factory=_default_gains)
    coupling: dict = field(default_factory=lambda: {1: 0.6, 0: 0.45})
    gsr_event_rate: dict = field(default_factory=lambda: {1: 0.6, 0: 0.25})
    gsr_event_amplitude: float = 0.4
    gsr_level: float = 5.0
    subject_variability: float = 0.15

    def __post_init__(self):
        if not self.sampling_rate > 0:
            raise ParameterError(f"sampling_rate must be positive, got {self.sampling_rate}")
        if not self.duration_s > 0:
            raise ParameterError(f"duration_s must be positive, got {self.duration_s}")
        if self.n_samples < 4:
            raise ParameterError("duration_s * sampling_rate must give at least 4 samples")
        if self.noise_level < 0 or self.subject_variability < 0:
            raise ParameterError("noise_level and subject_variability must be nonnegative")
        for label, c in self.coupling.items():
            if not 0.0 <= c < 1.0:
                raise ParameterError(f"coupling for class {label} must lie in [0, 1), got {c}")
        if any(r < 0 for r in self.gsr_event_rate.values()):
            raise ParameterError("gsr_event_rate must be nonnegative")

    @property
    def n_samples(self):
        return int(round(self.sampling_rate * self.duration_s))

    def gain(self, label, band, channel):
        return self.band_gain.get((label, band, channel), 1.0)


def _class_key(token):
    try:
        return _CLASS_NAMES[token] if token in _CLASS_NAMES else int(token)
    except ValueError:
        raise ParameterError(f"unknown class {token!r}") from None


def parse_synthesis_config(text, base=None):
    """Parse ``key = value`` text into a :class:`SynthesisSpec` (starting from ``base``)."""
    spec = base or SynthesisSpec()
    scalars = {f.name for f in fields(SynthesisSpec)} - {
        "band_amplitude", "band_gain", "coupling", "gsr_event_rate"
    }
    updates = {}
    amps = dict(spec.band_amplitude)
    gains = dict(spec.band_gain)
    coupling = dict(spec.coupling)
    rates = dict(spec.gsr_event_rate)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            number = float(value)
        except ValueError:
            raise ParameterError(f"line {lineno}: value {value!r} is not a number") from None
        parts = key.split(".")
        if key in scalars:
            updates[key] = int(number) if key == "seed" else number
        elif parts[0] == "band_amplitude" and len(parts) == 2 and parts[1] in _GEN_BANDS:
            amps[parts[1]] = number
        elif parts[0] == "band_gain" and len(parts) == 4 and parts[2] in _GEN_BANDS:
            label = _class_key(parts[1])
            channels = schema.EEG_CHANNELS if parts[3] == "*" else (parts[3],)
            for ch in channels:
                if ch not in schema.EEG_CHANNELS:
                    raise ParameterError(f"line {lineno}: unknown EEG channel {ch!r}")
                gains[label, parts[2], ch] = number
        elif parts[0] == "coupling" and len(parts) == 2:
            coupling[_class_key(parts[1])] = number
        elif parts[0] == "gsr_event_rate" and len(parts) == 2:
            rates[_class_key(parts[1])] = number
        else:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
    return replace(
        spec, band_amplitude=amps, band_gain=gains, coupling=coupling, gsr_event_rate=rates,
        **updates,
    )


def load_synthesis_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_synthesis_config(fh.read(), base=base)


def _shaping_filter(spec, label, channel, freqs, scale):
    """Per-bin amplitude so each generation band's component has the target rms."""
    n_half = freqs.size - 1
    h = np.zeros_like(freqs)
    for band, (lo, hi) in _GEN_BANDS.items():
        mask = (freqs >= lo) & (freqs < hi)
        if not mask.any():
            continue
        frac = mask.sum() / n_half
        amp = spec.band_amplitude.get(band, 0.0) * spec.gain(label, band, channel) * scale
        h[mask] = amp / np.sqrt(frac)
    return h


def _gsr_trace(spec, label, rng, level):
    n = spec.n_samples
    t = np.arange(n) / spec.sampling_rate
    drift = rng.normal(0.0, 0.05)
    x = level + drift * t
    n_events = rng.poisson(spec.gsr_event_rate.get(label, 0.0) * spec.duration_s)
    rise, decay = 0.75, 2.0
    t_peak = np.log(decay / rise) * rise * decay / (decay - rise)
    peak = np.exp(-t_peak / decay) - np.exp(-t_peak / rise)
    for onset in np.sort(rng.uniform(-1.0, spec.duration_s, size=n_events)):
        dt = np.clip(t - onset, 0.0, None)
        amp = spec.gsr_event_amplitude * rng.lognormal(0.0, 0.3)
        x += amp * (np.exp(-dt / decay) - np.exp(-dt / rise)) / peak
    x += rng.normal(0.0, 0.005, size=n)
    return np.clip(x, 0.0, None)


def synth_generate(spec, seed, label=None, subject_id=0):
    """Draw one recording; returns ``(SignalRecording, label)``.

    ``label`` is drawn from the seed when not given. Subject-level amplitude
    and conductance offsets depend only on ``(spec.seed, subject_id)``.
    """
    rng = np.random.default_rng([int(seed), 0])
    if label is None:
        label = int(rng.integers(0, 2))
    if label not in (0, 1):
        raise ParameterError(f"label must be 0 or 1, got {label!r}")
    subj = np.random.default_rng([int(spec.seed), 1, int(subject_id)])
    subject_scale = np.exp(subj.normal(0.0, spec.subject_variability, size=len(schema.EEG_CHANNELS)))
    gsr_level = spec.gsr_level * np.exp(subj.normal(0.0, 0.3))

    n = spec.n_samples
    freqs = np.fft.rfftfreq(n, d=1.0 / spec.sampling_rate)
    shared = rng.standard_normal(n)
    c = spec.coupling.get(label, 0.0)
    channels = {}
    for ch, scale in zip(schema.EEG_CHANNELS, subject_scale):
        own = rng.standard_normal(n)
        white = np.sqrt(1.0 - c * c) * own + c * shared if ch in _COUPLED else own
        shaped = np.fft.irfft(np.fft.rfft(white) * _shaping_filter(spec, label, ch, freqs, scale), n=n)
        channels[ch] = shaped + rng.normal(0.0, spec.noise_level, size=n)
    channels[schema.GSR_CHANNEL] = _gsr_trace(spec, label, rng, gsr_level)
    return SignalRecording(channels, spec.sampling_rate), label


def synth_corpus(spec, n_per_class, n_subjects=45, seed=None):
    """Balanced feature table of ``2 * n_per_class`` synthetic records.

    Record ``i`` has label ``i % 2`` and subject ``(i // 2) % n_subjects``;
    its generator seed is derived from ``(seed, i)``.
    """
    if n_per_class < 1:
        raise ParameterError(f"n_per_class must be at least 1, got {n_per_class}")
    if n_subjects < 1:
        raise ParameterError(f"n_subjects must be at least 1, got {n_subjects}")
    if seed is not None:
        spec = replace(spec, seed=int(seed))
    vectors = []
    for i in range(2 * n_per_class):
        label = i % 2
        subject = (i // 2) % n_subjects
        record_seed = np.random.SeedSequence([spec.seed, i]).generate_state(1)[0]
        rec, _ = synth_generate(spec, int(record_seed), label=label, subject_id=subject)
        vectors.append(extract_features(rec, label=label, subject_id=subject))
    return FeatureTable.from_vectors(vectors)
