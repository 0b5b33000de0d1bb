"""The fixed 200-entry feature schema.

The order produced by :func:`build_feature_names` is canonical; the shipped
``feature_schema.txt`` is a one-name-per-line dump of it and CSV columns
follow the same order.

Families, in order:

* per EEG channel time-domain statistics (8 x 6 = 48)
* per EEG channel statistics of the DFT magnitude spectrum (8 x 5 = 40)
* per EEG channel, per band ``SumSquare`` and ``Variance`` of the
  band-limited signal (8 x 4 x 2 = 64)
* Pearson correlation for every EEG channel pair (28)
* hemispheric band-power asymmetry, Alpha and Beta, for F3/F4, C3/C4, P3/P4 (6)
* GSR statistics, including the tonic/phasic split (14)
"""

from importlib import resources
from itertools import combinations

EEG_CHANNELS = ("F3", "F4", "C3", "C4", "Cz", "P3", "P4", "POz")
GSR_CHANNEL = "GSR"
MONTAGE = EEG_CHANNELS + (GSR_CHANNEL,)

# Half-open [low, high) in Hz. Alpha and Beta overlap on 12-16 Hz.
BANDS = {
    "Delta": (0.0, 4.0),
    "Theta": (4.0, 8.0),
    "Alpha": (8.0, 16.0),
    "Beta": (12.0, 30.0),
}

ASYMMETRY_PAIRS = (("F3", "F4"), ("C3", "C4"), ("P3", "P4"))
ASYMMETRY_BANDS = ("Alpha", "Beta")

N_FEATURES = 200

TIME_STATS = ("Mean", "Variance", "Peak-to-peak", "RMS", "Energy", "Mean Frequency")
SPECTRAL_STATS = ("Mean", "Variance", "Peak-to-peak", "RMS", "Energy")
GSR_STATS = (
    "GSR_Mean",
    "GSR_Variance",
    "GSR_PeakToPeak",
    "GSR_RMS",
    "GSR_Energy",
    "GSR_MeanFrequency",
    "GSR_TonicMean",
    "GSR_TonicVariance",
    "GSR_PhasicMean",
    "GSR_PhasicVariance",
    "GSR_PhasicRMS",
    "GSR_PhasicEnergy",
    "GSR_MaxPhasic",
    "GSR_PhasicPeaks",
)

# The ten features reported as the final reduced list.
REFERENCE_FEATURES = (
    "Peak-to-peak - P3",
    "Mean Frequency – P4",
    "Mean Frequency – C3",
    "Mean Frequency – C4",
    "Correlation - C3_C4",
    "Correlation - C3_F3",
    "Correlation - C4_F4",
    "GSR_MaxPhasic",
    "SumSquare of Delta band - POz",
    "Variance of Beta band - C4",
)


def time_feature_name(stat, channel):
    # "Mean Frequency" is written with an en dash in the reference feature list.
    sep = " – " if stat == "Mean Frequency" else " - "
    return f"{stat}{sep}{channel}"


def spectral_feature_name(stat, channel):
    return f"Spectral {stat} - {channel}"


def band_feature_name(kind, band, channel):
    return f"{kind} of {band} band - {channel}"


def pair_name(a, b):
    """Channel pair label; the two names are sorted, e.g. ``C3_F3``."""
    first, second = sorted((a, b))
    return f"{first}_{second}"


def correlation_feature_name(a, b):
    return f"Correlation - {pair_name(a, b)}"


def asymmetry_feature_name(band, left, right):
    return f"Asymmetry of {band} band - {left}_{right}"


def channel_pairs():
    return list(combinations(EEG_CHANNELS, 2))


def build_feature_names():
    names = []
    for ch in EEG_CHANNELS:
        names.extend(time_feature_name(stat, ch) for stat in TIME_STATS)
    for ch in EEG_CHANNELS:
        names.extend(spectral_feature_name(stat, ch) for stat in SPECTRAL_STATS)
    for ch in EEG_CHANNELS:
        for band in BANDS:
            names.append(band_feature_name("SumSquare", band, ch))
            names.append(band_feature_name("Variance", band, ch))
    names.extend(correlation_feature_name(a, b) for a, b in channel_pairs())
    for left, right in ASYMMETRY_PAIRS:
        names.extend(asymmetry_feature_name(band, left, right) for band in ASYMMETRY_BANDS)
    names.extend(GSR_STATS)
    if len(names) != N_FEATURES or len(set(names)) != N_FEATURES:
        raise AssertionError("feature schema must hold 200 unique names")
    return tuple(names)


FEATURE_NAMES = build_feature_names()


def load_schema_file():
    """Read the shipped schema file (one feature name per line)."""
    text = resources.files("trustsense").joinpath("feature_schema.txt").read_text("utf-8")
    return tuple(line for line in text.splitlines() if line.strip())


def read_feature_list(path):
    """Read a feature-subset file: one name per line, blank lines and ``#`` comments ignored."""
    with open(path, encoding="utf-8") as fh:
        lines = [line.strip() for line in fh]
    return [line for line in lines if line and not line.startswith("#")]


def write_feature_list(path, names):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name in names:
            fh.write(f"{name}\n")
