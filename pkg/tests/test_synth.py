import numpy as np
import pytest

from trustsense import schema
from trustsense.exceptions import ParameterError
from trustsense.signals import extract_features
from trustsense.synth import (
    SynthesisSpec,
    load_synthesis_config,
    parse_synthesis_config,
    synth_corpus,
    synth_generate,
)


def test_deterministic():
    spec = SynthesisSpec()
    a, la = synth_generate(spec, 11, label=1)
    b, lb = synth_generate(spec, 11, label=1)
    assert la == lb == 1
    for ch in schema.MONTAGE:
        assert np.array_equal(a.channels[ch], b.channels[ch])


def test_seed_sensitive():
    spec = SynthesisSpec()
    a, _ = synth_generate(spec, 1, label=0)
    b, _ = synth_generate(spec, 2, label=0)
    assert not np.array_equal(a.channels["C4"], b.channels["C4"])


def test_shape_and_label_draw():
    spec = SynthesisSpec(sampling_rate=64.0, duration_s=3.0)
    rec, label = synth_generate(spec, 5)
    assert label in (0, 1)
    assert set(rec.channels) == set(schema.MONTAGE)
    assert all(v.shape == (192,) for v in rec.channels.values())
    assert np.all(rec.channels[schema.GSR_CHANNEL] >= 0)


def test_corpus_layout():
    t = synth_corpus(SynthesisSpec(), 6, n_subjects=4, seed=3)
    assert len(t) == 12
    assert t.columns == schema.FEATURE_NAMES
    assert t.y.tolist() == [0, 1] * 6
    assert t.subjects.tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 0, 0, 1, 1]
    again = synth_corpus(SynthesisSpec(), 6, n_subjects=4, seed=3)
    assert np.array_equal(t.X, again.X)


@pytest.mark.slow
def test_planted_separation():
    # The strongest planted effect must give Cohen's d of at least 1.
    t = synth_corpus(SynthesisSpec(), 500, seed=1)
    col = t.X[:, schema.FEATURE_NAMES.index("Variance of Beta band - C4")]
    a, b = col[t.y == 1], col[t.y == 0]
    pooled = np.sqrt((a.var(ddof=1) + b.var(ddof=1)) / 2)
    assert (a.mean() - b.mean()) / pooled >= 1.0


def test_features_finite():
    rec, label = synth_generate(SynthesisSpec(), 4, label=1)
    fv = extract_features(rec, label=label)
    assert np.all(np.isfinite(fv.values))
    assert not fv.degenerate


class TestConfig:
    def test_parse(self):
        spec = parse_synthesis_config(
            """
            # comment
            sampling_rate = 256
            seed = 9
            coupling.trust = 0.75
            gsr_event_rate.distrust = 0.1
            band_gain.trust.Beta.C4 = 1.6
            band_gain.0.Alpha.* = 0.9   # every channel
            band_amplitude.Theta = 12
            """
        )
        assert spec.sampling_rate == 256.0
        assert spec.seed == 9
        assert spec.coupling[1] == 0.75
        assert spec.gsr_event_rate[0] == 0.1
        assert spec.gain(1, "Beta", "C4") == 1.6
        assert all(spec.gain(0, "Alpha", ch) == 0.9 for ch in schema.EEG_CHANNELS)
        assert spec.band_amplitude["Theta"] == 12.0
        # Untouched defaults survive.
        assert spec.gain(1, "Beta", "C3") == SynthesisSpec().gain(1, "Beta", "C3")

    def test_file(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("noise_level = 0.5\n")
        assert load_synthesis_config(path).noise_level == 0.5

    @pytest.mark.parametrize(
        "text",
        [
            "bogus = 1",
            "sampling_rate",
            "sampling_rate = fast",
            "band_gain.trust.Beta.Fz = 1",
            "band_gain.maybe.Beta.C4 = 1",
            "coupling.trust = 1.0",
            "sampling_rate = 0",
        ],
    )
    def test_errors(self, text):
        with pytest.raises(ParameterError):
            parse_synthesis_config(text)


def test_corpus_rejects_empty():
    with pytest.raises(ParameterError):
        synth_corpus(SynthesisSpec(), 0)
