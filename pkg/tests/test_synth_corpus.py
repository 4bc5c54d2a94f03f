from dataclasses import astuple

import numpy as np
import pytest

from replaydet.errors import MalformedLine, PreconditionViolation
from replaydet.features import extract_raw
from replaydet.synth_corpus import (ReplayChannelConfig, apply_replay_channel, build_corpus, generate_bonafide,
                                    read_manifest)
from replaydet.vocoder import SimpleVocoder

from conftest import band_energy


def test_bonafide_is_deterministic_and_in_range():
    a, b = generate_bonafide(7, 2.0), generate_bonafide(7, 2.0)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert len(a) == 32000 and a.peak <= 1.0
    assert not np.array_equal(a.samples, generate_bonafide(8, 2.0).samples)
    with pytest.raises(PreconditionViolation):
        generate_bonafide(0, 0.5)


def test_bonafide_pitch_range():
    # the simple tracker makes occasional octave errors, so check the bulk of frames
    v = SimpleVocoder()
    for seed in range(5):
        f0 = v.analyze(generate_bonafide(seed, 2.0)).f0_hz
        voiced = f0[f0 > 0]
        assert voiced.size > 50
        assert 80 <= np.median(voiced) <= 300
        assert np.mean((voiced >= 75) & (voiced <= 320)) >= 0.85


def test_bonafide_spectral_tilt():
    for seed in range(5):
        x = generate_bonafide(seed, 2.0).samples
        assert band_energy(x, 0, 4000) > band_energy(x, 4000, 8000)


def test_neutral_channel_is_transparent():
    x = generate_bonafide(1, 1.5)
    y = apply_replay_channel(x, ReplayChannelConfig.neutral())
    assert len(y) == len(x)
    assert np.sqrt(np.mean((y.samples - x.samples) ** 2)) < 1e-3


def test_bandlimit_removes_high_band():
    # noise off: broadband noise would refill the band the filter removed
    x = generate_bonafide(2, 1.5)
    cfg = ReplayChannelConfig(0.0, 0.0, 0.0, 3400.0, 100.0, 0)
    y = apply_replay_channel(x, cfg)
    assert 10 * np.log10(band_energy(y.samples, 4000, 8000) / band_energy(x.samples, 4000, 8000)) <= -25


def test_channel_config_ranges():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = ReplayChannelConfig.random(rng)
        assert 0.1 <= c.t60_s <= 0.8 and 0 <= c.nonlinearity <= 0.3
        assert 3400 <= c.bandlimit_hz <= 7000 and 15 <= c.noise_snr_db <= 40
    with pytest.raises(PreconditionViolation):
        ReplayChannelConfig(0.9, 0.0, 0.0, 4000.0, 20.0, 0)


def test_distinct_channels_give_distinct_residuals():
    x = generate_bonafide(3, 1.5)
    rng = np.random.default_rng(1)
    f = [extract_raw(apply_replay_channel(x, ReplayChannelConfig.random(rng))) for _ in range(2)]
    assert np.linalg.norm(f[0] - f[1]) > 0


def test_corpus_layout(small_corpus):
    rows = read_manifest(small_corpus.manifest)
    assert len(rows) == 24
    assert sum(r.label == "bonafide" for r in rows) == 12
    assert all(r.path.exists() for r in rows)
    train = {r.utt_id for r in read_manifest(small_corpus.train_manifest)}
    evals = {r.utt_id for r in read_manifest(small_corpus.eval_manifest)}
    assert not train & evals and len(train | evals) == 24


def test_corpus_count_contract(tmp_path):
    paths = build_corpus(10, 10, tmp_path, seed=0, duration_range=(1.0, 1.0))
    rows = read_manifest(paths.manifest)
    assert len(list((tmp_path / "wav").glob("*.wav"))) == 20 and len(rows) == 20
    assert sorted(r.label for r in rows).count("spoof") == 10


def test_split_channels_are_disjoint():
    # mirrors the draw order of build_corpus
    seeds = np.random.SeedSequence(0).spawn(4)
    tr, ev = np.random.default_rng(seeds[2]), np.random.default_rng(seeds[3])
    a = {astuple(ReplayChannelConfig.random(tr)) for _ in range(50)}
    b = {astuple(ReplayChannelConfig.random(ev)) for _ in range(50)}
    assert not a & b


def test_manifest_errors(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("# comment\nA\twav/a.wav\tbonafide\n\nB\twav/b.wav\n")
    with pytest.raises(MalformedLine) as err:
        read_manifest(p)
    assert err.value.line_no == 4
