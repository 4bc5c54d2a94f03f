import warnings

import numpy as np
import pytest

from replaydet.audio_io import AudioClip
from replaydet.codec import CodecConfig
from replaydet.errors import ClipTooShort, CorruptFile, DimensionMismatch
from replaydet.features import (FeatureConfig, FeatureExtractor, apply_pca, extract_raw, fit_pca,
                                pca_from_arrays, pca_to_arrays, read_feature_cache, write_feature_cache)
from replaydet.synth_corpus import ReplayChannelConfig, apply_replay_channel, generate_bonafide
from replaydet.vocoder import PassThrough


def test_identity_branch_gives_zero():
    x = generate_bonafide(0, 1.2)
    f = extract_raw(x, vocoder=PassThrough(), codec=PassThrough())
    assert f.shape == (512,) and np.all(f == 0)


def test_shape_finite_and_deterministic():
    x = generate_bonafide(1, 1.2)
    a, b = extract_raw(x), extract_raw(x)
    assert a.shape == (512,) and np.all(np.isfinite(a))
    np.testing.assert_array_equal(a, b)
    mel = extract_raw(x, pipeline_config=FeatureConfig(scale="mel"))
    assert mel.shape == (80,)


def test_subtract_then_average_equals_average_then_subtract():
    ex = FeatureExtractor()
    orig, proc = ex.spectrogram_pair(generate_bonafide(2, 1.2))
    per_frame = (orig.values - proc.values).mean(axis=0)
    np.testing.assert_allclose(per_frame, orig.values.mean(axis=0) - proc.values.mean(axis=0), atol=1e-9)


def test_short_clip():
    with pytest.raises(ClipTooShort):
        extract_raw(AudioClip(np.ones(1500) * 0.1))


def test_replayed_residual_is_larger():
    rng = np.random.default_rng(0)
    clean, replayed = [], []
    cfg = CodecConfig()
    for seed in range(20):
        x = generate_bonafide(seed, 1.2)
        y = apply_replay_channel(x, ReplayChannelConfig.random(rng))
        clean.append(np.linalg.norm(extract_raw(x, cfg)))
        replayed.append(np.linalg.norm(extract_raw(y, cfg)))
    assert np.mean(replayed) > np.mean(clean)


def _brute_force_k(x, energy):
    c = np.cov(x, rowvar=False)
    ev = np.sort(np.linalg.eigvalsh(c))[::-1]
    frac = np.cumsum(ev) / ev.sum()
    return next(i + 1 for i, f in enumerate(frac) if f >= energy)


def test_pca_low_rank():
    rng = np.random.default_rng(0)
    basis = np.linalg.qr(rng.standard_normal((512, 3)))[0]
    coef = rng.standard_normal((200, 3)) * [10.0, 5.0, 2.0]
    x = coef @ basis.T + 1e-6 * rng.standard_normal((200, 512)) + 3.0
    t = fit_pca(x)
    assert t.k == 3 == _brute_force_k(x, 0.98)
    assert t.explained_energy_fraction >= 0.98
    gram = t.components.T @ t.components
    np.testing.assert_allclose(gram, np.eye(3), atol=1e-8)


def test_pca_isotropic():
    # enough samples that the sample eigenvalues are nearly equal
    x = np.random.default_rng(1).standard_normal((20000, 512))
    t = fit_pca(x)
    assert t.k == _brute_force_k(x, 0.98)
    assert abs(t.k - 0.98 * 512) <= 10


def test_pca_degenerate():
    x = np.tile(np.arange(512.0), (2, 1))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        t = fit_pca(x)
    assert t.k == 1 and t.degenerate and w


def test_apply_pca_contracts():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((100, 512)) * np.linspace(5, 0.1, 512)
    t = fit_pca(x)
    np.testing.assert_allclose(apply_pca(t, t.mean), 0.0, atol=1e-12)
    f = t.mean + 2.5 * t.components[:, 4]
    expect = np.zeros(t.k)
    expect[4] = 2.5
    np.testing.assert_allclose(apply_pca(t, f), expect, atol=1e-8)
    with pytest.raises(DimensionMismatch):
        apply_pca(t, np.zeros(80))


def test_pca_reconstruction_matches_discarded_mass():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((300, 40)) @ rng.standard_normal((40, 512)) + 0.1 * rng.standard_normal((300, 512))
    t = fit_pca(x)
    xc = x - t.mean
    err = np.sum((xc - apply_pca(t, x) @ t.components.T) ** 2) / (x.shape[0] - 1)
    discarded = t.eigenvalues[t.k :].sum()
    assert err == pytest.approx(discarded, rel=1e-6)
    assert err <= (1 - 0.98) * t.eigenvalues.sum()


def test_pca_serialization_is_exact():
    x = np.random.default_rng(4).standard_normal((50, 512))
    t = fit_pca(x)
    back = pca_from_arrays(pca_to_arrays(t))
    np.testing.assert_array_equal(apply_pca(back, x), apply_pca(t, x))


def test_feature_cache_roundtrip(tmp_path):
    m = np.random.default_rng(5).standard_normal((3, 512))
    ids = ["a", "b+add_noise", "ü"]
    write_feature_cache(tmp_path / "f.rdft", ids, m)
    data = (tmp_path / "f.rdft").read_bytes()
    assert data[:4] == b"RDFT" and int.from_bytes(data[8:12], "little") == 512
    got_ids, got = read_feature_cache(tmp_path / "f.rdft")
    assert got_ids == ids
    np.testing.assert_array_equal(got, m)
    (tmp_path / "bad.rdft").write_bytes(data[:100])
    with pytest.raises(CorruptFile):
        read_feature_cache(tmp_path / "bad.rdft")
