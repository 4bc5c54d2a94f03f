import numpy as np
import pytest

from replaydet.errors import MalformedLine, MissingKey, SingleClassInput
from replaydet.evaluation import (compute_eer, join_scores, read_keys, read_scores, write_keys,
                                  write_scores)

from eer_oracle import brute_force_eer


def test_matches_brute_force_on_random_sets():
    rng = np.random.default_rng(0)
    for _ in range(60):
        nb, ns = rng.integers(1, 200, size=2)
        b = np.round(rng.normal(0.5, 1, nb), rng.integers(0, 3))
        s = np.round(rng.normal(0, 1, ns), rng.integers(0, 3))
        assert abs(compute_eer(b, s).eer - brute_force_eer(b, s)) <= 1e-12


def test_separable_is_zero():
    assert compute_eer([5, 6, 7], [1, 2, 3]).eer == 0.0


def test_worked_example():
    b, s = [3, 2, 1, 0], [2.5, 1.5, 0.5, -0.5]
    assert brute_force_eer(b, s) == 0.5
    assert compute_eer(b, s).eer == 0.5


def test_random_labels_near_half():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(2000)
    lab = rng.integers(0, 2, 2000).astype(bool)
    assert abs(compute_eer(x[lab], x[~lab]).eer - 0.5) <= 0.05


def test_monotone_and_polarity_invariance():
    rng = np.random.default_rng(2)
    b, s = rng.normal(1, 1, 300), rng.normal(0, 1, 250)
    ref = compute_eer(b, s).eer
    for f in (np.exp, lambda v: 3 * v - 7, np.arctan, lambda v: v ** 3):
        assert compute_eer(f(b), f(s)).eer == pytest.approx(ref, abs=1e-12)
    # negate and swap roles: same crossing up to the tie convention
    assert compute_eer(-s, -b).eer == pytest.approx(ref, abs=1e-12)


def test_counts_and_single_class():
    r = compute_eer([1, 2], [0])
    assert (r.n_bonafide, r.n_spoof) == (2, 1)
    with pytest.raises(SingleClassInput):
        compute_eer([], [1.0])
    with pytest.raises(SingleClassInput):
        compute_eer([1.0], [])


def test_score_round_trip(tmp_path):
    recs = [("a", 0.1), ("b", -3.25e-7), ("c", 123456.789012)]
    p = tmp_path / "s.txt"
    write_scores(recs, p)
    back = read_scores(p)
    for utt, v in recs:
        assert back[utt] == pytest.approx(v, rel=1e-11)
    assert p.read_text().splitlines()[0] == "a 0.1"


def test_empty_files(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("")
    assert read_scores(p) == {} and read_keys(p) == {}


@pytest.mark.parametrize("body,line", [
    ("a 1\nb 2 3\n", 2),
    ("a 1\n\nb x\n", 3),
    ("a nan\n", 1),
    ("a 1\na 2\n", 2),
])
def test_malformed_score_lines(tmp_path, body, line):
    p = tmp_path / "s.txt"
    p.write_text(body)
    with pytest.raises(MalformedLine) as err:
        read_scores(p)
    assert err.value.line_no == line


def test_keys_and_join(tmp_path):
    p = tmp_path / "k.txt"
    write_keys([("a", "bonafide"), ("b", "spoof")], p)
    keys = read_keys(p)
    bona, spoof = join_scores({"a": 1.0, "b": 0.0}, keys)
    assert list(bona) == [1.0] and list(spoof) == [0.0]
    with pytest.raises(MissingKey):
        join_scores({"a": 1.0, "z": 0.0}, keys)
    p.write_text("a human\n")
    with pytest.raises(MalformedLine):
        read_keys(p)
