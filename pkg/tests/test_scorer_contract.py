import numpy as np
import pytest

from replaydet.classifiers import make_classifier

PARAMS = {"ocsvm": {}, "vae": {"epochs": 100, "seed": 0},
          "anogan": {"epochs": 30, "seed": 0, "search_iters": 30, "restarts": 2}}


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("kind", sorted(PARAMS))
def test_training_point_outscores_far_outlier(kind):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 2))
    model = make_classifier(kind, **PARAMS[kind]).fit(x)
    sd = x.std(axis=0)
    wins = 0
    for trial in range(100):
        t = np.random.default_rng(100 + trial)
        dup = x[t.integers(len(x))]
        u = t.standard_normal(2)
        far = x.mean(axis=0) + 20 * sd * u / np.linalg.norm(u)
        s = model.score(np.stack([dup, far]), seed=trial)
        wins += s[0] >= s[1]
    assert wins >= 95
