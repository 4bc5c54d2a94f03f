"""Measure the end-to-end EERs that the acceptance suite freezes as constants.

Run once from the repository root:

    python scripts/calibrate_acceptance.py [--out DIR]

and copy the printed values into CALIBRATED_* in tests/test_acceptance.py.
The corpus sizes and seeds here must match the ones used by the tests.
"""

import argparse
import logging
import tempfile
import time
import warnings
from pathlib import Path

from replaydet.config import load_config
from replaydet.pipeline import compare_classifiers
from replaydet.synth_corpus import build_corpus

# keep in sync with tests/test_acceptance.py
MAIN_CORPUS = {"n_bonafide": 100, "n_spoof": 100, "seed": 2024}
REPLICATION_CORPUS = {"n_bonafide": 64, "n_spoof": 64}
REPLICATION_SEEDS = range(10)


def corpus_eers(root: Path, n_bonafide: int, n_spoof: int, seed: int) -> dict[str, float]:
    paths = build_corpus(n_bonafide, n_spoof, root / "corpus", seed=seed)
    cfg = load_config(None, [f"paths.train_manifest={paths.train_manifest}",
                             f"paths.eval_manifest={paths.eval_manifest}", f"seed={seed}"])
    return compare_classifiers(cfg, root / "work")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="keep intermediate files here instead of a temp dir")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    warnings.simplefilter("ignore", RuntimeWarning)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(args.out or tmp)
        t0 = time.perf_counter()
        main_eers = corpus_eers(root / "main", **MAIN_CORPUS)
        print(f"CALIBRATED_MAIN_EER = {main_eers!r}  # {time.perf_counter() - t0:.0f} s")
        reps = {}
        for seed in REPLICATION_SEEDS:
            eers = corpus_eers(root / f"rep{seed}", seed=seed, **REPLICATION_CORPUS)
            reps[seed] = eers
            print(f"  replication {seed}: {eers}", flush=True)
        means = {k: sum(r[k] for r in reps.values()) / len(reps) for k in main_eers}
        print(f"CALIBRATED_REPLICATION_MEAN_EER = {means!r}  # {time.perf_counter() - t0:.0f} s total")


if __name__ == "__main__":
    main()
