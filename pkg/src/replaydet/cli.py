"""Command line entry point: ``replaydet {synth,extract,train,score,eval,run}``.

Exit codes: 0 success, 1 usage/precondition error, 2 data error,
3 solver or training failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import ReplayDetError
from .pipeline import (cmd_eval, cmd_extract, cmd_score, cmd_train, keys_from_manifest, resolve_workdir,
                       run_all)
from .synth_corpus import build_corpus

log = logging.getLogger("replaydet")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable; wins over --config)")
    common.add_argument("--seed", type=int, help="master seed (same as --set seed=N)")
    common.add_argument("--workdir", help="work directory (default: $REPLAYDET_WORKDIR or ./replaydet-work)")
    common.add_argument("--jobs", type=int, default=1, help="parallel extraction workers")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="replaydet", description="Replay-attack detection with codec residual features.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic bonafide/replay corpus")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--n-bonafide", type=int, default=100)
    s.add_argument("--n-spoof", type=int, default=100)
    s.add_argument("--train-fraction", type=float, default=0.5)

    e = sub.add_parser("extract", parents=[common], help="compute residual features for the manifests")
    e.add_argument("--manifest", help="train manifest (paths.train_manifest)")
    e.add_argument("--eval-manifest", help="eval manifest (paths.eval_manifest)")

    t = sub.add_parser("train", parents=[common], help="fit PCA and the classifier on bonafide training rows")
    t.add_argument("--manifest", help="train manifest (paths.train_manifest)")
    t.add_argument("--model", help="output model file (default: WORKDIR/model.rdmd)")

    c = sub.add_parser("score", parents=[common], help="score eval features with a trained model")
    c.add_argument("--model", help="model file (default: WORKDIR/model.rdmd)")
    c.add_argument("--features", help="feature cache (default: WORKDIR/features/eval.rdft)")
    c.add_argument("--scores", help="output score file (default: WORKDIR/scores.txt)")

    v = sub.add_parser("eval", parents=[common], help="EER report and figures from scores and keys")
    v.add_argument("--scores", help="score file (default: WORKDIR/scores.txt)")
    v.add_argument("--keys", help="key file; defaults to labels from paths.eval_manifest")
    v.add_argument("--out", help="report directory (default: WORKDIR)")

    r = sub.add_parser("run", parents=[common], help="extract, train, score and eval in one go")
    r.add_argument("--manifest", help="train manifest")
    r.add_argument("--eval-manifest", help="eval manifest")
    return p


def _config(args):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "manifest", None):
        overrides.append(f"paths.train_manifest={args.manifest}")
    if getattr(args, "eval_manifest", None):
        overrides.append(f"paths.eval_manifest={args.eval_manifest}")
    return load_config(args.config, overrides)


def _print_eval(ev) -> None:
    res = ev["result"]
    print("metric\tvalue")
    print(f"eer_percent\t{100 * res.eer:.4f}")
    print(f"threshold\t{res.threshold:.12g}")
    print(f"n_bonafide\t{res.n_bonafide}")
    print(f"n_spoof\t{res.n_spoof}")
    for fig in ev["figures"]:
        log.info("wrote %s", fig)


def _too_many_failures(rep, cfg) -> bool:
    if rep.failure_fraction > cfg.extract.max_failure_fraction:
        log.error("%d of %d extractions failed", len(rep.failures), rep.total)
        return True
    return False


def _dispatch(args) -> int:
    cfg = _config(args)
    if args.command == "synth":
        paths = build_corpus(args.n_bonafide, args.n_spoof, args.out, cfg.seed, args.train_fraction)
        print(f"train_manifest\t{paths.train_manifest}")
        print(f"eval_manifest\t{paths.eval_manifest}")
        print(f"eval_keys\t{paths.eval_keys}")
        return 0
    workdir = resolve_workdir(cfg, args.workdir)
    if args.command == "extract":
        rep = cmd_extract(cfg, workdir, args.jobs)
        for split, n in rep.counts.items():
            print(f"{split}\t{n}")
        print(f"cache_hits\t{rep.cache_hits}")
        print(f"failures\t{len(rep.failures)}")
        return 2 if _too_many_failures(rep, cfg) else 0
    if args.command == "train":
        print(cmd_train(cfg, workdir, args.model))
        return 0
    if args.command == "score":
        print(cmd_score(cfg, workdir, args.model, args.features, args.scores))
        return 0
    if args.command == "eval":
        keys = args.keys
        if keys is None:
            if not cfg.paths.eval_manifest:
                log.error("eval needs --keys or paths.eval_manifest")
                return 1
            keys = keys_from_manifest(cfg.paths.eval_manifest)
        ev = cmd_eval(args.scores or workdir / "scores.txt", keys, Path(args.out) if args.out else workdir)
        _print_eval(ev)
        return 0
    if args.command == "run":
        if _too_many_failures(cmd_extract(cfg, workdir, args.jobs), cfg):
            return 2
        # features are cached now, so this pass only reads them back
        _print_eval(run_all(cfg, workdir, args.jobs))
        return 0
    return 1


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ReplayDetError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
