"""Command-line front end: mask, fill, eval, experiment, stats."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import load_corpus, save_corpus
from .experiment import (
    ConfigError,
    ExperimentConfig,
    build_policy_inputs,
    make_filler,
    make_strategy,
    run_experiment,
)
from .lm import adapt_lm, perplexity, train_lm
from .masking import load_masked_corpus, mask_stats, masked_to_corpus, save_masked_corpus
from .obfuscate import RandomSource, obfuscate_corpus

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_FAILURE = 4

logger = logging.getLogger(__name__)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.strategy["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = Path(args.out)
    if getattr(args, "filler", None) is not None:
        cfg.filler["kind"] = args.filler
    if getattr(args, "endpoint", None) is not None:
        cfg.filler["endpoint"] = args.endpoint
    return cfg


def cmd_mask(args) -> int:
    cfg = _load_config(args)
    cfg.require_paths("train")
    train = load_corpus(cfg.train)
    background = load_corpus(cfg.background) if cfg.background else None
    policies = build_policy_inputs(cfg, background)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    stats = {}
    for tech, (apply_mask, _) in policies.items():
        mc = apply_mask(train)
        out_path = cfg.out_dir / f"masked_{tech}.txt"
        save_masked_corpus(mc, out_path)
        stats[tech] = mask_stats(mc).to_json()
        print(f"{tech}: {stats[tech]['percent']}% masked "
              f"({stats[tech]['masked']}/{stats[tech]['total']}) -> {out_path}")
    (cfg.out_dir / "mask_stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return EXIT_OK


def cmd_fill(args) -> int:
    cfg = _load_config(args)
    if "input" not in cfg.fill:
        raise ConfigError("config is missing fill.input")
    masked = load_masked_corpus(cfg.fill["input"])
    background = load_corpus(cfg.background) if cfg.background else None
    filler = make_filler(cfg, background, cfg.filler.get("endpoint"))
    forbidden = frozenset(cfg.fill.get("forbidden", ()))
    strategy = make_strategy(cfg, cfg.strategy.get("strategy", "topk"), forbidden)
    rng = RandomSource(cfg.effective_seed())
    filled = obfuscate_corpus(masked, strategy, filler, rng, workers=args.workers)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = Path(cfg.fill.get("output", cfg.out_dir / "obfuscated.txt"))
    save_corpus(filled, out_path)
    print(f"filled {len(filled)} sentences -> {out_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    cfg.require_paths("test")
    train_path = cfg.eval.get("train", cfg.train)
    if train_path is None:
        raise ConfigError("config is missing eval.train")
    mode = cfg.eval.get("mode", "oracle")
    if mode in ("baseline0", "baseline1"):
        corpus = masked_to_corpus(load_masked_corpus(train_path))
    else:
        corpus = load_corpus(train_path)
    test = load_corpus(cfg.test)
    params = cfg.lm_params()
    alpha = float(cfg.lm.get("alpha", 1.0))
    if alpha < 1.0:
        if cfg.background is None:
            raise ConfigError("lm.alpha < 1 requires corpora.background")
        background_lm = train_lm(load_corpus(cfg.background), "oracle", **params)
        model = adapt_lm(background_lm, corpus, alpha, mode=mode)
    else:
        model = train_lm(corpus, mode, **params)
    report = perplexity(model, test).to_json()
    text = json.dumps(report, sort_keys=True)
    print(text)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "eval.json").write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    report = run_experiment(cfg, endpoint=cfg.filler.get("endpoint"), workers=args.workers)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_json()
    (cfg.out_dir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    text = report.render_text()
    (cfg.out_dir / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    outcomes = [cell for row in report.cells.values() for cell in row.values()]
    failed = sum(1 for cell in outcomes if "error" in cell)
    if failed == len(outcomes):
        return EXIT_FAILURE
    if failed:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_stats(args) -> int:
    mc = load_masked_corpus(args.path)
    print(json.dumps(mask_stats(mc).to_json(), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskfill",
        description="Mask privacy-sensitive tokens, substitute them, and "
        "evaluate the result with a downstream language model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, workers=False):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--filler", choices=["builtin", "remote"], help="filler backend")
        p.add_argument("--endpoint", help="remote filler base URL")
        if workers:
            p.add_argument("--workers", type=int, default=1, help="parallel fill workers")

    p = sub.add_parser("mask", help="apply the configured masking techniques")
    add_common(p)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("fill", help="substitute markers in a masked corpus")
    add_common(p, workers=True)
    p.set_defaults(func=cmd_fill)

    p = sub.add_parser("eval", help="train a downstream LM and report perplexity")
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run the full method-by-technique matrix")
    add_common(p, workers=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("stats", help="mask statistics of a masked corpus file")
    p.add_argument("path", help="masked corpus file")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
