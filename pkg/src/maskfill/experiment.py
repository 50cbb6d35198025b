"""Experiment configuration, matrix execution, and report rendering.

A single JSON config drives the mask -> fill -> train -> evaluate
pipeline. The experiment report is a methods-by-techniques perplexity
matrix plus per-technique mask statistics, rendered both as JSON and as
an aligned plain-text table carrying the same one-decimal numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, FrequencyTable, build_frequency_table, load_corpus
from .lm import TrigramLM, adapt_lm, perplexity, train_lm
from .masking import (
    BuiltinTagger,
    HttpTagger,
    MaskedCorpus,
    keep_set,
    mask_allowlist,
    mask_entities,
    mask_stats,
    mask_vocabthres,
    masked_to_corpus,
)
from .obfuscate import FineTune, RandomSource, Top1, TopK, obfuscate_corpus
from .remote import RemoteFiller, ServiceEndpoint
from .statfiller import train_background

REPORT_SCHEMA = "maskfill-report/1"

TECHNIQUES = ("allowlist", "vocabthres", "entitytagger")
METHODS = ("oracle", "baseline0", "baseline1", "top1", "topk", "top1_ft", "topk_ft")


class ConfigError(ValueError):
    """The experiment configuration is invalid or incomplete."""


@dataclass
class ExperimentConfig:
    train: Path | None = None
    test: Path | None = None
    background: Path | None = None
    out_dir: Path = Path("out")
    seed: int | None = None
    masking: dict = field(default_factory=dict)
    strategy: dict = field(default_factory=dict)
    filler: dict = field(default_factory=dict)
    lm: dict = field(default_factory=dict)
    methods: list[str] = field(default_factory=lambda: list(METHODS[:5]) + ["topk_ft"])
    fill: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        corpora = raw.get("corpora", {})
        cfg = cls(
            train=_opt_path(corpora.get("train")),
            test=_opt_path(corpora.get("test")),
            background=_opt_path(corpora.get("background")),
            out_dir=Path(raw.get("out_dir", "out")),
            seed=raw.get("seed"),
            masking=raw.get("masking", {}),
            strategy=raw.get("strategy", {}),
            filler=raw.get("filler", {}),
            lm=raw.get("lm", {}),
            methods=raw.get("methods", list(METHODS[:5]) + ["topk_ft"]),
            fill=raw.get("fill", {}),
            eval=raw.get("eval", {}),
        )
        for tech in cfg.masking:
            if tech not in TECHNIQUES:
                raise ConfigError(f"unknown masking technique {tech!r}")
        for method in cfg.methods:
            if method not in METHODS:
                raise ConfigError(f"unknown method {method!r}")
        return cfg

    def require_paths(self, *names: str) -> None:
        for name in names:
            p = getattr(self, name)
            if p is None:
                raise ConfigError(f"config is missing corpora.{name}")
            if not Path(p).exists():
                raise ConfigError(f"corpora.{name}: no such file: {p}")

    def effective_seed(self) -> int:
        seed = self.strategy.get("seed", self.seed)
        if seed is None:
            raise ConfigError("a seed is required for any top-k run")
        return int(seed)

    def lm_params(self) -> dict:
        return {
            "min_count": int(self.lm.get("min_count", 1)),
            "lambda3": float(self.lm.get("lambda3", 0.5)),
            "lambda2": float(self.lm.get("lambda2", 0.5)),
            "lambda1": float(self.lm.get("lambda1", 0.5)),
        }


def _opt_path(value):
    return Path(value) if value is not None else None


def _read_token_file(path) -> frozenset[str]:
    tokens = frozenset(
        line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()
    )
    if not tokens:
        raise ConfigError(f"token list file {path} is empty")
    return tokens


def build_policy_inputs(cfg: ExperimentConfig, background: Corpus | None):
    """Resolve masking config blocks into callables plus forbidden sets."""
    table = build_frequency_table(background) if background is not None else None
    policies = {}
    for tech, block in cfg.masking.items():
        if tech == "allowlist":
            allow = _read_token_file(block["allow_file"])
            fold = bool(block.get("case_fold", False))
            policies[tech] = (
                lambda c, a=allow, f=fold: mask_allowlist(c, a, f),
                allow,
            )
        elif tech == "vocabthres":
            if table is None:
                raise ConfigError("vocabthres masking requires corpora.background")
            n_keep = int(block["n_keep"])
            kept = keep_set(table, n_keep)
            policies[tech] = (
                lambda c, t=table, n=n_keep: mask_vocabthres(c, t, n),
                kept,
            )
        elif tech == "entitytagger":
            if "endpoint" in block:
                tagger = HttpTagger(block["endpoint"], timeout=float(block.get("timeout", 10.0)))
            else:
                gaz = (
                    _read_token_file(block["gazetteer_file"])
                    if "gazetteer_file" in block
                    else frozenset()
                )
                tagger = BuiltinTagger(gaz, bool(block.get("capitalization", True)))
            policies[tech] = (lambda c, tg=tagger: mask_entities(c, tg), frozenset())
    if not policies:
        raise ConfigError("config defines no masking techniques")
    return policies


def make_filler(cfg: ExperimentConfig, background: Corpus | None, endpoint: str | None = None):
    kind = cfg.filler.get("kind", "builtin")
    if kind == "builtin":
        if background is None:
            raise ConfigError("the builtin filler requires corpora.background")
        return train_background(
            background, mu=float(cfg.filler.get("mu", 1.0)), **cfg.lm_params()
        )
    if kind == "remote":
        url = endpoint or cfg.filler.get("endpoint")
        if not url:
            raise ConfigError("remote filler requires an endpoint URL")
        return RemoteFiller(
            ServiceEndpoint(
                url,
                timeout=float(cfg.filler.get("timeout", 10.0)),
                retries=int(cfg.filler.get("retries", 2)),
            )
        )
    raise ConfigError(f"unknown filler kind {kind!r}")


def make_strategy(cfg: ExperimentConfig, name: str, forbidden: frozenset[str]):
    s = cfg.strategy
    k = int(s.get("k", 10))
    weighted = bool(s.get("weighted_sampling", False))
    rounds = int(s.get("rounds", 1))
    tau = float(s.get("tau", 0.5))
    if name == "top1":
        return Top1()
    if name == "topk":
        return TopK(k, forbidden, weighted)
    if name == "top1_ft":
        return FineTune(rounds, Top1(), tau)
    if name == "topk_ft":
        return FineTune(rounds, TopK(k, forbidden, weighted), tau)
    raise ConfigError(f"unknown strategy {name!r}")


@dataclass
class ExperimentReport:
    techniques: list[str]
    methods: list[str]
    cells: dict[str, dict[str, dict]]
    stats: dict[str, dict]
    seed: int | None = None

    def best_per_technique(self) -> dict[str, str | None]:
        best: dict[str, str | None] = {}
        for tech in self.techniques:
            winner, winner_ppl = None, None
            for method in self.methods:
                if method == "oracle":
                    continue
                cell = self.cells.get(method, {}).get(tech, {})
                ppl = cell.get("ppl")
                if ppl is not None and (winner_ppl is None or ppl < winner_ppl):
                    winner, winner_ppl = method, ppl
            best[tech] = winner
        return best

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "seed": self.seed,
            "techniques": list(self.techniques),
            "methods": list(self.methods),
            "cells": self.cells,
            "mask_stats": self.stats,
            "best": self.best_per_technique(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ExperimentReport":
        if payload.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {payload.get('schema')!r}")
        return cls(
            techniques=list(payload["techniques"]),
            methods=list(payload["methods"]),
            cells=payload["cells"],
            stats=payload["mask_stats"],
            seed=payload.get("seed"),
        )

    def render_text(self) -> str:
        best = self.best_per_technique()
        width = max(len("method"), max((len(m) for m in self.methods), default=6))
        cols = [max(len(t), 8) for t in self.techniques]
        lines = [
            "method".ljust(width)
            + "".join("  " + t.rjust(c) for t, c in zip(self.techniques, cols))
        ]
        for method in self.methods:
            row = method.ljust(width)
            for tech, c in zip(self.techniques, cols):
                cell = self.cells.get(method, {}).get(tech, {})
                if "ppl" in cell:
                    text = f"{cell['ppl']:.1f}"
                    if best[tech] == method:
                        text = "*" + text
                else:
                    text = "n/a"
                row += "  " + text.rjust(c)
            lines.append(row)
        lines.append("")
        row = "masked %".ljust(width)
        for tech, c in zip(self.techniques, cols):
            pct = self.stats.get(tech, {}).get("percent")
            row += "  " + (f"{pct:.1f}" if pct is not None else "n/a").rjust(c)
        lines.append(row)
        errors = [
            f"{method}/{tech}: {cell['error']}"
            for method in self.methods
            for tech, cell in self.cells.get(method, {}).items()
            if "error" in cell
        ]
        if errors:
            lines.append("")
            lines.extend("failed " + e for e in errors)
        return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, *, endpoint: str | None = None, workers: int = 1) -> ExperimentReport:
    """Execute every (method, technique) cell with shared seeds.

    Per-cell failures are recorded in the report and the run continues.
    """
    cfg.require_paths("train", "test")
    train = load_corpus(cfg.train)
    test = load_corpus(cfg.test)
    background = load_corpus(cfg.background) if cfg.background else None
    policies = build_policy_inputs(cfg, background)
    lm_params = cfg.lm_params()
    alpha = float(cfg.lm.get("alpha", 1.0))
    background_lm: TrigramLM | None = None
    if alpha < 1.0:
        if background is None:
            raise ConfigError("lm.alpha < 1 requires corpora.background")
        background_lm = train_lm(background, "oracle", **lm_params)

    def evaluate(corpus: Corpus, mode: str) -> float:
        if alpha < 1.0:
            model = adapt_lm(background_lm, corpus, alpha, mode=mode)
        else:
            model = train_lm(corpus, mode, **lm_params)
        return perplexity(model, test).perplexity

    techniques = list(policies)
    masked: dict[str, MaskedCorpus] = {}
    stats: dict[str, dict] = {}
    for tech, (apply_mask, _) in policies.items():
        masked[tech] = apply_mask(train)
        stats[tech] = mask_stats(masked[tech]).to_json()

    methods = list(cfg.methods)
    needs_filler = any(m not in ("oracle", "baseline0", "baseline1") for m in methods)
    filler = make_filler(cfg, background, endpoint) if needs_filler else None

    oracle_ppl: float | None = None
    cells: dict[str, dict[str, dict]] = {m: {} for m in methods}
    for method in methods:
        for tech in techniques:
            try:
                if method == "oracle":
                    if oracle_ppl is None:
                        oracle_ppl = evaluate(train, "oracle")
                    ppl = oracle_ppl
                elif method in ("baseline0", "baseline1"):
                    ppl = evaluate(masked_to_corpus(masked[tech]), method)
                else:
                    strategy = make_strategy(cfg, method, policies[tech][1])
                    rng = RandomSource(cfg.effective_seed())
                    obf = obfuscate_corpus(
                        masked[tech], strategy, filler, rng, workers=workers
                    )
                    ppl = evaluate(obf, "obfuscated")
                cells[method][tech] = {"ppl": round(ppl, 1)}
            except Exception as exc:
                cells[method][tech] = {"error": f"{type(exc).__name__}: {exc}"}
    return ExperimentReport(techniques, methods, cells, stats, seed=cfg.seed)
