"""Command-line pipeline: debias, hubness, init, train, translate, evaluate.

Exit codes: 0 success, 1 usage error, 2 data error. Options may also come
from a JSON file given with ``--config``; explicit flags win over it.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .debias import DebiasMethod, hubness_report
from .embedding_io import (
    EmbeddingTable,
    Vocabulary,
    atomic_write_text,
    build_vocabulary,
    init_embedding_table,
    parse_embedding_text,
    read_corpus,
    write_embedding_text,
)
from .errors import ConfigError, MMTError
from .features import read_features
from .metrics import DEFAULT_BUCKETS, corpus_bleu, word_fscore_breakdown
from .mnmt.checkpoint import load_checkpoint, save_checkpoint
from .mnmt.model import greedy_decode
from .mnmt.params import KINDS, VISUAL_KINDS, ModelConfig, ModelParams
from .train import Example, TrainConfig, loss_log_csv, train_model

logger = logging.getLogger("mmtemb")

METHOD_ALIASES = {
    "none": "none",
    "lc": "localized_centering",
    "localized_centering": "localized_centering",
    "abtt": "all_but_the_top",
    "all_but_the_top": "all_but_the_top",
}

# Defaults live here rather than in argparse so that a --config file can sit
# between them and the command line.
DEFAULTS = {
    "debias": {"method": "abtt", "k": 10, "d": 3, "metric": "cosine", "format": "auto",
               "out_format": "header"},
    "hubness": {"k": 10, "metric": "cosine", "format": "auto", "top": 10, "out": None},
    "init": {"emb": None, "dim": None, "min_freq": 1, "max_size": None, "format": "auto",
             "out_emb": None, "seed": 0},
    "train": {"model": "nmt", "feats": None, "emb_init": None, "tgt_emb_init": None,
              "format": "auto", "min_freq": 1, "max_size": None, "emb_dim": 300, "hidden": 256,
              "att_dim": 0, "shared_dim": 512, "rho": 0.5, "epochs": 10, "batch_size": 32,
              "lr": 4e-4, "clip_norm": 1.0, "dropout": 0.3, "lam": 0.5, "alpha": 0.1,
              "gamma": 0.1, "seed": 0},
    "translate": {"feats": None, "max_len": 50},
    "evaluate": {"train_tgt": None, "buckets": list(DEFAULT_BUCKETS), "max_n": 4, "out": None},
}
REQUIRED = {
    "debias": ("input", "out"),
    "hubness": ("input",),
    "init": ("corpus", "out_vocab"),
    "train": ("src", "tgt", "out"),
    "translate": ("model_dir", "input", "out"),
    "evaluate": ("hyp", "ref"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


@dataclass
class PipelineConfig:
    """Resolved options for one subcommand: defaults < config file < flags."""

    command: str
    options: dict = field(default_factory=dict)

    @classmethod
    def resolve(cls, command, flags, config_path=None):
        opts = dict(DEFAULTS[command])
        if config_path:
            try:
                with open(config_path, encoding="utf-8") as fh:
                    loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{config_path}: invalid JSON: {exc}") from None
            if not isinstance(loaded, dict):
                raise ConfigError(f"{config_path}: top level must be an object")
            unknown = sorted(set(loaded) - set(opts) - set(REQUIRED[command]))
            if unknown:
                raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
            opts.update(loaded)
        opts.update(flags)
        missing = [k for k in REQUIRED[command] if opts.get(k) is None]
        if missing:
            names = ", ".join("--" + k.replace("_", "-").replace("input", "in") for k in missing)
            raise UsageError(f"{command}: missing required option(s) {names}")
        return cls(command, opts)

    def __getattr__(self, name):
        try:
            return self.options[name]
        except KeyError:
            raise AttributeError(name) from None

    def check_files(self, *keys):
        for key in keys:
            path = self.options.get(key)
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"{path}: no such file")


def _build_parser():
    sup = argparse.SUPPRESS
    parser = _Parser(prog="mmtemb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=sup)
        p.add_argument("--config", default=None, help="JSON file of option values")
        return p

    p = command("debias", "post-process an embedding file")
    p.add_argument("--in", dest="input", help="embedding text file")
    p.add_argument("--out", help="output embedding file")
    p.add_argument("--method", choices=sorted(METHOD_ALIASES))
    p.add_argument("--k", type=int, help="neighbourhood size for localized centering")
    p.add_argument("--d", type=int, help="number of principal components to remove")
    p.add_argument("--metric", choices=("cosine", "euclidean"))
    p.add_argument("--format", choices=("auto", "header", "headerless"))
    p.add_argument("--out-format", choices=("header", "headerless"))

    p = command("hubness", "k-occurrence report as JSON")
    p.add_argument("--in", dest="input")
    p.add_argument("--k", type=int)
    p.add_argument("--metric", choices=("cosine", "euclidean"))
    p.add_argument("--format", choices=("auto", "header", "headerless"))
    p.add_argument("--top", type=int)
    p.add_argument("--out", help="write the report here instead of stdout")

    p = command("init", "build a vocabulary and its initial embedding table")
    p.add_argument("--corpus")
    p.add_argument("--emb", help="pretrained embedding file")
    p.add_argument("--dim", type=int, help="random init size when --emb is absent")
    p.add_argument("--min-freq", type=int)
    p.add_argument("--max-size", type=int)
    p.add_argument("--format", choices=("auto", "header", "headerless"))
    p.add_argument("--out-vocab")
    p.add_argument("--out-emb")
    p.add_argument("--seed", type=int)

    p = command("train", "train a translation model")
    p.add_argument("--model", choices=KINDS)
    p.add_argument("--src")
    p.add_argument("--tgt")
    p.add_argument("--feats", help="MMTF feature file aligned with the corpus")
    p.add_argument("--emb-init", help="pretrained source embeddings")
    p.add_argument("--tgt-emb-init", help="pretrained target embeddings")
    p.add_argument("--format", choices=("auto", "header", "headerless"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--min-freq", type=int)
    p.add_argument("--max-size", type=int)
    for name, typ in (("emb-dim", int), ("hidden", int), ("att-dim", int), ("shared-dim", int),
                      ("rho", float), ("epochs", int), ("batch-size", int), ("lr", float),
                      ("clip-norm", float), ("dropout", float), ("lam", float),
                      ("alpha", float), ("gamma", float), ("seed", int)):
        p.add_argument("--" + name, type=typ)

    p = command("translate", "greedy-decode a source file")
    p.add_argument("--model-dir")
    p.add_argument("--in", dest="input")
    p.add_argument("--feats")
    p.add_argument("--out")
    p.add_argument("--max-len", type=int)

    p = command("evaluate", "BLEU and frequency-bucketed word F-score")
    p.add_argument("--hyp")
    p.add_argument("--ref")
    p.add_argument("--train-tgt", help="training target corpus for frequency buckets")
    p.add_argument("--buckets", type=int, nargs="+")
    p.add_argument("--max-n", type=int)
    p.add_argument("--out")
    return parser


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def cmd_debias(cfg):
    cfg.check_files("input")
    method = DebiasMethod(METHOD_ALIASES[cfg.method], k=cfg.k, d=cfg.d)
    emb = parse_embedding_text(cfg.input, cfg.format)
    out = method.apply(emb, cfg.metric)
    write_embedding_text(out, cfg.out, cfg.out_format)
    logger.info("wrote %d vectors (%s) to %s", len(out), method.kind, cfg.out)


def cmd_hubness(cfg):
    cfg.check_files("input")
    emb = parse_embedding_text(cfg.input, cfg.format)
    text = hubness_report(emb, cfg.k, cfg.metric).to_json(cfg.top)
    if cfg.out:
        atomic_write_text(cfg.out, text)
    else:
        sys.stdout.write(text)


def cmd_init(cfg):
    cfg.check_files("corpus", "emb")
    vocab = build_vocabulary(read_corpus(cfg.corpus), cfg.min_freq, cfg.max_size)
    vocab.save(cfg.out_vocab)
    if cfg.out_emb:
        pre = parse_embedding_text(cfg.emb, cfg.format) if cfg.emb else None
        if pre is None and cfg.dim is None:
            raise UsageError("init: --out-emb needs --emb or --dim")
        table = init_embedding_table(pre, vocab, seed=cfg.seed, dim=cfg.dim)
        write_embedding_text(table, cfg.out_emb, "header")
        logger.info("%d of %d rows filled with the OOV mean", len(table.oov_ids), len(vocab))


def _load_features(path, kind, count):
    """Return (global, spatial) arrays for ``kind``; either may be None."""
    need = VISUAL_KINDS.get(kind)
    if need is None:
        return None, None
    if path is None:
        raise ConfigError(f"model {kind!r} needs a --feats file")
    feats = read_features(path)
    if feats.shape[0] != count:
        raise ConfigError(f"{path}: {feats.shape[0]} feature items for {count} sentences")
    rows = feats.shape[1]
    if need == "spatial" and rows < 2:
        raise ConfigError(f"model {kind!r} needs spatial features (rows per item > 1), got {rows}")
    if need == "global" and rows != 1:
        raise ConfigError(f"model {kind!r} needs global features (rows per item == 1), got {rows}")
    return (feats[:, 0, :], None) if need == "global" else (None, feats)


def _pretrained_table(path, fmt, vocab, seed):
    if path is None:
        return None
    return init_embedding_table(parse_embedding_text(path, fmt), vocab, seed=seed)


def cmd_train(cfg):
    cfg.check_files("src", "tgt", "feats", "emb_init", "tgt_emb_init")
    src_corpus, tgt_corpus = read_corpus(cfg.src), read_corpus(cfg.tgt)
    if len(src_corpus) != len(tgt_corpus):
        raise ConfigError(f"{len(src_corpus)} source lines but {len(tgt_corpus)} target lines")
    pairs = [i for i, (s, t) in enumerate(zip(src_corpus, tgt_corpus)) if s]
    if not pairs:
        raise ConfigError("no non-empty source sentences")
    src_vocab = build_vocabulary(src_corpus, cfg.min_freq, cfg.max_size)
    tgt_vocab = build_vocabulary(tgt_corpus, cfg.min_freq, cfg.max_size)
    src_table = _pretrained_table(cfg.emb_init, cfg.format, src_vocab, cfg.seed)
    tgt_table = _pretrained_table(cfg.tgt_emb_init, cfg.format, tgt_vocab, cfg.seed)
    dims = {t.dim for t in (src_table, tgt_table) if t is not None}
    if len(dims) > 1:
        raise ConfigError(f"source and target embedding sizes differ: {sorted(dims)}")
    emb_dim = dims.pop() if dims else cfg.emb_dim
    gf, sf = _load_features(cfg.feats, cfg.model, len(src_corpus))
    model_cfg = ModelConfig(
        cfg.model, len(src_vocab), len(tgt_vocab), emb_dim=emb_dim, hidden=cfg.hidden,
        att_dim=cfg.att_dim, shared_dim=cfg.shared_dim, rho=cfg.rho,
        spatial_dim=sf.shape[2] if sf is not None else ModelConfig.spatial_dim,
        global_dim=gf.shape[1] if gf is not None else ModelConfig.global_dim,
    )
    train_cfg = TrainConfig(
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, clip_norm=cfg.clip_norm,
        dropout=cfg.dropout, lam=cfg.lam, alpha=cfg.alpha, gamma=cfg.gamma, seed=cfg.seed,
    )
    dataset = [
        Example(src_vocab.encode(src_corpus[i]), tgt_vocab.encode(tgt_corpus[i]),
                None if gf is None else gf[i], None if sf is None else sf[i])
        for i in pairs
    ]
    params = ModelParams.initialize(model_cfg, cfg.seed, src_table, tgt_table)
    logger.info("training %s: %d pairs, %d parameters", cfg.model, len(dataset), params.size())
    params, log = train_model(params, dataset, train_cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    src_vocab.save(out / "src.vocab")
    tgt_vocab.save(out / "tgt.vocab")
    save_checkpoint(out / "model.ckpt", params, src_vocab.fingerprint(), tgt_vocab.fingerprint())
    atomic_write_text(out / "loss.csv", loss_log_csv(log))


def cmd_translate(cfg):
    model_dir = Path(cfg.model_dir)
    src_vocab = Vocabulary.load(model_dir / "src.vocab")
    tgt_vocab = Vocabulary.load(model_dir / "tgt.vocab")
    params, _ = load_checkpoint(model_dir / "model.ckpt", src_vocab.fingerprint(), tgt_vocab.fingerprint())
    cfg.check_files("input", "feats")
    lines = _read_lines(cfg.input)
    gf, sf = _load_features(cfg.feats, params.kind, len(lines))
    keep = [i for i, line in enumerate(lines) if line.split()]
    outputs = [""] * len(lines)
    if keep:
        decoded = greedy_decode(
            params,
            [src_vocab.encode(lines[i].split()) for i in keep],
            None if gf is None else gf[keep],
            None if sf is None else sf[keep],
            max_len=cfg.max_len,
        )
        for i, ids in zip(keep, decoded):
            outputs[i] = " ".join(tgt_vocab.decode(ids))
    atomic_write_text(cfg.out, "".join(line + "\n" for line in outputs))


def cmd_evaluate(cfg):
    cfg.check_files("hyp", "ref", "train_tgt")
    hyp, ref = _read_lines(cfg.hyp), _read_lines(cfg.ref)
    freq = None
    if cfg.train_tgt:
        freq = build_vocabulary(read_corpus(cfg.train_tgt)).frequency
    bleu = corpus_bleu(hyp, ref, cfg.max_n)
    report = word_fscore_breakdown(hyp, ref, cfg.buckets, freq)
    doc = {"bleu": bleu, "fscore": json.loads(report.to_json())}
    text = json.dumps(doc, ensure_ascii=False, indent=2) + "\n"
    if cfg.out:
        atomic_write_text(cfg.out, text)
    else:
        sys.stdout.write(text)


COMMANDS = {
    "debias": cmd_debias,
    "hubness": cmd_hubness,
    "init": cmd_init,
    "train": cmd_train,
    "translate": cmd_translate,
    "evaluate": cmd_evaluate,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(
        level=logging.INFO if args.pop("verbose") else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    command = args.pop("command")
    config_path = args.pop("config")
    try:
        cfg = PipelineConfig.resolve(command, args, config_path)
        COMMANDS[command](cfg)
    except UsageError as exc:
        sys.stderr.write(f"mmtemb: {exc}\n")
        return 1
    except (MMTError, OSError, ValueError, KeyError) as exc:
        sys.stderr.write(f"mmtemb {command}: error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
