"""Command-line entry point.

Every command writes ``manifest.txt`` into its output directory: the fully
resolved configuration, the command's own arguments and the file-format
versions.  ``deconv-lvm rerun <manifest> --out-dir <dir>`` replays it.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .autodiff import NumericDomainError, Rng
from .checkpoint import FORMAT_VERSION, CheckpointError, load_checkpoint
from .config import ConfigError, ModelConfig, TrainingMode, build_config, dump_config, parse_config_text
from .corpus import matching_corpus, style_corpus, write_pairs, write_sentences
from .evaluation import export_embeddings_2d, labeled_fraction_sweep, linear_probe
from .gradcheck import run_all
from .model import embed_means
from .text import (
    DataError,
    Vocabulary,
    load_pretrained_embeddings,
    pair_dataset,
    read_pairs,
    read_sentences,
    save_vocab,
    sentence_dataset,
    tokenize,
)
from .trainer import DivergenceError, Trainer, config_from_checkpoint, params_from_checkpoint

MANIFEST_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_DIVERGED = 0, 1, 2

logger = logging.getLogger("deconv_lvm")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2 (reserved for divergence)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# -- manifests ---------------------------------------------------------------


def write_manifest(out_dir: Path, command: str, config: Optional[ModelConfig], args: dict) -> Path:
    lines = [
        f"command = {command}",
        f"manifest_version = {MANIFEST_VERSION}",
        f"checkpoint_format = {FORMAT_VERSION}",
        f"package_version = {__version__}",
    ]
    lines += [f"arg.{k} = {v}" for k, v in sorted(args.items()) if v is not None]
    if config is not None:
        lines += [f"config.{line}" for line in dump_config(config).splitlines()]
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> tuple[str, dict, Optional[str]]:
    """(command, {arg: text}, config text or None)."""
    command, args, config_lines = None, {}, []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if " = " not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split(" = ", 1)
        if key == "command":
            command = value
        elif key.startswith("arg."):
            args[key[4:]] = value
        elif key.startswith("config."):
            config_lines.append(f"{key[7:]} = {value}")
    if command is None:
        raise ConfigError(f"{path}: no command recorded")
    return command, args, "\n".join(config_lines) + "\n" if config_lines else None


# -- shared helpers ------------------------------------------------------------


def _resolve_config(args) -> ModelConfig:
    values = parse_config_text(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    if getattr(args, "config_text", None):
        values.update(parse_config_text(args.config_text))
    flags = {
        "seed": args.seed,
        "labeled_fraction": getattr(args, "labeled_fraction", None),
        "mode": getattr(args, "mode", None),
        "epochs": getattr(args, "epochs", None),
        "train_path": getattr(args, "train", None),
        "valid_path": getattr(args, "valid", None),
        "test_path": getattr(args, "test", None),
        "embeddings_path": getattr(args, "embeddings", None),
    }
    for key, value in flags.items():
        if value is not None:
            values[key] = TrainingMode(value) if key == "mode" else value
    preset = args.preset or values.get("preset", "desk")
    values["preset"] = preset
    return build_config(preset, values)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Optional[str], what: str) -> str:
    if not path:
        raise DataError(f"no {what} given (use the flag or set it in the config file)")
    return path


def _epoch_printer(line: str) -> None:
    print(line, flush=True)


def _initial_embedding(config: ModelConfig, vocab: Vocabulary) -> Optional[np.ndarray]:
    if not config.embeddings_path:
        return None
    emb = load_pretrained_embeddings(config.embeddings_path, vocab, config.emb_dim, Rng([config.seed, 1]))
    return emb.matrix.data


# -- commands ----------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    out = _out_dir(args)
    style = style_corpus(args.n_style, seed=args.seed)
    n_train = 2 * args.n_style * 2 // 3
    write_sentences(out / "style_train.tsv", style[:n_train])
    write_sentences(out / "style_test.tsv", style[n_train:])
    pairs = matching_corpus(args.n_pairs, seed=args.seed)
    n_valid, n_test = args.n_pairs // 13, 2 * (args.n_pairs // 13)
    n_fit = args.n_pairs - n_valid - n_test
    write_pairs(out / "pairs_train.tsv", pairs[:n_fit])
    write_pairs(out / "pairs_valid.tsv", pairs[n_fit : n_fit + n_valid])
    write_pairs(out / "pairs_test.tsv", pairs[n_fit + n_valid :])
    write_manifest(out, "gen-corpus", None, {"seed": args.seed, "n_style": args.n_style, "n_pairs": args.n_pairs})
    print(f"wrote {len(style)} style sentences and {len(pairs)} pairs to {out}")
    return EXIT_OK


def _train(args, pairs: bool) -> int:
    out = _out_dir(args)
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        config = config_from_checkpoint(ckpt)
        if args.epochs is not None:
            config = config.replace(epochs=args.epochs)
        vocab = Vocabulary(ckpt.vocab[2:])
    else:
        config = _resolve_config(args)
        if pairs and config.mode is TrainingMode.UNSUP_LVM:
            config = config.replace(mode=TrainingMode.SEMI_LVM)
        if not pairs and config.mode not in (TrainingMode.UNSUP_LVM, TrainingMode.DECONV_AE):
            raise ConfigError(f"train-unsup needs mode UNSUP_LVM or DECONV_AE, got {config.mode.value}")
    train_path = _require(config.train_path, "training file (--train)")
    if pairs:
        train_rows = read_pairs(train_path, config.labels)
        if not args.resume:
            vocab = Vocabulary.build([tokenize(a) + tokenize(b) for a, b, _ in train_rows], config.vocab_size - 2)
        train = pair_dataset(train_rows, vocab, config.t_max, config.labeled_fraction, config.seed)
        valid = None
        if config.valid_path:
            valid = pair_dataset(read_pairs(config.valid_path, config.labels), vocab, config.t_max)
    else:
        sentences, _ = read_sentences(train_path)
        if not args.resume:
            vocab = Vocabulary.build([tokenize(s) for s in sentences], config.vocab_size - 2)
        train = sentence_dataset(sentences, vocab, config.t_max)
        valid = sentence_dataset(read_sentences(config.valid_path)[0], vocab, config.t_max) if config.valid_path else None

    if args.resume:
        trainer = Trainer.from_checkpoint(ckpt, train, valid)
        trainer.config = config
    else:
        trainer = Trainer(config, train, vocab, valid, embedding=_initial_embedding(config, vocab))
    save_vocab(out / "vocab.txt", vocab)
    write_manifest(out, "train-match" if pairs else "train-unsup", config, {"resume": args.resume})
    report = trainer.fit(out_dir=out, log=_epoch_printer)
    if pairs and config.test_path:
        test = pair_dataset(read_pairs(config.test_path, config.labels), vocab, config.t_max)
        best = Trainer.from_checkpoint(load_checkpoint(out / "best.ckpt"), train, valid)
        acc, _ = best.evaluate(test)
        (out / "test.txt").write_text(f"test_accuracy = {acc!r}\n", encoding="utf-8")
        print(f"test accuracy {acc:.4f} (best epoch {report.best_epoch})")
    return EXIT_OK


def cmd_train_unsup(args) -> int:
    return _train(args, pairs=False)


def cmd_train_match(args) -> int:
    return _train(args, pairs=True)


def cmd_embed(args) -> int:
    out = _out_dir(args)
    corpus = _require(args.corpus, "corpus (--corpus)")
    rows = export_embeddings_2d(args.checkpoint, corpus, out / "embeddings_2d.csv")
    write_manifest(out, "embed", None, {"checkpoint": args.checkpoint, "corpus": corpus})
    print(f"wrote {len(rows)} rows to {out / 'embeddings_2d.csv'}")
    return EXIT_OK


def cmd_probe(args) -> int:
    out = _out_dir(args)
    ckpt = load_checkpoint(args.checkpoint)
    config, params = config_from_checkpoint(ckpt), params_from_checkpoint(ckpt)
    vocab = Vocabulary(ckpt.vocab[2:])
    train_s, train_t = read_sentences(_require(args.train, "probe training corpus (--train)"))
    test_s, test_t = read_sentences(_require(args.test, "probe test corpus (--test)"))
    classes = sorted(set(train_t) | set(test_t))
    to_int = lambda tags: np.array([classes.index(t) for t in tags])  # noqa: E731
    feats = lambda s: embed_means(params, config, sentence_dataset(s, vocab, config.t_max).tokens)  # noqa: E731
    result = linear_probe(feats(train_s), to_int(train_t), feats(test_s), to_int(test_t), args.n_train, seed=args.seed or 0)
    lines = ["n_train,accuracy", f"{result.train_size},{result.accuracy!r}"]
    (out / "probe.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(
        out, "probe", None,
        {"checkpoint": args.checkpoint, "train": args.train, "test": args.test, "n_train": args.n_train, "seed": args.seed},
    )
    print(f"probe accuracy {result.accuracy:.4f} with {result.train_size} training sentences")
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    config = _resolve_config(args)
    train_rows = read_pairs(_require(config.train_path, "training pairs (--train)"), config.labels)
    test_rows = read_pairs(_require(config.test_path, "test pairs (--test)"), config.labels)
    valid_rows = read_pairs(config.valid_path, config.labels) if config.valid_path else None
    vocab = Vocabulary.build([tokenize(a) + tokenize(b) for a, b, _ in train_rows], config.vocab_size - 2)
    fractions = [float(v) for v in args.fractions.split(",")]
    seeds = [int(v) for v in args.seeds.split(",")]
    write_manifest(out, "sweep", config, {"fractions": args.fractions, "seeds": args.seeds})
    labeled_fraction_sweep(config, train_rows, test_rows, vocab, fractions, seeds, valid_rows=valid_rows,
                           out_csv=out / "sweep.csv", log=_epoch_printer)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_all(seed=args.seed or 0)
    worst = max(results, key=results.get)
    if args.out_dir:
        out = _out_dir(args)
        (out / "gradcheck.csv").write_text(
            "check,rel_error\n" + "".join(f"{k},{v!r}\n" for k, v in results.items()), encoding="utf-8"
        )
        write_manifest(out, "gradcheck", None, {"seed": args.seed})
    if args.verbose:
        for name, err in results.items():
            print(f"{name:40s} {err:.3e}")
    print(f"max rel. err {results[worst]:.3e} ({worst})")
    return EXIT_OK if results[worst] < 1e-4 else EXIT_ERROR


def cmd_rerun(args) -> int:
    command, recorded, config_text = read_manifest(args.manifest)
    argv = [command, "--out-dir", args.out_dir]
    for key, value in recorded.items():
        argv += [f"--{key.replace('_', '-')}", value]
    if config_text is not None:
        argv += ["--config-text", config_text]
    return main(argv)


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deconv-lvm", description="Deconvolutional latent-variable sentence models.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def common(p, out_required=True):
        p.add_argument("--config", help="plain-text 'key = value' configuration file")
        p.add_argument("--config-text", help=argparse.SUPPRESS)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", required=out_required)
        p.add_argument("--preset", choices=["desk", "paper"])
        p.add_argument("--verbose", action="store_true", help="log progress details to stderr")

    def training(p):
        p.add_argument("--train", help="training file")
        p.add_argument("--valid", help="validation file")
        p.add_argument("--test", help="test file")
        p.add_argument("--embeddings", help="pretrained word vectors (word v1 v2 ...)")
        p.add_argument("--epochs", type=int)
        p.add_argument("--mode", choices=[m.value for m in TrainingMode])
        p.add_argument("--labeled-fraction", type=float)
        p.add_argument("--resume", metavar="CHECKPOINT")

    p = sub.add_parser("train-unsup", help="train UNSUP_LVM or DECONV_AE on single sentences")
    common(p)
    training(p)
    p.set_defaults(func=cmd_train_unsup)

    p = sub.add_parser("train-match", help="train a sentence-matching model on labeled pairs")
    common(p)
    training(p)
    p.set_defaults(func=cmd_train_match)

    p = sub.add_parser("embed", help="export 2-D PCA coordinates of sentence codes to CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", help="sentence[TAB tag] file")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("probe", help="linear-probe accuracy of frozen sentence codes")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train", help="tagged sentences for fitting the probe")
    p.add_argument("--test", help="tagged sentences for scoring the probe")
    p.add_argument("--n-train", type=int, default=200)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sweep", help="test accuracy over labeled fractions, seeds and modes")
    common(p)
    training(p)
    p.add_argument("--fractions", default="0.1")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-corpus", help="write the synthetic style and matching corpora")
    common(p)
    p.add_argument("--n-style", type=int, default=1500, help="sentences per style")
    p.add_argument("--n-pairs", type=int, default=6500)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite; prints max rel. err")
    common(p, out_required=False)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("rerun", help="replay a run from its manifest.txt")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is None and args.command == "gen-corpus":
        args.seed = 0
    try:
        return args.func(args)
    except (DivergenceError, NumericDomainError) as exc:
        print(f"error: numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, DataError, CheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
