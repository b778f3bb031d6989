"""Command-line entry point: data-gen, train, decode, eval, wfe-eval.

Run configuration is resolved in three layers: built-in defaults, then a
flat ``key=value`` config file (``--config``), then command-line flags.
``WFE_SEED`` in the environment supplies the default seed when no other
source sets one. Data goes to stdout (or ``--output``), diagnostics to
stderr; the exit code is 0 only when the requested operation succeeded.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import beam as B
from . import checkpoint as C
from . import data as D
from . import metrics as X
from . import model as M
from . import training as TR
from .wfe import WfeLossConfig


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _default_seed() -> int:
    env = os.environ.get("WFE_SEED")
    return int(env) if env else 0


def load_config_file(path) -> Dict[str, str]:
    """Flat key=value lines; blank lines and #-comments ignored."""
    values: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = stripped.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def apply_config_defaults(subparser: argparse.ArgumentParser,
                          values: Dict[str, str]):
    """Install config-file values as defaults so flags still win."""
    coerced = {}
    for action in subparser._actions:
        if action.dest in values:
            raw = values[action.dest]
            if isinstance(action, (argparse._StoreTrueAction,
                                   argparse._StoreFalseAction)):
                coerced[action.dest] = raw.lower() in ("1", "true", "yes")
            elif action.type is not None:
                coerced[action.dest] = action.type(raw)
            else:
                coerced[action.dest] = raw
    subparser.set_defaults(**coerced)


def build_parser() -> tuple:
    parser = argparse.ArgumentParser(
        prog="freqcap",
        description="seq2seq generation with frequency-capped decoding")
    sub = parser.add_subparsers(dest="command", required=True)
    seed_default = _default_seed()
    commands = {}

    p = sub.add_parser("data-gen", help="generate a synthetic parallel corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pairs", type=_positive_int, default=500)
    p.add_argument("--content-words", type=_positive_int, default=30)
    p.add_argument("--filler-words", type=_positive_int, default=12)
    p.add_argument("--min-content", type=_positive_int, default=3)
    p.add_argument("--max-content", type=_positive_int, default=6)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--config")
    commands["data-gen"] = p

    p = sub.add_parser("train", help="train a model on a generated corpus")
    p.add_argument("--data", required=True, help="directory from data-gen")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="epoch log path (default: <out>.log)")
    p.add_argument("--embed-dim", type=_positive_int, default=32)
    p.add_argument("--hidden-dim", type=_positive_int, default=64)
    p.add_argument("--epochs", type=_positive_int, default=15)
    p.add_argument("--adam-epochs", type=int, default=5)
    p.add_argument("--batch-size", type=_positive_int, default=16)
    p.add_argument("--lr-adam", type=float, default=0.001)
    p.add_argument("--lr-sgd", type=float, default=0.01)
    p.add_argument("--clip-adam", type=float, default=10.0)
    p.add_argument("--clip-sgd", type=float, default=5.0)
    p.add_argument("--patience", type=_positive_int, default=3)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--wfe-weight", type=float, default=1.0)
    p.add_argument("--no-wfe", action="store_true",
                   help="train the pure baseline (frequency weight 0)")
    p.add_argument("--single-precision", action="store_true",
                   help="downcast checkpoint payloads to float32 (lossy)")
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--config")
    commands["train"] = p

    p = sub.add_parser("decode", help="decode source lines with beam search")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="one source per line")
    p.add_argument("--output", help="default: stdout")
    p.add_argument("--src-vocab", required=True)
    p.add_argument("--tgt-vocab", required=True)
    p.add_argument("--beam", type=_positive_int, default=5)
    p.add_argument("--mode", choices=("baseline", "wfe"), default="baseline")
    p.add_argument("--max-len", type=_positive_int,
                   help="default: 2 * source length + 5")
    p.add_argument("--trace", help="write per-step decode records (JSON lines)")
    p.add_argument("--config")
    commands["decode"] = p

    p = sub.add_parser("eval", help="score candidates against references")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--basis", choices=("recall", "f1"), default="f1")
    p.add_argument("--byte-limit", type=_positive_int)
    p.add_argument("--config")
    commands["eval"] = p

    p = sub.add_parser("wfe-eval", help="frequency-head confusion matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="corpus tsv to evaluate")
    p.add_argument("--src-vocab", required=True)
    p.add_argument("--tgt-vocab", required=True)
    p.add_argument("--config")
    commands["wfe-eval"] = p

    return parser, commands


def cmd_data_gen(args) -> int:
    cfg = D.SynthConfig(pairs=args.pairs, content_words=args.content_words,
                        filler_words=args.filler_words,
                        min_content=args.min_content,
                        max_content=args.max_content)
    corpus = D.gen_synthetic(cfg, seed=args.seed)
    train, val, test = D.split_corpus(corpus.pairs)
    if not (train and val and test):
        print(f"error: {args.pairs} pairs is too few for an 80/10/10 split",
              file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    D.write_corpus(out / "train.tsv", train)
    D.write_corpus(out / "val.tsv", val)
    D.write_corpus(out / "test.tsv", test)
    corpus.src_vocab.save(out / "vocab.src.txt")
    corpus.tgt_vocab.save(out / "vocab.tgt.txt")
    print(f"wrote {len(train)}/{len(val)}/{len(test)} pairs to {out}",
          file=sys.stderr)
    return 0


def _load_data_dir(root) -> tuple:
    root = Path(root)
    src_vocab = D.Vocabulary.load(root / "vocab.src.txt")
    tgt_vocab = D.Vocabulary.load(root / "vocab.tgt.txt")
    train = D.encode_corpus(D.read_corpus(root / "train.tsv"), src_vocab, tgt_vocab)
    val = D.encode_corpus(D.read_corpus(root / "val.tsv"), src_vocab, tgt_vocab)
    return src_vocab, tgt_vocab, train, val


def cmd_train(args) -> int:
    if args.no_wfe and args.wfe_weight != 1.0:
        print("error: --no-wfe conflicts with --wfe-weight "
              f"{args.wfe_weight}; pick one", file=sys.stderr)
        return 1
    src_vocab, tgt_vocab, train_pairs, val_pairs = _load_data_dir(args.data)
    model_cfg = M.ModelConfig(D=args.embed_dim, H=args.hidden_dim,
                              src_vocab_size=len(src_vocab),
                              tgt_vocab_size=len(tgt_vocab),
                              dropout_rate=args.dropout)
    train_cfg = TR.TrainConfig(
        adam_epochs=args.adam_epochs, lr_adam=args.lr_adam, lr_sgd=args.lr_sgd,
        clip_adam=args.clip_adam, clip_sgd=args.clip_sgd,
        batch_size=args.batch_size, max_epochs=args.epochs,
        patience=args.patience, dropout=args.dropout,
        wfe_weight=0.0 if args.no_wfe else args.wfe_weight, seed=args.seed)
    result = TR.train(train_pairs, val_pairs, model_cfg, train_cfg)
    for entry in result.log:
        print(entry.line(), file=sys.stderr)
    log_path = args.log or (args.out + ".log")
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in result.log:
            fh.write(entry.line() + "\n")
    C.save(args.out, result.params, model_cfg, WfeLossConfig(),
           single_precision=args.single_precision)
    print(f"best epoch {result.best_epoch} "
          f"(val joint {result.best_val:.6f}); saved {args.out}",
          file=sys.stderr)
    return 0


def cmd_decode(args) -> int:
    ck = C.load(args.model)
    if args.mode == "wfe" and not ck.has_wfe:
        print("error: checkpoint has no frequency-head parameters; "
              "it was trained with --no-wfe and cannot decode in wfe mode",
              file=sys.stderr)
        return 1
    src_vocab = D.Vocabulary.load(args.src_vocab)
    tgt_vocab = D.Vocabulary.load(args.tgt_vocab)
    if len(src_vocab) != ck.model_cfg.src_vocab_size \
            or len(tgt_vocab) != ck.model_cfg.tgt_vocab_size:
        print("error: vocabulary sizes do not match the checkpoint "
              f"({len(src_vocab)}/{len(tgt_vocab)} vs "
              f"{ck.model_cfg.src_vocab_size}/{ck.model_cfg.tgt_vocab_size})",
              file=sys.stderr)
        return 1

    trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None
    out_fh = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        with open(args.input, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                tokens = line.split()
                if not tokens:
                    print(f"warning: input line {lineno} is empty; "
                          "emitting an empty output line", file=sys.stderr)
                    out_fh.write("\n")
                    continue
                X = src_vocab.encode(tokens)
                beam_cfg = B.BeamConfig(K=args.beam, mode=args.mode,
                                        max_len=args.max_len, trace=trace_fh)
                result = B.beam_search(X, ck.params, ck.model_cfg, beam_cfg)
                if result.warning:
                    print(f"warning: line {lineno}: no natural termination "
                          "within the length limit", file=sys.stderr)
                words = tgt_vocab.decode(result.best().tokens, skip_special=True)
                out_fh.write(" ".join(words) + "\n")
    finally:
        if trace_fh:
            trace_fh.close()
        if out_fh is not sys.stdout:
            out_fh.close()
    return 0


def _read_lines(path) -> List[List[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def cmd_eval(args) -> int:
    cands = _read_lines(args.candidates)
    refs = _read_lines(args.references)
    if len(cands) != len(refs):
        print(f"error: line counts differ: {len(cands)} candidates vs "
              f"{len(refs)} references", file=sys.stderr)
        return 1
    for variant in (1, 2, "L"):
        score = X.rouge(cands, refs, variant=variant, basis=args.basis,
                        byte_limit=args.byte_limit)
        print(f"rouge-{str(variant).lower()}-{args.basis}\t{score:.6f}")
    print(f"repeat_rate\t{X.repeat_rate(cands):.6f}")
    return 0


def cmd_wfe_eval(args) -> int:
    ck = C.load(args.model)
    if not ck.has_wfe:
        print("error: checkpoint has no frequency-head parameters; "
              "it was trained with --no-wfe", file=sys.stderr)
        return 1
    src_vocab = D.Vocabulary.load(args.src_vocab)
    tgt_vocab = D.Vocabulary.load(args.tgt_vocab)
    corpus = D.encode_corpus(D.read_corpus(args.data), src_vocab, tgt_vocab)
    matrix = X.wfe_confusion(ck.params, corpus, ck.model_cfg)
    print(matrix.render())
    print(f"pairs_evaluated\t{matrix.total}")
    return 0


_HANDLERS = {
    "data-gen": cmd_data_gen,
    "train": cmd_train,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "wfe-eval": cmd_wfe_eval,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if getattr(pre, "config", None):
        try:
            values = load_config_file(pre.config)
        except (OSError, ValueError) as err:
            print(f"error: cannot read config: {err}", file=sys.stderr)
            return 1
        apply_config_defaults(commands[pre.command], values)
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (OSError, ValueError, KeyError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
