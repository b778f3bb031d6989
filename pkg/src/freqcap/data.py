"""Vocabularies, the synthetic keyword-compression corpus, and file formats.

Corpus files are UTF-8 text with one ``source<TAB>target`` pair per line,
tokens space-separated. Vocabulary files carry one token per line in id
order, reserved tokens first.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

from .model import BOS_ID, EOS_ID, UNK_ID, RESERVED_TOKENS
from .tensor import Rng

TextPair = Tuple[List[str], List[str]]
IdPair = Tuple[List[int], List[int]]


class Vocabulary:
    """Token table with fixed reserved ids BOS=0, EOS=1, UNK=2."""

    def __init__(self, content_tokens: Iterable[str]):
        self.tokens: List[str] = list(RESERVED_TOKENS) + list(content_tokens)
        self.ids: Dict[str, int] = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.ids) != len(self.tokens):
            dupes = [t for t, n in Counter(self.tokens).items() if n > 1]
            raise ValueError(f"duplicate tokens in vocabulary: {dupes}")

    def __len__(self):
        return len(self.tokens)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.ids.get(tok, UNK_ID) for tok in tokens]

    def decode(self, ids: Sequence[int], skip_special: bool = False) -> List[str]:
        out = []
        for i in ids:
            if skip_special and i in (BOS_ID, EOS_ID, UNK_ID):
                continue
            out.append(self.tokens[i])
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        if tuple(tokens[:3]) != RESERVED_TOKENS:
            raise ValueError(
                f"vocabulary file must begin with {RESERVED_TOKENS}, "
                f"got {tuple(tokens[:3])}")
        return cls(tokens[3:])


def build_vocab(texts: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Keep the most frequent tokens, ties broken lexicographically.

    ``max_size`` includes the three reserved entries.
    """
    if max_size < len(RESERVED_TOKENS):
        raise ValueError(f"max_size must cover the reserved tokens, got {max_size}")
    counts = Counter()
    for text in texts:
        counts.update(text)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [tok for tok, _ in ranked[:max_size - len(RESERVED_TOKENS)]]
    return Vocabulary(keep)


@dataclass
class ParallelCorpus:
    """Encoded pairs; every target ends with EOS."""

    pairs: List[IdPair]

    def __post_init__(self):
        for i, (src, tgt) in enumerate(self.pairs):
            if not src or not tgt:
                raise ValueError(f"pair {i} has an empty side")
            if tgt[-1] != EOS_ID:
                raise ValueError(f"pair {i} target does not end with EOS")

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]


def encode_corpus(pairs: Sequence[TextPair], src_vocab: Vocabulary,
                  tgt_vocab: Vocabulary) -> ParallelCorpus:
    return ParallelCorpus([
        (src_vocab.encode(src), tgt_vocab.encode(tgt) + [EOS_ID])
        for src, tgt in pairs
    ])


@dataclass
class SynthConfig:
    pairs: int = 500
    content_words: int = 30     # candidate keywords, also the target vocabulary
    filler_words: int = 12      # noise tokens appearing only in sources
    min_content: int = 3        # keywords per pair
    max_content: int = 6
    max_fillers_between: int = 2

    def __post_init__(self):
        if self.pairs < 1:
            raise ValueError(f"need at least one pair, got {self.pairs}")
        total = self.content_words + self.filler_words + len(RESERVED_TOKENS)
        if total < 20:
            raise ValueError(f"vocabulary would have only {total} entries; need >= 20")
        if not 1 <= self.min_content <= self.max_content <= self.content_words:
            raise ValueError("content range must satisfy "
                             "1 <= min_content <= max_content <= content_words")


@dataclass
class SyntheticCorpus:
    pairs: List[TextPair]
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary


# repetition counts are drawn from this pool: mostly single occurrences,
# occasionally doubled, so true frequencies concentrate on 1
_COUNT_POOL = (1, 1, 1, 2)


def gen_synthetic(cfg: SynthConfig, seed: int) -> SyntheticCorpus:
    """Keyword-compression task: the target lists the source's keywords, in
    order, with their source multiplicities; fillers are dropped.

    Each keyword occurs in the source exactly as often as in the target, so
    the true output frequency of every word is recoverable from the input.
    """
    rng = Rng(seed)
    content = [f"kw{i:02d}" for i in range(cfg.content_words)]
    fillers = [f"f{i:02d}" for i in range(cfg.filler_words)]

    pairs: List[TextPair] = []
    for _ in range(cfg.pairs):
        n = cfg.min_content + rng.integers(cfg.max_content - cfg.min_content + 1)
        chosen_idx: List[int] = []
        while len(chosen_idx) < n:
            c = rng.integers(cfg.content_words)
            if c not in chosen_idx:
                chosen_idx.append(c)
        stream: List[str] = []
        for c in chosen_idx:
            count = _COUNT_POOL[rng.integers(len(_COUNT_POOL))]
            stream.extend([content[c]] * count)
        source: List[str] = []
        for tok in stream:
            for _ in range(rng.integers(cfg.max_fillers_between + 1)):
                source.append(fillers[rng.integers(cfg.filler_words)])
            source.append(tok)
        pairs.append((source, list(stream)))

    return SyntheticCorpus(
        pairs=pairs,
        src_vocab=Vocabulary(content + fillers),
        tgt_vocab=Vocabulary(content),
    )


def split_corpus(pairs: Sequence[TextPair],
                 fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
                 ) -> Tuple[List[TextPair], List[TextPair], List[TextPair]]:
    """Contiguous train/val/test split; generation order is already random."""
    n = len(pairs)
    n_train = int(n * fractions[0])
    n_val = int(n * fractions[1])
    train = list(pairs[:n_train])
    val = list(pairs[n_train:n_train + n_val])
    test = list(pairs[n_train + n_val:])
    return train, val, test


def write_corpus(path, pairs: Sequence[TextPair]):
    with open(path, "w", encoding="utf-8") as fh:
        for src, tgt in pairs:
            fh.write(" ".join(src) + "\t" + " ".join(tgt) + "\n")


def read_corpus(path) -> List[TextPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{lineno}: missing tab separator")
            src, tgt = line.split("\t", 1)
            pairs.append((src.split(), tgt.split()))
    return pairs
