"""Evaluation: ROUGE-1/2/L, surplus-repetition rate, and the frequency-head
confusion matrix.

ROUGE is a clean-room implementation of the standard formulas (clipped
n-gram overlap, longest common subsequence) without stemming or stopword
handling; scores are meant for internal comparison between runs, not for
cross-toolkit comparison.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as M
from . import tensor as T
from . import wfe as W
from .data import ParallelCorpus
from .model import ModelConfig, RESERVED_TOKENS
from .tensor import Tensor


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped_overlap(cand: Counter, ref: Counter) -> int:
    return sum(min(count, ref[gram]) for gram, count in cand.items())


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def truncate_bytes(tokens: Sequence[str], limit: int) -> List[str]:
    """Cut the space-joined text to at most ``limit`` UTF-8 bytes, never
    splitting inside a multi-byte character."""
    raw = " ".join(tokens).encode("utf-8")
    if len(raw) <= limit:
        return list(tokens)
    cut = raw[:limit]
    while cut and (cut[-1] & 0xC0) == 0x80:  # continuation byte
        cut = cut[:-1]
    return cut.decode("utf-8").split()


def _pair_scores(cand: Sequence[str], ref: Sequence[str],
                 variant) -> Tuple[float, float, float]:
    """(precision, recall, f1) for one candidate/reference pair."""
    if str(variant).lower() == "l":
        match = lcs_length(cand, ref)
        cand_total, ref_total = len(cand), len(ref)
    else:
        n = int(variant)
        cand_grams = _ngrams(cand, n)
        ref_grams = _ngrams(ref, n)
        match = _clipped_overlap(cand_grams, ref_grams)
        cand_total = sum(cand_grams.values())
        ref_total = sum(ref_grams.values())
    precision = match / cand_total if cand_total else 0.0
    recall = match / ref_total if ref_total else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return precision, recall, f1


def rouge(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
          variant=1, basis: str = "recall",
          byte_limit: Optional[int] = None) -> float:
    """Corpus ROUGE score: mean of per-pair scores in the chosen basis.

    variant: 1, 2, or "L"; basis: "recall" or "f1". A byte limit truncates
    each candidate before scoring (the short-summary evaluation protocol).
    """
    if len(candidates) != len(references):
        raise ValueError(f"candidate/reference counts differ: "
                         f"{len(candidates)} vs {len(references)}")
    if basis not in ("recall", "f1"):
        raise ValueError(f"unknown basis '{basis}'")
    if not candidates:
        raise ValueError("nothing to score")
    total = 0.0
    for cand, ref in zip(candidates, references):
        if not ref:
            warnings.warn("empty reference scored as 0", stacklevel=2)
            continue
        if byte_limit is not None:
            cand = truncate_bytes(cand, byte_limit)
        precision, recall, f1 = _pair_scores(cand, ref, variant)
        total += recall if basis == "recall" else f1
    return total / len(candidates)


def repeat_rate(outputs: Sequence[Sequence[str]],
                special_tokens: frozenset = frozenset(RESERVED_TOKENS)) -> float:
    """Fraction of emitted tokens that are surplus repeats of an earlier
    token within the same output (special markers ignored)."""
    if not outputs:
        raise ValueError("repeat_rate needs at least one output")
    surplus = 0
    total = 0
    for out in outputs:
        counts = Counter(tok for tok in out if tok not in special_tokens)
        total += sum(counts.values())
        surplus += sum(c - 1 for c in counts.values() if c > 1)
    return surplus / total if total else 0.0


_ROW_LABELS = ("1", "2", ">=3")
_COL_LABELS = ("0", "1", "2", "3", ">=4")


@dataclass
class ConfusionMatrix:
    """True-frequency rows {1, 2, >=3} by estimated columns {0..3, >=4}."""

    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((3, 5), dtype=np.int64))

    def add(self, true_count: int, est_count: int):
        if true_count < 1:
            raise ValueError("only words with true frequency >= 1 are bucketed")
        row = min(true_count, 3) - 1
        col = min(max(est_count, 0), 4)
        self.counts[row, col] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def render(self) -> str:
        width = max(8, len(str(self.counts.max())) + 2)
        header = "true\\est".ljust(9) + "".join(c.rjust(width) for c in _COL_LABELS)
        lines = [header]
        for label, row in zip(_ROW_LABELS, self.counts):
            lines.append(label.ljust(9) + "".join(str(v).rjust(width) for v in row))
        return "\n".join(lines)


def wfe_confusion(params: Dict[str, Tensor], corpus: ParallelCorpus,
                  model_cfg: ModelConfig) -> ConfusionMatrix:
    """Bucket quantized estimates against true counts for every (example,
    word) pair whose true frequency is at least 1."""
    head = W.WfeParams.from_dict(params)
    matrix = ConfusionMatrix()
    with T.no_grad():
        for X, Y in corpus:
            enc = M.encode(X, params, model_cfg)
            estimate = W.wfe_forward(enc.H_s, head)
            quantized = W.quantize(estimate.a_hat.data)
            a_star = W.true_frequency(Y, model_cfg.tgt_vocab_size)
            for m in np.nonzero(a_star >= 1)[0]:
                matrix.add(int(a_star[m]), int(quantized[m]))
    return matrix
