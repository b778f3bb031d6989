"""K-best beam search with optional per-word frequency budgets.

Baseline mode scores candidates by cumulative log-likelihood. Budget mode
("wfe") adds a non-positive adjustment log(clip01(remaining budget) * gate)
to every candidate word; a word whose budget is exhausted (or whose gate is
zero) scores -inf and can never be emitted again by that hypothesis. The
working/complete queue discipline follows the synchronized K-best scheme:
expand every working hypothesis, pick the best K - C cells over the joint
score matrix, then keep the top K of new candidates plus already-complete
outputs until everything is complete.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as M
from . import tensor as T
from . import wfe as W
from .model import DecoderState, EncoderStates, ModelConfig
from .tensor import Tensor

# Finite stand-in for -inf inside score matrices; keeps sorting total.
NEG_INF = -1e30
_BLOCKED = -1e29  # cells at or below this are never materialized


class BeamStateError(RuntimeError):
    """Raised when a hypothesis lacks the state an operation needs."""


@dataclass
class BeamHypothesis:
    s: float                                  # cumulative log-likelihood
    y_hat: List[int]                          # emitted ids, starts with BOS
    state: DecoderState
    r_tilde: Optional[np.ndarray] = None      #残budget, budget mode only
    complete: bool = False
    forced_eos: bool = False                  # completed only via length guard

    @property
    def tokens(self) -> List[int]:
        """Emitted tokens without the leading BOS."""
        return self.y_hat[1:]


@dataclass
class ScoreMatrix:
    """Candidate log-likelihoods, one column per working hypothesis."""

    columns: List[np.ndarray]

    @property
    def matrix(self) -> np.ndarray:
        return np.stack(self.columns, axis=1)   # M x (K - C)


@dataclass
class BeamConfig:
    K: int = 5
    mode: str = "baseline"                    # "baseline" | "wfe"
    max_len: Optional[int] = None             # default: 2 * source length + 5
    special_ids: Tuple[int, ...] = (M.BOS_ID, M.EOS_ID, M.UNK_ID)
    r_hat: Optional[np.ndarray] = None        # budget override (budget mode)
    g_hat: Optional[np.ndarray] = None        # gate override (budget mode)
    trace: Optional[object] = None            # list or file-like for records

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"beam width must be >= 1, got {self.K}")
        if self.mode not in ("baseline", "wfe"):
            raise ValueError(f"unknown decode mode '{self.mode}'")
        if self.max_len is not None and self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")


class BeamResult(Sequence):
    """Complete hypotheses ranked best-first, plus a length-guard warning."""

    def __init__(self, hypotheses: List[BeamHypothesis], warning: bool):
        self.hypotheses = hypotheses
        self.warning = warning

    def __len__(self):
        return len(self.hypotheses)

    def __getitem__(self, i):
        return self.hypotheses[i]

    def best(self) -> BeamHypothesis:
        return self.hypotheses[0]


def _step_scores(h: BeamHypothesis, enc: EncoderStates,
                 params: Dict[str, Tensor], cfg: ModelConfig
                 ) -> Tuple[np.ndarray, DecoderState]:
    """Base candidate scores v(s, M) + log softmax(o_j) and the next state."""
    with T.no_grad():
        step = M.decode_step(enc, h.state, h.y_hat[-1], params, cfg)
        base = h.s + T.log_softmax(step.o).data
    return base, step.state


def calc_ll(h: BeamHypothesis, enc: EncoderStates,
            params: Dict[str, Tensor], cfg: ModelConfig) -> np.ndarray:
    """Candidate log-likelihood vector for one working hypothesis."""
    if h.complete:
        raise BeamStateError("cannot expand a complete hypothesis")
    return _step_scores(h, enc, params, cfg)[0]


def budget_adjustment(r_tilde: np.ndarray, g_hat: np.ndarray,
                      special_ids: Sequence[int]) -> np.ndarray:
    """Non-positive score adjustment log(clip01(budget) * gate).

    Exactly -inf where the clipped budget or the gate is zero; special
    tokens are exempt (adjustment 0) so decoding can always terminate.
    """
    val = np.clip(r_tilde, 0.0, 1.0) * g_hat
    pos = val > 0
    adj = np.full_like(val, -np.inf)
    np.log(val, out=adj, where=pos)
    adj = np.minimum(adj, 0.0)
    adj[list(special_ids)] = 0.0
    return adj


def calc_ll_wfe(h: BeamHypothesis, enc: EncoderStates,
                params: Dict[str, Tensor], cfg: ModelConfig,
                g_hat: np.ndarray,
                special_ids: Sequence[int] = (M.BOS_ID, M.EOS_ID, M.UNK_ID)
                ) -> np.ndarray:
    """Budget-adjusted candidate scores: calc_ll plus the budget term."""
    if h.r_tilde is None:
        raise BeamStateError("hypothesis carries no residual budget")
    return calc_ll(h, enc, params, cfg) + budget_adjustment(
        h.r_tilde, g_hat, special_ids)


def update_budget(r_tilde: np.ndarray, emitted: int,
                  special_ids: Sequence[int] = (M.BOS_ID, M.EOS_ID, M.UNK_ID)
                  ) -> np.ndarray:
    """Spend one unit of the emitted word's budget (special tokens exempt)."""
    out = r_tilde.copy()
    if emitted not in special_ids:
        out[emitted] -= 1.0
    return out


def _emit_trace(sink, record: dict):
    line = json.dumps(record)
    if hasattr(sink, "write"):
        sink.write(line + "\n")
    else:
        sink.append(line)


def beam_search(X: List[int], params: Dict[str, Tensor], cfg: ModelConfig,
                beam: Optional[BeamConfig] = None) -> BeamResult:
    """Decode one source sequence; returns complete hypotheses best-first.

    In budget mode the estimate comes from the frequency head unless the
    config carries explicit r_hat/g_hat overrides.
    """
    if beam is None:
        beam = BeamConfig()
    wfe_mode = beam.mode == "wfe"
    g_hat = r_hat = None
    with T.no_grad():
        enc = M.encode(X, params, cfg)
        state0 = M.init_decoder_state(enc, params)
        if wfe_mode:
            if beam.r_hat is None or beam.g_hat is None:
                est = W.wfe_forward(enc.H_s, W.WfeParams.from_dict(params))
            r_hat = (est.r_hat.data if beam.r_hat is None
                     else np.asarray(beam.r_hat, dtype=np.float64))
            g_hat = (est.g_hat.data if beam.g_hat is None
                     else np.asarray(beam.g_hat, dtype=np.float64))
            if (r_hat.shape != (cfg.tgt_vocab_size,)
                    or g_hat.shape != (cfg.tgt_vocab_size,)):
                raise T.DimensionError(
                    "budget vectors must cover the target vocabulary")

    max_len = beam.max_len if beam.max_len is not None else 2 * len(X) + 5
    specials = list(beam.special_ids)

    root = BeamHypothesis(s=0.0, y_hat=[M.BOS_ID], state=state0,
                          r_tilde=r_hat.copy() if wfe_mode else None)
    q_work: List[BeamHypothesis] = [root]
    q_complete: List[BeamHypothesis] = []
    step_no = 0

    while q_work:
        step_no += 1
        columns: List[np.ndarray] = []
        next_states: List[DecoderState] = []
        adjustments: List[np.ndarray] = []
        forced: List[bool] = []
        for h in q_work:
            base, nstate = _step_scores(h, enc, params, cfg)
            if wfe_mode:
                adj = budget_adjustment(h.r_tilde, g_hat, specials)
            else:
                adj = np.zeros_like(base)
            col = base + adj
            force = len(h.y_hat) - 1 >= max_len - 1
            if force:
                keep_eos = col[M.EOS_ID]
                col = np.full_like(col, -np.inf)
                col[M.EOS_ID] = keep_eos
            columns.append(np.maximum(col, NEG_INF))
            next_states.append(nstate)
            adjustments.append(adj)
            forced.append(force)

        scores = ScoreMatrix(columns).matrix          # M x |Q_w|
        want = beam.K - len(q_complete)

        # candidate order: score desc, then lexicographic output sequence
        # (parents share one length, so parent sequence order then token id)
        parent_rank = np.empty(len(q_work), dtype=np.int64)
        for rank, k in enumerate(sorted(range(len(q_work)),
                                        key=lambda k: q_work[k].y_hat)):
            parent_rank[k] = rank
        m_idx, k_idx = np.nonzero(scores > _BLOCKED)
        flat = scores[m_idx, k_idx]
        order = np.lexsort((m_idx, parent_rank[k_idx], -flat))
        chosen = order[:want]

        new_hyps: List[BeamHypothesis] = []
        for z in chosen:
            m = int(m_idx[z])
            k = int(k_idx[z])
            parent = q_work[k]
            hyp = BeamHypothesis(
                s=float(flat[z]),
                y_hat=parent.y_hat + [m],
                state=next_states[k],
                r_tilde=update_budget(parent.r_tilde, m, specials)
                if wfe_mode else None,
                complete=(m == M.EOS_ID),
                forced_eos=forced[k],
            )
            new_hyps.append(hyp)
            if beam.trace is not None:
                _emit_trace(beam.trace, {
                    "step": step_no,
                    "hypothesis": k,
                    "token": m,
                    "base_logprob": float(columns[k][m] - adjustments[k][m] - parent.s),
                    "adjustment": float(max(adjustments[k][m], NEG_INF)),
                    "budget": None if hyp.r_tilde is None
                    else [round(v, 6) for v in hyp.r_tilde.tolist()],
                })

        pool = q_complete + new_hyps
        pool.sort(key=lambda h: (-h.s, len(h.y_hat), h.y_hat))
        top = pool[:beam.K]
        q_complete = [h for h in top if h.complete]
        q_work = [h for h in top if not h.complete]

    q_complete.sort(key=lambda h: (-h.s, h.y_hat))
    warning = bool(q_complete) and all(h.forced_eos for h in q_complete)
    return BeamResult(q_complete, warning)
