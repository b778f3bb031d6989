"""Attentional encoder-decoder: 2-layer bidirectional LSTM encoder, 2-layer
LSTM decoder with multiplicative global attention, and an output projection
over the target vocabulary.

All parameters live in a flat name -> Tensor dict so the optimizer and the
checkpoint writer can treat the model generically. Vectors are 1-D tensors;
the encoder state matrix is H x I with one column per source position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import tensor as T
from .tensor import Rng, Tensor

BOS_ID = 0
EOS_ID = 1
UNK_ID = 2
RESERVED_TOKENS = ("<s>", "</s>", "<unk>")


class InputError(ValueError):
    """Raised for malformed model inputs (empty sequences, bad token ids)."""


@dataclass
class ModelConfig:
    D: int = 32                # embedding dimension
    H: int = 64                # hidden dimension (split across directions)
    src_vocab_size: int = 200
    tgt_vocab_size: int = 200
    layers: int = 2
    dropout_rate: float = 0.3

    def __post_init__(self):
        if self.D < 1 or self.H < 1:
            raise ValueError(f"D and H must be >= 1, got D={self.D}, H={self.H}")
        if self.H % 2 != 0:
            raise ValueError(f"H must be even to split across directions, got {self.H}")
        if self.layers != 2:
            raise ValueError("only 2-layer encoder/decoder stacks are supported")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for side, n in (("src", self.src_vocab_size), ("tgt", self.tgt_vocab_size)):
            if n < len(RESERVED_TOKENS):
                raise ValueError(f"{side} vocabulary must cover the reserved tokens")


@dataclass
class EncoderStates:
    """Per-position encoder columns plus final states for decoder init."""

    H_s: Tensor                                  # H x I
    # per layer: ((h_fwd, c_fwd), (h_bwd, c_bwd)), each vector H/2
    finals: List[Tuple[Tuple[Tensor, Tensor], Tuple[Tensor, Tensor]]]

    @property
    def length(self) -> int:
        return self.H_s.data.shape[1]


@dataclass
class DecoderState:
    layers: List[Tuple[Tensor, Tensor]]          # (h, c) per layer, vectors H


@dataclass
class DecodeStep:
    o: Tensor                                    # pre-softmax scores over M
    state: DecoderState
    attn: Tensor                                 # weights over I positions


def param_shapes(cfg: ModelConfig) -> Dict[str, tuple]:
    """Canonical name -> shape map of every encoder-decoder parameter."""
    half = cfg.H // 2
    shapes = {}
    shapes["src_embed"] = (cfg.src_vocab_size, cfg.D)
    shapes["tgt_embed"] = (cfg.tgt_vocab_size, cfg.D)
    for layer in range(cfg.layers):
        in_dim = cfg.D if layer == 0 else cfg.H
        for d in ("fwd", "bwd"):
            prefix = f"enc.l{layer}.{d}"
            shapes[f"{prefix}.W_x"] = (4 * half, in_dim)
            shapes[f"{prefix}.W_h"] = (4 * half, half)
            shapes[f"{prefix}.b"] = (4 * half,)
        dec_in = cfg.D if layer == 0 else cfg.H
        shapes[f"dec.l{layer}.W_x"] = (4 * cfg.H, dec_in)
        shapes[f"dec.l{layer}.W_h"] = (4 * cfg.H, cfg.H)
        shapes[f"dec.l{layer}.b"] = (4 * cfg.H,)
        shapes[f"init.l{layer}.h"] = (cfg.H, cfg.H)
        shapes[f"init.l{layer}.c"] = (cfg.H, cfg.H)
    shapes["att.W_a"] = (cfg.H, cfg.H)
    shapes["att.W_c"] = (cfg.H, 2 * cfg.H)
    shapes["out.W"] = (cfg.tgt_vocab_size, cfg.H)
    shapes["out.b"] = (cfg.tgt_vocab_size,)
    return shapes


def init_params(cfg: ModelConfig, rng: Rng, scale: float = 0.08) -> Dict[str, Tensor]:
    """Fresh encoder-decoder parameters, uniform(-scale, scale)."""
    return {name: Tensor(rng.uniform(-scale, scale, shape), requires_grad=True)
            for name, shape in param_shapes(cfg).items()}


def zero_params(cfg: ModelConfig) -> Dict[str, Tensor]:
    """All-zero parameters (uniform-output model; handy in tests)."""
    params = init_params(cfg, Rng(0))
    for t in params.values():
        t.data[...] = 0.0
    return params


def dropout(x: Tensor, rate: float, rng: Optional[Rng]) -> Tensor:
    """Inverted dropout; identity when rate is 0 or no rng is supplied."""
    if rate <= 0.0 or rng is None:
        return x
    keep = rng.uniform(0.0, 1.0, x.data.shape) >= rate
    mask = Tensor(keep.astype(np.float64) / (1.0 - rate))
    return T.mul(x, mask)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor,
              W_x: Tensor, W_h: Tensor, b: Tensor) -> Tuple[Tensor, Tensor]:
    """One LSTM step. Gate layout in the fused affine output: i, f, g, o."""
    n = h.data.shape[0]
    gates = T.add(T.add(T.matvec(W_x, x), T.matvec(W_h, h)), b)
    i = T.sigmoid(T.slice_vec(gates, 0, n))
    f = T.sigmoid(T.slice_vec(gates, n, 2 * n))
    g = T.tanh(T.slice_vec(gates, 2 * n, 3 * n))
    o = T.sigmoid(T.slice_vec(gates, 3 * n, 4 * n))
    c2 = T.add(T.mul(f, c), T.mul(i, g))
    h2 = T.mul(o, T.tanh(c2))
    return h2, c2


def _run_direction(inputs: List[Tensor], prefix: str, params: Dict[str, Tensor],
                   half: int, reverse: bool) -> Tuple[List[Tensor], Tensor, Tensor]:
    W_x, W_h, b = params[f"{prefix}.W_x"], params[f"{prefix}.W_h"], params[f"{prefix}.b"]
    h = Tensor(np.zeros(half))
    c = Tensor(np.zeros(half))
    order = range(len(inputs) - 1, -1, -1) if reverse else range(len(inputs))
    outs: List[Optional[Tensor]] = [None] * len(inputs)
    for i in order:
        h, c = lstm_cell(inputs[i], h, c, W_x, W_h, b)
        outs[i] = h
    return outs, h, c


def encode(X: List[int], params: Dict[str, Tensor], cfg: ModelConfig,
           training: bool = False, rng: Optional[Rng] = None) -> EncoderStates:
    """Run the bidirectional encoder over source token ids."""
    if len(X) == 0:
        raise InputError("source sequence is empty")
    for x in X:
        if not 0 <= x < cfg.src_vocab_size:
            raise InputError(f"source token id {x} outside vocabulary "
                             f"of size {cfg.src_vocab_size}")
    drop = cfg.dropout_rate if training else 0.0
    half = cfg.H // 2
    inputs = [dropout(T.row(params["src_embed"], x), drop, rng) for x in X]
    finals = []
    for layer in range(cfg.layers):
        fwd, hf, cf = _run_direction(inputs, f"enc.l{layer}.fwd", params, half, False)
        bwd, hb, cb = _run_direction(inputs, f"enc.l{layer}.bwd", params, half, True)
        outs = [T.concat([f, b]) for f, b in zip(fwd, bwd)]
        finals.append(((hf, cf), (hb, cb)))
        if layer + 1 < cfg.layers:
            inputs = [dropout(o, drop, rng) for o in outs]
    return EncoderStates(H_s=T.stack_cols(outs), finals=finals)


def init_decoder_state(enc: EncoderStates, params: Dict[str, Tensor]) -> DecoderState:
    """Map concatenated final encoder states to the decoder's start state."""
    layers = []
    for layer, ((hf, cf), (hb, cb)) in enumerate(enc.finals):
        h = T.matvec(params[f"init.l{layer}.h"], T.concat([hf, hb]))
        c = T.matvec(params[f"init.l{layer}.c"], T.concat([cf, cb]))
        layers.append((h, c))
    return DecoderState(layers=layers)


def decode_step(enc: EncoderStates, state: DecoderState, y_prev: int,
                params: Dict[str, Tensor], cfg: ModelConfig,
                training: bool = False, rng: Optional[Rng] = None) -> DecodeStep:
    """One decoder step: stacked LSTM, bilinear attention, output scores."""
    if not 0 <= y_prev < cfg.tgt_vocab_size:
        raise InputError(f"target token id {y_prev} outside vocabulary "
                         f"of size {cfg.tgt_vocab_size}")
    drop = cfg.dropout_rate if training else 0.0
    x = dropout(T.row(params["tgt_embed"], y_prev), drop, rng)
    new_layers = []
    for layer, (h, c) in enumerate(state.layers):
        h2, c2 = lstm_cell(x, h, c,
                           params[f"dec.l{layer}.W_x"],
                           params[f"dec.l{layer}.W_h"],
                           params[f"dec.l{layer}.b"])
        new_layers.append((h2, c2))
        x = dropout(h2, drop, rng) if layer + 1 < cfg.layers else h2
    top = new_layers[-1][0]
    # multiplicative attention over encoder columns
    scores = T.matvec(T.transpose(enc.H_s), T.matvec(params["att.W_a"], top))
    attn = T.softmax(scores)
    context = T.matvec(enc.H_s, attn)
    combined = T.tanh(T.matvec(params["att.W_c"], T.concat([context, top])))
    combined = dropout(combined, drop, rng)
    o = T.add(T.matvec(params["out.W"], combined), params["out.b"])
    return DecodeStep(o=o, state=DecoderState(layers=new_layers), attn=attn)


def nll_from_states(enc: EncoderStates, Y: List[int], params: Dict[str, Tensor],
                    cfg: ModelConfig, training: bool = False,
                    rng: Optional[Rng] = None) -> Tensor:
    """Teacher-forced NLL given precomputed encoder states (shared-encoder
    path for joint objectives)."""
    if len(Y) == 0:
        raise InputError("target sequence is empty")
    if Y[-1] != EOS_ID:
        raise InputError("target sequence must end with EOS")
    state = init_decoder_state(enc, params)
    prev = BOS_ID
    total: Optional[Tensor] = None
    for y in Y:
        step = decode_step(enc, state, prev, params, cfg, training=training, rng=rng)
        term = T.pick(T.log_softmax(step.o), y)
        total = term if total is None else T.add(total, term)
        state = step.state
        prev = y
    return T.scale(total, -1.0)


def nll_loss(X: List[int], Y: List[int], params: Dict[str, Tensor],
             cfg: ModelConfig, training: bool = False,
             rng: Optional[Rng] = None) -> Tensor:
    """Teacher-forced negative log-likelihood -sum_j log p(y_j | y_<j, X)."""
    enc = encode(X, params, cfg, training=training, rng=rng)
    return nll_from_states(enc, Y, params, cfg, training=training, rng=rng)
