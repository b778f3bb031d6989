"""Shared test oracles, written independently of the beam-search module."""

import numpy as np

from freqcap import model as M
from freqcap import tensor as T


def greedy_decode(X, params, cfg, max_len):
    """Step-by-step argmax decoder."""
    with T.no_grad():
        enc = M.encode(X, params, cfg)
        state = M.init_decoder_state(enc, params)
    y, s = [M.BOS_ID], 0.0
    while True:
        with T.no_grad():
            step = M.decode_step(enc, state, y[-1], params, cfg)
            lp = T.log_softmax(step.o).data
        m = M.EOS_ID if len(y) - 1 >= max_len - 1 else int(np.argmax(lp))
        s += lp[m]
        y.append(m)
        state = step.state
        if m == M.EOS_ID:
            return y, s


def enumerate_complete(X, params, cfg, max_len):
    """Exhaustively score every sequence the decoder could emit."""
    with T.no_grad():
        enc = M.encode(X, params, cfg)
        state0 = M.init_decoder_state(enc, params)
    results = []

    def rec(state, y, s):
        with T.no_grad():
            step = M.decode_step(enc, state, y[-1], params, cfg)
            lp = T.log_softmax(step.o).data
        emitted = len(y) - 1
        choices = ([M.EOS_ID] if emitted == max_len - 1
                   else range(cfg.tgt_vocab_size))
        for m in choices:
            if m == M.EOS_ID:
                results.append((s + lp[m], y + [m]))
            else:
                rec(step.state, y + [m], s + lp[m])

    rec(state0, [M.BOS_ID], 0.0)
    return results
