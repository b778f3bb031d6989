"""Word-frequency estimation head.

From the encoder state matrix it predicts, per target-vocabulary word, a
frequency component (sum-pooled over source positions, ReLU-activated) and
an occurrence gate (max/min-pooled, sigmoid-activated); their elementwise
product is the combined estimate. Training uses an epsilon-insensitive
asymmetric hinge so that over-estimation is penalized more gently than
under-estimation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from . import tensor as T
from .tensor import Rng, Tensor

PARAM_NAMES = ("wfe.W_r1", "wfe.W_r2", "wfe.W_g1", "wfe.W_g2")


@dataclass
class WfeParams:
    W_r1: Tensor    # H x H
    W_r2: Tensor    # M x H
    W_g1: Tensor    # H x H
    W_g2: Tensor    # M x 2H

    def __post_init__(self):
        h = self.W_r1.data.shape
        if len(h) != 2 or h[0] != h[1]:
            raise T.DimensionError(f"W_r1 must be square, got {h}")
        H = h[0]
        m = self.W_r2.data.shape[0]
        expect = {
            "W_r2": (m, H),
            "W_g1": (H, H),
            "W_g2": (m, 2 * H),
        }
        for name, shape in expect.items():
            got = getattr(self, name).data.shape
            if got != shape:
                raise T.DimensionError(f"{name} must have shape {shape}, got {got}")

    @classmethod
    def from_dict(cls, params: Dict[str, Tensor]) -> "WfeParams":
        missing = [n for n in PARAM_NAMES if n not in params]
        if missing:
            raise KeyError(f"missing frequency-head parameters: {missing}")
        return cls(*(params[n] for n in PARAM_NAMES))


@dataclass
class WfeEstimate:
    r: Tensor        # pre-activation frequency, length M
    g: Tensor        # pre-activation occurrence, length M
    r_hat: Tensor    # ReLU(r), in [0, inf)
    g_hat: Tensor    # Sigmoid(g), in (0, 1)
    a_hat: Tensor    # r_hat * g_hat elementwise


@dataclass
class WfeLossConfig:
    epsilon: float = 0.25   # no-penalty margin around the integer target
    b: int = 2              # hinge exponent
    c1: float = 0.2         # over-estimation weight
    c2: float = 1.0         # under-estimation weight

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.b < 1:
            raise ValueError(f"exponent must be >= 1, got {self.b}")
        if not 0 < self.c1 < self.c2:
            raise ValueError(f"need 0 < c1 < c2, got c1={self.c1}, c2={self.c2}")


def param_shapes(H: int, M: int) -> Dict[str, tuple]:
    return {
        "wfe.W_r1": (H, H),
        "wfe.W_r2": (M, H),
        "wfe.W_g1": (H, H),
        "wfe.W_g2": (M, 2 * H),
    }


def init_params(H: int, M: int, rng: Rng, scale: float = 0.08) -> Dict[str, Tensor]:
    """Fresh frequency-head parameters under the canonical checkpoint names."""
    return {name: Tensor(rng.uniform(-scale, scale, shape), requires_grad=True)
            for name, shape in param_shapes(H, M).items()}


def wfe_forward(H_s: Tensor, params: WfeParams) -> WfeEstimate:
    """Estimate per-word output frequencies from encoder states (H x I).

    The frequency path sums features over all source positions; the
    occurrence path max/min-pools them as positive and negative votes.
    """
    freq_feats = T.matmul(params.W_r1, H_s)          # H x I
    r = T.matvec(params.W_r2, T.row_sum(freq_feats))  # sum over positions
    occ_feats = T.matmul(params.W_g1, H_s)           # H x I
    pooled = T.concat([T.row_max(occ_feats), T.row_min(occ_feats)])
    g = T.matvec(params.W_g2, pooled)
    r_hat = T.relu(r)
    g_hat = T.sigmoid(g)
    return WfeEstimate(r=r, g=g, r_hat=r_hat, g_hat=g_hat,
                       a_hat=T.mul(r_hat, g_hat))


def true_frequency(Y: Sequence[int], vocab_size: int) -> np.ndarray:
    """Count each target word in the reference output (EOS included)."""
    a_star = np.zeros(vocab_size, dtype=np.int64)
    for y in Y:
        a_star[y] += 1
    return a_star


def wfe_loss(estimate: WfeEstimate, a_star: np.ndarray,
             cfg: WfeLossConfig = WfeLossConfig()) -> Tensor:
    """Epsilon-insensitive asymmetric regression loss against true counts.

    Zero exactly when every estimate lies within +-epsilon of its target;
    overshoot beyond the margin costs c1 * excess^b, undershoot c2 * excess^b.
    """
    target = np.asarray(a_star, dtype=np.float64)
    if target.shape != estimate.a_hat.data.shape:
        raise T.DimensionError(
            f"target shape {target.shape} does not match estimate "
            f"shape {estimate.a_hat.data.shape}")
    over = T.relu(T.sub(estimate.a_hat, Tensor(target + cfg.epsilon)))
    under = T.relu(T.sub(Tensor(target - cfg.epsilon), estimate.a_hat))
    return T.add(T.scale(T.sum_all(T.ipow(over, cfg.b)), cfg.c1),
                 T.scale(T.sum_all(T.ipow(under, cfg.b)), cfg.c2))


def quantize(a_hat) -> np.ndarray:
    """Round estimates to integer buckets: floor(a + 0.5), elementwise."""
    return np.floor(np.asarray(a_hat, dtype=np.float64) + 0.5).astype(np.int64)
