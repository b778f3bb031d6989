"""Joint training of the encoder-decoder and the frequency head.

Two-phase schedule: Adam for the first few epochs, plain SGD afterwards,
each phase with its own learning rate and global-norm gradient clip. The
corpus is reshuffled every epoch from the run seed, validation joint loss
drives early stopping, and the best-validation parameters are returned.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as M
from . import tensor as T
from . import wfe as W
from .checkpoint import Checkpoint, load, save  # re-exported persistence API
from .model import ModelConfig
from .tensor import Rng, Tensor
from .wfe import WfeLossConfig

Pair = Tuple[List[int], List[int]]


class TrainingDivergedError(RuntimeError):
    """Raised when a batch produces a non-finite loss."""


@dataclass
class TrainConfig:
    adam_epochs: int = 5        # optimizer switch boundary
    lr_adam: float = 0.001
    lr_sgd: float = 0.01
    clip_adam: float = 10.0
    clip_sgd: float = 5.0
    batch_size: int = 16
    max_epochs: int = 15
    patience: int = 3           # epochs without val improvement before stop
    dropout: float = 0.3
    wfe_weight: float = 1.0     # joint-objective weight; 0 trains the pure baseline
    seed: int = 0

    def __post_init__(self):
        if self.lr_adam <= 0 or self.lr_sgd <= 0:
            raise ValueError("learning rates must be positive")
        if self.clip_adam <= 0 or self.clip_sgd <= 0:
            raise ValueError("clip thresholds must be positive")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.wfe_weight < 0:
            raise ValueError(f"wfe_weight must be >= 0, got {self.wfe_weight}")


@dataclass
class EpochLog:
    epoch: int
    phase: str
    train_nll: float
    train_wfe: float
    val_nll: float
    val_wfe: float
    seconds: float

    def line(self, include_seconds: bool = True) -> str:
        fields = [str(self.epoch), self.phase,
                  repr(self.train_nll), repr(self.train_wfe),
                  repr(self.val_nll), repr(self.val_wfe)]
        if include_seconds:
            fields.append(f"{self.seconds:.3f}")
        return "\t".join(fields)


@dataclass
class TrainResult:
    params: Dict[str, Tensor]
    log: List[EpochLog]
    best_epoch: int
    best_val: float


class Sgd:
    def __init__(self, params: Dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params.values():
            if p.grad is not None:
                p.data -= self.lr * p.grad


class Adam:
    def __init__(self, params: Dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1 ** self.t)
            v_hat = self.v[k] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_global_norm(params: Dict[str, Tensor], threshold: float) -> float:
    """Scale all gradients so their joint L2 norm is at most threshold."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm > threshold:
        factor = threshold / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return norm


def joint_loss(X: List[int], Y: List[int], params: Dict[str, Tensor],
               model_cfg: ModelConfig, loss_cfg: WfeLossConfig,
               wfe_weight: float = 1.0, training: bool = False,
               rng: Optional[Rng] = None) -> Tuple[Tensor, float, float]:
    """NLL plus weighted frequency loss over one shared encoder pass.

    Returns (joint tensor, nll value, frequency-loss value); the frequency
    term is 0.0 when the weight is 0 (pure baseline objective).
    """
    enc = M.encode(X, params, model_cfg, training=training, rng=rng)
    nll = M.nll_from_states(enc, Y, params, model_cfg, training=training, rng=rng)
    if wfe_weight == 0.0:
        return nll, nll.item(), 0.0
    estimate = W.wfe_forward(enc.H_s, W.WfeParams.from_dict(params))
    a_star = W.true_frequency(Y, model_cfg.tgt_vocab_size)
    psi = W.wfe_loss(estimate, a_star, loss_cfg)
    joint = T.add(nll, T.scale(psi, wfe_weight))
    return joint, nll.item(), psi.item()


def init_all_params(model_cfg: ModelConfig, rng: Rng,
                    with_wfe: bool) -> Dict[str, Tensor]:
    params = M.init_params(model_cfg, rng)
    if with_wfe:
        params.update(W.init_params(model_cfg.H, model_cfg.tgt_vocab_size, rng))
    return params


def _epoch_phase(epoch: int, cfg: TrainConfig) -> str:
    return "adam" if epoch < cfg.adam_epochs else "sgd"


def _evaluate(corpus: Sequence[Pair], params, model_cfg, loss_cfg,
              wfe_weight) -> Tuple[float, float]:
    nll_total = wfe_total = 0.0
    for X, Y in corpus:
        _, nll_v, wfe_v = joint_loss(X, Y, params, model_cfg, loss_cfg,
                                     wfe_weight, training=False)
        nll_total += nll_v
        wfe_total += wfe_v
    n = max(1, len(corpus))
    return nll_total / n, wfe_total / n


def train(corpus: Sequence[Pair], val_corpus: Sequence[Pair],
          model_cfg: ModelConfig, cfg: TrainConfig,
          loss_cfg: Optional[WfeLossConfig] = None) -> TrainResult:
    """Run the two-phase schedule and return the best-validation parameters."""
    if not corpus or not val_corpus:
        raise ValueError("training and validation corpora must be nonempty")
    loss_cfg = loss_cfg or WfeLossConfig()
    model_cfg = dataclasses.replace(model_cfg, dropout_rate=cfg.dropout)
    lam = cfg.wfe_weight

    root = Rng(cfg.seed)
    init_rng = root.spawn(1)
    shuffle_rng = root.spawn(2)
    dropout_rng = root.spawn(3) if cfg.dropout > 0 else None
    params = init_all_params(model_cfg, init_rng, with_wfe=lam > 0)

    log: List[EpochLog] = []
    best_val = float("inf")
    best_snapshot: Dict[str, np.ndarray] = {k: p.data.copy() for k, p in params.items()}
    best_epoch = -1
    stale = 0
    optimizer = None
    phase_of_optimizer = None

    for epoch in range(cfg.max_epochs):
        started = time.perf_counter()
        phase = _epoch_phase(epoch, cfg)
        if phase != phase_of_optimizer:
            optimizer = (Adam(params, cfg.lr_adam) if phase == "adam"
                         else Sgd(params, cfg.lr_sgd))
            phase_of_optimizer = phase
        clip = cfg.clip_adam if phase == "adam" else cfg.clip_sgd

        order = list(range(len(corpus)))
        shuffle_rng.shuffle(order)
        nll_sum = wfe_sum = 0.0
        for batch_index, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = order[start:start + cfg.batch_size]
            for p in params.values():
                p.zero_grad()
            for i in batch:
                X, Y = corpus[i]
                joint, nll_v, wfe_v = joint_loss(
                    X, Y, params, model_cfg, loss_cfg, lam,
                    training=True, rng=dropout_rng)
                if not np.isfinite(joint.data):
                    raise TrainingDivergedError(
                        f"non-finite loss in epoch {epoch} batch {batch_index}")
                T.scale(joint, 1.0 / len(batch)).backward()
                nll_sum += nll_v
                wfe_sum += wfe_v
            clip_global_norm(params, clip)
            optimizer.step()

        train_nll = nll_sum / len(corpus)
        train_wfe = wfe_sum / len(corpus)
        val_nll, val_wfe = _evaluate(val_corpus, params, model_cfg, loss_cfg, lam)
        log.append(EpochLog(epoch=epoch, phase=phase,
                            train_nll=train_nll, train_wfe=train_wfe,
                            val_nll=val_nll, val_wfe=val_wfe,
                            seconds=time.perf_counter() - started))

        val_joint = val_nll + lam * val_wfe
        if val_joint < best_val:
            best_val = val_joint
            best_epoch = epoch
            best_snapshot = {k: p.data.copy() for k, p in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    best_params = {k: Tensor(v, requires_grad=True)
                   for k, v in best_snapshot.items()}
    return TrainResult(params=best_params, log=log,
                       best_epoch=best_epoch, best_val=best_val)
