"""SGD training with per-sentence updates, periodic L2, and early stopping."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .config import ModelConfig, TrainConfig
from .corpus import Corpus, canonical_order
from .generation import greedy_decode
from .metrics import bleu
from .model import GeneratorModel

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    pass


def nll_loss(targets, dists) -> float:
    """-sum_t log p_t[y_t] for reference ids ``targets`` and distributions ``dists``."""
    dists = np.asarray(dists, dtype=np.float64)
    if len(targets) != len(dists):
        raise ValueError(f"{len(targets)} targets but {len(dists)} distributions")
    with np.errstate(divide="ignore"):
        return float(-sum(np.log(dists[t, y]) for t, y in enumerate(targets)))


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    valid_bleu: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    epochs: int = 0
    wall_time: float = 0.0
    seed: int = 0

    @property
    def best_valid_bleu(self) -> float:
        return self.valid_bleu[self.best_epoch] if self.valid_bleu else 0.0

    @property
    def best_valid_loss(self) -> float:
        return self.valid_loss[self.best_epoch] if self.valid_loss else math.inf


def training_pairs(corpus: Corpus):
    return [(da, delex.tokens) for da, delex in corpus.pairs()]


def mean_nll(model: GeneratorModel, pairs) -> float:
    if not pairs:
        return 0.0
    return float(np.mean([model.sentence_nll(da, toks).item() for da, toks in pairs]))


def greedy_bleu(model: GeneratorModel, corpus: Corpus) -> float:
    if not corpus.examples:
        return 0.0
    hyps = [greedy_decode(model, canonical_order(ex.da)).words for ex in corpus.examples]
    return bleu(hyps, [corpus.delex_references(ex) for ex in corpus.examples])


def sgd_step(model: GeneratorModel, lr: float, clip_norm: float | None) -> float:
    norm = model.params.global_norm(grads=True)
    factor = lr
    if clip_norm is not None and norm > clip_norm:
        factor = lr * clip_norm / norm
    for _, p in model.params.items():
        p.data -= factor * p.grad
    return norm


def train(
    model: GeneratorModel,
    train_set: Corpus,
    valid_set: Corpus,
    cfg: TrainConfig,
    stop_when=None,
) -> TrainReport:
    """Fit ``model`` in place and return the per-epoch history.

    Each reference is its own mini-batch.  Every ``cfg.l2_every``-th example
    the objective also carries ``cfg.l2_coeff * ||theta||^2``.  After each
    epoch the validation NLL decides early stopping: a non-improving epoch
    scales the learning rate by ``cfg.lr_decay``, and ``cfg.patience`` of
    them in a row end training.  The best-validation snapshot is restored.
    ``stop_when(report)`` may end training early when it returns True.
    """
    rng = np.random.default_rng(cfg.seed)
    pairs = training_pairs(train_set)
    valid_pairs = training_pairs(valid_set)
    report = TrainReport(seed=cfg.seed)
    lr = cfg.lr
    best = math.inf
    best_snapshot = model.params.snapshot()
    stale = 0
    seen = 0
    start = time.perf_counter()

    for epoch in range(cfg.max_epochs):
        total = 0.0
        for idx in rng.permutation(len(pairs)):
            da, toks = pairs[idx]
            seen += 1
            model.params.zero_grad()
            with ad.Graph() as graph:
                loss = model.sentence_nll(da, toks, cfg.dropout_rate, rng if cfg.dropout_rate > 0 else None)
                objective = loss
                if cfg.l2_coeff > 0 and seen % cfg.l2_every == 0:
                    objective = ad.add(loss, ad.scale(model.l2_penalty(), cfg.l2_coeff))
            value = loss.item()
            if not math.isfinite(value):
                graph.clear()
                raise NumericError(f"non-finite loss on training example {idx} ({da}) in epoch {epoch}")
            ad.backward(graph, objective)
            sgd_step(model, lr, cfg.clip_norm)
            total += value

        report.train_loss.append(total / max(len(pairs), 1))
        v_loss = mean_nll(model, valid_pairs)
        report.valid_loss.append(v_loss)
        report.valid_bleu.append(greedy_bleu(model, valid_set))
        report.lr.append(lr)
        report.epochs = epoch + 1
        log.info(
            "epoch %d train %.4f valid %.4f bleu %.4f lr %.4g",
            epoch, report.train_loss[-1], v_loss, report.valid_bleu[-1], lr,
        )
        if not math.isfinite(v_loss):
            raise NumericError(f"non-finite validation loss in epoch {epoch}")
        if v_loss < best:
            best = v_loss
            best_snapshot = model.params.snapshot()
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            lr *= cfg.lr_decay
            if stale >= cfg.patience:
                break
        if stop_when is not None and stop_when(report):
            break

    model.params.restore(best_snapshot)
    report.wall_time = time.perf_counter() - start
    return report


@dataclass
class RestartSummary:
    reports: list[TrainReport]
    valid_bleu: list[float]
    best_index: int
    mean_valid_bleu: float
    mean_valid_loss: float


def multi_restart(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_set: Corpus,
    valid_set: Corpus,
    workers: int = 1,
    train_overrides: list[dict] | None = None,
) -> tuple[GeneratorModel, RestartSummary]:
    """Train ``train_cfg.restarts`` models seeded ``seed, seed+1, ...``.

    Returns the model with the highest validation BLEU (greedy decoding)
    and a summary with per-run reports and their means.
    ``train_overrides[i]`` patches the config of run ``i``.
    """
    n = train_cfg.restarts

    def run(i):
        cfg = replace(train_cfg, seed=train_cfg.seed + i, **(train_overrides[i] if train_overrides else {}))
        model = GeneratorModel(model_cfg, train_set.vocabs, seed=cfg.seed)
        report = train(model, train_set, valid_set, cfg)
        return model, report

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n)))
    else:
        results = [run(i) for i in range(n)]

    final_bleu = [greedy_bleu(m, valid_set) for m, _ in results]
    best = int(np.argmax(final_bleu))
    summary = RestartSummary(
        reports=[r for _, r in results],
        valid_bleu=final_bleu,
        best_index=best,
        mean_valid_bleu=float(np.mean(final_bleu)),
        mean_valid_loss=float(np.mean([r.best_valid_loss for _, r in results])),
    )
    return results[best][0], summary
