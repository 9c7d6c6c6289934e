"""Over-generation with beam search, slot error counting, and reranking."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .config import BeamConfig
from .corpus import (
    BOS_ID,
    EOS_ID,
    RESERVED,
    DialogueAct,
    canonical_order,
    is_slot_token,
    licensed_slot_tokens,
)
from .decoder import DecodeState, advance, output_logits


class SlotErrors(NamedTuple):
    err: float
    missing: int
    redundant: int
    total: int


def slot_error_rate(tokens, da: DialogueAct) -> SlotErrors:
    """Missing and redundant slot tokens of a delexicalized utterance.

    Only delexicalizable pairs count (binary, dont_care and value-less slots
    are skipped).  A licensed token emitted k > 1 times adds k - 1 redundant
    occurrences; a slot token the act does not license is redundant.
    ``err = (missing + redundant) / total``, and 0 when ``total`` is 0.
    """
    licensed = Counter(licensed_slot_tokens(da))
    emitted = Counter(t for t in tokens if is_slot_token(t))
    missing = sum(max(0, n - emitted[tok]) for tok, n in licensed.items())
    redundant = sum(max(0, n - licensed[tok]) for tok, n in emitted.items())
    total = sum(licensed.values())
    err = (missing + redundant) / total if total else 0.0
    return SlotErrors(err, missing, redundant, total)


@dataclass
class Candidate:
    tokens: list[int]
    nll: float
    err: float = 0.0
    score: float = 0.0
    words: list[str] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] == EOS_ID


def content_words(model, tokens: list[int]) -> list[str]:
    """Token strings with EOS and other reserved symbols dropped."""
    itos = model.vocabs.words.itos
    return [itos[t] for t in tokens if itos[t] not in RESERVED]


def _prepare(model, da: DialogueAct):
    da = da if da.is_canonical() else canonical_order(da)
    return da, model.encode(da)


def greedy_decode(model, da: DialogueAct, max_len: int | None = None, collect: list | None = None) -> Candidate:
    """Argmax decoding; ties go to the lowest token id.

    ``collect`` receives the aggregation record of every decoding step.
    """
    max_len = model.config.max_len if max_len is None else max_len
    da, enc = _prepare(model, da)
    state = DecodeState(h=ad.Tensor(np.zeros(model.config.hidden)), prev_token=BOS_ID)
    tokens, nll = [], 0.0
    while len(tokens) < max_len:
        h, info = advance(model, enc, state, state.prev_token)
        if collect is not None:
            collect.append(info)
        logp = ad.log_softmax(output_logits(model.decoder, h).data)
        nxt = int(np.argmax(logp))
        nll += -float(logp[nxt])
        tokens.append(nxt)
        if nxt == EOS_ID:
            break
        state = DecodeState(h=h, t=state.t + 1, prev_token=nxt)
    return _finish(model, da, Candidate(tokens, nll))


def _finish(model, da, cand: Candidate) -> Candidate:
    cand.words = content_words(model, cand.tokens)
    cand.err = slot_error_rate(cand.words, da).err
    cand.score = cand.nll
    return cand


def beam_search(model, da: DialogueAct, cfg: BeamConfig, collect: list | None = None) -> list[Candidate]:
    """Collect up to ``cfg.overgen`` finished hypotheses, sorted by NLL.

    Scores are summed token NLLs (no length normalization).  Each step keeps
    the ``cfg.width`` best expansions; those ending in EOS or reaching
    ``cfg.max_len`` move to the finished pool and the rest stay in the beam.
    Ties are broken by lexicographic token-id order.  ``collect`` receives
    the aggregation record of every expanded hypothesis.
    """
    da, enc = _prepare(model, da)
    H = model.config.hidden
    live = [(0.0, (), DecodeState(h=ad.Tensor(np.zeros(H)), prev_token=BOS_ID))]
    pool: list[tuple[float, tuple[int, ...]]] = []
    while live and len(pool) < cfg.overgen:
        expansions = []
        for nll, toks, state in live:
            h, info = advance(model, enc, state, state.prev_token)
            if collect is not None:
                collect.append(info)
            logp = ad.log_softmax(output_logits(model.decoder, h).data)
            # stable sort keeps lower ids first among equal scores
            best = np.argsort(-logp, kind="stable")[: cfg.width]
            for tok in best:
                tok = int(tok)
                expansions.append((nll - float(logp[tok]), toks + (tok,), h))
        expansions.sort(key=lambda e: (e[0], e[1]))
        live = []
        for nll, toks, h in expansions[: cfg.width]:
            if toks[-1] == EOS_ID or len(toks) >= cfg.max_len:
                pool.append((nll, toks))
            else:
                live.append((nll, toks, DecodeState(h=h, t=len(toks), prev_token=toks[-1])))
    pool.sort()
    return [_finish(model, da, Candidate(list(t), n)) for n, t in pool[: cfg.overgen]]


def rerank(candidates: list[Candidate], cfg: BeamConfig) -> list[Candidate]:
    """Order by ``nll + lam * err`` (stable) and keep the first ``cfg.topk``."""
    for c in candidates:
        c.score = c.nll + cfg.lam * c.err
    ranked = sorted(candidates, key=lambda c: c.score)
    if len(ranked) < cfg.topk:
        warnings.warn(f"only {len(ranked)} candidates for top-{cfg.topk}", RuntimeWarning, stacklevel=2)
    return ranked[: cfg.topk]


def generate(model, da: DialogueAct, cfg: BeamConfig) -> list[Candidate]:
    """Over-generate with beam search, then rerank."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return rerank(beam_search(model, da, cfg), cfg)
