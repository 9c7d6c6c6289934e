"""Finite-difference gradient suite over the full generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import GradCheck, grad_check
from .config import REFINERS, ModelConfig
from .corpus import RESERVED, UNK, DialogueAct, Vocab, Vocabs, canonical_order, parse_da
from .model import GeneratorModel

SUITE_DA = "inform(name='Piperade';food='Basque';area='north')"


def synthetic_vocabs(n_words: int = 20) -> Vocabs:
    """Vocabularies for ``SUITE_DA`` with ``n_words`` word types in total."""
    da = canonical_order(parse_da(SUITE_DA))
    words = Vocab([f"w{i}" for i in range(n_words - len(RESERVED))])
    return Vocabs(
        words=words,
        slots=Vocab(da.slots, reserved=(UNK,)),
        values=Vocab([f"SLOT_{s.upper()}_1" for s in da.slots], reserved=(UNK,)),
        acts=Vocab([da.act_type], reserved=(UNK,)),
    )


@dataclass
class SuiteResult:
    refiner: str
    check: GradCheck

    @property
    def ok(self) -> bool:
        return self.check.ok


def gradient_suite(
    seed: int = 7,
    refiners=REFINERS,
    hidden: int = 8,
    embed: int = 4,
    n_words: int = 20,
    n_tokens: int = 6,
    init_scale: float = 0.5,
    h: float = 1e-5,
    tol: float = 1e-4,
    with_l2: float = 0.0,
) -> list[SuiteResult]:
    """Check one teacher-forced sentence NLL for each refiner variant.

    The model is small (3-pair act, ``n_tokens``-token sentence, word, slot,
    value and act embeddings of size ``embed``) with weights
    drawn from uniform(-init_scale, init_scale); larger weights than the
    training default keep every parameter's gradient well above the
    round-off floor of central differences.
    """
    vocabs = synthetic_vocabs(n_words)
    da: DialogueAct = canonical_order(parse_da(SUITE_DA))
    rng = np.random.default_rng(seed)
    tokens = [int(t) for t in rng.integers(len(RESERVED), n_words, size=n_tokens)]
    out = []
    for i, refiner in enumerate(refiners):
        cfg = ModelConfig(hidden=hidden, embed=embed, act_embed=embed, refiner=refiner, init_scale=init_scale)
        model = GeneratorModel(cfg, vocabs, seed=seed + i)

        def objective(model=model):
            loss = model.sentence_nll(da, tokens)
            if with_l2:
                loss = ad.add(loss, ad.scale(model.l2_penalty(), with_l2))
            return loss

        out.append(SuiteResult(refiner, grad_check(objective, model.params, h=h, tol=tol)))
    return out
