"""Corpus BLEU, corpus slot error rate and evaluation reports."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .config import BeamConfig
from .corpus import Corpus, LexicalizationError, canonical_order, lexicalize, tokenize
from .generation import SlotErrors, generate, greedy_decode, slot_error_rate

EPSILON = 1e-9


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references, max_n: int = 4) -> float:
    """Corpus BLEU with clipped n-gram counts and a brevity penalty.

    ``references[i]`` is a list of token lists for ``hypotheses[i]``.  The
    effective reference length of a segment is the reference closest in
    length to the hypothesis (shorter one on ties).  A zero precision is
    floored at 1e-9; an order with no hypothesis n-grams anywhere in the
    corpus (all segments shorter than n) is left out of the geometric mean.
    """
    if len(hypotheses) == 0:
        raise ValueError("BLEU of an empty corpus")
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} reference sets")
    matched = [0] * max_n
    possible = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        if not refs:
            raise ValueError("every hypothesis needs at least one reference")
        hyp_len += len(hyp)
        ref_len += min((len(r) for r in refs), key=lambda n: (abs(n - len(hyp)), n))
        for n in range(1, max_n + 1):
            counts = _ngrams(hyp, n)
            if not counts:
                continue
            best: Counter = Counter()
            for r in refs:
                best |= _ngrams(r, n)
            matched[n - 1] += sum(min(c, best[g]) for g, c in counts.items())
            possible[n - 1] += sum(counts.values())
    if hyp_len == 0:
        return 0.0
    logs = [math.log(max(m / p, EPSILON)) for m, p in zip(matched, possible) if p > 0]
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(sum(logs) / len(logs))


def corpus_err(generated, das) -> float:
    """Summed missing + redundant over summed slot count, as a percentage."""
    counts = [slot_error_rate(toks, da) for toks, da in zip(generated, das, strict=True)]
    return _percent(counts)


def _percent(counts: list[SlotErrors]) -> float:
    total = sum(c.total for c in counts)
    wrong = sum(c.missing + c.redundant for c in counts)
    return 100.0 * wrong / total if total else 0.0


@dataclass
class DARecord:
    da: str
    hypothesis: str
    references: list[str]
    missing: int
    redundant: int
    total: int


@dataclass
class EvalReport:
    bleu: float
    err: float
    records: list[DARecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    label: str = "model"

    def table(self) -> str:
        head = f"{'Model':<16}{'BLEU':>10}{'ERR(%)':>10}"
        row = f"{self.label:<16}{self.bleu:>10.4f}{self.err:>10.2f}"
        return head + "\n" + "-" * len(head) + "\n" + row + "\n"

    def render(self) -> str:
        lines = [self.table()]
        if self.config:
            lines.append("config:")
            lines.extend(f"  {k} = {v}" for k, v in self.config.items())
            lines.append("")
        lines.append(f"{'p':>3} {'q':>3} {'N':>3}  dialogue act / output")
        for r in self.records:
            lines.append(f"{r.missing:>3} {r.redundant:>3} {r.total:>3}  {r.da}")
            lines.append(f"{'':>13}{r.hypothesis}")
        return "\n".join(lines) + "\n"


def evaluate(
    model,
    corpus: Corpus,
    beam: BeamConfig | None = None,
    lexicalized: bool = False,
    label: str = "model",
) -> EvalReport:
    """Decode every DA of ``corpus`` (top-1 after reranking, or greedy when
    ``beam`` is None) and score BLEU and ERR against its references."""
    hyps, refs, counts, records = [], [], [], []
    for ex in corpus.examples:
        da = canonical_order(ex.da)
        best = greedy_decode(model, da) if beam is None else generate(model, da, beam)[0]
        words = best.words
        counts.append(slot_error_rate(words, da))
        if lexicalized:
            try:
                hyp = tokenize(lexicalize(words, da))
            except LexicalizationError:
                # an unlicensed slot token stays as-is; ERR already counts it
                hyp = list(words)
            ref = [tokenize(r) for r in ex.references]
        else:
            hyp = words
            ref = corpus.delex_references(ex)
        hyps.append(hyp)
        refs.append(ref)
        c = counts[-1]
        records.append(DARecord(str(ex.da), " ".join(words), list(ex.references), c.missing, c.redundant, c.total))
    return EvalReport(bleu(hyps, refs), _percent(counts), records, label=label)

