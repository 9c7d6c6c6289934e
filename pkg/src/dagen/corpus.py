"""Dialogue acts, delexicalization, vocabularies and dataset loading."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)

# values that never appear verbatim in text and so are never delexicalized
NON_DELEX_VALUES = frozenset({"yes", "no", "dont_care", "dontcare", "none", ""})

SLOT_TOKEN_RE = re.compile(r"^SLOT_(.+)_(\d+)$")
_PUNCT = ".,;?!"
_PUNCT_RE = re.compile(r"([.,;?!])")


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class LexicalizationError(ValueError):
    pass


class IngestionError(ValueError):
    def __init__(self, message: str, index: int | None = None):
        where = f"record {index}: " if index is not None else ""
        super().__init__(where + message)
        self.index = index


@dataclass(frozen=True)
class DialogueAct:
    act_type: str
    pairs: tuple[tuple[str, str | None], ...] = ()

    def __post_init__(self):
        if not self.act_type:
            raise ValueError("act_type must be non-empty")
        object.__setattr__(self, "pairs", tuple((s, v) for s, v in self.pairs))

    def __str__(self) -> str:
        inner = ";".join(s if v is None else f"{s}='{v}'" for s, v in self.pairs)
        return f"{self.act_type}({inner})"

    @property
    def slots(self) -> list[str]:
        return [s for s, _ in self.pairs]

    def is_canonical(self) -> bool:
        return list(self.pairs) == list(canonical_order(self).pairs)


def is_delexicalizable(value: str | None) -> bool:
    return value is not None and value.strip().lower() not in NON_DELEX_VALUES


def slot_token(slot: str, k: int) -> str:
    return f"SLOT_{slot.upper()}_{k}"


def is_slot_token(tok: str) -> bool:
    return SLOT_TOKEN_RE.match(tok) is not None


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_IDENT_RE = re.compile(r"\s*([?A-Za-z_][\w\-]*)\s*")


def parse_da(text: str) -> DialogueAct:
    """Parse ``act(slot=value; ...)``.

    Values may be single- or double-quoted or bare.  A slot with no ``=value``
    (``request(area)``) gets value ``None``.  Pairs are separated by ``;``.
    """
    m = _IDENT_RE.match(text)
    if not m:
        raise ParseError("expected an act type", 0)
    act = m.group(1)
    pos = m.end()
    if pos >= len(text) or text[pos] != "(":
        raise ParseError("expected '('", pos)
    pos += 1
    pairs: list[tuple[str, str | None]] = []
    n = len(text)

    def skip_ws(i):
        while i < n and text[i].isspace():
            i += 1
        return i

    pos = skip_ws(pos)
    if pos < n and text[pos] == ")":
        pos += 1
    else:
        while True:
            m = _IDENT_RE.match(text, pos)
            if not m:
                raise ParseError("expected a slot name", pos)
            slot = m.group(1)
            pos = m.end()
            value: str | None = None
            if pos < n and text[pos] == "=":
                pos = skip_ws(pos + 1)
                if pos < n and text[pos] in "'\"":
                    quote = text[pos]
                    end = text.find(quote, pos + 1)
                    if end < 0:
                        raise ParseError("unterminated quoted value", pos)
                    value = text[pos + 1 : end]
                    pos = skip_ws(end + 1)
                else:
                    start = pos
                    while pos < n and text[pos] not in ";)":
                        pos += 1
                    value = text[start:pos].strip()
                    if not value:
                        raise ParseError("empty value", start)
            pairs.append((slot, value))
            if pos >= n:
                raise ParseError("expected ';' or ')'", pos)
            if text[pos] == ";":
                pos += 1
                continue
            if text[pos] == ")":
                pos += 1
                break
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
    if text[pos:].strip():
        raise ParseError("trailing characters after ')'", skip_ws(pos))
    return DialogueAct(act, tuple(pairs))


def canonical_order(da: DialogueAct) -> DialogueAct:
    """Sort pairs by slot name; duplicates keep their relative order."""
    return DialogueAct(da.act_type, tuple(sorted(da.pairs, key=lambda p: p[0])))


def indexed_pairs(da: DialogueAct) -> list[tuple[str, str | None, int]]:
    """Each pair with the 1-based occurrence index of its slot name."""
    seen: dict[str, int] = {}
    out = []
    for slot, value in da.pairs:
        seen[slot] = seen.get(slot, 0) + 1
        out.append((slot, value, seen[slot]))
    return out


def licensed_slot_tokens(da: DialogueAct) -> list[str]:
    return [slot_token(s, k) for s, v, k in indexed_pairs(da) if is_delexicalizable(v)]


# ---------------------------------------------------------------------------
# text
# ---------------------------------------------------------------------------


def tokenize(text: str, lower: bool = True) -> list[str]:
    """Whitespace split with ``.,;?!`` detached; slot tokens keep their case."""
    toks = _PUNCT_RE.sub(r" \1 ", text).split()
    if not lower:
        return toks
    return [t if is_slot_token(t) else t.lower() for t in toks]


@dataclass
class DelexUtterance:
    surface: list[str]
    tokens: list[int] = field(default_factory=list)
    unmatched: list[tuple[str, str]] = field(default_factory=list)

    @property
    def text(self) -> str:
        return " ".join(self.surface)


def delexicalize(utterance: str, da: DialogueAct, vocab: Vocab | None = None) -> DelexUtterance:
    """Replace DA values found in ``utterance`` by indexed slot tokens.

    Matching is case-insensitive, whole-word, and longest value first; each
    pair consumes the first still-unreplaced occurrence of its value.
    Unmatched delexicalizable pairs are listed in ``unmatched``.
    """
    cands = [(s, v, k) for s, v, k in indexed_pairs(da) if is_delexicalizable(v)]
    # stable sort: equal-length values keep DA order so _1 precedes _2
    cands.sort(key=lambda c: -len(c[1]))
    text = utterance
    unmatched = []
    for slot, value, k in cands:
        pat = re.compile(r"(?<!\w)" + re.escape(value.strip()) + r"(?!\w)", re.IGNORECASE)
        m = pat.search(text)
        if m is None:
            unmatched.append((slot, value))
            continue
        text = text[: m.start()] + slot_token(slot, k) + text[m.end() :]
    surface = tokenize(text, lower=False)
    out = DelexUtterance(surface=surface, unmatched=unmatched)
    if vocab is not None:
        out.tokens = vocab.encode(normalize_tokens(surface))
    return out


def normalize_tokens(surface: list[str]) -> list[str]:
    return [t if is_slot_token(t) else t.lower() for t in surface]


def lexicalize(delex: DelexUtterance | list[str], da: DialogueAct) -> str:
    surface = delex.surface if isinstance(delex, DelexUtterance) else list(delex)
    values = {slot_token(s, k): v for s, v, k in indexed_pairs(da) if is_delexicalizable(v)}
    out = []
    for tok in surface:
        if is_slot_token(tok):
            if tok not in values:
                raise LexicalizationError(f"slot token {tok} has no referent in {da}")
            out.append(values[tok])
        else:
            out.append(tok)
    return " ".join(out)


# ---------------------------------------------------------------------------
# vocabularies and corpora
# ---------------------------------------------------------------------------


class Vocab:
    """Dense token <-> id map."""

    def __init__(self, tokens=(), reserved=RESERVED):
        self.itos: list[str] = []
        self.stoi: dict[str, int] = {}
        for t in list(reserved) + sorted(set(tokens) - set(reserved)):
            self.stoi[t] = len(self.itos)
            self.itos.append(t)
        self.unk_id = self.stoi.get(UNK, 0)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok: str) -> bool:
        return tok in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, tok: str) -> int:
        return self.stoi.get(tok, self.unk_id)

    def encode(self, toks) -> list[int]:
        return [self.id(t) for t in toks]

    def decode(self, ids) -> list[str]:
        return [self.itos[i] for i in ids]

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: list[str]) -> Vocab:
        v = cls(reserved=())
        v.itos = list(itos)
        v.stoi = {t: i for i, t in enumerate(itos)}
        v.unk_id = v.stoi.get(UNK, 0)
        return v


def value_key(slot: str, value: str | None, k: int) -> str:
    """Entry of a pair in the value vocabulary.

    Delexicalizable values are represented by their indexed slot token so the
    encoder sees the same thing the decoder must emit; the rest keep their
    literal (lowercased) value.
    """
    if is_delexicalizable(value):
        return slot_token(slot, k)
    return "<none>" if value is None else value.strip().lower()


@dataclass(frozen=True)
class Vocabs:
    words: Vocab
    slots: Vocab
    values: Vocab
    acts: Vocab

    def to_dict(self) -> dict:
        return {k: getattr(self, k).to_list() for k in ("words", "slots", "values", "acts")}

    @classmethod
    def from_dict(cls, d: dict) -> Vocabs:
        return cls(**{k: Vocab.from_list(d[k]) for k in ("words", "slots", "values", "acts")})


@dataclass(frozen=True)
class Example:
    da: DialogueAct
    references: tuple[str, ...]


@dataclass
class Corpus:
    examples: list[Example]
    vocabs: Vocabs

    def __len__(self) -> int:
        return len(self.examples)

    def pairs(self):
        """(canonical DA, delexicalized reference) for every reference."""
        for ex in self.examples:
            da = canonical_order(ex.da)
            for ref in ex.references:
                yield da, delexicalize(ref, da, self.vocabs.words)

    def delex_references(self, ex: Example) -> list[list[str]]:
        da = canonical_order(ex.da)
        return [normalize_tokens(delexicalize(r, da).surface) for r in ex.references]


def build_vocabs(examples: list[Example]) -> Vocabs:
    words, slots, values, acts = set(), set(), set(), set()
    for ex in examples:
        da = canonical_order(ex.da)
        acts.add(da.act_type)
        for s, v, k in indexed_pairs(da):
            slots.add(s)
            values.add(value_key(s, v, k))
        for ref in ex.references:
            words.update(normalize_tokens(delexicalize(ref, da).surface))
    return Vocabs(
        words=Vocab(words),
        slots=Vocab(slots, reserved=(UNK,)),
        values=Vocab(values, reserved=(UNK,)),
        acts=Vocab(acts, reserved=(UNK,)),
    )


def parse_records(records, source: str = "<records>") -> list[Example]:
    if not isinstance(records, list):
        raise IngestionError(f"{source}: expected a list of records")
    out = []
    for i, rec in enumerate(records):
        if not isinstance(rec, (list, tuple)) or len(rec) < 2 or not all(isinstance(x, str) for x in rec):
            raise IngestionError("expected [da_string, reference, ...]", i)
        try:
            da = parse_da(rec[0])
        except ParseError as e:
            raise IngestionError(f"bad dialogue act: {e}", i) from e
        out.append(Example(da, tuple(rec[1:])))
    return out


def load_dataset(path) -> Corpus:
    """Load a JSON array of ``[da_string, reference, ...]`` records."""
    path = Path(path)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as e:
        raise IngestionError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise IngestionError(f"{path} is not valid JSON: {e}") from e
    examples = parse_records(records, str(path))
    if not examples:
        raise IngestionError(f"{path} holds no records")
    return Corpus(examples, build_vocabs(examples))


def save_dataset(examples: list[Example], path) -> None:
    records = [[str(ex.da), *ex.references] for ex in examples]
    Path(path).write_text(json.dumps(records, indent=1), encoding="utf-8")


def split(corpus: Corpus, ratio=(3, 1, 1), seed: int = 0) -> tuple[Corpus, Corpus, Corpus]:
    """Shuffle with ``seed`` and cut train/valid/test; vocabularies come from train."""
    n = len(corpus.examples)
    total = sum(ratio)
    n_train = n * ratio[0] // total
    n_valid = n * ratio[1] // total
    order = np.random.default_rng(seed).permutation(n)
    parts = [order[:n_train], order[n_train : n_train + n_valid], order[n_train + n_valid :]]
    chunks = [[corpus.examples[i] for i in part] for part in parts]
    vocabs = build_vocabs(chunks[0])
    return tuple(Corpus(c, vocabs) for c in chunks)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# built-in toy corpus
# ---------------------------------------------------------------------------

_NAMES = [
    "Piperade", "Red Door Cafe", "Sakura", "The Golden Fork", "Bistro Lune", "Casa Verde",
    "Blue Plate", "Tandoori Palace", "Le Petit", "Harbor House", "Noodle Bar", "Olive Tree",
]
_FOODS = ["Basque", "Italian", "Japanese", "Indian", "Mexican", "French", "Thai", "Greek"]
_AREAS = ["north", "south", "centre", "riverside", "downtown", "east"]
_PRICES = ["cheap", "moderate", "expensive"]
_NEAR = ["the station", "the museum", "the park", "the cinema", "the market"]


def _toy_inform(rng) -> tuple[str, str]:
    name = rng.choice(_NAMES)
    pairs = [("name", name)]
    parts = [f"{name} is a nice restaurant"]
    if rng.random() < 0.6:
        v = rng.choice(_FOODS)
        pairs.append(("food", v))
        parts.append(f"serving {v} food")
    if rng.random() < 0.5:
        v = rng.choice(_AREAS)
        pairs.append(("area", v))
        parts.append(f"in the {v} area")
    if rng.random() < 0.5:
        v = rng.choice(_PRICES)
        pairs.append(("pricerange", v))
        parts.append(f"in the {v} price range")
    if rng.random() < 0.4:
        v = rng.choice(_NEAR)
        pairs.append(("near", v))
        parts.append(f"near {v}")
    text = " ".join(parts) + " ."
    kids = rng.choice(["yes", "no", None])
    if kids is not None:
        pairs.append(("kidsallowed", kids))
        text += " it is good for kids ." if kids == "yes" else " it does not allow kids ."
    return _da_string("inform", pairs), text


def _toy_nomatch(rng) -> tuple[str, str]:
    while True:
        chosen = [s for s in ("food", "area", "pricerange") if rng.random() < 0.5]
        if chosen:
            break
    pairs = []
    parts = ["there is no restaurant"]
    for s in chosen:
        if s == "food":
            v = rng.choice(_FOODS)
            parts.append(f"serving {v} food")
        elif s == "area":
            v = rng.choice(_AREAS)
            parts.append(f"in the {v} area")
        else:
            v = rng.choice(_PRICES)
            parts.append(f"in the {v} price range")
        pairs.append((s, v))
    return _da_string("inform_no_match", pairs), " ".join(parts) + " ."


def _toy_compare(rng) -> tuple[str, str]:
    a, b = rng.choice(len(_NAMES), size=2, replace=False)
    pa, pb = rng.choice(len(_PRICES), size=2, replace=False)
    n1, n2, p1, p2 = _NAMES[a], _NAMES[b], _PRICES[pa], _PRICES[pb]
    pairs = [("name", n1), ("pricerange", p1), ("name", n2), ("pricerange", p2)]
    text = f"{n1} is in the {p1} price range , while {n2} is in the {p2} price range ."
    if rng.random() < 0.5:
        fa, fb = rng.choice(len(_FOODS), size=2, replace=False)
        f1, f2 = _FOODS[fa], _FOODS[fb]
        pairs = [("name", n1), ("food", f1), ("pricerange", p1), ("name", n2), ("food", f2), ("pricerange", p2)]
        text = (
            f"{n1} serves {f1} food in the {p1} price range , "
            f"while {n2} serves {f2} food in the {p2} price range ."
        )
    return _da_string("compare", pairs), text


def _da_string(act: str, pairs) -> str:
    return act + "(" + ";".join(f"{s}='{v}'" for s, v in pairs) + ")"


def toy_corpus(n: int = 200, seed: int = 0) -> list[Example]:
    """Templated restaurant data: 6 slots, 3 act types.

    The delexicalized reference is a deterministic function of the act type,
    the slot set and the binary ``kidsallowed`` value, so a model can fit the
    training split exactly.
    """
    rng = np.random.default_rng(seed)
    makers = [_toy_inform, _toy_nomatch, _toy_compare]
    weights = [0.6, 0.2, 0.2]
    out = []
    for _ in range(n):
        maker = makers[rng.choice(3, p=weights)]
        da, text = maker(rng)
        out.append(Example(parse_da(da), (text,)))
    return out
