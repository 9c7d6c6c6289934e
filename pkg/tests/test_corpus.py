import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dagen.corpus import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    RESERVED,
    UNK_ID,
    Corpus,
    DialogueAct,
    Example,
    IngestionError,
    LexicalizationError,
    ParseError,
    Vocabs,
    build_vocabs,
    canonical_order,
    delexicalize,
    lexicalize,
    licensed_slot_tokens,
    load_dataset,
    parse_da,
    save_dataset,
    split,
    tokenize,
    toy_corpus,
)

COMPARE = "compare(name='Triton 52'; ecorating='A+'; family='L7'; name='Hades 76'; ecorating='C'; family='L9')"


class TestParse:
    def test_inform(self):
        da = parse_da("inform(name='Piperade'; food='Basque')")
        assert da.act_type == "inform"
        assert da.pairs == (("name", "Piperade"), ("food", "Basque"))

    def test_compare_repeats_slots(self):
        da = parse_da(COMPARE)
        assert len(da.pairs) == 6
        assert da.slots.count("name") == 2
        assert da.pairs[3] == ("name", "Hades 76")

    def test_empty(self):
        assert parse_da("goodbye()") == DialogueAct("goodbye", ())

    def test_binary_dont_care_and_bare_values(self):
        da = parse_da("inform(kidsallowed=yes;food=dont_care;area=\"north\")")
        assert da.pairs == (("kidsallowed", "yes"), ("food", "dont_care"), ("area", "north"))

    def test_valueless_slot(self):
        assert parse_da("request(area)").pairs == (("area", None),)

    @pytest.mark.parametrize(
        "text, offset",
        [
            ("inform name='x')", 7),
            ("inform(name='x'", 15),
            ("inform(name='x", 12),
            ("inform(name='x') extra", 17),
            ("(name='x')", 0),
        ],
    )
    def test_errors_report_offset(self, text, offset):
        with pytest.raises(ParseError) as info:
            parse_da(text)
        assert info.value.offset == offset

    def test_str_roundtrip(self):
        da = parse_da(COMPARE)
        assert parse_da(str(da)) == da


class TestCanonicalOrder:
    def test_sorts_by_slot(self):
        da = DialogueAct("inform", (("price", "cheap"), ("area", "north")))
        assert canonical_order(da).pairs == (("area", "north"), ("price", "cheap"))

    def test_sorted_unchanged(self):
        da = DialogueAct("inform", (("area", "north"), ("price", "cheap")))
        assert canonical_order(da) == da

    def test_stable_for_duplicates(self):
        da = DialogueAct("compare", (("name", "A"), ("eco", "X"), ("name", "B")))
        assert canonical_order(da).pairs == (("eco", "X"), ("name", "A"), ("name", "B"))

    @given(
        st.lists(
            st.tuples(st.sampled_from(["name", "area", "food", "eco", "near"]), st.text("abc", min_size=1, max_size=3)),
            max_size=8,
        )
    )
    def test_idempotent_permutation(self, pairs):
        da = DialogueAct("inform", tuple(pairs))
        once = canonical_order(da)
        assert canonical_order(once) == once
        assert sorted(once.pairs) == sorted(da.pairs)
        assert once.is_canonical()


class TestDelex:
    def test_compare_example(self):
        out = delexicalize("the Triton 52 is in the L7 family", parse_da(COMPARE))
        assert out.text == "the SLOT_NAME_1 is in the SLOT_FAMILY_1 family"
        assert ("name", "Hades 76") in out.unmatched

    def test_second_occurrence_gets_index_two(self):
        out = delexicalize("Triton 52 beats Hades 76", parse_da(COMPARE))
        assert out.surface == ["SLOT_NAME_1", "beats", "SLOT_NAME_2"]

    def test_no_values_unchanged(self):
        da = parse_da("inform(name='Piperade')")
        assert delexicalize("hello there", da).surface == ["hello", "there"]

    def test_longest_match_and_word_boundary(self):
        da = parse_da("compare(family='L7';family='L70')")
        out = delexicalize("the L70 and the L7", da)
        assert out.surface == ["the", "SLOT_FAMILY_2", "and", "the", "SLOT_FAMILY_1"]

    def test_case_insensitive(self):
        out = delexicalize("piperade is nice", parse_da("inform(name='Piperade')"))
        assert out.surface == ["SLOT_NAME_1", "is", "nice"]

    def test_binary_and_dont_care_kept(self):
        da = parse_da("inform(kidsallowed=yes;food=dont_care)")
        out = delexicalize("yes it is fine for kids , any dont_care food", da)
        assert not any(t.startswith("SLOT_") for t in out.surface)
        assert licensed_slot_tokens(da) == []

    def test_tokenize_detaches_punctuation(self):
        assert tokenize("Hi, it's North. Ok?") == ["hi", ",", "it's", "north", ".", "ok", "?"]


class TestLex:
    def test_inform(self):
        da = parse_da("inform(name='Piperade'; food='Basque')")
        assert lexicalize("SLOT_NAME_1 serves SLOT_FOOD_1 food".split(), da) == "Piperade serves Basque food"

    def test_no_slot_tokens(self):
        assert lexicalize(["a", "b", "."], parse_da("goodbye()")) == "a b ."

    def test_missing_referent(self):
        with pytest.raises(LexicalizationError, match="SLOT_NAME_2"):
            lexicalize(["SLOT_NAME_2"], parse_da("inform(name='Piperade')"))

    def test_roundtrip_on_toy_corpus(self):
        n = 0
        for ex in toy_corpus(200, seed=3):
            da = canonical_order(ex.da)
            for ref in ex.references:
                delex = delexicalize(ref, da)
                if delex.unmatched:
                    continue
                n += 1
                # equality up to the tokenizer's whitespace normalisation
                assert lexicalize(delex, da) == " ".join(tokenize(ref, lower=False))
        assert n == 200


class TestVocab:
    def test_reserved_ids(self):
        v = build_vocabs(toy_corpus(20)).words
        assert [v.id(t) for t in RESERVED] == [PAD_ID, BOS_ID, EOS_ID, UNK_ID]
        assert v.to_list()[:4] == list(RESERVED)

    def test_dense_ids(self):
        v = build_vocabs(toy_corpus(50)).words
        assert sorted(v.stoi.values()) == list(range(len(v)))

    def test_unknown_maps_to_unk(self):
        assert build_vocabs(toy_corpus(20)).words.id("zebra") == UNK_ID

    def test_hand_count_on_ten_sentences(self):
        rows = [
            ("inform(name='Sakura';food='Thai')", "Sakura serves Thai food."),
            ("inform(name='Sakura';area='north')", "Sakura is in the north."),
            ("inform(name='Le Petit';food='French')", "Le Petit serves French food."),
            ("inform_no_match(area='east')", "There is no restaurant in the east."),
            ("inform(name='Blue Plate';pricerange='cheap')", "Blue Plate is cheap."),
            ("goodbye()", "Goodbye!"),
            ("inform(name='Sakura';kidsallowed=yes)", "Sakura is good for kids."),
            ("inform(name='Sakura';kidsallowed=no)", "Sakura is not good for kids."),
            ("compare(name='Sakura';name='Olive Tree')", "Sakura and Olive Tree, which one?"),
            ("inform(name='Sakura';food='dont_care')", "Sakura serves any food."),
        ]
        examples = [Example(parse_da(d), (r,)) for d, r in rows]
        hand = {
            "SLOT_NAME_1", "SLOT_NAME_2", "SLOT_FOOD_1", "SLOT_AREA_1", "SLOT_PRICERANGE_1",
            "serves", "food", ".", "is", "in", "the", "there", "no", "restaurant", "goodbye", "!",
            "good", "for", "kids", "not", "and", ",", "which", "one", "?", "any",
        }
        words = build_vocabs(examples).words
        assert set(words.to_list()) == hand | set(RESERVED)
        assert len(words) == 26 + 4

    def test_no_unk_in_toy_training_references(self):
        train, _, _ = split(Corpus(toy_corpus(200), build_vocabs(toy_corpus(200))), seed=0)
        for _, delex in train.pairs():
            assert UNK_ID not in delex.tokens

    def test_vocabs_dict_roundtrip(self):
        v = build_vocabs(toy_corpus(30))
        assert Vocabs.from_dict(json.loads(json.dumps(v.to_dict()))) == v


class TestDataset:
    def test_load_and_save(self, tmp_path):
        ex = toy_corpus(12)
        path = tmp_path / "d.json"
        save_dataset(ex, path)
        corpus = load_dataset(path)
        assert [str(e.da) for e in corpus.examples] == [str(e.da) for e in ex]
        assert [e.references for e in corpus.examples] == [e.references for e in ex]

    def test_multiple_references(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps([["inform(name='A')", "A is here.", "here is A."]]))
        corpus = load_dataset(path)
        assert len(list(corpus.pairs())) == 2

    @pytest.mark.parametrize(
        "payload, index",
        [
            ([["inform(name='A')", "ok"], ["inform(name='A'", "bad"]], 1),
            ([["inform(name='A')", "ok"], ["only da"]], 1),
            ([["inform(name='A')", 3]], 0),
        ],
    )
    def test_bad_records(self, tmp_path, payload, index):
        path = tmp_path / "d.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(IngestionError) as info:
            load_dataset(path)
        assert info.value.index == index

    def test_unreadable(self, tmp_path):
        with pytest.raises(IngestionError):
            load_dataset(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(IngestionError):
            load_dataset(bad)

    def test_split_sizes(self):
        ex = toy_corpus(500)
        tr, va, te = split(Corpus(ex, build_vocabs(ex)), seed=4)
        assert (len(tr), len(va), len(te)) == (300, 100, 100)

    def test_split_deterministic(self):
        ex = toy_corpus(100)
        c = Corpus(ex, build_vocabs(ex))
        a = split(c, seed=9)
        b = split(c, seed=9)
        for x, y in zip(a, b):
            assert x.examples == y.examples
        assert split(c, seed=10)[0].examples != a[0].examples

    def test_split_vocab_from_train_only(self):
        ex = toy_corpus(100)
        tr, va, te = split(Corpus(ex, build_vocabs(ex)), seed=1)
        assert tr.vocabs == build_vocabs(tr.examples)
        assert va.vocabs is tr.vocabs and te.vocabs is tr.vocabs

    def test_toy_corpus_shape(self):
        ex = toy_corpus(200)
        assert len(ex) == 200
        assert {e.da.act_type for e in ex} == {"inform", "inform_no_match", "compare"}
        slots = {s for e in ex for s in e.da.slots}
        assert len(slots) == 6
        assert toy_corpus(200) == ex
