"""Over-generate with beam search, then watch the slot-error penalty reorder the list.

A lightly trained model still makes slot mistakes, so some of its most likely
candidates drop or repeat a slot.  With lambda = 0 the list is ordered by
sentence NLL alone; with lambda = 1000 any candidate with a slot error sinks.

    python demos/reranking.py
"""

from dagen import BeamConfig, GeneratorModel, ModelConfig, TrainConfig, train
from dagen.corpus import Corpus, build_vocabs, canonical_order, parse_da, split, toy_corpus
from dagen.generation import beam_search, rerank

examples = toy_corpus(200, seed=0)
train_set, valid_set, test_set = split(Corpus(examples, build_vocabs(examples)), seed=0)
model = GeneratorModel(ModelConfig(hidden=16, embed=16, act_embed=8, refiner="gr-add", init_scale=0.2), train_set.vocabs, seed=3)
train(model, train_set, valid_set, TrainConfig(max_epochs=8, patience=10, seed=3))

da = canonical_order(parse_da("inform(name='Olive Tree';food='Greek';area='north';near='the museum')"))
pool = beam_search(model, da, BeamConfig(width=10, overgen=20))
print(f"{da}: {len(pool)} candidates\n")
for lam in (0.0, 1000.0):
    print(f"lambda = {lam:g}")
    for c in rerank(list(pool), BeamConfig(lam=lam, topk=5, overgen=20)):
        print(f"  R {c.score:9.3f}  nll {c.nll:7.3f}  err {c.err:.2f}  {' '.join(c.words)}")
    print()
