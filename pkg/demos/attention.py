"""Print the per-step attention over slot-value pairs and the refiner gate.

Each row is one generated token: the alpha weights over the dialogue-act
pairs (which sum to 1) and, for the aroa variants, the scalar beta that
scales the word embedding.

    python demos/attention.py [refiner]
"""

import sys

from dagen import GeneratorModel, ModelConfig, TrainConfig, train
from dagen.corpus import Corpus, build_vocabs, canonical_order, indexed_pairs, parse_da, split, toy_corpus
from dagen.generation import greedy_decode

refiner = sys.argv[1] if len(sys.argv) > 1 else "aroa-c"
examples = toy_corpus(200, seed=0)
train_set, valid_set, _ = split(Corpus(examples, build_vocabs(examples)), seed=0)
model = GeneratorModel(ModelConfig(hidden=32, embed=32, act_embed=32, refiner=refiner, init_scale=0.2), train_set.vocabs, seed=1)
train(model, train_set, valid_set, TrainConfig(max_epochs=60, patience=10, seed=1))

da = canonical_order(parse_da("inform(name='Blue Plate';food='Indian';pricerange='expensive')"))
steps = []
out = greedy_decode(model, da, collect=steps)
pairs = [f"{s}{k}" for s, _, k in indexed_pairs(da)]
print(f"{da}\n")
print(f"{'token':<22}" + "".join(f"{p:>14}" for p in pairs) + f"{'beta':>8}")
for word, step in zip([*out.words, "</s>"], steps):
    beta = "" if step.beta is None else f"{step.beta:.3f}"
    print(f"{word:<22}" + "".join(f"{a:>14.3f}" for a in step.alpha) + f"{beta:>8}")
