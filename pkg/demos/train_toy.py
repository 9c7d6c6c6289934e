"""Train one refiner variant on the built-in toy corpus and generate from it.

    python demos/train_toy.py [refiner] [max_epochs]
"""

import sys
import time

from dagen import BeamConfig, GeneratorModel, ModelConfig, TrainConfig, evaluate, train
from dagen.corpus import Corpus, build_vocabs, canonical_order, lexicalize, parse_da, split, toy_corpus
from dagen.generation import generate

refiner = sys.argv[1] if len(sys.argv) > 1 else "aroa-m"
max_epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 300

examples = toy_corpus(200, seed=0)
train_set, valid_set, test_set = split(Corpus(examples, build_vocabs(examples)), seed=0)
print(f"{len(train_set)} train / {len(valid_set)} valid / {len(test_set)} test, {len(train_set.vocabs.words)} word types")

model = GeneratorModel(
    ModelConfig(hidden=32, embed=32, act_embed=32, refiner=refiner, init_scale=0.2), train_set.vocabs, seed=1
)
t0 = time.perf_counter()
report = train(model, train_set, valid_set, TrainConfig(max_epochs=max_epochs, patience=10, seed=1))
print(f"trained {report.epochs} epochs in {time.perf_counter() - t0:.0f}s, best epoch {report.best_epoch}")
for every in range(0, report.epochs, max(1, report.epochs // 8)):
    print(f"  epoch {every:>3}  train {report.train_loss[every]:8.3f}  valid {report.valid_loss[every]:8.3f}  lr {report.lr[every]:.4f}")

beam = BeamConfig()
for name, part in (("train", train_set), ("test", test_set)):
    ev = evaluate(model, part, beam)
    print(f"{name:>5}: BLEU {ev.bleu:.4f}  ERR {ev.err:.2f}%")

da = canonical_order(parse_da("inform(name='Sakura';food='Thai';area='riverside';pricerange='cheap')"))
print(f"\n{da}")
for c in generate(model, da, BeamConfig(topk=3)):
    print(f"  nll {c.nll:7.3f}  err {c.err:.2f}  {lexicalize(c.words, da)}")
