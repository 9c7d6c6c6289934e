import numpy as np
import pytest

from dagen.config import ModelConfig
from dagen.corpus import Corpus, build_vocabs, toy_corpus
from dagen.model import GeneratorModel


def make_model(refiner="aroa-m", seed=0, hidden=6, embed=5, act_embed=4, init_scale=0.5, vocabs=None, max_len=20):
    if vocabs is None:
        vocabs = build_vocabs(toy_corpus(60))
    cfg = ModelConfig(hidden=hidden, embed=embed, act_embed=act_embed, refiner=refiner, init_scale=init_scale, max_len=max_len)
    return GeneratorModel(cfg, vocabs, seed=seed)


def zero_params(model, prefixes):
    for name, p in model.params.items():
        if any(name.startswith(pref) for pref in prefixes):
            p.data = np.zeros_like(p.data)


@pytest.fixture(scope="session")
def toy():
    ex = toy_corpus(200)
    return Corpus(ex, build_vocabs(ex))


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
