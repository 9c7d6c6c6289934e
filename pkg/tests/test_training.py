import math

import numpy as np
import pytest

from dagen import autodiff as ad
from dagen.autodiff import Graph, backward
from dagen.checks import gradient_suite
from dagen.config import ConfigError, ModelConfig, TrainConfig
from dagen.corpus import BOS_ID, EOS_ID, Corpus, Example, build_vocabs, parse_da, split, toy_corpus
from dagen.decoder import DecodeState, advance, output_dist
from dagen import training
from dagen.model import GeneratorModel
from dagen.training import (
    NumericError,
    mean_nll,
    multi_restart,
    nll_loss,
    train,
    training_pairs,
)

from conftest import make_model

QUIET = dict(dropout_rate=0.0, l2_coeff=0.0)


@pytest.fixture(scope="module")
def small_splits():
    ex = toy_corpus(40, seed=5)
    return split(Corpus(ex, build_vocabs(ex)), seed=0)


class TestNllLoss:
    def test_one_hot(self):
        assert nll_loss([1, 0], np.eye(3)[[1, 0]]) == 0.0

    def test_uniform(self):
        T, V = 7, 11
        assert nll_loss([3] * T, np.full((T, V), 1 / V)) == pytest.approx(T * math.log(V))

    def test_three_tokens_by_hand(self):
        dists = [[0.5, 0.25, 0.25], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]]
        want = -(math.log(0.25) + math.log(0.8) + math.log(0.6))
        assert nll_loss([2, 1, 2], dists) == pytest.approx(want, rel=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nll_loss([1, 2], [[0.5, 0.5]])

    def test_sentence_nll_matches_distributions(self):
        model = make_model("gr-add", seed=3)
        da = parse_da("inform(name='Sakura')")
        toks = [5, 6, 7]
        enc = model.encode(da)
        state = DecodeState(h=ad.Tensor(np.zeros(model.config.hidden)), prev_token=BOS_ID)
        dists = []
        for tok in [*toks, EOS_ID]:
            h, _ = advance(model, enc, state, state.prev_token)
            dists.append(output_dist(model.decoder, h))
            state = DecodeState(h=h, t=state.t + 1, prev_token=tok)
        assert model.sentence_nll(da, toks).item() == pytest.approx(nll_loss([*toks, EOS_ID], dists), rel=1e-12)


class TestTrain:
    @pytest.mark.parametrize("refiner", ["aroa-v", "aroa-m", "aroa-c", "identity"])
    def test_memorizes_one_example(self, refiner):
        pool = toy_corpus(60)
        ex = [min(pool, key=lambda e: len(e.references[0]))]
        corpus = Corpus(ex, build_vocabs(pool))
        model = make_model(refiner, seed=0, hidden=64, embed=64, act_embed=8, init_scale=0.3)
        rep = train(model, corpus, corpus, TrainConfig(lr=0.1, max_epochs=200, patience=1000, **QUIET))
        loss = np.array(rep.train_loss)
        assert rep.epochs == 200
        assert np.all(np.diff(loss[5:]) < 0)
        assert loss[-1] < 0.05

    def test_zero_lr_leaves_parameters(self, small_splits):
        tr, va, _ = small_splits
        model = make_model("aroa-c", seed=1)
        before = model.params.snapshot()
        train(model, tr, va, TrainConfig(lr=0.0, max_epochs=1))
        for k, v in before.items():
            np.testing.assert_array_equal(model.params[k].data, v)

    def test_strong_l2_shrinks_weights(self):
        rng = np.random.default_rng(0)
        pool = toy_corpus(60)
        vocab = build_vocabs(pool)
        words = [w for w in vocab.words.itos[4:] if not w.startswith("SLOT_")]
        ex = [
            Example(pool[i].da, (" ".join(rng.choice(words, size=rng.integers(3, 9))),))
            for i in range(20)
        ]
        corpus = Corpus(ex, vocab)
        model = make_model("gr-mul", seed=2)
        norms = [model.params.global_norm()]
        for epoch in range(4):
            train(model, corpus, corpus, TrainConfig(lr=0.1, l2_coeff=1.0, dropout_rate=0.0, max_epochs=1, seed=epoch))
            norms.append(model.params.global_norm())
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_l2_every_ten_examples(self, small_splits, monkeypatch):
        tr, va, _ = small_splits
        model = make_model("aroa-m", seed=1)
        calls = []
        original = model.l2_penalty
        monkeypatch.setattr(model, "l2_penalty", lambda: calls.append(1) or original())
        train(model, tr, va, TrainConfig(max_epochs=1, dropout_rate=0.0))
        assert len(calls) == len(list(tr.pairs())) // 10

    def test_one_step_decreases_example_loss(self, toy):
        model = make_model("aroa-c", seed=4, hidden=16, embed=16, act_embed=8, init_scale=0.08)
        pairs = training_pairs(toy)[:20]
        violations = 0
        for da, toks in pairs:
            snap = model.params.snapshot()
            model.params.zero_grad()
            with Graph() as g:
                loss = model.sentence_nll(da, toks)
            before = loss.item()
            backward(g, loss)
            for _, p in model.params.items():
                p.data = p.data - 1e-4 * p.grad
            violations += model.sentence_nll(da, toks).item() >= before
            model.params.restore(snap)
        assert violations <= 1

    def test_nan_loss_names_example(self, small_splits):
        tr, va, _ = small_splits
        model = make_model("gr-add", seed=1)
        model.decoder["W_ho"].data[:] = np.nan
        with pytest.raises(NumericError, match="training example"):
            train(model, tr, va, TrainConfig(max_epochs=1))

    def test_restores_best_snapshot(self, small_splits):
        tr, va, _ = small_splits
        model = make_model("aroa-v", seed=1, hidden=8, embed=8, act_embed=4, init_scale=0.08)
        rep = train(model, tr, va, TrainConfig(lr=0.5, max_epochs=8, patience=8, seed=3))
        assert 0 <= rep.best_epoch < rep.epochs
        assert rep.best_valid_loss == min(rep.valid_loss)
        assert mean_nll(model, training_pairs(va)) == pytest.approx(rep.best_valid_loss, rel=1e-12)

    def test_patience_stops(self, small_splits):
        tr, va, _ = small_splits
        model = make_model("aroa-m", seed=1)
        # with lr 0 the validation loss never improves after the first epoch
        rep = train(model, tr, va, TrainConfig(lr=0.0, max_epochs=30, patience=2))
        assert rep.epochs == 3
        assert rep.best_epoch == 0

    def test_lr_halves_on_stall(self, small_splits, monkeypatch):
        tr, va, _ = small_splits
        scripted = iter([5.0, 4.0, 4.5, 3.0, 3.5, 3.2, 3.1, 3.0])
        monkeypatch.setattr(training, "mean_nll", lambda model, pairs: next(scripted))
        model = make_model("aroa-m", seed=1)
        rep = train(model, tr, va, TrainConfig(lr=0.1, max_epochs=30, patience=3))
        assert rep.lr == [0.1, 0.1, 0.1, 0.05, 0.05, 0.025, 0.0125]
        assert rep.epochs == 7 and rep.best_epoch == 3

    def test_full_loss_with_l2_matches_finite_differences(self):
        (result,) = gradient_suite(refiners=["aroa-c"], with_l2=0.5)
        assert result.check.max_error < 1e-4


class TestTrainConfig:
    def test_invalid(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr=-1)
        with pytest.raises(ConfigError):
            TrainConfig(dropout_rate=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(l2_every=0)


class TestMultiRestart:
    cfg = ModelConfig(hidden=8, embed=8, act_embed=4, refiner="gr-add")

    def test_single_restart_equals_train(self, small_splits):
        tr, va, _ = small_splits
        tcfg = TrainConfig(max_epochs=2, restarts=1, seed=11)
        best, summary = multi_restart(self.cfg, tcfg, tr, va)
        ref = GeneratorModel(self.cfg, tr.vocabs, seed=11)
        rep = train(ref, tr, va, tcfg)
        for k, p in ref.params.items():
            np.testing.assert_array_equal(best.params[k].data, p.data)
        assert summary.reports[0].train_loss == rep.train_loss

    def test_crippled_run_loses(self, small_splits):
        tr, va, _ = small_splits
        tcfg = TrainConfig(lr=0.5, max_epochs=6, patience=6, restarts=2, seed=3)
        best, summary = multi_restart(self.cfg, tcfg, tr, va, train_overrides=[{"lr": 0.0}, {}])
        assert summary.best_index == 1
        assert summary.valid_bleu[1] > summary.valid_bleu[0]
        assert best.seed == 4

    def test_means(self, small_splits):
        tr, va, _ = small_splits
        _, summary = multi_restart(self.cfg, TrainConfig(max_epochs=2, restarts=3), tr, va)
        assert summary.mean_valid_bleu == pytest.approx(np.mean(summary.valid_bleu))
        assert summary.mean_valid_loss == pytest.approx(np.mean([r.best_valid_loss for r in summary.reports]))

    def test_threads_match_sequential(self, small_splits):
        tr, va, _ = small_splits
        tcfg = TrainConfig(max_epochs=2, restarts=2)
        a, sa = multi_restart(self.cfg, tcfg, tr, va, workers=1)
        b, sb = multi_restart(self.cfg, tcfg, tr, va, workers=2)
        assert sa.valid_bleu == sb.valid_bleu
        for k, p in a.params.items():
            np.testing.assert_array_equal(b.params[k].data, p.data)
