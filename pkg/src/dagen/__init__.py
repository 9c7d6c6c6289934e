"""Dialogue-act conditioned sentence generation with a GRU encoder-decoder,
attention over slot-value pairs, and gated or attentive refinement of the
decoder input."""

from .config import AppConfig, BeamConfig, ModelConfig, TrainConfig
from .corpus import Corpus, DialogueAct, canonical_order, delexicalize, lexicalize, load_dataset, parse_da, split, toy_corpus
from .generation import beam_search, generate, greedy_decode, rerank, slot_error_rate
from .metrics import bleu, corpus_err, evaluate
from .model import GeneratorModel, load_checkpoint, save_checkpoint
from .training import multi_restart, train

__version__ = "0.1.0"
