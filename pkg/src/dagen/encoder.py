"""Slot-value embedding and the bidirectional GRU encoder."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

GRU_KEYS = ("W_rw", "W_rh", "W_uw", "W_uh", "W_hw", "W_hh")


def gru_shapes(n_in: int, n_hidden: int) -> dict[str, tuple[int, int]]:
    return {
        "W_rw": (n_hidden, n_in), "W_rh": (n_hidden, n_hidden),
        "W_uw": (n_hidden, n_in), "W_uh": (n_hidden, n_hidden),
        "W_hw": (n_hidden, n_in), "W_hh": (n_hidden, n_hidden),
    }


def gru_step(w: Tensor, h_prev: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """One plain GRU transition.

    r = sigmoid(W_rw w + W_rh h), u = sigmoid(W_uw w + W_uh h),
    h~ = tanh(W_hw w + r * (W_hh h)), h = u * h + (1 - u) * h~.
    """
    w, h_prev = ad.as_tensor(w), ad.as_tensor(h_prev)
    n_hidden, n_in = params["W_rw"].shape
    if w.shape != (n_in,) or h_prev.shape != (n_hidden,):
        raise ValueError(
            f"gru_step expects input ({n_in},) and state ({n_hidden},), got {w.shape} and {h_prev.shape}"
        )
    r = ad.t_sigmoid(ad.affine((params["W_rw"], w), (params["W_rh"], h_prev)))
    u = ad.t_sigmoid(ad.affine((params["W_uw"], w), (params["W_uh"], h_prev)))
    cand = ad.t_tanh(ad.add(ad.matmul(params["W_hw"], w), ad.mul(r, ad.matmul(params["W_hh"], h_prev))))
    return ad.add(ad.mul(u, h_prev), ad.mul(ad.one_minus(u), cand))


@dataclass
class EncodedDA:
    states: Tensor | None  # K x H, None when the act has no pairs
    act_vec: Tensor
    pair_embeddings: list[Tensor]
    keys: Tensor | None = None  # W_a s_i for every i, filled by the aligner

    @property
    def n_pairs(self) -> int:
        return 0 if self.states is None else self.states.shape[0]


def embed_pair(slot_emb: Tensor, value_emb: Tensor, slot_id: int, value_id: int) -> Tensor:
    """z = slot embedding concatenated with value embedding."""
    for name, table, i in (("slot", slot_emb, slot_id), ("value", value_emb, value_id)):
        if not 0 <= i < table.shape[0]:
            raise ValueError(f"{name} id {i} outside vocabulary of size {table.shape[0]}")
    return ad.concat([ad.take_row(slot_emb, slot_id), ad.take_row(value_emb, value_id)])


def run_gru(inputs: list[Tensor], params: Mapping[str, Tensor], n_hidden: int) -> list[Tensor]:
    h = Tensor(np.zeros(n_hidden))
    out = []
    for w in inputs:
        h = gru_step(w, h, params)
        out.append(h)
    return out


def encode(
    slot_ids: list[int],
    value_ids: list[int],
    act_id: int,
    tables: Mapping[str, Tensor],
    fwd: Mapping[str, Tensor],
    bwd: Mapping[str, Tensor],
) -> EncodedDA:
    """Bidirectional GRU over the pair embeddings; s_i = forward_i + backward_i.

    ``tables`` holds ``slot``, ``value`` and ``act`` embedding matrices.  The
    caller is responsible for passing pairs in canonical slot order.
    """
    act_table = tables["act"]
    if not 0 <= act_id < act_table.shape[0]:
        raise ValueError(f"act id {act_id} outside vocabulary of size {act_table.shape[0]}")
    act_vec = ad.take_row(act_table, act_id)
    zs = [embed_pair(tables["slot"], tables["value"], s, v) for s, v in zip(slot_ids, value_ids)]
    if not zs:
        return EncodedDA(states=None, act_vec=act_vec, pair_embeddings=[])
    n_hidden = fwd["W_rh"].shape[0]
    forward = run_gru(zs, fwd, n_hidden)
    backward = run_gru(zs[::-1], bwd, n_hidden)[::-1]
    states = ad.stack([ad.add(f, b) for f, b in zip(forward, backward)])
    return EncodedDA(states=states, act_vec=act_vec, pair_embeddings=zs)


def load_word_vectors(path, words, table: np.ndarray) -> int:
    """Overwrite rows of ``table`` from a ``token v1 .. vE`` text file.

    Rows for tokens absent from the file keep their current values.  Returns
    the number of rows replaced.
    """
    dim = table.shape[1]
    hits = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            tok, vals = parts[0], parts[1:]
            if tok not in words:
                continue
            if len(vals) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vals)}")
            table[words.stoi[tok]] = np.asarray(vals, dtype=np.float64)
            hits += 1
    return hits
