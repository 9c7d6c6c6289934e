"""DA-conditioned GRU decoder and single-token stepping."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .aggregator import AggregateStep, align, refine
from .autodiff import Tensor
from .encoder import EncodedDA

DECODER_KEYS = (
    "W_rx", "W_rh", "W_rd",
    "W_ux", "W_uh", "W_ud",
    "W_hx", "W_hh", "W_hd",
    "W_dc", "W_ho",
)


class SequenceOverflow(RuntimeError):
    pass


def decoder_shapes(embed: int, hidden: int, da_size: int, vocab: int) -> dict[str, tuple[int, int]]:
    shapes = {}
    for gate in "ruh":
        shapes[f"W_{gate}x"] = (hidden, embed)
        shapes[f"W_{gate}h"] = (hidden, hidden)
        shapes[f"W_{gate}d"] = (hidden, da_size)
    shapes["W_dc"] = (hidden, da_size)
    shapes["W_ho"] = (vocab, hidden)
    return shapes


def decoder_step(params: Mapping[str, Tensor], x: Tensor, h_prev: Tensor, d: Tensor) -> Tensor:
    """GRU transition with the DA vector fed into both gates and the candidate.

    The candidate is tanh(W_hx x + r * (W_hh h) + W_hd d) + tanh(W_dc d),
    so it ranges over (-2, 2).
    """
    x, h_prev, d = ad.as_tensor(x), ad.as_tensor(h_prev), ad.as_tensor(d)
    n_hidden, n_in = params["W_rx"].shape
    n_da = params["W_rd"].shape[1]
    if x.shape != (n_in,) or h_prev.shape != (n_hidden,) or d.shape != (n_da,):
        raise ValueError(
            f"decoder_step expects x ({n_in},), h ({n_hidden},), d ({n_da},); "
            f"got {x.shape}, {h_prev.shape}, {d.shape}"
        )
    r = ad.t_sigmoid(ad.affine((params["W_rx"], x), (params["W_rh"], h_prev), (params["W_rd"], d)))
    u = ad.t_sigmoid(ad.affine((params["W_ux"], x), (params["W_uh"], h_prev), (params["W_ud"], d)))
    inner = ad.add(ad.matmul(params["W_hx"], x), ad.mul(r, ad.matmul(params["W_hh"], h_prev)))
    cand = ad.add(
        ad.t_tanh(ad.add(inner, ad.matmul(params["W_hd"], d))),
        ad.t_tanh(ad.matmul(params["W_dc"], d)),
    )
    return ad.add(ad.mul(u, h_prev), ad.mul(ad.one_minus(u), cand))


def output_logits(params: Mapping[str, Tensor], h: Tensor) -> Tensor:
    return ad.matmul(params["W_ho"], h)


def output_dist(params: Mapping[str, Tensor], h) -> np.ndarray:
    """Next-token distribution softmax(W_ho h)."""
    return ad.softmax(params["W_ho"].data @ ad.as_tensor(h).data)


@dataclass
class DecodeState:
    h: Tensor
    t: int = 0
    prev_token: int = 0
    step: AggregateStep | None = None


def initial_state(n_hidden: int, bos_id: int) -> DecodeState:
    return DecodeState(h=Tensor(np.zeros(n_hidden)), t=0, prev_token=bos_id)


def advance(
    model, enc: EncodedDA, state: DecodeState, token_id: int, x_mask: np.ndarray | None = None
) -> tuple[Tensor, AggregateStep]:
    """Consume ``token_id`` from ``state``: align, refine, update the hidden state.

    ``x_mask`` (training only) multiplies the refined input, for dropout.
    """
    w = ad.take_row(model.word_emb, token_id)
    d, alpha = align(model.aligner, enc, state.h)
    x, beta = refine(model.refiner, d, w, state.h)
    if x_mask is not None:
        x = ad.mul(x, Tensor(x_mask))
    h = decoder_step(model.decoder, x, state.h, d)
    info = AggregateStep(
        d=d,
        alpha=np.empty(0) if alpha is None else alpha.data,
        x=x,
        beta=None if beta is None else float(beta.data),
    )
    return h, info


def step_token(
    model,
    enc: EncodedDA,
    state: DecodeState,
    mode: str = "greedy",
    target: int | None = None,
    rng: np.random.Generator | None = None,
    max_len: int | None = None,
) -> tuple[int, float, DecodeState]:
    """Feed ``state.prev_token`` and choose the next token.

    ``mode`` is ``"greedy"`` (argmax, lowest id on ties), ``"sample"`` (draw
    from the distribution with ``rng``) or ``"forced"`` (emit ``target``).
    Returns ``(next_id, log p(next_id), new_state)``.
    """
    limit = model.config.max_len if max_len is None else max_len
    if state.t >= limit:
        raise SequenceOverflow(f"decoder already produced {state.t} tokens (max_len={limit})")
    h, info = advance(model, enc, state, state.prev_token)
    logp = ad.log_softmax(output_logits(model.decoder, h).data)
    if mode == "greedy":
        nxt = int(np.argmax(logp))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        nxt = int(rng.choice(logp.size, p=np.exp(logp)))
    elif mode == "forced":
        if target is None:
            raise ValueError("forced mode needs a target token")
        nxt = int(target)
    else:
        raise ValueError(f"unknown decoding mode {mode!r}")
    return nxt, float(logp[nxt]), DecodeState(h=h, t=state.t + 1, prev_token=nxt, step=info)
