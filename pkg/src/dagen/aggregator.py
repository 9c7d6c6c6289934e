"""Aligner (attention over encoded pairs) and the Refiner variants."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ConfigError, normalize_refiner
from .encoder import EncodedDA

# parameters each refiner owns
REFINER_PARAMS: dict[str, tuple[str, ...]] = {
    "gr-add": ("W_gd",),
    "gr-mul": ("W_gd",),
    "aroa-v": ("V_ra",),
    "aroa-m": ("W_aw",),
    "aroa-c": ("W_aw", "W_ah"),
    "identity": (),
}


def refiner_shapes(variant: str, embed: int, hidden: int, da_size: int) -> dict[str, tuple[int, ...]]:
    shapes = {
        "W_gd": (embed, da_size),
        "V_ra": (da_size,),
        "W_aw": (da_size, embed),
        "W_ah": (da_size, hidden),
    }
    return {k: shapes[k] for k in REFINER_PARAMS[normalize_refiner(variant)]}


@dataclass
class RefinerConfig:
    variant: str
    params: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        self.variant = normalize_refiner(self.variant)
        want = set(REFINER_PARAMS[self.variant])
        if set(self.params) != want:
            raise ConfigError(
                f"refiner {self.variant} needs parameters {sorted(want)}, got {sorted(self.params)}"
            )


@dataclass
class AggregateStep:
    d: Tensor
    alpha: np.ndarray
    x: Tensor | None = None
    beta: float | None = None


def attention_keys(enc: EncodedDA, W_a: Tensor) -> Tensor | None:
    """W_a s_i for all pairs; constant over decoding steps so computed once."""
    if enc.states is None:
        return None
    return ad.matmul(enc.states, ad.transpose(W_a))


def align(params: Mapping[str, Tensor], enc: EncodedDA, h_prev: Tensor) -> tuple[Tensor, Tensor | None]:
    """d = a (+) sum_i alpha_i s_i with alpha = softmax_i(v_a . tanh(W_a s_i + U_a h)).

    Returns ``(d, alpha)``; alpha is ``None`` for an act without pairs, in
    which case the attended summary is zero.
    """
    n_hidden = params["U_a"].shape[0]
    if enc.states is None:
        return ad.concat([enc.act_vec, Tensor(np.zeros(n_hidden))]), None
    if enc.keys is None:
        enc.keys = attention_keys(enc, params["W_a"])
    scores = ad.matmul(ad.t_tanh(ad.add(enc.keys, ad.matmul(params["U_a"], h_prev))), params["v_a"])
    alpha = ad.t_softmax(scores)
    summary = ad.matmul(alpha, enc.states)
    return ad.concat([enc.act_vec, summary]), alpha


def refine(cfg: RefinerConfig, d: Tensor, w: Tensor, h_prev: Tensor) -> tuple[Tensor, Tensor | None]:
    """Turn the token embedding ``w`` into the decoder input ``x``.

    Gating variants combine ``W_gd d`` with ``w`` (sum or product).  The
    attention variants scale ``w`` by a scalar ``beta = sigmoid(V_ra . d)``,
    where ``V_ra`` is a learned vector (aroa-v), ``W_aw w`` (aroa-m) or
    ``W_aw w + W_ah h_prev`` (aroa-c).
    """
    p = cfg.params
    v = cfg.variant
    if v == "identity":
        return w, None
    if v == "gr-add":
        return ad.add(ad.matmul(p["W_gd"], d), w), None
    if v == "gr-mul":
        return ad.mul(ad.matmul(p["W_gd"], d), w), None
    if v == "aroa-v":
        v_ra = p["V_ra"]
    elif v == "aroa-m":
        v_ra = ad.matmul(p["W_aw"], w)
    else:
        v_ra = ad.affine((p["W_aw"], w), (p["W_ah"], h_prev))
    beta = ad.t_sigmoid(ad.dot(v_ra, d))
    return ad.mul(beta, w), beta
