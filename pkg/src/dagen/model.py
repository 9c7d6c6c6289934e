"""The generator's parameters, teacher-forced loss, and checkpoint I/O."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .aggregator import RefinerConfig, refiner_shapes
from .autodiff import ParamStore, Tensor
from .config import AppConfig, ModelConfig
from .corpus import BOS_ID, EOS_ID, DialogueAct, Vocabs, canonical_order, indexed_pairs, value_key
from .decoder import DecodeState, advance, decoder_shapes, output_logits
from .encoder import EncodedDA, encode, gru_shapes

CKPT_MAGIC = b"DAGENCKP"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


class GeneratorModel:
    """All trainable tensors plus the vocabularies they are indexed by."""

    def __init__(self, config: ModelConfig, vocabs: Vocabs, seed: int = 0):
        self.config = config
        self.vocabs = vocabs
        self.seed = seed
        self.params = ParamStore(seed)
        E, A, H = config.embed, config.act_embed, config.hidden
        D = config.da_size
        s = config.init_scale
        add = self.params.add

        self.word_emb = add("emb.word", (len(vocabs.words), E), scale=s)
        tables = {
            "slot": add("emb.slot", (len(vocabs.slots), E), scale=s),
            "value": add("emb.value", (len(vocabs.values), E), scale=s),
            "act": add("emb.act", (len(vocabs.acts), A), scale=s),
        }
        self.tables = tables
        self.enc_fwd = {k: add(f"enc.fwd.{k}", shp, scale=s) for k, shp in gru_shapes(2 * E, H).items()}
        self.enc_bwd = {k: add(f"enc.bwd.{k}", shp, scale=s) for k, shp in gru_shapes(2 * E, H).items()}
        self.aligner = {
            "W_a": add("align.W_a", (H, H), scale=s),
            "U_a": add("align.U_a", (H, H), scale=s),
            "v_a": add("align.v_a", (H,), scale=s),
        }
        prefix = "refine." + config.refiner.replace("-", "_")
        self.refiner = RefinerConfig(
            config.refiner,
            {k: add(f"{prefix}.{k}", shp, scale=s) for k, shp in refiner_shapes(config.refiner, E, H, D).items()},
        )
        self.decoder = {
            k: add(f"dec.{k}", shp, scale=s) for k, shp in decoder_shapes(E, H, D, len(vocabs.words)).items()
        }

    # -- inputs -------------------------------------------------------------

    def da_ids(self, da: DialogueAct) -> tuple[list[int], list[int], int]:
        v = self.vocabs
        trip = indexed_pairs(da)
        return (
            [v.slots.id(s) for s, _, _ in trip],
            [v.values.id(value_key(s, val, k)) for s, val, k in trip],
            v.acts.id(da.act_type),
        )

    def encode(self, da: DialogueAct) -> EncodedDA:
        assert da.is_canonical(), f"dialogue act must be canonically ordered: {da}"
        slot_ids, value_ids, act_id = self.da_ids(da)
        return encode(slot_ids, value_ids, act_id, self.tables, self.enc_fwd, self.enc_bwd)

    # -- losses -------------------------------------------------------------

    def sentence_nll(
        self,
        da: DialogueAct,
        token_ids: list[int],
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
        collect: list | None = None,
    ) -> Tensor:
        """Teacher-forced NLL of ``token_ids`` followed by EOS, as a scalar tensor.

        Dropout (inverted, rate ``dropout``) masks the refined input and the
        hidden state feeding the output layer.
        """
        if dropout > 0.0 and rng is None:
            raise ValueError("dropout needs an rng")
        enc = self.encode(canonical_order(da) if not da.is_canonical() else da)
        H = self.config.hidden
        inputs = [BOS_ID, *token_ids]
        targets = [*token_ids, EOS_ID]
        state = DecodeState(h=Tensor(np.zeros(H)), prev_token=BOS_ID)
        terms = []
        keep = 1.0 - dropout
        for tok_in, tok_out in zip(inputs, targets):
            x_mask = None
            if dropout > 0.0:
                x_mask = (rng.random(self.config.embed) < keep) / keep
            h, info = advance(self, enc, state, tok_in, x_mask)
            if collect is not None:
                collect.append(info)
            h_out = h
            if dropout > 0.0:
                h_out = ad.mul(h, Tensor((rng.random(H) < keep) / keep))
            terms.append(ad.nll_of_logits(output_logits(self.decoder, h_out), tok_out))
            state = DecodeState(h=h, t=state.t + 1, prev_token=tok_out)
        return ad.add_n(terms)

    def l2_penalty(self) -> Tensor:
        return ad.add_n([ad.sum_squares(p) for _, p in self.params.items()])

    # -- checkpoints ----------------------------------------------------------

    def save(self, path, app_config: AppConfig | None = None, extra: dict | None = None) -> None:
        save_checkpoint(self, path, app_config, extra)


def save_checkpoint(model: GeneratorModel, path, app_config: AppConfig | None = None, extra: dict | None = None) -> None:
    """Write header + named float64 tensors, little-endian.

    Layout: 8-byte magic, uint32 version, uint32 header length, UTF-8 JSON
    header, uint32 tensor count, then per tensor: uint16 name length, name,
    uint8 ndim, ndim x uint32 dims, raw '<f8' values.
    """
    header = {
        "format_version": CKPT_VERSION,
        "seed": model.seed,
        "model": vars(model.config).copy(),
        "app": app_config.to_flat() if app_config is not None else None,
        "vocabs": model.vocabs.to_dict(),
        "extra": extra or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(model.params)))
        for name, p in model.params.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    try:
        return _parse_checkpoint(data, path)
    except (struct.error, ValueError, UnicodeDecodeError, KeyError) as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"{path} is truncated or corrupt: {e}") from e


def _parse_checkpoint(data: bytes, path) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:8] != CKPT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 16
    header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        n = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    return header, tensors


def load_checkpoint(path) -> tuple[GeneratorModel, dict]:
    header, tensors = read_checkpoint(path)
    cfg = ModelConfig(**header["model"])
    model = GeneratorModel(cfg, Vocabs.from_dict(header["vocabs"]), seed=header["seed"])
    if set(tensors) != set(model.params.names()):
        raise CheckpointError("checkpoint parameters do not match the model layout")
    for name, arr in tensors.items():
        if arr.shape != model.params[name].shape:
            raise CheckpointError(f"shape mismatch for {name}: {arr.shape} vs {model.params[name].shape}")
    model.params.restore(tensors)
    return model, header
