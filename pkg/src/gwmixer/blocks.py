"""Mixing layers and the full sequence model.

A layer is wavelet mixing with a residual, then a two-layer ReLU feed
forward with a second residual (no normalization):

    m = mix(x);  r = x + m;  y = r + relu(r W1 + b1) W2 + b2

The model embeds token ids, stacks layers over one shared graph spectrum,
and projects to vocabulary logits. Forward passes record a tape; backward
passes replay it with hand-written gradients.
"""

from dataclasses import dataclass

import numpy as np

from .filterbank import (
    FilterBank,
    MixGrads,
    MixMode,
    init_filter_mlp,
    wavelet_mix,
    wavelet_mix_backward,
)
from .graphs import NormalizedLaplacian, TokenGraph
from .serialize import dumps_canonical
from .spectral import DEFAULT_CACHE, EigenSystem, SpectrumCache

CHECKPOINT_VERSION = 1


@dataclass
class FeedForward:
    w1: np.ndarray  # (d, f)
    b1: np.ndarray  # (f,)
    w2: np.ndarray  # (f, d)
    b2: np.ndarray  # (d,)


def build_feed_forward(d: int, mult: int, rng: np.random.Generator) -> FeedForward:
    f = d * mult
    bd = 1.0 / np.sqrt(d)
    bf = 1.0 / np.sqrt(f)
    return FeedForward(
        w1=rng.uniform(-bd, bd, (d, f)),
        b1=rng.uniform(-bd, bd, f),
        w2=rng.uniform(-bf, bf, (f, d)),
        b2=rng.uniform(-bf, bf, d),
    )


@dataclass
class WaveletLayer:
    bank: FilterBank
    ffn: FeedForward


@dataclass
class LayerTape:
    """Intermediates needed to run a layer backward."""

    x: np.ndarray
    r: np.ndarray
    pre: np.ndarray  # FFN pre-activation
    mode: MixMode


def layer_forward(layer: WaveletLayer, eig: EigenSystem | None,
                  lap: NormalizedLaplacian | None, x: np.ndarray,
                  mode: MixMode):
    """Returns (y, LayerTape)."""
    x = np.asarray(x, dtype=np.float64)
    m = wavelet_mix(layer.bank, eig, x, mode, lap)
    r = x + m
    pre = r @ layer.ffn.w1 + layer.ffn.b1
    y = r + np.maximum(pre, 0.0) @ layer.ffn.w2 + layer.ffn.b2
    return y, LayerTape(x, r, pre, mode)


@dataclass
class LayerGrads:
    x: np.ndarray
    mix: MixGrads
    ffn: dict  # w1/b1/w2/b2


def layer_backward(layer: WaveletLayer, eig: EigenSystem, tape: LayerTape,
                   upstream: np.ndarray) -> LayerGrads:
    ffn = layer.ffn
    hidden = np.maximum(tape.pre, 0.0)
    d_hidden = upstream @ ffn.w2.T
    d_pre = d_hidden * (tape.pre > 0.0)
    ffn_grads = {
        "w1": tape.r.T @ d_pre,
        "b1": d_pre.sum(axis=0),
        "w2": hidden.T @ upstream,
        "b2": upstream.sum(axis=0),
    }
    d_r = upstream + d_pre @ ffn.w1.T
    mix = wavelet_mix_backward(layer.bank, eig, tape.x, tape.mode, d_r)
    return LayerGrads(d_r + mix.x, mix, ffn_grads)


@dataclass
class WaveletModel:
    embed: np.ndarray  # (vocab, d)
    layers: list
    readout: np.ndarray  # (d, vocab)

    @property
    def vocab(self) -> int:
        return self.embed.shape[0]

    @property
    def d(self) -> int:
        return self.embed.shape[1]


def build_model(d: int, k: int, layers: int, ffn_mult: int, vocab: int,
                seed: int = 0, hidden: int = 16) -> WaveletModel:
    """Seeded construction. Draw order: embed, readout, then per layer the
    filter bank (filters in index order, alpha constant 1/K) and the FFN."""
    if vocab < 2:
        raise ValueError(f"vocab must be >= 2, got {vocab}")
    if layers < 1:
        raise ValueError(f"need at least one layer, got {layers}")
    rng = np.random.default_rng(seed)
    bd = 1.0 / np.sqrt(d)
    embed = rng.uniform(-bd, bd, (vocab, d))
    readout = rng.uniform(-bd, bd, (d, vocab))
    stack = []
    for _ in range(layers):
        filters = [init_filter_mlp(rng, hidden) for _ in range(k)]
        bank = FilterBank(filters, np.full((k, d), 1.0 / k))
        stack.append(WaveletLayer(bank, build_feed_forward(d, ffn_mult, rng)))
    return WaveletModel(embed, stack, readout)


def model_params(model: WaveletModel) -> dict:
    """Named live views of every parameter tensor (mutating them mutates
    the model). Names are stable and double as checkpoint keys."""
    params = {"embed": model.embed, "readout": model.readout}
    for i, layer in enumerate(model.layers):
        for k, f in enumerate(layer.bank.filters):
            base = f"layers.{i}.bank.filters.{k}"
            params[f"{base}.w1"] = f.w1
            params[f"{base}.b1"] = f.b1
            params[f"{base}.w2"] = f.w2
            params[f"{base}.b2"] = f.b2
        params[f"layers.{i}.bank.alpha"] = layer.bank.alpha
        for name in ("w1", "b1", "w2", "b2"):
            params[f"layers.{i}.ffn.{name}"] = getattr(layer.ffn, name)
    return params


@dataclass
class ModelTape:
    token_ids: np.ndarray
    layer_tapes: list
    h_final: np.ndarray
    eig: EigenSystem
    mode: MixMode


def model_forward(model: WaveletModel, graph: TokenGraph, token_ids,
                  mode: MixMode, cache: SpectrumCache | None = None):
    """Embeds ids, runs the layer stack over the graph spectrum, projects
    to logits. Returns (logits, ModelTape). The Laplacian/eigensystem come
    from the cache (the shared default when none is given)."""
    token_ids = np.asarray(token_ids, dtype=np.int64)
    if token_ids.ndim != 1 or len(token_ids) != graph.n:
        raise ValueError(f"need {graph.n} token ids, got shape {token_ids.shape}")
    if token_ids.min(initial=0) < 0 or token_ids.max(initial=0) >= model.vocab:
        raise ValueError("token id out of vocabulary range")
    cache = cache if cache is not None else DEFAULT_CACHE
    lap, eig = cache.get_or_compute(graph)
    x = model.embed[token_ids]
    tapes = []
    for layer in model.layers:
        x, tape = layer_forward(layer, eig, lap, x, mode)
        tapes.append(tape)
    logits = x @ model.readout
    return logits, ModelTape(token_ids, tapes, x, eig, mode)


def model_backward(model: WaveletModel, tape: ModelTape,
                   grad_logits: np.ndarray) -> dict:
    """Gradients for every named parameter, keyed like model_params."""
    grads = {}
    grads["readout"] = tape.h_final.T @ grad_logits
    d_x = grad_logits @ model.readout.T
    for i in reversed(range(len(model.layers))):
        lg = layer_backward(model.layers[i], tape.eig, tape.layer_tapes[i], d_x)
        d_x = lg.x
        for k, fg in enumerate(lg.mix.filters):
            base = f"layers.{i}.bank.filters.{k}"
            for name in ("w1", "b1", "w2", "b2"):
                grads[f"{base}.{name}"] = fg[name]
        grads[f"layers.{i}.bank.alpha"] = lg.mix.alpha
        for name in ("w1", "b1", "w2", "b2"):
            grads[f"layers.{i}.ffn.{name}"] = lg.ffn[name]
    grad_embed = np.zeros_like(model.embed)
    np.add.at(grad_embed, tape.token_ids, d_x)
    grads["embed"] = grad_embed
    return {name: grads[name] for name in model_params(model)}


def checkpoint_text(config: dict, params: dict) -> str:
    """Checkpoint JSON: {"version": 1, "config": {...}, "params": {...}}
    with sorted keys and floats at 17 significant digits, so equal state
    yields equal bytes."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": config,
        "params": {name: np.asarray(arr, dtype=np.float64) for name, arr in params.items()},
    }
    return dumps_canonical(doc)


def save_checkpoint(path, config: dict, params: dict) -> None:
    text = checkpoint_text(config, params)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def load_checkpoint(path):
    """Returns (config, params) with params as float64 arrays."""
    import json

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    params = {name: np.asarray(val, dtype=np.float64) for name, val in doc["params"].items()}
    return doc["config"], params


def model_from_params(config: dict, params: dict) -> WaveletModel:
    """Rebuild a model from checkpoint config + params. Shapes must match
    the architecture the config describes."""
    model = build_model(
        d=int(config["d"]), k=int(config["k"]), layers=int(config["layers"]),
        ffn_mult=int(config["ffn_mult"]), vocab=int(config["vocab"]), seed=0,
    )
    live = model_params(model)
    missing = set(live) - set(params)
    extra = set(params) - set(live)
    if missing or extra:
        raise ValueError(f"parameter name mismatch (missing {sorted(missing)}, extra {sorted(extra)})")
    for name, arr in live.items():
        src = np.asarray(params[name], dtype=np.float64)
        if src.shape != arr.shape:
            raise ValueError(f"{name}: shape {src.shape} != expected {arr.shape}")
        arr[...] = src
    return model
