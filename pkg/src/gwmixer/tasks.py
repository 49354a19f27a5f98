"""Synthetic sequence tasks over token graphs.

Three task kinds: copy (predict the input), reverse (predict the input
read backwards), masked_recovery (predict original tokens at masked
positions). Graphs come from a chain over positions or from CoNLL-U
dependency parses. Generation is deterministic per (spec, seed).
"""

from dataclasses import dataclass

import numpy as np

from .graphs import TokenGraph, build_chain_graph, parse_conllu

TASK_KINDS = ("copy", "reverse", "masked_recovery")

# masked_recovery tokens combine three independent "digit" streams with
# structure at three distinct scales: a slow sticky Markov stream (long
# runs -> smooth, wide-neighbourhood signal) and two cyclic counters of
# different spatial periods, each advancing from a random start phase (a
# pure spatial oscillation whose phase can only be carried through a
# matching frequency band). A masked token is recovered well only by
# aggregating context at all three scales at once. With i.i.d. tokens
# the task would sit at chance level no matter the model; with a single
# scale, one aggregation profile would suffice.
STICKY_REPEAT = 15 / 16
COUNTER_BASE = 3
COUNTER_HOLDS = (1, 2)  # spatial periods 3 and 6
# token value space too small to split into digits -> one sticky stream
FALLBACK_REPEAT = 3 / 4


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    n: int
    vocab: int
    mask_rate: float = 0.25
    graph_source: str = "chain"
    conllu_path: str | None = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.n < 2:
            raise ValueError(f"sequence length must be >= 2, got {self.n}")
        if self.vocab < 2:
            raise ValueError(f"vocab must be >= 2, got {self.vocab}")
        if not 0.0 < self.mask_rate < 1.0:
            raise ValueError(f"mask_rate must be in (0, 1), got {self.mask_rate}")
        if self.graph_source not in ("chain", "conllu"):
            raise ValueError(f"unknown graph source {self.graph_source!r}")
        if self.graph_source == "conllu" and not self.conllu_path:
            raise ValueError("conllu graph source needs conllu_path")

    @property
    def mask_token(self) -> int:
        """Highest id is reserved as the MASK token."""
        return self.vocab - 1


@dataclass
class TaskSample:
    graph: TokenGraph
    tokens: np.ndarray  # (n,) int64 model input
    targets: np.ndarray  # (n,) int64
    mask: np.ndarray  # (n,) bool, True where the position is scored


_sentence_cache: dict = {}


def _conllu_sentences(path: str) -> list:
    sents = _sentence_cache.get(path)
    if sents is None:
        with open(path, encoding="utf-8") as fh:
            sents = [g for g in parse_conllu(fh.read()) if g.n >= 2]
        if not sents:
            raise ValueError(f"{path}: no sentences with at least 2 tokens")
        _sentence_cache[path] = sents
    return sents


def _sticky_chain(rng: np.random.Generator, n: int, base: int, repeat: float) -> np.ndarray:
    digit = np.empty(n, dtype=np.int64)
    digit[0] = rng.integers(base)
    stay = rng.random(n - 1) < repeat
    fresh = rng.integers(base, size=n - 1)
    for i in range(1, n):
        digit[i] = digit[i - 1] if stay[i - 1] else fresh[i - 1]
    return digit


def _multiscale_tokens(rng: np.random.Generator, n: int, values: int) -> np.ndarray:
    """Sticky chain digit combined with two cyclic counter digits.

    `values` is the number of usable token ids; the digits multiply out
    to at most `values`, so the MASK id is never produced. Draw order is
    fixed: sticky chain first, then one start phase per counter.
    """
    combined = COUNTER_BASE ** len(COUNTER_HOLDS)
    if values < 2 * combined:
        return _sticky_chain(rng, n, values, FALLBACK_REPEAT)
    toks = _sticky_chain(rng, n, values // combined, STICKY_REPEAT)
    pos = np.arange(n, dtype=np.int64)
    for hold in COUNTER_HOLDS:
        phase = int(rng.integers(COUNTER_BASE))
        toks = toks * COUNTER_BASE + (phase + pos // hold) % COUNTER_BASE
    return toks


def gen_task_batch(spec: TaskSpec, seed) -> TaskSample:
    """One deterministic sample. seed may be an int or a SeedSequence.

    Draw order is fixed: graph choice (conllu only), then tokens, then
    mask positions. Token ids are uniform over [0, vocab-1) so the MASK
    id never occurs as a regular token.
    """
    rng = np.random.default_rng(seed)
    if spec.graph_source == "chain":
        graph = build_chain_graph(spec.n)
    else:
        sents = _conllu_sentences(spec.conllu_path)
        graph = sents[int(rng.integers(len(sents)))]
    n = graph.n
    hi = spec.vocab - 1
    if spec.kind == "copy":
        tokens = rng.integers(hi, size=n).astype(np.int64)
        return TaskSample(graph, tokens, tokens.copy(), np.ones(n, dtype=bool))
    if spec.kind == "reverse":
        tokens = rng.integers(hi, size=n).astype(np.int64)
        return TaskSample(graph, tokens, tokens[::-1].copy(), np.ones(n, dtype=bool))
    original = _multiscale_tokens(rng, n, hi)
    n_masked = max(1, int(np.floor(spec.mask_rate * n)))
    pos = rng.choice(n, size=n_masked, replace=False)
    tokens = original.copy()
    tokens[pos] = spec.mask_token
    mask = np.zeros(n, dtype=bool)
    mask[pos] = True
    return TaskSample(graph, tokens, original, mask)


_STREAM_IDS = {"train": 0, "val": 1, "eval": 2}


def task_stream(spec: TaskSpec, seed: int, stream: str = "train"):
    """Infinite deterministic sample stream. Distinct stream names draw
    disjoint seed sequences from the same base seed."""
    sid = _STREAM_IDS[stream]
    i = 0
    while True:
        yield gen_task_batch(spec, np.random.SeedSequence(entropy=seed, spawn_key=(sid, i)))
        i += 1


def fixed_samples(spec: TaskSpec, seed: int, count: int, stream: str = "val") -> list:
    gen = task_stream(spec, seed, stream)
    return [next(gen) for _ in range(count)]
