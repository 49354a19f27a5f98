"""Token graphs and their normalized Laplacians.

A TokenGraph is a small directed graph over sequence positions (chain
neighbours, dependency arcs from a CoNLL-U parse, or anything hand built).
Spectral code operates on the symmetrized graph through its normalized
Laplacian L = I - D^{-1/2} A D^{-1/2}.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np


class ConlluParseError(ValueError):
    """Malformed CoNLL-U input. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TokenGraph:
    """Immutable directed graph over n token positions.

    Edges are (src, dst) index pairs. Duplicates collapse to one; self
    loops are rejected. Optional node_labels (e.g. word forms) must have
    length n.
    """

    n: int
    edges: tuple = ()
    node_labels: tuple | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        seen = set()
        canon = []
        for e in self.edges:
            s, d = int(e[0]), int(e[1])
            if not (0 <= s < self.n and 0 <= d < self.n):
                raise ValueError(f"edge ({s}, {d}) out of range for n={self.n}")
            if s == d:
                raise ValueError(f"self loop ({s}, {d}) not allowed")
            if (s, d) not in seen:
                seen.add((s, d))
                canon.append((s, d))
        object.__setattr__(self, "edges", tuple(canon))
        if self.node_labels is not None:
            labels = tuple(str(x) for x in self.node_labels)
            if len(labels) != self.n:
                raise ValueError(
                    f"got {len(labels)} node labels for {self.n} nodes"
                )
            object.__setattr__(self, "node_labels", labels)

    def is_symmetric(self) -> bool:
        es = set(self.edges)
        return all((d, s) in es for s, d in es)


def build_chain_graph(n: int) -> TokenGraph:
    """Directed path over n positions: edges (i, i+1). n=1 gives no edges."""
    if n < 1:
        raise ValueError(f"chain length must be >= 1, got {n}")
    return TokenGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def symmetrize(g: TokenGraph) -> TokenGraph:
    """Close the edge set under reversal. Node labels carry over."""
    es = set(g.edges)
    es.update((d, s) for s, d in g.edges)
    return TokenGraph(g.n, tuple(sorted(es)), g.node_labels)


def content_hash(g: TokenGraph) -> str:
    """Deterministic hash of the graph structure (labels excluded)."""
    payload = f"n={g.n};" + ";".join(f"{s},{d}" for s, d in sorted(g.edges))
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class NormalizedLaplacian:
    """Dense normalized Laplacian of a symmetrized graph.

    matrix is I - D^{-1/2} A D^{-1/2} with the convention that isolated
    nodes get a zero row/column (diagonal 0, not 1). Arrays are frozen.
    The private COO fields hold the off-diagonal entries for matrix-free
    products; they are None when the Laplacian was built from a raw matrix.
    """

    matrix: np.ndarray
    degrees: np.ndarray
    _coo_src: np.ndarray | None = field(default=None, repr=False)
    _coo_dst: np.ndarray | None = field(default=None, repr=False)
    _coo_val: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def normalized_laplacian(g: TokenGraph) -> NormalizedLaplacian:
    """Build L = I - D^{-1/2} A D^{-1/2} from a symmetric TokenGraph.

    Raises ValueError if the edge set is not closed under reversal; callers
    with directed graphs should symmetrize() first.
    """
    if not g.is_symmetric():
        raise ValueError("edge set is not symmetric; call symmetrize() first")
    n = g.n
    deg = np.zeros(n)
    for s, _ in g.edges:
        deg[s] += 1.0
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    lap = np.zeros((n, n))
    edges = sorted(g.edges)
    if edges:
        src = np.array([e[0] for e in edges], dtype=np.intp)
        dst = np.array([e[1] for e in edges], dtype=np.intp)
        val = dinv[src] * dinv[dst]
        lap[src, dst] = -val
    else:
        src = np.zeros(0, dtype=np.intp)
        dst = np.zeros(0, dtype=np.intp)
        val = np.zeros(0)
    lap[np.arange(n), np.arange(n)] = np.where(deg > 0, 1.0, 0.0)
    deg = deg.copy()
    lap.flags.writeable = False
    deg.flags.writeable = False
    return NormalizedLaplacian(lap, deg, src, dst, val)


def parse_conllu(text: str) -> list[TokenGraph]:
    """Read dependency graphs from CoNLL-U text.

    One TokenGraph per sentence; node i is token i+1, node_labels are the
    FORM column, and each head h > 0 contributes a directed edge
    (h-1, token-1). Multiword ranges ("1-2") and empty nodes ("1.1") are
    skipped; comment lines are ignored. Malformed rows raise
    ConlluParseError with the offending line number.
    """
    graphs = []
    tokens = []  # (id, form, head, line_no)

    def finish():
        if not tokens:
            return
        n = len(tokens)
        edges = []
        labels = []
        for tid, form, head, line_no in tokens:
            if head < 0 or head > n:
                raise ConlluParseError(
                    line_no, f"head {head} out of range for sentence of {n} tokens"
                )
            if head == tid:
                raise ConlluParseError(line_no, f"token {tid} is its own head")
            if head > 0:
                edges.append((head - 1, tid - 1))
            labels.append(form)
        graphs.append(TokenGraph(n, tuple(edges), tuple(labels)))
        tokens.clear()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            finish()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(
                line_no, f"expected 10 tab-separated columns, got {len(cols)}"
            )
        tid = cols[0]
        if "-" in tid or "." in tid:
            continue  # multiword range / empty node: no graph node
        try:
            tid = int(tid)
        except ValueError:
            raise ConlluParseError(line_no, f"bad token id {cols[0]!r}") from None
        if tid != len(tokens) + 1:
            raise ConlluParseError(
                line_no, f"token id {tid} out of order (expected {len(tokens) + 1})"
            )
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(line_no, f"bad head {cols[6]!r}") from None
        tokens.append((tid, cols[1], head, line_no))
    finish()
    return graphs


def to_conllu(g: TokenGraph) -> str:
    """Serialize a dependency forest back to CoNLL-U (round-trip helper).

    Requires every node to have at most one incoming edge.
    """
    head = [0] * g.n
    for s, d in g.edges:
        if head[d] != 0:
            raise ValueError(f"node {d} has multiple heads; not a forest")
        head[d] = s + 1
    lines = []
    for i in range(g.n):
        form = g.node_labels[i] if g.node_labels else f"w{i + 1}"
        lines.append(
            "\t".join([str(i + 1), form, "_", "_", "_", "_", str(head[i]), "_", "_", "_"])
        )
    return "\n".join(lines) + "\n\n"


def graph_to_json(g: TokenGraph) -> str:
    """Graph as a JSON object {"n", "edges", "labels"?}."""
    doc = {"n": g.n, "edges": [[s, d] for s, d in g.edges]}
    if g.node_labels is not None:
        doc["labels"] = list(g.node_labels)
    return json.dumps(doc, sort_keys=True)


def graph_from_json(text: str) -> TokenGraph:
    doc = json.loads(text)
    if not isinstance(doc, dict) or "n" not in doc or "edges" not in doc:
        raise ValueError('graph JSON must be an object with "n" and "edges"')
    labels = doc.get("labels")
    return TokenGraph(
        int(doc["n"]),
        tuple((int(e[0]), int(e[1])) for e in doc["edges"]),
        tuple(labels) if labels is not None else None,
    )
