"""Scene-graph construction, probability filtering, and match export.

The scene graph has images as nodes and verified matching pairs as
edges.  Edges scored by the pair classifier are kept when their
probability is at least tau; everything below is treated as illusory
and removed before reconstruction.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DuplicateEdge,
    InvalidParams,
    MissingMatches,
    MissingProbability,
    ParseError,
)

DEFAULT_TAU = 0.8
SWEEP_TAUS = (0.5, 0.6, 0.7, 0.8, 0.9, 0.97)


def edge_key(a, b):
    if a == b:
        raise InvalidParams(f"self-loop on {a!r}")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    num_matches: int
    probability: float | None = None


@dataclass
class SceneGraph:
    """Undirected graph: image nodes, verified-pair edges."""

    nodes: set = field(default_factory=set)
    edges: dict = field(default_factory=dict)  # (a, b) sorted -> Edge

    def add_edge(self, edge):
        key = edge_key(edge.a, edge.b)
        if key in self.edges:
            raise DuplicateEdge(f"edge {key} given more than once")
        self.edges[key] = edge
        self.nodes.update(key)

    def num_edges(self):
        return len(self.edges)

    def sorted_edges(self):
        return [self.edges[k] for k in sorted(self.edges)]


def build_scene_graph(pairs, roster=None):
    """Graph from (image_a, image_b, num_matches[, probability]) tuples.

    `roster` may list extra images to keep as isolated nodes.
    Duplicate unordered pairs raise DuplicateEdge.
    """
    g = SceneGraph()
    for item in pairs:
        a, b, num = item[0], item[1], int(item[2])
        prob = float(item[3]) if len(item) > 3 and item[3] is not None else None
        key = edge_key(a, b)
        g.add_edge(Edge(key[0], key[1], num, prob))
    if roster is not None:
        g.nodes.update(roster)
    return g


def set_probabilities(graph, probabilities):
    """Attach classifier probabilities keyed by (image_a, image_b)."""
    for key, p in probabilities.items():
        key = edge_key(*key)
        if key in graph.edges:
            graph.edges[key] = replace(graph.edges[key], probability=float(p))
    return graph


def filter_edges(graph, tau=DEFAULT_TAU):
    """Keep edges with probability >= tau; nodes are left untouched."""
    out = SceneGraph(nodes=set(graph.nodes))
    for key in sorted(graph.edges):
        e = graph.edges[key]
        if e.probability is None:
            raise MissingProbability(f"edge {key} has no probability")
        if e.probability >= tau:
            out.edges[key] = e
    return out


def connected_components(graph):
    """Undirected components, each sorted, ordered by smallest node id."""
    adj = {n: set() for n in graph.nodes}
    for a, b in graph.edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = set()
    comps = []
    for start in sorted(graph.nodes):
        if start in seen:
            continue
        stack = [start]
        comp = []
        seen.add(start)
        while stack:
            n = stack.pop()
            comp.append(n)
            for nb in adj[n]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        comps.append(sorted(comp))
    comps.sort(key=lambda c: c[0])
    return comps


@dataclass(frozen=True)
class SweepRow:
    tau: float
    n_edges: int
    n_components: int
    components: tuple


def threshold_sweep(graph, taus=SWEEP_TAUS):
    """Edge retention and component structure across thresholds."""
    rows = []
    for tau in taus:
        filtered = filter_edges(graph, tau)
        comps = connected_components(filtered)
        rows.append(SweepRow(
            tau=float(tau),
            n_edges=filtered.num_edges(),
            n_components=len(comps),
            components=tuple(tuple(c) for c in comps),
        ))
    return rows


def export_matches(graph, edge_matches, path):
    """Write the raw match-import text for the retained pairs.

    Per retained edge: a line with the two image names, one line per
    match with the two keypoint indices, then a blank line.  Pairs
    removed by the filter are simply absent.  `edge_matches` maps the
    sorted (a, b) pair to two equal-length index arrays.
    """
    lines = []
    for key in sorted(graph.edges):
        if key not in edge_matches:
            raise MissingMatches(f"no match data for retained edge {key}")
        idx_a, idx_b = edge_matches[key]
        idx_a = np.asarray(idx_a, dtype=np.int64)
        idx_b = np.asarray(idx_b, dtype=np.int64)
        if idx_a.shape != idx_b.shape:
            raise InvalidParams(f"index arrays disagree for edge {key}")
        lines.append(f"{key[0]} {key[1]}")
        for ia, ib in zip(idx_a, idx_b):
            lines.append(f"{ia} {ib}")
        lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
        if lines:
            fh.write("\n")


def parse_match_import(path):
    """Inverse of export_matches: {(a, b): (idx_a, idx_b)}."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        blocks = fh.read().split("\n\n")
    for block in blocks:
        rows = [r for r in block.strip().splitlines() if r.strip()]
        if not rows:
            continue
        header = rows[0].split()
        if len(header) != 2:
            raise ParseError(f"bad pair header {rows[0]!r}", path=path)
        ia, ib = [], []
        for row in rows[1:]:
            parts = row.split()
            if len(parts) != 2:
                raise ParseError(f"bad match row {row!r}", path=path)
            ia.append(int(parts[0]))
            ib.append(int(parts[1]))
        key = edge_key(header[0], header[1])
        if key in out:
            raise DuplicateEdge(f"pair {key} appears twice in import file")
        out[key] = (np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64))
    return out


# ---------------------------------------------------------------------------
# keypoint indexing for export
# ---------------------------------------------------------------------------

class KeypointIndexer:
    """Per-image keypoint list assembled across match files.

    Keypoints are registered first-seen (exact coordinates) and get
    stable integer indices, mirroring how a reconstruction tool indexes
    per-image features.
    """

    def __init__(self):
        self._maps = {}   # image -> {(x, y): index}
        self._lists = {}  # image -> [(x, y)]

    def register(self, image, pts):
        m = self._maps.setdefault(image, {})
        lst = self._lists.setdefault(image, [])
        idx = np.empty(len(pts), dtype=np.int64)
        for i, (x, y) in enumerate(np.asarray(pts, dtype=np.float64).reshape(-1, 2)):
            key = (float(x), float(y))
            if key not in m:
                m[key] = len(lst)
                lst.append(key)
            idx[i] = m[key]
        return idx

    def keypoints(self, image):
        return np.array(self._lists.get(image, []), dtype=np.float64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# graph CSV interchange
# ---------------------------------------------------------------------------

def write_graph_csv(path, graph):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["image_a", "image_b", "num_matches", "probability"])
        for e in graph.sorted_edges():
            prob = "" if e.probability is None else f"{e.probability:.8f}"
            w.writerow([e.a, e.b, e.num_matches, prob])


def read_graph_csv(path, roster=None):
    pairs = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            prob = row.get("probability", "")
            pairs.append((
                row["image_a"], row["image_b"], int(row["num_matches"]),
                float(prob) if prob not in ("", None) else None,
            ))
    return build_scene_graph(pairs, roster=roster)
