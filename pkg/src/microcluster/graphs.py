"""Multigraphs obtained by pairing consecutive items of a partition."""
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .partition import Partition

__all__ = ["Multigraph", "partition_to_multigraph", "degree_stats", "write_edge_list", "graph_summary"]


@dataclass(frozen=True)
class Multigraph:
    """Undirected multigraph on vertices ``1..n_vertices``.

    ``edges`` is an (E, 2) integer array; self-loops and parallel edges are allowed.
    ``dropped_item`` is set when the source partition had odd length.
    """

    edges: np.ndarray
    n_vertices: int
    dropped_item: bool = False

    @property
    def n_edges(self):
        return self.edges.shape[0]


def partition_to_multigraph(p):
    """Edge ``i`` joins the clusters of items ``2i-1`` and ``2i``."""
    labels = p.labels if isinstance(p, Partition) else np.asarray(p)
    if labels.size < 2:
        raise DomainError("at least two items are needed to form an edge")
    dropped = labels.size % 2 == 1
    used = labels[: labels.size - 1] if dropped else labels
    edges = used.reshape(-1, 2).copy()
    return Multigraph(edges=edges, n_vertices=int(used.max()), dropped_item=dropped)


def degree_stats(g):
    """Vertex degrees (a self-loop counts twice) and the count of vertices per degree.

    Returns
    -------
    degrees : ndarray, ``degrees[v-1]`` is the degree of vertex ``v``
    histogram : dict degree -> number of vertices
    """
    degrees = np.bincount(g.edges.ravel(), minlength=g.n_vertices + 1)[1:]
    r, counts = np.unique(degrees, return_counts=True)
    return degrees, {int(a): int(b) for a, b in zip(r, counts)}


def write_edge_list(g, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def graph_summary(g):
    degrees, hist = degree_stats(g)
    return {
        "n_vertices": g.n_vertices,
        "n_edges": g.n_edges,
        "dropped_last_item": g.dropped_item,
        "degree_histogram": {str(k): v for k, v in sorted(hist.items())},
    }
