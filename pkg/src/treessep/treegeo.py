"""Geometry of the regular tree where every vertex has d+1 neighbours.

Vertices are path words rooted at an origin.  The first label of a word is in
``0..d`` and every later label is in ``0..d-1``; dropping the last label gives
the parent.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_VERTICES = 4_000_000


class EncodingError(ValueError):
    """A vertex word has a label outside the range allowed at its position."""


class ResourceError(RuntimeError):
    """A requested object would exceed a configured size cap."""


@dataclass(frozen=True, order=True)
class VertexId:
    word: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "word", tuple(int(a) for a in self.word))

    @property
    def depth(self) -> int:
        return len(self.word)

    @property
    def is_origin(self) -> bool:
        return not self.word

    def parent(self) -> VertexId:
        if not self.word:
            raise EncodingError("the origin has no parent")
        return VertexId(self.word[:-1])

    def child(self, label: int) -> VertexId:
        return VertexId(self.word + (label,))

    def validate(self, d: int) -> VertexId:
        for pos, a in enumerate(self.word):
            hi = d if pos == 0 else d - 1
            if not 0 <= a <= hi:
                raise EncodingError(
                    f"label {a} at position {pos} of {self.word} is outside 0..{hi} (d={d})"
                )
        return self

    def __repr__(self):
        return f"VertexId({list(self.word)})"


ORIGIN = VertexId(())


def as_vertex(v, d: int | None = None) -> VertexId:
    """Coerce a word (sequence of ints) or a VertexId, validating if d is given."""
    if not isinstance(v, VertexId):
        v = VertexId(tuple(v))
    if d is not None:
        v.validate(d)
    return v


def n_children(v: VertexId, d: int) -> int:
    return d + 1 if v.is_origin else d


def children(v: VertexId, d: int) -> list[VertexId]:
    return [v.child(a) for a in range(n_children(v, d))]


def neighbors(v, d: int) -> list[VertexId]:
    """Parent (unless v is the origin) followed by the children of v."""
    v = as_vertex(v, d)
    out = [] if v.is_origin else [v.parent()]
    out.extend(children(v, d))
    return out


def distance(u, v) -> int:
    u = as_vertex(u)
    v = as_vertex(v)
    common = 0
    for a, b in zip(u.word, v.word):
        if a != b:
            break
        common += 1
    return u.depth + v.depth - 2 * common


def sphere_size(d: int, k: int) -> int:
    """Number of vertices at distance exactly k from a fixed vertex."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return 1 if k == 0 else (d + 1) * d ** (k - 1)


def ball_size(d: int, R: int) -> int:
    return 1 + sum(sphere_size(d, k) for k in range(1, R + 1))


@dataclass(frozen=True)
class Ball:
    """The vertices within distance R of the origin, indexed in BFS order.

    ``edges[i] = (parent_index, child_index)``; every edge joins consecutive
    depths so ``edges[:, 0] < edges[:, 1]``.
    """

    d: int
    R: int
    vertices: tuple[VertexId, ...]
    edges: np.ndarray
    index_of: dict = field(repr=False)
    depth: np.ndarray = field(repr=False)
    parent: np.ndarray = field(repr=False)
    inc_ptr: np.ndarray = field(repr=False)
    inc_edges: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self) -> np.ndarray:
        return np.diff(self.inc_ptr)

    def incident(self, i: int) -> np.ndarray:
        return self.inc_edges[self.inc_ptr[i]: self.inc_ptr[i + 1]]

    def index(self, v) -> int:
        v = as_vertex(v, self.d)
        try:
            return self.index_of[v]
        except KeyError:
            raise KeyError(f"{v} is not in the radius-{self.R} ball") from None

    def neighbor_indices(self, i: int) -> np.ndarray:
        e = self.incident(i)
        a, b = self.edges[e, 0], self.edges[e, 1]
        return np.where(a == i, b, a)

    def distances_from(self, v) -> np.ndarray:
        """Tree distance from v to every ball vertex (BFS inside the ball).

        The ball is geodesically convex, so BFS distance equals tree distance.
        """
        src = self.index(v)
        dist = np.full(self.n_vertices, -1, dtype=np.int64)
        dist[src] = 0
        queue = deque([src])
        while queue:
            i = queue.popleft()
            for j in self.neighbor_indices(i):
                if dist[j] < 0:
                    dist[j] = dist[i] + 1
                    queue.append(j)
        return dist

    def adjacency_matrix(self):
        from scipy.sparse import coo_matrix

        n = self.n_vertices
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        return coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()


def build_ball(d: int, R: int, max_vertices: int = DEFAULT_MAX_VERTICES) -> Ball:
    if d < 2:
        raise ValueError(f"degree parameter d must be >= 2, got {d}")
    if R < 0:
        raise ValueError(f"radius must be >= 0, got {R}")
    n = ball_size(d, R)
    if n > max_vertices:
        raise ResourceError(f"ball d={d}, R={R} has {n} vertices, cap is {max_vertices}")

    vertices = [ORIGIN]
    depth = np.zeros(n, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    edges = np.empty((n - 1, 2), dtype=np.int64)
    frontier_start, frontier_end = 0, 1
    for k in range(1, R + 1):
        for i in range(frontier_start, frontier_end):
            v = vertices[i]
            for a in range(n_children(v, d)):
                j = len(vertices)
                vertices.append(v.child(a))
                depth[j] = k
                parent[j] = i
                edges[j - 1] = (i, j)
        frontier_start, frontier_end = frontier_end, len(vertices)

    index_of = {v: i for i, v in enumerate(vertices)}
    # CSR incidence lists
    ends = edges.ravel()
    order = np.argsort(ends, kind="stable")
    inc_edges = (order // 2).astype(np.int64)
    counts = np.bincount(ends, minlength=n)
    inc_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=inc_ptr[1:])
    return Ball(
        d=d,
        R=R,
        vertices=tuple(vertices),
        edges=edges,
        index_of=index_of,
        depth=depth,
        parent=parent,
        inc_ptr=inc_ptr,
        inc_edges=inc_edges,
    )


def star(d: int) -> Ball:
    """Origin plus its d+1 neighbours (the radius-1 ball)."""
    return build_ball(d, 1)
