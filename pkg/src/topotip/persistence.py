"""Vietoris-Rips filtrations and Z/2 persistent homology with representative 1-cycles.

The reduction follows the standard boundary-matrix column algorithm in
filtration order. Dimension-0 pairs come from a union-find sweep over the
edges (equivalent to reducing the dimension-1 block), and dimension-1 pairs
from reducing the triangle columns against edge rows; both yield exactly the
pairs of the full unoptimized reduction under the same total order
(value, dimension, lexicographic vertex tuple). The representative of a
finite dimension-1 pair is the vertex support of the reduced column of its
death triangle at the moment of pairing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class PersistencePair:
    """A birth-death pair; death is math.inf for essential classes.

    ``representative`` is the vertex support of the pairing column: nonempty
    exactly for finite dimension-1 pairs.
    """

    dim: int
    birth: float
    death: float
    representative: frozenset = frozenset()

    @property
    def persistence(self) -> float:
        return self.death - self.birth

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.death)


@dataclass(frozen=True)
class PersistenceDiagram:
    pairs: tuple

    def in_dim(self, dim: int) -> list:
        return [p for p in self.pairs if p.dim == dim]

    def finite_in_dim(self, dim: int) -> list:
        return [p for p in self.pairs if p.dim == dim and p.is_finite]


@dataclass(frozen=True)
class Filtration:
    """A Vietoris-Rips filtration up to dimension 2.

    Edges and triangles are stored as vertex index arrays in filtration order
    (value ascending, dimension ascending, lexicographic tie-break); vertices
    implicitly enter at value 0.
    """

    n_vertices: int
    edges: np.ndarray
    edge_values: np.ndarray
    triangles: np.ndarray
    triangle_values: np.ndarray

    @property
    def simplices(self) -> list:
        """All simplices as (vertex tuple, value), in global filtration order."""
        out = [((v,), 0.0) for v in range(self.n_vertices)]
        out += [
            (tuple(int(x) for x in e), float(v))
            for e, v in zip(self.edges, self.edge_values)
        ]
        out += [
            (tuple(int(x) for x in t), float(v))
            for t, v in zip(self.triangles, self.triangle_values)
        ]
        out.sort(key=lambda s: (s[1], len(s[0]), s[0]))
        return out


@njit(cache=True)
def _count_triangles(dist, threshold):
    n = dist.shape[0]
    c = 0
    for i in range(n):
        for j in range(i + 1, n):
            dij = dist[i, j]
            if dij > threshold:
                continue
            for k in range(j + 1, n):
                v = dij
                if dist[i, k] > v:
                    v = dist[i, k]
                if dist[j, k] > v:
                    v = dist[j, k]
                if v <= threshold:
                    c += 1
    return c


@njit(cache=True)
def _fill_triangles(dist, threshold, ti, tj, tk, tv):
    n = dist.shape[0]
    c = 0
    for i in range(n):
        for j in range(i + 1, n):
            dij = dist[i, j]
            if dij > threshold:
                continue
            for k in range(j + 1, n):
                v = dij
                if dist[i, k] > v:
                    v = dist[i, k]
                if dist[j, k] > v:
                    v = dist[j, k]
                if v <= threshold:
                    ti[c] = i
                    tj[c] = j
                    tk[c] = k
                    tv[c] = v
                    c += 1


@njit(cache=True)
def _h0_sweep(edges, n_vertices):
    """Union-find over edges in filtration order.

    Returns (positive, merge_edges): positive[e] is True when edge e creates
    a cycle (births an H1 class); merge_edges lists the H0-killing edges.
    """
    parent = np.arange(n_vertices)
    n_edges = edges.shape[0]
    positive = np.zeros(n_edges, np.bool_)
    merge_edges = np.empty(n_vertices, np.int64)
    n_merge = 0
    for e in range(n_edges):
        a = edges[e, 0]
        b = edges[e, 1]
        ra = a
        while parent[ra] != ra:
            ra = parent[ra]
        rb = b
        while parent[rb] != rb:
            rb = parent[rb]
        while parent[a] != ra:
            nxt = parent[a]
            parent[a] = ra
            a = nxt
        while parent[b] != rb:
            nxt = parent[b]
            parent[b] = rb
            b = nxt
        if ra == rb:
            positive[e] = True
        else:
            parent[ra] = rb
            merge_edges[n_merge] = e
            n_merge += 1
    return positive, merge_edges[:n_merge]


@njit(cache=True)
def _highest_bit(word):
    b = -1
    while word != 0:
        word >>= np.uint64(1)
        b += 1
    return b


@njit(cache=True)
def _reduce_triangles(tri_bd, n_edges):
    """Left-to-right Z/2 column reduction of triangle boundaries over edge rows.

    tri_bd rows hold the three boundary edge indices sorted ascending, rows in
    filtration order. Reduced pivot columns are stored sparsely in a flat
    pool; a single dense bitset carries the column being reduced, so an XOR
    against a stored column costs only that column's length. Returns, per
    stored (pairing) column: the pivot edge, the killing triangle, and the
    pool slice of the reduced column.
    """
    n_tri = tri_bd.shape[0]
    pivot_owner = np.full(n_edges, -1, np.int64)
    col_start = np.empty(n_tri, np.int64)
    col_len = np.empty(n_tri, np.int64)
    pair_edge = np.empty(n_tri, np.int64)
    pair_tri = np.empty(n_tri, np.int64)
    n_stored = 0
    pool = np.empty(16384, np.int64)
    pool_used = 0
    n_words = (n_edges + 63) >> 6
    work = np.zeros(n_words, np.uint64)
    one = np.uint64(1)
    for t in range(n_tri):
        e2 = tri_bd[t, 2]
        low = e2
        if pivot_owner[low] < 0:
            # apparent case: the raw boundary is already reduced
            if pool_used + 3 > pool.shape[0]:
                newcap = pool.shape[0]
                while newcap < pool_used + 3:
                    newcap *= 2
                npool = np.empty(newcap, np.int64)
                npool[:pool_used] = pool[:pool_used]
                pool = npool
            col_start[n_stored] = pool_used
            col_len[n_stored] = 3
            pool[pool_used] = tri_bd[t, 0]
            pool[pool_used + 1] = tri_bd[t, 1]
            pool[pool_used + 2] = e2
            pool_used += 3
            pair_edge[n_stored] = low
            pair_tri[n_stored] = t
            pivot_owner[low] = n_stored
            n_stored += 1
            continue
        for q in range(3):
            e = tri_bd[t, q]
            work[e >> 6] ^= one << np.uint64(e & 63)
        while low >= 0:
            owner = pivot_owner[low]
            if owner < 0:
                break
            s = col_start[owner]
            for q in range(col_len[owner]):
                e = pool[s + q]
                work[e >> 6] ^= one << np.uint64(e & 63)
            # entries of the owner column are <= low, so the new low is below
            w = low >> 6
            low = -1
            while w >= 0:
                if work[w] != np.uint64(0):
                    low = (w << 6) + _highest_bit(work[w])
                    break
                w -= 1
        if low >= 0:
            # extract and clear the work bitset, storing the sparse column
            m = 0
            top_word = low >> 6
            for w in range(top_word + 1):
                if work[w] != np.uint64(0):
                    m += _popcount(work[w])
            if pool_used + m > pool.shape[0]:
                newcap = pool.shape[0]
                while newcap < pool_used + m:
                    newcap *= 2
                npool = np.empty(newcap, np.int64)
                npool[:pool_used] = pool[:pool_used]
                pool = npool
            k = pool_used
            for w in range(top_word + 1):
                word = work[w]
                if word == np.uint64(0):
                    continue
                base = w << 6
                bit = 0
                while word != np.uint64(0):
                    if word & one:
                        pool[k] = base + bit
                        k += 1
                    word >>= one
                    bit += 1
                work[w] = np.uint64(0)
            col_start[n_stored] = pool_used
            col_len[n_stored] = m
            pool_used += m
            pair_edge[n_stored] = low
            pair_tri[n_stored] = t
            pivot_owner[low] = n_stored
            n_stored += 1
    return (
        pair_edge[:n_stored],
        pair_tri[:n_stored],
        col_start[:n_stored],
        col_len[:n_stored],
        pool[:pool_used],
    )


@njit(cache=True)
def _popcount(word):
    c = 0
    while word != np.uint64(0):
        word &= word - np.uint64(1)
        c += 1
    return c


def build_vr_filtration(
    D: np.ndarray, max_dim: int = 2, threshold: float = math.inf
) -> Filtration:
    """Build the Vietoris-Rips filtration of a squared-distance matrix.

    Edges enter at Euclidean distance sqrt(D[i, j]); a triangle enters at the
    maximum of its three edge values. A non-finite threshold means the maximum
    pairwise distance (the full complex).
    """
    if max_dim not in (1, 2):
        raise ValueError("max_dim must be 1 or 2")
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    dist = np.sqrt(np.maximum(D, 0.0))
    if not math.isfinite(threshold):
        threshold = float(dist.max()) if n > 1 else 0.0
    elif threshold <= 0:
        raise ValueError("threshold must be positive or +inf")

    iu, ju = np.triu_indices(n, 1)
    ev = dist[iu, ju]
    keep = ev <= threshold
    iu, ju, ev = iu[keep], ju[keep], ev[keep]
    order = np.lexsort((ju, iu, ev))
    edges = np.stack([iu[order], ju[order]], axis=1).astype(np.int64)
    edge_values = ev[order]

    if max_dim >= 2 and n >= 3:
        n_tri = _count_triangles(dist, threshold)
        ti = np.empty(n_tri, np.int64)
        tj = np.empty(n_tri, np.int64)
        tk = np.empty(n_tri, np.int64)
        tv = np.empty(n_tri, np.float64)
        _fill_triangles(dist, threshold, ti, tj, tk, tv)
        torder = np.lexsort((tk, tj, ti, tv))
        triangles = np.stack([ti[torder], tj[torder], tk[torder]], axis=1)
        triangle_values = tv[torder]
    else:
        triangles = np.empty((0, 3), np.int64)
        triangle_values = np.empty(0, np.float64)

    return Filtration(n, edges, edge_values, triangles, triangle_values)


def compute_persistence(f: Filtration) -> PersistenceDiagram:
    """Z/2 persistence of a VR filtration: H0 and H1 pairs with representatives.

    Zero-persistence pairs (death equal to birth) are discarded. Finite H1
    pairs carry the vertex support of their reduced death column.
    """
    pairs = []
    positive, merge_edges = _h0_sweep(f.edges, f.n_vertices)

    for e in merge_edges:
        death = float(f.edge_values[e])
        if death > 0.0:
            pairs.append(PersistencePair(0, 0.0, death))
    n_components = f.n_vertices - len(merge_edges)
    for _ in range(n_components):
        pairs.append(PersistencePair(0, 0.0, math.inf))

    n_edges = f.edges.shape[0]
    paired_edges = set()
    if f.triangles.shape[0] > 0 and n_edges > 0:
        edge_id = np.full((f.n_vertices, f.n_vertices), -1, np.int64)
        edge_id[f.edges[:, 0], f.edges[:, 1]] = np.arange(n_edges)
        tri_bd = np.stack(
            [
                edge_id[f.triangles[:, 0], f.triangles[:, 1]],
                edge_id[f.triangles[:, 0], f.triangles[:, 2]],
                edge_id[f.triangles[:, 1], f.triangles[:, 2]],
            ],
            axis=1,
        )
        tri_bd = np.sort(tri_bd, axis=1)
        pair_edge, pair_tri, col_start, col_len, pool = _reduce_triangles(
            tri_bd, n_edges
        )
        for idx in range(pair_edge.shape[0]):
            e = int(pair_edge[idx])
            paired_edges.add(e)
            birth = float(f.edge_values[e])
            death = float(f.triangle_values[pair_tri[idx]])
            if death > birth:
                col = pool[col_start[idx] : col_start[idx] + col_len[idx]]
                verts = frozenset(int(v) for v in f.edges[col].ravel())
                pairs.append(PersistencePair(1, birth, death, verts))

    for e in np.nonzero(positive)[0]:
        if int(e) not in paired_edges:
            pairs.append(PersistencePair(1, float(f.edge_values[e]), math.inf))

    pairs.sort(key=lambda p: (p.dim, p.birth, p.death, sorted(p.representative)))
    return PersistenceDiagram(tuple(pairs))


def top_k_pairs(diag: PersistenceDiagram, dim: int, k: int) -> PersistenceDiagram:
    """The k finite pairs of a dimension with largest persistence.

    Ties break toward earlier birth, then the lowest vertex index of the
    representative.
    """
    if k < 0:
        raise ValueError("k must be >= 0")

    def tie_key(p):
        rep_min = min(p.representative) if p.representative else np.inf
        return (-p.persistence, p.birth, rep_min)

    finite = sorted(diag.finite_in_dim(dim), key=tie_key)
    return PersistenceDiagram(tuple(finite[:k]))


def entropy_of_lengths(lengths: np.ndarray) -> float:
    """Shannon entropy (natural log) of normalized bar lengths; 0 if empty."""
    lengths = np.asarray(lengths, dtype=np.float64)
    if lengths.size == 0:
        return 0.0
    total = lengths.sum()
    if total <= 0:
        return 0.0
    p = lengths / total
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def persistence_entropy(diag: PersistenceDiagram, dim: int) -> float:
    """Persistence entropy of the finite bars of one dimension.

    Infinite bars have no length and are excluded; with no finite bars the
    result is the degenerate value 0.
    """
    lengths = np.array([p.persistence for p in diag.finite_in_dim(dim)])
    return entropy_of_lengths(lengths)


def save_diagram(diag: PersistenceDiagram, path) -> None:
    """Dump a diagram as CSV: dim,birth,death,representative."""
    with open(path, "w") as fh:
        fh.write("dim,birth,death,representative\n")
        for p in diag.pairs:
            rep = ";".join(str(v) for v in sorted(p.representative))
            death = "inf" if not p.is_finite else "%.17g" % p.death
            fh.write("%d,%.17g,%s,%s\n" % (p.dim, p.birth, death, rep))
