"""Exact passage times, canonical geodesics and optimal-vertex sets on boxes of Z^2.

Atomic distributions are solved in exact integer arithmetic with Dial's
bucket queue (bucket width one integer unit); the exponential law uses a
binary heap over float64.  Every query is restricted to an axis-aligned
:class:`Region`.  Passing ``region=None`` asks the engine to pick a box around
the endpoints and grow it until the answer provably (or, for laws with no
positive lower bound, empirically) no longer depends on the box.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import networkx as nx
import numpy as np
from networkx.algorithms.connectivity import local_node_connectivity
from numba import njit

from .weights import WeightField

INF_INT = np.int64(1) << np.int64(62)
REL_TOL = 1e-9  # two-map equality tolerance for float weights

# incoming-direction preference for the canonical predecessor: E, N, W, S
_PRED_DI = np.array([-1, 0, 1, 0], dtype=np.int64)
_PRED_DJ = np.array([0, -1, 0, 1], dtype=np.int64)


class RegionTooSmall(RuntimeError):
    """The answer touches the box boundary; the caller must enlarge the region."""


class OutsideRegion(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    xmin: int
    xmax: int
    ymin: int
    ymax: int

    def __post_init__(self):
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValueError(f"empty region {self}")

    @property
    def width(self):
        return self.xmax - self.xmin + 1

    @property
    def height(self):
        return self.ymax - self.ymin + 1

    def contains(self, v):
        return self.xmin <= v[0] <= self.xmax and self.ymin <= v[1] <= self.ymax

    def local(self, v):
        """Array indices ``(i, j)`` of vertex ``v``."""
        return v[0] - self.xmin, v[1] - self.ymin

    def on_boundary(self, v):
        return v[0] in (self.xmin, self.xmax) or v[1] in (self.ymin, self.ymax)

    @classmethod
    def around(cls, a, b, pad):
        return cls(
            min(a[0], b[0]) - pad, max(a[0], b[0]) + pad, min(a[1], b[1]) - pad, max(a[1], b[1]) + pad
        )


def clip_region(n: int, margin_factor: float = 3.0) -> Region:
    """The box ``[-m n, m n]^2`` that confines geodesics of length ~n with high probability."""
    if n < 1 or margin_factor < 1:
        raise ValueError("need n >= 1 and margin_factor >= 1")
    half = int(math.ceil(margin_factor * n))
    return Region(-half, half, -half, half)


def continuum_lift(x) -> tuple[int, int]:
    """Nearest lattice vertex; exact half-way ties go to the smaller coordinate."""
    return int(math.ceil(x[0] - 0.5)), int(math.ceil(x[1] - 0.5))


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def _dial(east, north, si, sj, maxw):
    H, W = east.shape
    V = H * W
    dist = np.full(V, INF_INT, dtype=np.int64)
    done = np.zeros(V, dtype=np.bool_)
    C = maxw + 1
    head = np.full(C, -1, dtype=np.int64)
    cap = 4 * V + 4
    nxt = np.empty(cap, dtype=np.int64)
    ver = np.empty(cap, dtype=np.int64)
    s = sj * W + si
    dist[s] = 0
    ver[0] = s
    nxt[0] = -1
    head[0] = 0
    top = 1
    pending = 1
    cur = np.int64(0)
    while pending > 0:
        b = cur % C
        while head[b] != -1:
            e = head[b]
            head[b] = nxt[e]
            pending -= 1
            v = ver[e]
            if done[v] or dist[v] != cur:
                continue
            done[v] = True
            j = v // W
            i = v - j * W
            for k in range(4):
                if k == 0:
                    if i + 1 >= W:
                        continue
                    u = v + 1
                    w = east[j, i]
                elif k == 1:
                    if j + 1 >= H:
                        continue
                    u = v + W
                    w = north[j, i]
                elif k == 2:
                    if i == 0:
                        continue
                    u = v - 1
                    w = east[j, i - 1]
                else:
                    if j == 0:
                        continue
                    u = v - W
                    w = north[j - 1, i]
                nd = cur + w
                if nd < dist[u]:
                    dist[u] = nd
                    bb = nd % C
                    ver[top] = u
                    nxt[top] = head[bb]
                    head[bb] = top
                    top += 1
                    pending += 1
        cur += 1
    return dist.reshape(H, W)


@njit(cache=True, nogil=True)
def _heap_sssp(east, north, si, sj):
    H, W = east.shape
    V = H * W
    dist = np.full(V, np.inf)
    done = np.zeros(V, dtype=np.bool_)
    cap = 4 * V + 4
    hk = np.empty(cap)
    hv = np.empty(cap, dtype=np.int64)
    s = sj * W + si
    dist[s] = 0.0
    hk[0] = 0.0
    hv[0] = s
    size = 1
    while size > 0:
        d = hk[0]
        v = hv[0]
        size -= 1
        if size > 0:
            # sift the last entry down from the root
            lk = hk[size]
            lv = hv[size]
            pos = 0
            while True:
                c = 2 * pos + 1
                if c >= size:
                    break
                if c + 1 < size and hk[c + 1] < hk[c]:
                    c += 1
                if hk[c] >= lk:
                    break
                hk[pos] = hk[c]
                hv[pos] = hv[c]
                pos = c
            hk[pos] = lk
            hv[pos] = lv
        if done[v] or d != dist[v]:
            continue
        done[v] = True
        j = v // W
        i = v - j * W
        for k in range(4):
            if k == 0:
                if i + 1 >= W:
                    continue
                u = v + 1
                w = east[j, i]
            elif k == 1:
                if j + 1 >= H:
                    continue
                u = v + W
                w = north[j, i]
            elif k == 2:
                if i == 0:
                    continue
                u = v - 1
                w = east[j, i - 1]
            else:
                if j == 0:
                    continue
                u = v - W
                w = north[j - 1, i]
            nd = d + w
            if nd < dist[u]:
                dist[u] = nd
                pos = size
                size += 1
                while pos > 0:
                    par = (pos - 1) // 2
                    if hk[par] <= nd:
                        break
                    hk[pos] = hk[par]
                    hv[pos] = hv[par]
                    pos = par
                hk[pos] = nd
                hv[pos] = u
    return dist.reshape(H, W)


@njit(cache=True, nogil=True)
def _edge_to(east, north, i, j, k):
    """Weight of the edge entering (i, j) from the k-th preferred predecessor, or -1."""
    H, W = east.shape
    pi = i + _PRED_DI[k]
    pj = j + _PRED_DJ[k]
    if pi < 0 or pi >= W or pj < 0 or pj >= H:
        return east[0, 0] * 0 - 1
    if k == 0:
        return east[j, i - 1]
    if k == 1:
        return north[j - 1, i]
    if k == 2:
        return east[j, i]
    return north[j, i]


@njit(cache=True, nogil=True)
def _tight_hops(dist, east, north, si, sj):
    """BFS depth in the subgraph of tight edges; only needed when zero weights exist."""
    H, W = dist.shape
    hop = np.full((H, W), -1, dtype=np.int64)
    qi = np.empty(H * W, dtype=np.int64)
    qj = np.empty(H * W, dtype=np.int64)
    hop[sj, si] = 0
    qi[0] = si
    qj[0] = sj
    head = 0
    tail = 1
    while head < tail:
        i = qi[head]
        j = qj[head]
        head += 1
        for k in range(4):
            # (ni, nj) is the vertex entered from (i, j) through direction k
            ni = i - _PRED_DI[k]
            nj = j - _PRED_DJ[k]
            if ni < 0 or ni >= W or nj < 0 or nj >= H or hop[nj, ni] >= 0:
                continue
            w = _edge_to(east, north, ni, nj, k)
            if dist[j, i] + w == dist[nj, ni]:
                hop[nj, ni] = hop[j, i] + 1
                qi[tail] = ni
                qj[tail] = nj
                tail += 1
    return hop


@njit(cache=True, nogil=True)
def _trace_back(dist, east, north, si, sj, ti, tj, hop, use_hop):
    H, W = dist.shape
    n_max = H * W
    pi = np.empty(n_max, dtype=np.int64)
    pj = np.empty(n_max, dtype=np.int64)
    i = ti
    j = tj
    m = 0
    pi[0] = i
    pj[0] = j
    m = 1
    while i != si or j != sj:
        found = False
        for k in range(4):
            w = _edge_to(east, north, i, j, k)
            if w < 0:
                continue
            ui = i + _PRED_DI[k]
            uj = j + _PRED_DJ[k]
            if use_hop and hop[uj, ui] != hop[j, i] - 1:
                continue
            if dist[uj, ui] + w == dist[j, i]:
                i = ui
                j = uj
                found = True
                break
        if not found:
            return pi[:0], pj[:0]
        pi[m] = i
        pj[m] = j
        m += 1
    return pi[:m][::-1].copy(), pj[:m][::-1].copy()


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class Geodesic:
    vertices: tuple
    total_time: float

    def __len__(self):
        return len(self.vertices)

    def to_csv(self, path, times=None):
        """Write ``x, y, time`` rows; ``times`` defaults to cumulative time along the path."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "time"])
            for k, (x, y) in enumerate(self.vertices):
                t = times[k] if times is not None else ""
                w.writerow([x, y, repr(float(t)) if t != "" else ""])


@dataclass(frozen=True, eq=False)
class PassageTimeMap:
    source: tuple
    region: Region
    field: WeightField
    exact: np.ndarray | None  # int64 in units of 1/scale, atomic laws only
    scale: int
    _float: np.ndarray | None = None

    @cached_property
    def times(self) -> np.ndarray:
        """T(source, .) as float64, indexed ``[y - ymin, x - xmin]``."""
        if self.exact is None:
            return self._float
        return self.exact / float(self.scale)

    @property
    def raw(self):
        """The array the solver compared on: exact ints or float64."""
        return self.exact if self.exact is not None else self._float

    def time(self, v) -> float:
        i, j = self.region.local(v)
        if not self.region.contains(v):
            raise OutsideRegion(f"{v} not in {self.region}")
        return float(self.times[j, i])

    def raw_time(self, v):
        i, j = self.region.local(v)
        return self.raw[j, i]

    def to_csv(self, path):
        r = self.region
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "time"])
            for j in range(r.height):
                for i in range(r.width):
                    w.writerow([r.xmin + i, r.ymin + j, repr(float(self.times[j, i]))])


@dataclass(frozen=True, eq=False)
class OptimalVertexSet:
    source: tuple
    target: tuple
    member_xy: np.ndarray  # (k, 2) int64, sorted lexicographically
    witness: Geodesic
    region: Region

    @cached_property
    def members(self) -> frozenset:
        return frozenset((int(x), int(y)) for x, y in self.member_xy)

    def __len__(self):
        return len(self.member_xy)


# ---------------------------------------------------------------------------
# operations on an explicit region


def _weights(field: WeightField, region: Region):
    spec = field.spec
    if spec.is_atomic:
        scale, ints = spec.integer_atoms()
        east, north = field.block(region.xmin, region.ymin, region.width, region.height, exact=True)
        return east, north, scale, max(ints)
    east, north = field.block(region.xmin, region.ymin, region.width, region.height)
    return east, north, 1, None


def _solve(field, region, source, weights=None):
    if not region.contains(source):
        raise OutsideRegion(f"source {source} not in {region}")
    east, north, scale, maxw = weights if weights is not None else _weights(field, region)
    si, sj = region.local(source)
    if maxw is not None:
        exact = _dial(east, north, si, sj, maxw)
        return PassageTimeMap(tuple(source), region, field, exact, scale), (east, north, scale, maxw)
    dist = _heap_sssp(east, north, si, sj)
    return PassageTimeMap(tuple(source), region, field, None, 1, dist), (east, north, scale, maxw)


def passage_times(field: WeightField, region: Region, source) -> PassageTimeMap:
    """Exact single-source passage times over paths that stay inside ``region``."""
    return _solve(field, region, tuple(source))[0]


def _extract(fw: PassageTimeMap, weights, target) -> Geodesic:
    region = fw.region
    east, north, scale, _ = weights
    dist = fw.raw
    si, sj = region.local(fw.source)
    ti, tj = region.local(target)
    zero = bool((east == 0).any() or (north == 0).any())
    hop = _tight_hops(dist, east, north, si, sj) if zero else np.zeros((1, 1), dtype=np.int64)
    pi, pj = _trace_back(dist, east, north, si, sj, ti, tj, hop, zero)
    if len(pi) == 0:  # pragma: no cover - impossible for a finished Dijkstra
        raise RuntimeError("predecessor chain broken")
    verts = tuple((int(i) + region.xmin, int(j) + region.ymin) for i, j in zip(pi, pj))
    total = fw.exact[tj, ti] / float(scale) if fw.exact is not None else float(dist[tj, ti])
    return Geodesic(verts, float(total))


def _check_inside(region, target):
    if not region.contains(target):
        raise OutsideRegion(f"target {target} not in {region}")


def _touches(region, xy):
    if len(xy) == 0:
        return False
    xy = np.asarray(xy)
    return bool(
        (xy[:, 0] == region.xmin).any()
        or (xy[:, 0] == region.xmax).any()
        or (xy[:, 1] == region.ymin).any()
        or (xy[:, 1] == region.ymax).any()
    )


def geodesic(field: WeightField, region: Region | None, source, target, check_boundary=False) -> Geodesic:
    """Canonical optimal path from ``source`` to ``target``.

    Ties are broken walking back from the target, preferring the predecessor
    entered by an EAST step, then NORTH, WEST, SOUTH.
    """
    source, target = tuple(source), tuple(target)
    if region is None:
        return _auto(field, source, target, members=False)[0].witness
    _check_inside(region, target)
    fw, wts = _solve(field, region, source)
    g = _extract(fw, wts, target)
    if check_boundary and _touches(region, g.vertices):
        raise RegionTooSmall(f"geodesic touches the boundary of {region}")
    return g


def _saw_filter(mask, a, b, east, north, s_ij, t_ij):
    """Drop zero-cost spurs: vertices on an optimal walk but on no optimal self-avoiding path.

    Along tight edges the forward time is nondecreasing, so two halves of a
    walk through v can only collide inside v's zero-weight cluster at level
    ``a[v]``.  Within that cluster v must reach an entry vertex (source, or
    entered by a tight positive edge) and an exit vertex (target, or left by
    one) along vertex-disjoint routes: a local 2-connectivity test.
    """
    H, W = mask.shape
    g = nx.Graph()
    for arr, di, dj in ((east, 1, 0), (north, 0, 1)):
        jj, ii = np.nonzero((arr[: H - dj, : W - di] == 0) & mask[: H - dj, : W - di] & mask[dj:, di:])
        g.add_edges_from(((i, j), (i + di, j + dj)) for i, j in zip(ii.tolist(), jj.tolist()))
    total = a[t_ij[1], t_ij[0]]
    out = mask.copy()
    for comp in nx.connected_components(g):
        sub = g.subgraph(comp).copy()
        for (i, j) in comp:
            entry = (i, j) == s_ij
            exit_ = (i, j) == t_ij
            for k in range(4):
                ui, uj = i + int(_PRED_DI[k]), j + int(_PRED_DJ[k])
                if not (0 <= ui < W and 0 <= uj < H):
                    continue
                w = _edge_to(east, north, i, j, k)
                if w == 0:
                    continue
                entry |= bool(a[uj, ui] + w == a[j, i])
                exit_ |= bool(a[j, i] + w + b[uj, ui] == total)
            if entry:
                sub.add_edge((i, j), "entry")
            if exit_:
                sub.add_edge((i, j), "exit")
        sub.add_edge("entry", "hub")
        sub.add_edge("exit", "hub")
        for (i, j) in comp:
            if local_node_connectivity(sub, (i, j), "hub") < 2:
                out[j, i] = False
    return out


def _members(fw, bw, target, weights=None):
    a, b = fw.raw, bw.raw
    i, j = fw.region.local(target)
    total = a[j, i]
    if fw.exact is not None:
        mask = (a + b) == total
    else:
        mask = np.abs((a + b) - total) <= REL_TOL * total
    if weights is not None:
        east, north = weights[0], weights[1]
        if (east == 0).any() or (north == 0).any():
            mask = _saw_filter(mask, a, b, east, north, fw.region.local(fw.source), (i, j))
    jj, ii = np.nonzero(mask)
    xy = np.column_stack([ii + fw.region.xmin, jj + fw.region.ymin]).astype(np.int64)
    order = np.lexsort((xy[:, 1], xy[:, 0]))
    return xy[order]


def optimal_vertex_set(
    field: WeightField, region: Region | None, source, target, check_boundary=False
) -> OptimalVertexSet:
    """All vertices on some optimal path, via T(s,v) + T(v,t) == T(s,t)."""
    source, target = tuple(source), tuple(target)
    if region is None:
        return _auto(field, source, target, members=True)[0]
    _check_inside(region, target)
    fw, wts = _solve(field, region, source)
    bw, _ = _solve(field, region, target, wts)
    mset = OptimalVertexSet(source, target, _members(fw, bw, target, wts), _extract(fw, wts, target), region)
    if check_boundary and _touches(region, mset.member_xy):
        raise RegionTooSmall(f"optimal set touches the boundary of {region}")
    return mset


def point_to_line_time(field: WeightField, region: Region, source, line_x: int) -> float:
    """Minimum of T(source, v) over ``v`` on the vertical line ``x = line_x`` inside ``region``."""
    source = tuple(source)
    if line_x < source[0]:
        raise ValueError("line must lie at or to the right of the source")
    if not region.xmin <= line_x <= region.xmax:
        raise RegionTooSmall(f"line x={line_x} is outside {region}")
    fw = passage_times(field, region, source)
    return float(fw.times[:, line_x - region.xmin].min())


# ---------------------------------------------------------------------------
# adaptive regions


def _initial_pad(field, l1):
    if field.spec.support_min() > 0:
        return max(2, int(math.ceil(0.02 * l1)))
    return 8 + int(math.ceil(0.25 * l1))


def _certified_pad(field, fw, source, target, pad):
    """Smallest pad proving no path leaving the box can tie or beat T(source, target).

    A vertex at L1 distance g from the bounding box of the endpoints costs at
    least ``w_min * (L1 + 2 g)``; requiring this to exceed T strictly also
    keeps every optimal path, hence every member of M, inside the box.
    Returns ``None`` if the law has no positive lower bound.
    """
    spec = field.spec
    wmin = spec.support_min()
    if wmin <= 0:
        return None
    l1 = abs(source[0] - target[0]) + abs(source[1] - target[1])
    if fw.exact is not None:
        scale, _ = spec.integer_atoms()
        wmin_i = int(round(wmin * scale))
        total = int(fw.raw_time(target))
        if wmin_i * (l1 + 2 * (pad + 1)) > total:
            return pad
        # smallest g with wmin_i * (l1 + 2 (g + 1)) > total
        return max(pad + 1, math.floor((Fraction(total, wmin_i) - l1 - 2) / 2) + 1)
    total = float(fw.raw_time(target))
    if wmin * (l1 + 2 * (pad + 1)) > total * (1 + 1e-12):
        return pad
    return max(pad + 1, int(math.floor((total / wmin - l1 - 2) / 2)) + 1)


def _auto(field, source, target, members=True, pad=None, max_rounds=12):
    """Solve on a box around the endpoints, enlarging it until the result is box-independent.

    Returns ``(OptimalVertexSet or Geodesic-bearing stub, forward map)``.
    """
    l1 = abs(source[0] - target[0]) + abs(source[1] - target[1])
    pad = _initial_pad(field, l1) if pad is None else pad
    for _ in range(max_rounds):
        region = Region.around(source, target, pad)
        fw, wts = _solve(field, region, source)
        need = _certified_pad(field, fw, source, target, pad)
        if need is not None and need > pad:
            pad = need
            continue
        witness = _extract(fw, wts, target)
        if members or need is None:
            bw, _ = _solve(field, region, target, wts)
            xy = _members(fw, bw, target, wts)
            if need is None and _touches(region, xy):
                pad *= 2
                continue
        else:
            xy = np.empty((0, 2), dtype=np.int64)
        return OptimalVertexSet(source, target, xy, witness, region), fw
    raise RegionTooSmall(f"no box-independent answer after {max_rounds} enlargements (pad={pad})")


def passage_time(field: WeightField, source, target) -> float:
    """T(source, target) on a region certified (or checked) not to cut any geodesic."""
    return _auto(field, tuple(source), tuple(target), members=False)[0].witness.total_time
