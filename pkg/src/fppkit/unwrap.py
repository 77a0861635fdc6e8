"""Spatial phase unwrapping over a validity mask.

Three unwrappers share one contract: per 4-connected mask region they
assign an integer fringe order k to every point with k = 0 at the region's
seed, and the continuous phase is phi + 2*pi*k. Keeping k in integer
arithmetic (instead of accumulating float phase sums) makes the order
recoverable exactly and the result independent of visit order up to the
documented tie-breaking.

* flood-fill: breadth-first from the region's column-major midpoint seed,
  neighbors visited in the fixed order up, left, right, down.
* modulation-sort: quality-guided frontier; the highest-quality candidate
  is unwrapped against its highest-quality already-unwrapped neighbor.
* second-difference sort: edge reliability from the wrapped second
  differences, edges merged in descending reliability with union-find,
  shifting the smaller group.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from fppkit.formats import FloatMap
from fppkit.masking import RegionDecomposition, connected_components_4
from fppkit.phase import TWO_PI, wrap

FSPU_EPS = 1e-12


@dataclass(frozen=True)
class UnwrapResult:
    """Continuous phase, per-point integer fringe order, regions, and seeds.

    ``phase.data[p] == wrapped[p] + 2*pi*k[p]`` at every masked point;
    invalid points carry phase 0 and k 0. ``seeds[r]`` is the (row, col)
    anchor of region r+1, where k is 0.
    """

    phase: FloatMap
    k: np.ndarray
    regions: RegionDecomposition
    seeds: tuple

    def __post_init__(self):
        object.__setattr__(self, "k", np.asarray(self.k, dtype=np.int64))


def select_seed(region_mask: np.ndarray):
    """Midpoint of the region's points flattened in column-major order."""
    region_mask = np.asarray(region_mask, dtype=bool)
    cols, rows = np.nonzero(region_mask.T)
    if rows.size == 0:
        raise ValueError("cannot select a seed from an empty region")
    mid = rows.size // 2
    return int(rows[mid]), int(cols[mid])


def _order_jump(x):
    """Integer m with wrap(x) == x + 2*pi*m (up to rounding)."""
    return np.round((wrap(x) - np.asarray(x)) / TWO_PI).astype(np.int64)


def _result(phi: np.ndarray, mask: np.ndarray, k: np.ndarray,
            regions: RegionDecomposition, seeds) -> UnwrapResult:
    k = np.where(mask, k, 0)
    unwrapped = np.where(mask, phi + TWO_PI * k, 0.0)
    return UnwrapResult(
        phase=FloatMap(unwrapped, validity=mask.copy()),
        k=k,
        regions=regions,
        seeds=tuple(seeds),
    )


def flood_fill_unwrap(phi, mask) -> UnwrapResult:
    """Breadth-first unwrap of each 4-connected mask region."""
    phi = phi.data if isinstance(phi, FloatMap) else np.asarray(phi, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if phi.shape != mask.shape:
        raise ValueError(f"phase {phi.shape} != mask {mask.shape}")
    h, w = phi.shape
    n = h * w
    regions = connected_components_4(mask)
    phif = phi.ravel()
    maskf = mask.ravel()
    k = np.zeros(n, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    seeds = []

    for r in range(1, regions.n_regions + 1):
        seed = select_seed(regions.region_id == r)
        seeds.append(seed)
        seed_idx = seed[0] * w + seed[1]
        visited[seed_idx] = True
        frontier = np.array([seed_idx], dtype=np.int64)
        while frontier.size:
            srcs, dsts, keys = [], [], []
            pos = np.arange(frontier.size, dtype=np.int64)
            # fixed neighbor order: up, left, right, down
            for d, (off, valid_move) in enumerate((
                (-w, frontier >= w),
                (-1, frontier % w != 0),
                (1, frontier % w != w - 1),
                (w, frontier < n - w),
            )):
                src = frontier[valid_move]
                dst = src + off
                ppos = pos[valid_move]
                sel = maskf[dst] & ~visited[dst]
                srcs.append(src[sel])
                dsts.append(dst[sel])
                keys.append(ppos[sel] * 4 + d)
            src = np.concatenate(srcs)
            dst = np.concatenate(dsts)
            key = np.concatenate(keys)
            if dst.size == 0:
                break
            # FIFO semantics: earliest (parent, direction) claims a point
            order = np.argsort(key, kind="stable")
            dst, src = dst[order], src[order]
            _, first = np.unique(dst, return_index=True)
            first.sort()
            dst, src = dst[first], src[first]
            k[dst] = k[src] + _order_jump(phif[dst] - phif[src])
            visited[dst] = True
            frontier = dst

    return _result(phi, mask, k.reshape(h, w), regions, seeds)


def _neighbor_table(h: int, w: int) -> list:
    """Flat-index 4-neighbor lists (up, left, right, down), -1 when absent."""
    n = h * w
    idx = np.arange(n)
    table = np.full((n, 4), -1, dtype=np.int64)
    table[idx >= w, 0] = idx[idx >= w] - w
    table[idx % w != 0, 1] = idx[idx % w != 0] - 1
    table[idx % w != w - 1, 2] = idx[idx % w != w - 1] + 1
    table[idx < n - w, 3] = idx[idx < n - w] + w
    return table.tolist()


def _scalar_jump(x: float) -> int:
    """Integer m with wrap(x) == x + 2*pi*m, scalar fast path."""
    r = round(x / TWO_PI)
    if x - TWO_PI * r <= -np.pi:
        r -= 1
    return -r


def modu_sort_unwrap(phi, quality, mask) -> UnwrapResult:
    """Quality-guided unwrap, highest-quality frontier point first."""
    phi = phi.data if isinstance(phi, FloatMap) else np.asarray(phi, dtype=np.float64)
    quality = quality.data if isinstance(quality, FloatMap) else np.asarray(quality, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not (phi.shape == quality.shape == mask.shape):
        raise ValueError("phase, quality, and mask dimensions differ")
    if not np.all(np.isfinite(quality[mask])):
        raise ValueError("quality must be finite on the mask")
    h, w = phi.shape
    n = h * w
    regions = connected_components_4(mask)
    phif = phi.ravel().tolist()
    qf = quality.ravel().tolist()
    maskf = mask.ravel().tolist()
    nbrs = _neighbor_table(h, w)
    k = [0] * n
    visited = bytearray(n)
    seeds = []
    push = heapq.heappush
    pop = heapq.heappop

    for r in range(1, regions.n_regions + 1):
        region_idx = np.flatnonzero((regions.region_id == r).ravel())
        # anchor: maximum quality, ties by row-major index
        seed_idx = int(region_idx[np.argmax(np.asarray(qf)[region_idx])])
        seeds.append((seed_idx // w, seed_idx % w))
        visited[seed_idx] = 1
        heap = []
        for nb in nbrs[seed_idx]:
            if nb >= 0 and maskf[nb]:
                push(heap, (-qf[nb], nb))
        while heap:
            _, p = pop(heap)
            if visited[p]:
                continue
            best = -1
            best_q = 0.0
            for nb in nbrs[p]:
                if nb >= 0 and visited[nb] and maskf[nb]:
                    q = qf[nb]
                    if best < 0 or q > best_q:
                        best, best_q = nb, q
            k[p] = k[best] + _scalar_jump(phif[p] - phif[best])
            visited[p] = 1
            for nb in nbrs[p]:
                if nb >= 0 and maskf[nb] and not visited[nb]:
                    push(heap, (-qf[nb], nb))

    k = np.asarray(k, dtype=np.int64).reshape(h, w)
    return _result(phi, mask, k, regions, seeds)


def _second_difference_reliability(phi: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """R = 1 / (D + eps) with D the wrapped second-difference magnitude.

    D combines the horizontal, vertical, and both diagonal second
    differences; a term whose neighbors are not both inside the mask
    contributes 0, so border points look reliable only through their
    remaining terms.
    """
    h, w = phi.shape
    pad_phi = np.zeros((h + 2, w + 2))
    pad_ok = np.zeros((h + 2, w + 2), dtype=bool)
    pad_phi[1:-1, 1:-1] = phi
    pad_ok[1:-1, 1:-1] = mask

    d_sq = np.zeros((h, w))
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        before = pad_phi[1 - dy : h + 1 - dy, 1 - dx : w + 1 - dx]
        after = pad_phi[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
        ok = (
            pad_ok[1 - dy : h + 1 - dy, 1 - dx : w + 1 - dx]
            & pad_ok[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
        )
        term = np.where(ok & mask, wrap(before - phi) - wrap(phi - after), 0.0)
        d_sq += term * term
    return 1.0 / (np.sqrt(d_sq) + FSPU_EPS)


def fspu_unwrap(phi, mask) -> UnwrapResult:
    """Reliability-sorted unwrap along a non-continuous path."""
    phi = phi.data if isinstance(phi, FloatMap) else np.asarray(phi, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if phi.shape != mask.shape:
        raise ValueError(f"phase {phi.shape} != mask {mask.shape}")
    h, w = phi.shape
    n = h * w
    regions = connected_components_4(mask)
    reliability = _second_difference_reliability(phi, mask)
    rf = reliability.ravel()
    phif = phi.ravel()
    k = np.zeros(n, dtype=np.int64)

    # 4-connected edges inside the mask; ids make tie-breaking total
    right_ok = (mask[:, :-1] & mask[:, 1:]).ravel()
    down_ok = (mask[:-1, :] & mask[1:, :]).ravel()
    idx = np.arange(n).reshape(h, w)
    e_h = idx[:, :-1].ravel()[right_ok]
    e_v = idx[:-1, :].ravel()[down_ok]
    edge_p = np.concatenate([e_h, e_v])
    edge_q = np.concatenate([e_h + 1, e_v + w])
    edge_id = np.concatenate([e_h * 2, e_v * 2 + 1])
    edge_rel = rf[edge_p] + rf[edge_q]
    order = np.lexsort((edge_id, -edge_rel))
    x = phif[edge_p[order]] - phif[edge_q[order]]
    jumps = _order_jump(x).tolist()
    ep = edge_p[order].tolist()
    eq = edge_q[order].tolist()

    parent = list(range(n))
    group_size = [1] * n
    members = [None] * n  # lazily created per root
    k = [0] * n

    for p, q, jump in zip(ep, eq, jumps):
        rp = p
        while parent[rp] != rp:
            parent[rp] = parent[parent[rp]]
            rp = parent[rp]
        rq = q
        while parent[rq] != rq:
            parent[rq] = parent[parent[rq]]
            rq = parent[rq]
        if rp == rq:
            continue
        # need k[p] - k[q] == jump after the merge
        delta = k[p] - k[q] - jump
        if group_size[rp] < group_size[rq]:
            big, small, shift = rq, rp, -delta
        else:
            big, small, shift = rp, rq, delta
        small_members = members[small] or [small]
        if shift:
            for m in small_members:
                k[m] += shift
        big_members = members[big]
        if big_members is None:
            big_members = [big]
            members[big] = big_members
        big_members.extend(small_members)
        members[small] = None
        parent[small] = big
        group_size[big] += group_size[small]

    # anchor each region at its most reliable point
    k = np.asarray(k, dtype=np.int64)
    seeds = []
    region_flat = regions.region_id.ravel()
    for r in range(1, regions.n_regions + 1):
        region_idx = np.flatnonzero(region_flat == r)
        anchor = int(region_idx[np.argmax(rf[region_idx])])
        seeds.append((anchor // w, anchor % w))
        k[region_idx] -= k[anchor]

    return _result(phi, mask, k.reshape(h, w), regions, seeds)
