"""Finite samples of Delone sets plus a cell-hash index for point queries.

Points are stored lexicographically sorted so that identical generation
parameters always produce byte-identical output files regardless of the
enumeration strategy or shard count that produced them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

POINT_BUDGET = 50_000_000


@dataclass
class PointSet:
    """Points (N, d) with optional per-point labels and provenance meta."""

    points: np.ndarray
    dim: int
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, points, labels=None, meta=None, sort: bool = True) -> "PointSet":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.size == 0:
            pts = pts.reshape(0, max(1, pts.shape[-1] if pts.ndim == 2 else 1))
        if pts.ndim != 2:
            raise ValidationError("points must be a (N, d) array")
        labs = None if labels is None else np.asarray(labels)
        if labs is not None and len(labs) != len(pts):
            raise ValidationError("labels must align with points")
        if sort and len(pts) > 1:
            order = np.lexsort(pts[:, ::-1].T)
            pts = pts[order]
            if labs is not None:
                labs = labs[order]
        return cls(points=pts, dim=pts.shape[1], labels=labs, meta=dict(meta or {}))

    def __len__(self) -> int:
        return len(self.points)

    # -- extent ----------------------------------------------------------

    def extent(self) -> dict:
        ext = self.meta.get("extent")
        if ext is None:
            raise ValidationError("point set has no recorded extent")
        return ext

    def extent_contains_box(self, lo, hi, margin: float = 0.0) -> bool:
        ext = self.extent()
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if ext["kind"] == "box":
            elo = np.asarray(ext["lo"], dtype=float)
            ehi = np.asarray(ext["hi"], dtype=float)
            return bool(np.all(lo - margin >= elo) and np.all(hi + margin <= ehi))
        if ext["kind"] == "ball":
            corners = np.array(list(itertools.product(*zip(lo, hi))))
            radii = np.linalg.norm(corners, axis=1)
            return bool(np.all(radii + margin <= ext["radius"]))
        raise ValidationError(f"unknown extent kind {ext['kind']}")

    # -- Delone property sampling -----------------------------------------

    def delone_sample(self, pairs: int = 10_000, balls: int = 1_000,
                      seed: int = 7) -> tuple[float, float]:
        """Sampled (r_min, r_max) witnesses; recorded into meta.

        r_min: smallest distance among random point pairs (exact nearest
        gap in 1D).  r_max: largest empty-ball radius among random
        interior probe locations.
        """
        n = len(self)
        if n < 2:
            raise ValidationError("need at least two points")
        rng = np.random.default_rng(seed)
        if self.dim == 1:
            gaps = np.diff(self.points[:, 0])
            r_min = float(gaps.min())
        else:
            i = rng.integers(0, n, size=pairs)
            j = rng.integers(0, n, size=pairs)
            keep = i != j
            d = np.linalg.norm(self.points[i[keep]] - self.points[j[keep]], axis=1)
            idx = PointIndex(self.points)
            nn = idx.nearest_distance(self.points[rng.integers(0, n, size=min(pairs, n))],
                                      exclude_self=True)
            r_min = float(min(d.min(), nn.min()))

        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        span = hi - lo
        probes = lo + 0.1 * span + 0.8 * span * rng.random((balls, self.dim))
        idx = PointIndex(self.points)
        r_max = float(idx.nearest_distance(probes).max())
        self.meta["r_min_sampled"] = r_min
        self.meta["r_max_sampled"] = r_max
        return r_min, r_max


class PointIndex:
    """Cell-hash index over a fixed point cloud (d <= 3).

    Supports vectorized membership-with-tolerance and nearest-distance
    queries.  Cell keys are packed into int64, so the number of cells per
    axis is bounded; the cell size adapts to the point spacing.
    """

    def __init__(self, points: np.ndarray, cell: float | None = None):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self.points = pts
        self.d = pts.shape[1]
        if self.d > 3:
            raise ValidationError("PointIndex supports d <= 3")
        self._bits = 62 // self.d
        self._bound = 1 << (self._bits - 1)
        if cell is None:
            span = max(float(np.ptp(pts[:, k])) for k in range(self.d)) if len(pts) else 1.0
            vol = max(span, 1e-9) ** self.d
            cell = max((vol / max(len(pts), 1)) ** (1.0 / self.d), 1e-9)
        self.cell = float(cell)
        keys = self._keys(pts)
        self._order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._order]

    def _cells(self, pts: np.ndarray) -> np.ndarray:
        c = np.floor(pts / self.cell).astype(np.int64)
        if np.any(np.abs(c) >= self._bound - 1):
            raise ValidationError("point cloud too large for cell index")
        return c

    def _keys(self, pts: np.ndarray) -> np.ndarray:
        c = self._cells(pts)
        key = np.zeros(len(pts), dtype=np.int64)
        for k in range(self.d):
            key = (key << self._bits) | (c[:, k] + self._bound)
        return key

    def _key_of_cells(self, cells: np.ndarray) -> np.ndarray:
        key = np.zeros(len(cells), dtype=np.int64)
        for k in range(self.d):
            key = (key << self._bits) | (cells[:, k] + self._bound)
        return key

    def contains(self, queries: np.ndarray, tol: float) -> np.ndarray:
        """Boolean mask: does each query have a point within tol (Euclidean)?"""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if tol > self.cell:
            raise ValidationError("tolerance exceeds cell size")
        found = np.zeros(len(q), dtype=bool)
        base = self._cells(q)
        for off in itertools.product((-1, 0, 1), repeat=self.d):
            cells = base + np.asarray(off, dtype=np.int64)
            keys = self._key_of_cells(cells)
            lo = np.searchsorted(self._sorted_keys, keys, side="left")
            hi = np.searchsorted(self._sorted_keys, keys, side="right")
            cnt = hi - lo
            if not cnt.any():
                continue
            qi = np.repeat(np.arange(len(q)), cnt)
            starts = np.repeat(lo, cnt)
            within = np.arange(len(qi)) - np.repeat(
                np.concatenate(([0], np.cumsum(cnt)[:-1])), cnt)
            pid = self._order[starts + within]
            dist = np.linalg.norm(self.points[pid] - q[qi], axis=1)
            hit = qi[dist <= tol]
            found[hit] = True
        return found

    def nearest_distance(self, queries: np.ndarray,
                         exclude_self: bool = False,
                         max_rings: int = 64) -> np.ndarray:
        """Distance from each query to the nearest indexed point."""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        best = np.full(len(q), np.inf)
        base = self._cells(q)
        pending = np.arange(len(q))
        for ring in range(max_rings + 1):
            if len(pending) == 0:
                break
            offsets = [off for off in itertools.product(
                range(-ring, ring + 1), repeat=self.d)
                if max(abs(o) for o in off) == ring] if ring else [(0,) * self.d]
            for off in offsets:
                cells = base[pending] + np.asarray(off, dtype=np.int64)
                keys = self._key_of_cells(cells)
                lo = np.searchsorted(self._sorted_keys, keys, side="left")
                hi = np.searchsorted(self._sorted_keys, keys, side="right")
                cnt = hi - lo
                if not cnt.any():
                    continue
                qi = np.repeat(pending, cnt)
                starts = np.repeat(lo, cnt)
                within = np.arange(len(qi)) - np.repeat(
                    np.concatenate(([0], np.cumsum(cnt)[:-1])), cnt)
                pid = self._order[starts + within]
                dist = np.linalg.norm(self.points[pid] - q[qi], axis=1)
                if exclude_self:
                    dist = np.where(dist < 1e-12, np.inf, dist)
                np.minimum.at(best, qi, dist)
            # a hit in ring k certifies distances up to (k)*cell; keep
            # queries whose current best could still be beaten
            safe = ring * self.cell
            pending = pending[best[pending] > safe]
        return best
