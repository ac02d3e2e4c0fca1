"""Uniform hash grid for fixed-radius neighbor queries."""

from __future__ import annotations

import itertools

import numpy as np

_OFFSETS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)
_MAX_KEY_SPAN = 2**60


class HashGrid:
    """Points bucketed into cubic cells; queries scan the 27 surrounding cells.

    The query radius must not exceed the cell size. Cells are keyed by a
    linearized integer index and found by binary search over the sorted keys,
    so construction is a single sort and queries are fully vectorized.
    """

    def __init__(self, points: np.ndarray, cell_size: float):
        if not cell_size > 0:
            raise ValueError("cell size must be positive")
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.cell_size = float(cell_size)
        self._columns = [np.ascontiguousarray(self.points[:, a]) for a in range(3)]
        if len(self.points) == 0:
            self._keys = np.zeros(0, dtype=np.int64)
            self._order = np.zeros(0, dtype=np.int64)
            self._lo = np.zeros(3, dtype=np.int64)
            self._dims = np.ones(3, dtype=np.int64)
            return
        # coarsen cells for absurd extents so the linear key fits in int64
        while True:
            cells = np.floor(self.points / self.cell_size).astype(np.int64)
            lo = cells.min(axis=0)
            dims = cells.max(axis=0) - lo + 1
            if float(np.prod(dims.astype(float))) < _MAX_KEY_SPAN:
                break
            self.cell_size *= 2.0
        self._lo = lo
        self._dims = dims
        keys = self._encode(cells - lo)
        self._order = np.argsort(keys, kind="stable")
        self._keys = keys[self._order]

    def _encode(self, rel: np.ndarray) -> np.ndarray:
        return (rel[..., 0] * self._dims[1] + rel[..., 1]) * self._dims[2] + rel[..., 2]

    def __len__(self):
        return len(self.points)

    def query(self, queries: np.ndarray, radius: float):
        """All ``(point_index, query_index, squared_distance)`` with distance <= radius.

        Output is ordered by query index, then by neighboring cell, then by
        position within the cell, which is deterministic for fixed inputs.
        """
        if radius > self.cell_size:
            raise ValueError(f"radius {radius} exceeds cell size {self.cell_size}")
        Q = np.asarray(queries, dtype=float).reshape(-1, 3)
        empty = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        if len(Q) == 0 or len(self.points) == 0:
            return empty
        rel = np.floor(Q / self.cell_size).astype(np.int64) - self._lo
        neigh = rel[:, None, :] + _OFFSETS[None, :, :]  # (nq, 27, 3)
        inside = np.all((neigh >= 0) & (neigh < self._dims), axis=-1)
        keys = self._encode(np.where(inside[..., None], neigh, 0))
        start = np.searchsorted(self._keys, keys, side="left")
        stop = np.searchsorted(self._keys, keys, side="right")
        counts = np.where(inside, stop - start, 0).ravel()
        total = int(counts.sum())
        if total == 0:
            return empty
        start = start.ravel()
        qidx = np.repeat(np.repeat(np.arange(len(Q)), 27), counts)
        run_start = np.cumsum(counts) - counts
        pos = np.repeat(start - run_start, counts) + np.arange(total)
        pidx = self._order[pos]
        d2 = np.zeros(total)
        for axis in range(3):
            diff = self._columns[axis][pidx]
            diff -= Q[:, axis][qidx]
            diff *= diff
            d2 += diff
        keep = d2 <= radius * radius
        return pidx[keep], qidx[keep], d2[keep]
