"""Descriptor comparison metrics, nearest-neighbor queries, and a database.

A database row is one stored descriptor owned by a track; a track may own
several rows (per-frame or per-synthesized-view storage), distinguished by a
group index. Queries score a track by the best row it owns, so growing a
track's row set can only help it.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .hog import (DescriptorParams, DescriptorVector, OrientationDensity,
                  pack_descriptor, unpack_descriptor)

__all__ = [
    "METRICS",
    "distance",
    "pairwise_distances",
    "DescriptorDatabase",
    "nn_query",
    "match_all",
    "log_likelihood",
    "likelihood_query",
]

METRICS = ("l1", "l2", "neg-correlation", "chi2", "bhattacharyya", "kl")
KL_SMOOTHING = 1e-8
_QUERY_CHUNK = 64


def _cellwise(values: np.ndarray, bins: int) -> np.ndarray:
    """Reshape (..., n_cells*bins) descriptor rows to (..., n_cells, bins)."""
    if values.shape[-1] % bins:
        raise ValueError("descriptor length is not a multiple of bins")
    return values.reshape(*values.shape[:-1], -1, bins)


def _smooth(dist: np.ndarray, bins: int) -> np.ndarray:
    """Mix a distribution with a whisper of uniform so logs stay finite."""
    return (dist + KL_SMOOTHING) / (1.0 + bins * KL_SMOOTHING)


def pairwise_distances(queries: np.ndarray, rows: np.ndarray, metric: str,
                       bins: int = None) -> np.ndarray:
    """Distance matrix (n_queries, n_rows) under the named metric.

    ``bins`` is required for the per-cell metrics (chi2, bhattacharyya, kl),
    which treat each cell of the descriptor as its own distribution.
    """
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if q.shape[1] != x.shape[1]:
        raise ValueError("query and row lengths differ")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    if metric in ("chi2", "bhattacharyya", "kl") and bins is None:
        raise ValueError(f"metric {metric!r} needs the per-cell bin count")

    if metric == "neg-correlation":
        return _neg_correlation(q, x)

    out = np.empty((q.shape[0], x.shape[0]))
    for s in range(0, q.shape[0], _QUERY_CHUNK):
        qc = q[s:s + _QUERY_CHUNK]
        if metric == "l1":
            d = np.abs(qc[:, None, :] - x[None, :, :]).sum(axis=2)
        elif metric == "l2":
            d = np.sqrt(np.maximum(
                np.square(qc[:, None, :] - x[None, :, :]).sum(axis=2), 0.0))
        elif metric == "chi2":
            diff = qc[:, None, :] - x[None, :, :]
            denom = qc[:, None, :] + x[None, :, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                term = np.where(denom > 0.0, diff * diff / denom, 0.0)
            d = 0.5 * term.sum(axis=2)
        elif metric == "bhattacharyya":
            qa = _cellwise(qc, bins)
            xa = _cellwise(x, bins)
            bc = np.sqrt(qa[:, None] * xa[None]).sum(axis=3)
            with np.errstate(divide="ignore"):
                d = -np.log(np.minimum(bc, 1.0)).sum(axis=2)
        elif metric == "kl":
            qa = _smooth(_cellwise(qc, bins), bins)
            xa = _smooth(_cellwise(x, bins), bins)
            d = (qa[:, None] * (np.log(qa)[:, None] - np.log(xa)[None])) \
                .sum(axis=3).sum(axis=2)
        out[s:s + _QUERY_CHUNK] = d
    return out


def _neg_correlation(q: np.ndarray, x: np.ndarray) -> np.ndarray:
    """1 - Pearson correlation; constant rows correlate only with themselves."""
    def standardize(a):
        c = a - a.mean(axis=1, keepdims=True)
        n = np.linalg.norm(c, axis=1, keepdims=True)
        flat = n[:, 0] < 1e-300
        c = np.where(flat[:, None], 0.0, c / np.where(flat[:, None], 1.0, n))
        return c, flat

    qs, qflat = standardize(q)
    xs, xflat = standardize(x)
    d = 1.0 - qs @ xs.T
    both = qflat[:, None] & xflat[None, :]
    if np.any(both):
        iq, ix = np.nonzero(both)
        same = np.isclose(q[iq, 0], x[ix, 0], rtol=1e-9, atol=1e-12)
        d[iq, ix] = np.where(same, 0.0, 1.0)
    return d


def distance(a, b, metric: str, bins: int = None) -> float:
    """Distance between two descriptors (vectors or raw value arrays)."""
    if isinstance(a, DescriptorVector):
        bins = a.bins if bins is None else bins
        a = a.values
    if isinstance(b, DescriptorVector):
        bins = b.bins if bins is None else bins
        b = b.values
    return float(pairwise_distances(a, b, metric, bins)[0, 0])


# ---------------------------------------------------------------------------
# likelihood scoring

def log_likelihood(model: np.ndarray, query: np.ndarray, bins: int) -> float:
    """Cross-entropy score of a query distribution under a model distribution.

    Both arguments are flattened per-cell distributions. The model is
    smoothed so empty model bins cannot produce -inf; higher is better.
    """
    m = _smooth(_cellwise(np.asarray(model, dtype=np.float64), bins), bins)
    q = _cellwise(np.asarray(query, dtype=np.float64), bins)
    return float(np.sum(q * np.log(m)))


# ---------------------------------------------------------------------------
# database

_DB_MAGIC = b"MVDESCDB"
_DB_VERSION = 1
_METHOD_CODE = {"sv": 0, "mv": 1, "r": 2}
_CODE_METHOD = {v: k for k, v in _METHOD_CODE.items()}
_METRIC_CODE = {m: i for i, m in enumerate(METRICS)}
_CODE_METRIC = {v: k for k, v in _METRIC_CODE.items()}
_DB_HEADER = struct.Struct("<8sHBBI")
_ROW_HEADER = struct.Struct("<iH")


class DescriptorDatabase:
    """Stored descriptors keyed by track, with a default query metric."""

    def __init__(self, method: str, params: DescriptorParams, metric: str = "l2"):
        if method not in _METHOD_CODE:
            raise ValueError(f"method must be one of {tuple(_METHOD_CODE)}")
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}")
        self.method = method
        self.params = params
        self.metric = metric
        self.track_ids: list[int] = []
        self.groups: list[int] = []
        self._rows: list[np.ndarray] = []
        self._matrix = None

    def __len__(self) -> int:
        return len(self._rows)

    def add(self, track_id: int, vec: DescriptorVector, group: int = 0) -> None:
        if vec.method != self.method:
            raise ValueError(f"cannot add {vec.method!r} descriptor to {self.method!r} database")
        if vec.params != self.params:
            raise ValueError("descriptor params do not match database")
        self.track_ids.append(int(track_id))
        self.groups.append(int(group))
        self._rows.append(vec.values)
        self._matrix = None

    @property
    def matrix(self) -> np.ndarray:
        """(n_rows, descriptor_length) matrix of stored values."""
        if self._matrix is None:
            if not self._rows:
                raise ValueError("database is empty")
            self._matrix = np.vstack(self._rows)
        return self._matrix

    @property
    def memory_bytes(self) -> int:
        """Storage cost of the payload at 4 bytes per descriptor value."""
        d = self.params.cells ** 2 * self.params.bins
        return 4 * d * len(self._rows)

    def vector(self, i: int) -> DescriptorVector:
        return DescriptorVector(self._rows[i].copy(), self.method, self.params)

    def save(self, path) -> None:
        parts = [_DB_HEADER.pack(_DB_MAGIC, _DB_VERSION,
                                 _METHOD_CODE[self.method],
                                 _METRIC_CODE[self.metric], len(self._rows))]
        for tid, grp, row in zip(self.track_ids, self.groups, self._rows):
            parts.append(_ROW_HEADER.pack(tid, grp))
            parts.append(pack_descriptor(
                DescriptorVector(row, self.method, self.params)))
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path) -> "DescriptorDatabase":
        buf = Path(path).read_bytes()
        magic, ver, mcode, metcode, count = _DB_HEADER.unpack_from(buf, 0)
        if magic != _DB_MAGIC:
            raise ValueError("not a descriptor database file")
        if ver != _DB_VERSION:
            raise ValueError(f"unsupported database version {ver}")
        offset = _DB_HEADER.size
        db = None
        for _ in range(count):
            tid, grp = _ROW_HEADER.unpack_from(buf, offset)
            vec, offset = unpack_descriptor(buf, offset + _ROW_HEADER.size)
            if db is None:
                db = cls(_CODE_METHOD[mcode], vec.params, _CODE_METRIC[metcode])
            db.add(tid, vec, grp)
        if db is None:
            raise ValueError("database file holds no descriptors")
        return db


def _best_rows(dists: np.ndarray, track_ids: np.ndarray) -> np.ndarray:
    """Per query row, index of the winning entry.

    A track scores by its best row; among equal distances the lowest track
    id wins, so results do not depend on insertion order.
    """
    out = np.empty(dists.shape[0], dtype=np.intp)
    for i, row in enumerate(dists):
        out[i] = np.lexsort((track_ids, row))[0]
    return out


def nn_query(db: DescriptorDatabase, query, metric: str = None):
    """Exact nearest-neighbor lookup; returns (track_id, distance)."""
    values = query.values if isinstance(query, DescriptorVector) else query
    metric = db.metric if metric is None else metric
    dists = pairwise_distances(values, db.matrix, metric, db.params.bins)
    ids = np.asarray(db.track_ids)
    best = _best_rows(dists, ids)[0]
    return int(ids[best]), float(dists[0, best])


def match_all(db: DescriptorDatabase, queries: np.ndarray, metric: str = None):
    """Batch form of :func:`nn_query`; returns (track_ids, distances)."""
    metric = db.metric if metric is None else metric
    q = np.atleast_2d(queries)
    dists = pairwise_distances(q, db.matrix, metric, db.params.bins)
    ids = np.asarray(db.track_ids)
    best = _best_rows(dists, ids)
    return ids[best].copy(), dists[np.arange(q.shape[0]), best]


def likelihood_query(db: DescriptorDatabase, query):
    """Maximum-likelihood lookup; returns (track_id, log_likelihood).

    Stored rows act as per-cell model distributions for the query
    distribution. A track scores by its best row; ties prefer the lowest id.
    """
    if isinstance(query, OrientationDensity):
        if not query.normalized:
            raise ValueError("likelihood queries need a normalized density")
        values = query.grid.reshape(-1)
    elif isinstance(query, DescriptorVector):
        values = query.values
    else:
        values = np.asarray(query, dtype=np.float64)
    bins = db.params.bins
    m = _smooth(_cellwise(db.matrix, bins), bins)
    ll = np.sum(_cellwise(values, bins)[None] * np.log(m), axis=(1, 2))
    ids = np.asarray(db.track_ids)
    best = np.lexsort((ids, -ll))[0]
    return int(ids[best]), float(ll[best])
