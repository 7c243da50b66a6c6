"""Batch kernels for signal-space distances and k-nearest selection.

Two implementations share one contract: numba-compiled loops, and a
vectorized numpy path. Set ``RSSILOC_DISABLE_NUMBA=1`` (or run without numba
installed) to select the numpy path. Both are always importable as
``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` so they can be cross-checked.

Conventions: RSSI matrices use NaN for "anchor not heard"; norm code 0 is
Chebyshev, 1 is Euclidean; status 0 is success, 1 means fewer than ``k``
entries share ``min_common`` anchors with the query.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

CHEBYSHEV = 0
EUCLIDEAN = 1
STATUS_OK = 0
STATUS_INSUFFICIENT_OVERLAP = 1

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


# --------------------------------------------------------------------------
# numpy path
# --------------------------------------------------------------------------


def _np_distance_matrix(queries, entries, norm):
    q = queries[:, None, :]
    e = entries[None, :, :]
    mask = ~np.isnan(q) & ~np.isnan(e)
    diff = np.where(mask, q - e, 0.0)
    overlap = mask.sum(axis=2).astype(np.int64)
    if norm == CHEBYSHEV:
        dist = np.abs(diff).max(axis=2, initial=0.0)
    else:
        dist = np.sqrt((diff * diff).sum(axis=2))
    return dist, overlap


def _np_k_smallest(d, k):
    return np.argsort(d, kind="stable")[:k].astype(np.int64)


def _np_combine(dist, overlap, positions, k, min_common, weighted, eps):
    nq = dist.shape[0]
    eligible = overlap >= min_common
    masked = np.where(eligible, dist, np.inf)
    idx = np.argsort(masked, axis=1, kind="stable")[:, :k].astype(np.int64)
    dsel = np.take_along_axis(masked, idx, axis=1)
    status = np.where(eligible.sum(axis=1) >= k, STATUS_OK, STATUS_INSUFFICIENT_OVERLAP).astype(np.int64)
    psel = positions[idx]  # (nq, k, 2)
    est = np.full((nq, 2), np.nan)
    weights = np.zeros((nq, k))
    ok = status == STATUS_OK
    if not weighted:
        weights[ok] = 1.0 / k
        est[ok] = psel[ok].sum(axis=1) / k
        return est, idx, dsel, weights, status

    snapmask = (dsel < eps) & ok[:, None]
    snapped = snapmask.any(axis=1)
    if snapped.any():
        cand = np.where(snapmask, idx, np.iinfo(np.int64).max)
        winner = cand.min(axis=1)
        rows = np.nonzero(snapped)[0]
        est[rows] = positions[winner[rows]]
        weights[rows] = (idx[rows] == winner[rows, None]).astype(float)
    rest = ok & ~snapped
    if rest.any():
        inv = 1.0 / dsel[rest]
        w = inv / inv.sum(axis=1, keepdims=True)
        weights[rest] = w
        est[rest] = (w[:, :, None] * psel[rest]).sum(axis=1)
    return est, idx, dsel, weights, status


NUMPY_KERNELS = SimpleNamespace(
    name="numpy",
    distance_matrix=_np_distance_matrix,
    k_smallest=_np_k_smallest,
    combine=_np_combine,
)


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

if numba is not None:

    @numba.njit(cache=True)
    def _nb_distance_matrix(queries, entries, norm):
        nq, m = queries.shape
        ne = entries.shape[0]
        dist = np.empty((nq, ne))
        overlap = np.zeros((nq, ne), dtype=np.int64)
        for i in range(nq):
            for j in range(ne):
                acc = 0.0
                cnt = 0
                for a in range(m):
                    qa = queries[i, a]
                    ea = entries[j, a]
                    if np.isnan(qa) or np.isnan(ea):
                        continue
                    diff = qa - ea
                    cnt += 1
                    if norm == 0:
                        ad = abs(diff)
                        if ad > acc:
                            acc = ad
                    else:
                        acc += diff * diff
                dist[i, j] = acc if norm == 0 else np.sqrt(acc)
                overlap[i, j] = cnt
        return dist, overlap

    @numba.njit(cache=True)
    def _nb_select(d, eligible, k, out_idx, out_d):
        # insertion into a sorted buffer; strict comparisons keep lower index first on ties
        filled = 0
        for i in range(d.shape[0]):
            if not eligible[i]:
                continue
            v = d[i]
            if filled < k:
                pos = filled
                filled += 1
            elif v < out_d[k - 1]:
                pos = k - 1
            else:
                continue
            while pos > 0 and out_d[pos - 1] > v:
                out_d[pos] = out_d[pos - 1]
                out_idx[pos] = out_idx[pos - 1]
                pos -= 1
            out_d[pos] = v
            out_idx[pos] = i
        return filled

    @numba.njit(cache=True)
    def _nb_k_smallest(d, k):
        out_idx = np.empty(k, dtype=np.int64)
        out_d = np.empty(k)
        eligible = np.ones(d.shape[0], dtype=np.bool_)
        _nb_select(d, eligible, k, out_idx, out_d)
        return out_idx

    @numba.njit(cache=True)
    def _nb_combine(dist, overlap, positions, k, min_common, weighted, eps):
        nq, ne = dist.shape
        est = np.full((nq, 2), np.nan)
        idx = np.zeros((nq, k), dtype=np.int64)
        dsel = np.full((nq, k), np.inf)
        weights = np.zeros((nq, k))
        status = np.zeros(nq, dtype=np.int64)
        eligible = np.empty(ne, dtype=np.bool_)
        for i in range(nq):
            for j in range(ne):
                eligible[j] = overlap[i, j] >= min_common
            filled = _nb_select(dist[i], eligible, k, idx[i], dsel[i])
            if filled < k:
                status[i] = 1
                continue
            if not weighted:
                sx = 0.0
                sy = 0.0
                for t in range(k):
                    sx += positions[idx[i, t], 0]
                    sy += positions[idx[i, t], 1]
                    weights[i, t] = 1.0 / k
                est[i, 0] = sx / k
                est[i, 1] = sy / k
                continue
            winner = -1
            for t in range(k):
                if dsel[i, t] < eps and (winner < 0 or idx[i, t] < winner):
                    winner = idx[i, t]
            if winner >= 0:
                est[i, 0] = positions[winner, 0]
                est[i, 1] = positions[winner, 1]
                for t in range(k):
                    weights[i, t] = 1.0 if idx[i, t] == winner else 0.0
                continue
            total = 0.0
            for t in range(k):
                weights[i, t] = 1.0 / dsel[i, t]
                total += weights[i, t]
            sx = 0.0
            sy = 0.0
            for t in range(k):
                weights[i, t] = weights[i, t] / total
                sx += weights[i, t] * positions[idx[i, t], 0]
                sy += weights[i, t] * positions[idx[i, t], 1]
            est[i, 0] = sx
            est[i, 1] = sy
        return est, idx, dsel, weights, status

    NUMBA_KERNELS = SimpleNamespace(
        name="numba",
        distance_matrix=_nb_distance_matrix,
        k_smallest=_nb_k_smallest,
        combine=_nb_combine,
    )
else:  # pragma: no cover
    NUMBA_KERNELS = None


def _disabled() -> bool:
    return os.environ.get("RSSILOC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


KERNELS = NUMPY_KERNELS if (NUMBA_KERNELS is None or _disabled()) else NUMBA_KERNELS
BACKEND = KERNELS.name
