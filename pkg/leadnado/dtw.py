from typing import List, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from numba import njit
from pydantic import BaseModel, ConfigDict, Field, field_validator

from leadnado.core import TimeSeries


class AlignmentError(ValueError):
    pass


class WarpingResult(BaseModel):
    """
    Optimal banded DTW alignment of two series.

    `path` holds 1-based (i, j) pairs aligning u[i] to w[j]. A positive score
    means w lags behind u, i.e. w follows u.
    """

    model_config = ConfigDict(frozen=True)

    path: List[Tuple[int, int]]
    cost: float = Field(ge=0)
    score: float = Field(ge=-1, le=1)

    @field_validator("path")
    @classmethod
    def check_path(cls, v):
        if not v:
            raise ValueError("Warping path is empty")
        if v[0] != (1, 1):
            raise ValueError(f"Warping path must start at (1, 1), got {v[0]}")
        for (i0, j0), (i1, j1) in zip(v, v[1:]):
            if (i1 - i0, j1 - j0) not in {(1, 0), (0, 1), (1, 1)}:
                raise ValueError(f"Invalid warping step ({i0},{j0}) -> ({i1},{j1})")
        return v

    @property
    def lags(self) -> np.ndarray:
        p = np.asarray(self.path)
        return p[:, 1] - p[:, 0]


@njit(cache=True, nogil=True)
def _accumulate(u, w, band):
    """
    Accumulated cost matrix stored in band coordinates: acc[i, j - i + band].
    Cells outside the band stay at infinity.
    """
    n = u.shape[0]
    m = w.shape[0]
    dim = u.shape[1]
    acc = np.full((n, 2 * band + 1), np.inf)

    for i in range(n):
        lo = max(0, i - band)
        hi = min(m - 1, i + band)
        for j in range(lo, hi + 1):
            d = 0.0
            for k in range(dim):
                diff = u[i, k] - w[j, k]
                d += diff * diff
            d = np.sqrt(d)

            if i == 0 and j == 0:
                acc[i, band] = d
                continue

            best = np.inf
            if i > 0 and j > 0:
                best = acc[i - 1, j - i + band]
            if j > 0 and j - 1 - i + band >= 0:
                best = min(best, acc[i, j - 1 - i + band])
            if i > 0 and j - i + 1 <= band:
                best = min(best, acc[i - 1, j - i + 1 + band])

            acc[i, j - i + band] = d + best

    return acc


@njit(cache=True, nogil=True)
def _traceback(acc, band, n, m):
    # Ties prefer the diagonal predecessor, then (i, j-1), then (i-1, j).
    path = np.empty((n + m, 2), dtype=np.int64)
    i = n - 1
    j = m - 1
    k = 0
    path[k, 0] = i
    path[k, 1] = j
    k += 1

    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag = acc[i - 1, j - i + band]
            left = np.inf
            if j - 1 - i + band >= 0:
                left = acc[i, j - 1 - i + band]
            up = np.inf
            if j - i + 1 <= band:
                up = acc[i - 1, j - i + 1 + band]

            if diag <= left and diag <= up:
                i -= 1
                j -= 1
            elif left <= up:
                j -= 1
            else:
                i -= 1
        path[k, 0] = i
        path[k, 1] = j
        k += 1

    return path[:k][::-1]


@njit(cache=True, nogil=True)
def _score_and_lag(path):
    lags = path[:, 1] - path[:, 0]
    score = np.sign(lags).sum() / lags.shape[0]
    ordered = np.sort(lags)
    return score, ordered[(ordered.shape[0] - 1) // 2]


@njit(cache=True, nogil=True)
def _pairwise(values, band):
    n = values.shape[0]
    t = values.shape[1]
    scores = np.zeros((n, n))
    lags = np.zeros((n, n), dtype=np.int64)

    for i in range(n):
        for j in range(i + 1, n):
            acc = _accumulate(values[i], values[j], band)
            path = _traceback(acc, band, t, t)
            s, lag = _score_and_lag(path)
            scores[i, j] = s
            scores[j, i] = -s
            lags[i, j] = lag
            lags[j, i] = -lag

    return scores, lags


def _as_matrix(x: Union[TimeSeries, np.ndarray]) -> np.ndarray:
    values = x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if values.shape[0] == 0:
        raise AlignmentError("Cannot align an empty series")
    return np.ascontiguousarray(values, dtype=np.float64)


def _check_band(band: int, n: int, m: int) -> int:
    if band < 0:
        raise AlignmentError(f"Band must be nonnegative, got {band}")
    if band < abs(n - m):
        raise AlignmentError(
            f"Band {band} is narrower than the length difference |{n} - {m}|; no feasible path"
        )
    return min(int(band), max(n, m))


def dtw_align(
    u: Union[TimeSeries, np.ndarray], w: Union[TimeSeries, np.ndarray], band: int
) -> WarpingResult:
    """
    Minimum-cost monotone warping path of u against w under a Sakoe-Chiba band.

    Point distance is Euclidean. The alignment is computed on exactly the
    vectors given; displacement preprocessing happens in network construction.
    """
    a = _as_matrix(u)
    b = _as_matrix(w)
    if a.shape[1] != b.shape[1]:
        raise AlignmentError(f"Dimension mismatch: {a.shape[1]} vs {b.shape[1]}")

    band = _check_band(band, a.shape[0], b.shape[0])
    acc = _accumulate(a, b, band)
    path = _traceback(acc, band, a.shape[0], b.shape[0])
    cost = float(acc[a.shape[0] - 1, b.shape[0] - 1 - (a.shape[0] - 1) + band])

    pairs = [(int(i) + 1, int(j) + 1) for i, j in path]
    return WarpingResult(path=pairs, cost=cost, score=following_score(pairs))


def following_score(path: Sequence[Tuple[int, int]]) -> float:
    """Mean of sign(j - i) over the path."""
    if len(path) == 0:
        raise AlignmentError("Following score is undefined for an empty path")
    p = np.asarray(path)
    return float(np.sign(p[:, 1] - p[:, 0]).sum() / p.shape[0])


def sim_max(
    u: Union[TimeSeries, np.ndarray], w: Union[TimeSeries, np.ndarray], band: int
) -> Tuple[float, int]:
    """
    Similarity |s| of the optimal path and its lower-median lag j - i.
    """
    result = dtw_align(u, w, band)
    lags = np.sort(result.lags)
    return abs(result.score), int(lags[(lags.shape[0] - 1) // 2])


def pairwise_scores(values: np.ndarray, band: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Following scores and median lags for all pairs of an (n, t, m) array.

    scores[i, j] is the score of aligning series i against series j, so the
    matrix is antisymmetric; lags likewise.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, np.newaxis]
    if values.shape[1] == 0:
        raise AlignmentError("Cannot align empty series")

    band = _check_band(band, values.shape[1], values.shape[1])
    logger.debug(f"Aligning {values.shape[0]} series of length {values.shape[1]} (band={band})")
    return _pairwise(values, band)
