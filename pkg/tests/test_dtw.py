import numpy as np
import pytest

from leadnado.core import TimeSeries
from leadnado.dtw import AlignmentError, dtw_align, following_score, pairwise_scores, sim_max


def brute_force_min_cost(u: np.ndarray, w: np.ndarray, band: int) -> float:
    """Enumerate every monotone, continuous, banded path and return the cheapest."""
    n, m = len(u), len(w)
    best = np.inf

    def walk(i, j, cost):
        nonlocal best
        if abs(i - j) > band:
            return
        cost = cost + abs(float(u[i]) - float(w[j]))
        if (i, j) == (n - 1, m - 1):
            best = min(best, cost)
            return
        for di, dj in ((1, 1), (0, 1), (1, 0)):
            if i + di < n and j + dj < m:
                walk(i + di, j + dj, cost)

    walk(0, 0, 0.0)
    return best


@pytest.fixture(scope="function")
def rng():
    return np.random.default_rng(2018)


def test_identical_series_align_on_the_diagonal(rng):
    u = rng.normal(size=(12, 2))
    result = dtw_align(u, u, band=3)
    assert result.path == [(k, k) for k in range(1, 13)]
    assert result.cost == 0
    assert result.score == 0


def test_constant_series_prefer_the_diagonal():
    u = np.zeros(5)
    result = dtw_align(u, u, band=2)
    assert result.path == [(k, k) for k in range(1, 6)]


def test_ramp_with_lag():
    result = dtw_align(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.0, 1.0, 2.0]), band=2)
    assert result.cost == 0
    assert result.path == [(1, 1), (1, 2), (2, 3), (3, 4)]
    assert result.score == pytest.approx(0.75)
    assert result.score > 0, "the delayed series should follow"


def test_path_invariants(rng):
    for _ in range(50):
        n, m = rng.integers(1, 9, size=2)
        band = abs(int(n) - int(m)) + int(rng.integers(0, 3))
        result = dtw_align(rng.normal(size=n), rng.normal(size=m), band=band)
        assert result.path[0] == (1, 1)
        assert result.path[-1] == (n, m)
        assert all(abs(i - j) <= band for i, j in result.path)
        assert -1 <= result.score <= 1
        assert result.cost >= 0
        assert result.score == following_score(result.path)


def test_cost_matches_exhaustive_search(rng):
    for _ in range(1000):
        n, m = (int(x) for x in rng.integers(1, 7, size=2))
        band = abs(n - m) + int(rng.integers(0, 3))
        u = rng.integers(0, 4, size=n).astype(float)
        w = rng.integers(0, 4, size=m).astype(float)

        result = dtw_align(u, w, band=band)
        assert result.cost == brute_force_min_cost(u, w, band), f"u={u}, w={w}, band={band}"

        lags = [j - i for i, j in result.path]
        assert result.score == sum(np.sign(lags)) / len(lags)


@pytest.mark.slow
def test_cost_matches_exhaustive_search_extended():
    rng = np.random.default_rng(6)
    for _ in range(10000):
        n, m = (int(x) for x in rng.integers(1, 7, size=2))
        band = abs(n - m) + int(rng.integers(0, 3))
        u = rng.integers(0, 4, size=n).astype(float)
        w = rng.integers(0, 4, size=m).astype(float)
        assert dtw_align(u, w, band=band).cost == brute_force_min_cost(u, w, band)


def test_cost_does_not_increase_with_band(rng):
    for _ in range(100):
        u, w = rng.normal(size=10), rng.normal(size=10)
        costs = [dtw_align(u, w, band=b).cost for b in range(0, 10)]
        assert all(later <= earlier for earlier, later in zip(costs, costs[1:]))


@pytest.mark.parametrize(
    "path,expected",
    [
        ([(1, 1), (2, 2), (3, 3)], 0.0),
        ([(1, 2), (2, 3), (3, 4)], 1.0),
        ([(1, 2), (2, 2), (3, 2), (3, 3)], 0.0),
    ],
)
def test_following_score(path, expected):
    assert following_score(path) == expected


def test_transposed_path_flips_the_score(rng):
    result = dtw_align(rng.normal(size=15), rng.normal(size=15), band=4)
    transposed = [(j, i) for i, j in result.path]
    assert following_score(transposed) == -result.score


def test_following_score_of_empty_path():
    with pytest.raises(AlignmentError):
        following_score([])


def test_sim_max_identical_series(rng):
    u = rng.normal(size=20)
    assert sim_max(u, u, band=5) == (0.0, 0)


def test_sim_max_recovers_lag():
    u = np.arange(20, dtype=float)
    w = u[np.maximum(np.arange(20) - 3, 0)]
    similarity, lag = sim_max(TimeSeries(id="u", values=u), TimeSeries(id="w", values=w), band=5)
    assert lag == 3
    assert similarity > 0.5


def test_sim_max_is_symmetric(rng):
    for _ in range(200):
        u, w = rng.normal(size=8), rng.normal(size=8)
        assert sim_max(u, w, band=3)[0] == sim_max(w, u, band=3)[0]


def test_infeasible_band():
    with pytest.raises(AlignmentError):
        dtw_align(np.zeros(3), np.zeros(6), band=2)


def test_empty_series():
    with pytest.raises(AlignmentError):
        dtw_align(np.zeros(0), np.zeros(3), band=3)


def test_dimension_mismatch():
    with pytest.raises(AlignmentError):
        dtw_align(np.zeros((4, 2)), np.zeros((4, 3)), band=1)


def test_pairwise_scores_match_single_alignments(rng):
    values = rng.normal(size=(5, 30, 2))
    scores, lags = pairwise_scores(values, band=4)

    np.testing.assert_array_equal(scores, -scores.T)
    np.testing.assert_array_equal(lags, -lags.T)
    for i in range(5):
        for j in range(i + 1, 5):
            assert scores[i, j] == dtw_align(values[i], values[j], band=4).score
