import bisect
import json
import pathlib
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterator, List, Optional, Union

import networkx as nx
import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from leadnado.core import Dataset, Window, default_delta, displacement, slice_dataset, sliding_windows
from leadnado.dtw import pairwise_scores


class NetworkError(ValueError):
    pass


class FollowingNetwork(BaseModel):
    """
    Weighted directed network over individuals.

    adjacency[j, i] > 0 means individual j follows individual i, with weight |s|.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    ids: List[str]
    adjacency: np.ndarray
    sigma: float = 0.5

    @field_validator("adjacency", mode="before")
    @classmethod
    def as_square(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"Adjacency must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_invariants(self):
        a = self.adjacency
        if a.shape[0] != len(self.ids):
            raise NetworkError(f"{len(self.ids)} ids for a {a.shape[0]}-node adjacency")
        if np.any(a < 0):
            raise NetworkError("Edge weights must be nonnegative")
        if np.any(np.diag(a) != 0):
            raise NetworkError("Self-loops are not allowed")
        if np.any((a > 0) & (a.T > 0)):
            i, j = np.argwhere((a > 0) & (a.T > 0))[0]
            raise NetworkError(
                f"Both directions present between {self.ids[i]} and {self.ids[j]}"
            )
        if np.any((a > 0) & (a < self.sigma)):
            raise NetworkError(f"Nonzero weight below sigma={self.sigma}")
        return self

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def out_degree(self) -> np.ndarray:
        return (self.adjacency > 0).sum(axis=1)

    @property
    def in_degree(self) -> np.ndarray:
        return (self.adjacency > 0).sum(axis=0)

    @property
    def edges(self) -> List[Dict]:
        return [
            {"from": self.ids[j], "to": self.ids[i], "weight": float(self.adjacency[j, i])}
            for j, i in np.argwhere(self.adjacency > 0)
        ]

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.ids)
        g.add_weighted_edges_from((e["from"], e["to"], e["weight"]) for e in self.edges)
        return g

    @classmethod
    def from_edges(cls, ids: List[str], edges: List[Dict], sigma: float = 0.5) -> "FollowingNetwork":
        index = {id: k for k, id in enumerate(ids)}
        adjacency = np.zeros((len(ids), len(ids)))
        for e in edges:
            adjacency[index[str(e["from"])], index[str(e["to"])]] = e.get("weight", 1.0)
        return cls(ids=ids, adjacency=adjacency, sigma=sigma)


class NetworkBlock(BaseModel):
    """
    A run of time steps [t_start, t_end] (1-based, inclusive) sharing one network.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t_start: int
    t_end: int
    network: FollowingNetwork
    similarity: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def check_range(self):
        if self.t_start < 1 or self.t_end < self.t_start:
            raise NetworkError(f"Invalid block [{self.t_start}, {self.t_end}]")
        return self


class DynamicNetwork(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    ids: List[str]
    blocks: List[NetworkBlock]
    omega: Optional[int] = None

    @model_validator(mode="after")
    def check_contiguous(self):
        if not self.blocks:
            raise NetworkError("A dynamic network needs at least one block")
        if self.blocks[0].t_start != 1:
            raise NetworkError("The first block must start at t=1")
        for prev, cur in zip(self.blocks, self.blocks[1:]):
            if cur.t_start != prev.t_end + 1:
                raise NetworkError(
                    f"Blocks [{prev.t_start},{prev.t_end}] and [{cur.t_start},{cur.t_end}] are not contiguous"
                )
        return self

    @property
    def t_star(self) -> int:
        return self.blocks[-1].t_end

    def block_at(self, t: int) -> NetworkBlock:
        if t < 1 or t > self.t_star:
            raise IndexError(f"Time step {t} is outside [1, {self.t_star}]")
        starts = [b.t_start for b in self.blocks]
        return self.blocks[bisect.bisect_right(starts, t) - 1]

    def at(self, t: int) -> FollowingNetwork:
        return self.block_at(t).network

    def __iter__(self) -> Iterator[NetworkBlock]:
        return iter(self.blocks)

    def __len__(self):
        return len(self.blocks)

    @property
    def sigma(self) -> float:
        return self.blocks[0].network.sigma

    def to_dict(self) -> List[Dict]:
        return [
            {"t_start": b.t_start, "t_end": b.t_end, "edges": b.network.edges}
            for b in self.blocks
        ]

    def to_json(self, path: Union[str, pathlib.Path]):
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(
                {"ids": self.ids, "sigma": self.sigma, "omega": self.omega, "blocks": self.to_dict()}, f, indent=2
            )

    @classmethod
    def from_json(cls, path: Union[str, pathlib.Path]) -> "DynamicNetwork":
        with open(path) as f:
            data = json.load(f)

        ids = [str(i) for i in data["ids"]]
        sigma = data.get("sigma", 0.5)
        blocks = [
            NetworkBlock(
                t_start=b["t_start"],
                t_end=b["t_end"],
                network=FollowingNetwork.from_edges(ids, b["edges"], sigma=sigma),
            )
            for b in data["blocks"]
        ]
        return cls(ids=ids, blocks=blocks, omega=data.get("omega"))


def _network_from_scores(ids: List[str], scores: np.ndarray, sigma: float) -> FollowingNetwork:
    # scores[i, j] >= sigma: j follows i; the antisymmetric counterpart puts i -> j
    # for scores <= -sigma, so thresholding the transpose covers both branches.
    adjacency = np.where(scores.T >= sigma, np.abs(scores.T), 0.0)
    np.fill_diagonal(adjacency, 0.0)
    return FollowingNetwork(ids=ids, adjacency=adjacency, sigma=sigma)


def _check_sigma(sigma: float):
    if not 0 < sigma <= 1:
        raise NetworkError(f"sigma must lie in (0, 1], got {sigma}")


def create_following_network(
    q: Dataset,
    sigma: float = 0.5,
    band: Optional[int] = None,
    use_displacement: bool = True,
) -> FollowingNetwork:
    """
    Static following network of a dataset (one pairwise DTW per i < j).

    Args:
        q: Dataset restricted to the window of interest.
        sigma: Minimum |s| for an edge.
        band: Sakoe-Chiba band; defaults to the time shift implied by the
            dataset length.
        use_displacement: Align per-step displacements instead of raw values.
    """
    network, _ = _window_network(q, sigma, band, use_displacement)
    return network


def _window_network(q: Dataset, sigma: float, band: Optional[int], use_displacement: bool):
    if q.n < 2:
        raise NetworkError(f"A following network needs at least 2 series, got {q.n}")
    _check_sigma(sigma)

    band = default_delta(q.t_star) if band is None else band
    values = displacement(q).values if use_displacement else q.values
    scores, _ = pairwise_scores(values, band)
    return _network_from_scores(q.ids, scores, sigma), np.abs(scores)


def create_dynamic_network(
    u: Dataset,
    omega: int,
    delta: Optional[int] = None,
    sigma: float = 0.5,
    band: Optional[int] = None,
    use_displacement: bool = True,
    threads: int = 1,
) -> DynamicNetwork:
    """
    Dynamic following network over sliding windows.

    Window w(i) fills steps (i-1)δ+1 .. iδ; the tail window fills Kδ+1 .. t*.
    Windows are independent and may be evaluated on a thread pool; blocks are
    assembled in window order so the output does not depend on `threads`.
    """
    if u.n < 2:
        raise NetworkError(f"A following network needs at least 2 series, got {u.n}")
    _check_sigma(sigma)

    delta = default_delta(omega) if delta is None else delta
    band = delta if band is None else band
    windows = sliding_windows(u.t_star, omega, delta)

    # Differencing once over the whole series keeps the first step of each
    # window tied to its predecessor.
    source = displacement(u) if use_displacement else u
    logger.info(
        f"Building dynamic network: n={u.n}, t*={u.t_star}, omega={omega}, delta={delta}, "
        f"band={band}, {len(windows)} windows"
    )

    def build(window: Window):
        q = slice_dataset(source, window)
        return _window_network(q, sigma, band, use_displacement=False)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(build, windows))
    else:
        results = [build(w) for w in windows]

    blocks = []
    for window, (network, similarity) in zip(windows, results):
        t_start = (window.index - 1) * delta + 1
        t_end = window.index * delta if window is not windows[-1] else u.t_star
        blocks.append(
            NetworkBlock(t_start=t_start, t_end=t_end, network=network, similarity=similarity)
        )

    return DynamicNetwork(ids=u.ids, blocks=blocks, omega=omega)
