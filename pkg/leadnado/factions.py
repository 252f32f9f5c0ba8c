import json
import pathlib
from itertools import groupby
from typing import Dict, List, Literal, Optional, Set, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
import pandera
from loguru import logger
from natsort import natsort_key, natsorted
from pandera.typing import DataFrame, Series
from pydantic import BaseModel, ConfigDict, Field, model_validator

from leadnado.network import DynamicNetwork, FollowingNetwork


class FactionError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class SizeRatioSchema(pandera.DataFrameModel):
    t: Series[int] = pandera.Field(ge=1, coerce=True)
    initiator: Series[str] = pandera.Field(coerce=True)
    faction_size_ratio: Series[float] = pandera.Field(ge=0, le=1, coerce=True)


class FactionSnapshot(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: int = Field(ge=1)
    initiator: str
    members: List[str]
    size_ratio: float = Field(ge=0, le=1)
    ranks: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_members(self):
        if len(self.members) < 2:
            raise FactionError(f"Faction of {self.initiator} at t={self.t} has fewer than 2 members")
        if self.initiator not in self.members:
            raise FactionError(f"Initiator {self.initiator} is not a member of its faction")
        return self

    @property
    def ranked_members(self) -> List[str]:
        """Members by descending score, ties by natural id order."""
        return sorted(
            self.members,
            key=lambda m: (-self.ranks.get(m, 0.0), natsort_key(m)),
        )


class FactionInterval(BaseModel):
    model_config = ConfigDict(frozen=True)

    initiator: str
    start: int = Field(ge=1)
    end: int = Field(ge=1)


class MergeSplitEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: int
    kind: Literal["merge", "split"]
    initiators_before: List[str]
    initiators_after: List[str]


class FactionTimeline(BaseModel):
    """
    Factions per time step, the single assignment of individuals to initiators
    per step, and the consolidated intervals.

    `snapshots[t - 1]` and `assignment[t - 1]` describe step t.
    """

    ids: List[str]
    snapshots: List[List[FactionSnapshot]]
    assignment: List[Dict[str, str]]
    intervals: List[FactionInterval] = Field(default_factory=list)
    events: List[MergeSplitEvent] = Field(default_factory=list)

    @property
    def t_star(self) -> int:
        return len(self.snapshots)

    def at(self, t: int) -> List[FactionSnapshot]:
        return self.snapshots[t - 1]

    def leaders_at(self, t: int) -> Set[str]:
        return {s.initiator for s in self.snapshots[t - 1]}

    def groups_at(self, t: int) -> Dict[str, Set[str]]:
        groups: Dict[str, Set[str]] = {}
        for member, initiator in self.assignment[t - 1].items():
            groups.setdefault(initiator, set()).add(member)
        return groups

    def to_dict(self) -> Dict:
        return {
            "ids": self.ids,
            "snapshots": [
                {
                    "t": t,
                    "factions": [
                        s.model_dump(include={"initiator", "members", "size_ratio", "ranks"})
                        for s in snaps
                    ],
                    "assignment": self.assignment[t - 1],
                }
                for t, snaps in enumerate(self.snapshots, start=1)
            ],
            "intervals": [i.model_dump() for i in self.intervals],
            "events": [e.model_dump() for e in self.events],
        }

    def to_json(self, path: Union[str, pathlib.Path]):
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_dict(cls, data: Dict) -> "FactionTimeline":
        snapshots = [
            [FactionSnapshot(t=step["t"], **f) for f in step["factions"]]
            for step in data["snapshots"]
        ]
        return cls(
            ids=data["ids"],
            snapshots=snapshots,
            assignment=[step.get("assignment", {}) for step in data["snapshots"]],
            intervals=[FactionInterval(**i) for i in data.get("intervals", [])],
            events=[MergeSplitEvent(**e) for e in data.get("events", [])],
        )

    @classmethod
    def from_json(cls, path: Union[str, pathlib.Path]) -> "FactionTimeline":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def find_initiators(net: FollowingNetwork) -> Set[str]:
    """Nodes with out-degree 0 that are followed by at least one node."""
    mask = (net.out_degree == 0) & (net.in_degree >= 1)
    return {net.ids[k] for k in np.flatnonzero(mask)}


def find_faction(net: FollowingNetwork, initiator: str) -> Set[str]:
    """All nodes with a directed path to the initiator, plus the initiator."""
    if initiator not in find_initiators(net):
        raise FactionError(f"{initiator} is not an initiator of this network")
    return nx.ancestors(net.to_networkx(), initiator) | {initiator}


def assign_individuals(net: FollowingNetwork, factions: Dict[str, Set[str]]) -> Dict[str, str]:
    """
    Map each faction member to exactly one initiator.

    A node reaching several initiators goes to the faction whose initiator it
    reaches through its highest-weight outgoing edge into that faction; ties go
    to the initiator first in natural id order.
    """
    index = {id: k for k, id in enumerate(net.ids)}
    assignment: Dict[str, str] = {}

    for initiator in natsorted(factions):
        assignment[initiator] = initiator

    best: Dict[str, float] = {}
    for initiator in natsorted(factions):
        members = factions[initiator]
        cols = [index[m] for m in members]
        for node in members:
            if node in factions:
                continue
            weight = float(net.adjacency[index[node], cols].max())
            if node not in best or weight > best[node]:
                best[node] = weight
                assignment[node] = initiator

    return assignment


def faction_size_ratio(net: FollowingNetwork, faction: Set[str]) -> float:
    """Induced edge count of the faction over C(n, 2)."""
    if net.n < 2:
        return 0.0
    idx = [net.ids.index(m) for m in faction]
    induced = int((net.adjacency[np.ix_(idx, idx)] > 0).sum())
    return induced / (net.n * (net.n - 1) / 2)


def pagerank(
    net: FollowingNetwork,
    d: float = 0.9,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> Dict[str, float]:
    """
    Weighted PageRank with unnormalized teleport term:

        pi_i = d * sum_{k -> i} E[k, i] * pi_k / outdeg(k) + (1 - d)

    Iterates from all-ones until the largest absolute change is below `tol`.
    """
    if not 0 < d < 1:
        raise ValueError(f"Damping factor must lie in (0, 1), got {d}")

    a = net.adjacency
    outdeg = (a > 0).sum(axis=1).astype(np.float64)
    transition = (a / np.where(outdeg > 0, outdeg, 1.0)[:, np.newaxis]).T

    scores = np.ones(net.n)
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        updated = d * transition @ scores + (1 - d)
        residual = float(np.abs(updated - scores).max())
        scores = updated
        if residual < tol:
            logger.trace(f"PageRank converged after {iteration} iterations")
            return dict(zip(net.ids, scores.tolist()))

    raise ConvergenceError(
        f"PageRank did not converge after {max_iter} iterations (residual {residual:.3e})"
    )


def _block_snapshots(net: FollowingNetwork, damping: float):
    initiators = natsorted(find_initiators(net))
    if not initiators:
        return [], {}

    g = net.to_networkx()
    factions = {l: nx.ancestors(g, l) | {l} for l in initiators}
    scores = pagerank(net, d=damping)
    snapshots = [
        dict(
            initiator=l,
            members=natsorted(factions[l]),
            size_ratio=faction_size_ratio(net, factions[l]),
            ranks={m: scores[m] for m in factions[l]},
        )
        for l in initiators
    ]
    return snapshots, assign_individuals(net, factions)


def _intervals(leaders: List[Set[str]]) -> List[FactionInterval]:
    intervals = []
    for initiator in natsorted(set().union(*leaders)):
        steps = [t for t, ls in enumerate(leaders, start=1) if initiator in ls]
        # consecutive steps share the same (t - position) key
        for _, run in groupby(enumerate(steps), key=lambda x: x[1] - x[0]):
            run = [t for _, t in run]
            intervals.append(FactionInterval(initiator=initiator, start=run[0], end=run[-1]))
    return sorted(intervals, key=lambda i: (i.start, natsort_key(i.initiator)))


def find_factions_and_initiators(
    dyn: DynamicNetwork, damping: float = 0.9, min_duration: Optional[int] = None
) -> FactionTimeline:
    """
    Factions, initiators and intervals for every time step of a dynamic network.

    Snapshots are computed once per block and repeated for each step of it.
    Merge/split events compare configurations that last at least `min_duration`
    steps, by default the window length the network was built with.
    """
    if min_duration is None:
        min_duration = dyn.omega or 1

    snapshots: List[List[FactionSnapshot]] = []
    assignment: List[Dict[str, str]] = []

    for block in dyn:
        snaps, assign = _block_snapshots(block.network, damping)
        for t in range(block.t_start, block.t_end + 1):
            snapshots.append([FactionSnapshot(t=t, **s) for s in snaps])
            assignment.append(assign)

    timeline = FactionTimeline(
        ids=dyn.ids,
        snapshots=snapshots,
        assignment=assignment,
        intervals=_intervals([{s.initiator for s in snaps} for snaps in snapshots]),
    )
    events = detect_merge_split(timeline, min_duration=min_duration)
    timeline = timeline.model_copy(update={"events": events})
    logger.info(
        f"Found {len(timeline.intervals)} faction intervals and {len(timeline.events)} merge/split events"
    )
    return timeline


def rank_within_factions(
    timeline: FactionTimeline, dyn: Optional[DynamicNetwork] = None, damping: float = 0.9
) -> Dict[int, Dict[str, List[str]]]:
    """
    Members of every snapshot ordered by whole-network PageRank.

    Returns {t: {initiator: ordered members}}. When `dyn` is given, scores are
    recomputed from its blocks; otherwise the scores stored in the snapshots
    are used.
    """
    ranked: Dict[int, Dict[str, List[str]]] = {}
    cache: Dict[int, Dict[str, float]] = {}

    for t, snaps in enumerate(timeline.snapshots, start=1):
        if dyn is not None and snaps:
            block = dyn.block_at(t)
            if block.t_start not in cache:
                cache[block.t_start] = pagerank(block.network, d=damping)
            scores = cache[block.t_start]
            ranked[t] = {
                s.initiator: sorted(s.members, key=lambda m: (-scores[m], natsort_key(m)))
                for s in snaps
            }
        else:
            ranked[t] = {s.initiator: s.ranked_members for s in snaps}

    return ranked


def size_ratio_trace(timeline: FactionTimeline) -> DataFrame[SizeRatioSchema]:
    rows = [
        {"t": t, "initiator": s.initiator, "faction_size_ratio": s.size_ratio}
        for t, snaps in enumerate(timeline.snapshots, start=1)
        for s in snaps
    ]
    df = pd.DataFrame(rows, columns=["t", "initiator", "faction_size_ratio"])
    return SizeRatioSchema.validate(df)


def _flows(before: Dict[str, Set[str]], after: Dict[str, Set[str]], min_overlap: int):
    for source in natsorted(before):
        targets = [
            target
            for target in natsorted(after)
            if len(before[source] & after[target]) >= min_overlap
        ]
        if len(targets) >= 2:
            yield source, targets


def _settled_pairs(keys: List[frozenset], min_duration: int) -> List[Tuple[int, int]]:
    # (last step of a settled run, first step of the next settled run)
    runs = []
    for _, run in groupby(enumerate(keys, start=1), key=lambda x: x[1]):
        run = [t for t, _ in run]
        if len(run) >= min_duration:
            runs.append((run[0], run[-1]))
    return [(prev[1], cur[0]) for prev, cur in zip(runs, runs[1:])]


def detect_merge_split(
    timeline: FactionTimeline, min_overlap: int = 2, min_duration: int = 1
) -> List[MergeSplitEvent]:
    """
    Splits and merges of the single-assignment groups.

    A split is reported at t when one group before t shares at least
    `min_overlap` members with each of two or more groups at t; a merge is the
    mirror case. With `min_duration` 1 every pair of consecutive steps is
    compared. Otherwise only settled configurations are compared: runs of
    steps with the same initiators lasting at least `min_duration` steps.
    Each settled run is compared with the previous one and events are dated
    at its first step; shorter runs in between are transitions.
    """
    if min_duration < 1:
        raise ValueError(f"min_duration must be >= 1, got {min_duration}")

    groups = [
        {k: v for k, v in timeline.groups_at(t).items() if len(v) >= min_overlap}
        for t in range(1, timeline.t_star + 1)
    ]
    if min_duration == 1:
        pairs = [
            (t - 1, t)
            for t in range(2, timeline.t_star + 1)
            if timeline.assignment[t - 1] != timeline.assignment[t - 2]
        ]
    else:
        pairs = _settled_pairs([frozenset(g) for g in groups], min_duration)

    events: List[MergeSplitEvent] = []
    for s, t in pairs:
        before, after = groups[s - 1], groups[t - 1]
        for source, targets in _flows(before, after, min_overlap):
            events.append(
                MergeSplitEvent(t=t, kind="split", initiators_before=[source], initiators_after=targets)
            )
        for target, sources in _flows(after, before, min_overlap):
            events.append(
                MergeSplitEvent(t=t, kind="merge", initiators_before=sources, initiators_after=[target])
            )

    return events
