import json
import pathlib
from typing import Dict, Iterable, List, Literal, Optional, Union

import numpy as np
from loguru import logger
from natsort import natsorted
from pydantic import BaseModel, ConfigDict, Field, model_validator

from leadnado.core import Dataset, default_delta
from leadnado.factions import FactionTimeline, find_factions_and_initiators
from leadnado.network import DynamicNetwork, create_dynamic_network

RESIDUAL = "__residual__"


class ClusteringError(ValueError):
    pass


class Clustering(BaseModel):
    """Assignment of every id to exactly one cluster label."""

    model_config = ConfigDict(frozen=True)

    ids: List[str]
    labels: List[str]

    @model_validator(mode="after")
    def check_lengths(self):
        if len(self.ids) != len(self.labels):
            raise ClusteringError(f"{len(self.ids)} ids but {len(self.labels)} labels")
        if len(set(self.ids)) != len(self.ids):
            raise ClusteringError("Clustering ids must be unique")
        return self

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[str]], ids: Optional[List[str]] = None) -> "Clustering":
        """
        Build a clustering from explicit groups. Ids listed in `ids` but in no
        group become singletons.
        """
        label_of: Dict[str, str] = {}
        for k, group in enumerate(groups):
            for member in group:
                if member in label_of:
                    raise ClusteringError(f"{member} appears in more than one group")
                label_of[member] = f"c{k}"

        ids = natsorted(label_of) if ids is None else list(ids)
        labels = [label_of.get(i, f"s:{i}") for i in ids]
        return cls(ids=ids, labels=labels)

    @property
    def groups(self) -> Dict[str, List[str]]:
        out: Dict[str, List[str]] = {}
        for i, label in zip(self.ids, self.labels):
            out.setdefault(label, []).append(i)
        return out

    @property
    def indicator(self) -> np.ndarray:
        labels = np.asarray(self.labels, dtype=str)
        return labels[:, np.newaxis] == labels[np.newaxis, :]


class CandidateScore(BaseModel):
    omega: int
    psi_hat: float


class WindowSweepResult(BaseModel):
    candidates: List[CandidateScore]
    chosen: int

    @model_validator(mode="after")
    def check_chosen(self):
        if self.chosen not in {c.omega for c in self.candidates}:
            raise ValueError(f"Chosen window {self.chosen} is not a candidate")
        return self

    def to_json(self, path: Union[str, pathlib.Path]):
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.model_dump(), f, indent=2)


def coordination_measure(clustering: Clustering, sim: np.ndarray) -> float:
    """
    Average within-cluster similarity over ordered pairs i != j.

    All-singleton clusterings have no within-cluster pairs and score 0.
    """
    sim = np.asarray(sim, dtype=np.float64)
    n = len(clustering.ids)
    if sim.shape != (n, n):
        raise ClusteringError(f"Similarity matrix shape {sim.shape} does not match {n} ids")

    same = clustering.indicator
    np.fill_diagonal(same, False)
    denominator = same.sum()
    if denominator == 0:
        return 0.0
    return float(sim[same].sum() / denominator)


def _step_clustering(ids: List[str], assignment: Dict[str, str]) -> Clustering:
    return Clustering(ids=ids, labels=[assignment.get(i, RESIDUAL) for i in ids])


def per_step_measure(dyn: DynamicNetwork, timeline: FactionTimeline) -> np.ndarray:
    """
    Coordination measure at every step: each faction is a cluster and all
    individuals outside factions form one residual cluster.
    """
    if timeline.t_star != dyn.t_star:
        raise ValueError(f"Timeline covers {timeline.t_star} steps, network {dyn.t_star}")

    psi = np.empty(dyn.t_star)
    for block in dyn:
        if block.similarity is None:
            raise ValueError(f"Block [{block.t_start}, {block.t_end}] carries no similarity matrix")
        for t in range(block.t_start, block.t_end + 1):
            clustering = _step_clustering(dyn.ids, timeline.assignment[t - 1])
            psi[t - 1] = coordination_measure(clustering, block.similarity)
    return psi


def default_candidates(t_star: int) -> List[int]:
    raw = [int(np.floor(t_star / k + 0.5)) for k in (80, 40, 20, 10)]
    return sorted({min(max(w, 10), t_star) for w in raw})


def infer_window(
    u: Dataset,
    candidates: Optional[List[int]] = None,
    sigma: float = 0.5,
    band: Optional[int] = None,
    use_displacement: bool = True,
    threads: int = 1,
) -> WindowSweepResult:
    """
    Choose the window length that maximises the median per-step coordination
    measure. Ties go to the smallest window.
    """
    candidates = default_candidates(u.t_star) if candidates is None else list(candidates)
    if not candidates:
        raise ValueError("At least one candidate window length is required")

    scores = []
    for omega in sorted(set(candidates)):
        dyn = create_dynamic_network(
            u,
            omega=omega,
            delta=default_delta(omega),
            sigma=sigma,
            band=band,
            use_displacement=use_displacement,
            threads=threads,
        )
        timeline = find_factions_and_initiators(dyn)
        psi_hat = float(np.median(per_step_measure(dyn, timeline)))
        logger.info(f"omega={omega}: median coordination {psi_hat:.4f}")
        scores.append(CandidateScore(omega=omega, psi_hat=psi_hat))

    best = max(s.psi_hat for s in scores)
    chosen = next(s.omega for s in scores if s.psi_hat == best)
    logger.info(f"Selected omega={chosen}")
    return WindowSweepResult(candidates=scores, chosen=chosen)


def _fresh_label(labels: List[str]) -> str:
    taken = set(labels)
    k = len(taken)
    while f"c{k}" in taken:
        k += 1
    return f"c{k}"


def perturb_clustering(
    clustering: Clustering,
    kind: Literal["swap", "split", "merge"],
    seed: Union[int, np.random.Generator, None] = None,
) -> Clustering:
    """
    Apply one random perturbation:

    - swap: exchange one member between two clusters
    - split: cut a cluster of two or more members into two non-empty parts
    - merge: join two clusters
    """
    rng = np.random.default_rng(seed)
    labels = list(clustering.labels)
    groups = clustering.groups
    names = list(groups)

    if kind in ("swap", "merge"):
        if len(names) < 2:
            raise ClusteringError(f"Cannot {kind} a clustering with fewer than 2 clusters")
        a, b = rng.choice(len(names), size=2, replace=False)
        first, second = groups[names[a]], groups[names[b]]

        if kind == "swap":
            x = clustering.ids.index(first[rng.integers(len(first))])
            y = clustering.ids.index(second[rng.integers(len(second))])
            labels[x], labels[y] = labels[y], labels[x]
        else:
            labels = [names[a] if label == names[b] else label for label in labels]

    elif kind == "split":
        splittable = [name for name in names if len(groups[name]) >= 2]
        if not splittable:
            raise ClusteringError("Cannot split a clustering of singletons")
        name = splittable[rng.integers(len(splittable))]
        members = list(rng.permutation(groups[name]))
        cut = int(rng.integers(1, len(members)))
        new_label = _fresh_label(labels)
        for member in members[:cut]:
            labels[clustering.ids.index(member)] = new_label

    else:
        raise ClusteringError(f"Unknown perturbation {kind}")

    return Clustering(ids=clustering.ids, labels=labels)
