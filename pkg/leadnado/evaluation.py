import json
import pathlib
from typing import Dict, List, Optional, Sequence, Set, Union

import networkx as nx
import numpy as np
import pandas as pd
from loguru import logger
from natsort import natsort_key, natsorted
from pydantic import BaseModel, Field

from leadnado.core import Dataset, default_delta
from leadnado.factions import FactionTimeline, pagerank
from leadnado.network import FollowingNetwork, create_following_network
from leadnado.sim import GroundTruth


def _in_degree(net: FollowingNetwork) -> Dict[str, float]:
    return dict(zip(net.ids, net.in_degree.astype(float).tolist()))


def _closeness(net: FollowingNetwork) -> Dict[str, float]:
    return nx.closeness_centrality(net.to_networkx())


CENTRALITY = {"pagerank": pagerank, "in_degree": _in_degree, "closeness": _closeness}
MEASURES = tuple(CENTRALITY)


def _check_ids(predicted: FactionTimeline, truth: GroundTruth):
    if set(predicted.ids) != set(truth.ids):
        raise ValueError("Prediction and ground truth cover different individuals")
    if predicted.t_star != truth.t_star:
        raise ValueError(
            f"Prediction covers {predicted.t_star} steps but ground truth covers {truth.t_star}"
        )


def assignment_accuracy(predicted: FactionTimeline, truth: GroundTruth, t: int) -> float:
    """
    Fraction of individuals whose predicted initiator is a leader (or informed
    individual) of their true faction at t. Individuals without a predicted
    faction are correct only when the truth leaves them unassigned too.
    """
    _check_ids(predicted, truth)
    step = truth.at(t)
    guesses = predicted.assignment[t - 1]

    correct = 0
    for id in truth.ids:
        label, guess = step.assignment.get(id), guesses.get(id)
        if label is None:
            correct += guess is None
        elif guess is not None:
            correct += guess in step.leaders.get(label, [])
    return correct / len(truth.ids)


def leadership_f1(
    predicted: Union[FactionTimeline, Sequence[Set[str]]], truth: GroundTruth
) -> float:
    """
    F1 of predicted leaders accumulated over all steps where the truth has
    factions.

    A predicted leader is a true positive when it is a leader (or informed
    individual) of its own true faction; a true faction with no such predicted
    leader is a false negative.
    """
    if isinstance(predicted, FactionTimeline):
        _check_ids(predicted, truth)
        leaders = [predicted.leaders_at(t) for t in range(1, predicted.t_star + 1)]
    else:
        leaders = [set(ls) for ls in predicted]
        if len(leaders) != truth.t_star:
            raise ValueError(f"{len(leaders)} predicted steps for {truth.t_star} true steps")

    tp = fp = fn = 0
    for t, guessed in enumerate(leaders, start=1):
        if not truth.has_factions(t):
            continue
        step = truth.at(t)
        covered = set()
        for l in guessed:
            label = step.assignment.get(l)
            if label is not None and l in step.leaders.get(label, []):
                tp += 1
                covered.add(label)
            else:
                fp += 1
        fn += len(set(step.leaders) - covered)

    if tp + fp + fn == 0:
        logger.warning("No steps with factions to evaluate; F1 is reported as 0")
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def topk_rank_accuracy(
    predicted: FactionTimeline, truth: GroundTruth, k: int = 3
) -> Optional[float]:
    """
    Median over snapshots of |top-k predicted ∩ top-k of the true hierarchy| / k.

    Snapshots whose faction or true hierarchy is smaller than k are skipped;
    returns None when nothing could be scored.
    """
    _check_ids(predicted, truth)
    values = []
    for t in range(1, truth.t_star + 1):
        step = truth.at(t)
        if not step.hierarchy:
            continue
        for snapshot in predicted.at(t):
            label = step.assignment.get(snapshot.initiator)
            hierarchy = step.hierarchy.get(label) if label is not None else None
            if hierarchy is None or len(hierarchy) < k or len(snapshot.members) < k:
                continue
            top = set(snapshot.ranked_members[:k])
            values.append(len(top & set(hierarchy[:k])) / k)

    if not values:
        logger.warning(f"No snapshot could be scored for top-{k} rank accuracy")
        return None
    return float(np.median(values))


class DatasetReport(BaseModel):
    name: str
    model: str
    event_type: str
    method: str = "leadnado"
    accuracy: float = Field(ge=0, le=1)
    f1: float = Field(ge=0, le=1)
    topk_accuracy: Optional[float] = Field(default=None, ge=0, le=1)


class EvalReport(BaseModel):
    datasets: List[DatasetReport] = Field(default_factory=list)

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(
            [d.model_dump() for d in self.datasets], columns=list(DatasetReport.model_fields)
        )
        return df.assign(topk_accuracy=pd.to_numeric(df["topk_accuracy"]))

    def aggregate(self) -> pd.DataFrame:
        """Median of every metric per model, event type and method."""
        df = self.to_dataframe()
        if df.empty:
            return df
        return (
            df.groupby(["model", "event_type", "method"])[["accuracy", "f1", "topk_accuracy"]]
            .median()
            .reset_index()
        )

    def to_json(self, path: Union[str, pathlib.Path]):
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        aggregates = self.aggregate()
        with open(path, "w") as f:
            json.dump(
                {
                    "datasets": [d.model_dump() for d in self.datasets],
                    "aggregates": json.loads(aggregates.to_json(orient="records")),
                },
                f,
                indent=2,
            )

    @classmethod
    def from_json(cls, path: Union[str, pathlib.Path]) -> "EvalReport":
        with open(path) as f:
            data = json.load(f)
        return cls(datasets=[DatasetReport(**d) for d in data["datasets"]])


def evaluate_dataset(
    predicted: FactionTimeline,
    truth: GroundTruth,
    name: str = "dataset",
    method: str = "leadnado",
    k: int = 3,
) -> DatasetReport:
    accuracy = float(
        np.median([assignment_accuracy(predicted, truth, t) for t in range(1, truth.t_star + 1)])
    )
    has_hierarchy = any(step.hierarchy for step in truth.steps)
    report = DatasetReport(
        name=name,
        model=truth.model,
        event_type=truth.event_type,
        method=method,
        accuracy=accuracy,
        f1=leadership_f1(predicted, truth),
        topk_accuracy=topk_rank_accuracy(predicted, truth, k=k) if has_hierarchy else None,
    )
    logger.info(
        f"{name} [{method}]: accuracy={report.accuracy:.3f} f1={report.f1:.3f} topk={report.topk_accuracy}"
    )
    return report


class CentralityComparison(BaseModel):
    top: Dict[str, List[str]]
    jaccard: Dict[str, float]


def jaccard(a: Set[str], b: Set[str]) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def _top(scores: Dict[str, float], size: int) -> List[str]:
    return sorted(scores, key=lambda i: (-scores[i], natsort_key(i)))[:size]


def centrality_comparison(
    u: Dataset,
    truth: GroundTruth,
    sigma: float = 0.5,
    band: Optional[int] = None,
    use_displacement: bool = True,
    size: int = 4,
    measures: Sequence[str] = MEASURES,
) -> CentralityComparison:
    """
    Compare centrality measures on one global following network: the top
    `size` individuals of each measure against the true initiators.
    """
    unknown = [m for m in measures if m not in CENTRALITY]
    if unknown:
        raise ValueError(f"Unknown centrality measures {unknown}, choose from {list(MEASURES)}")

    band = default_delta(u.t_star) if band is None else band
    net = create_following_network(u, sigma=sigma, band=band, use_displacement=use_displacement)

    scores = {measure: CENTRALITY[measure](net) for measure in measures}
    top = {measure: _top(s, size) for measure, s in scores.items()}
    return CentralityComparison(
        top=top,
        jaccard={measure: jaccard(set(t), truth.initiators) for measure, t in top.items()},
    )


def initiator_support(
    comparisons: List[CentralityComparison], initiators: Optional[Set[str]] = None
) -> pd.DataFrame:
    """
    Fraction of datasets in which each initiator appears in each measure's top
    list. Rows are initiators, columns are measures.
    """
    if not comparisons:
        raise ValueError("At least one centrality comparison is required")
    if initiators is None:
        initiators = {"1", "2", "3", "4"}

    rows = []
    for initiator in natsorted(initiators):
        row = {"initiator": initiator}
        for measure in comparisons[0].top:
            row[measure] = float(np.mean([initiator in c.top[measure] for c in comparisons]))
        rows.append(row)
    return pd.DataFrame(rows).set_index("initiator")
