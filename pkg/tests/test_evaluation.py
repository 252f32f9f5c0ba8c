import numpy as np
import pytest

from leadnado.evaluation import (
    CentralityComparison,
    DatasetReport,
    EvalReport,
    MEASURES,
    assignment_accuracy,
    centrality_comparison,
    evaluate_dataset,
    initiator_support,
    jaccard,
    leadership_f1,
    topk_rank_accuracy,
)
from leadnado.factions import FactionSnapshot, FactionTimeline
from leadnado.sim import GroundTruth, SimConfig, TruthStep, simulate

IDS = [str(i) for i in range(1, 11)]


@pytest.fixture(scope="function")
def truth() -> GroundTruth:
    steps = [
        TruthStep(
            t=t,
            assignment={i: "1" for i in IDS},
            leaders={"1": ["1"]},
            hierarchy={"1": IDS},
        )
        for t in range(1, 4)
    ]
    return GroundTruth(ids=IDS, model="HM", event_type="linear", scripts=[], steps=steps)


def timeline(assignments, ranks=None) -> FactionTimeline:
    ranks = ranks or {i: float(10 - k) for k, i in enumerate(IDS)}
    snapshots = []
    for t, assignment in enumerate(assignments, start=1):
        groups = {}
        for member, initiator in assignment.items():
            groups.setdefault(initiator, []).append(member)
        snapshots.append(
            [
                FactionSnapshot(
                    t=t,
                    initiator=initiator,
                    members=members,
                    size_ratio=0.0,
                    ranks={m: ranks[m] for m in members},
                )
                for initiator, members in groups.items()
                if len(members) >= 2
            ]
        )
    return FactionTimeline(ids=IDS, snapshots=snapshots, assignment=assignments)


def test_assignment_accuracy(truth):
    everyone = {i: "1" for i in IDS}
    one_off = dict(everyone, **{"10": "2"})
    predicted = timeline([everyone, one_off, {}])

    assert assignment_accuracy(predicted, truth, 1) == 1.0
    assert assignment_accuracy(predicted, truth, 2) == pytest.approx(0.9)
    assert assignment_accuracy(predicted, truth, 3) == 0.0


def test_unassigned_individuals_count_when_truth_agrees(truth):
    step = truth.steps[0].model_copy(update={"assignment": {i: None for i in IDS}, "leaders": {}})
    idle = truth.model_copy(update={"steps": [step] + truth.steps[1:]})
    assert assignment_accuracy(timeline([{}, {}, {}]), idle, 1) == 1.0


def test_leadership_f1_from_leader_sets(truth):
    assert leadership_f1([{"1"}, {"1", "2"}, set()], truth) == pytest.approx(2 / 3)


def test_leadership_f1_perfect(truth):
    assert leadership_f1(timeline([{i: "1" for i in IDS}] * 3), truth) == 1.0


def test_leadership_f1_needs_every_step(truth):
    with pytest.raises(ValueError):
        leadership_f1([{"1"}], truth)


def test_leadership_f1_without_factions():
    steps = [TruthStep(t=t, assignment={i: None for i in IDS}) for t in range(1, 3)]
    idle = GroundTruth(ids=IDS, model="DM", event_type="linear", scripts=[], steps=steps)
    assert leadership_f1([set(), set()], idle) == 0.0


def test_topk_rank_accuracy(truth):
    ranks = {i: float(10 - k) for k, i in enumerate(IDS)}
    ranks["4"], ranks["3"] = ranks["3"], ranks["4"]
    predicted = timeline([{i: "1" for i in IDS}] * 3, ranks=ranks)

    assert topk_rank_accuracy(predicted, truth, k=3) == pytest.approx(2 / 3)
    assert topk_rank_accuracy(predicted, truth, k=2) == 1.0
    assert topk_rank_accuracy(predicted, truth, k=11) is None


def test_prediction_must_cover_the_same_steps(truth):
    with pytest.raises(ValueError):
        assignment_accuracy(timeline([{}, {}]), truth, 1)


@pytest.mark.parametrize(
    "a,b,expected",
    [
        ({"1", "2"}, {"2", "3"}, 1 / 3),
        ({"1", "2", "3", "4"}, {"1", "2", "3", "4"}, 1.0),
        ({"1"}, {"2"}, 0.0),
        (set(), set(), 1.0),
    ],
)
def test_jaccard(a, b, expected):
    assert jaccard(a, b) == pytest.approx(expected)


def test_evaluate_dataset(truth):
    report = evaluate_dataset(timeline([{i: "1" for i in IDS}] * 3), truth, name="toy")
    assert (report.accuracy, report.f1, report.topk_accuracy) == (1.0, 1.0, 1.0)
    assert (report.model, report.event_type, report.method) == ("HM", "linear", "leadnado")


def test_report_aggregate_and_json(tmp_path):
    report = EvalReport(
        datasets=[
            DatasetReport(name="a", model="DM", event_type="linear", accuracy=0.8, f1=0.5),
            DatasetReport(name="b", model="DM", event_type="linear", accuracy=0.6, f1=1.0),
            DatasetReport(
                name="c", model="HM", event_type="linear", accuracy=1.0, f1=1.0, topk_accuracy=0.5
            ),
        ]
    )
    medians = report.aggregate().set_index("model")
    assert medians.loc["DM", "accuracy"] == pytest.approx(0.7)
    assert medians.loc["DM", "f1"] == pytest.approx(0.75)
    assert np.isnan(medians.loc["DM", "topk_accuracy"])
    assert medians.loc["HM", "topk_accuracy"] == pytest.approx(0.5)

    report.to_json(tmp_path / "report.json")
    assert EvalReport.from_json(tmp_path / "report.json") == report


def test_empty_report_aggregate():
    assert EvalReport().aggregate().empty


def test_initiator_support():
    comparisons = [
        CentralityComparison(top={"pagerank": ["1", "2"], "in_degree": ["5"]}, jaccard={}),
        CentralityComparison(top={"pagerank": ["1", "3"], "in_degree": ["1"]}, jaccard={}),
    ]
    support = initiator_support(comparisons)
    assert list(support.index) == ["1", "2", "3", "4"]
    assert support.loc["1", "pagerank"] == 1.0
    assert support.loc["2", "pagerank"] == 0.5
    assert support.loc["1", "in_degree"] == 0.5
    assert support.loc["4", "in_degree"] == 0.0


def test_centrality_comparison_shape():
    config = SimConfig(model="DM", n=10, t_star=160, events=2, event_length=80, seed=4)
    dataset, truth = simulate(config)
    comparison = centrality_comparison(dataset, truth, sigma=0.5)

    assert tuple(comparison.top) == MEASURES
    assert all(len(top) == 4 for top in comparison.top.values())
    assert all(0 <= j <= 1 for j in comparison.jaccard.values())


def test_centrality_comparison_subset_of_measures():
    config = SimConfig(model="DM", n=10, t_star=160, events=2, event_length=80, seed=4)
    dataset, truth = simulate(config)
    comparison = centrality_comparison(dataset, truth, measures=["closeness"])
    assert list(comparison.top) == ["closeness"]

    with pytest.raises(ValueError, match="Unknown centrality"):
        centrality_comparison(dataset, truth, measures=["betweenness"])
