from typing import Set

import numpy as np
import pytest

from leadnado.evaluation import assignment_accuracy, leadership_f1, topk_rank_accuracy
from leadnado.factions import find_faction, find_factions_and_initiators
from leadnado.network import DynamicNetwork, create_dynamic_network
from leadnado.sim import GroundTruth, SimConfig, TruthStep, simulate

OMEGA = 50


def infer(config: SimConfig, omega: int = OMEGA):
    dataset, truth = simulate(config)
    dyn = create_dynamic_network(dataset, omega=omega, sigma=0.5)
    return dataset, truth, dyn, find_factions_and_initiators(dyn)


def window_end(dyn: DynamicNetwork, index: int, omega: int) -> int:
    # the tail window runs to the last step
    block = dyn.blocks[index]
    return dyn.t_star if index == len(dyn) - 1 else block.t_start + omega - 1


def settled_steps(dyn: DynamicNetwork, truth: GroundTruth, omega: int) -> Set[int]:
    """Steps whose block was built from a window inside one scripted configuration."""
    settled = set()
    for index, block in enumerate(dyn):
        first = truth.at(block.t_start).assignment
        end = window_end(dyn, index, omega)
        if all(truth.at(t).assignment == first for t in range(block.t_start + 1, end + 1)):
            settled.update(range(block.t_start, block.t_end + 1))
    return settled


def restrict(truth: GroundTruth, steps: Set[int]) -> GroundTruth:
    def blank(t):
        return TruthStep(t=t, assignment={i: None for i in truth.ids})

    return truth.model_copy(update={"steps": [s if s.t in steps else blank(s.t) for s in truth.steps]})


@pytest.mark.slow
@pytest.mark.parametrize(
    "model,event_type,min_f1,min_accuracy",
    [
        ("DM", "linear", 0.84, 0.79),
        ("DM", "merge_split", 0.84, 0.76),
        ("HM", "linear", 0.84, 0.84),
        ("HM", "merge_split", 0.85, 0.76),
    ],
)
def test_desk_scale_recovery(model, event_type, min_f1, min_accuracy):
    f1s, accuracies = [], []
    for seed in (1, 2, 3):
        _, truth, dyn, timeline = infer(SimConfig(model=model, event_type=event_type, seed=seed))
        settled = settled_steps(dyn, truth, OMEGA)
        assert len(settled) > truth.t_star / 2

        f1s.append(leadership_f1(timeline, restrict(truth, settled)))
        accuracies.append(
            np.median([assignment_accuracy(timeline, truth, t) for t in range(1, truth.t_star + 1)])
        )

    assert np.median(f1s) >= min_f1, f1s
    assert np.median(accuracies) >= min_accuracy, accuracies


@pytest.mark.slow
def test_hierarchy_top3_order():
    scores = []
    for seed in (1, 2, 3):
        _, truth, _, timeline = infer(SimConfig(model="HM", seed=seed))
        scores.append(topk_rank_accuracy(timeline, truth, k=3))
    assert np.median(scores) >= 0.60, scores


def test_merge_and_split_are_found_near_the_script():
    found = scripted = 0
    for seed in (1, 2):
        config = SimConfig(model="DM", event_type="merge_split", t_star=1600, events=2, seed=seed)
        _, truth, _, timeline = infer(config)
        assert len(timeline.events) <= 4 * config.events, timeline.events

        for script in truth.scripts:
            split_at, merge_at = script.phases[1][0].start, script.phases[2][0].start
            split = any(e.kind == "split" and abs(e.t - split_at) <= OMEGA for e in timeline.events)
            merge = any(e.kind == "merge" and abs(e.t - merge_at) <= OMEGA for e in timeline.events)
            found += split and merge
            scripted += 1

    assert found >= 3, f"{found} of {scripted} events recovered"


@pytest.mark.parametrize("seed", [1, 2])
def test_linear_events_have_no_merges_or_splits(seed):
    config = SimConfig(model="DM", t_star=1600, events=2, seed=seed)
    _, _, _, timeline = infer(config)
    assert len(timeline.events) <= config.events, timeline.events


def test_single_faction_windows_have_a_star_leader():
    config = SimConfig(model="DM", n=10, t_star=800, events=1, noise_std=0.0, seed=5)
    _, truth, dyn, _ = infer(config)

    checked = star = full = 0
    for index, block in enumerate(dyn):
        end = window_end(dyn, index, OMEGA)
        for faction in truth.scripts[0].factions:
            if not (faction.start <= block.t_start and end <= faction.end):
                continue
            net = block.network
            k = net.ids.index(faction.leader)
            checked += 1
            star += net.out_degree[k] == 0 and net.in_degree[k] == net.n - 1
            is_initiator = net.out_degree[k] == 0 and net.in_degree[k] > 0
            full += is_initiator and find_faction(net, faction.leader) == set(net.ids)

    assert checked > 50
    assert star / checked >= 0.95
    assert full / checked >= 0.95


def test_linear_event_intervals_follow_the_script():
    config = SimConfig(model="DM", t_star=800, events=1, seed=1)
    _, truth, _, timeline = infer(config)

    for faction in truth.scripts[0].factions:
        runs = [i for i in timeline.intervals if i.initiator == faction.leader]
        assert runs, f"no interval for {faction.leader}"
        assert all(faction.start - OMEGA <= i.start and i.end <= faction.end + OMEGA for i in runs)

        covered = {t for i in runs for t in range(i.start, i.end + 1)}
        assert set(range(faction.start + OMEGA, faction.end - OMEGA + 1)) <= covered
