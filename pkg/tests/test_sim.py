import numpy as np
import pytest
import yaml

from leadnado.sim import HM_LINK_LAG, GroundTruth, SimConfig, event_script, save_simulation, simulate


def small_config(**kwargs) -> SimConfig:
    options = dict(n=10, t_star=160, events=2, event_length=80, seed=42)
    options.update(kwargs)
    return SimConfig(**options)


def test_linear_script_boundaries():
    script = event_script("linear", 0)
    spans = [(f.start, f.end, f.leader) for f in script.factions]
    assert spans == [(1, 200, "1"), (201, 400, "2"), (401, 600, "3"), (601, 700, "4")]
    assert script.stopped == (701, 800)
    assert all(len(f.members) == 30 for f in script.factions)
    assert [f.stop for f in script.factions] == [False, False, False, True]


def test_later_events_are_offset():
    first, second = event_script("linear", 0), event_script("linear", 1)
    for a, b in zip(first.factions, second.factions):
        assert (b.start, b.end) == (a.start + 800, a.end + 800)
    assert second.stopped == (1501, 1600)


def test_merge_split_script():
    script = event_script("merge_split", 0)
    phases = script.phases
    assert [len(p) for p in phases] == [1, 3, 1, 1]

    split = phases[1]
    assert [f.leader for f in split] == ["2", "3", "4"]
    assert all(len(f.members) == 10 for f in split)
    members = [m for f in split for m in f.members]
    assert len(members) == len(set(members)) == 30
    assert "1" in split[0].members, "the former leader joins the first third"
    assert split[0].members[:3] == ["2", "1", "5"]

    assert phases[2][0].leader == "3"
    assert phases[3][0].leader == "4" and phases[3][0].stop


def test_script_rejects_bad_length():
    with pytest.raises(ValueError):
        event_script("linear", 0, event_length=100)


@pytest.mark.parametrize(
    "options",
    [
        dict(model="IC"),
        dict(model="IC", ic_k=3),
        dict(model="DM", ic_k=3, ic_rho=0.5),
        dict(model="IC", ic_k=4, ic_rho=0.5),
        dict(model="IC", ic_k=3, ic_rho=0.3),
        dict(model="DM", event_length=100),
        dict(model="DM", events=3),
        dict(model="CM", cm_informed=11),
        dict(model="DM", n=5),
    ],
)
def test_config_validation(options):
    with pytest.raises(ValueError):
        small_config(**options)


def test_default_noise_scales_with_speed():
    assert small_config(model="DM", speed=2.0).effective_noise_std == pytest.approx(0.1)
    assert small_config(model="DM", noise_std=0.0).effective_noise_std == 0.0


@pytest.mark.parametrize(
    "options",
    [
        dict(model="DM"),
        dict(model="HM"),
        dict(model="CM"),
        dict(model="IC", ic_k=3, ic_rho=0.5),
        dict(model="HM", event_type="merge_split"),
    ],
)
def test_simulation_shapes_and_determinism(options):
    config = small_config(**options)
    dataset, truth = simulate(config)
    again, _ = simulate(config)

    assert dataset.values.shape == (10, 160, 2)
    assert np.all(np.isfinite(dataset.values))
    assert dataset.ids == [str(i) for i in range(1, 11)]
    assert truth.t_star == 160
    np.testing.assert_array_equal(dataset.values, again.values)


def test_seed_changes_the_trajectories():
    a, _ = simulate(small_config(model="DM", seed=1))
    b, _ = simulate(small_config(model="DM", seed=2))
    assert not np.array_equal(a.values, b.values)


def test_nobody_moves_while_stopped():
    dataset, truth = simulate(small_config(model="DM"))
    first, last = truth.scripts[0].stopped
    window = dataset.values[:, first - 2 : last]
    assert np.all(window == window[:, :1])
    assert not truth.has_factions(first)
    assert truth.has_factions(first - 1)


def test_noiseless_dm_followers_copy_the_leader():
    dataset, _ = simulate(small_config(model="DM", noise_std=0.0))
    steps = np.diff(dataset.values, axis=1, prepend=dataset.values[:, :1])

    # phase one runs over steps 1..20 with leader "1"
    for member in ["2", "5", "7"]:
        k = dataset.index_of(member)
        lag = 1 + int(member) % 5
        for s in range(lag + 1, 20):
            np.testing.assert_allclose(steps[k, s], steps[0, s - lag], atol=1e-9)


def test_steering_turns_are_rate_limited():
    config = small_config(model="DM", noise_std=0.0)
    dataset, truth = simulate(config)
    steps = np.diff(dataset.values, axis=1, prepend=dataset.values[:, :1])

    checked = 0
    for script in truth.scripts:
        for faction in script.factions:
            k = dataset.index_of(faction.leader)
            for s in range(max(faction.start - 1, 1), faction.end):
                before, after = steps[k, s - 1], steps[k, s]
                if min(np.linalg.norm(before), np.linalg.norm(after)) < 1e-12:
                    continue
                turn = np.angle(complex(*after) / complex(*before))
                assert abs(turn) <= config.max_turn + 1e-9, f"{faction.leader} turned {turn:.3f} at s={s}"
                checked += 1
    assert checked > 100


def test_leader_pace_is_modulated():
    config = small_config(model="DM", noise_std=0.0, heading_std=0.0)
    dataset, _ = simulate(config)
    lengths = np.linalg.norm(np.diff(dataset.values[0, 1:20], axis=0), axis=1)
    assert lengths.max() <= config.speed * (1 + config.speed_modulation) + 1e-9
    assert lengths.max() - lengths.min() > 0.01


def test_noiseless_hm_follows_the_chain():
    dataset, truth = simulate(small_config(model="HM", noise_std=0.0))
    chain = truth.at(5).hierarchy["1"]
    assert chain == [str(i) for i in range(1, 11)]

    steps = np.diff(dataset.values, axis=1, prepend=dataset.values[:, :1])
    for previous, member in zip(chain, chain[1:]):
        j, k = dataset.index_of(previous), dataset.index_of(member)
        lag = HM_LINK_LAG
        np.testing.assert_allclose(steps[k, 1 + lag : 20], steps[j, 1 : 20 - lag], atol=1e-9)


def test_ic_activation_is_monotone():
    _, truth = simulate(small_config(model="IC", ic_k=3, ic_rho=0.5, seed=3))
    active = [
        sum(label is not None for label in truth.at(t).assignment.values()) for t in range(1, 71)
    ]
    assert active[0] >= 1
    assert all(b >= a for a, b in zip(active, active[1:]))


def test_cm_informed_individuals():
    _, truth = simulate(small_config(model="CM", cm_informed=3))
    informed = truth.at(10).leaders["1"]
    assert informed[0] == "1"
    assert len(informed) == len(set(informed)) == 3


def test_truth_labels_follow_the_script():
    _, truth = simulate(small_config(model="DM"))
    assert set(truth.at(1).assignment.values()) == {"1"}
    assert set(truth.at(21).assignment.values()) == {"2"}
    assert truth.at(81).leaders == {"1": ["1"]}
    assert truth.initiators == {"1", "2", "3", "4"}


def test_save_simulation(tmp_path):
    config = small_config(model="CM")
    dataset, truth = simulate(config)
    paths = save_simulation(dataset, truth, config, tmp_path / "sim")

    assert all(p.exists() for p in paths.values())
    with open(paths["manifest"]) as f:
        manifest = yaml.safe_load(f)
    assert manifest["model"] == "CM"
    assert manifest["seed"] == 42
    assert SimConfig(**manifest).model_dump() == config.model_dump()

    loaded = GroundTruth.from_json(paths["truth"])
    assert loaded.steps == truth.steps
    assert loaded.scripts == truth.scripts
