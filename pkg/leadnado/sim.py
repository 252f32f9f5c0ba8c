import json
import pathlib
from itertools import groupby
from typing import Dict, List, Literal, Optional, Set, Tuple, Union

import numpy as np
import yaml
from loguru import logger
from natsort import natsorted
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from leadnado.core import Dataset, save_dataset

Model = Literal["DM", "HM", "IC", "CM"]
EventType = Literal["linear", "merge_split"]

# HM members copy their predecessor in the chain this many steps later
HM_LINK_LAG = 1


class SimConfig(BaseModel):
    """
    Parameters for one simulated dataset.

    Every event lasts `event_length` steps: four scripted faction phases
    followed by an interval where everybody has stopped.

    Steering individuals oscillate slowly around the bearing to their target
    (`route_amplitude` radians) with a modulated pace, and turn at most
    `max_turn` radians per step.
    """

    model: Model
    event_type: EventType = "linear"
    n: int = Field(default=30, ge=6)
    t_star: int = Field(default=4000, ge=8)
    events: int = Field(default=5, ge=1)
    event_length: int = Field(default=800, ge=8)
    ic_k: Optional[Literal[3, 5, 10]] = None
    ic_rho: Optional[float] = None
    cm_informed: int = Field(default=3, ge=1)
    speed: float = Field(default=1.0, gt=0)
    noise_std: Optional[float] = Field(default=None, ge=0)
    heading_std: float = Field(default=0.04, ge=0)
    heading_persistence: float = Field(default=0.98, ge=0, lt=1)
    route_amplitude: float = Field(default=0.5, ge=0)
    speed_modulation: float = Field(default=0.25, ge=0, lt=1)
    max_turn: float = Field(default=0.1, gt=0)
    spread: float = Field(default=2.0, gt=0)
    seed: Optional[int] = None

    @field_validator("event_length")
    @classmethod
    def check_event_length(cls, v):
        if v % 8 != 0:
            raise ValueError(f"event_length must be divisible by 8, got {v}")
        return v

    @field_validator("ic_rho")
    @classmethod
    def check_rho(cls, v):
        if v is not None and v not in (0.25, 0.5, 0.75):
            raise ValueError(f"ic_rho must be one of 0.25, 0.5, 0.75, got {v}")
        return v

    @model_validator(mode="after")
    def check_consistency(self):
        if self.events * self.event_length > self.t_star:
            raise ValueError(
                f"{self.events} events of {self.event_length} steps do not fit in t*={self.t_star}"
            )
        is_ic = self.model == "IC"
        if is_ic and (self.ic_k is None or self.ic_rho is None):
            raise ValueError("ic_k and ic_rho are required for the IC model")
        if not is_ic and (self.ic_k is not None or self.ic_rho is not None):
            raise ValueError("ic_k and ic_rho are only valid for the IC model")
        if self.cm_informed > self.n:
            raise ValueError(f"cm_informed={self.cm_informed} exceeds n={self.n}")
        return self

    @computed_field
    @property
    def effective_noise_std(self) -> float:
        return 0.05 * self.speed if self.noise_std is None else self.noise_std

    @property
    def ids(self) -> List[str]:
        return [str(i) for i in range(1, self.n + 1)]


class ScriptedFaction(BaseModel):
    model_config = ConfigDict(frozen=True)

    start: int
    end: int
    leader: str
    members: List[str]
    stop: bool = False

    @property
    def duration(self) -> int:
        return self.end - self.start + 1


class EventScript(BaseModel):
    model_config = ConfigDict(frozen=True)

    event_type: EventType
    event_index: int
    factions: List[ScriptedFaction]
    stopped: Tuple[int, int]

    @property
    def phases(self) -> List[List[ScriptedFaction]]:
        return [list(g) for _, g in groupby(self.factions, key=lambda f: (f.start, f.end))]


def event_script(
    event_type: EventType, event_index: int, n: int = 30, event_length: int = 800
) -> EventScript:
    """
    Scripted factions of one coordination event.

    Phase boundaries fall at 1/4, 1/2, 3/4 and 7/8 of the event. Linear events
    pass leadership 1 -> 2 -> 3 -> 4 with everybody following; merge/split
    events split the group of 1 into three factions under 2, 3 and 4, merge
    them under 3, then stop under 4.
    """
    if event_type not in ("linear", "merge_split"):
        raise ValueError(f"Unknown event type {event_type}")
    if event_length % 8 != 0:
        raise ValueError(f"event_length must be divisible by 8, got {event_length}")

    ids = [str(i) for i in range(1, n + 1)]
    eighth = event_length // 8
    offsets = [0, 2 * eighth, 4 * eighth, 6 * eighth, 7 * eighth, 8 * eighth]
    base = event_index * event_length

    def span(k):
        return base + offsets[k] + 1, base + offsets[k + 1]

    def everyone(k, leader, stop=False):
        start, end = span(k)
        return ScriptedFaction(start=start, end=end, leader=leader, members=ids, stop=stop)

    if event_type == "linear":
        factions = [everyone(0, "1"), everyone(1, "2"), everyone(2, "3"), everyone(3, "4", stop=True)]
    else:
        start, end = span(1)
        others = [i for i in ids if i not in ("2", "3", "4")]
        split = [
            ScriptedFaction(start=start, end=end, leader=leader, members=[leader] + list(third))
            for leader, third in zip(("2", "3", "4"), np.array_split(others, 3))
        ]
        factions = [everyone(0, "1"), *split, everyone(2, "3"), everyone(3, "4", stop=True)]

    return EventScript(
        event_type=event_type, event_index=event_index, factions=factions, stopped=span(4)
    )


class TruthStep(BaseModel):
    t: int
    assignment: Dict[str, Optional[str]]
    leaders: Dict[str, List[str]] = Field(default_factory=dict)
    hierarchy: Dict[str, List[str]] = Field(default_factory=dict)


class GroundTruth(BaseModel):
    """
    Per-step faction labels of a simulated dataset.

    Faction labels are the scripted leader ids. `leaders` maps each label to
    its leader (DM, HM, IC) or its informed individuals (CM); `hierarchy` holds
    the follow order for HM.
    """

    ids: List[str]
    model: Model
    event_type: EventType
    scripts: List[EventScript]
    steps: List[TruthStep]

    @property
    def t_star(self) -> int:
        return len(self.steps)

    def at(self, t: int) -> TruthStep:
        return self.steps[t - 1]

    def has_factions(self, t: int) -> bool:
        return bool(self.steps[t - 1].leaders)

    @property
    def initiators(self) -> Set[str]:
        return {f.leader for s in self.scripts for f in s.factions}

    def to_json(self, path: Union[str, pathlib.Path]):
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(self.model_dump_json())

    @classmethod
    def from_json(cls, path: Union[str, pathlib.Path]) -> "GroundTruth":
        with open(path) as f:
            return cls.model_validate(json.load(f))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.zeros_like(v)


def _clip_norm(v: np.ndarray, limit: float) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v * (limit / norm) if norm > limit else v


class _Route:
    """Heading oscillation and pace shared by the steering members of one faction."""

    def __init__(self, rng: np.random.Generator, config: SimConfig):
        self.rng = rng
        self.config = config
        self.period = rng.uniform(120, 240)
        self.phase = rng.uniform(0, 2 * np.pi)
        self.pace_period = rng.uniform(60, 120)
        self.pace_phase = rng.uniform(0, 2 * np.pi)
        self.wander: Dict[int, float] = {}

    def offset(self, s: int, k: int) -> float:
        c = self.config
        self.wander[k] = c.heading_persistence * self.wander.get(k, 0.0) + c.heading_std * self.rng.normal()
        return c.route_amplitude * np.sin(2 * np.pi * s / self.period + self.phase) + self.wander[k]

    def pace(self, s: int) -> float:
        return 1.0 + self.config.speed_modulation * np.sin(2 * np.pi * s / self.pace_period + self.pace_phase)


class _Simulator:
    def __init__(self, config: SimConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.ids = config.ids
        self.index = {i: k for k, i in enumerate(self.ids)}
        self.noise_std = config.effective_noise_std

        n, t_star = config.n, config.t_star
        radius = config.spread * np.sqrt(self.rng.uniform(size=n))
        angle = self.rng.uniform(0, 2 * np.pi, size=n)

        self.positions = np.zeros((t_star, n, 2))
        self.positions[0] = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        self.steps = np.zeros((t_star, n, 2))
        self.truth = [
            TruthStep(t=t, assignment={i: None for i in self.ids}) for t in range(1, t_star + 1)
        ]

    def noise(self, scale: float = 1.0) -> np.ndarray:
        if self.noise_std == 0 or scale == 0:
            return np.zeros(2)
        draw = self.rng.normal(0, self.noise_std, size=2)
        return scale * np.clip(draw, -3 * self.noise_std, 3 * self.noise_std)

    def lagged_step(self, s: int, k: int, lag: int) -> np.ndarray:
        return self.steps[s - lag, k] if s - lag >= 0 else np.zeros(2)

    def lagged_position(self, s: int, k: int, lag: int) -> np.ndarray:
        return self.positions[max(s - lag, 0), k]

    @staticmethod
    def lag_of(id: str) -> int:
        return 1 + int(id) % 5

    def speed_factor(self, faction: ScriptedFaction, t: int) -> float:
        # linear decay to rest over a stop faction
        if not faction.stop:
            return 1.0
        return 1.0 - (t - faction.start + 1) / faction.duration

    def steer(self, s: int, k: int, target: np.ndarray, route: _Route, sf: float):
        c = self.config
        to_target = target - self.positions[s - 1, k]
        heading = np.arctan2(to_target[1], to_target[0]) + route.offset(s, k)

        previous = self.steps[s - 1, k]
        if np.linalg.norm(previous) > 0:
            course = np.arctan2(previous[1], previous[0])
            turn = np.angle(np.exp(1j * (heading - course)))
            heading = course + np.clip(turn, -c.max_turn, c.max_turn)

        pace = sf * c.speed * route.pace(s)
        return pace * np.array([np.cos(heading), np.sin(heading)]) + self.noise(sf)

    def copy_step(self, s: int, k: int, source: int, lag: int) -> np.ndarray:
        copied = self.lagged_step(s, source, lag)
        return copied + self.noise(np.linalg.norm(copied) / self.config.speed)

    def targets(self, phase: List[ScriptedFaction]) -> Dict[str, np.ndarray]:
        s0 = max(phase[0].start - 2, 0)
        base = self.rng.uniform(0, 2 * np.pi)
        out = {}
        for k, faction in enumerate(phase):
            members = [self.index[m] for m in faction.members]
            centroid = self.positions[s0, members].mean(axis=0)
            angle = base + 2 * np.pi * k / len(phase)
            distance = 1.5 * self.config.speed * faction.duration
            out[faction.leader] = centroid + distance * np.array([np.cos(angle), np.sin(angle)])
        return out

    def run(self) -> Tuple[Dataset, GroundTruth]:
        c = self.config
        scripts = [event_script(c.event_type, e, c.n, c.event_length) for e in range(c.events)]

        for script in scripts:
            active: Set[str] = set()
            attempted: Set[Tuple[str, str]] = set()
            for phase in script.phases:
                self.run_phase(phase, active, attempted)
            # nobody moves while stopped
            first, last = script.stopped
            self.positions[first - 1 : last] = self.positions[first - 2]

        settled = c.events * c.event_length
        if settled < c.t_star:
            self.positions[settled:] = self.positions[settled - 1]

        values = np.transpose(self.positions, (1, 0, 2))
        truth = GroundTruth(
            ids=self.ids, model=c.model, event_type=c.event_type, scripts=scripts, steps=self.truth
        )
        return Dataset(ids=self.ids, values=values), truth

    def run_phase(self, phase: List[ScriptedFaction], active: Set[str], attempted: Set[Tuple[str, str]]):
        c = self.config
        targets = self.targets(phase)
        routes = {f.leader: _Route(self.rng, c) for f in phase}

        informed: Dict[str, List[str]] = {}
        hierarchy: Dict[str, List[str]] = {}
        for faction in phase:
            others = natsorted(m for m in faction.members if m != faction.leader)
            if c.model == "CM":
                drawn = self.rng.choice(others, size=c.cm_informed - 1, replace=False)
                informed[faction.leader] = [faction.leader] + natsorted(str(d) for d in drawn)
            if c.model == "HM":
                hierarchy[faction.leader] = [faction.leader] + others
            if c.model == "IC":
                active.add(faction.leader)

        for t in range(phase[0].start, phase[0].end + 1):
            s = t - 1
            if s > 0:
                for faction in phase:
                    sf = self.speed_factor(faction, t)
                    target, route = targets[faction.leader], routes[faction.leader]
                    self.move_faction(s, faction, target, route, sf, informed, hierarchy, active)
                self.positions[s] = self.positions[s - 1] + self.steps[s]

            pending: Set[str] = set()
            for faction in phase:
                if c.model == "IC":
                    pending |= self.cascade(s, faction, active, attempted)
                self.label(s, faction, informed, hierarchy, active)
            active |= pending

    def move_faction(self, s, faction, target, route, sf, informed, hierarchy, active):
        c = self.config
        leader = self.index[faction.leader]

        if c.model == "CM":
            movers = {self.index[m] for m in informed[faction.leader]}
            members = [self.index[m] for m in faction.members]
            centroid = self.positions[s - 1, members].mean(axis=0)
            heading = _unit(self.steps[s - 1, members].sum(axis=0))
            for m in faction.members:
                k = self.index[m]
                if k in movers:
                    self.steps[s, k] = self.steer(s, k, target, route, sf)
                    continue
                offset = centroid - self.positions[s - 1, k]
                pull = _unit(offset) * min(1.0, np.linalg.norm(offset) / c.spread)
                self.steps[s, k] = sf * c.speed * (0.5 * pull + 0.5 * heading) + self.noise(sf)
            return

        self.steps[s, leader] = self.steer(s, leader, target, route, sf)

        if c.model == "HM":
            chain = hierarchy[faction.leader]
            for previous, m in zip(chain, chain[1:]):
                self.steps[s, self.index[m]] = self.copy_step(s, self.index[m], self.index[previous], HM_LINK_LAG)
            return

        for m in faction.members:
            if m == faction.leader:
                continue
            k, lag = self.index[m], self.lag_of(m)
            if c.model == "DM":
                self.steps[s, k] = self.copy_step(s, k, leader, lag)
            elif m in active:
                gap = self.lagged_position(s, leader, lag) - self.positions[s - 1, k]
                pull = _clip_norm(0.05 * gap, 0.5 * c.speed) * sf
                self.steps[s, k] = self.copy_step(s, k, leader, lag) + pull

    def cascade(self, s, faction, active, attempted) -> Set[str]:
        """One round of activation attempts; successes take effect next step."""
        c = self.config
        inactive = [m for m in faction.members if m not in active]
        if not inactive:
            return set()

        pos = self.positions[s]
        newly: Set[str] = set()
        for a in natsorted(m for m in faction.members if m in active):
            distances = np.linalg.norm(pos[[self.index[m] for m in inactive]] - pos[self.index[a]], axis=1)
            for order in np.argsort(distances, kind="stable")[: c.ic_k]:
                target = inactive[order]
                if (a, target) in attempted:
                    continue
                attempted.add((a, target))
                if self.rng.uniform() < c.ic_rho:
                    newly.add(target)
        return newly

    def label(self, s, faction, informed, hierarchy, active):
        c = self.config
        step = self.truth[s]
        for m in faction.members:
            if c.model == "IC" and m not in active:
                continue
            step.assignment[m] = faction.leader
        step.leaders[faction.leader] = informed.get(faction.leader, [faction.leader])
        if faction.leader in hierarchy:
            step.hierarchy[faction.leader] = hierarchy[faction.leader]


def simulate(config: SimConfig) -> Tuple[Dataset, GroundTruth]:
    """
    Generate 2-D trajectories and ground truth for one leadership model and
    event script. Deterministic given `config.seed`.
    """
    logger.info(
        f"Simulating {config.model}/{config.event_type}: n={config.n}, t*={config.t_star}, seed={config.seed}"
    )
    return _Simulator(config).run()


def save_simulation(
    dataset: Dataset, truth: GroundTruth, config: SimConfig, out_dir: Union[str, pathlib.Path]
) -> Dict[str, pathlib.Path]:
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = {
        "trajectories": out_dir / "trajectories.csv",
        "truth": out_dir / "truth.json",
        "manifest": out_dir / "manifest.yml",
    }
    save_dataset(dataset, paths["trajectories"])
    truth.to_json(paths["truth"])
    with open(paths["manifest"], "w") as f:
        yaml.dump(config.model_dump(exclude={"effective_noise_std"}), f, sort_keys=False)

    logger.info(f"Simulation written to {out_dir}")
    return paths
