import pathlib
from typing import List, Union

import numpy as np
import pandas as pd
import pandera
from loguru import logger
from natsort import natsorted
from pandera.typing import Series
from pydantic import BaseModel, ConfigDict, computed_field, field_validator, model_validator


class DatasetError(ValueError):
    pass


class TrajectorySchema(pandera.DataFrameModel):
    """Long-format trajectory table: one row per (id, t)."""

    id: Series[str] = pandera.Field(coerce=True)
    coordinate: Series[float] = pandera.Field(
        alias=r"^x\d+$", regex=True, coerce=True, nullable=False
    )


class TimeSeries(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    id: str
    values: np.ndarray

    @field_validator("id", mode="before")
    @classmethod
    def stringify_id(cls, v):
        return str(v)

    @field_validator("values", mode="before")
    @classmethod
    def as_matrix(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError(f"Expected a (t, m) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"Time series must have t >= 1 and m >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Time series contains missing or non-finite entries")
        arr.setflags(write=False)
        return arr

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.length


class Window(BaseModel):
    """
    Sliding window over a dataset.

    `start` and `end` are 0-based half-open offsets, so the window covers the
    1-based time steps `start + 1` to `end`.
    """

    model_config = ConfigDict(frozen=True)

    index: int
    start: int
    end: int

    @model_validator(mode="after")
    def check_bounds(self):
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"Invalid window [{self.start}, {self.end})")
        return self

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def first_step(self) -> int:
        return self.start + 1

    @property
    def last_step(self) -> int:
        return self.end


class Dataset(BaseModel):
    """
    Equal-length m-dimensional time series for n individuals.

    Series are stored as a single (n, t*, m) array; `series` rebuilds the
    individual TimeSeries objects on demand.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    ids: List[str]
    values: np.ndarray

    @field_validator("ids", mode="before")
    @classmethod
    def stringify_ids(cls, v):
        return [str(i) for i in v]

    @field_validator("values", mode="before")
    @classmethod
    def as_cube(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ValueError(f"Expected a (n, t*, m) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Dataset contains missing or non-finite entries")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_shape(self):
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("Dataset ids must be unique")
        if len(self.ids) != self.values.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids given for {self.values.shape[0]} series"
            )
        if self.values.shape[1] < 1 or self.values.shape[2] < 1:
            raise ValueError(f"Dataset must have t* >= 1 and m >= 1, got {self.values.shape}")
        return self

    @computed_field
    @property
    def n(self) -> int:
        return self.values.shape[0]

    @computed_field
    @property
    def t_star(self) -> int:
        return self.values.shape[1]

    @computed_field
    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def series(self) -> List[TimeSeries]:
        return [TimeSeries(id=i, values=self.values[k]) for k, i in enumerate(self.ids)]

    @classmethod
    def from_series(cls, series: List[TimeSeries]) -> "Dataset":
        if not series:
            raise DatasetError("Cannot build a dataset from zero series")

        lengths = {s.length for s in series}
        dims = {s.dim for s in series}
        if len(lengths) != 1:
            raise DatasetError(f"Series have different lengths: {sorted(lengths)}")
        if len(dims) != 1:
            raise DatasetError(f"Series have different dimensions: {sorted(dims)}")

        return cls(ids=[s.id for s in series], values=np.stack([s.values for s in series]))

    def index_of(self, id: str) -> int:
        try:
            return self.ids.index(str(id))
        except ValueError:
            raise KeyError(f"Individual {id} not found in dataset")

    def full_window(self) -> Window:
        return Window(index=1, start=0, end=self.t_star)

    def to_dataframe(self) -> pd.DataFrame:
        """
        Return the dataset in the long trajectory format (id, t, x0, ...).
        """
        n, t_star, m = self.values.shape
        df = pd.DataFrame(
            self.values.reshape(n * t_star, m),
            columns=[f"x{k}" for k in range(m)],
        )
        df.insert(0, "t", np.tile(np.arange(1, t_star + 1), n))
        df.insert(0, "id", np.repeat(self.ids, t_star))
        return df


def default_delta(omega: int) -> int:
    """
    Time shift for a window length: 10% of omega, rounded half up, at least 1.
    """
    return max(1, (int(omega) + 5) // 10)


def sliding_windows(t_star: int, omega: int, delta: int) -> List[Window]:
    """
    Regular windows w(i) = [(i-1)δ, (i-1)δ + ω) for i = 1..K with
    K = floor((t* - ω) / δ), followed by one tail window [Kδ, t*).
    """
    if omega < 1:
        raise DatasetError(f"Window length must be >= 1, got {omega}")
    if omega > t_star:
        raise DatasetError(f"Window length {omega} exceeds series length {t_star}")
    if delta < 1 or delta > omega:
        raise DatasetError(f"Time shift must satisfy 1 <= delta <= omega, got {delta}")

    k = (t_star - omega) // delta
    windows = [
        Window(index=i, start=(i - 1) * delta, end=(i - 1) * delta + omega)
        for i in range(1, k + 1)
    ]
    windows.append(Window(index=k + 1, start=k * delta, end=t_star))
    return windows


def slice_dataset(dataset: Dataset, window: Window) -> Dataset:
    """
    Restrict every series of the dataset to the window, preserving order.
    """
    if window.start < 0 or window.end > dataset.t_star:
        raise DatasetError(
            f"Window [{window.start}, {window.end}) is outside [0, {dataset.t_star})"
        )
    return Dataset(ids=dataset.ids, values=dataset.values[:, window.start : window.end])


def displacement(dataset: Dataset) -> Dataset:
    """
    Per-step displacement vectors, with a zero vector at the first step so the
    result keeps length t*.
    """
    diffs = np.diff(dataset.values, axis=1, prepend=dataset.values[:, :1])
    return Dataset(ids=dataset.ids, values=diffs)


def _parse_times(times: pd.Series) -> pd.Series:
    try:
        return pd.to_numeric(times)
    except (ValueError, TypeError):
        pass

    try:
        return pd.to_datetime(times)
    except (ValueError, TypeError):
        raise DatasetError("Column 't' must hold numeric or datetime timestamps")


def _check_contiguous(times: np.ndarray):
    if not pd.api.types.is_numeric_dtype(times) or not np.all(np.mod(times, 1) == 0):
        return
    steps = np.diff(times)
    if (steps != 1).any():
        first = int(np.argmax(steps != 1))
        raise DatasetError(f"gap in timestamps between t={times[first]:g} and t={times[first + 1]:g}")


def load_dataset(path: Union[str, pathlib.Path]) -> Dataset:
    """
    Load a trajectory CSV with header `id,t,x0[,x1,...]`.

    Integer timestamps must be contiguous. Fractional or datetime timestamps
    are only ranked to 1..t*. Every id must have a row for every timestamp.
    """
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist.")

    df = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip", encoding="utf-8")

    missing = [c for c in ["id", "t"] if c not in df.columns]
    if missing:
        raise DatasetError(f"{path} is missing required columns: {missing}")

    coords = natsorted([c for c in df.columns if c.startswith("x")])
    if not coords:
        raise DatasetError(f"{path} has no coordinate columns (x0, x1, ...)")
    if coords != [f"x{k}" for k in range(len(coords))]:
        raise DatasetError(f"Coordinate columns must be x0..x{len(coords) - 1}, got {coords}")

    ragged = df[coords].isna().any(axis=1)
    if ragged.any():
        row = df.loc[ragged].iloc[0]
        raise DatasetError(
            f"ragged dimensions at ({row['id']},{row['t']}): expected {len(coords)} values"
        )

    try:
        df = TrajectorySchema.validate(df)
    except (pandera.errors.SchemaError, pandera.errors.SchemaErrors) as e:
        raise DatasetError(f"{path} failed schema validation: {e}")

    df = df.assign(_time=_parse_times(df["t"]))
    if df.duplicated(subset=["id", "_time"]).any():
        dup = df.loc[df.duplicated(subset=["id", "_time"])].iloc[0]
        raise DatasetError(f"duplicate row at ({dup['id']},{dup['t']})")

    times = np.sort(df["_time"].unique())
    _check_contiguous(times)
    ids = natsorted(df["id"].unique())

    cube = (
        df.set_index(["id", "_time"])[coords]
        .reindex(pd.MultiIndex.from_product([ids, times], names=["id", "_time"]))
    )
    gaps = cube.isna().any(axis=1)
    if gaps.any():
        gap_id, gap_time = gaps[gaps].index[0]
        original = df.loc[df["_time"] == gap_time, "t"].iloc[0]
        raise DatasetError(f"gap at ({gap_id},{original})")

    values = cube.to_numpy().reshape(len(ids), len(times), len(coords))
    logger.debug(f"Loaded {len(ids)} series of length {len(times)} from {path}")
    return Dataset(ids=ids, values=values)


def save_dataset(dataset: Dataset, path: Union[str, pathlib.Path]):
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_dataframe().to_csv(path, index=False)
