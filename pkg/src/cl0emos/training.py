"""
Training-set selection: rolling and monthly-expanding windows, local or
regional pooling, always keyed on initialization hour and lead time.
"""
from dataclasses import dataclass

import numpy as np


class InsufficientTrainingData(ValueError):
    def __init__(self, target, n_found, n_required):
        self.target = target
        self.n_found = n_found
        self.n_required = n_required
        super().__init__(f"insufficient training data for cell {target}: "
                         f"{n_found} cases, need {n_required}")


@dataclass(frozen=True)
class Target:
    station: str  # ignored for regional pooling
    init_hour: int
    lead_minutes: int
    date: np.datetime64  # target (initialization) date

    def __post_init__(self):
        object.__setattr__(self, "date", np.datetime64(self.date, "D"))


@dataclass(frozen=True)
class TrainingScheme:
    """How to assemble a training set.

    ``temporal`` is ``"rolling"`` (uses ``length_days``) or
    ``"monthly_expanding"`` (uses ``start``, the first date allowed in
    training). ``spatial`` is ``"local"`` or ``"regional"``.
    """

    temporal: str = "rolling"
    length_days: int = 31
    start: np.datetime64 = None
    spatial: str = "regional"
    min_cases: int = 1

    def __post_init__(self):
        if self.temporal not in ("rolling", "monthly_expanding"):
            raise ValueError(f"unknown temporal scheme {self.temporal!r}")
        if self.spatial not in ("local", "regional"):
            raise ValueError(f"unknown spatial scheme {self.spatial!r}")
        if self.temporal == "rolling" and self.length_days < 1:
            raise ValueError("rolling window length must be >= 1 day")
        if self.start is not None:
            object.__setattr__(self, "start", np.datetime64(self.start, "D"))

    def window(self, target_date):
        """Half-open [first, last) range of allowed initialization dates."""
        target_date = np.datetime64(target_date, "D")
        if self.temporal == "rolling":
            return target_date - self.length_days, target_date
        month_start = target_date.astype("datetime64[M]").astype("datetime64[D]")
        if self.start is not None and self.start >= target_date:
            raise ValueError("monthly expanding start must precede the target date")
        first = self.start if self.start is not None else np.datetime64("1970-01-01")
        return first, month_start

    def cell_key(self, target):
        station = target.station if self.spatial == "local" else "*"
        return station, target.init_hour, target.lead_minutes


def select_indices(archive, scheme, target):
    """Indices (into ``archive``) of the training cases for ``target``."""
    first, stop = scheme.window(target.date)
    dates = archive.init_date
    mask = ((dates >= first) & (dates < stop) & (dates < target.date)
            & (archive.lead_minutes == target.lead_minutes)
            & (archive.init_hour == target.init_hour)
            & archive.has_observation)
    if scheme.spatial == "local":
        mask &= archive.station_id == target.station
    idx = np.flatnonzero(mask)
    if len(idx) < scheme.min_cases:
        raise InsufficientTrainingData(scheme.cell_key(target) + (str(target.date),),
                                       len(idx), scheme.min_cases)
    return idx


def select(archive, scheme, target):
    """Training cases for ``target`` as an :class:`~cl0emos.data.Archive`.

    Raises
    ------
    InsufficientTrainingData
        When fewer than ``scheme.min_cases`` cases remain after filtering.
    """
    return archive.take(select_indices(archive, scheme, target))
