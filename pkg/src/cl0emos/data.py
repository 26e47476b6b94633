"""
Forecast archives, exchangeable member groups and ensemble summary statistics.

An archive is held column-wise in numpy arrays (:class:`Archive`); indexing it
with an integer yields a single :class:`ForecastCase`.
"""
import csv
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-9
MINUTE = np.timedelta64(1, "m")


class DataError(ValueError):
    """Malformed or inconsistent archive / group-spec input."""


@dataclass(frozen=True)
class ForecastCase:
    station_id: str
    init_time: np.datetime64
    lead_minutes: int
    members: np.ndarray
    observation: float = np.nan
    clear_sky: float = np.nan

    @property
    def valid_time(self):
        return self.init_time + self.lead_minutes * MINUTE

    @property
    def has_observation(self):
        return bool(np.isfinite(self.observation))


@dataclass(frozen=True)
class GroupSpec:
    """Ordered partition of member indices (0-based) into exchangeable groups."""

    names: tuple
    members: tuple  # tuple of tuples of int

    def __post_init__(self):
        flat = sorted(i for g in self.members for i in g)
        if not flat or any(len(g) == 0 for g in self.members):
            raise DataError("every group needs at least one member")
        if flat != list(range(len(flat))):
            raise DataError("groups must partition members 0..M-1 exactly once")

    @property
    def n_groups(self):
        return len(self.members)

    @property
    def n_members(self):
        return sum(len(g) for g in self.members)

    @property
    def sizes(self):
        return np.array([len(g) for g in self.members])

    @classmethod
    def single(cls, n_members):
        return cls(("all",), (tuple(range(n_members)),))

    @classmethod
    def singletons(cls, n_members):
        return cls(tuple(f"m{i + 1}" for i in range(n_members)),
                   tuple((i,) for i in range(n_members)))

    @classmethod
    def from_mapping(cls, mapping, member_columns):
        """Build from ``{group name: [member column names]}``."""
        lookup = {name: i for i, name in enumerate(member_columns)}
        names, groups = [], []
        for name, cols in mapping.items():
            try:
                groups.append(tuple(lookup[c] for c in cols))
            except KeyError as err:
                raise DataError(f"group {name!r} names unknown member column {err}") from None
            names.append(name)
        return cls(tuple(names), tuple(groups))

    def to_mapping(self, member_columns):
        return {n: [member_columns[i] for i in g] for n, g in zip(self.names, self.members)}


def load_group_spec(path, member_columns):
    with open(path, encoding="utf-8") as fh:
        mapping = json.load(fh)
    return GroupSpec.from_mapping(mapping, member_columns)


@dataclass(frozen=True)
class EnsembleStats:
    """Per-case ensemble summaries; all fields have leading dimension N (or are scalars)."""

    group_means: np.ndarray  # (N, K)
    overall_mean: np.ndarray
    variance: np.ndarray
    zero_fraction: np.ndarray

    def __len__(self):
        return len(self.overall_mean)

    def __getitem__(self, idx):
        return EnsembleStats(self.group_means[idx], self.overall_mean[idx],
                             self.variance[idx], self.zero_fraction[idx])


def compute_stats(members, groups):
    """Group means, ensemble mean, unbiased variance and fraction of zero members.

    ``members`` is a 1-d ensemble or an (N, M) array of ensembles.
    """
    arr = np.asarray(members, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != groups.n_members:
        raise DataError(f"ensemble has {arr.shape[1]} members, group spec expects {groups.n_members}")
    gm = np.stack([arr[:, list(g)].mean(axis=1) for g in groups.members], axis=1)
    overall = arr.mean(axis=1)
    if arr.shape[1] > 1:
        var = arr.var(axis=1, ddof=1)
    else:
        var = np.zeros(len(arr))
    # constant ensembles can carry rounding noise from the mean
    var = np.where(np.all(arr == arr[:, :1], axis=1), 0.0, var)
    p0 = np.mean(np.abs(arr) <= ZERO_TOL, axis=1)
    if single:
        return EnsembleStats(gm[0], overall[0], var[0], p0[0])
    return EnsembleStats(gm, overall, var, p0)


@dataclass
class Archive:
    """Column store of forecast cases sorted by (station, init time, lead)."""

    station_id: np.ndarray  # str
    init_time: np.ndarray  # datetime64[m], UTC
    lead_minutes: np.ndarray  # int64
    members: np.ndarray  # (N, M)
    observation: np.ndarray  # nan = missing
    clear_sky: np.ndarray  # nan = missing
    member_columns: tuple = ()
    n_clamped: int = 0

    def __post_init__(self):
        if not self.member_columns:
            self.member_columns = tuple(f"m{i + 1}" for i in range(self.members.shape[1]))

    def __len__(self):
        return len(self.lead_minutes)

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return ForecastCase(str(self.station_id[i]), self.init_time[i], int(self.lead_minutes[i]),
                                self.members[i], float(self.observation[i]), float(self.clear_sky[i]))
        return self.take(i)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def take(self, idx):
        return Archive(self.station_id[idx], self.init_time[idx], self.lead_minutes[idx],
                       self.members[idx], self.observation[idx], self.clear_sky[idx],
                       self.member_columns, 0)

    @property
    def n_members(self):
        return self.members.shape[1]

    @property
    def valid_time(self):
        return self.init_time + self.lead_minutes * MINUTE

    @property
    def init_date(self):
        return self.init_time.astype("datetime64[D]")

    @property
    def init_hour(self):
        return ((self.init_time - self.init_date) // np.timedelta64(1, "h")).astype(int)

    @property
    def has_observation(self):
        return np.isfinite(self.observation)

    @property
    def stations(self):
        return sorted(set(self.station_id.tolist()))

    @classmethod
    def from_cases(cls, cases, member_columns=()):
        cases = list(cases)
        arc = cls(
            np.array([c.station_id for c in cases], dtype=object),
            np.array([c.init_time for c in cases], dtype="datetime64[m]"),
            np.array([c.lead_minutes for c in cases], dtype=np.int64),
            np.array([np.asarray(c.members, dtype=float) for c in cases]),
            np.array([c.observation for c in cases], dtype=float),
            np.array([c.clear_sky for c in cases], dtype=float),
            tuple(member_columns),
        )
        return arc.sorted()

    def sorted(self):
        order = np.lexsort((self.lead_minutes, self.init_time, self.station_id.astype(str)))
        out = self.take(order)
        out.n_clamped = self.n_clamped
        return out


def parse_time(text):
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(ts, "m")


def format_time(ts):
    return str(np.datetime64(ts, "m")) + "Z"


def _parse_float(text, row, col):
    text = text.strip()
    if text == "":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"row {row}: column {col!r} has non-numeric value {text!r}") from None


DEFAULT_SCHEMA = {
    "station_id": "station_id",
    "init_time": "init_time",
    "lead_minutes": "lead_minutes",
    "obs": "obs",
    "clear_sky": "clear_sky",
}


def ingest(path, schema=None, member_columns=None):
    """Read a comma-separated forecast archive.

    Parameters
    ----------
    path : path-like
        CSV file with a header row.
    schema : dict, optional
        Maps the logical names ``station_id, init_time, lead_minutes, obs,
        clear_sky`` to header names. ``clear_sky`` may be absent from the file.
    member_columns : list of str, optional
        Member column names; by default every header matching ``m<k>``.

    Returns
    -------
    Archive
        Sorted by (station, init time, lead). Negative member values are set to
        zero and counted in ``Archive.n_clamped``.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        col = {h: i for i, h in enumerate(header)}
        for key in ("station_id", "init_time", "lead_minutes", "obs"):
            if schema[key] not in col:
                raise DataError(f"{path}: missing required column {schema[key]!r}")
        if member_columns is None:
            member_columns = [h for h in header if h[:1] == "m" and h[1:].isdigit()]
            member_columns.sort(key=lambda h: int(h[1:]))
        missing = [m for m in member_columns if m not in col]
        if missing or not member_columns:
            raise DataError(f"{path}: member columns missing or empty: {missing}")
        mcols = [col[m] for m in member_columns]
        cs_col = col.get(schema["clear_sky"])

        stations, inits, leads, mem, obs, cs = [], [], [], [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
            try:
                inits.append(parse_time(row[col[schema["init_time"]]]))
                leads.append(int(row[col[schema["lead_minutes"]]]))
            except ValueError as err:
                raise DataError(f"row {rownum}: {err}") from None
            if leads[-1] < 0:
                raise DataError(f"row {rownum}: negative lead time")
            stations.append(row[col[schema["station_id"]]].strip())
            vals = [_parse_float(row[i], rownum, header[i]) for i in mcols]
            if any(np.isnan(v) for v in vals):
                raise DataError(f"row {rownum}: missing ensemble member value")
            mem.append(vals)
            obs.append(_parse_float(row[col[schema["obs"]]], rownum, "obs"))
            cs.append(np.nan if cs_col is None else _parse_float(row[cs_col], rownum, "clear_sky"))

    members = np.array(mem, dtype=float).reshape(len(mem), len(member_columns))
    neg = members < 0
    n_clamped = int(neg.sum())
    if n_clamped:
        logger.warning("%s: clamped %d negative member values to zero", path, n_clamped)
        members[neg] = 0.0
    arc = Archive(np.array(stations, dtype=object), np.array(inits, dtype="datetime64[m]"),
                  np.array(leads, dtype=np.int64), members, np.array(obs, dtype=float),
                  np.array(cs, dtype=float), tuple(member_columns), n_clamped).sorted()
    key = np.stack([arc.station_id.astype(str), arc.init_time.astype(str),
                    arc.lead_minutes.astype(str)], axis=1)
    if len(arc) > 1 and np.any(np.all(key[1:] == key[:-1], axis=1)):
        raise DataError(f"{path}: duplicate (station_id, init_time, lead_minutes) rows")
    return arc


def _fmt(x):
    return "" if np.isnan(x) else repr(float(x))


def write_archive(archive, path):
    """Write an archive in the ingest format; floats use shortest round-trip repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "init_time", "lead_minutes", "obs", "clear_sky", *archive.member_columns])
        for i in range(len(archive)):
            w.writerow([archive.station_id[i], format_time(archive.init_time[i]),
                        int(archive.lead_minutes[i]), _fmt(archive.observation[i]),
                        _fmt(archive.clear_sky[i]), *(repr(float(v)) for v in archive.members[i])])
