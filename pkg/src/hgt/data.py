"""Multi-response datasets: Gaussian, binomial and Poisson observations in one table."""

from __future__ import annotations

import csv
import enum
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = ("series", "value", "trials", "region", "day", "death_flag", "recovery_flag")


class ResponseKind(enum.IntEnum):
    GAUSSIAN = 1
    BINOMIAL = 2
    POISSON = 3

    @classmethod
    def parse(cls, label) -> "ResponseKind":
        if isinstance(label, (int, np.integer)):
            return cls(int(label))
        try:
            return cls[str(label).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown series kind {label!r}; expected gaussian, binomial or poisson") from None


class DataError(ValueError):
    """Invalid observation or malformed input file."""


@dataclass(frozen=True)
class Observation:
    kind: ResponseKind
    value: float
    trials: int = 1
    index: int = 0
    region: str = ""
    day: int = 1
    death_flag: int = 0
    recovery_flag: int = 0

    @property
    def multiplier(self) -> int:
        """Data-scale multiplier c: the trial count for binomial data, 1 otherwise."""
        return self.trials if self.kind == ResponseKind.BINOMIAL else 1


@dataclass
class MultiResponseDataset:
    """Observations stored column-wise, in a fixed order that every vector follows.

    ``covariates`` is optional and only carried in memory (simulation studies);
    it is not part of the CSV schema.
    """

    kind: np.ndarray
    value: np.ndarray
    trials: np.ndarray
    region: np.ndarray
    day: np.ndarray
    death_flag: np.ndarray
    recovery_flag: np.ndarray
    covariates: np.ndarray | None = None
    n_days: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.value)
        self.kind = np.asarray(self.kind, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=float)
        self.trials = np.asarray(self.trials, dtype=np.int64)
        self.region = np.asarray(self.region, dtype=object)
        self.day = np.asarray(self.day, dtype=np.int64)
        self.death_flag = np.asarray(self.death_flag, dtype=np.int64)
        self.recovery_flag = np.asarray(self.recovery_flag, dtype=np.int64)
        for name in ("kind", "trials", "region", "day", "death_flag", "recovery_flag"):
            if len(getattr(self, name)) != n:
                raise DataError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        if self.covariates is not None:
            self.covariates = np.asarray(self.covariates, dtype=float)
            if self.covariates.shape[0] != n:
                raise DataError("covariate rows do not match observations")
        if self.n_days is None and n:
            self.n_days = int(self.day.max())
        self.validate()

    @classmethod
    def from_observations(cls, observations, n_days=None) -> "MultiResponseDataset":
        obs = list(observations)
        return cls(
            kind=[int(o.kind) for o in obs],
            value=[o.value for o in obs],
            trials=[o.trials for o in obs],
            region=[o.region for o in obs],
            day=[o.day for o in obs],
            death_flag=[o.death_flag for o in obs],
            recovery_flag=[o.recovery_flag for o in obs],
            n_days=n_days,
        )

    def __len__(self):
        return len(self.value)

    def validate(self):
        kinds = set(np.unique(self.kind).tolist())
        if not kinds <= {1, 2, 3}:
            raise DataError(f"unknown response kinds {sorted(kinds - {1, 2, 3})}")
        z, b = self.value, self.trials
        counted = self.kind != ResponseKind.GAUSSIAN
        binom = self.kind == ResponseKind.BINOMIAL
        upper = self.n_days if self.n_days is not None else np.inf
        problems = [
            (~np.isfinite(z), "non-finite value"),
            (counted & ((z < 0) | (z != np.floor(z))), "count value must be a non-negative integer"),
            (binom & (b < 1), "binomial trials must be positive"),
            (binom & (z > b), "binomial value exceeds trials"),
            ((self.day < 1) | (self.day > upper), f"day outside 1..{self.n_days}"),
        ]
        for mask, message in problems:
            bad = np.flatnonzero(mask)
            if bad.size:
                i = bad[0]
                raise DataError(f"row {i}: {message} (value={z[i]:g}, trials={b[i]}, day={self.day[i]})")

    @property
    def multiplier(self) -> np.ndarray:
        return np.where(self.kind == ResponseKind.BINOMIAL, self.trials, 1).astype(float)

    def counts(self) -> dict:
        return {k: int(np.sum(self.kind == k)) for k in ResponseKind}

    def observation(self, i) -> Observation:
        return Observation(
            kind=ResponseKind(int(self.kind[i])),
            value=float(self.value[i]),
            trials=int(self.trials[i]),
            index=i,
            region=str(self.region[i]),
            day=int(self.day[i]),
            death_flag=int(self.death_flag[i]),
            recovery_flag=int(self.recovery_flag[i]),
        )

    def subset(self, mask) -> "MultiResponseDataset":
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return MultiResponseDataset(
            kind=self.kind[idx],
            value=self.value[idx],
            trials=self.trials[idx],
            region=self.region[idx],
            day=self.day[idx],
            death_flag=self.death_flag[idx],
            recovery_flag=self.recovery_flag[idx],
            covariates=None if self.covariates is None else self.covariates[idx],
            n_days=self.n_days,
            extra={k: np.asarray(v)[idx] for k, v in self.extra.items()},
        )

    def split_by_day(self, train_end: int, validation_days=(), test_days=()):
        """Train on days ``<= train_end``; validation and test on the listed days."""
        validation_days = sorted(validation_days)
        test_days = sorted(test_days)
        if validation_days and validation_days[0] <= train_end:
            raise DataError("validation days must follow the training period")
        if test_days and test_days[0] <= max([train_end, *validation_days]):
            raise DataError("test days must follow the validation days")
        train = self.subset(self.day <= train_end)
        validation = self.subset(np.isin(self.day, validation_days))
        test = self.subset(np.isin(self.day, test_days))
        return train, validation, test

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.kind, self.value, self.trials, self.day, self.death_flag, self.recovery_flag):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update("\x1f".join(map(str, self.region)).encode())
        return h.hexdigest()[:16]


def read_csv(path) -> MultiResponseDataset:
    """Parse the ``series,value,trials,region,day,death_flag,recovery_flag`` schema."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: no observations") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"{path}:1: header must be {','.join(CSV_HEADER)}")
        obs = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                obs.append(_parse_row(row))
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not obs:
        raise DataError(f"{path}: no observations")
    return MultiResponseDataset.from_observations(obs)


def _parse_row(row) -> Observation:
    series, value, trials, region, day, death, recovery = (c.strip() for c in row)
    kind = ResponseKind.parse(series)
    z = float(value)
    if kind == ResponseKind.BINOMIAL:
        if not trials:
            raise DataError("binomial row requires trials")
        b = int(trials)
        if b < 1:
            raise DataError("trials must be positive")
        if z < 0 or z > b or z != int(z):
            raise DataError(f"binomial value {value} outside 0..{b}")
    else:
        if trials:
            raise DataError(f"trials must be empty for {series} rows")
        b = 1
        if kind == ResponseKind.POISSON and (z < 0 or z != int(z)):
            raise DataError(f"count value {value} must be a non-negative integer")
    if kind != ResponseKind.POISSON and (region or death or recovery):
        raise DataError("region and flags are only allowed on poisson rows")
    t = int(day)
    if t < 1:
        raise DataError("day must be a positive integer")
    return Observation(
        kind=kind,
        value=z,
        trials=b,
        region=region,
        day=t,
        death_flag=int(death) if death else 0,
        recovery_flag=int(recovery) if recovery else 0,
    )


def write_csv(dataset: MultiResponseDataset, path):
    """Write a dataset in the ingest schema; floats use ``repr`` so reading back is exact."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(len(dataset)):
            o = dataset.observation(i)
            count_row = o.kind == ResponseKind.POISSON
            value = repr(o.value) if o.kind == ResponseKind.GAUSSIAN else str(int(o.value))
            w.writerow(
                [
                    o.kind.name.lower(),
                    value,
                    o.trials if o.kind == ResponseKind.BINOMIAL else "",
                    o.region if count_row else "",
                    o.day,
                    o.death_flag if count_row else "",
                    o.recovery_flag if count_row else "",
                ]
            )
