"""Balanced-panel container and long-format CSV ingestion/emission.

A panel holds outcomes ``Y[i, t]`` and covariate trajectories ``x_j[i, t]``
for ``n`` subjects observed at the same ``T`` occasions.  Panels must be
complete: every subject contributes exactly one observation per occasion,
and no missing-data handling of any kind is performed (incomplete input is
a hard error).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import IO, Union

import numpy as np

from .errors import (
    DuplicateObservation,
    EmptyInput,
    InvalidDataset,
    MissingCell,
    NonNumeric,
)

CsvSource = Union[bytes, str, IO[bytes], IO[str]]


class OutcomeKind(Enum):
    """Outcome scale: continuous (identity link) or binary (logit link)."""

    CONTINUOUS = "continuous"
    BINARY = "binary"


@dataclass(frozen=True)
class CsvSchema:
    """Column bindings for long-format CSV input.

    ``covariates`` empty means "every column other than subject/time/outcome,
    in header order".
    """

    subject: str = "id"
    time: str = "time"
    outcome: str = "y"
    covariates: tuple[str, ...] = ()


@dataclass(frozen=True)
class LongitudinalDataset:
    """Balanced panel of outcomes and covariate trajectories.

    Parameters
    ----------
    outcomes : ndarray, shape (n, T)
        Outcome value for subject ``i`` at occasion ``t`` (1-based occasions
        map to 0-based columns).
    covariates : ndarray, shape (J, n, T)
        One (n, T) trajectory matrix per covariate.  Time-invariant
        covariates are stored as constant-in-t columns.
    covariate_names : tuple of str
        Names aligned with the first axis of ``covariates``.
    subject_ids : tuple of str, optional
        Original subject identifiers, in row order.  Defaults to "1".."n".

    Datasets are immutable after construction and safe to share across
    concurrent workers.
    """

    outcomes: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    subject_ids: tuple[str, ...] = ()

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=float)
        covariates = np.asarray(self.covariates, dtype=float)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if outcomes.ndim != 2:
            raise InvalidDataset("outcomes must be an (n, T) matrix")
        n, t = outcomes.shape
        if n < 1 or t < 1:
            raise InvalidDataset("panel must contain at least one subject and one occasion")
        if covariates.ndim != 3 or covariates.shape[1:] != (n, t):
            raise InvalidDataset(
                f"covariates must have shape (J, {n}, {t}), got {covariates.shape}"
            )
        if len(self.covariate_names) != covariates.shape[0]:
            raise InvalidDataset("covariate_names must match the number of covariate matrices")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise InvalidDataset("covariate names must be unique")
        ids = tuple(self.subject_ids) or tuple(str(i + 1) for i in range(n))
        if len(ids) != n:
            raise InvalidDataset("subject_ids must have one entry per subject")
        object.__setattr__(self, "subject_ids", ids)

    @property
    def n_subjects(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_times(self) -> int:
        return self.outcomes.shape[1]

    def covariate(self, name: str) -> np.ndarray:
        """Return the (n, T) trajectory matrix for a named covariate."""
        try:
            j = self.covariate_names.index(name)
        except ValueError:
            raise KeyError(f"no covariate named {name!r}") from None
        return self.covariates[j]

    def equals(self, other: "LongitudinalDataset") -> bool:
        """Exact (bitwise) equality of all fields."""
        return (
            self.covariate_names == other.covariate_names
            and self.subject_ids == other.subject_ids
            and self.outcomes.shape == other.outcomes.shape
            and np.array_equal(self.outcomes, other.outcomes)
            and np.array_equal(self.covariates, other.covariates)
        )


def _label_key(label: str):
    # Numeric-aware ordering so "2" sorts before "10"; non-numeric labels
    # sort after numeric ones, lexicographically.
    try:
        return (0, float(label), "")
    except ValueError:
        return (1, 0.0, label)


def _parse_number(raw: str, row: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise NonNumeric(f"row {row}: column {column!r} value {raw!r} is not numeric") from None
    if not math.isfinite(value):
        raise NonNumeric(f"row {row}: column {column!r} value {raw!r} is not finite")
    return value


def _as_text(source: CsvSource) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def load_csv(source: CsvSource, schema: CsvSchema = CsvSchema()) -> LongitudinalDataset:
    """Load a long-format CSV panel.

    The input must have a header row naming at least the subject, time, and
    outcome columns of ``schema``.  Rows may appear in any order; the result
    is canonical: subjects and occasions sorted (numeric-aware), occasions
    re-indexed 1..T.  All subjects must share the same set of time labels.

    Raises
    ------
    EmptyInput, NonNumeric, DuplicateObservation, MissingCell, InvalidDataset
    """
    text = _as_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInput("input has no header row") from None
    header = [h.strip() for h in header]

    for required in (schema.subject, schema.time, schema.outcome):
        if required not in header:
            raise InvalidDataset(f"missing required column {required!r}")
    if schema.covariates:
        cov_names = list(schema.covariates)
        for name in cov_names:
            if name not in header:
                raise InvalidDataset(f"missing covariate column {name!r}")
    else:
        reserved = {schema.subject, schema.time, schema.outcome}
        cov_names = [h for h in header if h not in reserved]

    col = {name: header.index(name) for name in header}
    cells: dict[tuple[str, str], tuple[float, list[float]]] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not field.strip() for field in row):
            continue
        if len(row) != len(header):
            raise InvalidDataset(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
        sid = row[col[schema.subject]].strip()
        tlabel = row[col[schema.time]].strip()
        key = (sid, tlabel)
        if key in cells:
            raise DuplicateObservation(
                f"row {row_no}: subject {sid!r} time {tlabel!r} appears more than once"
            )
        y = _parse_number(row[col[schema.outcome]].strip(), row_no, schema.outcome)
        xs = [_parse_number(row[col[name]].strip(), row_no, name) for name in cov_names]
        cells[key] = (y, xs)

    if not cells:
        raise EmptyInput("input has no data rows")

    subjects = sorted({sid for sid, _ in cells}, key=_label_key)
    times = sorted({t for _, t in cells}, key=_label_key)
    for sid in subjects:
        for tlabel in times:
            if (sid, tlabel) not in cells:
                raise MissingCell(f"subject {sid!r} lacks time {tlabel!r}")
    if len(times) < 2:
        raise InvalidDataset("panel must have T >= 2 occasions")

    n, t_count, j_count = len(subjects), len(times), len(cov_names)
    outcomes = np.empty((n, t_count))
    covariates = np.empty((j_count, n, t_count))
    for i, sid in enumerate(subjects):
        for k, tlabel in enumerate(times):
            y, xs = cells[(sid, tlabel)]
            outcomes[i, k] = y
            covariates[:, i, k] = xs

    return LongitudinalDataset(
        outcomes=outcomes,
        covariates=covariates,
        covariate_names=tuple(cov_names),
        subject_ids=tuple(subjects),
    )


def emit_csv(ds: LongitudinalDataset, schema: CsvSchema = CsvSchema()) -> str:
    """Serialize a dataset to long-format CSV text.

    Values are written with ``repr`` so that ``load_csv(emit_csv(ds))``
    reproduces every float bit-exactly.  Occasions are written as 1..T.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([schema.subject, schema.time, schema.outcome, *ds.covariate_names])
    for i, sid in enumerate(ds.subject_ids):
        for k in range(ds.n_times):
            row = [sid, str(k + 1), repr(float(ds.outcomes[i, k]))]
            row.extend(repr(float(v)) for v in ds.covariates[:, i, k])
            writer.writerow(row)
    return out.getvalue()


def validate(ds: LongitudinalDataset, kind: OutcomeKind) -> list[str]:
    """Check semantic invariants, returning every violation (empty list = ok).

    Violations are data, not faults: this never raises.
    """
    violations: list[str] = []
    if ds.n_times < 2:
        violations.append(f"T must be >= 2 (got T={ds.n_times})")
    if not np.all(np.isfinite(ds.outcomes)):
        violations.append("outcomes contain non-finite values")
    if ds.covariates.size and not np.all(np.isfinite(ds.covariates)):
        violations.append("covariates contain non-finite values")
    if kind is OutcomeKind.BINARY:
        finite = ds.outcomes[np.isfinite(ds.outcomes)]
        if not np.all((finite == 0.0) | (finite == 1.0)):
            violations.append("non-binary outcome values present")
    return violations
