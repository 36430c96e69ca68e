"""Stratified 2x2 data model, ingestion and validation.

Cell naming follows the usual responder/arm layout::

                  treated   control
    responder       n11       n10
    non-responder   n01       n00

so ``n_1`` (treated total) is ``n11 + n01`` and ``n_0`` is ``n10 + n00``.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import (
    EmptyInputError,
    EmptyStratumError,
    FormatError,
    InvalidRecordError,
    ReconstructionError,
)


class SubjectRecord(NamedTuple):
    stratum: str
    arm: int
    outcome: int


@dataclass(frozen=True)
class StratumTable:
    n11: int
    n10: int
    n01: int
    n00: int
    label: str = ""

    def __post_init__(self):
        for name in ("n11", "n10", "n01", "n00"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 0:
                raise InvalidRecordError(f"{name}={value!r} must be a non-negative integer")
            object.__setattr__(self, name, int(value))

    @property
    def n_1(self) -> int:
        """Treated total."""
        return self.n11 + self.n01

    @property
    def n_0(self) -> int:
        """Control total."""
        return self.n10 + self.n00

    @property
    def n1_(self) -> int:
        """Responder total."""
        return self.n11 + self.n10

    @property
    def n0_(self) -> int:
        """Non-responder total."""
        return self.n01 + self.n00

    @property
    def total(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00

    @property
    def included(self) -> bool:
        """Both arms observed, so the stratum carries MH/PS weight."""
        return self.n_1 > 0 and self.n_0 > 0

    def swapped_arms(self) -> "StratumTable":
        return StratumTable(self.n10, self.n11, self.n00, self.n01, self.label)

    def swapped_outcomes(self) -> "StratumTable":
        return StratumTable(self.n01, self.n00, self.n11, self.n10, self.label)


@dataclass(frozen=True)
class StratifiedDataset:
    strata: tuple[StratumTable, ...]

    def __post_init__(self):
        strata = tuple(self.strata)
        if not strata:
            raise EmptyInputError("a dataset needs at least one stratum")
        object.__setattr__(self, "strata", strata)

    @property
    def K(self) -> int:
        return len(self.strata)

    @property
    def n(self) -> int:
        return sum(s.total for s in self.strata)

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.strata]

    def __iter__(self):
        return iter(self.strata)

    def __len__(self):
        return len(self.strata)

    def swapped_arms(self) -> "StratifiedDataset":
        return StratifiedDataset(tuple(s.swapped_arms() for s in self.strata))

    @classmethod
    def from_counts(cls, rows: Iterable[Sequence[int]], labels: Sequence[str] | None = None):
        """Build from ``(n11, n10, n01, n00)`` tuples."""
        rows = list(rows)
        if labels is None:
            labels = [f"s{k + 1}" for k in range(len(rows))]
        return cls(tuple(StratumTable(*r, label=str(lab)) for r, lab in zip(rows, labels)))


@dataclass(frozen=True)
class MultiArmStratumTable:
    responders: tuple[int, ...]
    totals: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        responders = tuple(int(x) for x in self.responders)
        totals = tuple(int(x) for x in self.totals)
        if len(responders) != len(totals) or len(totals) < 2:
            raise InvalidRecordError("need matching responder/total counts for at least 2 arms")
        for r, t in zip(responders, totals):
            if not 0 <= r <= t:
                raise InvalidRecordError(f"responders {r} outside [0, {t}]")
        object.__setattr__(self, "responders", responders)
        object.__setattr__(self, "totals", totals)

    @property
    def J(self) -> int:
        return len(self.totals)

    @property
    def total(self) -> int:
        return sum(self.totals)


def _check_record(rec: SubjectRecord, max_arm: int | None):
    if rec.outcome not in (0, 1):
        raise InvalidRecordError(f"outcome must be 0 or 1, got {rec.outcome!r}")
    if rec.arm < 0 or (max_arm is not None and rec.arm > max_arm):
        allowed = "{0, 1}" if max_arm == 1 else ">= 0"
        raise InvalidRecordError(f"arm {rec.arm!r} outside {allowed}")


def aggregate_subjects(records: Iterable[SubjectRecord]) -> StratifiedDataset:
    """Collapse subject-level records into one 2x2 table per stratum.

    Strata appear in order of first occurrence of their label.
    """
    counts: dict[str, list[int]] = {}
    seen = False
    for rec in records:
        seen = True
        rec = SubjectRecord(str(rec[0]), int(rec[1]), int(rec[2]))
        _check_record(rec, max_arm=1)
        cell = counts.setdefault(rec.stratum, [0, 0, 0, 0])
        # index layout matches (n11, n10, n01, n00)
        cell[(1 - rec.outcome) * 2 + (1 - rec.arm)] += 1
    if not seen:
        raise EmptyInputError("no subject records")
    return StratifiedDataset(tuple(StratumTable(*c, label=lab) for lab, c in counts.items()))


def aggregate_multiarm(records: Iterable[SubjectRecord], n_arms: int | None = None) -> list[MultiArmStratumTable]:
    """Multi-arm counterpart of :func:`aggregate_subjects`.

    Arm count defaults to ``max(arm) + 1``; every stratum gets the same J.
    """
    records = [SubjectRecord(str(r[0]), int(r[1]), int(r[2])) for r in records]
    if not records:
        raise EmptyInputError("no subject records")
    for rec in records:
        _check_record(rec, max_arm=None if n_arms is None else n_arms - 1)
    J = n_arms if n_arms is not None else max(r.arm for r in records) + 1
    if J < 2:
        raise InvalidRecordError("multi-arm mode needs at least 2 arms")
    resp: dict[str, list[int]] = {}
    tot: dict[str, list[int]] = {}
    for rec in records:
        resp.setdefault(rec.stratum, [0] * J)[rec.arm] += rec.outcome
        tot.setdefault(rec.stratum, [0] * J)[rec.arm] += 1
    return [MultiArmStratumTable(tuple(resp[lab]), tuple(tot[lab]), lab) for lab in tot]


def expand_records(dataset: StratifiedDataset) -> list[SubjectRecord]:
    """Inverse of :func:`aggregate_subjects` (up to record order)."""
    out = []
    for s in dataset.strata:
        out += [SubjectRecord(s.label, 1, 1)] * s.n11
        out += [SubjectRecord(s.label, 0, 1)] * s.n10
        out += [SubjectRecord(s.label, 1, 0)] * s.n01
        out += [SubjectRecord(s.label, 0, 0)] * s.n00
    return out


class Check(enum.Flag):
    ZERO_ARM = enum.auto()
    SINGLE_SUBJECT_ARM = enum.auto()
    ALL_DEGENERATE = enum.auto()
    ALL = ZERO_ARM | SINGLE_SUBJECT_ARM | ALL_DEGENERATE


@dataclass(frozen=True)
class DatasetWarning:
    code: str
    message: str
    strata: tuple[str, ...] = ()

    def __str__(self):
        return f"{self.code}: {self.message}"


def validate(dataset: StratifiedDataset, requirements: Check = Check.ALL) -> list[DatasetWarning]:
    """Flag strata that violate estimator preconditions. Never raises."""
    warnings = []
    zero = tuple(s.label for s in dataset.strata if not s.included)
    single = tuple(s.label for s in dataset.strata if s.included and (s.n_1 == 1 or s.n_0 == 1))
    if Check.ZERO_ARM in requirements and zero:
        warnings.append(DatasetWarning(
            "ZERO_ARM", f"{len(zero)} stratum(s) with an empty arm are dropped by MH/PS weighting", zero))
    if Check.SINGLE_SUBJECT_ARM in requirements and single:
        warnings.append(DatasetWarning(
            "SINGLE_SUBJECT_ARM",
            f"{len(single)} stratum(s) with a single-subject arm get no small-sample correction", single))
    if Check.ALL_DEGENERATE in requirements and len(zero) == dataset.K:
        warnings.append(DatasetWarning("ALL_DEGENERATE", "every stratum has an empty arm; estimators undefined"))
    return warnings


# -- CSV ingestion ---------------------------------------------------------

SUBJECT_HEADER = ["stratum", "arm", "outcome"]
AGGREGATED_HEADER = ["stratum", "n11", "n10", "n01", "n00"]


def _int_field(value: str, name: str, line: int) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise FormatError(f"{name} {value!r} is not an integer", line) from None


def _rows(text: str, header: list[str]):
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise FormatError("empty file", 1) from None
    if [h.strip().lstrip("﻿") for h in first] != header:
        raise FormatError(f"expected header {','.join(header)}, got {','.join(first)}", 1)
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} fields, got {len(row)}", line)
        yield line, row


def parse_subjects_csv(text: str) -> list[SubjectRecord]:
    records = []
    for line, (stratum, arm, outcome) in _rows(text, SUBJECT_HEADER):
        rec = SubjectRecord(stratum.strip(), _int_field(arm, "arm", line), _int_field(outcome, "outcome", line))
        try:
            _check_record(rec, max_arm=1)
        except InvalidRecordError as exc:
            raise FormatError(str(exc), line) from None
        records.append(rec)
    if not records:
        raise EmptyInputError("no subject rows")
    return records


def parse_aggregated_csv(text: str) -> StratifiedDataset:
    strata = []
    seen = set()
    for line, row in _rows(text, AGGREGATED_HEADER):
        label = row[0].strip()
        if label in seen:
            raise FormatError(f"duplicate stratum {label!r}", line)
        seen.add(label)
        cells = [_int_field(v, h, line) for v, h in zip(row[1:], AGGREGATED_HEADER[1:])]
        if any(c < 0 for c in cells):
            raise FormatError("cell counts must be non-negative", line)
        if sum(cells) == 0:
            raise EmptyStratumError(f"line {line}: stratum {label!r} has no subjects")
        strata.append(StratumTable(*cells, label=label))
    if not strata:
        raise EmptyInputError("no stratum rows")
    return StratifiedDataset(tuple(strata))


def sniff_format(text: str) -> str:
    first = text.lstrip("﻿").splitlines()[0] if text.strip() else ""
    header = [h.strip() for h in first.split(",")]
    if header == SUBJECT_HEADER:
        return "subjects"
    if header == AGGREGATED_HEADER:
        return "aggregated"
    raise FormatError(f"unrecognized header {first!r}", 1)


def read_csv(path: str | Path, fmt: str | None = None):
    """Read either CSV layout; returns ``(dataset, records_or_None)``."""
    text = Path(path).read_text(encoding="utf-8")
    fmt = fmt or sniff_format(text)
    if fmt == "subjects":
        records = parse_subjects_csv(text)
        return aggregate_subjects(records), records
    if fmt == "aggregated":
        return parse_aggregated_csv(text), None
    raise FormatError(f"unknown format {fmt!r}")


def write_aggregated_csv(dataset: StratifiedDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGGREGATED_HEADER)
    for s in dataset.strata:
        writer.writerow([s.label, s.n11, s.n10, s.n01, s.n00])
    return buf.getvalue()


def write_subjects_csv(records: Iterable[SubjectRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUBJECT_HEADER)
    for r in records:
        writer.writerow([r.stratum, r.arm, r.outcome])
    return buf.getvalue()


# -- Embedded CALGB multiple-myeloma trial --------------------------------

# institution, treated n, treated proportion, control n, control proportion
CALGB_PUBLISHED = (
    (1, 4, 0.75, 3, 0.33),
    (2, 4, 0.75, 11, 0.73),
    (3, 2, 1.00, 3, 0.67),
    (4, 2, 1.00, 2, 1.00),
    (5, 2, 1.00, 3, 0.00),
    (6, 3, 0.33, 3, 0.67),
    (7, 2, 1.00, 3, 0.67),
    (8, 5, 0.20, 4, 1.00),
    (9, 2, 1.00, 3, 0.67),
    (10, 2, 0.00, 3, 0.67),
    (11, 3, 1.00, 3, 1.00),
    (12, 2, 1.00, 2, 0.00),
    (13, 4, 0.25, 5, 0.20),
    (14, 3, 0.67, 4, 0.50),
    (15, 4, 0.50, 6, 0.67),
    (16, 12, 0.33, 9, 0.33),
    (17, 2, 0.50, 3, 0.67),
    (18, 3, 1.00, 4, 0.25),
    (19, 4, 0.25, 3, 0.67),
    (20, 3, 0.00, 2, 0.00),
    (21, 4, 0.50, 5, 0.20),
)


def reconstruct_count(total: int, proportion: float, label: str = "") -> int:
    """Recover an integer count from a proportion printed to two decimals."""
    count = round(total * proportion)
    # the printed proportion must be what count/total rounds to
    if not 0 <= count <= total or abs(count / total - proportion) > 0.005 + 1e-9:
        raise ReconstructionError(f"{label}: {total} x {proportion} does not reconstruct to an integer count")
    return count


def calgb_dataset() -> StratifiedDataset:
    strata = []
    for inst, n1, p1, n0, p0 in CALGB_PUBLISHED:
        label = str(inst)
        n11 = reconstruct_count(n1, p1, label)
        n10 = reconstruct_count(n0, p0, label)
        strata.append(StratumTable(n11, n10, n1 - n11, n0 - n10, label=label))
    return StratifiedDataset(tuple(strata))


def calgb_records() -> list[SubjectRecord]:
    return expand_records(calgb_dataset())


EMBEDDED = {"calgb": calgb_dataset}


def load_embedded(name: str) -> StratifiedDataset:
    try:
        return EMBEDDED[name.lower()]()
    except KeyError:
        raise FormatError(f"no embedded dataset named {name!r}") from None
