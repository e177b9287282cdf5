"""Longitudinal region-volume tables: parsing, validation, summaries.

Interchange format is a long CSV with header exactly
``patient_id,group,timepoint,region,volume_mm3``: one measurement per row,
timepoints ``T0``/``T1``, groups drawn from the closed set {AD, CN, MCI}.
Region and patient order are fixed lexicographically at parse time; every
downstream matrix indexes regions in that order.

A (patient, region) pair is *usable* only if both timepoints are present with
strictly positive volumes. Non-positive volumes are retained in the dataset but
marked invalid rather than dropped, so per-group validity can be computed
exactly. A region is valid for a group when every patient of that group has a
usable pair for it; the cohort-wide valid node set is the intersection across
groups.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

GROUPS = ("AD", "CN", "MCI")
TIMEPOINTS = ("T0", "T1")
CSV_HEADER = ("patient_id", "group", "timepoint", "region", "volume_mm3")


class CohortError(ValueError):
    """Malformed or inconsistent cohort data."""


@dataclass(frozen=True)
class Patient:
    """One patient's group label and per-timepoint region -> volume maps.

    Volumes are stored as parsed; a region key may be absent (missing
    measurement) or map to a non-positive value (recorded but invalid).
    """

    patient_id: str
    group: str
    t0: dict[str, float]
    t1: dict[str, float]

    def usable(self, region: str) -> bool:
        """True if both timepoints are present and strictly positive."""
        v0 = self.t0.get(region)
        v1 = self.t1.get(region)
        return v0 is not None and v0 > 0.0 and v1 is not None and v1 > 0.0


@dataclass(frozen=True)
class CohortDataset:
    """Immutable cohort: patients sorted by id, regions sorted by name."""

    patients: tuple[Patient, ...]
    regions: tuple[str, ...]
    group_sizes: dict[str, int] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.regions)

    def region_index(self, name: str) -> int:
        return self.regions.index(name)

    def patients_in_group(self, group: str) -> tuple[Patient, ...]:
        return tuple(p for p in self.patients if p.group == group)


@dataclass(frozen=True)
class ValidNodeSet:
    """Region indices usable for every patient, per group and cohort-wide."""

    indices: tuple[int, ...]
    per_group_valid: dict[str, frozenset[int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class CohortSummary:
    n_patients: int
    group_counts: dict[str, int]
    n_regions: int
    n_valid_regions: int

    def __str__(self) -> str:
        groups = ", ".join(f"{g}={n}" for g, n in sorted(self.group_counts.items()))
        return (
            f"patients: {self.n_patients} ({groups or 'none'}); "
            f"regions: {self.n_regions}; valid regions: {self.n_valid_regions}"
        )


def _reader(stream: str | TextIO) -> Iterable[list[str]]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    return csv.reader(stream)


def parse_volume_table(stream: str | TextIO) -> CohortDataset:
    """Parse the long CSV format into a CohortDataset.

    Raises CohortError with a line number for malformed rows (wrong column
    count, unknown group or timepoint, unparsable or non-finite volume), for
    duplicate (patient, timepoint, region) keys, for conflicting group labels
    on one patient, and for patients missing a timepoint entirely.
    """
    rows = _reader(stream)
    try:
        header = next(iter(rows))
    except StopIteration:
        raise CohortError("empty input: missing header row") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise CohortError(
            f"bad header: expected {','.join(CSV_HEADER)!r}, got {','.join(header)!r}"
        )

    volumes: dict[str, dict[str, dict[str, float]]] = {}
    patient_groups: dict[str, str] = {}
    seen: set[tuple[str, str, str]] = set()
    regions: set[str] = set()

    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise CohortError(f"line {lineno}: expected 5 columns, got {len(row)}")
        pid, group, timepoint, region, vol_text = (c.strip() for c in row)
        if group not in GROUPS:
            raise CohortError(f"line {lineno}: unknown group {group!r}")
        if timepoint not in TIMEPOINTS:
            raise CohortError(f"line {lineno}: unknown timepoint {timepoint!r}")
        if not pid or not region:
            raise CohortError(f"line {lineno}: empty patient_id or region")
        try:
            volume = float(vol_text)
        except ValueError:
            raise CohortError(f"line {lineno}: unparsable volume {vol_text!r}") from None
        if not math.isfinite(volume):
            raise CohortError(f"line {lineno}: non-finite volume {vol_text!r}")
        key = (pid, timepoint, region)
        if key in seen:
            raise CohortError(
                f"line {lineno}: duplicate record for patient {pid!r}, "
                f"timepoint {timepoint}, region {region!r}"
            )
        seen.add(key)
        prior = patient_groups.setdefault(pid, group)
        if prior != group:
            raise CohortError(
                f"line {lineno}: patient {pid!r} labeled both {prior} and {group}"
            )
        volumes.setdefault(pid, {"T0": {}, "T1": {}})[timepoint][region] = volume
        regions.add(region)

    patients = []
    for pid in sorted(volumes):
        per_tp = volumes[pid]
        for tp in TIMEPOINTS:
            if not per_tp[tp]:
                raise CohortError(f"patient {pid!r} has no {tp} measurements")
        patients.append(Patient(pid, patient_groups[pid], per_tp["T0"], per_tp["T1"]))

    group_sizes: dict[str, int] = {}
    for p in patients:
        group_sizes[p.group] = group_sizes.get(p.group, 0) + 1
    return CohortDataset(tuple(patients), tuple(sorted(regions)), group_sizes)


def compute_valid_nodes(dataset: CohortDataset) -> ValidNodeSet:
    """Intersect per-group validity: a region index is valid for a group iff
    every patient in that group has positive volumes at both timepoints."""
    if not dataset.patients:
        raise CohortError("empty dataset")
    for group, size in dataset.group_sizes.items():
        if size == 0:
            raise CohortError(f"empty group {group!r}")

    per_group: dict[str, frozenset[int]] = {}
    for group in sorted(dataset.group_sizes):
        members = dataset.patients_in_group(group)
        valid = frozenset(
            i
            for i, region in enumerate(dataset.regions)
            if all(p.usable(region) for p in members)
        )
        per_group[group] = valid

    shared: frozenset[int] = frozenset(range(dataset.d))
    for valid in per_group.values():
        shared &= valid
    return ValidNodeSet(tuple(sorted(shared)), per_group)


def summarize_cohort(dataset: CohortDataset) -> CohortSummary:
    """Counts for reporting; valid-region count is 0 for an empty dataset."""
    n_valid = len(compute_valid_nodes(dataset)) if dataset.patients else 0
    return CohortSummary(
        n_patients=len(dataset.patients),
        group_counts=dict(dataset.group_sizes),
        n_regions=dataset.d,
        n_valid_regions=n_valid,
    )


def write_volume_table(dataset: CohortDataset) -> str:
    """Serialize back to the long CSV format.

    Rows are ordered patient, then T0 before T1, then region in dataset region
    order; missing measurements stay missing. Floats use the shortest
    round-trip representation, so parse -> write -> parse is stable.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in dataset.patients:
        for tp, vols in (("T0", p.t0), ("T1", p.t1)):
            for region in dataset.regions:
                if region in vols:
                    writer.writerow(
                        [p.patient_id, p.group, tp, region, repr(float(vols[region]))]
                    )
    return out.getvalue()
