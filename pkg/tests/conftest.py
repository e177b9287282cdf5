"""Shared cohort builders and session-scoped fixtures."""

from __future__ import annotations

import pytest

from braingraph.cohort import CohortDataset, parse_volume_table, write_volume_table
from braingraph.synth import SynthConfig, generate_cohort


def cohort_csv(rows) -> str:
    """CSV text from (patient_id, group, timepoint, region, volume) tuples."""
    lines = ["patient_id,group,timepoint,region,volume_mm3"]
    lines += [",".join(str(c) for c in row) for row in rows]
    return "\n".join(lines) + "\n"


def volume_rows(pid: str, group: str, t0: dict, t1: dict) -> list:
    rows = [(pid, group, "T0", r, v) for r, v in t0.items()]
    rows += [(pid, group, "T1", r, v) for r, v in t1.items()]
    return rows


def dataset_from_ratios(spec, regions=None) -> CohortDataset:
    """Cohort where each patient has exact per-region change ratios.

    ``spec`` is a list of (patient_id, group, ratio sequence); volumes are
    T0 = 1000 and T1 = 1000 * (1 + ratio), so the parsed ratio vector equals
    the input up to float division round-off.
    """
    d = len(spec[0][2])
    regions = regions or [f"r{i:02d}" for i in range(d)]
    rows = []
    for pid, group, ratios in spec:
        t0 = {regions[i]: 1000.0 for i in range(d)}
        t1 = {regions[i]: 1000.0 * (1.0 + ratios[i]) for i in range(d)}
        rows += volume_rows(pid, group, t0, t1)
    return parse_volume_table(cohort_csv(rows))


def toy_six_patient_rows() -> list:
    """Two patients per group over three regions, all volumes positive."""
    rows = []
    shrink = {"AD": 0.9, "CN": 1.0, "MCI": 0.95}
    for group in ("AD", "CN", "MCI"):
        for i in range(2):
            t0 = {f"region-{j}": 100.0 * (j + 1) for j in range(3)}
            t1 = {
                f"region-{j}": shrink[group] * 100.0 * (j + 1) + i for j in range(3)
            }
            rows += volume_rows(f"{group}-{i:04d}", group, t0, t1)
    return rows


@pytest.fixture(scope="session")
def default_cohort() -> CohortDataset:
    """The default-config synthetic cohort (857 patients, 110 regions)."""
    return generate_cohort(SynthConfig())


@pytest.fixture(scope="session")
def default_cohort_csv(tmp_path_factory, default_cohort):
    path = tmp_path_factory.mktemp("cohort") / "cohort.csv"
    path.write_text(write_volume_table(default_cohort))
    return path
