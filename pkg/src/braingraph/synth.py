"""Seeded synthetic cohorts with planted group-discriminative regions.

Each patient draws baseline volumes uniformly from a range; the true per-region
change ratio is the group's effect size on planted regions (0 elsewhere) plus
Gaussian noise, and T1 = T0 * (1 + ratio). A configurable number of regions is
then corrupted by deleting the T1 measurement for one randomly chosen patient,
which renders those regions invalid cohort-wide. Generation is deterministic
given the seed. Realism (scanner effects, anatomical covariance, trajectories)
is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohort import CohortDataset, Patient

DEFAULT_GROUP_SIZES = {"AD": 213, "MCI": 322, "CN": 322}
DEFAULT_EFFECTS = {"AD": -0.08, "MCI": -0.04, "CN": 0.0}
DEFAULT_PLANTED = (5, 14, 23, 32, 41, 50, 59, 68, 77, 86, 95, 104)


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters; defaults give 857 patients over 110 regions."""

    seed: int = 0
    d: int = 110
    group_sizes: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_GROUP_SIZES))
    planted_nodes: tuple[int, ...] = DEFAULT_PLANTED
    effect_sizes: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_EFFECTS))
    noise_sd: float = 0.02
    baseline_volume_range: tuple[float, float] = (500.0, 20000.0)
    invalid_node_count: int = 9

    def __post_init__(self) -> None:
        object.__setattr__(self, "planted_nodes", tuple(int(i) for i in self.planted_nodes))
        if self.d < 1:
            raise ValueError("d must be positive")
        if len(set(self.planted_nodes)) != len(self.planted_nodes):
            raise ValueError("planted_nodes must be distinct")
        if self.d < len(self.planted_nodes):
            raise ValueError("more planted nodes than regions")
        if any(not 0 <= i < self.d for i in self.planted_nodes):
            raise ValueError("planted node index out of range")
        if not all(np.isfinite(e) for e in self.effect_sizes.values()):
            raise ValueError("effect sizes must be finite")
        # noise_sd is normally positive; exactly 0 is allowed for degenerate
        # no-noise cohorts.
        if self.noise_sd < 0.0:
            raise ValueError("noise_sd must be non-negative")
        lo, hi = self.baseline_volume_range
        if not 0.0 < lo < hi:
            raise ValueError("baseline_volume_range must satisfy 0 < lo < hi")
        if not 0 <= self.invalid_node_count <= self.d:
            raise ValueError("invalid_node_count outside [0, d]")
        for g in self.group_sizes:
            if g not in self.effect_sizes:
                raise ValueError(f"missing effect size for group {g!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        """Build from a plain JSON-style dict; unknown keys are an error."""
        known = {
            "seed",
            "d",
            "group_sizes",
            "planted_nodes",
            "effect_sizes",
            "noise_sd",
            "baseline_volume_range",
            "invalid_node_count",
        }
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        kwargs = dict(doc)
        if "planted_nodes" in kwargs:
            kwargs["planted_nodes"] = tuple(kwargs["planted_nodes"])
        if "baseline_volume_range" in kwargs:
            kwargs["baseline_volume_range"] = tuple(kwargs["baseline_volume_range"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "d": self.d,
            "group_sizes": dict(self.group_sizes),
            "planted_nodes": list(self.planted_nodes),
            "effect_sizes": dict(self.effect_sizes),
            "noise_sd": self.noise_sd,
            "baseline_volume_range": list(self.baseline_volume_range),
            "invalid_node_count": self.invalid_node_count,
        }


def region_name(i: int, d: int) -> str:
    width = max(3, len(str(d - 1)))
    return f"region-{i:0{width}d}"


def generate_cohort(config: SynthConfig) -> CohortDataset:
    """Deterministic cohort for the given config.

    Groups are generated in sorted label order; per patient one uniform T0
    draw and one Gaussian noise draw of length d, in that order, so the random
    stream is pinned. Corruption happens after generation: invalid_node_count
    distinct regions each lose the T1 value of one uniformly chosen patient.
    """
    rng = np.random.default_rng(config.seed)
    regions = tuple(region_name(i, config.d) for i in range(config.d))
    planted = np.array(config.planted_nodes, dtype=int)
    lo, hi = config.baseline_volume_range

    patients: list[Patient] = []
    for group in sorted(config.group_sizes):
        effect = config.effect_sizes[group]
        for i in range(config.group_sizes[group]):
            t0 = rng.uniform(lo, hi, config.d)
            ratio = rng.normal(0.0, config.noise_sd, config.d)
            if planted.size:
                ratio[planted] += effect
            t1 = t0 * (1.0 + ratio)
            patients.append(
                Patient(
                    patient_id=f"{group}-{i:04d}",
                    group=group,
                    t0=dict(zip(regions, t0.tolist())),
                    t1=dict(zip(regions, t1.tolist())),
                )
            )

    if config.invalid_node_count:
        corrupt = rng.choice(config.d, size=config.invalid_node_count, replace=False)
        for r in corrupt:
            victim = int(rng.integers(0, len(patients)))
            del patients[victim].t1[regions[int(r)]]

    patients.sort(key=lambda p: p.patient_id)
    return CohortDataset(tuple(patients), regions, dict(config.group_sizes))
