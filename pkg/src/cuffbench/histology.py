"""Fascicle cross-section analysis: counts, inter-section matching with split
detection, and motor-fiber concentration statistics.

Sections arrive as annotated fascicle records (centroid, area, optional motor
fiber count).  Geometry is the circle-equivalent disc around each centroid;
that is enough for nearest-centroid matching across neighbouring sections and
for seeding simulator fiber populations, while an optional contour field is
reserved in the file format for richer annotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

DEFAULT_MATCH_RADIUS_UM = 150.0
DEFAULT_SPLIT_AREA_TOL = 0.30


@dataclass(frozen=True)
class FascicleRecord:
    id: str
    centroid_um: tuple[float, float]
    area_um2: float
    motor_fiber_count: int | None = None
    contour_um: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.area_um2 <= 0:
            raise ValueError(f"fascicle {self.id!r} has non-positive area")
        if self.motor_fiber_count is not None and self.motor_fiber_count < 0:
            raise ValueError(f"fascicle {self.id!r} has negative motor fiber count")

    @property
    def radius_um(self) -> float:
        """Circle-equivalent radius."""
        return math.sqrt(self.area_um2 / math.pi)


@dataclass(frozen=True)
class FascicleSection:
    """All annotated fascicles of one transversal section."""

    z_um: float
    fascicles: tuple[FascicleRecord, ...]

    def __post_init__(self) -> None:
        ids = [f.id for f in self.fascicles]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate fascicle ids {dupes}")
        centroids = [f.centroid_um for f in self.fascicles]
        if len(set(centroids)) != len(centroids):
            raise ValueError("fascicle centroids must be distinct")

    def __len__(self) -> int:
        return len(self.fascicles)

    def by_id(self) -> dict[str, FascicleRecord]:
        return {f.id: f for f in self.fascicles}


@dataclass(frozen=True)
class SectionCorrespondence:
    """Pairing of two neighbouring sections: 1:1 matches, detected splits
    (one parent fascicle dividing into two children), and leftovers."""

    matches: tuple[tuple[str, str], ...]
    splits: tuple[tuple[str, tuple[str, str]], ...]
    unmatched_a: tuple[str, ...]
    unmatched_b: tuple[str, ...]

    @property
    def n_matched(self) -> int:
        return len(self.matches)


def load_section(path) -> FascicleSection:
    """Read a section file (format owned by cuffbench.formats)."""
    from cuffbench.formats import read_section

    return read_section(path)


def match_fascicles(
    a: FascicleSection,
    b: FascicleSection,
    radius_um: float = DEFAULT_MATCH_RADIUS_UM,
    split_area_tol: float = DEFAULT_SPLIT_AREA_TOL,
) -> SectionCorrespondence:
    """Greedy nearest-centroid correspondence between two sections.

    Candidate pairs within `radius_um` are taken closest-first as 1:1
    matches.  A matched fascicle of A is upgraded to a split when a second,
    still unmatched B fascicle lies within the radius and the two children's
    combined area is within `split_area_tol` of the parent's.
    """
    if radius_um <= 0:
        raise ValueError("matching radius must be positive")

    def dist(fa: FascicleRecord, fb: FascicleRecord) -> float:
        return math.hypot(
            fa.centroid_um[0] - fb.centroid_um[0], fa.centroid_um[1] - fb.centroid_um[1]
        )

    pairs = []
    for ia, fa in enumerate(a.fascicles):
        for ib, fb in enumerate(b.fascicles):
            d = dist(fa, fb)
            if d <= radius_um:
                pairs.append((d, ia, ib))
    pairs.sort()

    match_of_a: dict[int, int] = {}
    taken_b: set[int] = set()
    for d, ia, ib in pairs:
        if ia in match_of_a or ib in taken_b:
            continue
        match_of_a[ia] = ib
        taken_b.add(ib)

    splits: list[tuple[str, tuple[str, str]]] = []
    split_a: set[int] = set()
    for ia, fa in enumerate(a.fascicles):
        ib = match_of_a.get(ia)
        if ib is None:
            continue
        candidates = [
            (dist(fa, b.fascicles[j]), j)
            for j in range(len(b.fascicles))
            if j not in taken_b and dist(fa, b.fascicles[j]) <= radius_um
        ]
        candidates.sort()
        for _, j in candidates:
            combined = b.fascicles[ib].area_um2 + b.fascicles[j].area_um2
            if abs(combined - fa.area_um2) <= split_area_tol * fa.area_um2:
                splits.append((fa.id, (b.fascicles[ib].id, b.fascicles[j].id)))
                split_a.add(ia)
                taken_b.add(j)
                break

    matches = tuple(
        (a.fascicles[ia].id, b.fascicles[ib].id)
        for ia, ib in sorted(match_of_a.items())
        if ia not in split_a
    )
    unmatched_a = tuple(f.id for i, f in enumerate(a.fascicles) if i not in match_of_a)
    unmatched_b = tuple(f.id for j, f in enumerate(b.fascicles) if j not in taken_b)
    return SectionCorrespondence(
        matches=matches,
        splits=tuple(splits),
        unmatched_a=unmatched_a,
        unmatched_b=unmatched_b,
    )


@dataclass(frozen=True)
class MotorFiberStats:
    """Fiber-density ranking for one section; `available` is False when any
    fascicle lacks a motor fiber count."""

    available: bool
    densities: tuple[tuple[str, float], ...]  # (fascicle id, fibers per um^2), descending
    total_fibers: int
    max_density: float
    concentration_index: float

    @property
    def ranking(self) -> tuple[str, ...]:
        return tuple(fid for fid, _ in self.densities)


def motor_fiber_stats(section: FascicleSection) -> MotorFiberStats:
    """Density ranking plus a normalised Gini concentration index.

    The index is 0 when every fascicle has the same fiber density and exactly
    1 in the degenerate all-fibers-in-one-fascicle case.
    """
    if len(section) == 0 or any(f.motor_fiber_count is None for f in section.fascicles):
        return MotorFiberStats(False, (), 0, 0.0, 0.0)
    dens = [(f.id, f.motor_fiber_count / f.area_um2) for f in section.fascicles]
    dens.sort(key=lambda item: (-item[1], item[0]))
    total = sum(f.motor_fiber_count for f in section.fascicles)
    values = np.array([d for _, d in dens], dtype=float)
    return MotorFiberStats(
        available=True,
        densities=tuple(dens),
        total_fibers=int(total),
        max_density=float(values.max()),
        concentration_index=_normalized_gini(values),
    )


def _normalized_gini(values: np.ndarray) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    mean = values.mean()
    if mean <= 0:
        return 0.0
    diff_sum = np.abs(values[:, None] - values[None, :]).sum()
    gini = diff_sum / (2.0 * n * n * mean)
    return float(gini * n / (n - 1))


@dataclass(frozen=True)
class FiberSamplingParams:
    """How to turn annotated motor fiber counts into simulator fibers."""

    fibers_per_motor_count: float = 1.0
    threshold_median_v: float = 0.03
    threshold_sigma: float = 0.5

    def __post_init__(self) -> None:
        if self.fibers_per_motor_count < 0:
            raise ValueError("fiber scale must be >= 0")
        if self.threshold_median_v <= 0 or self.threshold_sigma < 0:
            raise ValueError("bad threshold distribution parameters")


def section_to_nerve_model(
    section: FascicleSection,
    muscle_assignment: Mapping[str, object],
    fiber_params: FiberSamplingParams | None = None,
    seed: int = 0,
    sigma_s_per_m: float | None = None,
):
    """Build a simulator nerve from an annotated section.

    Fibers are sampled uniformly strictly inside each fascicle's
    circle-equivalent boundary, in numbers proportional to the annotated
    motor fiber count; thresholds are drawn log-normally.  Deterministic for
    a fixed seed.  `muscle_assignment` maps fascicle id to a muscle name or
    to a {muscle: weight} mapping.
    """
    from cuffbench.nervesim import DEFAULT_SIGMA_S_PER_M, FiberSet, NerveModel

    params = fiber_params or FiberSamplingParams()
    by_id = section.by_id()
    for fid in muscle_assignment:
        if fid not in by_id:
            raise ValueError(f"muscle assignment references unknown fascicle {fid!r}")

    rng = np.random.default_rng(seed)
    fiber_sets = []
    for fascicle in section.fascicles:
        count = fascicle.motor_fiber_count or 0
        n = int(round(count * params.fibers_per_motor_count))
        if n == 0:
            fiber_sets.append(
                FiberSet(fascicle.id, np.zeros((0, 2)), np.zeros(0))
            )
            continue
        u = rng.random(n)
        phi = rng.uniform(0.0, 2.0 * np.pi, n)
        rr = fascicle.radius_um * np.sqrt(u)
        cx, cy = fascicle.centroid_um
        xy = np.column_stack([cx + rr * np.cos(phi), cy + rr * np.sin(phi)])
        thresholds = params.threshold_median_v * np.exp(
            params.threshold_sigma * rng.standard_normal(n)
        )
        fiber_sets.append(FiberSet(fascicle.id, xy, thresholds))

    muscle_map: dict[str, dict[str, float]] = {}
    for fid, assigned in muscle_assignment.items():
        if isinstance(assigned, str):
            muscle_map[fid] = {assigned: 1.0}
        else:
            muscle_map[fid] = {str(m): float(w) for m, w in dict(assigned).items()}

    return NerveModel(
        cross_section=section,
        sigma_s_per_m=sigma_s_per_m if sigma_s_per_m is not None else DEFAULT_SIGMA_S_PER_M,
        fascicle_muscle_map=muscle_map,
        fibers=fiber_sets,
        rng_seed=seed,
    )
