"""Selectivity indices, the polar recruitment map, and operating-point search.

The polar map places each steering configuration at its cathode angle and
draws recruitment inward: radius 1 - recruitment, so full recruitment lands
on the centre of the plot.  Data are stored non-inverted; the inversion
happens only when radii are asked for, which keeps round-trips exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from cuffbench.dsp import RecruitmentCurve
from cuffbench.electrode import central_angle_deg, parse_config

EPS_TOTAL_RECRUITMENT = 1e-6

# {config name: {amplitude: {muscle: recruitment}}}
EvaluationGrid = dict[str, dict[float, dict[str, float]]]


def selectivity_index(
    recruitments: Mapping[str, float], target: str
) -> float | None:
    """Fraction of the total evoked recruitment landing on the target muscle.

    Returns None (explicit no-activation, not zero selectivity) when total
    recruitment is below the epsilon floor.
    """
    total = float(sum(recruitments.values()))
    if total <= EPS_TOTAL_RECRUITMENT:
        return None
    return float(recruitments.get(target, 0.0)) / total


@dataclass(frozen=True)
class SelectivityRecord:
    config: str
    amplitude_ua: float
    target: str
    selectivity_index: float
    target_recruitment: float


@dataclass(frozen=True)
class PolarMap:
    """Recruitment per (intensity, steering configuration, muscle).

    `values[(intensity, config, muscle)]` holds the non-inverted recruitment;
    angles are the cathode angles of the steering configurations present.
    """

    muscles: tuple[str, ...]
    intensities_ua: tuple[float, ...]
    configs: tuple[str, ...]
    values: Mapping[tuple[float, str, str], float]
    normalization: str

    def angle_deg(self, config: str) -> float:
        return central_angle_deg(parse_config(config).k)

    def recruitment(self, intensity_ua: float, config: str, muscle: str) -> float:
        return self.values[(intensity_ua, config, muscle)]

    def radius(self, intensity_ua: float, config: str, muscle: str) -> float:
        """Plot radius: 1 - recruitment (1.0 recruits to the centre)."""
        return 1.0 - self.recruitment(intensity_ua, config, muscle)

    def rows(self) -> list[dict[str, object]]:
        out = []
        for intensity in self.intensities_ua:
            for config in self.configs:
                for muscle in self.muscles:
                    key = (intensity, config, muscle)
                    if key not in self.values:
                        continue
                    r = self.values[key]
                    out.append(
                        {
                            "intensity_uA": intensity,
                            "config": config,
                            "config_angle_deg": self.angle_deg(config),
                            "muscle": muscle,
                            "recruitment": r,
                            "radius": 1.0 - r,
                        }
                    )
        return out


def build_polar_map(curves: Iterable[RecruitmentCurve]) -> PolarMap:
    """Project recruitment curves onto the steering-angle polar layout.

    Only steering configurations appear (the ring has no angle), and curves
    flagged unnormalizable (no response anywhere) are omitted rather than
    drawn as zeros.  Intensities are aligned across configurations by
    exact-value intersection; disjoint grids are an error.
    """
    str_curves = [
        c
        for c in curves
        if c.config.upper().startswith("STR") and c.normalization != "unnormalizable"
    ]
    if not str_curves:
        raise ValueError("polar map needs at least one steering-configuration curve")
    scopes = {c.normalization for c in str_curves}
    if len(scopes) > 1:
        raise ValueError(f"curves mix normalization scopes {sorted(scopes)}")

    common: set[float] | None = None
    for c in str_curves:
        amps = set(c.amplitudes)
        common = amps if common is None else common & amps
    if not common:
        raise ValueError("no common intensities across configurations")

    values: dict[tuple[float, str, str], float] = {}
    muscles = sorted({c.muscle for c in str_curves})
    configs = sorted({c.config for c in str_curves}, key=lambda n: parse_config(n).k)
    for c in str_curves:
        for p in c.points:
            if p.amplitude_ua in common and p.normalized is not None:
                values[(p.amplitude_ua, c.config, c.muscle)] = p.normalized
    return PolarMap(
        muscles=tuple(muscles),
        intensities_ua=tuple(sorted(common)),
        configs=tuple(configs),
        values=values,
        normalization=scopes.pop(),
    )


def evaluation_grid_from_curves(curves: Iterable[RecruitmentCurve]) -> EvaluationGrid:
    grid: EvaluationGrid = {}
    for c in curves:
        dest = grid.setdefault(c.config, {})
        for p in c.points:
            if p.normalized is None:
                continue
            dest.setdefault(p.amplitude_ua, {})[c.muscle] = p.normalized
    return grid


def find_selective_points(
    source,
    target: str,
    min_target_recruitment: float = 0.0,
    max_offtarget_recruitment: float = 1.0,
) -> list[SelectivityRecord]:
    """Exhaustive scan of every (configuration, amplitude) cell.

    `source` is either an evaluation grid or an iterable of recruitment
    curves.  Feasible cells (target above, all off-targets below their
    bounds, total activation above the epsilon floor) are ranked by
    selectivity index; ties break toward lower amplitude, then lower
    configuration index (ring first, then STR1..6).
    """
    grid: EvaluationGrid
    if isinstance(source, dict):
        grid = source
    else:
        grid = evaluation_grid_from_curves(source)
    if not grid:
        raise ValueError("no configurations to scan")

    records: list[SelectivityRecord] = []
    for config_name, per_amp in grid.items():
        for amplitude, recruitments in per_amp.items():
            si = selectivity_index(recruitments, target)
            if si is None:
                continue
            target_r = recruitments.get(target, 0.0)
            if target_r < min_target_recruitment:
                continue
            off = [r for m, r in recruitments.items() if m != target]
            if any(r > max_offtarget_recruitment for r in off):
                continue
            records.append(
                SelectivityRecord(
                    config=config_name,
                    amplitude_ua=amplitude,
                    target=target,
                    selectivity_index=si,
                    target_recruitment=target_r,
                )
            )
    records.sort(
        key=lambda r: (-r.selectivity_index, r.amplitude_ua, parse_config(r.config).index)
    )
    return records
