"""Synthetic nerve standing in for the animal.

Fibers live at fixed cross-section positions with individual activation
thresholds.  Each cuff contact is a point current source in a homogeneous
medium (rings are expanded into six evenly spaced sub-sources so the geometry
is exactly 60-degree symmetric); a fiber fires when the magnitude of the
superposed potential at its position reaches its threshold.  The cathode
dominates recruitment because it carries the full current while the return is
split three ways.  This is a deliberate simplification of full cable-model
simulation: it trades fidelity for an analytic, provably monotone oracle that
closes the pipeline end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from cuffbench import kernels
from cuffbench.dsp import ACQ_GAIN, MUSCLES, Channel, Recording, emulate_acquisition
from cuffbench.electrode import (
    N_CENTRAL,
    DEFAULT_LAYOUT,
    CuffLayout,
    CurrentPattern,
    StimConfig,
    central_angle_deg,
    contact_position,
)
from cuffbench.protocol import (
    DEFAULT_SAMPLE_RATE_HZ,
    PulseSpec,
    RampSpec,
    StimEvent,
    build_pulse_train,
    ramp_amplitudes,
)

if TYPE_CHECKING:
    from cuffbench.histology import FascicleSection

DEFAULT_SIGMA_S_PER_M = 0.3
DEFAULT_MWAVE_MAX_UV = 2000.0

UM_PER_M = 1e6
A_PER_UA = 1e-6


@dataclass
class FiberSet:
    """Motor fibers of one fascicle: cross-section positions and thresholds."""

    fascicle_id: str
    xy_um: np.ndarray  # (n, 2)
    thresholds_v: np.ndarray  # (n,)

    def __post_init__(self) -> None:
        self.xy_um = np.ascontiguousarray(np.atleast_2d(self.xy_um), dtype=float)
        self.thresholds_v = np.ascontiguousarray(self.thresholds_v, dtype=float)
        if self.xy_um.size == 0:
            self.xy_um = self.xy_um.reshape(0, 2)
        if self.xy_um.shape[1] != 2:
            raise ValueError("fiber positions must be (n, 2)")
        if self.xy_um.shape[0] != self.thresholds_v.shape[0]:
            raise ValueError("one threshold per fiber required")
        if np.any(self.thresholds_v <= 0):
            raise ValueError("fiber thresholds must be positive")

    @property
    def n_fibers(self) -> int:
        return self.xy_um.shape[0]


@dataclass
class NerveModel:
    """Fascicle cross-section, fiber populations and the fascicle-muscle map."""

    cross_section: "FascicleSection"
    sigma_s_per_m: float
    fascicle_muscle_map: dict[str, dict[str, float]]
    fibers: list[FiberSet]
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma_s_per_m <= 0:
            raise ValueError("conductivity must be positive")
        by_id = {f.id: f for f in self.cross_section.fascicles}
        for fid in self.fascicle_muscle_map:
            if fid not in by_id:
                raise ValueError(f"muscle map references unknown fascicle {fid!r}")
        for fs in self.fibers:
            fascicle = by_id.get(fs.fascicle_id)
            if fascicle is None:
                raise ValueError(f"fiber set references unknown fascicle {fs.fascicle_id!r}")
            if fs.n_fibers:
                radius = fascicle.radius_um
                cx, cy = fascicle.centroid_um
                d = np.hypot(fs.xy_um[:, 0] - cx, fs.xy_um[:, 1] - cy)
                if np.any(d > radius * (1 + 1e-9)):
                    raise ValueError(
                        f"fiber outside fascicle {fs.fascicle_id!r} boundary"
                    )

    @property
    def muscles(self) -> list[str]:
        out = sorted({m for mapping in self.fascicle_muscle_map.values() for m in mapping})
        return out

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
        """All fibers as flat arrays: positions (n,3) um, thresholds, and the
        (n, n_muscles) weight matrix in `muscles` order."""
        muscles = self.muscles
        col = {m: j for j, m in enumerate(muscles)}
        xyz: list[np.ndarray] = []
        ths: list[np.ndarray] = []
        wts: list[np.ndarray] = []
        for fs in self.fibers:
            n = fs.n_fibers
            if n == 0:
                continue
            pos = np.zeros((n, 3))
            pos[:, :2] = fs.xy_um
            xyz.append(pos)
            ths.append(fs.thresholds_v)
            w = np.zeros((n, len(muscles)))
            for muscle, weight in self.fascicle_muscle_map.get(fs.fascicle_id, {}).items():
                w[:, col[muscle]] = weight
            wts.append(w)
        if not xyz:
            return (
                np.zeros((0, 3)),
                np.zeros(0),
                np.zeros((0, len(muscles))),
                muscles,
            )
        return np.vstack(xyz), np.concatenate(ths), np.vstack(wts), muscles


def pattern_sources(
    layout: CuffLayout, pattern: CurrentPattern
) -> tuple[np.ndarray, np.ndarray]:
    """Expand a current pattern into point sources (positions um, weights).

    Single central contacts map to one source; each ring becomes six
    sub-sources at the central contact angles carrying a sixth of the ring
    weight, which keeps the source set exactly 60-degree symmetric.
    """
    positions: list[tuple[float, float, float]] = []
    weights: list[float] = []
    r = layout.radius_um
    for contact, w in pattern.items():
        wf = float(w)
        if contact.kind == "central":
            positions.append(contact_position(layout, contact))
            weights.append(wf)
        else:
            z = layout.ring_offsets_um[0 if contact.kind == "ring_distal" else 1]
            for k in range(1, N_CENTRAL + 1):
                theta = math.radians(central_angle_deg(k))
                positions.append((r * math.cos(theta), r * math.sin(theta), z))
                weights.append(wf / N_CENTRAL)
    return np.asarray(positions, dtype=float), np.asarray(weights, dtype=float)


def potential_at(
    point_um: Sequence[float],
    pattern: CurrentPattern,
    total_current_ua: float,
    layout: CuffLayout = DEFAULT_LAYOUT,
    sigma_s_per_m: float = DEFAULT_SIGMA_S_PER_M,
) -> float:
    """Extracellular potential (volts) of a pattern at one field point."""
    src_um, w = pattern_sources(layout, pattern)
    pt = np.asarray(point_um, dtype=float).reshape(1, 3)
    u = kernels.unit_potentials(src_um / UM_PER_M, w, pt / UM_PER_M, sigma_s_per_m)
    return float(u[0]) * total_current_ua * A_PER_UA


def _unit_driving(nerve: NerveModel, config: StimConfig, layout: CuffLayout) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
    """Per-fiber driving potential magnitude per ampere, plus stacked arrays."""
    xyz_um, th, w, muscles = nerve.stacked()
    src_um, src_w = pattern_sources(layout, config.pattern)
    if xyz_um.shape[0] == 0:
        return np.zeros(0), th, w, muscles
    u = kernels.unit_potentials(
        src_um / UM_PER_M, src_w, xyz_um / UM_PER_M, nerve.sigma_s_per_m
    )
    return np.abs(u), th, w, muscles


def recruitment_grid(
    nerve: NerveModel,
    config: StimConfig,
    amplitudes_ua: Sequence[float],
    layout: CuffLayout = DEFAULT_LAYOUT,
) -> tuple[list[str], np.ndarray]:
    """Ground-truth per-muscle recruited fraction over an amplitude grid."""
    driving, th, w, muscles = _unit_driving(nerve, config, layout)
    amps = np.asarray(amplitudes_ua, dtype=float) * A_PER_UA
    totals = w.sum(axis=0)
    if driving.shape[0] == 0:
        return muscles, np.zeros((len(amps), len(muscles)))
    counts = kernels.recruitment_counts(driving, th, w, amps)
    fractions = np.divide(
        counts, totals[None, :], out=np.zeros_like(counts), where=totals[None, :] > 0
    )
    return muscles, fractions


def simulate_recruitment(
    nerve: NerveModel,
    config: StimConfig,
    amplitude_ua: float,
    layout: CuffLayout = DEFAULT_LAYOUT,
) -> dict[str, float]:
    """Recruited fraction per muscle at one stimulation amplitude."""
    if amplitude_ua < 0:
        raise ValueError("stimulation amplitude must be >= 0")
    muscles, fractions = recruitment_grid(nerve, config, [amplitude_ua], layout)
    return {m: float(fractions[0, j]) for j, m in enumerate(muscles)}


def sweep_recruitment(
    nerve: NerveModel,
    configs: Iterable[StimConfig],
    amplitudes_ua: Sequence[float],
    layout: CuffLayout = DEFAULT_LAYOUT,
) -> dict[str, dict[float, dict[str, float]]]:
    """Evaluation grid {config: {amplitude: {muscle: fraction}}}."""
    out: dict[str, dict[float, dict[str, float]]] = {}
    for config in configs:
        muscles, fr = recruitment_grid(nerve, config, amplitudes_ua, layout)
        out[config.name] = {
            float(a): {m: float(fr[i, j]) for j, m in enumerate(muscles)}
            for i, a in enumerate(amplitudes_ua)
        }
    return out


@dataclass(frozen=True)
class MWaveTemplate:
    """Canonical evoked-response shape: one-cycle biphasic transient, zero
    mean, unit peak, placed `latency_ms` after each stimulation pulse."""

    latency_ms: float = 4.0
    duration_ms: float = 8.0

    def __post_init__(self) -> None:
        if self.latency_ms < 0 or self.duration_ms <= 0:
            raise ValueError("template latency must be >= 0 and duration positive")

    def waveform(self, sample_rate_hz: float) -> np.ndarray:
        n = int(round(self.duration_ms * 1e-3 * sample_rate_hz))
        if n < 2:
            raise ValueError("template too short for the sample rate")
        t = np.arange(n) / n
        w = np.sin(2.0 * np.pi * t) * np.hanning(n)
        w -= w.mean()
        return w / np.max(np.abs(w))


def synthesize_recording(
    nerve: NerveModel,
    config: StimConfig,
    ramp: RampSpec,
    pulse: PulseSpec,
    template: MWaveTemplate | None = None,
    noise_rms_uv: float = 0.0,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    layout: CuffLayout = DEFAULT_LAYOUT,
    seed: int | None = None,
    mwave_max_uv: float = DEFAULT_MWAVE_MAX_UV,
) -> Recording:
    """Full staircase session against the synthetic nerve.

    Each ramp step delivers one pulse train; every pulse is followed by the
    template scaled by (recruited fraction x mwave_max_uv) at the template
    latency.  Seeded noise is added and the whole trace passes through the
    acquisition chain; samples stay input-referred (the chain gain is applied
    and removed) so stored microvolts remain comparable to the template.
    """
    template = template or MWaveTemplate()
    ramp.validate_against(pulse)
    if template.latency_ms + template.duration_ms > pulse.period_s * 1e3:
        raise ValueError("template does not fit between consecutive pulses")
    amps = ramp_amplitudes(ramp)
    fs = sample_rate_hz
    n_total = int(round(len(amps) * ramp.step_duration_s * fs))
    muscles = nerve.muscles
    rng = np.random.default_rng(nerve.rng_seed if seed is None else seed)
    _, fractions = recruitment_grid(nerve, config, amps, layout)
    tmpl = template.waveform(fs)
    lat = int(round(template.latency_ms * 1e-3 * fs))

    data = {m: np.zeros(n_total) for m in muscles}
    events: list[StimEvent] = []
    for s, amplitude in enumerate(amps):
        t0 = s * ramp.step_duration_s
        train, _ = build_pulse_train(
            pulse.at_amplitude(amplitude), ramp.pulses_per_step, t0, fs, config.name
        )
        events.extend(train)
        for ev in train:
            i0 = ev.sample_index(fs) + lat
            i1 = min(i0 + len(tmpl), n_total)
            for j, muscle in enumerate(muscles):
                data[muscle][i0:i1] += tmpl[: i1 - i0] * (fractions[s, j] * mwave_max_uv)

    channels = []
    for muscle in muscles:
        trace = data[muscle]
        if noise_rms_uv > 0:
            trace = trace + rng.normal(0.0, noise_rms_uv, n_total)
        conditioned = emulate_acquisition(trace, fs) / ACQ_GAIN
        channels.append(Channel(muscle, conditioned))
    return Recording(
        sample_rate_hz=fs,
        channels=channels,
        stim_events=events,
        metadata={
            "config": config.name,
            "seed": int(nerve.rng_seed if seed is None else seed),
            "noise_rms_uv": float(noise_rms_uv),
            "mwave_max_uv": float(mwave_max_uv),
        },
    )


def synthesize_train_segment(
    nerve: NerveModel,
    config: StimConfig,
    pulse: PulseSpec,
    n_pulses: int,
    template: MWaveTemplate | None = None,
    noise_rms_uv: float = 0.0,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    layout: CuffLayout = DEFAULT_LAYOUT,
    seed: int = 0,
    mwave_max_uv: float = DEFAULT_MWAVE_MAX_UV,
) -> Recording:
    """Single-train segment for the live session backend."""
    template = template or MWaveTemplate()
    fs = sample_rate_hz
    tail_s = 0.05
    n_total = int(round((n_pulses / pulse.frequency_hz + tail_s) * fs))
    muscles = nerve.muscles
    fracs = simulate_recruitment(nerve, config, pulse.amplitude_ua, layout)
    tmpl = template.waveform(fs)
    lat = int(round(template.latency_ms * 1e-3 * fs))
    rng = np.random.default_rng(seed)

    train, _ = build_pulse_train(pulse, n_pulses, 0.0, fs, config.name)
    data = {m: np.zeros(n_total) for m in muscles}
    for ev in train:
        i0 = ev.sample_index(fs) + lat
        i1 = min(i0 + len(tmpl), n_total)
        for muscle in muscles:
            data[muscle][i0:i1] += tmpl[: i1 - i0] * (fracs[muscle] * mwave_max_uv)
    channels = []
    for muscle in muscles:
        trace = data[muscle]
        if noise_rms_uv > 0:
            trace = trace + rng.normal(0.0, noise_rms_uv, n_total)
        channels.append(Channel(muscle, emulate_acquisition(trace, fs) / ACQ_GAIN))
    return Recording(
        sample_rate_hz=fs,
        channels=channels,
        stim_events=train,
        metadata={"config": config.name, "amplitude_ua": pulse.amplitude_ua},
    )


def random_nerve_model(
    seed: int,
    layout: CuffLayout = DEFAULT_LAYOUT,
    n_fascicles: int | None = None,
    muscles: Sequence[str] = MUSCLES,
    sigma_s_per_m: float = DEFAULT_SIGMA_S_PER_M,
    threshold_median_v: float = 0.03,
    threshold_sigma: float = 0.5,
) -> NerveModel:
    """Randomised but reproducible nerve model for sweeps and property tests."""
    from cuffbench.histology import FascicleRecord, FascicleSection

    rng = np.random.default_rng(seed)
    n_fasc = int(n_fascicles or rng.integers(2, 5))
    r_cuff = layout.radius_um
    records = []
    fiber_sets = []
    muscle_map: dict[str, dict[str, float]] = {}
    for i in range(n_fasc):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        rho = rng.uniform(0.25, 0.6) * r_cuff
        radius = rng.uniform(0.08, 0.18) * r_cuff
        cx, cy = rho * np.cos(angle), rho * np.sin(angle)
        n_fib = int(rng.integers(15, 40))
        u = rng.random(n_fib)
        phi = rng.uniform(0.0, 2.0 * np.pi, n_fib)
        rr = radius * np.sqrt(u)
        xy = np.column_stack([cx + rr * np.cos(phi), cy + rr * np.sin(phi)])
        thresholds = threshold_median_v * np.exp(
            threshold_sigma * rng.standard_normal(n_fib)
        )
        fid = f"F{i + 1}"
        records.append(
            FascicleRecord(
                id=fid,
                centroid_um=(float(cx), float(cy)),
                area_um2=float(np.pi * radius**2),
                motor_fiber_count=n_fib,
            )
        )
        fiber_sets.append(FiberSet(fid, xy, thresholds))
        muscle_map[fid] = {muscles[i % len(muscles)]: 1.0}
    section = FascicleSection(z_um=0.0, fascicles=tuple(records))
    return NerveModel(
        cross_section=section,
        sigma_s_per_m=sigma_s_per_m,
        fascicle_muscle_map=muscle_map,
        fibers=fiber_sets,
        rng_seed=seed,
    )
