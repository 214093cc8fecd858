"""Pulse trains and the staircase intensity ramp.

Pulses are charge-balanced asymmetric biphasic: a 150 us cathodic phase
followed immediately by a wider, proportionally weaker anodic phase.  A ramp
delivers one fixed-length train per intensity step and stops either on
recruitment saturation or at the hard amplitude ceiling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

DEFAULT_SAMPLE_RATE_HZ = 20000.0


@dataclass(frozen=True)
class PulseSpec:
    """Asymmetric biphasic pulse: cathodic first, anodic return phase
    `asymmetry_ratio` times wider at 1/ratio the amplitude (equal charge)."""

    amplitude_ua: float
    cathodic_width_us: float = 150.0
    asymmetry_ratio: float = 4.0
    frequency_hz: float = 35.0

    def __post_init__(self) -> None:
        if self.amplitude_ua < 0:
            raise ValueError("pulse amplitude must be >= 0")
        if self.cathodic_width_us <= 0:
            raise ValueError("cathodic phase width must be positive")
        if self.asymmetry_ratio <= 0:
            raise ValueError("asymmetry ratio must be positive")
        if self.frequency_hz <= 0:
            raise ValueError("pulse frequency must be positive")
        if self.total_width_us * 1e-6 > self.period_s:
            raise ValueError("pulse does not fit within one period")

    @property
    def anodic_width_us(self) -> float:
        return self.cathodic_width_us * self.asymmetry_ratio

    @property
    def anodic_amplitude_ua(self) -> float:
        return self.amplitude_ua / self.asymmetry_ratio

    @property
    def total_width_us(self) -> float:
        return self.cathodic_width_us + self.anodic_width_us

    @property
    def period_s(self) -> float:
        return 1.0 / self.frequency_hz

    def at_amplitude(self, amplitude_ua: float) -> "PulseSpec":
        return replace(self, amplitude_ua=amplitude_ua)


@dataclass(frozen=True)
class RampSpec:
    """Staircase ramp parameters: fixed step size and dwell, a train per step,
    plateau detection window, and a hard amplitude ceiling."""

    start_ua: float = 150.0
    step_ua: float = 9.0
    step_duration_s: float = 4.5
    pulses_per_step: int = 19
    saturation_window: int = 3
    saturation_epsilon: float = 0.05
    max_ua: float = 250.0

    def __post_init__(self) -> None:
        if self.step_ua <= 0:
            raise ValueError("ramp step must be positive")
        if self.pulses_per_step < 1:
            raise ValueError("need at least one pulse per step")
        if self.start_ua < 0:
            raise ValueError("start amplitude must be >= 0")
        if self.max_ua < self.start_ua:
            raise ValueError("amplitude ceiling below start amplitude")
        if self.saturation_window < 1:
            raise ValueError("saturation window must be >= 1")
        if not 0 < self.saturation_epsilon < 1:
            raise ValueError("saturation epsilon must be in (0, 1)")
        if self.step_duration_s <= 0:
            raise ValueError("step duration must be positive")

    def validate_against(self, pulse: PulseSpec) -> None:
        """The train of pulses_per_step pulses must fit inside one step."""
        if self.pulses_per_step / pulse.frequency_hz > self.step_duration_s:
            raise ValueError(
                f"{self.pulses_per_step} pulses at {pulse.frequency_hz} Hz do not fit "
                f"in a {self.step_duration_s} s step"
            )


@dataclass(frozen=True)
class StimEvent:
    """Marker for one delivered pulse."""

    time_s: float
    amplitude_ua: float
    config: str
    pulse_index: int

    def sample_index(self, sample_rate_hz: float) -> int:
        return int(round(self.time_s * sample_rate_hz))


def build_pulse_train(
    spec: PulseSpec,
    n_pulses: int,
    t0_s: float = 0.0,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    config: str = "",
) -> tuple[list[StimEvent], np.ndarray]:
    """Events and sampled current waveform for one train.

    The waveform starts at t0_s and spans n_pulses periods; each pulse is
    quantised to whole samples, which keeps the net charge below one
    sample-quantum times the amplitude.
    """
    if n_pulses < 0:
        raise ValueError("pulse count must be >= 0")
    if n_pulses == 0:
        return [], np.zeros(0)
    events = [
        StimEvent(
            time_s=t0_s + i / spec.frequency_hz,
            amplitude_ua=spec.amplitude_ua,
            config=config,
            pulse_index=i,
        )
        for i in range(n_pulses)
    ]
    n_total = int(round(n_pulses / spec.frequency_hz * sample_rate_hz))
    wave = np.zeros(n_total)
    n_cath = int(round(spec.cathodic_width_us * 1e-6 * sample_rate_hz))
    n_anod = int(round(spec.anodic_width_us * 1e-6 * sample_rate_hz))
    for i in range(n_pulses):
        start = int(round(i / spec.frequency_hz * sample_rate_hz))
        c_end = min(start + n_cath, n_total)
        a_end = min(start + n_cath + n_anod, n_total)
        wave[start:c_end] = -spec.amplitude_ua
        wave[c_end:a_end] = spec.anodic_amplitude_ua
    return events, wave


def ramp_amplitudes(spec: RampSpec) -> list[float]:
    """Arithmetic amplitude staircase, never exceeding the ceiling."""
    out: list[float] = []
    i = 0
    while True:
        a = spec.start_ua + i * spec.step_ua
        if a > spec.max_ua:
            break
        out.append(a)
        i += 1
    return out


def saturation_reached(curve, window: int, epsilon: float) -> bool:
    """Plateau rule: the last `window` step-to-step increments are each below
    `epsilon` of the running curve maximum.

    Accepts a recruitment curve or a plain sequence of values ordered by
    intensity.  Returns False when there are fewer than window+1 points or no
    response has been seen yet.
    """
    values = _curve_values(curve)
    if window < 1:
        raise ValueError("saturation window must be >= 1")
    if len(values) < window + 1:
        return False
    for i in range(len(values) - window, len(values)):
        running_max = max(values[: i + 1])
        if running_max <= 0:
            return False
        if values[i] - values[i - 1] >= epsilon * running_max:
            return False
    return True


def _curve_values(curve) -> Sequence[float]:
    points = getattr(curve, "points", None)
    if points is not None:
        return [p.normalized if p.normalized is not None else p.mean_p2p_uv for p in points]
    return list(curve)
