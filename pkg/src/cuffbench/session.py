"""Live session orchestration: the ramp state machine, stimulation backends,
event-sourced logging and artifact persistence.

A session walks Idle -> Configured -> Ramping -> (Saturated | Stopped), then
back to Configured for the next configuration.  Abort is allowed from any
state and lands in Stopped.  Every transition and step result is appended to
an event log that replays deterministically to the same final state; the ramp
stops on recruitment plateau or at the amplitude ceiling.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cuffbench import formats
from cuffbench.dsp import (
    EMG_BAND_HZ,
    Channel,
    Recording,
    RecruitmentCurve,
    RecruitmentPoint,
    apply_filter,
    average_epochs,
    design_butterworth,
    extract_epochs,
    peak_to_peak,
)
from cuffbench.electrode import DEFAULT_LAYOUT, CuffLayout, StimConfig
from cuffbench.nervesim import (
    DEFAULT_MWAVE_MAX_UV,
    MWaveTemplate,
    NerveModel,
    synthesize_train_segment,
)
from cuffbench.protocol import (
    DEFAULT_SAMPLE_RATE_HZ,
    PulseSpec,
    RampSpec,
    StimEvent,
    saturation_reached,
)
from cuffbench.selectivity import build_polar_map, find_selective_points

IDLE = "idle"
CONFIGURED = "configured"
RAMPING = "ramping"
SATURATED = "saturated"
STOPPED = "stopped"

STATES = (IDLE, CONFIGURED, RAMPING, SATURATED, STOPPED)

# The declared state graph: the configure/step/saturate loop plus abort edges
# into Stopped from everywhere.
DECLARED_TRANSITIONS = frozenset(
    {
        (IDLE, CONFIGURED),
        (SATURATED, CONFIGURED),
        (STOPPED, CONFIGURED),
        (CONFIGURED, RAMPING),
        (RAMPING, SATURATED),
        (RAMPING, STOPPED),
        (IDLE, STOPPED),
        (CONFIGURED, STOPPED),
        (SATURATED, STOPPED),
        (STOPPED, STOPPED),
    }
)


class ProtocolError(RuntimeError):
    """Command not allowed in the current session state."""


class BackendError(RuntimeError):
    """Stimulation backend failed to deliver."""


@dataclass
class StepResult:
    step_index: int
    amplitude_ua: float
    p2p_uv: dict[str, float]
    normalized: dict[str, float]
    saturated: bool
    state: str


class SimulatorBackend:
    """Deterministic backend running trains against a synthetic nerve."""

    def __init__(
        self,
        nerve: NerveModel,
        layout: CuffLayout = DEFAULT_LAYOUT,
        template: MWaveTemplate | None = None,
        noise_rms_uv: float = 0.0,
        sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
        seed: int = 0,
        mwave_max_uv: float = DEFAULT_MWAVE_MAX_UV,
    ):
        self.nerve = nerve
        self.layout = layout
        self.template = template or MWaveTemplate()
        self.noise_rms_uv = noise_rms_uv
        self.sample_rate_hz = sample_rate_hz
        self.seed = seed
        self.mwave_max_uv = mwave_max_uv
        self._delivery_count: dict[str, int] = {}
        self.capabilities = {
            "max_current_ua": 1e6,
            "channels": nerve.muscles,
        }

    def deliver(self, config: StimConfig, pulse: PulseSpec, n_pulses: int) -> Recording:
        index = self._delivery_count.get(config.name, 0)
        self._delivery_count[config.name] = index + 1
        seed = int(
            np.random.SeedSequence([self.seed, config.index, index]).generate_state(1)[0]
        )
        return synthesize_train_segment(
            self.nerve,
            config,
            pulse,
            n_pulses,
            template=self.template,
            noise_rms_uv=self.noise_rms_uv,
            sample_rate_hz=self.sample_rate_hz,
            layout=self.layout,
            seed=seed,
            mwave_max_uv=self.mwave_max_uv,
        )


class HardwareStubBackend:
    """Placeholder for a real stimulator: enforces the current ceiling and
    returns silent channels (no animal attached)."""

    def __init__(
        self,
        channels: list[str],
        max_current_ua: float = 250.0,
        sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    ):
        self.sample_rate_hz = sample_rate_hz
        self.capabilities = {"max_current_ua": max_current_ua, "channels": list(channels)}

    def deliver(self, config: StimConfig, pulse: PulseSpec, n_pulses: int) -> Recording:
        if pulse.amplitude_ua > self.capabilities["max_current_ua"]:
            raise BackendError(
                f"requested {pulse.amplitude_ua} uA exceeds the "
                f"{self.capabilities['max_current_ua']} uA ceiling"
            )
        from cuffbench.protocol import build_pulse_train

        fs = self.sample_rate_hz
        events, _ = build_pulse_train(pulse, n_pulses, 0.0, fs, config.name)
        n = int(round((n_pulses / pulse.frequency_hz + 0.05) * fs))
        channels = [
            Channel(m, np.zeros(n, dtype=np.float32))
            for m in self.capabilities["channels"]
        ]
        return Recording(fs, channels, events, {"config": config.name})


class Session:
    """Single live session; one writer, observers via listener callbacks."""

    def __init__(self, backend, session_dir: str | Path | None = None, clock=time.time):
        self.backend = backend
        self.session_dir = Path(session_dir) if session_dir else None
        self.clock = clock
        self.state = IDLE
        self.stop_reason: str | None = None
        self.config: StimConfig | None = None
        self.ramp: RampSpec | None = None
        self.pulse: PulseSpec | None = None
        self.step_index = 0
        self.event_log: list[dict] = []
        self.completed_curves: dict[str, list[RecruitmentCurve]] = {}
        self._raw_points: dict[str, list[tuple[float, float]]] = {}
        self._segments: list[Recording] = []
        self._run_counter: dict[str, int] = {}
        self._listeners: list = []
        self._step_lock = threading.Lock()
        self._ramp_lock = threading.Lock()
        if self.session_dir:
            self.session_dir.mkdir(parents=True, exist_ok=True)

    # -- observation ------------------------------------------------------

    def add_listener(self, fn) -> None:
        self._listeners.append(fn)

    def snapshot(self) -> dict:
        """Wire-format view of the whole session for late subscribers."""
        points = {
            muscle: [
                {"amplitude_uA": a, "p2p_uV": p, "normalized": self._normalize(muscle, p)}
                for a, p in series
            ]
            for muscle, series in self._raw_points.items()
        }
        completed = {
            name: {
                curve.muscle: [
                    {"amplitude_uA": pt.amplitude_ua, "normalized": pt.normalized}
                    for pt in curve.points
                ]
                for curve in curves
            }
            for name, curves in self.completed_curves.items()
        }
        return {
            "kind": "snapshot",
            "state": self.state,
            "config": self.config.name if self.config else None,
            "step_index": self.step_index,
            "stop_reason": self.stop_reason,
            "points": points,
            "completed": completed,
        }

    def _normalize(self, muscle: str, value: float) -> float:
        peak = max((p for _, p in self._raw_points.get(muscle, [])), default=0.0)
        return value / peak if peak > 0 else 0.0

    def _emit(self, message: dict) -> None:
        entry = dict(message)
        entry["t"] = self.clock()
        entry["event"] = entry.pop("kind")
        self.event_log.append(entry)
        if self.session_dir:
            import json

            with open(self.session_dir / "session.log", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")
        for fn in list(self._listeners):
            fn(message)

    def _transition(self, new_state: str, **payload) -> None:
        edge = (self.state, new_state)
        if edge not in DECLARED_TRANSITIONS:
            raise ProtocolError(f"transition {edge} outside the declared graph")
        message = {
            "kind": "transition",
            "from_state": self.state,
            "to_state": new_state,
            **payload,
        }
        self.state = new_state
        self._emit(message)

    # -- commands ----------------------------------------------------------

    def configure(self, config: StimConfig, ramp: RampSpec, pulse: PulseSpec) -> str:
        with self._step_lock:
            return self._configure_locked(config, ramp, pulse)

    def _configure_locked(self, config: StimConfig, ramp: RampSpec, pulse: PulseSpec) -> str:
        if self.state not in (IDLE, SATURATED, STOPPED):
            raise ProtocolError(f"cannot configure while {self.state}")
        ramp.validate_against(pulse)
        self.config = config
        self.ramp = ramp
        self.pulse = pulse
        self.step_index = 0
        self.stop_reason = None
        self._raw_points = {m: [] for m in self.backend.capabilities["channels"]}
        self._segments = []
        self._transition(
            CONFIGURED,
            config=config.name,
            ramp=_ramp_wire(ramp),
            pulse=_pulse_wire(pulse),
        )
        return self.state

    def run_step(self) -> StepResult:
        if not self._step_lock.acquire(blocking=False):
            raise ProtocolError("a step is already running")
        try:
            return self._run_step_locked()
        finally:
            self._step_lock.release()

    def _run_step_locked(self) -> StepResult:
        if self.state not in (CONFIGURED, RAMPING):
            raise ProtocolError(f"cannot step while {self.state}")
        assert self.config and self.ramp and self.pulse
        amplitude = self.ramp.start_ua + self.step_index * self.ramp.step_ua
        if self.state == CONFIGURED:
            self._transition(RAMPING, config=self.config.name)
        try:
            segment = self.backend.deliver(
                self.config, self.pulse.at_amplitude(amplitude), self.ramp.pulses_per_step
            )
        except BackendError as exc:
            self._finalize_config()
            self._transition(STOPPED, reason="backend_error", detail=str(exc))
            self.stop_reason = "backend_error"
            raise
        self._segments.append(segment)
        p2p = self._live_p2p(segment)
        for muscle, value in p2p.items():
            self._raw_points[muscle].append((amplitude, value))

        saturated = self._saturation_check()
        normalized = {m: self._normalize(m, v) for m, v in p2p.items()}
        self.step_index += 1
        next_amplitude = self.ramp.start_ua + self.step_index * self.ramp.step_ua

        step_message = {
            "kind": "step_result",
            "config": self.config.name,
            "step_index": self.step_index - 1,
            "amplitude_uA": amplitude,
            "p2p_uV": p2p,
            "normalized": normalized,
            "saturated": saturated,
        }
        self._emit(step_message)

        if saturated:
            self._finalize_config()
            self._transition(SATURATED, config=self.config.name)
        elif next_amplitude > self.ramp.max_ua:
            self._finalize_config()
            self._transition(STOPPED, reason="max_reached", config=self.config.name)
            self.stop_reason = "max_reached"
        return StepResult(
            step_index=self.step_index - 1,
            amplitude_ua=amplitude,
            p2p_uv=p2p,
            normalized=normalized,
            saturated=saturated,
            state=self.state,
        )

    def run_to_saturation(self) -> str:
        """Step until the ramp terminates; safe against concurrent abort.

        Only one ramp loop may run at a time: an overlapping call is rejected
        rather than joined, so a double-fired command runs a single ramp.
        """
        if not self._ramp_lock.acquire(blocking=False):
            raise ProtocolError("a ramp is already running")
        try:
            while self.state in (CONFIGURED, RAMPING):
                try:
                    self.run_step()
                except ProtocolError:
                    if self.state in (SATURATED, STOPPED):
                        break
                    # abort holds the step lock; re-check shortly
                    time.sleep(0.005)
            return self.state
        finally:
            self._ramp_lock.release()

    def mark_saturated(self) -> str:
        """Operator override: confirm saturation without waiting for the rule."""
        with self._step_lock:
            if self.state != RAMPING:
                raise ProtocolError(f"cannot mark saturation while {self.state}")
            assert self.config is not None
            self._finalize_config()
            self._transition(SATURATED, config=self.config.name, operator_marked=True)
            return self.state

    def abort(self, reason: str = "operator_abort") -> str:
        with self._step_lock:
            if self.state == RAMPING:
                self._finalize_config()
            self._transition(STOPPED, reason=reason, step_index=self.step_index)
            self.stop_reason = reason
            return self.state

    # -- internals ---------------------------------------------------------

    def _live_p2p(self, segment: Recording) -> dict[str, float]:
        band = design_butterworth("bandpass", EMG_BAND_HZ, 4, segment.sample_rate_hz)
        filtered = Recording(
            sample_rate_hz=segment.sample_rate_hz,
            channels=[
                Channel(ch.muscle, apply_filter(ch.samples, band, mode="causal"))
                for ch in segment.channels
            ],
            stim_events=segment.stim_events,
            metadata=segment.metadata,
        )
        result = extract_epochs(filtered)
        out = {}
        for muscle in segment.muscles:
            groups = result.for_muscle(muscle)
            epochs = [ep for group in groups.values() for ep in group]
            out[muscle] = peak_to_peak(average_epochs(epochs)) if epochs else 0.0
        return out

    def _saturation_check(self) -> bool:
        assert self.ramp is not None
        active = False
        for series in self._raw_points.values():
            values = [v for _, v in series]
            if max(values, default=0.0) <= 0.0:
                continue
            active = True
            if not saturation_reached(
                values, self.ramp.saturation_window, self.ramp.saturation_epsilon
            ):
                return False
        return active

    def _finalize_config(self) -> None:
        """Freeze the live points into curves and persist artifacts."""
        assert self.config is not None
        curves = []
        for muscle in sorted(self._raw_points):
            series = self._raw_points[muscle]
            if not series:
                continue
            peak = max(p for _, p in series)
            points = tuple(
                RecruitmentPoint(
                    amplitude_ua=a,
                    mean_p2p_uv=p,
                    normalized=(p / peak) if peak > 0 else None,
                )
                for a, p in series
            )
            curves.append(
                RecruitmentCurve(
                    muscle=muscle,
                    config=self.config.name,
                    points=points,
                    normalization="per_muscle" if peak > 0 else "unnormalizable",
                )
            )
        if curves:
            self.completed_curves[self.config.name] = curves
        self._persist()

    def _persist(self) -> None:
        if not self.session_dir:
            return
        assert self.config is not None
        if self._segments:
            run = self._run_counter.get(self.config.name, 0)
            self._run_counter[self.config.name] = run + 1
            stem = self.config.name if run == 0 else f"{self.config.name}_run{run + 1}"
            merged = _merge_segments(self._segments)
            formats.write_recording(merged, self.session_dir / f"{stem}.rec")
        all_curves = [c for curves in self.completed_curves.values() for c in curves]
        if all_curves:
            formats.export_table(
                formats.recruitment_rows(all_curves),
                formats.CURVE_SCHEMA,
                self.session_dir / "curves.csv",
            )
            try:
                polar = build_polar_map(all_curves)
                formats.export_table(
                    polar.rows(), formats.POLAR_SCHEMA, self.session_dir / "polar.csv"
                )
            except ValueError:
                pass  # no steering configs completed yet
            rows = []
            for target in sorted({c.muscle for c in all_curves}):
                for rec in find_selective_points(all_curves, target):
                    rows.append(
                        {
                            "target": rec.target,
                            "config": rec.config,
                            "amplitude_uA": rec.amplitude_ua,
                            "selectivity_index": rec.selectivity_index,
                            "target_recruitment": rec.target_recruitment,
                        }
                    )
            formats.export_table(
                rows, formats.SELECTIVITY_SCHEMA, self.session_dir / "selectivity.csv"
            )


def _merge_segments(segments: list[Recording]) -> Recording:
    """Concatenate per-step segments into one recording, shifting markers."""
    fs = segments[0].sample_rate_hz
    muscles = segments[0].muscles
    traces = {m: [] for m in muscles}
    events: list[StimEvent] = []
    offset = 0
    for seg in segments:
        for m in muscles:
            traces[m].append(seg.channel(m).samples)
        for ev in seg.stim_events:
            events.append(
                StimEvent(
                    time_s=ev.time_s + offset / fs,
                    amplitude_ua=ev.amplitude_ua,
                    config=ev.config,
                    pulse_index=ev.pulse_index,
                )
            )
        offset += seg.n_samples
    channels = [Channel(m, np.concatenate(traces[m])) for m in muscles]
    meta = dict(segments[0].metadata)
    meta.pop("amplitude_ua", None)
    return Recording(fs, channels, events, meta)


def replay_log(events: list[dict]) -> str:
    """Fold a persisted event log back into the final state, checking every
    transition against the declared graph."""
    state = IDLE
    for entry in events:
        if entry.get("event") != "transition":
            continue
        edge = (entry["from_state"], entry["to_state"])
        if edge not in DECLARED_TRANSITIONS:
            raise ValueError(f"log contains undeclared transition {edge}")
        if edge[0] != state:
            raise ValueError(f"log transition {edge} does not chain from {state}")
        state = edge[1]
    return state


def _ramp_wire(ramp: RampSpec) -> dict:
    return {
        "start_uA": ramp.start_ua,
        "step_uA": ramp.step_ua,
        "step_duration_s": ramp.step_duration_s,
        "pulses_per_step": ramp.pulses_per_step,
        "saturation_window": ramp.saturation_window,
        "saturation_epsilon": ramp.saturation_epsilon,
        "max_uA": ramp.max_ua,
    }


def ramp_from_wire(obj: dict) -> RampSpec:
    return RampSpec(
        start_ua=float(obj.get("start_uA", 150.0)),
        step_ua=float(obj.get("step_uA", 9.0)),
        step_duration_s=float(obj.get("step_duration_s", 4.5)),
        pulses_per_step=int(obj.get("pulses_per_step", 19)),
        saturation_window=int(obj.get("saturation_window", 3)),
        saturation_epsilon=float(obj.get("saturation_epsilon", 0.05)),
        max_ua=float(obj.get("max_uA", 250.0)),
    )


def _pulse_wire(pulse: PulseSpec) -> dict:
    return {
        "amplitude_uA": pulse.amplitude_ua,
        "cathodic_width_us": pulse.cathodic_width_us,
        "asymmetry_ratio": pulse.asymmetry_ratio,
        "frequency_hz": pulse.frequency_hz,
    }


def pulse_from_wire(obj: dict) -> PulseSpec:
    return PulseSpec(
        amplitude_ua=float(obj.get("amplitude_uA", 0.0)),
        cathodic_width_us=float(obj.get("cathodic_width_us", 150.0)),
        asymmetry_ratio=float(obj.get("asymmetry_ratio", 4.0)),
        frequency_hz=float(obj.get("frequency_hz", 35.0)),
    )
