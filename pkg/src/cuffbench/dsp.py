"""Evoked-EMG processing: acquisition-chain emulation and the offline pipeline.

Offline processing mirrors the bench chain: band-pass the recorded channels,
cut stimulus-triggered epochs, average the repeated muscle responses within
each intensity step, take peak-to-peak amplitudes, and normalise into
recruitment curves.  Offline filtering is zero-phase so response latencies
survive; the live path uses the causal variants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from cuffbench.protocol import DEFAULT_SAMPLE_RATE_HZ, StimEvent

MUSCLES = ("FCR", "FDS", "PT", "ECR")

EMG_BAND_HZ = (10.0, 500.0)
ACQ_BAND_HZ = (1.0, 5000.0)
ACQ_GAIN = 5000.0
MAINS_HZ = 50.0
NOTCH_HALF_WIDTH_HZ = 10.0
DEFAULT_EPOCH_WINDOW_MS = (2.0, 25.0)


@dataclass
class Channel:
    """One muscle's sampled trace, in microvolts (stored float32)."""

    muscle: str
    samples: np.ndarray

    def __post_init__(self) -> None:
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)


@dataclass
class Recording:
    """Multichannel evoked-EMG recording with stimulation markers."""

    sample_rate_hz: float
    channels: list[Channel]
    stim_events: list[StimEvent]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        lengths = {len(ch.samples) for ch in self.channels}
        if len(lengths) > 1:
            raise ValueError(f"channels differ in length: {sorted(lengths)}")
        labels = [ch.muscle for ch in self.channels]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate muscle labels: {labels}")
        times = [ev.time_s for ev in self.stim_events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("stimulation event times must be strictly increasing")
        n = self.n_samples
        for ev in self.stim_events:
            idx = ev.sample_index(self.sample_rate_hz)
            if not 0 <= idx < n:
                raise ValueError(f"stimulation event at {ev.time_s} s outside recording")

    @property
    def n_samples(self) -> int:
        return len(self.channels[0].samples) if self.channels else 0

    @property
    def muscles(self) -> list[str]:
        return [ch.muscle for ch in self.channels]

    def channel(self, muscle: str) -> Channel:
        for ch in self.channels:
            if ch.muscle == muscle:
                return ch
        raise KeyError(f"no channel for muscle {muscle!r}")

    @property
    def config_name(self) -> str:
        name = self.metadata.get("config", "")
        if not name and self.stim_events:
            name = self.stim_events[0].config
        return name

    def equals(self, other: "Recording") -> bool:
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.muscles == other.muscles
            and all(
                np.array_equal(a.samples, b.samples)
                for a, b in zip(self.channels, other.channels)
            )
            and self.stim_events == other.stim_events
            and self.metadata == other.metadata
        )


@dataclass(frozen=True)
class FilterSpec:
    """Designed IIR filter (second-order sections) plus its design card."""

    kind: str
    edges_hz: tuple[float, ...]
    order: int
    sample_rate_hz: float
    sos: np.ndarray

    def gain_at(self, freqs_hz) -> np.ndarray:
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=float) / self.sample_rate_hz
        _, h = signal.sosfreqz(self.sos, worN=w)
        return np.abs(h)


def design_butterworth(
    kind: str,
    edges_hz,
    order: int,
    sample_rate_hz: float,
) -> FilterSpec:
    """Butterworth design for the four chain stages.

    `order` is the overall filter order.  Band-pass and notch (band-stop)
    therefore need an even order: two poles land on each band edge.  A notch
    given a single centre frequency uses the default +-10 Hz stop band.
    Designs are cached; treat the returned coefficients as read-only.
    """
    edges = tuple(float(e) for e in np.atleast_1d(edges_hz))
    return _design_cached(kind, edges, int(order), float(sample_rate_hz))


@lru_cache(maxsize=256)
def _design_cached(kind: str, edges: tuple, order: int, sample_rate_hz: float) -> FilterSpec:
    if order < 1:
        raise ValueError("filter order must be >= 1")
    nyquist = sample_rate_hz / 2.0
    if kind == "notch" and len(edges) == 1:
        edges = (edges[0] - NOTCH_HALF_WIDTH_HZ, edges[0] + NOTCH_HALF_WIDTH_HZ)
    for e in edges:
        if not 0 < e < nyquist:
            raise ValueError(f"band edge {e} Hz outside (0, Nyquist={nyquist} Hz)")

    if kind in ("lowpass", "highpass"):
        if len(edges) != 1:
            raise ValueError(f"{kind} takes a single edge frequency")
        sos = signal.butter(order, edges[0], btype=kind, fs=sample_rate_hz, output="sos")
    elif kind in ("bandpass", "notch"):
        if len(edges) != 2 or edges[0] >= edges[1]:
            raise ValueError(f"{kind} takes ascending (low, high) edges")
        if order % 2:
            raise ValueError(f"{kind} needs an even overall order, got {order}")
        btype = "bandpass" if kind == "bandpass" else "bandstop"
        sos = signal.butter(order // 2, edges, btype=btype, fs=sample_rate_hz, output="sos")
    else:
        raise ValueError(f"unknown filter kind {kind!r}")
    return FilterSpec(kind, edges, order, sample_rate_hz, sos)


def apply_filter(samples, filt: FilterSpec, mode: str = "zero_phase") -> np.ndarray:
    """Run one channel through a designed filter.

    zero_phase runs forward-backward (no group delay, magnitude squared);
    causal runs a plain forward pass as the hardware would.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot filter an empty channel")
    if mode == "zero_phase":
        return signal.sosfiltfilt(filt.sos, x)
    if mode == "causal":
        return signal.sosfilt(filt.sos, x)
    raise ValueError(f"unknown filter mode {mode!r}")


def emulate_acquisition(
    raw_uv,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    gain: float = ACQ_GAIN,
) -> np.ndarray:
    """Bench front-end emulation: amplifier gain, 1 Hz - 5 kHz band-pass, then
    the 50 Hz mains notch, all causal."""
    bp = design_butterworth("bandpass", ACQ_BAND_HZ, 4, sample_rate_hz)
    notch = design_butterworth("notch", MAINS_HZ, 4, sample_rate_hz)
    y = apply_filter(np.asarray(raw_uv, dtype=float) * gain, bp, mode="causal")
    return apply_filter(y, notch, mode="causal")


@dataclass(frozen=True)
class Epoch:
    """One stimulus-locked response window from one channel."""

    muscle: str
    amplitude_ua: float
    samples: np.ndarray
    window_ms: tuple[float, float]
    event: StimEvent

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class ExtractResult:
    epochs: list[Epoch]
    n_skipped: int

    def for_muscle(self, muscle: str) -> dict[float, list[Epoch]]:
        """Epochs of one muscle keyed by stimulation amplitude."""
        out: dict[float, list[Epoch]] = {}
        for ep in self.epochs:
            if ep.muscle == muscle:
                out.setdefault(ep.amplitude_ua, []).append(ep)
        return out


def extract_epochs(
    recording: Recording,
    window_ms: tuple[float, float] = DEFAULT_EPOCH_WINDOW_MS,
) -> ExtractResult:
    """Cut one post-stimulus epoch per event per channel.

    The window is relative to each stimulation event; it must fit inside the
    inter-pulse interval so consecutive responses never overlap.  Events whose
    window would run past the end of the recording are skipped and counted.
    """
    if not recording.stim_events:
        raise ValueError("recording carries no stimulation events")
    t_start, t_end = window_ms
    if t_start < 0 or t_end <= t_start:
        raise ValueError(f"bad epoch window {window_ms}")
    times = [ev.time_s for ev in recording.stim_events]
    if len(times) > 1:
        min_interval_ms = min(b - a for a, b in zip(times, times[1:])) * 1000.0
        if t_end > min_interval_ms * (1 + 1e-9):
            raise ValueError(
                f"epoch window end {t_end} ms exceeds the {min_interval_ms:.3f} ms "
                "inter-pulse interval"
            )
    fs = recording.sample_rate_hz
    i_start = int(round(t_start * 1e-3 * fs))
    i_stop = int(round(t_end * 1e-3 * fs))
    n = recording.n_samples
    epochs: list[Epoch] = []
    skipped = 0
    for ev in recording.stim_events:
        base = ev.sample_index(fs)
        if base + i_stop > n:
            skipped += 1
            continue
        for ch in recording.channels:
            epochs.append(
                Epoch(
                    muscle=ch.muscle,
                    amplitude_ua=ev.amplitude_ua,
                    samples=ch.samples[base + i_start : base + i_stop],
                    window_ms=(t_start, t_end),
                    event=ev,
                )
            )
    return ExtractResult(epochs=epochs, n_skipped=skipped)


def average_epochs(epochs: Sequence) -> np.ndarray:
    """Pointwise mean of a same-amplitude epoch group."""
    if len(epochs) == 0:
        raise ValueError("cannot average an empty epoch group")
    arrays = [np.asarray(getattr(ep, "samples", ep), dtype=float) for ep in epochs]
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"epoch lengths differ: {sorted(lengths)}")
    return np.mean(arrays, axis=0)


def peak_to_peak(waveform) -> float:
    w = np.asarray(waveform, dtype=float)
    if w.size == 0:
        raise ValueError("cannot take peak-to-peak of an empty waveform")
    return float(np.max(w) - np.min(w))


@dataclass(frozen=True)
class RecruitmentPoint:
    amplitude_ua: float
    mean_p2p_uv: float
    normalized: float | None


@dataclass(frozen=True)
class RecruitmentCurve:
    """Per-muscle, per-configuration normalised recruitment vs intensity."""

    muscle: str
    config: str
    points: tuple[RecruitmentPoint, ...]
    normalization: str = "per_muscle"

    def __post_init__(self) -> None:
        amps = [p.amplitude_ua for p in self.points]
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise ValueError("curve points must be strictly increasing in amplitude")

    @property
    def amplitudes(self) -> list[float]:
        return [p.amplitude_ua for p in self.points]

    def normalized_values(self) -> list[float]:
        return [p.normalized if p.normalized is not None else 0.0 for p in self.points]

    def value_at(self, amplitude_ua: float) -> float | None:
        for p in self.points:
            if p.amplitude_ua == amplitude_ua:
                return p.normalized
        return None


def build_recruitment_curves(
    recordings: Iterable[Recording],
    normalization_scope: str = "per_muscle",
    window_ms: tuple[float, float] = DEFAULT_EPOCH_WINDOW_MS,
    mode: str = "zero_phase",
) -> list[RecruitmentCurve]:
    """Full offline pipeline over a set of recordings.

    Each recording contributes one configuration.  Channels are band-passed
    10-500 Hz, epoched per stimulation event, averaged within each intensity
    step, and reduced to peak-to-peak amplitudes.  Normalisation divides by
    the maximum peak-to-peak over the chosen scope (per muscle, or globally
    over all channels), so each scope's maximum lands exactly at 1.
    """
    if normalization_scope not in ("per_muscle", "global"):
        raise ValueError(f"unknown normalization scope {normalization_scope!r}")
    recordings = list(recordings)
    if not recordings:
        raise ValueError("no recordings given")
    muscle_sets = {tuple(r.muscles) for r in recordings}
    if len(muscle_sets) > 1:
        raise ValueError("recordings disagree on muscle labels")

    raw: dict[tuple[str, str], dict[float, list[float]]] = {}
    for rec in recordings:
        band = design_butterworth("bandpass", EMG_BAND_HZ, 4, rec.sample_rate_hz)
        filtered = Recording(
            sample_rate_hz=rec.sample_rate_hz,
            channels=[
                Channel(ch.muscle, apply_filter(ch.samples, band, mode=mode))
                for ch in rec.channels
            ],
            stim_events=rec.stim_events,
            metadata=rec.metadata,
        )
        result = extract_epochs(filtered, window_ms)
        for muscle in rec.muscles:
            groups = result.for_muscle(muscle)
            key = (muscle, rec.config_name)
            dest = raw.setdefault(key, {})
            for amplitude, group in groups.items():
                dest.setdefault(amplitude, []).append(peak_to_peak(average_epochs(group)))

    p2p: dict[tuple[str, str], dict[float, float]] = {
        key: {a: float(np.mean(vals)) for a, vals in per_amp.items()}
        for key, per_amp in raw.items()
    }

    def scope_of(key: tuple[str, str]) -> str:
        return key[0] if normalization_scope == "per_muscle" else "__global__"

    scope_max: dict[str, float] = {}
    for key, per_amp in p2p.items():
        s = scope_of(key)
        m = max(per_amp.values(), default=0.0)
        scope_max[s] = max(scope_max.get(s, 0.0), m)

    curves: list[RecruitmentCurve] = []
    for key in sorted(p2p):
        muscle, config = key
        denom = scope_max[scope_of(key)]
        points = []
        for amplitude in sorted(p2p[key]):
            value = p2p[key][amplitude]
            points.append(
                RecruitmentPoint(
                    amplitude_ua=amplitude,
                    mean_p2p_uv=value,
                    normalized=(value / denom) if denom > 0 else None,
                )
            )
        curves.append(
            RecruitmentCurve(
                muscle=muscle,
                config=config,
                points=tuple(points),
                normalization=normalization_scope if denom > 0 else "unnormalizable",
            )
        )
    return curves
