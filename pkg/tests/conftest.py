"""Shared fixtures: deterministic nerve models and fast session specs."""

from __future__ import annotations

import numpy as np
import pytest

from cuffbench.electrode import DEFAULT_LAYOUT, central_angle_deg
from cuffbench.histology import FascicleRecord, FascicleSection
from cuffbench.nervesim import FiberSet, NerveModel
from cuffbench.protocol import PulseSpec, RampSpec


def make_fascicle(fid, angle_deg, rho_um, radius_um, n_fibers, seed, threshold_sigma=0.25):
    """Circular fascicle of fibers at a polar position inside the cuff."""
    rng = np.random.default_rng(seed)
    theta = np.deg2rad(angle_deg)
    cx, cy = rho_um * np.cos(theta), rho_um * np.sin(theta)
    u = rng.random(n_fibers)
    phi = rng.uniform(0.0, 2.0 * np.pi, n_fibers)
    rr = radius_um * np.sqrt(u)
    xy = np.column_stack([cx + rr * np.cos(phi), cy + rr * np.sin(phi)])
    thresholds = 0.03 * np.exp(threshold_sigma * rng.standard_normal(n_fibers))
    record = FascicleRecord(
        id=fid,
        centroid_um=(float(cx), float(cy)),
        area_um2=float(np.pi * radius_um**2),
        motor_fiber_count=n_fibers,
    )
    return record, FiberSet(fid, xy, thresholds)


def build_nerve(fascicle_specs, seed=0, sigma=0.3):
    """fascicle_specs: list of (fid, angle_deg, rho, radius, n_fibers, muscle)."""
    records, fiber_sets, muscle_map = [], [], {}
    for i, (fid, angle, rho, radius, n, muscle) in enumerate(fascicle_specs):
        record, fibers = make_fascicle(fid, angle, rho, radius, n, seed + i)
        records.append(record)
        fiber_sets.append(fibers)
        muscle_map[fid] = {muscle: 1.0}
    section = FascicleSection(z_um=0.0, fascicles=tuple(records))
    return NerveModel(section, sigma, muscle_map, fiber_sets, rng_seed=seed)


@pytest.fixture(scope="session")
def single_fascicle_nerve():
    """One FCR fascicle sitting nearest central contact 2."""
    return build_nerve([("F1", central_angle_deg(2), 900.0, 150.0, 40, "FCR")], seed=7)


@pytest.fixture(scope="session")
def two_fascicle_nerve():
    """FCR fascicle at C2's angle, FDS fascicle diametrically opposite at C5's."""
    return build_nerve(
        [
            ("F1", central_angle_deg(2), 900.0, 150.0, 30, "FCR"),
            ("F2", central_angle_deg(5), 900.0, 150.0, 30, "FDS"),
        ],
        seed=11,
    )


@pytest.fixture(scope="session")
def fast_ramp():
    """Short staircase that fully saturates the fixture nerves."""
    return RampSpec(
        start_ua=45.0,
        step_ua=9.0,
        max_ua=180.0,
        step_duration_s=1.0,
        pulses_per_step=5,
    )


@pytest.fixture(scope="session")
def fast_pulse():
    return PulseSpec(amplitude_ua=45.0)


@pytest.fixture(scope="session")
def layout():
    return DEFAULT_LAYOUT


class FakeBackend:
    """Cheap deterministic backend for state-machine tests.

    Recruitment follows min(1, amplitude/100), so a ramp starting at 50 uA in
    25 uA steps plateaus after the third step and trips the saturation rule.
    """

    def __init__(self, muscles=("FCR", "FDS"), sample_rate_hz=4000.0, fail_at_ua=None):
        self.sample_rate_hz = sample_rate_hz
        self.fail_at_ua = fail_at_ua
        self.deliveries = 0
        self.capabilities = {"max_current_ua": 1e6, "channels": list(muscles)}

    def recruitment(self, amplitude_ua):
        return min(1.0, max(0.0, amplitude_ua / 100.0))

    def deliver(self, config, pulse, n_pulses):
        from cuffbench.dsp import Channel, Recording
        from cuffbench.protocol import build_pulse_train
        from cuffbench.session import BackendError

        if self.fail_at_ua is not None and pulse.amplitude_ua >= self.fail_at_ua:
            raise BackendError(f"injected failure at {pulse.amplitude_ua} uA")
        self.deliveries += 1
        fs = self.sample_rate_hz
        events, _ = build_pulse_train(pulse, n_pulses, 0.0, fs, config.name)
        n = int(round((n_pulses / pulse.frequency_hz + 0.05) * fs))
        tmpl_n = int(round(0.008 * fs))
        tmpl = np.sin(2 * np.pi * np.arange(tmpl_n) / tmpl_n) * np.hanning(tmpl_n)
        tmpl /= np.max(np.abs(tmpl))
        lat = int(round(0.004 * fs))
        amp_uv = 1000.0 * self.recruitment(pulse.amplitude_ua)
        channels = []
        for i, muscle in enumerate(self.capabilities["channels"]):
            trace = np.zeros(n)
            for ev in events:
                i0 = int(round(ev.time_s * fs)) + lat
                trace[i0 : i0 + tmpl_n] += tmpl * amp_uv * (1.0 if i == 0 else 0.5)
            channels.append(Channel(muscle, trace))
        return Recording(fs, channels, events, {"config": config.name})


@pytest.fixture
def fake_backend():
    return FakeBackend()


@pytest.fixture
def quick_ramp():
    """Ramp matched to FakeBackend: saturates on the fifth step."""
    return RampSpec(
        start_ua=50.0,
        step_ua=25.0,
        max_ua=500.0,
        step_duration_s=0.5,
        pulses_per_step=3,
        saturation_window=2,
        saturation_epsilon=0.05,
    )


@pytest.fixture
def quick_pulse():
    return PulseSpec(amplitude_ua=50.0)
