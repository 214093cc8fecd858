"""Filters against analytic oracles, epoching arithmetic, curve building."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cuffbench.dsp import (
    Channel,
    Recording,
    apply_filter,
    average_epochs,
    build_recruitment_curves,
    design_butterworth,
    emulate_acquisition,
    extract_epochs,
    peak_to_peak,
)
from cuffbench.protocol import StimEvent

FS = 20000.0


# --- analytic magnitude oracles (independent of the implementation) ---------

def analytic_bandpass_mag(f, lo, hi, order):
    n = order // 2
    w, wl, wh = 2 * np.pi * np.asarray(f, float), 2 * np.pi * lo, 2 * np.pi * hi
    x = (w**2 - wl * wh) / ((wh - wl) * w)
    return 1.0 / np.sqrt(1.0 + x ** (2 * n))


def analytic_bandstop_mag(f, lo, hi, order):
    n = order // 2
    w, wl, wh = 2 * np.pi * np.asarray(f, float), 2 * np.pi * lo, 2 * np.pi * hi
    num = (wh - wl) * w
    den = wl * wh - w**2
    with np.errstate(divide="ignore"):
        x = np.where(den != 0, num / den, np.inf)
    return 1.0 / np.sqrt(1.0 + x ** (2 * n))


def analytic_lowpass_mag(f, fc, order):
    return 1.0 / np.sqrt(1.0 + (np.asarray(f, float) / fc) ** (2 * order))


class TestDesign:
    def test_bandpass_matches_analytic_within_1pct(self):
        # a tenth of the low edge up to ten times the high edge
        filt = design_butterworth("bandpass", (10.0, 500.0), 4, FS)
        f = np.linspace(1.0, 5000.0, 8000)
        dev = np.abs(filt.gain_at(f) - analytic_bandpass_mag(f, 10.0, 500.0, 4))
        assert dev.max() < 0.01

    def test_midband_unity(self):
        filt = design_butterworth("bandpass", (10.0, 500.0), 4, FS)
        mid = np.sqrt(10.0 * 500.0)  # ~70.7 Hz
        gain_db = 20 * np.log10(filt.gain_at([mid])[0])
        assert abs(gain_db) < 0.5

    def test_edges_at_minus_3db(self):
        filt = design_butterworth("bandpass", (10.0, 500.0), 4, FS)
        for edge in (10.0, 500.0):
            gain_db = 20 * np.log10(filt.gain_at([edge])[0])
            assert gain_db == pytest.approx(-3.0103, abs=0.3)

    def test_notch_matches_analytic(self):
        filt = design_butterworth("notch", 50.0, 4, FS)
        f = np.linspace(1.0, 1000.0, 2000)
        dev = np.abs(filt.gain_at(f) - analytic_bandstop_mag(f, 40.0, 60.0, 4))
        assert dev.max() < 0.01

    def test_lowpass_matches_analytic(self):
        filt = design_butterworth("lowpass", 500.0, 4, FS)
        f = np.linspace(50.0, 5000.0, 2000)
        dev = np.abs(filt.gain_at(f) - analytic_lowpass_mag(f, 500.0, 4))
        assert dev.max() < 0.01

    def test_edge_beyond_nyquist_rejected(self):
        with pytest.raises(ValueError):
            design_butterworth("lowpass", FS / 2, 4, FS)
        with pytest.raises(ValueError):
            design_butterworth("bandpass", (10.0, 10001.0), 4, FS)

    def test_bad_parameters_rejected(self):
        with pytest.raises(ValueError):
            design_butterworth("bandpass", (500.0, 10.0), 4, FS)
        with pytest.raises(ValueError):
            design_butterworth("bandpass", (10.0, 500.0), 3, FS)
        with pytest.raises(ValueError):
            design_butterworth("comb", 50.0, 4, FS)
        with pytest.raises(ValueError):
            design_butterworth("lowpass", 100.0, 0, FS)


class TestApplyFilter:
    def test_notch_kills_50hz_sine(self):
        t = np.arange(int(FS)) / FS
        x = np.sin(2 * np.pi * 50.0 * t)
        notch = design_butterworth("notch", 50.0, 4, FS)
        y = apply_filter(x, notch, mode="zero_phase")
        assert np.sqrt(np.mean(y**2)) < 0.05 * np.sqrt(np.mean(x**2))

    def test_zero_in_zero_out(self):
        filt = design_butterworth("bandpass", (10.0, 500.0), 4, FS)
        for mode in ("zero_phase", "causal"):
            assert np.allclose(apply_filter(np.zeros(4000), filt, mode), 0.0)

    def test_passband_sine_preserved_no_lag(self):
        t = np.arange(int(2 * FS)) / FS
        x = np.sin(2 * np.pi * 100.0 * t)
        filt = design_butterworth("bandpass", (10.0, 500.0), 4, FS)
        y = apply_filter(x, filt, mode="zero_phase")
        core = slice(int(0.5 * FS), int(1.5 * FS))
        amp = (y[core].max() - y[core].min()) / 2
        assert amp == pytest.approx(1.0, rel=0.05)
        # cross-correlation peak of the central windows at zero lag
        lags = np.arange(-50, 51)
        xc = [np.dot(y[core][50 + l : -101 + l or None], x[core][50:-101]) for l in lags]
        assert lags[int(np.argmax(xc))] == 0

    def test_same_length_output(self):
        filt = design_butterworth("bandpass", (10.0, 500.0), 4, FS)
        x = np.random.default_rng(0).normal(size=5000)
        for mode in ("zero_phase", "causal"):
            assert len(apply_filter(x, filt, mode)) == len(x)

    def test_empty_rejected(self):
        filt = design_butterworth("lowpass", 100.0, 2, FS)
        with pytest.raises(ValueError):
            apply_filter(np.array([]), filt)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        x, y = rng.normal(size=4000), rng.normal(size=4000)
        filt = design_butterworth("bandpass", (10.0, 500.0), 4, FS)
        lhs = apply_filter(2.5 * x - 1.25 * y, filt)
        rhs = 2.5 * apply_filter(x, filt) - 1.25 * apply_filter(y, filt)
        assert np.max(np.abs(lhs - rhs)) < 1e-9 * max(1.0, np.max(np.abs(rhs)))

    def test_double_zero_phase_squares_magnitude(self):
        filt = design_butterworth("bandpass", (10.0, 500.0), 4, FS)
        t = np.arange(int(4 * FS)) / FS
        core = slice(int(1.5 * FS), int(2.5 * FS))
        for freq in (20.0, 70.0, 300.0):
            x = np.sin(2 * np.pi * freq * t)
            once = apply_filter(x, filt)
            twice = apply_filter(once, filt)
            a1 = (once[core].max() - once[core].min()) / 2
            a2 = (twice[core].max() - twice[core].min()) / 2
            assert a2 == pytest.approx(a1 * a1, rel=0.05)


class TestAcquisitionChain:
    def test_gain_5000_on_passband_sine(self):
        t = np.arange(int(2 * FS)) / FS
        x = 1.0 * np.sin(2 * np.pi * 100.0 * t)  # 1 uV
        y = emulate_acquisition(x, FS)
        core = y[int(FS) :]
        amp = (core.max() - core.min()) / 2
        assert amp == pytest.approx(5000.0, rel=0.02)  # ~5 mV out

    def test_zero_in_zero_out(self):
        assert np.allclose(emulate_acquisition(np.zeros(8000), FS), 0.0)

    def test_mains_suppressed(self):
        t = np.arange(int(2 * FS)) / FS
        x = np.sin(2 * np.pi * 50.0 * t)
        y = emulate_acquisition(x, FS) / 5000.0
        steady = y[int(FS) :]
        assert np.sqrt(np.mean(steady**2)) < 0.1 * np.sqrt(np.mean(x**2))


def _recording_with_events(n_steps=2, pulses=3, fs=FS, wave_scale=None):
    """Recording with a biphasic test wave after each event; one amplitude per step."""
    period = 1 / 35.0
    step_gap = 0.5
    n = int(round((n_steps * step_gap + 0.2) * fs))
    data = np.zeros(n)
    tmpl_n = int(round(0.010 * fs))
    tmpl = np.sin(2 * np.pi * np.arange(tmpl_n) / tmpl_n) * np.hanning(tmpl_n)
    tmpl /= np.max(np.abs(tmpl))
    events = []
    for s in range(n_steps):
        amplitude = 100.0 + 9.0 * s
        scale = wave_scale(s) if wave_scale else 1.0
        for i in range(pulses):
            t = s * step_gap + i * period
            events.append(StimEvent(t, amplitude, "STR2", i))
            i0 = int(round(t * fs)) + int(round(0.004 * fs))
            data[i0 : i0 + tmpl_n] += tmpl * scale
    return Recording(fs, [Channel("FCR", data)], events, {"config": "STR2"})


class TestEpochs:
    def test_index_arithmetic(self):
        fs = FS
        n = 110000
        rec = Recording(
            fs,
            [Channel("FCR", np.arange(n, dtype=np.float32))],
            [StimEvent(100000 / fs, 100.0, "STR2", 0)],
        )
        result = extract_epochs(rec, (2.0, 25.0))
        ep = result.epochs[0]
        assert ep.samples[0] == 100040.0
        assert len(ep) == 460  # [100040, 100500)
        assert ep.samples[-1] == 100499.0

    def test_one_epoch_per_event_per_channel(self):
        rec = _recording_with_events(n_steps=1, pulses=19)
        result = extract_epochs(rec)
        assert len(result.epochs) == 19
        assert result.n_skipped == 0
        groups = result.for_muscle("FCR")
        assert {len(v) for v in groups.values()} == {19}

    def test_window_exceeding_interval_rejected(self):
        rec = _recording_with_events()
        with pytest.raises(ValueError):
            extract_epochs(rec, (2.0, 30.0))  # 35 Hz period is ~28.57 ms

    def test_tail_event_skipped_with_count(self):
        fs = FS
        n = 10000
        events = [StimEvent(0.1, 50.0, "STR2", 0), StimEvent(n / fs - 0.001, 50.0, "STR2", 1)]
        rec = Recording(fs, [Channel("FCR", np.zeros(n, dtype=np.float32))], events)
        result = extract_epochs(rec, (2.0, 25.0))
        assert result.n_skipped == 1
        assert len(result.epochs) == 1

    def test_no_events_rejected(self):
        rec = Recording(FS, [Channel("FCR", np.zeros(100, dtype=np.float32))], [])
        with pytest.raises(ValueError):
            extract_epochs(rec)


class TestAveraging:
    def test_identical_epochs_idempotent(self):
        w = np.sin(np.linspace(0, 3, 50))
        assert np.allclose(average_epochs([w, w, w]), w)

    def test_opposite_epochs_cancel(self):
        w = np.random.default_rng(1).normal(size=64)
        assert np.allclose(average_epochs([w, -w]), 0.0)

    def test_white_noise_rms_shrinks_sqrt19(self):
        rng = np.random.default_rng(42)
        epochs = rng.normal(0.0, 1.0, size=(19, 100000))
        mean = average_epochs(list(epochs))
        ratio = np.sqrt(np.mean(mean**2)) * np.sqrt(19)
        assert 0.8 < ratio < 1.2

    def test_errors(self):
        with pytest.raises(ValueError):
            average_epochs([])
        with pytest.raises(ValueError):
            average_epochs([np.zeros(4), np.zeros(5)])


class TestPeakToPeak:
    def test_unit_sine(self):
        t = np.linspace(0, 1, 1000, endpoint=False)
        assert peak_to_peak(np.sin(2 * np.pi * 5 * t)) == pytest.approx(2.0, abs=1e-4)

    def test_constant(self):
        assert peak_to_peak(np.full(10, 3.3)) == 0.0

    def test_simple_values(self):
        assert peak_to_peak([0.2, -0.5, 0.3]) == pytest.approx(0.8)

    def test_empty(self):
        with pytest.raises(ValueError):
            peak_to_peak([])

    @given(
        st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=1, max_size=50),
        st.floats(min_value=-1e3, max_value=1e3),
    )
    def test_translation_invariant(self, values, offset):
        x = np.asarray(values)
        assert peak_to_peak(x + offset) == pytest.approx(peak_to_peak(x), abs=1e-9)


class TestRecording:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Recording(FS, [Channel("A", np.zeros(5)), Channel("B", np.zeros(6))], [])

    def test_duplicate_muscles_rejected(self):
        with pytest.raises(ValueError):
            Recording(FS, [Channel("A", np.zeros(5)), Channel("A", np.zeros(5))], [])

    def test_event_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            Recording(FS, [Channel("A", np.zeros(10))], [StimEvent(1.0, 5.0, "", 0)])

    def test_event_order_enforced(self):
        events = [StimEvent(0.2, 5.0, "", 0), StimEvent(0.1, 5.0, "", 1)]
        with pytest.raises(ValueError):
            Recording(FS, [Channel("A", np.zeros(10000))], events)


class TestCurves:
    def test_simple_normalization(self):
        rec = _recording_with_events(n_steps=3, pulses=3, wave_scale=lambda s: [1.0, 2.0, 4.0][s])
        curves = build_recruitment_curves([rec])
        assert len(curves) == 1
        values = curves[0].normalized_values()
        assert values == pytest.approx([0.25, 0.5, 1.0], rel=1e-9)
        assert values[-1] == 1.0  # exact by construction

    def test_per_muscle_scope_each_max_is_one(self):
        fs = FS
        rec1 = _recording_with_events(n_steps=2, pulses=3, wave_scale=lambda s: s + 1.0)
        # second muscle is 10x weaker overall
        weak = Channel("FDS", rec1.channel("FCR").samples * 0.1)
        rec = Recording(fs, [rec1.channels[0], weak], rec1.stim_events, rec1.metadata)
        per_muscle = build_recruitment_curves([rec], normalization_scope="per_muscle")
        assert all(max(c.normalized_values()) == 1.0 for c in per_muscle)
        global_curves = build_recruitment_curves([rec], normalization_scope="global")
        by_muscle = {c.muscle: max(c.normalized_values()) for c in global_curves}
        assert by_muscle["FCR"] == 1.0
        assert by_muscle["FDS"] == pytest.approx(0.1, rel=1e-6)

    def test_gain_invariance(self):
        rec = _recording_with_events(n_steps=3, pulses=3, wave_scale=lambda s: s + 1.0)
        scaled = Recording(
            rec.sample_rate_hz,
            [Channel("FCR", rec.channel("FCR").samples * 37.0)],
            rec.stim_events,
            rec.metadata,
        )
        a = build_recruitment_curves([rec])[0].normalized_values()
        b = build_recruitment_curves([scaled])[0].normalized_values()
        assert a == pytest.approx(b, rel=1e-6)

    def test_all_zero_group_flagged(self):
        fs = FS
        events = [StimEvent(0.1 + i / 35.0, 50.0, "STR1", i) for i in range(3)]
        rec = Recording(fs, [Channel("FCR", np.zeros(int(fs), dtype=np.float32))], events)
        curves = build_recruitment_curves([rec])
        assert curves[0].normalization == "unnormalizable"
        assert all(p.normalized is None for p in curves[0].points)
        assert all(p.mean_p2p_uv == 0.0 for p in curves[0].points)

    def test_mismatched_muscle_labels_rejected(self):
        a = _recording_with_events()
        b = Recording(
            a.sample_rate_hz,
            [Channel("ECR", a.channel("FCR").samples)],
            a.stim_events,
            {"config": "STR3"},
        )
        with pytest.raises(ValueError):
            build_recruitment_curves([a, b])
