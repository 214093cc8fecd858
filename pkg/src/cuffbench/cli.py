"""Batch entry points: offline analysis, simulator sweeps, the session server
and histology exports.

Exit codes: 0 success, 1 input/data error, 2 usage error (argparse), 3
internal error.  All commands are deterministic for fixed inputs and seed and
never modify their inputs.
"""

from __future__ import annotations

import argparse
import os
import signal
import sys
from pathlib import Path

import numpy as np

from cuffbench import formats
from cuffbench.dsp import MUSCLES, build_recruitment_curves
from cuffbench.electrode import all_configs, parse_config
from cuffbench.histology import match_fascicles, motor_fiber_stats
from cuffbench.nervesim import synthesize_recording
from cuffbench.protocol import PulseSpec, RampSpec, ramp_amplitudes
from cuffbench.selectivity import build_polar_map, find_selective_points
from cuffbench.session import HardwareStubBackend, SimulatorBackend
from cuffbench.service import SessionService

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

OUT_ENV_VAR = "CUFFBENCH_OUT"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (formats.FormatError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BrokenPipeError:
        return EXIT_INPUT
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuffbench",
        description="Multicontact cuff stimulation bench: analyse, simulate, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="offline recruitment analysis of recordings")
    p.add_argument("recordings", nargs="+", help="recording container files")
    p.add_argument("--window-ms", default="2,25", help="epoch window start,end (ms)")
    p.add_argument("--norm", choices=["per-muscle", "global"], default="per-muscle")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV_VAR} or .)")
    p.add_argument("--plot", action="store_true", help="also emit static PNG figures")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run the synthetic nerve over configurations")
    p.add_argument("model", help="nerve model file")
    p.add_argument("--configs", default="all", help="comma list, e.g. RING,STR2 (default all 7)")
    p.add_argument("--start-ua", type=float, default=150.0)
    p.add_argument("--step-ua", type=float, default=9.0)
    p.add_argument("--max-ua", type=float, default=250.0)
    p.add_argument("--step-duration-s", type=float, default=4.5)
    p.add_argument("--pulses-per-step", type=int, default=19)
    p.add_argument("--frequency-hz", type=float, default=35.0)
    p.add_argument("--phase-us", type=float, default=150.0)
    p.add_argument("--noise-rms-uv", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="serve a live session over TCP")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", help="nerve model file (simulator backend)")
    group.add_argument("--hardware-stub", action="store_true", help="use the stub backend")
    p.add_argument("--bind", default="127.0.0.1:7350", help="HOST:PORT (port 0 = ephemeral)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-rms-uv", type=float, default=0.0)
    p.add_argument("--out", default=None, help="session directory for persisted artifacts")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("histo", help="fascicle statistics and section correspondences")
    p.add_argument("sections", nargs="+", help="section files")
    p.add_argument("--radius-um", type=float, default=150.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_histo)
    return parser


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV_VAR) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_window(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"window must be start,end in ms, got {text!r}")
    return float(parts[0]), float(parts[1])


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    window = _parse_window(args.window_ms)
    scope = args.norm.replace("-", "_")
    recordings = [formats.read_recording(p) for p in args.recordings]
    curves = build_recruitment_curves(recordings, normalization_scope=scope, window_ms=window)

    written = []
    formats.export_table(formats.recruitment_rows(curves), formats.CURVE_SCHEMA, out / "curves.csv")
    written.append("curves.csv")
    if any(c.config.upper().startswith("STR") for c in curves):
        try:
            polar = build_polar_map(curves)
        except ValueError as exc:
            print(f"note: polar map skipped: {exc}", file=sys.stderr)
        else:
            formats.export_table(polar.rows(), formats.POLAR_SCHEMA, out / "polar.csv")
            written.append("polar.csv")
    rows = []
    for target in sorted({c.muscle for c in curves}):
        for rec in find_selective_points(curves, target):
            rows.append(
                {
                    "target": rec.target,
                    "config": rec.config,
                    "amplitude_uA": rec.amplitude_ua,
                    "selectivity_index": rec.selectivity_index,
                    "target_recruitment": rec.target_recruitment,
                }
            )
    formats.export_table(rows, formats.SELECTIVITY_SCHEMA, out / "selectivity.csv")
    written.append("selectivity.csv")

    if args.plot:
        written.extend(_emit_plots(curves, out))

    bundle = {
        "kind": "cuffbench.plot_bundle",
        "window_ms": list(window),
        "normalization": scope,
        "tables": written,
    }
    import json

    with open(out / "bundle.json", "w", encoding="utf-8") as fh:
        json.dump(bundle, fh, indent=2)
        fh.write("\n")
    print(f"wrote {', '.join(written + ['bundle.json'])} to {out}")
    return EXIT_OK


def _emit_plots(curves, out: Path) -> list[str]:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ValueError(f"--plot needs matplotlib: {exc}") from None
    fig, ax = plt.subplots(figsize=(7, 5))
    for c in curves:
        ax.plot(c.amplitudes, c.normalized_values(), marker="o", label=f"{c.muscle} {c.config}")
    ax.set_xlabel("intensity (uA)")
    ax.set_ylabel("normalized recruitment")
    ax.legend(fontsize=7)
    fig.savefig(out / "curves.png", dpi=150)
    plt.close(fig)
    return ["curves.png"]


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    nerve = formats.read_nerve_model(args.model)
    if args.configs == "all":
        configs = list(all_configs())
    else:
        configs = [parse_config(name) for name in args.configs.split(",")]
    ramp = RampSpec(
        start_ua=args.start_ua,
        step_ua=args.step_ua,
        max_ua=args.max_ua,
        step_duration_s=args.step_duration_s,
        pulses_per_step=args.pulses_per_step,
    )
    pulse = PulseSpec(
        amplitude_ua=args.start_ua,
        cathodic_width_us=args.phase_us,
        frequency_hz=args.frequency_hz,
    )
    from cuffbench.nervesim import recruitment_grid

    amps = ramp_amplitudes(ramp)
    for config in configs:
        seed = int(np.random.SeedSequence([args.seed, config.index]).generate_state(1)[0])
        recording = synthesize_recording(
            nerve,
            config,
            ramp,
            pulse,
            noise_rms_uv=args.noise_rms_uv,
            seed=seed,
        )
        formats.write_recording(recording, out / f"{config.name}.rec")
        muscles, fractions = recruitment_grid(nerve, config, amps)
        rows = [
            {
                "config": config.name,
                "amplitude_uA": a,
                "muscle": m,
                "recruitment": float(fractions[i, j]),
            }
            for i, a in enumerate(amps)
            for j, m in enumerate(muscles)
        ]
        formats.export_table(rows, formats.TRUTH_SCHEMA, out / f"{config.name}_truth.csv")
    print(f"wrote {len(configs)} recordings and truth tables to {out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    host, _, port_text = args.bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"--bind wants HOST:PORT, got {args.bind!r}")
    if args.model:
        nerve = formats.read_nerve_model(args.model)
        backend = SimulatorBackend(nerve, noise_rms_uv=args.noise_rms_uv, seed=args.seed)
    else:
        backend = HardwareStubBackend(channels=list(MUSCLES))
    session_dir = args.out or os.environ.get(OUT_ENV_VAR)
    service = SessionService(backend, host=host, port=int(port_text), session_dir=session_dir)
    try:
        bound_host, bound_port = service.start()
    except OSError as exc:
        print(f"error: cannot bind {args.bind}: {exc}", file=sys.stderr)
        return EXIT_INPUT

    def _stop(signum, frame):
        service.shutdown("shutdown")

    signal.signal(signal.SIGTERM, _stop)
    signal.signal(signal.SIGINT, _stop)
    print(f"listening on {bound_host}:{bound_port}", flush=True)
    service.serve_forever()
    print("stopped")
    return EXIT_OK


def cmd_histo(args) -> int:
    out = _out_dir(args)
    loaded = []
    for path in args.sections:
        section = formats.read_section(path)
        loaded.append((Path(path).stem, section))
    loaded.sort(key=lambda item: item[1].z_um)

    written = []
    for stem, section in loaded:
        stats = motor_fiber_stats(section)
        if stats.available:
            formats.export_table(
                formats.stats_rows(section, stats), formats.STATS_SCHEMA, out / f"{stem}_stats.csv"
            )
            written.append(f"{stem}_stats.csv")
            print(
                f"{stem}: {len(section)} fascicles, {stats.total_fibers} motor fibers, "
                f"concentration index {stats.concentration_index:.3f}"
            )
        else:
            print(f"{stem}: {len(section)} fascicles, motor fiber stats unavailable")
    for (stem_a, a), (stem_b, b) in zip(loaded, loaded[1:]):
        corr = match_fascicles(a, b, radius_um=args.radius_um)
        name = f"{stem_a}__{stem_b}_correspondence.csv"
        formats.export_table(formats.correspondence_rows(corr), formats.CORRESPONDENCE_SCHEMA, out / name)
        written.append(name)
        print(
            f"{stem_a} -> {stem_b}: {len(corr.matches)} matched, {len(corr.splits)} splits, "
            f"{len(corr.unmatched_a)}/{len(corr.unmatched_b)} unmatched"
        )
    if written:
        print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
