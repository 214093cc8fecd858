"""File formats: recording container, model/section/layout files, CSV tables.

Every format is self-describing (a `format` tag plus integer version) and
round-trips losslessly: container samples are little-endian float32 exactly
as recorded, JSON carries floats through repr, and table exports format
numbers so they re-parse bit-identically.  Malformed input raises a
FormatError subclass, never an uncontrolled exception.

Byte-level layout is documented in docs/FORMATS.md; golden fixture files live
under tests/fixtures/.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from cuffbench.dsp import Channel, Recording
from cuffbench.electrode import CuffLayout
from cuffbench.histology import FascicleRecord, FascicleSection
from cuffbench.protocol import StimEvent

RECORDING_FORMAT = "cuffbench.recording"
SECTION_FORMAT = "cuffbench.section"
NERVE_FORMAT = "cuffbench.nerve"
CUFF_FORMAT = "cuffbench.cuff"
FORMAT_VERSION = 1

MAX_HEADER_BYTES = 32 * 1024 * 1024


class FormatError(Exception):
    """Base for all structured parse/serialisation errors."""


class ContainerError(FormatError):
    def __init__(self, message: str, byte_offset: int | None = None):
        self.byte_offset = byte_offset
        if byte_offset is not None:
            message = f"{message} (at byte {byte_offset})"
        super().__init__(message)


class TableError(FormatError):
    def __init__(self, message: str, column: str | None = None):
        self.column = column
        if column is not None:
            message = f"{message} (column {column!r})"
        super().__init__(message)


class SectionFileError(FormatError):
    pass


class ModelFileError(FormatError):
    pass


# ---------------------------------------------------------------------------
# recording container

def write_recording(recording: Recording, sink) -> None:
    """Serialise a recording: one JSON header line, then interleaved float32."""
    fs = recording.sample_rate_hz
    header = {
        "format": RECORDING_FORMAT,
        "version": FORMAT_VERSION,
        "sample_rate_hz": fs,
        "channels": recording.muscles,
        "sample_count": recording.n_samples,
        "stim_events": [
            {
                "time_s": ev.time_s,
                "sample_index": ev.sample_index(fs),
                "amplitude_uA": ev.amplitude_ua,
                "config": ev.config,
                "pulse_index": ev.pulse_index,
            }
            for ev in recording.stim_events
        ],
        "metadata": recording.metadata,
    }
    payload = np.column_stack([ch.samples for ch in recording.channels]).astype("<f4")
    with _open_binary(sink, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.tobytes())


def read_recording(source) -> Recording:
    with _open_binary(source, "rb") as fh:
        header_bytes = _read_header_line(fh)
        try:
            header = json.loads(header_bytes.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError(f"malformed header: {exc}", byte_offset=0) from None
        if not isinstance(header, dict) or header.get("format") != RECORDING_FORMAT:
            raise ContainerError("not a recording container", byte_offset=0)
        if header.get("version") != FORMAT_VERSION:
            raise ContainerError(
                f"unsupported container version {header.get('version')!r}"
            )
        try:
            fs = float(header["sample_rate_hz"])
            labels = list(header["channels"])
            count = int(header["sample_count"])
            raw_events = header["stim_events"]
            metadata = header.get("metadata", {})
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerError(f"incomplete header: {exc}") from None
        if count < 0 or fs <= 0 or not labels:
            raise ContainerError("header fields out of range")

        offset = len(header_bytes) + 1
        expected = 4 * count * len(labels)
        payload = fh.read(expected + 1)
        if len(payload) < expected:
            raise ContainerError(
                f"payload truncated: expected {expected} bytes, got {len(payload)}",
                byte_offset=offset + len(payload),
            )
        if len(payload) > expected:
            raise ContainerError(
                "payload longer than declared sample count",
                byte_offset=offset + expected,
            )
        frames = np.frombuffer(payload, dtype="<f4").reshape(count, len(labels))
        events = []
        try:
            for ev in raw_events:
                events.append(
                    StimEvent(
                        time_s=float(ev["time_s"]),
                        amplitude_ua=float(ev["amplitude_uA"]),
                        config=str(ev.get("config", "")),
                        pulse_index=int(ev.get("pulse_index", 0)),
                    )
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerError(f"malformed stimulation event: {exc}") from None
        try:
            return Recording(
                sample_rate_hz=fs,
                channels=[
                    Channel(label, np.ascontiguousarray(frames[:, j]))
                    for j, label in enumerate(labels)
                ],
                stim_events=events,
                metadata=dict(metadata),
            )
        except ValueError as exc:
            raise ContainerError(f"inconsistent container: {exc}") from None


def _read_header_line(fh: IO[bytes]) -> bytes:
    buf = bytearray()
    while True:
        b = fh.read(1)
        if not b:
            raise ContainerError("missing header terminator", byte_offset=len(buf))
        if b == b"\n":
            return bytes(buf)
        buf.extend(b)
        if len(buf) > MAX_HEADER_BYTES:
            raise ContainerError("header exceeds size bound", byte_offset=len(buf))


# ---------------------------------------------------------------------------
# tabular exports

CURVE_SCHEMA = ("muscle", "config", "amplitude_uA", "p2p_uV", "normalized")
POLAR_SCHEMA = ("intensity_uA", "config", "config_angle_deg", "muscle", "recruitment", "radius")
SELECTIVITY_SCHEMA = ("target", "config", "amplitude_uA", "selectivity_index", "target_recruitment")
TRUTH_SCHEMA = ("config", "amplitude_uA", "muscle", "recruitment")
PATTERN_SCHEMA = ("contact", "weight_num", "weight_den")
CORRESPONDENCE_SCHEMA = ("kind", "id_a", "id_b", "id_b2")
STATS_SCHEMA = ("fascicle", "motor_fiber_count", "area_um2", "density_per_um2", "rank")


def export_table(rows: Iterable[Mapping[str, object]], schema: Sequence[str], sink) -> None:
    """Comma-separated export with a header row.

    Rows must carry exactly the schema's columns.  Floats are written with
    repr so a re-parse reproduces them exactly.
    """
    schema = tuple(schema)
    with _open_text(sink, "w") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema)
        for i, row in enumerate(rows):
            extra = set(row) - set(schema)
            if extra:
                raise TableError(f"row {i} carries unexpected column", column=sorted(extra)[0])
            out = []
            for col in schema:
                if col not in row:
                    raise TableError(f"row {i} missing column", column=col)
                out.append(_format_cell(row[col]))
            writer.writerow(out)


def read_table(source) -> tuple[tuple[str, ...], list[dict[str, str]]]:
    """Parse a table export back into (schema, rows of strings)."""
    with _open_text(source, "r") as fh:
        reader = csv.reader(fh)
        try:
            schema = tuple(next(reader))
        except StopIteration:
            raise TableError("empty table file") from None
        rows = []
        for line_no, record in enumerate(reader, start=2):
            if len(record) != len(schema):
                raise TableError(f"line {line_no} has {len(record)} cells, expected {len(schema)}")
            rows.append(dict(zip(schema, record)))
        return schema, rows


def _format_cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v) or math.isinf(v):
            raise TableError(f"non-finite value {v!r}")
        return repr(v)
    return str(value)


def recruitment_rows(curves) -> list[dict[str, object]]:
    rows = []
    for c in curves:
        for p in c.points:
            rows.append(
                {
                    "muscle": c.muscle,
                    "config": c.config,
                    "amplitude_uA": p.amplitude_ua,
                    "p2p_uV": p.mean_p2p_uv,
                    "normalized": p.normalized,
                }
            )
    return rows


def correspondence_rows(correspondence) -> list[dict[str, object]]:
    rows: list[dict[str, object]] = []
    for ida, idb in correspondence.matches:
        rows.append({"kind": "match", "id_a": ida, "id_b": idb, "id_b2": ""})
    for ida, (b1, b2) in correspondence.splits:
        rows.append({"kind": "split", "id_a": ida, "id_b": b1, "id_b2": b2})
    for ida in correspondence.unmatched_a:
        rows.append({"kind": "unmatched_a", "id_a": ida, "id_b": "", "id_b2": ""})
    for idb in correspondence.unmatched_b:
        rows.append({"kind": "unmatched_b", "id_a": "", "id_b": idb, "id_b2": ""})
    return rows


def stats_rows(section: FascicleSection, stats) -> list[dict[str, object]]:
    by_id = section.by_id()
    return [
        {
            "fascicle": fid,
            "motor_fiber_count": by_id[fid].motor_fiber_count,
            "area_um2": by_id[fid].area_um2,
            "density_per_um2": density,
            "rank": rank,
        }
        for rank, (fid, density) in enumerate(stats.densities, start=1)
    ]


# ---------------------------------------------------------------------------
# section files

def write_section(section: FascicleSection, sink) -> None:
    obj = {
        "format": SECTION_FORMAT,
        "version": FORMAT_VERSION,
        "z_um": section.z_um,
        "fascicles": [
            {
                "id": f.id,
                "centroid_um": list(f.centroid_um),
                "area_um2": f.area_um2,
                "motor_fiber_count": f.motor_fiber_count,
                "contour_um": [list(p) for p in f.contour_um] if f.contour_um else None,
            }
            for f in section.fascicles
        ],
    }
    _write_json(obj, sink)


def read_section(source) -> FascicleSection:
    obj = _read_json(source, SECTION_FORMAT, SectionFileError, "section")
    fascicles = []
    for i, rec in enumerate(obj.get("fascicles", [])):
        try:
            contour = rec.get("contour_um")
            fascicles.append(
                FascicleRecord(
                    id=str(rec["id"]),
                    centroid_um=(float(rec["centroid_um"][0]), float(rec["centroid_um"][1])),
                    area_um2=float(rec["area_um2"]),
                    motor_fiber_count=(
                        int(rec["motor_fiber_count"])
                        if rec.get("motor_fiber_count") is not None
                        else None
                    ),
                    contour_um=(
                        tuple((float(x), float(y)) for x, y in contour) if contour else None
                    ),
                )
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise SectionFileError(
                f"{_name(source)}: fascicle record {i}: {exc}"
            ) from None
    try:
        return FascicleSection(z_um=float(obj.get("z_um", 0.0)), fascicles=tuple(fascicles))
    except ValueError as exc:
        raise SectionFileError(f"{_name(source)}: {exc}") from None


# ---------------------------------------------------------------------------
# nerve model files

def write_nerve_model(nerve, sink) -> None:
    obj = {
        "format": NERVE_FORMAT,
        "version": FORMAT_VERSION,
        "sigma_s_per_m": nerve.sigma_s_per_m,
        "rng_seed": nerve.rng_seed,
        "cross_section": {
            "z_um": nerve.cross_section.z_um,
            "fascicles": [
                {
                    "id": f.id,
                    "centroid_um": list(f.centroid_um),
                    "area_um2": f.area_um2,
                    "motor_fiber_count": f.motor_fiber_count,
                }
                for f in nerve.cross_section.fascicles
            ],
        },
        "fascicle_muscle_map": nerve.fascicle_muscle_map,
        "fibers": [
            {
                "fascicle": fs.fascicle_id,
                "xy_um": fs.xy_um.tolist(),
                "thresholds_v": fs.thresholds_v.tolist(),
            }
            for fs in nerve.fibers
        ],
    }
    _write_json(obj, sink)


def read_nerve_model(source):
    from cuffbench.nervesim import FiberSet, NerveModel

    obj = _read_json(source, NERVE_FORMAT, ModelFileError, "nerve model")
    try:
        cs = obj["cross_section"]
        fascicles = tuple(
            FascicleRecord(
                id=str(rec["id"]),
                centroid_um=(float(rec["centroid_um"][0]), float(rec["centroid_um"][1])),
                area_um2=float(rec["area_um2"]),
                motor_fiber_count=(
                    int(rec["motor_fiber_count"])
                    if rec.get("motor_fiber_count") is not None
                    else None
                ),
            )
            for rec in cs["fascicles"]
        )
        section = FascicleSection(z_um=float(cs.get("z_um", 0.0)), fascicles=fascicles)
        fibers = [
            FiberSet(
                fascicle_id=str(f["fascicle"]),
                xy_um=np.asarray(f["xy_um"], dtype=float).reshape(-1, 2),
                thresholds_v=np.asarray(f["thresholds_v"], dtype=float),
            )
            for f in obj["fibers"]
        ]
        muscle_map = {
            str(fid): {str(m): float(w) for m, w in mapping.items()}
            for fid, mapping in obj["fascicle_muscle_map"].items()
        }
        return NerveModel(
            cross_section=section,
            sigma_s_per_m=float(obj["sigma_s_per_m"]),
            fascicle_muscle_map=muscle_map,
            fibers=fibers,
            rng_seed=int(obj.get("rng_seed", 0)),
        )
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ModelFileError(f"{_name(source)}: {exc}") from None


# ---------------------------------------------------------------------------
# cuff layout files

def write_cuff_layout(layout: CuffLayout, sink) -> None:
    obj = {
        "format": CUFF_FORMAT,
        "version": FORMAT_VERSION,
        "inner_diameter_um": layout.inner_diameter_um,
        "ring_offsets_um": list(layout.ring_offsets_um),
        "central_angles_deg": list(layout.central_angles_deg),
    }
    _write_json(obj, sink)


def read_cuff_layout(source) -> CuffLayout:
    obj = _read_json(source, CUFF_FORMAT, FormatError, "cuff layout")
    try:
        return CuffLayout(
            inner_diameter_um=float(obj["inner_diameter_um"]),
            ring_offsets_um=tuple(float(v) for v in obj["ring_offsets_um"]),
            central_angles_deg=tuple(float(v) for v in obj["central_angles_deg"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{_name(source)}: {exc}") from None


# ---------------------------------------------------------------------------
# session logs (JSON lines)

def read_session_log(source) -> list[dict]:
    events = []
    with _open_text(source, "r") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{_name(source)}: line {line_no}: {exc}") from None
            if not isinstance(obj, dict):
                raise FormatError(f"{_name(source)}: line {line_no}: not an object")
            events.append(obj)
    return events


# ---------------------------------------------------------------------------
# helpers

def _write_json(obj: dict, sink) -> None:
    with _open_text(sink, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _read_json(source, expected_format: str, err_cls, what: str) -> dict:
    with _open_text(source, "r") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise err_cls(f"{_name(source)}: malformed JSON: {exc}") from None
    if not isinstance(obj, dict) or obj.get("format") != expected_format:
        raise err_cls(f"{_name(source)}: not a {what} file")
    if obj.get("version") != FORMAT_VERSION:
        raise err_cls(f"{_name(source)}: unsupported {what} version {obj.get('version')!r}")
    return obj


class _Opened:
    def __init__(self, fh, owned: bool):
        self.fh = fh
        self.owned = owned

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        if self.owned:
            self.fh.close()
        return False


def _open_binary(target, mode: str) -> _Opened:
    if isinstance(target, (str, Path)):
        return _Opened(open(target, mode), owned=True)
    return _Opened(target, owned=False)


def _open_text(target, mode: str) -> _Opened:
    if isinstance(target, (str, Path)):
        return _Opened(open(target, mode, encoding="utf-8", newline=""), owned=True)
    return _Opened(target, owned=False)


def _name(source) -> str:
    if isinstance(source, (str, Path)):
        return str(source)
    return getattr(source, "name", "<stream>")
