"""Hot numeric kernels: point-source field superposition and threshold recruitment.

These two loops dominate simulator runtime (every fiber against every contact
source, then every fiber against every amplitude).  A compiled extension
(`cuffbench._accel`, built from Cython) is preferred when importable; the
numpy implementations below are the reference and the fallback.  Set
CUFFBENCH_PURE=1 to force the numpy path.

Units are SI here: positions in metres, currents in amperes, potentials in
volts.  Callers own the micrometre/microampere conversions.
"""

from __future__ import annotations

import os

import numpy as np

MIN_CLEARANCE_M = 1e-6  # singularity guard around each point source

try:
    from cuffbench import _accel
except ImportError:
    _accel = None


def unit_potentials_numpy(
    source_xyz_m: np.ndarray,
    source_weights: np.ndarray,
    points_xyz_m: np.ndarray,
    sigma_s_per_m: float,
) -> np.ndarray:
    """Potential at each point per ampere of total current.

    Homogeneous-medium point-source superposition: V = sum_c w_c / (4 pi sigma r_c).
    Raises if any point sits closer than the 1 um clearance to a source.
    """
    src = np.atleast_2d(np.asarray(source_xyz_m, dtype=float))
    w = np.asarray(source_weights, dtype=float)
    pts = np.atleast_2d(np.asarray(points_xyz_m, dtype=float))
    if sigma_s_per_m <= 0:
        raise ValueError("conductivity must be positive")
    if src.shape[0] != w.shape[0]:
        raise ValueError("one weight per source required")
    diff = pts[:, None, :] - src[None, :, :]
    r = np.sqrt(np.sum(diff * diff, axis=2))
    if r.size and np.min(r) < MIN_CLEARANCE_M:
        raise ValueError(
            f"field point within {MIN_CLEARANCE_M * 1e6:.0f} um of a contact source"
        )
    return (w[None, :] / r).sum(axis=1) / (4.0 * np.pi * sigma_s_per_m)


def recruitment_counts_numpy(
    driving_v_per_a: np.ndarray,
    thresholds_v: np.ndarray,
    muscle_weights: np.ndarray,
    amplitudes_a: np.ndarray,
) -> np.ndarray:
    """Weighted activated-fiber counts per (amplitude, muscle).

    A fiber activates when its cathodic driving potential scaled by the
    amplitude reaches its threshold; scaling is linear, so activation is
    monotone in amplitude by construction.
    """
    d = np.asarray(driving_v_per_a, dtype=float)
    th = np.asarray(thresholds_v, dtype=float)
    w = np.atleast_2d(np.asarray(muscle_weights, dtype=float))
    amps = np.asarray(amplitudes_a, dtype=float)
    if d.shape != th.shape or w.shape[0] != d.shape[0]:
        raise ValueError("driving, thresholds and muscle weights disagree on fiber count")
    active = d[None, :] * amps[:, None] >= th[None, :]
    return active.astype(float) @ w


def _select():
    if _accel is not None and not os.environ.get("CUFFBENCH_PURE"):
        return "compiled", _accel.unit_potentials, _accel.recruitment_counts
    return "numpy", unit_potentials_numpy, recruitment_counts_numpy


BACKEND, unit_potentials, recruitment_counts = _select()


def implementations() -> dict:
    """Both kernel sets, for equivalence tests and the benchmark."""
    impls = {"numpy": (unit_potentials_numpy, recruitment_counts_numpy)}
    if _accel is not None:
        impls["compiled"] = (_accel.unit_potentials, _accel.recruitment_counts)
    return impls
