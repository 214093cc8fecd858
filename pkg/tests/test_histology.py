"""Section matching, split detection, fiber statistics, model seeding."""

import math

import numpy as np
import pytest

from cuffbench.histology import (
    FascicleRecord,
    FascicleSection,
    FiberSamplingParams,
    match_fascicles,
    motor_fiber_stats,
    section_to_nerve_model,
)


def grid_section(n=18, spacing=400.0, area=7000.0, z=0.0, counts=None):
    """n fascicles on a centred grid, ids F1..Fn."""
    cols = 5
    fascicles = []
    for i in range(n):
        row, col = divmod(i, cols)
        fascicles.append(
            FascicleRecord(
                id=f"F{i + 1}",
                centroid_um=(col * spacing - 800.0, row * spacing - 600.0),
                area_um2=area,
                motor_fiber_count=None if counts is None else counts[i],
            )
        )
    return FascicleSection(z_um=z, fascicles=tuple(fascicles))


def split_fixture():
    """Section B replaces A's F7 by two half-area children 10 um either side."""
    a = grid_section(18)
    replaced = a.by_id()["F7"]
    children = []
    for suffix, dx in (("a", -10.0), ("b", 10.0)):
        children.append(
            FascicleRecord(
                id=f"G7{suffix}",
                centroid_um=(replaced.centroid_um[0] + dx, replaced.centroid_um[1]),
                area_um2=replaced.area_um2 / 2.0,
                motor_fiber_count=None,
            )
        )
    others = tuple(
        FascicleRecord(f"G{f.id[1:]}", f.centroid_um, f.area_um2, None)
        for f in a.fascicles
        if f.id != "F7"
    )
    b = FascicleSection(z_um=100.0, fascicles=others + tuple(children))
    return a, b


class TestSectionValidation:
    def test_duplicate_ids_rejected(self):
        records = (
            FascicleRecord("F1", (0.0, 0.0), 10.0, None),
            FascicleRecord("F1", (5.0, 5.0), 10.0, None),
        )
        with pytest.raises(ValueError):
            FascicleSection(0.0, records)

    def test_nonpositive_area_rejected(self):
        with pytest.raises(ValueError):
            FascicleRecord("F1", (0.0, 0.0), 0.0, None)

    def test_empty_section_valid(self):
        assert len(FascicleSection(0.0, ())) == 0

    def test_circle_equivalent_radius(self):
        record = FascicleRecord("F1", (0.0, 0.0), math.pi * 50.0**2, None)
        assert record.radius_um == pytest.approx(50.0)


class TestMatching:
    def test_identity_correspondence(self):
        a = grid_section(18)
        corr = match_fascicles(a, a)
        assert len(corr.matches) == 18
        assert all(x == y for x, y in corr.matches)
        assert corr.splits == ()
        assert corr.unmatched_a == () and corr.unmatched_b == ()

    def test_fig3_style_split_detected(self):
        a, b = split_fixture()
        assert len(a) == 18 and len(b) == 19
        corr = match_fascicles(a, b)
        assert len(corr.splits) == 1
        assert corr.splits[0][0] == "F7"
        assert set(corr.splits[0][1]) == {"G7a", "G7b"}
        assert len(corr.matches) == 17
        assert corr.unmatched_a == () and corr.unmatched_b == ()

    def test_global_shift_beyond_radius_unmatched(self):
        a = grid_section(12)
        shifted = FascicleSection(
            100.0,
            tuple(
                FascicleRecord(f.id, (f.centroid_um[0], f.centroid_um[1] + 1500.0), f.area_um2)
                for f in a.fascicles
            ),
        )
        corr = match_fascicles(a, shifted, radius_um=150.0)
        assert corr.matches == () and corr.splits == ()
        assert len(corr.unmatched_a) == 12 and len(corr.unmatched_b) == 12

    def test_conservation_counts(self):
        a, b = split_fixture()
        corr = match_fascicles(a, b)
        assert len(corr.matches) + len(corr.splits) + len(corr.unmatched_a) == len(a)
        assert len(corr.matches) + 2 * len(corr.splits) + len(corr.unmatched_b) == len(b)

    def test_area_tolerance_gates_split(self):
        a, b = split_fixture()
        # children together are exactly the parent area; a tiny tolerance still accepts,
        # but if the children shrink far below the parent the split is refused
        small = FascicleSection(
            b.z_um,
            tuple(
                FascicleRecord(
                    f.id,
                    f.centroid_um,
                    f.area_um2 / 4.0 if f.id.startswith("G7") else f.area_um2,
                    None,
                )
                for f in b.fascicles
            ),
        )
        corr = match_fascicles(a, small, split_area_tol=0.30)
        assert corr.splits == ()
        assert len(corr.unmatched_b) == 1

    def test_bad_radius(self):
        a = grid_section(4)
        with pytest.raises(ValueError):
            match_fascicles(a, a, radius_um=0.0)


class TestStats:
    def test_all_fibers_in_one_fascicle_index_one(self):
        counts = [0] * 18
        counts[4] = 90
        stats = motor_fiber_stats(grid_section(18, counts=counts))
        assert stats.available
        assert stats.concentration_index == pytest.approx(1.0)
        assert stats.ranking[0] == "F5"

    def test_equal_density_index_zero(self):
        stats = motor_fiber_stats(grid_section(10, counts=[7] * 10))
        assert stats.concentration_index == pytest.approx(0.0)

    def test_ranking_by_density(self):
        stats = motor_fiber_stats(grid_section(3, counts=[5, 90, 5]))
        assert stats.ranking[0] == "F2"
        assert stats.total_fibers == 100

    def test_missing_counts_flagged(self):
        stats = motor_fiber_stats(grid_section(5))
        assert not stats.available

    def test_index_in_unit_interval(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            counts = rng.integers(0, 50, 8).tolist()
            stats = motor_fiber_stats(grid_section(8, counts=counts))
            assert 0.0 <= stats.concentration_index <= 1.0


class TestModelSeeding:
    def test_zero_fibers_everywhere(self):
        section = grid_section(4, counts=[0, 0, 0, 0])
        model = section_to_nerve_model(section, {"F1": "FCR"}, seed=1)
        assert all(fs.n_fibers == 0 for fs in model.fibers)

    def test_deterministic_under_seed(self):
        section = grid_section(4, counts=[10, 20, 5, 0])
        assign = {"F1": "FCR", "F2": "FDS"}
        a = section_to_nerve_model(section, assign, seed=42)
        b = section_to_nerve_model(section, assign, seed=42)
        for fa, fb in zip(a.fibers, b.fibers):
            assert np.array_equal(fa.xy_um, fb.xy_um)
            assert np.array_equal(fa.thresholds_v, fb.thresholds_v)

    def test_fiber_counts_proportional(self):
        section = grid_section(2, counts=[100, 10])
        model = section_to_nerve_model(section, {"F1": "FCR", "F2": "FDS"}, seed=9)
        n = {fs.fascicle_id: fs.n_fibers for fs in model.fibers}
        assert n["F1"] == 100 and n["F2"] == 10
        scaled = section_to_nerve_model(
            section,
            {"F1": "FCR"},
            fiber_params=FiberSamplingParams(fibers_per_motor_count=0.5),
            seed=9,
        )
        n2 = {fs.fascicle_id: fs.n_fibers for fs in scaled.fibers}
        assert n2["F1"] == 50 and n2["F2"] == 5

    def test_fibers_strictly_inside_boundary(self):
        section = grid_section(3, counts=[200, 200, 200])
        model = section_to_nerve_model(section, {"F1": "FCR"}, seed=3)
        for fs, record in zip(model.fibers, section.fascicles):
            cx, cy = record.centroid_um
            d = np.hypot(fs.xy_um[:, 0] - cx, fs.xy_um[:, 1] - cy)
            assert np.all(d < record.radius_um)

    def test_unknown_fascicle_rejected(self):
        with pytest.raises(ValueError):
            section_to_nerve_model(grid_section(2, counts=[1, 1]), {"F9": "FCR"})

    def test_load_section_delegates_to_formats(self, tmp_path):
        from cuffbench import formats
        from cuffbench.histology import load_section

        path = tmp_path / "s.json"
        section = grid_section(3, counts=[1, 2, 3])
        formats.write_section(section, path)
        assert load_section(path) == section

    def test_weighted_assignment(self):
        section = grid_section(1, counts=[10])
        model = section_to_nerve_model(section, {"F1": {"FCR": 0.7, "PT": 0.3}}, seed=0)
        assert model.fascicle_muscle_map["F1"] == {"FCR": 0.7, "PT": 0.3}
