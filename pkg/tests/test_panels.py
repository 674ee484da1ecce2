"""Panel geometry, layout, sub-array selection, and MAPE tests."""

import itertools

import numpy as np
import pytest

from roofpv.grids import HeightGrid
from roofpv.panels import (
    LayoutError,
    PanelPlacement,
    PanelSpec,
    eaves_upslope,
    layout_panels,
    select_subarray,
)
from roofpv.report import (
    BuildingReport,
    SolarReport,
    mape,
    mape_at_kw,
    rle_cells,
    rle_encode,
    subarray_key,
)
from roofpv.roofseg import Plane, RoofSegment
from roofpv.synth import SceneSpec, generate_scene
from roofpv.roofseg import SegmentConfig, segment_roof


def make_placement(pid, energy, rated=330.0, seg=0):
    z = np.zeros(3)
    return PanelPlacement(pid, seg, z, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]),
                          energy, rated)


class TestEavesUpslope:
    def test_flat_roof_uses_documented_pair(self):
        e, u = eaves_upslope(np.array([0.0, 0.0, 1.0]))
        assert np.array_equal(e, [1.0, 0.0, 0.0])
        assert np.array_equal(u, [0.0, 1.0, 0.0])

    def test_worked_example_exact(self):
        n = np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0)
        e, u = eaves_upslope(n)
        assert np.allclose(e, [0.0, -1.0, 0.0], atol=1e-12)
        assert np.allclose(u, np.array([-1.0, 0.0, 1.0]) / np.sqrt(2.0), atol=1e-12)

    def test_orthonormal_frame_fuzz(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            v = rng.normal(size=3)
            v[2] = abs(v[2]) + 1e-3
            n = v / np.linalg.norm(v)
            e, u = eaves_upslope(n)
            assert abs(np.dot(e, n)) < 1e-9
            assert abs(np.dot(u, n)) < 1e-9
            assert abs(np.dot(e, u)) < 1e-9
            assert abs(np.linalg.norm(e) - 1) < 1e-9
            assert abs(np.linalg.norm(u) - 1) < 1e-9
            assert e[2] == 0.0
            assert u[2] > 0.0
            assert np.allclose(np.cross(u, e), n, atol=1e-9)

    def test_contract_errors(self):
        with pytest.raises(LayoutError):
            eaves_upslope(np.array([0.0, 0.0, 2.0]))
        with pytest.raises(LayoutError):
            eaves_upslope(np.array([0.0, 0.0, -1.0]))


def flat_segment(n_cells=20, cell=0.5, z=4.0):
    rows, cols = np.meshgrid(np.arange(n_cells), np.arange(n_cells), indexing="ij")
    cells = np.stack([rows.ravel(), cols.ravel()], axis=1)
    plane = Plane(np.array([0.0, 0.0, 1.0]), z)
    return RoofSegment(plane, cells, n_cells * n_cells * cell * cell, 0.0, 0.0)


class TestLayout:
    def test_segment_smaller_than_panel_is_empty(self):
        seg = flat_segment(n_cells=1)
        flux = HeightGrid(np.full((1, 1), 1000.0), 0.5)
        assert layout_panels(seg, PanelSpec(), flux) == []

    def test_flat_10x10_with_2x1_panels_gives_50(self):
        # 10 m x 10 m segment at 0.5 m cells; 2 m x 1 m panels, no spacing
        seg = flat_segment(n_cells=20, cell=0.5)
        flux = HeightGrid(np.full((20, 20), 1200.0), 0.5)
        spec = PanelSpec(width=2.0, height=1.0, rated_power=500.0, spacing=0.0,
                         system_efficiency=1.0)
        panels = layout_panels(seg, spec, flux)
        assert len(panels) == 50
        # uniform flux: energy = flux * area * eff
        for p in panels:
            assert p.annual_energy_kwh == pytest.approx(1200.0 * 2.0, rel=1e-12)

    def test_panels_avoid_obstacle_cells(self):
        scene = generate_scene(SceneSpec(
            rng_seed=53, extent=64, building_count=1, tree_count=0,
            obstacle_density=3.0, roof_styles=("gabled",),
        ))
        rr, cc = np.nonzero(scene.footprints_truth == 1)
        segments = segment_roof(scene.dsm_hq, np.stack([rr, cc], axis=1),
                                SegmentConfig(), seed=3)
        assert segments
        truth_cells = {tuple(c) for p in scene.roof_planes_truth[1] for c in p.cells}
        all_fp = {tuple(c) for c in np.stack([rr, cc], axis=1)}
        obstacles = all_fp - truth_cells
        assert obstacles
        flux = HeightGrid(np.full(scene.dsm_hq.shape, 1000.0), scene.dsm_hq.cell_size)
        spec = PanelSpec()
        hit = []
        for si, seg in enumerate(segments):
            for p in layout_panels(seg, spec, flux, segment_id=si):
                # sample the panel footprint and compare against obstacles
                for da in np.linspace(-spec.width / 2, spec.width / 2, 9):
                    for db in np.linspace(-spec.height / 2, spec.height / 2, 13):
                        q = p.center + da * p.eaves + db * p.up_slope
                        col = int(np.floor(q[0] / flux.cell_size))
                        row = flux.height - 1 - int(np.floor(q[1] / flux.cell_size))
                        if (row, col) in obstacles:
                            hit.append((row, col))
        assert hit == []

    def test_panels_never_overlap(self):
        seg = flat_segment(n_cells=24, cell=0.5)
        flux = HeightGrid(np.full((24, 24), 900.0), 0.5)
        spec = PanelSpec()
        panels = layout_panels(seg, spec, flux)
        assert len(panels) >= 2
        for p, q in itertools.combinations(panels, 2):
            da = abs(np.dot(p.center - q.center, p.eaves))
            db = abs(np.dot(p.center - q.center, p.up_slope))
            assert (da >= spec.width + spec.spacing - 1e-9
                    or db >= spec.height + spec.spacing - 1e-9)

    def test_energy_monotone_when_region_grows(self):
        flux = HeightGrid(np.full((30, 30), 1000.0), 0.5)
        spec = PanelSpec()
        prev = -1.0
        for n_cells in (12, 16, 20, 24, 28):
            seg = flat_segment(n_cells=n_cells, cell=0.5)
            panels = layout_panels(seg, spec, flux)
            total = sum(p.annual_energy_kwh for p in panels)
            assert total >= prev - 1e-9
            prev = total


class TestSelectSubarray:
    def test_5kw_of_500w_panels_is_10(self):
        panels = [make_placement(i, 100.0 + i) for i in range(30)]
        panels = [PanelPlacement(p.panel_id, 0, p.center, p.eaves, p.up_slope,
                                 p.annual_energy_kwh, 500.0) for p in panels]
        sel = select_subarray(panels, 5.0)
        assert len(sel) == 10
        assert {p.panel_id for p in sel} == set(range(20, 30))  # highest energies

    def test_5kw_of_330w_panels_is_15(self):
        panels = [make_placement(i, 50.0 + i, rated=330.0) for i in range(40)]
        assert len(select_subarray(panels, 5.0)) == 15

    def test_saturation_returns_all(self):
        panels = [make_placement(i, 10.0) for i in range(4)]
        assert len(select_subarray(panels, 100.0)) == 4

    def test_zero_k_warns_and_returns_empty(self):
        panels = [make_placement(0, 10.0, rated=500.0)]
        assert select_subarray(panels, 0.4) == []

    def test_matches_exhaustive_subset_search(self):
        rng = np.random.default_rng(9)
        for trial in range(20):
            n = int(rng.integers(5, 13))
            panels = [make_placement(i, float(rng.uniform(50, 400)), rated=400.0)
                      for i in range(n)]
            target = float(rng.uniform(0.5, 4.0))
            k = int(np.floor(target * 1000 / 400.0))
            sel = select_subarray(panels, target)
            got = sum(p.annual_energy_kwh for p in sel)
            if k == 0:
                assert sel == []
                continue
            k_eff = min(k, n)
            best = max(
                sum(p.annual_energy_kwh for p in combo)
                for combo in itertools.combinations(panels, k_eff)
            )
            assert got == pytest.approx(best, rel=1e-12)


def simple_report(energies: dict[int, float], offset=0, sub: dict[int, float] | None = None):
    buildings = []
    for bid, e in energies.items():
        r0 = 10 * bid + offset
        rows, cols = np.meshgrid(np.arange(r0, r0 + 5), np.arange(5), indexing="ij")
        subarrays = {}
        if sub and bid in sub:
            subarrays[subarray_key(5.0)] = {"energy_kwh": sub[bid], "panel_ids": []}
        buildings.append(BuildingReport(
            building_id=bid,
            footprint_rle=rle_encode(rows.ravel(), cols.ravel()),
            total_energy_kwh=e,
            subarrays=subarrays,
        ))
    return SolarReport(site={"latitude": 37.0}, buildings=buildings)


class TestMape:
    def test_identity_is_zero(self):
        r = simple_report({1: 100.0, 2: 250.0})
        assert mape(r, r) == 0.0

    def test_single_building_ten_percent(self):
        assert mape(simple_report({1: 110.0}), simple_report({1: 100.0})) == pytest.approx(10.0)

    def test_unmatched_buildings_count_as_full_miss(self):
        pred = simple_report({1: 100.0})
        ref = simple_report({1: 100.0, 2: 300.0})
        # building 2 has no overlap partner: one 0% match + one 100% miss
        assert mape(pred, ref) == pytest.approx(50.0)

    def test_zero_reference_excluded(self):
        pred = simple_report({1: 100.0, 2: 10.0})
        ref = simple_report({1: 100.0, 2: 0.0})
        assert mape(pred, ref) == pytest.approx(0.0)

    def test_mape_at_kw_uses_subarray_energy(self):
        pred = simple_report({1: 500.0}, sub={1: 90.0})
        ref = simple_report({1: 400.0}, sub={1: 100.0})
        assert mape_at_kw(pred, ref, 5.0) == pytest.approx(10.0)
        assert mape(pred, ref) == pytest.approx(25.0)

    def test_report_json_round_trip(self, tmp_path):
        r = simple_report({1: 123.456, 2: 7.0}, sub={1: 55.0})
        p = tmp_path / "report.json"
        r.save(p)
        back = SolarReport.load(p)
        assert back.to_json() == r.to_json()

    def test_rle_round_trip(self):
        rng = np.random.default_rng(3)
        mask = rng.random((12, 12)) < 0.4
        rows, cols = np.nonzero(mask)
        runs = rle_encode(rows, cols)
        assert rle_cells(runs) == {(int(r), int(c)) for r, c in zip(rows, cols)}
