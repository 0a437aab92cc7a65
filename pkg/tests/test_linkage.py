import math

import numpy as np
import pytest

from socialrisk.cohort import ContextualCell, PatientRecord, ResidencePeriod
from socialrisk.cohort.linkage import (
    circle_rect_overlap,
    link_contextual,
    link_many,
    validate_cells,
)
from socialrisk.errors import SocialriskError

from oracles import circle_rect_area_quadrature


def cell(cell_id, xmin, ymin, xmax, ymax, year=2018, **measures):
    return ContextualCell(
        cell_id=cell_id, year=year, xmin=xmin, ymin=ymin, xmax=xmax, ymax=ymax,
        measures=measures or {"murder_rate": 0.0},
    )


def patient(pid, periods, year=2018):
    history = tuple(
        ResidencePeriod(start_fraction=s, end_fraction=e, x=x, y=y)
        for s, e, x, y in periods
    )
    return PatientRecord(
        patient_id=pid, index_year=year, age=50.0, sex="female",
        race_ethnicity="NHW", insurance="Private", cci=1,
        individual_sdoh={}, residence_history=history, outcome=0,
    )


class TestOverlapArea:
    def test_containment_gives_full_disc(self):
        area = circle_rect_overlap(5.0, 5.0, 1.0, 0.0, 0.0, 10.0, 10.0)
        assert area == pytest.approx(math.pi, abs=1e-12)

    def test_quadrant(self):
        area = circle_rect_overlap(0.0, 0.0, 2.0, 0.0, 0.0, 10.0, 10.0)
        assert area == pytest.approx(math.pi, abs=1e-12)  # pi * 4 / 4

    def test_half_plane(self):
        area = circle_rect_overlap(0.0, 0.0, 1.0, 0.0, -5.0, 5.0, 5.0)
        assert area == pytest.approx(math.pi / 2.0, abs=1e-12)

    def test_vertical_strip_hand_value(self):
        # unit circle cut by u >= 1/2: pi/3 - sqrt(3)/4
        area = circle_rect_overlap(0.0, 0.0, 1.0, 0.5, -2.0, 2.0, 2.0)
        assert area == pytest.approx(math.pi / 3.0 - math.sqrt(3.0) / 4.0, abs=1e-12)

    def test_disjoint_and_tangent(self):
        assert circle_rect_overlap(0.0, 0.0, 1.0, 2.0, 2.0, 3.0, 3.0) == 0.0
        assert circle_rect_overlap(0.0, 0.0, 1.0, 1.0, -1.0, 2.0, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_matches_quadrature_on_random_cases(self):
        rng = np.random.default_rng(414)
        for _ in range(40):
            cx, cy = rng.uniform(-2, 2, size=2)
            r = rng.uniform(0.2, 1.5)
            x1, y1 = rng.uniform(-2.5, 1.5, size=2)
            x2 = x1 + rng.uniform(0.1, 3.0)
            y2 = y1 + rng.uniform(0.1, 3.0)
            fast = float(circle_rect_overlap(cx, cy, r, x1, y1, x2, y2))
            slow = circle_rect_area_quadrature(cx, cy, r, x1, y1, x2, y2)
            assert fast == pytest.approx(slow, abs=1e-9)

    def test_additivity_across_a_split(self):
        # splitting the rectangle in two must preserve total overlap exactly
        rng = np.random.default_rng(77)
        for _ in range(20):
            cx, cy, r = rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(0.3, 2.0)
            whole = circle_rect_overlap(cx, cy, r, 0.0, 0.0, 4.0, 4.0)
            cut = rng.uniform(0.5, 3.5)
            left = circle_rect_overlap(cx, cy, r, 0.0, 0.0, cut, 4.0)
            right = circle_rect_overlap(cx, cy, r, cut, 0.0, 4.0, 4.0)
            assert float(left + right) == pytest.approx(float(whole), abs=1e-12)

    def test_broadcasts(self):
        xs = np.array([0.0, 1.0, 2.0])
        areas = circle_rect_overlap(xs, 0.0, 0.5, 0.0, -1.0, 1.0, 1.0)
        assert areas.shape == (3,)
        assert areas[0] == pytest.approx(math.pi * 0.25 / 2.0, abs=1e-12)
        assert areas[2] == 0.0


class TestCellValidation:
    def test_overlap_rejected(self):
        cells = [cell("a", 0, 0, 2, 2), cell("b", 1, 1, 3, 3)]
        with pytest.raises(SocialriskError, match="overlap"):
            validate_cells(cells)

    def test_shared_edges_allowed(self):
        cells = [cell("a", 0, 0, 1, 1), cell("b", 1, 0, 2, 1)]
        validate_cells(cells)

    def test_same_bounds_different_years_allowed(self):
        cells = [cell("a", 0, 0, 1, 1, year=2015), cell("b", 0, 0, 1, 1, year=2016)]
        validate_cells(cells)

    def test_mismatched_measures_rejected(self):
        cells = [
            cell("a", 0, 0, 1, 1, murder_rate=0.1),
            cell("b", 1, 0, 2, 1, assault_rate=0.2),
        ]
        with pytest.raises(SocialriskError, match="differ"):
            validate_cells(cells)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            validate_cells([cell("a", 0, 0, 1, 1, murder_rate=-0.1)])


class TestLinkage:
    def test_buffer_inside_one_cell(self):
        cells = [cell("a", 0, 0, 10, 10, murder_rate=0.0075)]
        rec = patient(7, [(0.0, 1.0, 5.0, 5.0)])
        linked = link_contextual(rec, cells, buffer_radius=0.25)
        assert linked == {"murder_rate": 0.0075}

    def test_shared_edge_averages_two_cells(self):
        a, b = 0.2, 0.6
        cells = [
            cell("west", 0, 0, 5, 10, murder_rate=a),
            cell("east", 5, 0, 10, 10, murder_rate=b),
        ]
        rec = patient(1, [(0.0, 1.0, 5.0, 5.0)])
        linked = link_contextual(rec, cells, buffer_radius=1.0)
        assert linked["murder_rate"] == pytest.approx((a + b) / 2.0, abs=1e-12)

    def test_equal_duration_periods_average(self):
        cells = [
            cell("west", 0, 0, 5, 10, murder_rate=2.0),
            cell("east", 5, 0, 10, 10, murder_rate=4.0),
        ]
        rec = patient(2, [(0.0, 0.5, 2.0, 5.0), (0.5, 1.0, 8.0, 5.0)])
        linked = link_contextual(rec, cells, buffer_radius=1.0)
        assert linked["murder_rate"] == pytest.approx(3.0, abs=1e-12)

    def test_duration_weighting(self):
        cells = [
            cell("west", 0, 0, 5, 10, murder_rate=2.0),
            cell("east", 5, 0, 10, 10, murder_rate=4.0),
        ]
        rec = patient(3, [(0.0, 0.25, 2.0, 5.0), (0.25, 1.0, 8.0, 5.0)])
        linked = link_contextual(rec, cells, buffer_radius=1.0)
        assert linked["murder_rate"] == pytest.approx(0.25 * 2.0 + 0.75 * 4.0, abs=1e-12)

    def test_value_stays_within_cell_range(self):
        rng = np.random.default_rng(11)
        cells = []
        values = {}
        for row in range(4):
            for col in range(4):
                v = float(rng.uniform(0, 1))
                values[(row, col)] = v
                cells.append(cell(f"{row}:{col}", col, row, col + 1, row + 1, murder_rate=v))
        lo, hi = min(values.values()), max(values.values())
        records = [
            patient(i, [(0.0, 1.0, float(rng.uniform(0.5, 3.5)), float(rng.uniform(0.5, 3.5)))])
            for i in range(50)
        ]
        linked = link_many(records, cells, buffer_radius=0.4)
        for vals in linked.values():
            assert lo <= vals["murder_rate"] <= hi

    def test_single_call_matches_batch_exactly(self):
        rng = np.random.default_rng(12)
        cells = [
            cell(f"{row}:{col}", col, row, col + 1, row + 1,
                 murder_rate=float(rng.uniform(0, 1)),
                 assault_share=float(rng.uniform(-1, 1)))
            for row in range(3) for col in range(3)
        ]
        records = [
            patient(i, [(0.0, 0.4, 1.2 + 0.1 * i, 1.5), (0.4, 1.0, 1.8, 1.1)])
            for i in range(5)
        ]
        batch = link_many(records, cells, buffer_radius=0.3)
        for rec in records:
            single = link_contextual(rec, cells, buffer_radius=0.3)
            assert single == batch[rec.patient_id]

    def test_missing_year_names_patient_and_measures(self):
        cells = [cell("a", 0, 0, 10, 10, year=2015, murder_rate=1.0)]
        rec = patient(99, [(0.0, 1.0, 5.0, 5.0)], year=2019)
        with pytest.raises(SocialriskError, match=r"patient 99.*2019.*murder_rate"):
            link_many([rec], cells, buffer_radius=0.5)

    def test_buffer_outside_all_cells_names_patient(self):
        cells = [cell("a", 0, 0, 1, 1, murder_rate=1.0)]
        rec = patient(4, [(0.0, 1.0, 8.0, 8.0)])
        with pytest.raises(SocialriskError, match="patient 4.*murder_rate"):
            link_many([rec], cells, buffer_radius=0.5)

    def test_bad_radius_rejected(self):
        cells = [cell("a", 0, 0, 1, 1)]
        with pytest.raises(ValueError, match="positive"):
            link_many([patient(1, [(0.0, 1.0, 0.5, 0.5)])], cells, buffer_radius=0.0)
