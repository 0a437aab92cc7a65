"""Area- and time-weighted linkage of contextual cells to residence buffers.

The buffer is a circle around each residence point. Cell weights are exact
circle-rectangle intersection areas, normalized per residence period; period
values are then combined with duration weights. Everything is closed-form,
so linkage is deterministic and fast enough to run per patient.
"""

import numpy as np

from socialrisk.errors import SocialriskError
from socialrisk.cohort.types import validate_cell

_CHUNK_ROWS = 8192


def _antideriv(t, r):
    # integral of sqrt(r^2 - u^2) du from 0 to t, for |t| <= r
    t = np.clip(t, -r, r)
    root = np.sqrt(np.maximum(r * r - t * t, 0.0))
    return 0.5 * (t * root + r * r * np.arcsin(np.clip(t / r, -1.0, 1.0)))


def _half_area(t, r):
    # area of the disc with u <= t
    t = np.clip(t, -r, r)
    root = np.sqrt(np.maximum(r * r - t * t, 0.0))
    return 0.5 * np.pi * r * r + t * root + r * r * np.arcsin(np.clip(t / r, -1.0, 1.0))


def _corner_area(x, y, r):
    """Area of the disc (center origin, radius r) with u <= x and v <= y."""
    x = np.clip(x, -r, r)
    y = np.clip(y, -r, r)
    full = np.pi * r * r
    ax = _half_area(x, r)
    ay = _half_area(y, r)
    inside = x * x + y * y <= r * r

    # corner inside: integrate the strip between the chord v=y and the arc,
    # plus (when y < 0) the full slices beyond the chord's reach
    s = np.sqrt(np.maximum(r * r - y * y, 0.0))
    upper = _antideriv(s, r) - _antideriv(x, r) - y * (s - x)
    below_axis = np.where(y < 0.0, 2.0 * (0.25 * full - _antideriv(s, r)), 0.0)
    q_inside = upper + below_axis

    # corner outside: the quadrant u >= x, v >= y either misses the disc or
    # removes one or two disjoint caps from it
    q_outside = np.where(
        (x >= 0.0) & (y >= 0.0),
        0.0,
        np.where(
            (x <= 0.0) & (y <= 0.0),
            full - ax - ay,
            np.where(x < 0.0, full - ay, full - ax),
        ),
    )
    return ax + ay - full + np.where(inside, q_inside, q_outside)


def circle_rect_overlap(cx, cy, radius, xmin, ymin, xmax, ymax):
    """Exact intersection area between circles and axis-aligned rectangles.

    All arguments broadcast; the circle centers are translated out so the
    corner primitive always sees a disc at the origin.
    """
    x1 = np.asarray(xmin, dtype=np.float64) - cx
    x2 = np.asarray(xmax, dtype=np.float64) - cx
    y1 = np.asarray(ymin, dtype=np.float64) - cy
    y2 = np.asarray(ymax, dtype=np.float64) - cy
    area = (
        _corner_area(x2, y2, radius)
        - _corner_area(x1, y2, radius)
        - _corner_area(x2, y1, radius)
        + _corner_area(x1, y1, radius)
    )
    return np.maximum(area, 0.0)


def validate_cells(cells):
    """Check per-year non-overlap and a shared measure roster across cells."""
    if not cells:
        raise SocialriskError("no contextual cells supplied")
    measure_names = None
    by_year = {}
    for cell in cells:
        validate_cell(cell)
        names = tuple(sorted(cell.measures))
        if measure_names is None:
            measure_names = names
        elif names != measure_names:
            raise SocialriskError(
                f"cell {cell.cell_id}: measures {list(names)} differ from "
                f"{list(measure_names)} carried by other cells"
            )
        by_year.setdefault(cell.year, []).append(cell)
    for year, group in by_year.items():
        xmin = np.array([c.xmin for c in group])
        xmax = np.array([c.xmax for c in group])
        ymin = np.array([c.ymin for c in group])
        ymax = np.array([c.ymax for c in group])
        clash = (
            (xmin[:, None] < xmax[None, :])
            & (xmin[None, :] < xmax[:, None])
            & (ymin[:, None] < ymax[None, :])
            & (ymin[None, :] < ymax[:, None])
        )
        np.fill_diagonal(clash, False)
        if clash.any():
            a, b = np.argwhere(clash)[0]
            raise SocialriskError(
                f"cells {group[a].cell_id} and {group[b].cell_id} overlap in year {year}"
            )
    return measure_names, by_year


def _year_table(group):
    bounds = np.array([[c.xmin, c.ymin, c.xmax, c.ymax] for c in group])
    names = sorted(group[0].measures)
    values = np.array([[c.measures[m] for m in names] for c in group])
    return bounds, values


def link_many(records, cells, buffer_radius):
    """Linked contextual values for every record, keyed by patient_id."""
    if buffer_radius <= 0:
        raise ValueError("buffer_radius must be positive")
    measure_names, by_year = validate_cells(cells)
    measures = list(measure_names)
    out = {}
    by_record_year = {}
    for record in records:
        by_record_year.setdefault(record.index_year, []).append(record)

    for year in sorted(by_record_year):
        year_records = by_record_year[year]
        group = by_year.get(year)
        if not group:
            first = year_records[0]
            raise SocialriskError(
                f"patient {first.patient_id}: no contextual cells exist for year "
                f"{year}; measures {', '.join(measures)} cannot be linked"
            )
        bounds, values = _year_table(group)

        centers = []
        spans = []  # (patient_id, first row, n periods, duration weights)
        for record in year_records:
            history = record.residence_history
            durations = np.array([p.end_fraction - p.start_fraction for p in history])
            spans.append((record.patient_id, len(centers), len(history), durations / durations.sum()))
            centers.extend((p.x, p.y) for p in history)
        centers = np.asarray(centers, dtype=np.float64)

        period_values = np.empty((centers.shape[0], len(measures)))
        for lo in range(0, centers.shape[0], _CHUNK_ROWS):
            hi = min(lo + _CHUNK_ROWS, centers.shape[0])
            cx = centers[lo:hi, 0:1]
            cy = centers[lo:hi, 1:2]
            # bounding-box prefilter: a cell whose rectangle stays clear of
            # the buffer's box has exactly zero overlap, so skip it
            near = (
                (bounds[None, :, 0] < cx + buffer_radius)
                & (cx - buffer_radius < bounds[None, :, 2])
                & (bounds[None, :, 1] < cy + buffer_radius)
                & (cy - buffer_radius < bounds[None, :, 3])
            )
            rows_near, cells_near = np.nonzero(near)
            areas = np.zeros(near.shape)
            areas[rows_near, cells_near] = circle_rect_overlap(
                centers[lo + rows_near, 0],
                centers[lo + rows_near, 1],
                buffer_radius,
                bounds[cells_near, 0],
                bounds[cells_near, 1],
                bounds[cells_near, 2],
                bounds[cells_near, 3],
            )
            totals = areas.sum(axis=1)
            if (totals <= 0.0).any():
                bad = lo + int(np.argmax(totals <= 0.0))
                pid = next(
                    p for p, first, count, _ in spans if first <= bad < first + count
                )
                raise SocialriskError(
                    f"patient {pid}: the residence buffer intersects no contextual "
                    f"cell in year {year}; measures {', '.join(measures)} cannot be linked"
                )
            period_values[lo:hi] = (areas / totals[:, None]) @ values

        for pid, first, count, weights in spans:
            linked = weights @ period_values[first : first + count]
            out[pid] = {m: float(v) for m, v in zip(measures, linked)}
    return out


def link_contextual(record, cells, buffer_radius):
    """Linked values for one record; identical to its row in link_many."""
    return link_many([record], cells, buffer_radius)[record.patient_id]
