"""Delimited-text persistence for cohorts, residence, cells, and dictionaries.

Floats are written with repr so values round-trip exactly; a blank field
means the value is missing (only linked contextual observations can be).
"""

import csv

from socialrisk.cohort import features as rosters
from socialrisk.cohort.types import (
    ContextualCell,
    FeatureInfo,
    PatientRecord,
    ResidencePeriod,
)

_FIXED_COLUMNS = ("patient_id", "index_year", "age", "sex", "race_ethnicity",
                  "insurance", "cci")


def _fmt(value):
    return repr(float(value))


def cohort_header():
    return list(_FIXED_COLUMNS) + sorted(rosters.INDIVIDUAL_FEATURES) + ["outcome"]


def write_cohort_csv(records, path):
    sdoh_names = sorted(rosters.INDIVIDUAL_FEATURES)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(cohort_header())
        for record in sorted(records, key=lambda r: r.patient_id):
            row = [
                record.patient_id,
                record.index_year,
                _fmt(record.age),
                record.sex,
                record.race_ethnicity,
                record.insurance,
                record.cci,
            ]
            row.extend(record.individual_sdoh[name] for name in sdoh_names)
            row.append(record.outcome)
            writer.writerow(row)


def read_cohort_csv(path):
    records = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != cohort_header():
            raise ValueError(f"{path}: unexpected cohort header {header}")
        sdoh_names = header[len(_FIXED_COLUMNS):-1]
        for row in reader:
            records.append(
                PatientRecord(
                    patient_id=int(row[0]),
                    index_year=int(row[1]),
                    age=float(row[2]),
                    sex=row[3],
                    race_ethnicity=row[4],
                    insurance=row[5],
                    cci=int(row[6]),
                    individual_sdoh=dict(zip(sdoh_names, row[7:-1])),
                    residence_history=(),
                    outcome=int(row[-1]),
                )
            )
    return records


def write_residence_csv(records, path):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["patient_id", "start_fraction", "end_fraction", "x", "y"])
        for record in sorted(records, key=lambda r: r.patient_id):
            for period in record.residence_history:
                writer.writerow([
                    record.patient_id,
                    _fmt(period.start_fraction),
                    _fmt(period.end_fraction),
                    _fmt(period.x),
                    _fmt(period.y),
                ])


def read_residence_csv(path):
    histories = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        next(reader)
        for row in reader:
            pid = int(row[0])
            histories.setdefault(pid, []).append(
                ResidencePeriod(
                    start_fraction=float(row[1]),
                    end_fraction=float(row[2]),
                    x=float(row[3]),
                    y=float(row[4]),
                )
            )
    return {pid: tuple(periods) for pid, periods in histories.items()}


def write_contextual_csv(cells, path):
    measures = sorted(cells[0].measures) if cells else []
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cell_id", "year", "xmin", "ymin", "xmax", "ymax"] + measures)
        for cell in sorted(cells, key=lambda c: (c.year, c.cell_id)):
            row = [cell.cell_id, cell.year, _fmt(cell.xmin), _fmt(cell.ymin),
                   _fmt(cell.xmax), _fmt(cell.ymax)]
            row.extend(_fmt(cell.measures[m]) for m in measures)
            writer.writerow(row)


def read_contextual_csv(path):
    cells = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        measures = header[6:]
        for row in reader:
            cells.append(
                ContextualCell(
                    cell_id=row[0],
                    year=int(row[1]),
                    xmin=float(row[2]),
                    ymin=float(row[3]),
                    xmax=float(row[4]),
                    ymax=float(row[5]),
                    measures={m: float(v) for m, v in zip(measures, row[6:])},
                )
            )
    return cells


def write_linked_csv(cohort, path):
    """Observed linked values, one row per patient; masked entries are blank."""
    pids = sorted(cohort.linked_contextual)
    measures = sorted(cohort.linked_contextual[pids[0]]) if pids else []
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["patient_id"] + measures)
        for pid in pids:
            masked = cohort.contextual_missing.get(pid, frozenset())
            row = [pid]
            for measure in measures:
                value = cohort.linked_contextual[pid][measure]
                row.append("" if measure in masked else _fmt(value))
            writer.writerow(row)


def read_linked_csv(path):
    values = {}
    missing = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        measures = header[1:]
        for row in reader:
            pid = int(row[0])
            values[pid] = {}
            masked = set()
            for measure, cell in zip(measures, row[1:]):
                if cell == "":
                    masked.add(measure)
                else:
                    values[pid][measure] = float(cell)
            if masked:
                missing[pid] = frozenset(masked)
    return values, missing


def write_feature_dictionary(feature_dictionary, path):
    with open(path, "w") as handle:
        for name in sorted(feature_dictionary):
            info = feature_dictionary[name]
            handle.write(f"feature: {name}\n")
            handle.write(f"  kind: {info.kind}\n")
            handle.write(f"  level: {info.level}\n")
            if info.categories:
                handle.write(f"  categories: {', '.join(info.categories)}\n")
            handle.write("\n")


def read_feature_dictionary(path):
    out = {}
    name = None
    fields = {}
    with open(path) as handle:
        lines = list(handle) + ["\n"]
    for line in lines:
        line = line.rstrip("\n")
        if not line.strip():
            if name is not None:
                categories = fields.get("categories")
                out[name] = FeatureInfo(
                    kind=fields["kind"],
                    level=fields["level"],
                    categories=tuple(categories.split(", ")) if categories else None,
                )
            name, fields = None, {}
            continue
        key, _, value = line.strip().partition(": ")
        if key == "feature":
            name = value
        else:
            fields[key] = value
    return out
