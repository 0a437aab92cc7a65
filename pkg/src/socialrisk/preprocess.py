"""Turn a cohort into a modeling-ready feature matrix.

The stages mirror how the data flows through a run: a temporal hold-out
split first, then imputation, then one-hot encoding with min-max scaling.
Every statistic a later stage reuses (imputation means, scaling ranges,
category rosters) is computed on the training partition alone and carried
in a PreprocessState so the same transform can be replayed bit-identically
on held-out rows, including from a separate process.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SocialriskError

PARTITIONS = ("train", "validation", "test", "independent_test")

DEFAULT_RATIOS = (0.7, 0.1, 0.2)

MISSING_TOKEN = "unknown"


@dataclass(frozen=True)
class ColumnInfo:
    """Metadata for one encoded column."""

    name: str
    source_feature: str
    category: str | None
    level: str
    kind: str


@dataclass
class FeatureMatrix:
    values: np.ndarray
    columns: tuple
    labels: np.ndarray
    groups: np.ndarray
    patient_ids: np.ndarray
    normalization_state: dict

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-d array")
        if len(self.columns) != self.values.shape[1]:
            raise ValueError("column metadata length must equal the column count")
        for vec in (self.labels, self.groups, self.patient_ids):
            if len(vec) != self.values.shape[0]:
                raise ValueError("per-row vectors must match the row count")

    def column_index(self, name):
        for j, col in enumerate(self.columns):
            if col.name == name:
                return j
        raise KeyError(name)

    def select_rows(self, indices):
        indices = np.asarray(indices)
        return replace(
            self,
            values=self.values[indices],
            labels=self.labels[indices],
            groups=self.groups[indices],
            patient_ids=self.patient_ids[indices],
        )


@dataclass
class RawTable:
    """Column-major cohort view; None marks a missing entry."""

    patient_ids: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    order: tuple
    features: dict
    data: dict

    @property
    def n_rows(self):
        return len(self.patient_ids)

    def select(self, indices):
        indices = list(indices)
        return RawTable(
            patient_ids=self.patient_ids[indices],
            labels=self.labels[indices],
            groups=self.groups[indices],
            order=self.order,
            features=self.features,
            data={name: [col[i] for i in indices] for name, col in self.data.items()},
        )


@dataclass(frozen=True)
class SplitAssignment:
    partition: dict
    cutoff_year: int

    def members(self, name):
        if name not in PARTITIONS:
            raise ValueError(f"unknown partition {name!r}")
        return tuple(pid for pid, part in sorted(self.partition.items()) if part == name)

    def indices(self, patient_ids, name):
        wanted = set(self.members(name))
        return [i for i, pid in enumerate(patient_ids) if pid in wanted]


@dataclass
class PreprocessState:
    """Training-partition statistics needed to replay the transform."""

    means: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    rosters: dict = field(default_factory=dict)


def tabulate(cohort):
    """Flatten a cohort into a raw table of declared feature columns.

    race_ethnicity is carried as the group vector rather than a feature
    column; the planted outcome model never keys on it directly, and the
    fairness stages need it untouched by encoding or repair.
    """
    records = cohort.records
    dictionary = cohort.feature_dictionary
    sdoh_names = sorted(
        name
        for name, info in dictionary.items()
        if info.kind == "categorical" and name not in ("sex", "insurance", "race_ethnicity")
    )
    contextual_names = sorted(
        name for name, info in dictionary.items() if info.level == "contextual"
    )
    data = {
        "age": [float(r.age) for r in records],
        "cci": [float(r.cci) for r in records],
        "sex": [r.sex for r in records],
        "insurance": [r.insurance for r in records],
    }
    for name in sdoh_names:
        data[name] = [r.individual_sdoh[name] for r in records]
    for name in contextual_names:
        column = []
        for r in records:
            masked = cohort.contextual_missing.get(r.patient_id, frozenset())
            column.append(None if name in masked else cohort.linked_contextual[r.patient_id][name])
        data[name] = column
    order = ("age", "cci", "sex", "insurance", *sdoh_names, *contextual_names)
    return RawTable(
        patient_ids=np.array([r.patient_id for r in records], dtype=np.int64),
        labels=np.array([r.outcome for r in records], dtype=np.int64),
        groups=np.array([r.race_ethnicity for r in records], dtype=object),
        order=order,
        features={name: dictionary[name] for name in order},
        data=data,
    )


def split(cohort, cutoff_year, ratios=DEFAULT_RATIOS, seed=0):
    """Assign every patient to a partition.

    The temporal rule runs first: index years beyond the cutoff form the
    independent test set. The remaining modeling set is divided by the
    ratios, stratified by outcome, with partition totals within one
    patient of exact proportionality (largest-remainder rounding).
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")
    independent = [r.patient_id for r in cohort.records if r.index_year > cutoff_year]
    modeling = [
        (r.patient_id, r.outcome) for r in cohort.records if r.index_year <= cutoff_year
    ]
    if not independent:
        raise SocialriskError(
            f"no patients beyond cutoff year {cutoff_year}; the independent test set is empty"
        )
    if not modeling:
        raise SocialriskError(
            f"no patients at or before cutoff year {cutoff_year}; the modeling set is empty"
        )

    totals = _largest_remainder(len(modeling), ratios)
    positives = sorted(pid for pid, y in modeling if y == 1)
    negatives = sorted(pid for pid, y in modeling if y == 0)
    pos_quota = _largest_remainder(len(positives), ratios)
    # Negatives fill whatever the totals leave; shift a positive when a
    # cell would otherwise go negative (only possible on tiny partitions).
    neg_quota = [t - q for t, q in zip(totals, pos_quota)]
    while min(neg_quota) < 0:
        lo = neg_quota.index(min(neg_quota))
        hi = max(range(3), key=lambda j: neg_quota[j])
        pos_quota[lo] -= 1
        pos_quota[hi] += 1
        neg_quota = [t - q for t, q in zip(totals, pos_quota)]

    rng = np.random.default_rng(seed)
    assignment = {pid: "independent_test" for pid in independent}
    for ids, quota in ((positives, pos_quota), (negatives, neg_quota)):
        shuffled = list(ids)
        rng.shuffle(shuffled)
        start = 0
        for name, count in zip(("train", "validation", "test"), quota):
            for pid in shuffled[start : start + count]:
                assignment[pid] = name
            start += count
    return SplitAssignment(partition=assignment, cutoff_year=cutoff_year)


def _largest_remainder(total, ratios):
    exact = [total * r for r in ratios]
    counts = [int(np.floor(e)) for e in exact]
    short = total - sum(counts)
    order = sorted(range(3), key=lambda j: exact[j] - counts[j], reverse=True)
    for j in order[:short]:
        counts[j] += 1
    return counts


def impute(table, means=None):
    """Fill blanks: categorical with the "unknown" token, continuous with
    the training mean.

    Fit mode (means omitted) averages the rows of the given table, so pass
    the training partition only. Returns the completed table and the means
    that were used, one per continuous column whether or not it had blanks.
    """
    fit_mode = means is None
    used = {} if fit_mode else dict(means)
    data = {}
    for name in table.order:
        column = table.data[name]
        if table.features[name].kind == "categorical":
            data[name] = [MISSING_TOKEN if v is None else v for v in column]
            continue
        if fit_mode:
            observed = [v for v in column if v is not None]
            if not observed:
                raise SocialriskError(
                    f"continuous column {name!r} has no observed values in the "
                    "training partition; no mean is defined"
                )
            used[name] = float(np.mean(observed))
        elif name not in used:
            raise SocialriskError(f"no fitted mean for continuous column {name!r}")
        data[name] = [used[name] if v is None else float(v) for v in column]
    completed = replace(table, data=data)
    return completed, used


def encode_and_normalize(table, state=None):
    """One-hot encode categoricals and min-max scale continuous columns.

    Fit mode (state omitted) takes scaling ranges from the given rows and
    rosters from the declared categories, with "unknown" always present.
    Transform mode replays a fitted state without clamping, so values
    outside the fitted range land outside [0, 1].
    """
    fit_mode = state is None
    ranges = {} if fit_mode else state.ranges
    rosters = {} if fit_mode else state.rosters
    n = table.n_rows
    blocks = []
    columns = []
    for name in table.order:
        info = table.features[name]
        raw = table.data[name]
        if any(v is None for v in raw):
            raise SocialriskError(f"column {name!r} still has blanks; impute first")
        if info.kind == "continuous":
            values = np.asarray(raw, dtype=np.float64)
            if fit_mode:
                ranges[name] = (float(values.min()), float(values.max()))
            elif name not in ranges:
                raise SocialriskError(f"no fitted range for continuous column {name!r}")
            lo, hi = ranges[name]
            if hi > lo:
                scaled = (values - lo) / (hi - lo)
            else:
                scaled = np.zeros(n)
            blocks.append(scaled[:, None])
            columns.append(
                ColumnInfo(name=name, source_feature=name, category=None,
                           level=info.level, kind="continuous")
            )
            continue
        if fit_mode:
            declared = list(info.categories) if info.categories else sorted(
                {v for v in raw}
            )
            if MISSING_TOKEN not in declared:
                declared.append(MISSING_TOKEN)
            rosters[name] = tuple(declared)
        elif name not in rosters:
            raise SocialriskError(f"no fitted roster for feature {name!r}")
        roster = rosters[name]
        allowed = set(roster)
        for v in raw:
            if v not in allowed:
                raise SocialriskError(
                    f"feature {name!r} has category {v!r} outside the fitted roster"
                )
        for category in roster:
            indicator = np.fromiter(
                (1.0 if v == category else 0.0 for v in raw), dtype=np.float64, count=n
            )
            blocks.append(indicator[:, None])
            columns.append(
                ColumnInfo(name=f"{name}={category}", source_feature=name,
                           category=category, level=info.level, kind="indicator")
            )
    values = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return FeatureMatrix(
        values=values,
        columns=tuple(columns),
        labels=table.labels.astype(np.int64).copy(),
        groups=table.groups.copy(),
        patient_ids=table.patient_ids.copy(),
        normalization_state={k: tuple(v) for k, v in ranges.items()},
    )


def fit_preprocess(train_table):
    """Impute and encode the training partition, returning its matrix and
    the state needed to transform any other partition the same way."""
    completed, means = impute(train_table)
    matrix = encode_and_normalize(completed)
    rosters = {}
    for col in matrix.columns:
        if col.category is not None:
            rosters.setdefault(col.source_feature, []).append(col.category)
    state = PreprocessState(
        means=means,
        ranges=dict(matrix.normalization_state),
        rosters={k: tuple(v) for k, v in rosters.items()},
    )
    return matrix, state


def apply_preprocess(table, state):
    completed, _ = impute(table, means=state.means)
    return encode_and_normalize(completed, state=state)


def drop_reference_columns(matrix, references=None):
    """Remove one indicator column per categorical feature so unpenalized
    fits with an intercept are not rank deficient by construction. The
    default reference is the first roster category of each feature."""
    references = dict(references or {})
    drop = set()
    seen = set()
    for col in matrix.columns:
        if col.category is None:
            continue
        if col.source_feature in references:
            if col.category == references[col.source_feature]:
                drop.add(col.name)
                seen.add(col.source_feature)
        elif col.source_feature not in seen:
            drop.add(col.name)
            seen.add(col.source_feature)
    for feature, category in references.items():
        if feature not in seen:
            raise SocialriskError(
                f"reference category {category!r} not found for feature {feature!r}"
            )
    keep = [j for j, col in enumerate(matrix.columns) if col.name not in drop]
    return replace(
        matrix,
        values=matrix.values[:, keep],
        columns=tuple(matrix.columns[j] for j in keep),
    )


def write_preprocess_state(state, path):
    """Serialize fitted statistics as text; repr keeps floats bit-exact."""
    lines = ["preprocess_state: 1", "means:"]
    for name in sorted(state.means):
        lines.append(f"  {name}: {state.means[name]!r}")
    lines.append("ranges:")
    for name in sorted(state.ranges):
        lo, hi = state.ranges[name]
        lines.append(f"  {name}: {lo!r} {hi!r}")
    lines.append("rosters:")
    # Categories are slug-like tokens; the comma-space join relies on that.
    for name in sorted(state.rosters):
        lines.append(f"  {name}: " + ", ".join(state.rosters[name]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_preprocess_state(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "preprocess_state: 1":
        raise SocialriskError(f"{path} is not a preprocess state file")
    state = PreprocessState()
    section = None
    for ln in lines[1:]:
        if not ln.strip():
            continue
        if not ln.startswith("  "):
            section = ln.rstrip(":")
            if section not in ("means", "ranges", "rosters"):
                raise SocialriskError(f"unknown state section {section!r}")
            continue
        name, _, rest = ln.strip().partition(": ")
        if section == "means":
            state.means[name] = float(rest)
        elif section == "ranges":
            lo, hi = rest.split()
            state.ranges[name] = (float(lo), float(hi))
        else:
            state.rosters[name] = tuple(rest.split(", "))
    return state
