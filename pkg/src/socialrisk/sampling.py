"""Class-imbalance handling for the training partition.

All methods return row indices into the caller's arrays rather than copies,
so the same plan can drive a matrix, a label vector, and an audit file
without them drifting apart. Under- and matched-sampling return subsets;
over-sampling appends duplicate minority rows after the originals.
"""

import bisect
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import SocialriskError
from .util import check_binary_labels

SAMPLING_METHODS = ("none", "ros", "rus", "cci_match")


@dataclass(frozen=True)
class SamplingPlan:
    method: str = "none"
    seed: int = 0
    match_ratio: int = 1

    def __post_init__(self):
        if self.method not in SAMPLING_METHODS:
            raise ValueError(
                f"unknown sampling method {self.method!r}; expected one of {SAMPLING_METHODS}"
            )
        if not isinstance(self.match_ratio, int) or self.match_ratio < 1:
            raise ValueError("match_ratio must be an integer of at least 1")


def resample(labels, plan, patient_ids=None, cci=None):
    """Select training rows according to the plan; returns row indices."""
    labels = np.asarray(labels)
    check_binary_labels(labels)
    n = len(labels)
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels == 0)
    if plan.method == "none":
        return np.arange(n)
    rng = np.random.default_rng(plan.seed)
    if plan.method == "ros":
        minority, majority = (
            (positives, negatives) if len(positives) < len(negatives) else (negatives, positives)
        )
        need = len(majority) - len(minority)
        extra = minority[rng.integers(0, len(minority), size=need)]
        return np.concatenate([np.arange(n), extra])
    if plan.method == "rus":
        minority, majority = (
            (positives, negatives) if len(positives) < len(negatives) else (negatives, positives)
        )
        kept = rng.choice(majority, size=len(minority), replace=False)
        return np.sort(np.concatenate([minority, kept]))
    pairs = cci_matched_pairs(labels, plan, patient_ids=patient_ids, cci=cci)
    matched = sorted({row for _, row in pairs} | set(positives))
    return np.array(matched)


def cci_matched_pairs(labels, plan, patient_ids=None, cci=None):
    """Greedy nearest-CCI matching, one pass per unit of match_ratio.

    Positives are processed in ascending patient-id order; each takes the
    unmatched negative with the smallest absolute CCI difference, breaking
    ties on the smaller patient id. Returns (positive_row, negative_row)
    pairs. Matching is fully order-defined, so the plan's seed is unused.
    """
    labels = np.asarray(labels)
    check_binary_labels(labels)
    if cci is None:
        raise SocialriskError("cci_match needs the CCI value of every training row")
    cci = np.asarray(cci, dtype=np.float64)
    if len(cci) != len(labels):
        raise SocialriskError("cci must align with labels")
    if patient_ids is None:
        patient_ids = np.arange(len(labels))
    patient_ids = np.asarray(patient_ids)
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels == 0)
    required = plan.match_ratio * len(positives)
    if len(negatives) < required:
        raise SocialriskError(
            f"cci_match needs {required} negatives for {len(positives)} positives at "
            f"ratio {plan.match_ratio} but only {len(negatives)} are available "
            f"(short {required - len(negatives)})"
        )

    # Negatives grouped by exact CCI value. Any pick from a group takes the
    # group's smallest patient id, so each group is consumed front-first.
    by_value = {}
    for row in negatives:
        by_value.setdefault(cci[row], []).append((patient_ids[row], row))
    values = sorted(by_value)
    groups = [deque(sorted(by_value[v])) for v in values]
    u = len(values)
    # Lazily compressed pointers past exhausted groups keep repeated scans
    # from degrading to quadratic when one region is drained.
    right_hint = list(range(u))
    left_hint = list(range(u))

    def nearest_right(i):
        path = []
        while i < u and not groups[i]:
            path.append(i)
            i = right_hint[i] + 1 if right_hint[i] != i else i + 1
        i = min(i, u)
        for p in path:
            right_hint[p] = i - 1 if i > p else p
        return i

    def nearest_left(i):
        path = []
        while i >= 0 and not groups[i]:
            path.append(i)
            i = left_hint[i] - 1 if left_hint[i] != i else i - 1
        i = max(i, -1)
        for p in path:
            left_hint[p] = i + 1 if i < p else p
        return i

    order = positives[np.argsort(patient_ids[positives], kind="stable")]
    pairs = []
    for _ in range(plan.match_ratio):
        for pos_row in order:
            target = cci[pos_row]
            # Indices below ip hold values strictly under the target, so the
            # two scans yield the nearest candidate on each side.
            ip = bisect.bisect_left(values, target)
            ri = nearest_right(ip)
            li = nearest_left(ip - 1)
            if ri < u and values[ri] == target:
                pick = ri
            else:
                dl = target - values[li] if li >= 0 else np.inf
                dr = values[ri] - target if ri < u else np.inf
                if dl < dr:
                    pick = li
                elif dr < dl:
                    pick = ri
                else:
                    pick = li if groups[li][0] <= groups[ri][0] else ri
            _, neg_row = groups[pick].popleft()
            pairs.append((int(pos_row), int(neg_row)))
    return pairs


def write_sampling_audit(indices, labels, patient_ids, path):
    """One line per selected row, duplicates repeated, selection order kept."""
    labels = np.asarray(labels)
    patient_ids = np.asarray(patient_ids)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row_index,patient_id,label\n")
        for row in np.asarray(indices):
            fh.write(f"{int(row)},{int(patient_ids[row])},{int(labels[row])}\n")
