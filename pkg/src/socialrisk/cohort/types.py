"""Data model for synthetic cohorts: patients, contextual cells, generator spec."""

import math
from dataclasses import dataclass, field

from socialrisk.cohort import features as rosters

#: Largest tolerated deviation of a supplied share vector from summing to 1.
#: Rounded published-style shares (three decimals) can be off by a few
#: thousandths; anything worse is treated as a typo in the configuration.
SHARE_SUM_TOL = 0.005

RESIDENCE_COVER_TOL = 1e-9


def normalized_shares(shares, expected_keys, what):
    """Validate a share map against an exact key set and renormalize.

    After renormalization the values sum to 1 up to float rounding, which is
    well within the 1e-12 the rest of the package assumes.
    """
    expected = set(expected_keys)
    if set(shares) != expected:
        raise ValueError(
            f"{what} must cover exactly {sorted(expected)}, got {sorted(shares)}"
        )
    for key, value in shares.items():
        if not (isinstance(value, (int, float)) and math.isfinite(value)) or value < 0:
            raise ValueError(f"{what}[{key!r}] must be a finite non-negative number")
    total = sum(shares.values())
    if abs(total - 1.0) > SHARE_SUM_TOL:
        raise ValueError(f"{what} shares sum to {total:.4f}; expected 1 within {SHARE_SUM_TOL}")
    return {key: shares[key] / total for key in shares}


def categorical_rosters():
    """Every categorical feature the data model knows, with its category set."""
    out = {
        "sex": rosters.SEX_CATEGORIES,
        "race_ethnicity": rosters.RACE_GROUPS,
        "insurance": rosters.INSURANCE_CATEGORIES,
    }
    out.update(rosters.INDIVIDUAL_FEATURES)
    return out


@dataclass(frozen=True)
class ResidencePeriod:
    start_fraction: float
    end_fraction: float
    x: float
    y: float


@dataclass
class PatientRecord:
    patient_id: int
    index_year: int
    age: float
    sex: str
    race_ethnicity: str
    insurance: str
    cci: int
    individual_sdoh: dict
    residence_history: tuple
    outcome: int


def validate_record(record):
    pid = record.patient_id
    if record.age < 18:
        raise ValueError(f"patient {pid}: age {record.age} is below 18")
    if record.sex not in rosters.SEX_CATEGORIES:
        raise ValueError(f"patient {pid}: unknown sex {record.sex!r}")
    if record.race_ethnicity not in rosters.RACE_GROUPS:
        raise ValueError(f"patient {pid}: unknown race/ethnicity {record.race_ethnicity!r}")
    if record.insurance not in rosters.INSURANCE_CATEGORIES:
        raise ValueError(f"patient {pid}: unknown insurance {record.insurance!r}")
    if not (isinstance(record.cci, (int,)) and record.cci >= 0):
        raise ValueError(f"patient {pid}: cci must be a non-negative integer")
    if record.outcome not in (0, 1):
        raise ValueError(f"patient {pid}: outcome must be 0 or 1")
    for feature, category in record.individual_sdoh.items():
        categories = rosters.INDIVIDUAL_FEATURES.get(feature)
        if categories is None:
            raise ValueError(f"patient {pid}: unknown individual feature {feature!r}")
        if category not in categories:
            raise ValueError(
                f"patient {pid}: category {category!r} is not valid for {feature!r}"
            )
    history = sorted(record.residence_history, key=lambda p: p.start_fraction)
    if not history:
        raise ValueError(f"patient {pid}: residence history is empty")
    if abs(history[0].start_fraction) > RESIDENCE_COVER_TOL:
        raise ValueError(f"patient {pid}: residence history must start at 0")
    for prev, cur in zip(history, history[1:]):
        if abs(cur.start_fraction - prev.end_fraction) > RESIDENCE_COVER_TOL:
            raise ValueError(f"patient {pid}: residence history has a gap or overlap")
    for period in history:
        if not period.start_fraction < period.end_fraction:
            raise ValueError(f"patient {pid}: residence period has start >= end")
        if not (0.0 <= period.start_fraction and period.end_fraction <= 1.0 + RESIDENCE_COVER_TOL):
            raise ValueError(f"patient {pid}: residence fractions must lie in [0, 1]")
    if abs(history[-1].end_fraction - 1.0) > RESIDENCE_COVER_TOL:
        raise ValueError(f"patient {pid}: residence history must cover the window up to 1")


@dataclass(frozen=True)
class ContextualCell:
    cell_id: str
    year: int
    xmin: float
    ymin: float
    xmax: float
    ymax: float
    measures: dict


def validate_cell(cell):
    if not (cell.xmin < cell.xmax and cell.ymin < cell.ymax):
        raise ValueError(f"cell {cell.cell_id}: bounds are not a proper rectangle")
    for name, value in cell.measures.items():
        if not math.isfinite(value):
            raise ValueError(f"cell {cell.cell_id}: measure {name!r} is not finite")
        if name.endswith("_rate") and value < 0:
            raise ValueError(f"cell {cell.cell_id}: rate measure {name!r} is negative")


@dataclass(frozen=True)
class ContextualFieldSpec:
    """Spatial distribution of one neighborhood measure.

    Cell values are drawn as mean + x_gradient * (east-west position scaled
    to [-1, 1]) + Normal(0, sd). A nonzero gradient makes residence location
    matter, which is how group-dependent exposure differences are planted.
    """

    mean: float
    sd: float
    x_gradient: float = 0.0

    def validate(self, name):
        for label, value in (("mean", self.mean), ("sd", self.sd), ("x_gradient", self.x_gradient)):
            if not math.isfinite(value):
                raise ValueError(f"contextual field {name!r}: {label} must be finite")
        if self.sd < 0:
            raise ValueError(f"contextual field {name!r}: sd must be >= 0")


@dataclass(frozen=True)
class FeatureInfo:
    kind: str
    level: str
    categories: tuple = None


def default_contextual_fields():
    return {
        name: ContextualFieldSpec(mean=mean, sd=sd)
        for name, (mean, sd) in rosters.CONTEXTUAL_MEASURE_STATS.items()
    }


def default_category_priors():
    priors = {name: dict(val) for name, val in rosters.DEFAULT_CATEGORY_PRIORS.items()}
    priors["insurance"] = dict(rosters.DEFAULT_INSURANCE_PRIORS)
    return priors


def group_category_priors():
    """Group-conditional priors for every social feature and insurance."""
    priors = {
        name: {group: dict(val) for group, val in by_group.items()}
        for name, by_group in rosters.GROUP_CATEGORY_PRIORS.items()
    }
    priors["insurance"] = {g: dict(v) for g, v in rosters.GROUP_INSURANCE_PRIORS.items()}
    return priors


def _is_group_conditional(value):
    return isinstance(value, dict) and all(isinstance(v, dict) for v in value.values())


@dataclass
class GeneratorSpec:
    n_patients: int
    seed: int
    race_mix: dict = field(default_factory=lambda: dict(rosters.DEFAULT_RACE_MIX))
    female_share: object = rosters.DEFAULT_FEMALE_SHARE
    age_mean: object = rosters.DEFAULT_AGE_MEAN
    age_sd: float = rosters.DEFAULT_AGE_SD
    cci_mean: float = rosters.DEFAULT_CCI_MEAN
    index_years: tuple = rosters.DEFAULT_INDEX_YEARS
    category_priors: dict = field(default_factory=default_category_priors)
    contextual_fields: dict = field(default_factory=default_contextual_fields)
    grid_size: int = 16
    buffer_radius: float = 0.35
    group_location_shift: dict = field(default_factory=dict)
    planted_coefficients: dict = field(default_factory=dict)
    intercept: float = 0.0
    group_label_shift: dict = field(default_factory=dict)
    missingness_rates: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        groups = rosters.RACE_GROUPS
        if not (isinstance(self.n_patients, int) and self.n_patients >= 1):
            raise ValueError("n_patients must be a positive integer")
        if not isinstance(self.seed, int):
            raise ValueError("seed must be an integer")
        self.race_mix = normalized_shares(self.race_mix, groups, "race_mix")
        self._validate_rate("female_share", self.female_share)
        self._validate_group_float("age_mean", self.age_mean, bound=None)
        if not (math.isfinite(self.age_sd) and self.age_sd > 0):
            raise ValueError("age_sd must be a positive number")
        if not (math.isfinite(self.cci_mean) and self.cci_mean >= 0):
            raise ValueError("cci_mean must be >= 0")
        if not self.index_years or any(not isinstance(y, int) for y in self.index_years):
            raise ValueError("index_years must be a non-empty tuple of integers")
        self.index_years = tuple(sorted(set(self.index_years)))

        priors_rosters = dict(rosters.INDIVIDUAL_FEATURES)
        priors_rosters["insurance"] = rosters.INSURANCE_CATEGORIES
        normalized_priors = {}
        for feature, value in self.category_priors.items():
            categories = priors_rosters.get(feature)
            if categories is None:
                raise ValueError(f"category_priors: unknown feature {feature!r}")
            if _is_group_conditional(value):
                if set(value) != set(groups):
                    raise ValueError(
                        f"category_priors[{feature!r}]: group-conditional priors "
                        f"must cover exactly {sorted(groups)}"
                    )
                normalized_priors[feature] = {
                    g: normalized_shares(v, categories, f"category_priors[{feature!r}][{g!r}]")
                    for g, v in value.items()
                }
            else:
                normalized_priors[feature] = normalized_shares(
                    value, categories, f"category_priors[{feature!r}]"
                )
        for feature in priors_rosters:
            if feature not in normalized_priors:
                raise ValueError(f"category_priors is missing feature {feature!r}")
        self.category_priors = normalized_priors

        reserved = {"patient_id", "index_year", "age", "sex", "race_ethnicity",
                    "insurance", "cci", "outcome"}
        for name, fspec in self.contextual_fields.items():
            if not name or not isinstance(name, str) or any(c in name for c in ",\n="):
                raise ValueError(f"contextual measure name {name!r} is not usable")
            if name in reserved or name in rosters.INDIVIDUAL_FEATURES:
                raise ValueError(f"contextual measure name {name!r} collides with a patient column")
            fspec.validate(name)

        if not (isinstance(self.grid_size, int) and self.grid_size >= 2):
            raise ValueError("grid_size must be an integer >= 2")
        if not (math.isfinite(self.buffer_radius) and self.buffer_radius > 0):
            raise ValueError("buffer_radius must be positive")
        if 2 * self.buffer_radius >= self.grid_size:
            raise ValueError("buffer_radius too large for the contextual grid")

        shift = {g: (0.0, 0.0) for g in groups}
        for group, delta in self.group_location_shift.items():
            if group not in groups:
                raise ValueError(f"group_location_shift: unknown group {group!r}")
            dx, dy = delta
            if not (math.isfinite(dx) and math.isfinite(dy)):
                raise ValueError(f"group_location_shift[{group!r}] must be finite")
            shift[group] = (float(dx), float(dy))
        self.group_location_shift = shift

        for key, weight in self.planted_coefficients.items():
            self._validate_coefficient_key(key)
            if not math.isfinite(weight):
                raise ValueError(f"planted coefficient {key!r} must be finite")
        if not math.isfinite(self.intercept):
            raise ValueError("intercept must be finite")

        label_shift = {g: 0.0 for g in groups}
        for group, offset in self.group_label_shift.items():
            if group not in groups:
                raise ValueError(f"group_label_shift: unknown group {group!r}")
            if not math.isfinite(offset):
                raise ValueError(f"group_label_shift[{group!r}] must be finite")
            label_shift[group] = float(offset)
        self.group_label_shift = label_shift

        normalized_missing = {}
        for feature, value in self.missingness_rates.items():
            if feature not in rosters.INDIVIDUAL_FEATURES and feature not in self.contextual_fields:
                raise ValueError(
                    f"missingness_rates: {feature!r} is not an individual social "
                    "feature or a contextual measure"
                )
            if isinstance(value, dict):
                by_group = {g: 0.0 for g in groups}
                for group, rate in value.items():
                    if group not in groups:
                        raise ValueError(f"missingness_rates[{feature!r}]: unknown group {group!r}")
                    self._validate_rate(f"missingness_rates[{feature!r}][{group!r}]", rate)
                    by_group[group] = float(rate)
                normalized_missing[feature] = by_group
            else:
                self._validate_rate(f"missingness_rates[{feature!r}]", value)
                normalized_missing[feature] = float(value)
        self.missingness_rates = normalized_missing
        return self

    @staticmethod
    def _validate_rate(what, value):
        if isinstance(value, dict):
            for group, rate in value.items():
                if group not in rosters.RACE_GROUPS:
                    raise ValueError(f"{what}: unknown group {group!r}")
                if not (isinstance(rate, (int, float)) and math.isfinite(rate) and 0 <= rate <= 1):
                    raise ValueError(f"{what}[{group!r}] must lie in [0, 1]")
        else:
            if not (isinstance(value, (int, float)) and math.isfinite(value) and 0 <= value <= 1):
                raise ValueError(f"{what} must lie in [0, 1]")

    @staticmethod
    def _validate_group_float(what, value, bound):
        values = value.values() if isinstance(value, dict) else [value]
        if isinstance(value, dict) and set(value) != set(rosters.RACE_GROUPS):
            raise ValueError(f"{what}: group-conditional values must cover every group")
        for v in values:
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"{what} must be finite")

    def _validate_coefficient_key(self, key):
        if key in ("age", "cci"):
            return
        if "=" in key:
            feature, category = key.split("=", 1)
            if feature == "sex":
                allowed = rosters.SEX_CATEGORIES
            elif feature == "insurance":
                allowed = rosters.INSURANCE_CATEGORIES
            elif feature == "race_ethnicity":
                raise ValueError(
                    f"planted coefficient {key!r}: group effects are planted via "
                    "group_label_shift, not race indicators"
                )
            else:
                allowed = rosters.INDIVIDUAL_FEATURES.get(feature)
                if allowed is None:
                    raise ValueError(f"planted coefficient {key!r}: unknown feature {feature!r}")
            if category not in allowed:
                raise ValueError(f"planted coefficient {key!r}: unknown category {category!r}")
            return
        if key in self.contextual_fields:
            return
        raise ValueError(f"planted coefficient {key!r} matches no feature or measure")


@dataclass
class Cohort:
    records: list
    feature_dictionary: dict
    linked_contextual: dict
    contextual_missing: dict

    def validate(self):
        seen = set()
        for record in self.records:
            validate_record(record)
            if record.patient_id in seen:
                raise ValueError(f"duplicate patient_id {record.patient_id}")
            seen.add(record.patient_id)
            for feature in record.individual_sdoh:
                if feature not in self.feature_dictionary:
                    raise ValueError(f"feature {feature!r} missing from the dictionary")
            if record.patient_id not in self.linked_contextual:
                raise ValueError(f"patient {record.patient_id} has no linked contextual values")
        for pid, missing in self.contextual_missing.items():
            for measure in missing:
                if measure not in self.linked_contextual[pid]:
                    raise ValueError(
                        f"patient {pid}: missing-mask names unknown measure {measure!r}"
                    )
        return self

    def outcomes(self):
        import numpy as np

        return np.array([r.outcome for r in self.records], dtype=np.float64)
