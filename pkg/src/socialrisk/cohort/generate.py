"""Seeded cohort synthesis with a planted logistic outcome model.

Draw order is fixed and documented so that identical specs give identical
cohorts:

  1. contextual cell values (measures in sorted order, years ascending)
  2. race group
  3. sex
  4. age (redrawing rows under 18)
  5. comorbidity score
  6. index year
  7. individual social categories (features in sorted order)
  8. residence history (period counts, breakpoints, base point, jitter)
  9. categorical missingness flips (features in sorted order)
 10. contextual missingness masks (measures in sorted order)
 11. outcome uniforms

Linkage and the linear predictor are pure functions and consume no draws.
Categorical missingness is applied before the outcome draw, so the planted
model acts on the recorded category ("unknown" included); blanked contextual
observations keep their true values inside the linear predictor.
"""

from dataclasses import dataclass

import numpy as np

from socialrisk.errors import SocialriskError
from socialrisk.util import sigmoid
from socialrisk.cohort import features as rosters
from socialrisk.cohort.linkage import link_many
from socialrisk.cohort.types import (
    Cohort,
    ContextualCell,
    FeatureInfo,
    GeneratorSpec,
    PatientRecord,
    ResidencePeriod,
    group_category_priors,
)

_PERIOD_COUNT_PROBS = ((1, 0.70), (2, 0.25), (3, 0.05))
_MAX_PERIODS = 3
_RESIDENCE_MARGIN = 1.0
_POINT_JITTER_SD = 0.5

#: Intercept that lands the default plant near a 10% outcome rate
#: (bisected against a 200000-patient draw of the default spec).
DEFAULT_INTERCEPT = -4.94477852745689


def _per_group(value, groups):
    if isinstance(value, dict):
        return {g: float(value[g]) for g in groups}
    return {g: float(value) for g in groups}


def make_cells(spec, rng):
    """Contextual grid for every index year, one unit cell per tile."""
    g = spec.grid_size
    centers = np.arange(g) + 0.5
    east_west = (centers - g / 2.0) / (g / 2.0)
    cells_values = {}
    for name in sorted(spec.contextual_fields):
        fspec = spec.contextual_fields[name]
        noise = rng.normal(size=(len(spec.index_years), g, g))
        values = fspec.mean + fspec.x_gradient * east_west[None, None, :] + fspec.sd * noise
        if name.endswith("_rate"):
            values = np.maximum(values, 0.0)
        cells_values[name] = values
    cells = []
    for yi, year in enumerate(spec.index_years):
        for row in range(g):
            for col in range(g):
                cells.append(
                    ContextualCell(
                        cell_id=f"{year}:{row:02d}:{col:02d}",
                        year=year,
                        xmin=float(col),
                        ymin=float(row),
                        xmax=float(col + 1),
                        ymax=float(row + 1),
                        measures={
                            name: float(cells_values[name][yi, row, col])
                            for name in sorted(spec.contextual_fields)
                        },
                    )
                )
    return cells


def _draw_categories(rng, n, priors, categories, group_idx, groups):
    """Vectorized categorical draw from flat or group-conditional priors."""
    u = rng.random(n)
    out = np.empty(n, dtype=np.int64)
    if isinstance(next(iter(priors.values())), dict):
        for gi, group in enumerate(groups):
            probs = np.array([priors[group][c] for c in categories])
            cdf = np.cumsum(probs)
            mask = group_idx == gi
            out[mask] = np.searchsorted(cdf, u[mask], side="right")
    else:
        probs = np.array([priors[c] for c in categories])
        cdf = np.cumsum(probs)
        out = np.searchsorted(cdf, u, side="right")
    return np.minimum(out, len(categories) - 1)


@dataclass
class _Population:
    cells: list
    race: np.ndarray          # group index per patient
    sex_female: np.ndarray
    age: np.ndarray
    cci: np.ndarray
    index_year: np.ndarray
    sdoh: dict                # feature -> array of category strings (post missingness)
    insurance: np.ndarray
    residence: list           # per patient tuple of ResidencePeriod
    linked: dict              # patient_id -> measure -> float (true values)
    contextual_missing: dict  # patient_id -> frozenset of masked measures
    lp_no_intercept: np.ndarray
    outcome_uniforms: np.ndarray


def _rate_for_groups(value, groups):
    if isinstance(value, dict):
        return np.array([value[g] for g in groups])
    return np.full(len(groups), float(value))


def _draw_population(spec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_patients
    groups = rosters.RACE_GROUPS

    cells = make_cells(spec, rng)

    mix = np.array([spec.race_mix[g] for g in groups])
    race = rng.choice(len(groups), size=n, p=mix / mix.sum())

    female_share = _per_group(spec.female_share, groups)
    share = np.array([female_share[g] for g in groups])[race]
    sex_female = rng.random(n) < share

    age_mean = _per_group(spec.age_mean, groups)
    mean = np.array([age_mean[g] for g in groups])[race]
    age = rng.normal(size=n) * spec.age_sd + mean
    while True:
        bad = age < 18.0
        if not bad.any():
            break
        age[bad] = rng.normal(size=int(bad.sum())) * spec.age_sd + mean[bad]

    cci = rng.poisson(spec.cci_mean, size=n)
    index_year = np.asarray(spec.index_years)[rng.integers(0, len(spec.index_years), size=n)]

    insurance = None
    sdoh = {}
    for feature in sorted(spec.category_priors):
        if feature == "insurance":
            categories = rosters.INSURANCE_CATEGORIES
        else:
            categories = rosters.INDIVIDUAL_FEATURES[feature]
        idx = _draw_categories(rng, n, spec.category_priors[feature], categories, race, groups)
        drawn = np.array(categories, dtype=object)[idx]
        if feature == "insurance":
            insurance = drawn
        else:
            sdoh[feature] = drawn

    counts = np.array([c for c, _ in _PERIOD_COUNT_PROBS])
    probs = np.array([p for _, p in _PERIOD_COUNT_PROBS])
    n_periods = counts[rng.choice(len(counts), size=n, p=probs)].tolist()
    breaks = np.sort(rng.random((n, _MAX_PERIODS - 1)), axis=1).tolist()
    lo, hi = _RESIDENCE_MARGIN, spec.grid_size - _RESIDENCE_MARGIN
    base = rng.uniform(lo, hi, size=(n, 2))
    jitter = rng.normal(0.0, _POINT_JITTER_SD, size=(n, _MAX_PERIODS, 2))
    shift = np.array([spec.group_location_shift[g] for g in groups])[race]
    points = np.clip(
        base[:, None, :] + jitter + shift[:, None, :],
        spec.buffer_radius * 1e-3,
        spec.grid_size - spec.buffer_radius * 1e-3,
    ).tolist()
    residence = []
    for i in range(n):
        k = n_periods[i]
        edges = [0.0] + breaks[i][3 - k :] + [1.0] if k > 1 else [0.0, 1.0]
        residence.append(
            tuple(
                ResidencePeriod(
                    start_fraction=edges[j],
                    end_fraction=edges[j + 1],
                    x=points[i][j][0],
                    y=points[i][j][1],
                )
                for j in range(k)
            )
        )

    for feature in sorted(spec.missingness_rates):
        if feature not in sdoh:
            continue
        rate = _rate_for_groups(spec.missingness_rates[feature], groups)[race]
        flip = rng.random(n) < rate
        values = sdoh[feature].copy()
        values[flip] = "unknown"
        sdoh[feature] = values

    contextual_missing_arrays = {}
    for measure in sorted(spec.missingness_rates):
        if measure not in spec.contextual_fields:
            continue
        rate = _rate_for_groups(spec.missingness_rates[measure], groups)[race]
        contextual_missing_arrays[measure] = rng.random(n) < rate

    outcome_uniforms = rng.random(n)

    year_list = index_year.tolist()
    age_list = age.tolist()
    cci_list = cci.tolist()
    female_list = sex_female.tolist()
    race_list = race.tolist()
    sdoh_lists = [(f, sdoh[f].tolist()) for f in sorted(sdoh)]
    insurance_list = insurance.tolist()
    stubs = [
        PatientRecord(
            patient_id=i,
            index_year=year_list[i],
            age=age_list[i],
            sex="female" if female_list[i] else "male",
            race_ethnicity=groups[race_list[i]],
            insurance=insurance_list[i],
            cci=cci_list[i],
            individual_sdoh={f: values[i] for f, values in sdoh_lists},
            residence_history=residence[i],
            outcome=0,
        )
        for i in range(n)
    ]
    linked = link_many(stubs, cells, spec.buffer_radius)

    contextual_missing = {}
    for i in range(n):
        masked = frozenset(
            m for m, flags in contextual_missing_arrays.items() if flags[i]
        )
        if masked:
            contextual_missing[i] = masked

    lp = np.zeros(n)
    label_shift = np.array([spec.group_label_shift[g] for g in groups])
    lp += label_shift[race]
    for key in sorted(spec.planted_coefficients):
        weight = spec.planted_coefficients[key]
        lp += weight * _encoded_column(key, spec, stubs, sex_female, age, cci, sdoh, insurance, linked)

    return _Population(
        cells=cells,
        race=race,
        sex_female=sex_female,
        age=age,
        cci=cci,
        index_year=index_year,
        sdoh=sdoh,
        insurance=insurance,
        residence=residence,
        linked=linked,
        contextual_missing=contextual_missing,
        lp_no_intercept=lp,
        outcome_uniforms=outcome_uniforms,
    ), stubs


def _encoded_column(key, spec, stubs, sex_female, age, cci, sdoh, insurance, linked):
    n = len(stubs)
    if key == "age":
        return age
    if key == "cci":
        return cci.astype(np.float64)
    if key in spec.contextual_fields:
        return np.array([linked[r.patient_id][key] for r in stubs])
    feature, category = key.split("=", 1)
    if feature == "sex":
        column = sex_female if category == "female" else ~sex_female
        return column.astype(np.float64)
    if feature == "insurance":
        return (insurance == category).astype(np.float64)
    return (sdoh[feature] == category).astype(np.float64)


def feature_dictionary_for(spec):
    out = {
        "age": FeatureInfo(kind="continuous", level="individual"),
        "cci": FeatureInfo(kind="continuous", level="individual"),
        "sex": FeatureInfo(kind="categorical", level="individual",
                           categories=tuple(rosters.SEX_CATEGORIES)),
        "race_ethnicity": FeatureInfo(kind="categorical", level="individual",
                                      categories=tuple(rosters.RACE_GROUPS)),
        "insurance": FeatureInfo(kind="categorical", level="individual",
                                 categories=tuple(rosters.INSURANCE_CATEGORIES)),
    }
    for feature, categories in rosters.INDIVIDUAL_FEATURES.items():
        out[feature] = FeatureInfo(kind="categorical", level="individual",
                                   categories=tuple(categories))
    for measure in sorted(spec.contextual_fields):
        out[measure] = FeatureInfo(kind="continuous", level="contextual")
    return out


def generate_cohort_with_cells(spec):
    """Generate the cohort and the contextual cells it was linked against."""
    population, stubs = _draw_population(spec)
    probs = sigmoid(population.lp_no_intercept + spec.intercept)
    outcomes = (population.outcome_uniforms < probs).astype(np.int64)
    for record, y in zip(stubs, outcomes):
        record.outcome = int(y)
    cohort = Cohort(
        records=stubs,
        feature_dictionary=feature_dictionary_for(spec),
        linked_contextual=population.linked,
        contextual_missing=population.contextual_missing,
    )
    return cohort, population.cells


def generate_cohort(spec):
    return generate_cohort_with_cells(spec)[0]


def ground_truth_probability(record, spec, linked=None):
    """Planted outcome probability for one record.

    `linked` must carry the patient's true contextual values whenever the
    planted model uses a contextual measure.
    """
    lp = spec.intercept + spec.group_label_shift.get(record.race_ethnicity, 0.0)
    for key in sorted(spec.planted_coefficients):
        weight = spec.planted_coefficients[key]
        lp += weight * _encoded_value(record, key, spec, linked)
    return float(sigmoid(np.float64(lp)))


def _encoded_value(record, key, spec, linked):
    if key == "age":
        return record.age
    if key == "cci":
        return float(record.cci)
    if key in spec.contextual_fields:
        if linked is None or key not in linked:
            raise SocialriskError(
                f"patient {record.patient_id}: planted model needs linked "
                f"contextual measure {key!r}"
            )
        return linked[key]
    feature, category = key.split("=", 1)
    if feature == "sex":
        return 1.0 if record.sex == category else 0.0
    if feature == "insurance":
        return 1.0 if record.insurance == category else 0.0
    if feature not in record.individual_sdoh:
        raise SocialriskError(
            f"patient {record.patient_id}: record lacks feature {feature!r} "
            "used by the planted model"
        )
    return 1.0 if record.individual_sdoh[feature] == category else 0.0


def calibrate_intercept(spec, target_prevalence, tol=1e-12):
    """Intercept that makes the mean planted probability hit the target.

    The mean probability is monotone in the intercept, so plain bisection
    converges; covariates depend only on the seed, never on the intercept.
    """
    if not 0.0 < target_prevalence < 1.0:
        raise ValueError("target_prevalence must lie strictly between 0 and 1")
    population, _ = _draw_population(spec)
    lp = population.lp_no_intercept

    def mean_prob(c):
        return float(np.mean(sigmoid(lp + c)))

    lo, hi = -40.0, 40.0
    if not mean_prob(lo) < target_prevalence < mean_prob(hi):
        raise SocialriskError("target prevalence is unreachable for this plant")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_prob(mid) < target_prevalence:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def default_generator_spec(n_patients=10000, seed=0):
    """Realistic cohort: group-conditional priors and a moderate mixed plant."""
    return GeneratorSpec(
        n_patients=n_patients,
        seed=seed,
        female_share=dict(rosters.GROUP_FEMALE_SHARE),
        age_mean=dict(rosters.GROUP_AGE_MEAN),
        category_priors=group_category_priors(),
        planted_coefficients={
            "age": 0.02,
            "cci": 0.18,
            "sex=female": 0.15,
            "housing_stability=homeless_or_shelter": 0.9,
            "food_security=food_insecurity": 0.35,
            "financial_constraints=has_constraints": 0.30,
            "employment=unemployed": 0.35,
            "insurance=Medicaid": 0.30,
            "murder_rate": 30.0,
            "aggravated_assault_rate": 0.8,
        },
        intercept=DEFAULT_INTERCEPT,
    )
