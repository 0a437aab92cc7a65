"""Default feature rosters and population parameters for cohort synthesis.

Shares are rounded to three decimals, so a roster may sum to slightly off 1;
spec validation renormalizes exactly (see GeneratorSpec).
"""

RACE_GROUPS = ("NHW", "NHB", "Hispanic", "Other")

SEX_CATEGORIES = ("male", "female")

INSURANCE_CATEGORIES = ("Medicare", "Private", "Medicaid", "Nopay", "Unknown", "Other")

# Individual-level social feature rosters. "unknown" is a real recorded
# category, not an absence marker; the generator may also convert a drawn
# category to "unknown" when planting missingness.
INDIVIDUAL_FEATURES = {
    "marital_status": ("single", "married_or_partner", "widowed_or_divorced", "unknown"),
    "smoking": ("ever", "never", "unknown"),
    "alcohol": ("yes", "no", "unknown"),
    "drug_abuse": ("yes", "no", "unknown"),
    "education": ("college_or_above", "high_school_or_lower", "unknown"),
    "employment": ("employed", "unemployed", "retired_or_disabled", "unknown"),
    "housing_stability": ("homeless_or_shelter", "stable_housing", "unknown"),
    "food_security": ("food_insecurity", "unknown"),
    "financial_constraints": ("has_constraints", "unknown"),
}

DEFAULT_RACE_MIX = {"NHW": 0.504, "NHB": 0.394, "Hispanic": 0.049, "Other": 0.054}

DEFAULT_FEMALE_SHARE = 0.581

GROUP_FEMALE_SHARE = {"NHW": 0.519, "NHB": 0.668, "Hispanic": 0.572, "Other": 0.539}

DEFAULT_AGE_MEAN = 58.45
DEFAULT_AGE_SD = 13.0

GROUP_AGE_MEAN = {"NHW": 60.19, "NHB": 56.39, "Hispanic": 55.95, "Other": 59.42}

DEFAULT_CCI_MEAN = 2.0

DEFAULT_INDEX_YEARS = (2015, 2016, 2017, 2018, 2019, 2020, 2021)

DEFAULT_INSURANCE_PRIORS = {
    "Medicare": 0.410,
    "Private": 0.311,
    "Medicaid": 0.148,
    "Nopay": 0.057,
    "Unknown": 0.053,
    "Other": 0.021,
}

DEFAULT_CATEGORY_PRIORS = {
    "marital_status": {
        "single": 0.208,
        "married_or_partner": 0.350,
        "widowed_or_divorced": 0.201,
        "unknown": 0.241,
    },
    "smoking": {"ever": 0.402, "never": 0.548, "unknown": 0.050},
    "alcohol": {"yes": 0.258, "no": 0.652, "unknown": 0.090},
    "drug_abuse": {"yes": 0.049, "no": 0.833, "unknown": 0.118},
    "education": {
        "college_or_above": 0.096,
        "high_school_or_lower": 0.109,
        "unknown": 0.795,
    },
    "employment": {
        "employed": 0.392,
        "unemployed": 0.141,
        "retired_or_disabled": 0.191,
        "unknown": 0.276,
    },
    "housing_stability": {
        "homeless_or_shelter": 0.008,
        "stable_housing": 0.414,
        "unknown": 0.578,
    },
    "food_security": {"food_insecurity": 0.692, "unknown": 0.308},
    "financial_constraints": {"has_constraints": 0.507, "unknown": 0.493},
}

# Group-conditional priors for realistic cohorts; any feature not listed for a
# group falls back to the overall prior.
GROUP_INSURANCE_PRIORS = {
    "NHW": {
        "Medicare": 0.431,
        "Private": 0.324,
        "Medicaid": 0.109,
        "Nopay": 0.044,
        "Unknown": 0.071,
        "Other": 0.021,
    },
    "NHB": {
        "Medicare": 0.401,
        "Private": 0.285,
        "Medicaid": 0.200,
        "Nopay": 0.071,
        "Unknown": 0.021,
        "Other": 0.021,
    },
    "Hispanic": {
        "Medicare": 0.343,
        "Private": 0.299,
        "Medicaid": 0.196,
        "Nopay": 0.077,
        "Unknown": 0.065,
        "Other": 0.020,
    },
    "Other": {
        "Medicare": 0.342,
        "Private": 0.387,
        "Medicaid": 0.094,
        "Nopay": 0.051,
        "Unknown": 0.107,
        "Other": 0.020,
    },
}

GROUP_CATEGORY_PRIORS = {
    "marital_status": {
        "NHW": {
            "single": 0.145,
            "married_or_partner": 0.404,
            "widowed_or_divorced": 0.173,
            "unknown": 0.278,
        },
        "NHB": {
            "single": 0.304,
            "married_or_partner": 0.267,
            "widowed_or_divorced": 0.262,
            "unknown": 0.167,
        },
        "Hispanic": {
            "single": 0.162,
            "married_or_partner": 0.362,
            "widowed_or_divorced": 0.131,
            "unknown": 0.345,
        },
        "Other": {
            "single": 0.130,
            "married_or_partner": 0.450,
            "widowed_or_divorced": 0.081,
            "unknown": 0.338,
        },
    },
    "smoking": {
        "NHW": {"ever": 0.454, "never": 0.492, "unknown": 0.054},
        "NHB": {"ever": 0.367, "never": 0.593, "unknown": 0.039},
        "Hispanic": {"ever": 0.301, "never": 0.648, "unknown": 0.051},
        "Other": {"ever": 0.259, "never": 0.655, "unknown": 0.087},
    },
    "alcohol": {
        "NHW": {"yes": 0.269, "no": 0.628, "unknown": 0.103},
        "NHB": {"yes": 0.252, "no": 0.682, "unknown": 0.065},
        "Hispanic": {"yes": 0.248, "no": 0.657, "unknown": 0.095},
        "Other": {"yes": 0.208, "no": 0.660, "unknown": 0.132},
    },
    "drug_abuse": {
        "NHW": {"yes": 0.044, "no": 0.822, "unknown": 0.134},
        "NHB": {"yes": 0.063, "no": 0.850, "unknown": 0.087},
        "Hispanic": {"yes": 0.032, "no": 0.842, "unknown": 0.125},
        "Other": {"yes": 0.011, "no": 0.801, "unknown": 0.188},
    },
    "education": {
        "NHW": {"college_or_above": 0.101, "high_school_or_lower": 0.090, "unknown": 0.809},
        "NHB": {"college_or_above": 0.094, "high_school_or_lower": 0.140, "unknown": 0.766},
        "Hispanic": {"college_or_above": 0.077, "high_school_or_lower": 0.101, "unknown": 0.822},
        "Other": {"college_or_above": 0.083, "high_school_or_lower": 0.065, "unknown": 0.852},
    },
    "employment": {
        "NHW": {
            "employed": 0.405,
            "unemployed": 0.111,
            "retired_or_disabled": 0.198,
            "unknown": 0.286,
        },
        "NHB": {
            "employed": 0.371,
            "unemployed": 0.189,
            "retired_or_disabled": 0.195,
            "unknown": 0.244,
        },
        "Hispanic": {
            "employed": 0.418,
            "unemployed": 0.115,
            "retired_or_disabled": 0.137,
            "unknown": 0.329,
        },
        "Other": {
            "employed": 0.401,
            "unemployed": 0.094,
            "retired_or_disabled": 0.146,
            "unknown": 0.358,
        },
    },
    "housing_stability": {
        "NHW": {"homeless_or_shelter": 0.006, "stable_housing": 0.384, "unknown": 0.610},
        "NHB": {"homeless_or_shelter": 0.011, "stable_housing": 0.482, "unknown": 0.507},
        "Hispanic": {"homeless_or_shelter": 0.006, "stable_housing": 0.323, "unknown": 0.671},
        "Other": {"homeless_or_shelter": 0.002, "stable_housing": 0.273, "unknown": 0.725},
    },
    "food_security": {
        "NHW": {"food_insecurity": 0.665, "unknown": 0.335},
        "NHB": {"food_insecurity": 0.743, "unknown": 0.257},
        "Hispanic": {"food_insecurity": 0.606, "unknown": 0.394},
        "Other": {"food_insecurity": 0.640, "unknown": 0.360},
    },
    "financial_constraints": {
        "NHW": {"has_constraints": 0.465, "unknown": 0.535},
        "NHB": {"has_constraints": 0.579, "unknown": 0.421},
        "Hispanic": {"has_constraints": 0.436, "unknown": 0.564},
        "Other": {"has_constraints": 0.447, "unknown": 0.553},
    },
}

# Neighborhood measures as (mean, sd) across cells. Names ending in "_rate"
# are clipped at zero cell-wise; share measures may be negative.
CONTEXTUAL_MEASURE_STATS = {
    "murder_rate": (0.0075, 0.0043),
    "aggravated_assault_rate": (0.3867, 0.1365),
    "motor_vehicle_theft_rate": (0.2348, 0.0882),
    "low_income_low_access_share": (0.2625, 0.1965),
    "seniors_low_access_share": (-0.1661, 0.0949),
}
