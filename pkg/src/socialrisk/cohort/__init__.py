from socialrisk.cohort.types import (
    Cohort,
    ContextualCell,
    ContextualFieldSpec,
    FeatureInfo,
    GeneratorSpec,
    PatientRecord,
    ResidencePeriod,
)
from socialrisk.cohort.generate import (
    calibrate_intercept,
    default_generator_spec,
    generate_cohort,
    generate_cohort_with_cells,
    ground_truth_probability,
)
from socialrisk.cohort.linkage import circle_rect_overlap, link_contextual, link_many

__all__ = [
    "Cohort",
    "ContextualCell",
    "ContextualFieldSpec",
    "FeatureInfo",
    "GeneratorSpec",
    "PatientRecord",
    "ResidencePeriod",
    "calibrate_intercept",
    "circle_rect_overlap",
    "default_generator_spec",
    "generate_cohort",
    "generate_cohort_with_cells",
    "ground_truth_probability",
    "link_contextual",
    "link_many",
]
