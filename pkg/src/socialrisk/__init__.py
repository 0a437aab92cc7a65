"""Synthetic-cohort social-risk modeling pipeline.

Generates EHR-like cohorts with planted ground truth, links area-level
context, trains penalized-logistic and boosted-tree hospitalization models,
explains them with coalition-game attributions, screens causal structure,
and audits/mitigates group fairness.
"""

__version__ = "0.1.0"

from socialrisk.errors import ConfigError, SocialriskError, StageError

__all__ = ["ConfigError", "SocialriskError", "StageError", "__version__"]
