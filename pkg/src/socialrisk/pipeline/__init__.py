from socialrisk.pipeline.config import PipelineConfig, load_config, parse_config
from socialrisk.pipeline.report import assemble_report, results_hash, write_report
from socialrisk.pipeline.stages import compare_feature_sets

__all__ = [
    "PipelineConfig",
    "assemble_report",
    "compare_feature_sets",
    "load_config",
    "parse_config",
    "results_hash",
    "write_report",
]
