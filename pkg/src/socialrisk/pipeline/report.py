"""Run report assembled from persisted artifacts only.

The report never recomputes a model or a metric: every number is read
back from stage files, so the report is exactly as reproducible as the
artifacts behind it. Numeric values stay in their repr form (strings)
all the way into report.json, which makes the results hash immune to
any float formatting drift.
"""

import hashlib
import json
import os

from .. import __version__
from ..errors import StageError
from . import artifacts as art
from . import figures


def _rows_as_dicts(path):
    header, rows = art.read_table(path)
    return [dict(zip(header, row)) for row in rows]


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def results_hash(results):
    canon = json.dumps(results, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def assemble_report(config, in_dir):
    generate_m = art.load_manifest(in_dir, "generate", config)
    preprocess_m = art.load_manifest(in_dir, "preprocess", config)
    sample_m = art.load_manifest(in_dir, "sample", config)
    train_m = art.load_manifest(in_dir, "train", config)
    evaluate_m = art.load_manifest(in_dir, "evaluate", config)
    explain_m = art.load_manifest(in_dir, "explain", config)
    causal_m = art.load_manifest(in_dir, "causal", config)
    art.load_manifest(in_dir, "fairness", config)
    mitigate_m = art.load_manifest(in_dir, "mitigate", config)

    cv = _load_json(art.require_file(in_dir, "cv_results.json"))
    top_k = config["explain"]["top_k"]
    shap_rows = _rows_as_dicts(art.require_file(in_dir, "shap_rank.csv"))

    with open(art.require_file(in_dir, "selected_features.txt"), encoding="utf-8") as fh:
        selected = [line.strip() for line in fh if line.strip()]

    results = {
        "cohort": {
            "n_patients": generate_m["extra"]["n_patients"],
            "prevalence": generate_m["extra"]["prevalence"],
            "intercept": generate_m["extra"]["intercept"],
            "partition_sizes": preprocess_m["extra"]["partition_sizes"],
        },
        "sampling": sample_m["extra"],
        "train": {
            "feature_set": train_m["extra"]["feature_set"],
            "best_linear": train_m["extra"]["best_linear"],
            "best_gbdt": train_m["extra"]["best_gbdt"],
            "cv": {
                family: [
                    {"params": r["params"], "mean_auc": r["mean_auc"]}
                    for r in cv[family]["results"]
                ]
                for family in ("linear", "gbdt")
            },
        },
        "metrics": _rows_as_dicts(art.require_file(in_dir, "metrics.csv")),
        "risk_groups": {
            "table": _rows_as_dicts(art.require_file(in_dir, "risk_groups.csv")),
            "scalars": dict(
                art.read_table(art.require_file(in_dir, "scalars.csv"))[1]
            ),
            "primary_model": evaluate_m["extra"]["primary_model"],
        },
        "shap": {
            "model": explain_m["extra"]["model"],
            "top_features": shap_rows[:top_k],
            "combinations": _rows_as_dicts(art.require_file(in_dir, "combos.csv")),
        },
        "causal": {
            "edges": _rows_as_dicts(art.require_file(in_dir, "causal_edges.csv")),
            "selected_features": selected,
            "n_ci_tests": causal_m["extra"]["n_ci_tests"],
        },
        "fairness": _rows_as_dicts(art.require_file(in_dir, "fairness.csv")),
        "mitigation": {
            "method": mitigate_m["extra"]["method"],
            "rows": _rows_as_dicts(art.require_file(in_dir, "mitigation.csv")),
            "scalars": dict(
                art.read_table(art.require_file(in_dir, "mitigation_scalars.csv"))[1]
            ),
        },
    }

    fs_path = os.path.join(in_dir, "feature_sets.csv")
    if os.path.exists(fs_path):
        art.load_manifest(in_dir, "feature_sets", config, hash_stage="train")
        results["feature_sets"] = _rows_as_dicts(fs_path)

    return results


def write_report(config, out_dir, in_dir, timings=None):
    results = assemble_report(config, in_dir)
    report = {
        "meta": {
            "tool_version": __version__,
            "config": config.sections,
            "config_hash": config.content_hash(),
            "timings_seconds": timings or {},
        },
        "results": results,
        "results_hash": results_hash(results),
    }
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    files = ["report.json"]
    if config["report"]["figures"]:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        files.append(
            figures.risk_group_figure(
                results["risk_groups"]["table"], os.path.join(fig_dir, "risk_groups.png")
            )
        )
        files.append(
            figures.shap_figure(
                results["shap"]["top_features"], os.path.join(fig_dir, "shap_top.png")
            )
        )
        curve_rows = _rows_as_dicts(art.require_file(in_dir, "fnr_curve.csv"))
        files.append(
            figures.fnr_curve_figure(curve_rows, os.path.join(fig_dir, "fnr_curves.png"))
        )
        if "feature_sets" in results:
            files.append(
                figures.feature_set_figure(
                    results["feature_sets"], os.path.join(fig_dir, "feature_sets.png")
                )
            )
    art.write_manifest(out_dir, "report", config, files)
    return report_path, report
