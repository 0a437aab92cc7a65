"""Stage implementations behind the command-line pipeline.

Each stage reads only persisted artifacts from the stage before it,
verifies the producing config hash, computes, and writes its own files
plus a manifest. Nothing is cached in memory between stages, so any
stage can be re-run alone and the full pipeline is just the stages in
order.
"""

import json
import os

import numpy as np

from .. import __version__
from ..cohort import Cohort, generate_cohort_with_cells, link_many
from ..cohort import io as cohort_io
from ..errors import StageError
from ..evaluate import (
    adjusted_or_per_group,
    default_threshold,
    explained_risk_fraction,
    mcfadden_r2,
    risk_groups,
    threshold_metrics,
)
from ..explain import (
    choose_background,
    combination_attribution,
    rank_features,
    shap_linear,
    shap_tree,
)
from ..causal import mgm_prefilter, pc_stable, select_causal_features
from ..fairness import (
    FairnessConfig,
    fairness_metrics,
    fnr_curve,
    group_confusions,
    summarize_mitigation,
)
from ..mitigation import (
    mitigate_adversarial,
    mitigate_calibrated_eo,
    mitigate_dir,
)
from ..models.cv import grid_search_cv
from ..models.gbdt import GBDTParams, fit_gbdt
from ..models.linear import fit_penalized_logistic
from ..models.store import load_model, save_model
from ..preprocess import (
    PARTITIONS,
    SplitAssignment,
    apply_preprocess,
    fit_preprocess,
    read_preprocess_state,
    split,
    tabulate,
    write_preprocess_state,
)
from ..sampling import SamplingPlan, resample, write_sampling_audit
from . import artifacts as art

MODEL_FAMILIES = ("linear", "gbdt")

FNR_CURVE_THRESHOLDS = tuple(round(0.02 * k, 10) for k in range(1, 50))


def _repr_float(x):
    return repr(float(x))


# ---------------------------------------------------------------- generate


def run_generate(config, out_dir):
    spec = config.generator_spec()
    cohort, cells = generate_cohort_with_cells(spec)
    os.makedirs(out_dir, exist_ok=True)
    cohort_io.write_cohort_csv(cohort.records, os.path.join(out_dir, "cohort.csv"))
    cohort_io.write_residence_csv(cohort.records, os.path.join(out_dir, "residence.csv"))
    cohort_io.write_contextual_csv(cells, os.path.join(out_dir, "contextual.csv"))
    cohort_io.write_feature_dictionary(
        cohort.feature_dictionary, os.path.join(out_dir, "feature_dictionary.txt")
    )
    mask_rows = [
        (pid, measure)
        for pid in sorted(cohort.contextual_missing)
        for measure in sorted(cohort.contextual_missing[pid])
    ]
    art.write_table(
        os.path.join(out_dir, "missing_mask.csv"), ["patient_id", "measure"], mask_rows
    )
    files = [
        "cohort.csv",
        "residence.csv",
        "contextual.csv",
        "feature_dictionary.txt",
        "missing_mask.csv",
    ]
    outcomes = cohort.outcomes()
    art.write_manifest(
        out_dir,
        "generate",
        config,
        files,
        extra={
            "n_patients": len(cohort.records),
            "prevalence": float(outcomes.mean()),
            "intercept": _repr_float(spec.intercept),
        },
    )
    return files


def _load_generated(config, in_dir):
    art.load_manifest(in_dir, "generate", config)
    records = cohort_io.read_cohort_csv(art.require_file(in_dir, "cohort.csv"))
    histories = cohort_io.read_residence_csv(art.require_file(in_dir, "residence.csv"))
    for record in records:
        record.residence_history = histories.get(record.patient_id, ())
    cells = cohort_io.read_contextual_csv(art.require_file(in_dir, "contextual.csv"))
    dictionary = cohort_io.read_feature_dictionary(
        art.require_file(in_dir, "feature_dictionary.txt")
    )
    _, mask_rows = art.read_table(art.require_file(in_dir, "missing_mask.csv"))
    missing = {}
    for pid, measure in mask_rows:
        missing.setdefault(int(pid), set()).add(measure)
    missing = {pid: frozenset(m) for pid, m in missing.items()}
    return records, cells, dictionary, missing


# -------------------------------------------------------------------- link


def run_link(config, out_dir, in_dir):
    """Recompute every patient's exposure values from residence and cells.

    The values must agree with what the generator linked internally; the
    artifact is written from this recomputation so the linkage code path
    is exercised on every run.
    """
    records, cells, dictionary, missing = _load_generated(config, in_dir)
    linked = link_many(records, cells, config["generate"]["buffer_radius"])
    cohort = Cohort(
        records=records,
        feature_dictionary=dictionary,
        linked_contextual=linked,
        contextual_missing=missing,
    )
    os.makedirs(out_dir, exist_ok=True)
    cohort_io.write_linked_csv(cohort, os.path.join(out_dir, "linked.csv"))
    art.write_manifest(out_dir, "link", config, ["linked.csv"])
    return ["linked.csv"]


def load_cohort(config, in_dir):
    """Cohort as later stages see it: observed linked values only."""
    art.load_manifest(in_dir, "link", config)
    records = cohort_io.read_cohort_csv(art.require_file(in_dir, "cohort.csv"))
    dictionary = cohort_io.read_feature_dictionary(
        art.require_file(in_dir, "feature_dictionary.txt")
    )
    values, missing = cohort_io.read_linked_csv(art.require_file(in_dir, "linked.csv"))
    return Cohort(
        records=records,
        feature_dictionary=dictionary,
        linked_contextual=values,
        contextual_missing=missing,
    )


# -------------------------------------------------------------- preprocess


def run_preprocess(config, out_dir, in_dir):
    cohort = load_cohort(config, in_dir)
    pp = config["preprocess"]
    assignment = split(
        cohort,
        pp["cutoff_year"],
        ratios=tuple(pp["ratios"]),
        seed=config.stage_seed("preprocess"),
    )
    table = tabulate(cohort)
    train_table = table.select(assignment.indices(table.patient_ids, "train"))
    _, state = fit_preprocess(train_table)
    os.makedirs(out_dir, exist_ok=True)
    art.write_table(
        os.path.join(out_dir, "split.csv"),
        ["patient_id", "partition"],
        sorted(assignment.partition.items()),
    )
    write_preprocess_state(state, os.path.join(out_dir, "preprocess_state.txt"))
    sizes = {name: len(assignment.members(name)) for name in PARTITIONS}
    art.write_manifest(
        out_dir,
        "preprocess",
        config,
        ["split.csv", "preprocess_state.txt"],
        extra={"partition_sizes": sizes},
    )
    return ["split.csv", "preprocess_state.txt"]


class StageData:
    """Everything downstream stages rebuild from persisted artifacts."""

    def __init__(self, cohort, table, assignment, state, matrices):
        self.cohort = cohort
        self.table = table
        self.assignment = assignment
        self.state = state
        self.matrices = matrices

    def raw_partition(self, name):
        idx = self.assignment.indices(self.table.patient_ids, name)
        return self.table.select(idx)


def load_stage_data(config, in_dir):
    cohort = load_cohort(config, in_dir)
    art.load_manifest(in_dir, "preprocess", config)
    _, rows = art.read_table(art.require_file(in_dir, "split.csv"))
    partition = {int(pid): part for pid, part in rows}
    assignment = SplitAssignment(
        partition=partition, cutoff_year=config["preprocess"]["cutoff_year"]
    )
    state = read_preprocess_state(art.require_file(in_dir, "preprocess_state.txt"))
    table = tabulate(cohort)
    matrices = {}
    for name in PARTITIONS:
        idx = assignment.indices(table.patient_ids, name)
        matrices[name] = apply_preprocess(table.select(idx), state)
    return StageData(cohort, table, assignment, state, matrices)


def select_feature_set(matrix, feature_set):
    """Column subset by declared level; combined keeps everything."""
    if feature_set == "combined":
        return matrix
    keep = [j for j, col in enumerate(matrix.columns) if col.level == feature_set]
    if not keep:
        raise StageError(f"feature set {feature_set!r} selects no columns")
    from dataclasses import replace

    return replace(
        matrix,
        values=matrix.values[:, keep],
        columns=tuple(matrix.columns[j] for j in keep),
    )


# ------------------------------------------------------------------ sample


def run_sample(config, out_dir, in_dir):
    data = load_stage_data(config, in_dir)
    train = data.matrices["train"]
    raw_train = data.raw_partition("train")
    plan = SamplingPlan(
        method=config["sample"]["method"],
        seed=config.stage_seed("sample"),
        match_ratio=config["sample"]["match_ratio"],
    )
    cci = np.array([float(v) for v in raw_train.data["cci"]])
    indices = resample(train.labels, plan, patient_ids=train.patient_ids, cci=cci)
    os.makedirs(out_dir, exist_ok=True)
    write_sampling_audit(
        indices, train.labels, train.patient_ids, os.path.join(out_dir, "sampled_rows.csv")
    )
    art.write_manifest(
        out_dir,
        "sample",
        config,
        ["sampled_rows.csv"],
        extra={
            "method": plan.method,
            "rows_in": int(train.labels.shape[0]),
            "rows_out": int(len(indices)),
        },
    )
    return ["sampled_rows.csv"]


def load_sampled_rows(config, in_dir):
    art.load_manifest(in_dir, "sample", config)
    _, rows = art.read_table(art.require_file(in_dir, "sampled_rows.csv"))
    return np.array([int(r[0]) for r in rows], dtype=np.int64)


# ------------------------------------------------------------------- train


def _linear_grid(section):
    return [
        {"family": "linear", "l1": a, "l2": b}
        for a in section["l1"]
        for b in section["l2"]
    ]


def _gbdt_grid(section):
    return [
        {
            "family": "gbdt",
            "max_depth": depth,
            "learning_rate": lr,
            "reg_lambda": lam,
            "gamma": section["gamma"],
            "min_child_weight": section["min_child_weight"],
            "subsample": section["subsample"],
            "colsample": section["colsample"],
            "max_rounds": section["max_rounds"],
            "early_stopping_patience": section["early_stopping_patience"],
        }
        for depth in section["max_depth"]
        for lr in section["learning_rate"]
        for lam in section["reg_lambda"]
    ]


def _cv_payload(selection):
    return {
        "best_params": selection.best_params,
        "selection_rule": selection.selection_rule,
        "results": [
            {
                "params": r.params,
                "fold_aucs": r.fold_aucs,
                "mean_auc": r.mean_auc,
                "rounds": r.rounds,
            }
            for r in selection.results
        ],
    }


def train_models(config, data, sampled_rows):
    """Grid CV per family on the resampled training rows, then final fits.

    Returns (linear model, gbdt model, cv payload dict). Split out from
    run_train so feature-set comparison can reuse the exact protocol.
    """
    tr = config["train"]
    fs = tr["feature_set"]
    train_m = select_feature_set(data.matrices["train"], fs)
    val_m = select_feature_set(data.matrices["validation"], fs)
    names = [c.name for c in train_m.columns]
    xs = train_m.values[sampled_rows]
    ys = train_m.labels[sampled_rows]
    seed = config.stage_seed("train")

    cv_linear = grid_search_cv(xs, ys, _linear_grid(tr["linear"]), k=tr["cv_folds"], seed=seed)
    cv_gbdt = grid_search_cv(xs, ys, _gbdt_grid(tr["gbdt"]), k=tr["cv_folds"], seed=seed)

    best_lin = cv_linear.best_params
    linear = fit_penalized_logistic(
        xs, ys, l1=best_lin["l1"], l2=best_lin["l2"], feature_names=names
    )
    best_gb = {k: v for k, v in cv_gbdt.best_params.items() if k != "family"}
    gbdt = fit_gbdt(
        xs,
        ys,
        GBDTParams(seed=seed, **best_gb),
        validation=(val_m.values, val_m.labels),
        feature_names=names,
    )
    payload = {"feature_set": fs, "linear": _cv_payload(cv_linear), "gbdt": _cv_payload(cv_gbdt)}
    return linear, gbdt, payload


def run_train(config, out_dir, in_dir):
    data = load_stage_data(config, in_dir)
    sampled = load_sampled_rows(config, in_dir)
    linear, gbdt, payload = train_models(config, data, sampled)
    os.makedirs(out_dir, exist_ok=True)
    save_model(linear, os.path.join(out_dir, "model_linear.json"))
    save_model(gbdt, os.path.join(out_dir, "model_gbdt.json"))
    with open(os.path.join(out_dir, "cv_results.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files = ["model_linear.json", "model_gbdt.json", "cv_results.json"]
    art.write_manifest(
        out_dir,
        "train",
        config,
        files,
        extra={
            "feature_set": payload["feature_set"],
            "best_linear": payload["linear"]["best_params"],
            "best_gbdt": payload["gbdt"]["best_params"],
        },
    )
    return files


def load_models(config, in_dir):
    art.load_manifest(in_dir, "train", config)
    return {
        "linear": load_model(art.require_file(in_dir, "model_linear.json")),
        "gbdt": load_model(art.require_file(in_dir, "model_gbdt.json")),
    }


def load_best_params(config, in_dir):
    manifest = art.load_manifest(in_dir, "train", config)
    extra = manifest.get("extra", {})
    return extra["best_linear"], extra["best_gbdt"]


# ---------------------------------------------------------------- evaluate


def _model_threshold(config, scores_train, prevalence):
    fixed = config["evaluate"]["threshold"]
    if fixed is not None:
        return float(fixed)
    return default_threshold(scores_train, prevalence)


def run_evaluate(config, out_dir, in_dir):
    data = load_stage_data(config, in_dir)
    models = load_models(config, in_dir)
    fs = config["train"]["feature_set"]
    matrices = {name: select_feature_set(data.matrices[name], fs) for name in PARTITIONS}
    prevalence = float(data.matrices["train"].labels.mean())

    scores = {
        name: {part: models[name].predict_proba(matrices[part].values) for part in PARTITIONS}
        for name in MODEL_FAMILIES
    }
    thresholds = {
        name: _model_threshold(config, scores[name]["train"], prevalence)
        for name in MODEL_FAMILIES
    }

    metric_rows = []
    reports = {}
    for name in MODEL_FAMILIES:
        for part in PARTITIONS:
            rep = threshold_metrics(
                scores[name][part], matrices[part].labels, thresholds[name]
            )
            reports[(name, part)] = rep
            metric_rows.append(
                [
                    name,
                    part,
                    rep.n,
                    rep.positives,
                    _repr_float(rep.auroc),
                    _repr_float(rep.sensitivity),
                    _repr_float(rep.specificity),
                    _repr_float(rep.precision),
                    _repr_float(rep.npv),
                    _repr_float(rep.f1),
                    _repr_float(rep.accuracy),
                    _repr_float(rep.threshold),
                    rep.tp,
                    rep.fp,
                    rep.tn,
                    rep.fn,
                ]
            )

    # Primary model: best test AUROC, ties to the linear model.
    primary = max(MODEL_FAMILIES, key=lambda m: (reports[(m, "test")].auroc, m == "linear"))

    test_m = matrices["test"]
    raw_test = data.raw_partition("test")
    table = risk_groups(scores[primary]["test"], test_m.labels, test_m.patient_ids)
    group_rows = []
    for g in range(len(table.sizes)):
        lower = "" if g == 0 else _repr_float(table.boundaries[g - 1])
        group_rows.append(
            [
                g + 1,
                int(table.sizes[g]),
                int(table.events[g]),
                _repr_float(table.event_rates[g]),
                lower,
            ]
        )

    age = np.array([float(v) for v in raw_test.data["age"]])
    cci = np.array([float(v) for v in raw_test.data["cci"]])
    sex_female = np.array([v == "female" for v in raw_test.data["sex"]], dtype=float)
    race = raw_test.groups
    outcomes = test_m.labels
    reference = config["fairness"]["privileged_group"]
    aor = adjusted_or_per_group(
        table.group, age, sex_female, race, cci, outcomes, reference_race=reference
    )
    base_cols = [age, sex_female]
    for level in sorted({r for r in race.tolist() if r != reference}):
        base_cols.append((race == level).astype(float))
    base_cols.append(cci)
    base = np.column_stack(base_cols)
    full_design = np.column_stack([table.group.astype(float)] + base_cols)
    r2_full = mcfadden_r2(outcomes, full_design)
    explained = explained_risk_fraction(outcomes, base, table.group)

    score_rows = []
    for part in PARTITIONS:
        pids = matrices[part].patient_ids
        for i, pid in enumerate(pids):
            score_rows.append(
                [
                    part,
                    int(pid),
                    _repr_float(scores["linear"][part][i]),
                    _repr_float(scores["gbdt"][part][i]),
                ]
            )

    scalars = [
        ("prevalence_train", _repr_float(prevalence)),
        ("threshold_linear", _repr_float(thresholds["linear"])),
        ("threshold_gbdt", _repr_float(thresholds["gbdt"])),
        ("primary_model", primary),
        ("rate_ratio_top_bottom", _repr_float(table.rate_ratio_top_bottom())),
        ("adjusted_or_per_group", _repr_float(aor.odds_ratio)),
        ("adjusted_or_ci_low", _repr_float(aor.ci_low)),
        ("adjusted_or_ci_high", _repr_float(aor.ci_high)),
        ("adjusted_or_formatted", aor.formatted),
        ("mcfadden_r2_full", _repr_float(r2_full)),
        ("explained_risk_fraction", _repr_float(explained)),
    ]

    os.makedirs(out_dir, exist_ok=True)
    art.write_table(
        os.path.join(out_dir, "metrics.csv"),
        [
            "model",
            "partition",
            "n",
            "positives",
            "auroc",
            "sensitivity",
            "specificity",
            "precision",
            "npv",
            "f1",
            "accuracy",
            "threshold",
            "tp",
            "fp",
            "tn",
            "fn",
        ],
        metric_rows,
    )
    art.write_table(
        os.path.join(out_dir, "risk_groups.csv"),
        ["group", "size", "events", "event_rate", "lower_boundary"],
        group_rows,
    )
    art.write_table(
        os.path.join(out_dir, "scores.csv"),
        ["partition", "patient_id", "linear", "gbdt"],
        score_rows,
    )
    art.write_table(os.path.join(out_dir, "scalars.csv"), ["name", "value"], scalars)
    files = ["metrics.csv", "risk_groups.csv", "scores.csv", "scalars.csv"]
    art.write_manifest(out_dir, "evaluate", config, files, extra={"primary_model": primary})
    return files


def load_scores(config, in_dir, partition, model):
    """Persisted probability scores for one partition of one model."""
    art.load_manifest(in_dir, "evaluate", config)
    header, rows = art.read_table(art.require_file(in_dir, "scores.csv"))
    col = header.index(model)
    out = [(int(r[1]), float(r[col])) for r in rows if r[0] == partition]
    pids = np.array([p for p, _ in out], dtype=np.int64)
    return pids, np.array([s for _, s in out])


def load_scalars(config, in_dir):
    art.load_manifest(in_dir, "evaluate", config)
    _, rows = art.read_table(art.require_file(in_dir, "scalars.csv"))
    return dict(rows)


# ----------------------------------------------------------------- explain


def default_combinations(columns):
    """One combination per source feature that encodes to several columns."""
    by_source = {}
    for col in columns:
        by_source.setdefault(col.source_feature, []).append(col.name)
    return [
        (source, members)
        for source, members in sorted(by_source.items())
        if len(members) >= 2
    ]


def run_explain(config, out_dir, in_dir):
    data = load_stage_data(config, in_dir)
    models = load_models(config, in_dir)
    ex = config["explain"]
    fs = config["train"]["feature_set"]
    train_m = select_feature_set(data.matrices["train"], fs)
    test_m = select_feature_set(data.matrices["test"], fs)
    seed = config.stage_seed("explain")

    x = test_m.values
    if x.shape[0] > ex["max_rows"]:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(x.shape[0], size=ex["max_rows"], replace=False))
        x = x[keep]
    size = min(ex["background_size"], train_m.values.shape[0])
    background = choose_background(train_m.values, size=size, seed=seed)

    if ex["model"] == "linear":
        attr = shap_linear(models["linear"], x, background)
    else:
        attr = shap_tree(models["gbdt"], x, background)

    ranked = rank_features(attr)
    rank_rows = [
        [i + 1, name, _repr_float(score)] for i, (name, score) in enumerate(ranked)
    ]

    if ex["combinations"] is not None:
        combos = [(f"combo_{i + 1}", members) for i, members in enumerate(ex["combinations"])]
    else:
        combos = default_combinations(test_m.columns)
    combo_rows = []
    if combos:
        labels = {tuple(members): label for label, members in combos}
        scored = combination_attribution(attr, [members for _, members in combos])
        combo_rows = [
            [
                labels[c.members],
                _repr_float(c.mean_abs),
                _repr_float(c.mean_score),
                ";".join(c.members),
            ]
            for c in scored
        ]

    os.makedirs(out_dir, exist_ok=True)
    art.write_table(
        os.path.join(out_dir, "shap_rank.csv"), ["rank", "feature", "mean_abs"], rank_rows
    )
    art.write_table(
        os.path.join(out_dir, "combos.csv"),
        ["combination", "mean_abs", "mean_signed", "members"],
        combo_rows,
    )
    files = ["shap_rank.csv", "combos.csv"]
    art.write_manifest(
        out_dir,
        "explain",
        config,
        files,
        extra={
            "model": ex["model"],
            "rows_explained": int(x.shape[0]),
            "base_value": _repr_float(attr.base_value),
        },
    )
    return files


def load_shap_ranking(config, in_dir):
    art.load_manifest(in_dir, "explain", config)
    _, rows = art.read_table(art.require_file(in_dir, "shap_rank.csv"))
    return [r[1] for r in rows]


# ------------------------------------------------------------------ causal


def representative_columns(matrix):
    """One encoded column per source feature: the largest train variance,
    ties to the smaller column name. Constant sources are dropped since a
    partial correlation on them is undefined."""
    by_source = {}
    for j, col in enumerate(matrix.columns):
        by_source.setdefault(col.source_feature, []).append(j)
    reps = []
    for source in sorted(by_source):
        best = min(
            by_source[source],
            key=lambda j: (-float(matrix.values[:, j].var()), matrix.columns[j].name),
        )
        if float(matrix.values[:, best].var()) > 0.0:
            reps.append((source, best))
    return reps


def run_causal(config, out_dir, in_dir):
    data = load_stage_data(config, in_dir)
    ca = config["causal"]
    train_m = data.matrices["train"]
    reps = representative_columns(train_m)
    names = [source for source, _ in reps] + ["outcome"]
    cols = [train_m.values[:, j] for _, j in reps] + [train_m.labels.astype(np.float64)]
    table = np.column_stack(cols)

    candidates = mgm_prefilter(table, names, penalty=ca["prefilter_penalty"])
    result = pc_stable(
        table,
        names,
        alpha=ca["alpha"],
        candidate_edges=candidates,
        max_cond=ca["max_cond"],
        sink_node="outcome" if ca["outcome_sink"] else None,
    )

    edge_rows = [["directed", a, b] for a, b in sorted(result.graph.directed)]
    edge_rows += [
        ["undirected", a, b] for a, b in sorted(tuple(sorted(e)) for e in result.graph.undirected)
    ]

    # Outcome-adjacent sources ranked by outcome correlation strength.
    outcome_y = train_m.labels.astype(np.float64)
    strength = {}
    for source, j in reps:
        if result.graph.adjacent(source, "outcome"):
            c = np.corrcoef(train_m.values[:, j], outcome_y)[0, 1]
            strength[source] = abs(float(c))
    causal_ranking = sorted(strength, key=lambda s: (-strength[s], s))

    shap_ranking = load_shap_ranking(config, in_dir)
    source_of = {col.name: col.source_feature for col in train_m.columns}
    selected = select_causal_features(
        shap_ranking, causal_ranking, top_k=ca["top_k"], source_of=source_of
    )

    os.makedirs(out_dir, exist_ok=True)
    art.write_table(
        os.path.join(out_dir, "causal_edges.csv"), ["kind", "from", "to"], edge_rows
    )
    with open(os.path.join(out_dir, "selected_features.txt"), "w", encoding="utf-8") as fh:
        for name in selected:
            fh.write(name + "\n")
    files = ["causal_edges.csv", "selected_features.txt"]
    art.write_manifest(
        out_dir,
        "causal",
        config,
        files,
        extra={
            "n_ci_tests": result.n_ci_tests,
            "n_candidate_edges": len(candidates),
            "outcome_adjacent": causal_ranking,
        },
    )
    return files


# ---------------------------------------------------------------- fairness


def _fairness_config(config):
    fa = config["fairness"]
    return FairnessConfig(
        protected_groups=tuple(fa["protected_groups"]),
        privileged_group=fa["privileged_group"],
    )


def _fairness_rows(model, when, rows):
    # A blank field stands for an undefined rate (zero denominator); the
    # verdict column already says "undefined" in that case.
    blank_or = lambda v: "" if v is None else _repr_float(v)
    out = []
    for row in rows:
        for comp in row.components:
            out.append(
                [
                    model,
                    when,
                    row.metric,
                    row.protected_group,
                    comp.component,
                    blank_or(comp.protected),
                    blank_or(comp.privileged),
                    blank_or(comp.ratio),
                    comp.verdict,
                    row.verdict,
                ]
            )
    return out


def run_fairness(config, out_dir, in_dir):
    data = load_stage_data(config, in_dir)
    scalars = load_scalars(config, in_dir)
    fconfig = _fairness_config(config)
    test_m = data.matrices["test"]
    labels = test_m.labels
    groups = test_m.groups

    rows = []
    curve_rows = []
    for name in MODEL_FAMILIES:
        pids, scores = load_scores(config, in_dir, "test", name)
        if not np.array_equal(pids, test_m.patient_ids):
            raise StageError(
                "scores.csv patient order does not match the test partition; "
                "re-run the evaluate stage"
            )
        threshold = float(scalars[f"threshold_{name}"])
        preds = (scores >= threshold).astype(np.int64)
        confusions = group_confusions(labels, preds, groups)
        rows.extend(_fairness_rows(name, "unmitigated", fairness_metrics(confusions, fconfig)))

        curves = fnr_curve(scores, labels, groups, np.array(FNR_CURVE_THRESHOLDS))
        for group in sorted(curves, key=str):
            for t, v in zip(FNR_CURVE_THRESHOLDS, curves[group]):
                curve_rows.append([name, group, _repr_float(t), _repr_float(v)])

    os.makedirs(out_dir, exist_ok=True)
    art.write_table(
        os.path.join(out_dir, "fairness.csv"),
        [
            "model",
            "when",
            "metric",
            "protected_group",
            "component",
            "protected_value",
            "privileged_value",
            "ratio",
            "verdict",
            "metric_verdict",
        ],
        rows,
    )
    art.write_table(
        os.path.join(out_dir, "fnr_curve.csv"),
        ["model", "group", "threshold", "fnr"],
        curve_rows,
    )
    files = ["fairness.csv", "fnr_curve.csv"]
    art.write_manifest(out_dir, "fairness", config, files)
    return files


# ---------------------------------------------------------------- mitigate


def _retrain_linear(config, xs, ys, best_params, names):
    return fit_penalized_logistic(
        xs, ys, l1=best_params["l1"], l2=best_params["l2"], feature_names=names
    )


def _retrain_gbdt(config, xs, ys, best_params, validation, names):
    kwargs = {k: v for k, v in best_params.items() if k != "family"}
    return fit_gbdt(
        xs,
        ys,
        GBDTParams(seed=config.stage_seed("train"), **kwargs),
        validation=validation,
        feature_names=names,
    )


def run_mitigate(config, out_dir, in_dir):
    data = load_stage_data(config, in_dir)
    scalars = load_scalars(config, in_dir)
    sampled = load_sampled_rows(config, in_dir)
    best_linear, best_gbdt = load_best_params(config, in_dir)
    mi = config["mitigate"]
    fconfig = _fairness_config(config)
    fs = config["train"]["feature_set"]
    model_name = mi["model"]
    method = mi["method"]
    prevalence = float(data.matrices["train"].labels.mean())

    train_m = select_feature_set(data.matrices["train"], fs)
    val_m = select_feature_set(data.matrices["validation"], fs)
    test_m = select_feature_set(data.matrices["test"], fs)
    names = [c.name for c in train_m.columns]

    _, scores_before = load_scores(config, in_dir, "test", model_name)
    threshold_before = float(scalars[f"threshold_{model_name}"])
    labels = test_m.labels
    groups = test_m.groups
    extra = {"method": method, "model": model_name}

    if method == "dir":
        level = mi["repair_level"]
        rep_train = mitigate_dir(train_m, train_m.groups, level)
        rep_val = mitigate_dir(val_m, val_m.groups, level)
        rep_test = mitigate_dir(test_m, test_m.groups, level)
        xs, ys = rep_train.values[sampled], rep_train.labels[sampled]
        if model_name == "linear":
            model = _retrain_linear(config, xs, ys, best_linear, names)
        else:
            model = _retrain_gbdt(
                config, xs, ys, best_gbdt, (rep_val.values, rep_val.labels), names
            )
        scores_after = model.predict_proba(rep_test.values)
        train_scores = model.predict_proba(rep_train.values)
        threshold_after = _model_threshold(config, train_scores, prevalence)
    elif method == "adversarial":
        protected_set = set(fconfig.protected_groups)
        prot_train = np.isin(train_m.groups, list(protected_set)).astype(float)
        result = mitigate_adversarial(
            train_m.values[sampled],
            train_m.labels[sampled].astype(float),
            prot_train[sampled],
            adversary_weight=mi["adversary_weight"],
            steps=mi["steps"],
            adversary_sees_label=mi["adversary_sees_label"],
            seed=config.stage_seed("mitigate"),
        )
        model = result.model
        scores_after = model.predict_proba(test_m.values)
        train_scores = model.predict_proba(train_m.values)
        threshold_after = _model_threshold(config, train_scores, prevalence)
        extra["final_pred_loss"] = result.final_pred_loss
        extra["final_adv_loss"] = result.final_adv_loss
    else:
        # Calibrated equalized odds mixes scores for exactly two groups;
        # the comparison runs on the privileged group plus one protected
        # group and leaves other rows out of the summary.
        chosen = mi["protected_group"] or fconfig.protected_groups[0]
        if chosen not in fconfig.protected_groups:
            raise StageError(
                f"mitigate.protected_group {chosen!r} is not in fairness.protected_groups"
            )
        mask = np.isin(groups, [chosen, fconfig.privileged_group])
        if not mask.any():
            raise StageError("no test rows belong to the two calibrated-EO groups")
        labels = labels[mask]
        groups = groups[mask]
        scores_before = scores_before[mask]
        result = mitigate_calibrated_eo(
            scores_before,
            labels,
            groups,
            cost="fnr",
            seed=config.stage_seed("mitigate"),
        )
        scores_after = result.scores
        threshold_after = threshold_before
        fconfig = FairnessConfig(
            protected_groups=(chosen,), privileged_group=fconfig.privileged_group
        )
        extra["mixing_rate"] = _repr_float(result.mixing)
        extra["mixed_group"] = str(result.mixed_group)
        extra["gfnr_before"] = {str(k): _repr_float(v) for k, v in result.gfnr_before.items()}

    summary = summarize_mitigation(
        method,
        labels,
        groups,
        scores_before,
        scores_after,
        threshold_before,
        threshold_after,
        fconfig,
    )

    rows = _fairness_rows(model_name, "before", summary.rows_before)
    rows += _fairness_rows(model_name, "after", summary.rows_after)
    scalar_rows = [
        ("method", method),
        ("model", model_name),
        ("threshold_before", _repr_float(threshold_before)),
        ("threshold_after", _repr_float(threshold_after)),
        ("auroc_before", _repr_float(summary.auroc_before)),
        ("auroc_after", _repr_float(summary.auroc_after)),
    ]
    for group in fconfig.protected_groups:
        for when in ("before", "after"):
            ratio = summary.fnr_ratio(group, when)
            scalar_rows.append(
                (f"fnr_ratio_{when}_{group}", "" if ratio is None else _repr_float(ratio))
            )

    os.makedirs(out_dir, exist_ok=True)
    art.write_table(
        os.path.join(out_dir, "mitigation.csv"),
        [
            "model",
            "when",
            "metric",
            "protected_group",
            "component",
            "protected_value",
            "privileged_value",
            "ratio",
            "verdict",
            "metric_verdict",
        ],
        rows,
    )
    art.write_table(
        os.path.join(out_dir, "mitigation_scalars.csv"), ["name", "value"], scalar_rows
    )
    files = ["mitigation.csv", "mitigation_scalars.csv"]
    art.write_manifest(out_dir, "mitigate", config, files, extra=extra)
    return files


# ---------------------------------------------- feature-set comparison


def compare_feature_sets(config, out_dir, in_dir):
    """Six AUROCs: each model family trained on each feature set.

    The split, the sampled rows, the folds, and every seed are shared
    across the six cells, so the numbers differ only in the columns the
    models were allowed to see.
    """
    data = load_stage_data(config, in_dir)
    sampled = load_sampled_rows(config, in_dir)
    tr = config["train"]
    seed = config.stage_seed("train")
    rows = []
    aurocs = {}
    for fs in ("individual", "contextual", "combined"):
        train_m = select_feature_set(data.matrices["train"], fs)
        val_m = select_feature_set(data.matrices["validation"], fs)
        test_m = select_feature_set(data.matrices["test"], fs)
        names = [c.name for c in train_m.columns]
        xs = train_m.values[sampled]
        ys = train_m.labels[sampled]
        cv_lin = grid_search_cv(xs, ys, _linear_grid(tr["linear"]), k=tr["cv_folds"], seed=seed)
        cv_gb = grid_search_cv(xs, ys, _gbdt_grid(tr["gbdt"]), k=tr["cv_folds"], seed=seed)
        best_lin = cv_lin.best_params
        linear = fit_penalized_logistic(
            xs, ys, l1=best_lin["l1"], l2=best_lin["l2"], feature_names=names
        )
        best_gb = {k: v for k, v in cv_gb.best_params.items() if k != "family"}
        gbdt = fit_gbdt(
            xs,
            ys,
            GBDTParams(seed=seed, **best_gb),
            validation=(val_m.values, val_m.labels),
            feature_names=names,
        )
        for name, model, best in (
            ("linear", linear, best_lin),
            ("gbdt", gbdt, cv_gb.best_params),
        ):
            rep = threshold_metrics(
                model.predict_proba(test_m.values), test_m.labels, 0.5
            )
            aurocs[(fs, name)] = rep.auroc
            params = ";".join(
                f"{k}={best[k]}" for k in sorted(best) if k != "family"
            )
            rows.append([fs, name, _repr_float(rep.auroc), len(names), params])

    os.makedirs(out_dir, exist_ok=True)
    art.write_table(
        os.path.join(out_dir, "feature_sets.csv"),
        ["feature_set", "model", "auroc_test", "n_columns", "best_params"],
        rows,
    )
    art.write_manifest(
        out_dir, "feature_sets", config, ["feature_sets.csv"], hash_stage="train"
    )
    return aurocs
