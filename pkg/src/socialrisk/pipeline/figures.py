"""Figure rendering for the run report. Headless backend; PNG files only."""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.path.join("figures", os.path.basename(path))


def risk_group_figure(table_rows, path):
    groups = [int(r["group"]) for r in table_rows]
    rates = [float(r["event_rate"]) for r in table_rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(groups, rates, color="#4878a8")
    ax.set_xlabel("risk group (1 = lowest scores)")
    ax.set_ylabel("observed event rate")
    ax.set_title("Event rate by predicted-risk group")
    ax.set_xticks(groups)
    return _finish(fig, path)


def shap_figure(top_rows, path):
    names = [r["feature"] for r in top_rows][::-1]
    scores = [float(r["mean_abs"]) for r in top_rows][::-1]
    fig, ax = plt.subplots(figsize=(7, 0.35 * max(len(names), 6) + 1.2))
    ax.barh(range(len(names)), scores, color="#a85448")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("mean |attribution| (margin scale)")
    ax.set_title("Top feature attributions")
    return _finish(fig, path)


def fnr_curve_figure(curve_rows, path):
    models = sorted({r["model"] for r in curve_rows})
    fig, axes = plt.subplots(1, len(models), figsize=(6 * len(models), 4), squeeze=False)
    for ax, model in zip(axes[0], models):
        rows = [r for r in curve_rows if r["model"] == model]
        for group in sorted({r["group"] for r in rows}):
            pts = [(float(r["threshold"]), float(r["fnr"])) for r in rows if r["group"] == group]
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], label=group)
        ax.set_xlabel("score threshold")
        ax.set_ylabel("miss rate among events")
        ax.set_title(f"Per-group miss rate, {model} model")
        ax.legend(fontsize=8)
    return _finish(fig, path)


def feature_set_figure(rows, path):
    sets = ["individual", "contextual", "combined"]
    models = sorted({r["model"] for r in rows})
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / len(models)
    for k, model in enumerate(models):
        vals = []
        for fs in sets:
            match = [r for r in rows if r["model"] == model and r["feature_set"] == fs]
            vals.append(float(match[0]["auroc_test"]) if match else float("nan"))
        ax.bar([i + k * width for i in range(len(sets))], vals, width=width, label=model)
    ax.set_xticks([i + width * (len(models) - 1) / 2 for i in range(len(sets))])
    ax.set_xticklabels(sets)
    ax.set_ylim(0.4, 1.0)
    ax.axhline(0.5, color="gray", linewidth=0.8, linestyle="--")
    ax.set_ylabel("test AUROC")
    ax.set_title("Discrimination by feature set")
    ax.legend()
    return _finish(fig, path)
