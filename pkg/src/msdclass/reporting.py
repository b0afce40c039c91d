"""Machine-readable and rendered evaluation reports."""

from __future__ import annotations

import json
from collections import Counter

from msdclass.evaluation import METRICS, EvaluationReport

ROW_TITLES = {
    "balanced": "Acc Balanced",
    "neurotypical": "Acc Neurotypical",
    "patient": "Acc Patient",
    "dysarthria": "Acc Dysarthria",
    "aos": "Acc AoS",
}

SCHEME_TITLES = {
    "hierarchical": "Hierarchical with feature selection",
    "hierarchical-no-fs": "Hierarchical without feature selection",
    "ovo": "OvO",
    "ovr": "OvR",
    "ovo-no-fs": "OvO without feature selection",
    "ovr-no-fs": "OvR without feature selection",
}


def conventions(config: dict) -> dict:
    """Analysis choices not fixed by the original study, surfaced for auditing."""
    return {
        "class_weighting": config.get("svm.class_weighting"),
        "feature_standardization": "z-score fitted on training rows of each fold",
        "grid_mode": config.get("evaluation.grid_mode"),
        "hierarchical_tuning": "each stage tuned independently on its binary subtask",
        "metric_pooling": "fold predictions pooled per repetition, then mean/std across repetitions",
        "std": "population (ddof=0)",
        "octave_band_centres_hz": "31.25 * 2**k, k = 0..8",
        "ltas_gate_db": config.get("dsp.ltas_gate_db"),
        "loudness": "smoothed frame RMS in dB; peaks by prominence",
        "stage1_tie": "patient" if config.get("classifiers.stage1_tie_to_patient") else "neurotypical",
    }


def report_dict(report: EvaluationReport) -> dict:
    d = report.as_dict()
    d["conventions"] = conventions(report.config)
    return d


def dumps(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode("utf-8")


def report_json(report: EvaluationReport) -> bytes:
    return dumps(report_dict(report))


def pct(cell: dict) -> str:
    return f"{100 * cell['mean']:.1f} ± {100 * cell['std']:.1f}"


def scheme_table(summaries: dict[str, dict]) -> str:
    """Balanced accuracy of each scheme, one row per scheme."""
    lines = ["| Classification approach | Acc Balanced [%] |", "|---|---:|"]
    for scheme, summary in summaries.items():
        lines.append(f"| {SCHEME_TITLES.get(scheme, scheme)} | {pct(summary['balanced'])} |")
    return "\n".join(lines)


def comparison_rows(automatic: dict, perceptual: dict) -> list[tuple[str, str, str]]:
    """Five rows in fixed order: balanced, neurotypical, patient, dysarthria, AoS."""
    return [(ROW_TITLES[m], pct(automatic[m]), pct(perceptual[m])) for m in METRICS]


def comparison_table(automatic: dict, perceptual: dict) -> str:
    lines = ["| Accuracy [%] | Automatic classification | Perceptual classification |", "|---|---:|---:|"]
    lines += [f"| {a} | {b} | {c} |" for a, b, c in comparison_rows(automatic, perceptual)]
    return "\n".join(lines)


def group_table(summary: dict) -> str:
    lines = ["| Accuracy [%] | mean ± std |", "|---|---:|"]
    lines += [f"| {ROW_TITLES[m]} | {pct(summary[m])} |" for m in METRICS]
    return "\n".join(lines)


def selection_table(d: dict, scheme: str, names: list[str]) -> str:
    """How often each feature entered each member's mask across all outer folds."""
    counts: dict[str, Counter] = {}
    n_folds = 0
    for rep in d["schemes"][scheme]["repetitions"]:
        for fold in rep["folds"]:
            n_folds += 1
            for m in fold["members"]:
                counts.setdefault(m["subtask"], Counter()).update(m["mask"] or [])
    subtasks = list(counts)
    lines = ["| Feature | " + " | ".join(subtasks) + " |", "|---|" + "---:|" * len(subtasks)]
    for i, name in enumerate(names):
        if any(counts[s][i] for s in subtasks):
            lines.append(f"| {name} | " + " | ".join(f"{counts[s][i]}/{n_folds}" for s in subtasks) + " |")
    return "\n".join(lines)


def render_markdown(d: dict, automatic_scheme: str = "hierarchical") -> str:
    tool = d["tool"]
    out = [f"# Evaluation report ({tool['name']} {tool['version']})", ""]
    ds = d["dataset"]
    counts = ", ".join(f"{k} {v}" for k, v in ds["class_counts"].items())
    out += [f"Recordings: {ds['n_recordings']} ({counts}); features: {ds['n_features']}.", ""]
    summaries = {s: r["summary"] for s, r in d["schemes"].items()}
    if summaries:
        reps = next(iter(summaries.values()))["balanced"]["n"]
        out += [f"## Balanced accuracy by scheme ({reps} repetitions)", "", scheme_table(summaries), ""]
    perceptual = d.get("perceptual")
    if perceptual is not None and automatic_scheme in summaries:
        out += ["## Automatic vs perceptual classification", "",
                comparison_table(summaries[automatic_scheme], perceptual["summary"]), ""]
    else:
        for s, summary in summaries.items():
            out += [f"## Group accuracies: {SCHEME_TITLES.get(s, s)}", "", group_table(summary), ""]
        if perceptual is not None:
            out += ["## Perceptual classification", "", group_table(perceptual["summary"]), ""]
    for s in summaries:
        if not s.endswith("-no-fs"):
            out += [f"## Feature selection frequency: {SCHEME_TITLES.get(s, s)}", "",
                    selection_table(d, s, ds["feature_names"]), ""]
    out += ["## Conventions", ""]
    out += [f"- {k}: {v}" for k, v in sorted(d.get("conventions", {}).items())]
    out += ["", "## Effective configuration", "", "```json",
            json.dumps(d["config"], sort_keys=True, indent=2), "```", ""]
    return "\n".join(out)
