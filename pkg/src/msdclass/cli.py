"""Command-line interface.

Output directory layout::

    features.csv   errors.log   report.json   report.md   models/<scheme>.model

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 solver
convergence error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from msdclass import __version__
from msdclass.classifiers import SCHEMES, load_composite, save_composite, train_scheme
from msdclass.config import Config, load_config, parse_set_args
from msdclass.dataset import load_manifest, preprocess
from msdclass.errors import ConfigError, ConvergenceError, DataError, MsdError
from msdclass.evaluation import (GridSpec, PerceptualResult, load_judge_responses, nested_tune,
                                 perceptual_metrics, run_experiment, synth_cohort)
from msdclass.features import FeatureMatrix, extract_features, read_feature_csv, write_feature_csv
from msdclass.labels import ClassLabel
from msdclass.reporting import comparison_table, dumps, render_markdown, report_dict

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3, 4


class UsageError(MsdError):
    pass


def _config(args) -> Config:
    overrides = parse_set_args(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["evaluation.seed"] = str(args.seed)
    return load_config(args.config, overrides)


def _extract_one(job):
    entry, cfg = job
    try:
        w = preprocess(entry, cfg.dsp.sample_rate, cfg.dsp.resample_kaiser_beta)
        return entry, extract_features(w, cfg, entry.recording_id).values, None
    except MsdError as exc:
        msg = str(exc)
        if not msg.startswith(entry.recording_id):
            msg = f"{entry.recording_id}: {msg}"
        return entry, None, msg


def cmd_extract(args) -> int:
    cfg = _config(args)
    entries = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(e, cfg) for e in entries]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_one, jobs))
    else:
        results = [_extract_one(j) for j in jobs]
    ok = [(e, v) for e, v, err in results if err is None]
    errors = [err for _, _, err in results if err is not None]
    fm = FeatureMatrix([e.recording_id for e, _ in ok], [e.label for e, _ in ok],
                       np.array([v for _, v in ok]).reshape(len(ok), -1) if ok else np.zeros((0, 28)))
    write_feature_csv(out / "features.csv", fm)
    (out / "errors.log").write_text("".join(f"{e}\n" for e in errors), encoding="utf-8")
    print(f"extracted {len(ok)} of {len(entries)} recordings -> {out / 'features.csv'}")
    if errors:
        print(f"{len(errors)} extraction failure(s), see {out / 'errors.log'}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _schemes(args, cfg: Config) -> tuple[str, ...]:
    if args.schemes is None:
        schemes = cfg.evaluation.schemes
    else:
        schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    if not schemes:
        raise UsageError("no schemes requested")
    bad = [s for s in schemes if s not in SCHEMES]
    if bad:
        raise UsageError(f"unknown scheme(s) {', '.join(bad)}; choose from {', '.join(SCHEMES)}")
    return schemes


def _final_models(fm: FeatureMatrix, schemes, cfg: Config, out: Path) -> None:
    models = out / "models"
    models.mkdir(parents=True, exist_ok=True)
    grid = GridSpec.from_config(cfg.evaluation)
    for s in schemes:
        hps = nested_tune(fm.values, fm.label_array, grid, s, cfg, cfg.evaluation.seed)
        model = train_scheme(s, fm.values, fm.label_array, hps, cfg, fm.names)
        (models / f"{s}.model").write_bytes(save_composite(model))


def _write_report(d: dict, out: Path, automatic_scheme: str = "hierarchical") -> None:
    (out / "report.json").write_bytes(dumps(d))
    (out / "report.md").write_text(render_markdown(d, automatic_scheme), encoding="utf-8")


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    schemes = _schemes(args, cfg)
    fm = read_feature_csv(args.features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_experiment(fm, cfg, schemes, jobs=args.jobs)
    d = report_dict(report)
    _write_report(d, out)
    if not args.no_models:
        _final_models(fm, schemes, cfg, out)
    for s in schemes:
        b = d["schemes"][s]["summary"]["balanced"]
        print(f"{s:<20} balanced accuracy {100 * b['mean']:.1f} ± {100 * b['std']:.1f} %")
    return EXIT_OK


def _truths(args) -> dict[str, ClassLabel]:
    if args.features:
        fm = read_feature_csv(args.features)
        return dict(zip(fm.ids, fm.labels))
    if args.manifest:
        return {e.recording_id: e.label for e in load_manifest(args.manifest)}
    raise UsageError("perceptual needs --features or --manifest for the true labels")


def cmd_perceptual(args) -> int:
    cfg = _config(args)
    truths = _truths(args)
    responses = load_judge_responses(args.judges, known_ids=truths)
    perceptual: PerceptualResult = perceptual_metrics(responses, truths)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.report:
        try:
            d = json.loads(Path(args.report).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read report {args.report}: {exc}") from exc
    elif args.features:
        report = run_experiment(read_feature_csv(args.features), cfg, (args.scheme,), jobs=args.jobs)
        d = report_dict(report)
    else:
        raise UsageError("perceptual needs --report or --features to obtain automatic results")
    if args.scheme not in d.get("schemes", {}):
        raise UsageError(f"report has no results for scheme {args.scheme!r}")
    d["perceptual"] = perceptual.as_dict()
    _write_report(d, out, args.scheme)
    auto = d["schemes"][args.scheme]["summary"]
    print(comparison_table(auto, d["perceptual"]["summary"]))
    return EXIT_OK


def cmd_synth(args) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(","))
    if len(sizes) == 1:
        sizes = sizes * 3
    try:
        fm = synth_cohort(args.seed, sizes, args.separation)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_feature_csv(args.out, fm)
    print(f"wrote {len(fm)} synthetic recordings -> {args.out}")
    return EXIT_OK


def cmd_inspect_model(args) -> int:
    try:
        data = Path(args.model).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model {args.model}: {exc}") from exc
    m = load_composite(data)
    summary = {"scheme": m.scheme, "feature_selection": m.feature_selection,
               "stage1_tie_to_patient": m.stage1_tie_to_patient, "members": []}
    for st, mm in zip(m.subtasks, m.members):
        names = mm.feature_names
        summary["members"].append({
            "subtask": st.name, "class_map": mm.class_map,
            "C": mm.params.C, "gamma": mm.params.gamma, "n_f": mm.params.n_f,
            "features": [names[i] if names else i for i in mm.feature_indices],
            "n_support_vectors": int(len(mm.dual_coefs)), "bias": mm.bias,
        })
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msdclass", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=False):
        sp.add_argument("--config", help="JSON config file (nested or dotted keys)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        if seed:
            sp.add_argument("--seed", type=int, help="override evaluation.seed")

    sp = sub.add_parser("extract", help="manifest + audio -> features.csv")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    common(sp)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("evaluate", help="repeated nested cross-validation on a feature CSV")
    sp.add_argument("--features", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--schemes", help=f"comma-separated subset of {','.join(SCHEMES)}")
    sp.add_argument("--no-models", action="store_true", help="skip training final models on all data")
    common(sp, seed=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("perceptual", help="compare judge responses with automatic results")
    sp.add_argument("--judges", required=True, help="CSV judge_id,recording_id,stage1,stage2")
    sp.add_argument("--features", help="feature CSV (labels, and automatic results if --report is absent)")
    sp.add_argument("--manifest", help="manifest providing the true labels")
    sp.add_argument("--report", help="existing report.json with automatic results")
    sp.add_argument("--scheme", default="hierarchical")
    sp.add_argument("--out", required=True)
    common(sp, seed=True)
    sp.set_defaults(func=cmd_perceptual)

    sp = sub.add_parser("synth", help="write a synthetic feature CSV")
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sizes", default="29,20,10", help="neurotypical,dysarthria,aos counts")
    sp.add_argument("--separation", type=float, default=8.0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("inspect-model", help="print a saved model's structure")
    sp.add_argument("model")
    sp.set_defaults(func=cmd_inspect_model)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
