"""Repeated stratified cross-validation with nested tuning, accuracy metrics,
perceptual judgments and synthetic cohorts."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from msdclass import __version__
from msdclass.classifiers import SUBTASKS, Subtask, ThreeClassModel, as_codes, parse_scheme, train_scheme
from msdclass.config import Config, EvaluationConfig
from msdclass.errors import ConvergenceError, DataError, MsdError
from msdclass.features import FEATURE_NAMES, FeatureMatrix
from msdclass.labels import CLASSES, ClassLabel
from msdclass.selection import select_top
from msdclass.svm import HyperParams, balanced_weights, fit_scaler, solve_dual, squared_distances

log = logging.getLogger(__name__)

NEURO, DYS, AOS = 0, 1, 2
METRICS = ("balanced", "neurotypical", "patient", "dysarthria", "aos")


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------

def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Fold index per recording.

    Each class is shuffled with the seeded generator and dealt round-robin;
    the dealing position carries over between classes so fold sizes stay
    within one of each other.
    """
    codes = as_codes(labels)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(codes), dtype=np.int64)
    pos = 0
    for c in np.unique(codes):
        idx = np.flatnonzero(codes == c)
        if len(idx) < k:
            raise DataError(f"class {CLASSES[c].value} has {len(idx)} recordings, fewer than {k} folds")
        idx = rng.permutation(idx)
        folds[idx] = (pos + np.arange(len(idx))) % k
        pos = (pos + len(idx)) % k
    return folds


def _child_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def group_accuracy(predictions, truths, group: ClassLabel | int) -> float:
    """Accurately predicted recordings of ``group`` over its size."""
    p, t = as_codes(predictions), as_codes(truths)
    g = group.order if isinstance(group, ClassLabel) else int(group)
    members = t == g
    if not members.any():
        raise ValueError(f"group {CLASSES[g].value} is empty")
    return float(np.sum(p[members] == g) / members.sum())


def patient_accuracy(predictions, truths) -> float:
    """Share of patients predicted as any patient class, whatever the subtype."""
    p, t = as_codes(predictions), as_codes(truths)
    patients = t != NEURO
    if not patients.any():
        raise ValueError("no patients among the truths")
    return float(np.sum(p[patients] != NEURO) / patients.sum())


def balanced_accuracy(*accs) -> float:
    """Unweighted mean of the neurotypical, dysarthria and AoS accuracies.

    Accepts a GroupAccuracies or the three accuracies directly.
    """
    if len(accs) == 1 and isinstance(accs[0], GroupAccuracies):
        g = accs[0]
        accs = (g.neurotypical, g.dysarthria, g.aos)
    if len(accs) != 3:
        raise ValueError("balanced accuracy needs exactly three group accuracies")
    if any(a is None or np.isnan(a) for a in accs):
        raise ValueError("a group accuracy is undefined")
    return (accs[0] + accs[1] + accs[2]) / 3


@dataclass(frozen=True)
class GroupAccuracies:
    neurotypical: float
    dysarthria: float
    aos: float
    patient: float
    balanced: float
    correct: dict[str, int]
    totals: dict[str, int]

    @classmethod
    def from_predictions(cls, predictions, truths) -> GroupAccuracies:
        p, t = as_codes(predictions), as_codes(truths)
        if len(p) != len(t):
            raise ValueError("predictions and truths differ in length")
        n, d, a = (group_accuracy(p, t, g) for g in (NEURO, DYS, AOS))
        correct = {c.value: int(np.sum((t == c.order) & (p == c.order))) for c in CLASSES}
        totals = {c.value: int(np.sum(t == c.order)) for c in CLASSES}
        correct["patient"] = int(np.sum((t != NEURO) & (p != NEURO)))
        totals["patient"] = int(np.sum(t != NEURO))
        return cls(n, d, a, patient_accuracy(p, t), balanced_accuracy(n, d, a), correct, totals)

    def as_dict(self) -> dict:
        return {"balanced": self.balanced, "neurotypical": self.neurotypical, "patient": self.patient,
                "dysarthria": self.dysarthria, "aos": self.aos,
                "correct": dict(self.correct), "totals": dict(self.totals)}

    @classmethod
    def from_dict(cls, d: dict) -> GroupAccuracies:
        return cls(d["neurotypical"], d["dysarthria"], d["aos"], d["patient"], d["balanced"],
                   dict(d["correct"]), dict(d["totals"]))


def summarize(accs: list[GroupAccuracies]) -> dict[str, dict[str, float]]:
    """Mean and population standard deviation of every metric."""
    out = {}
    for m in METRICS:
        v = np.array([getattr(a, m) for a in accs])
        out[m] = {"mean": float(v.mean()), "std": float(v.std()), "n": len(v)}
    return out


# ---------------------------------------------------------------------------
# Hyperparameter search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    C: tuple[float, ...]
    gamma: tuple[float, ...]
    n_f: tuple[int, ...]

    def __post_init__(self):
        if not (self.C and self.gamma and self.n_f):
            raise ValueError("hyperparameter grid is empty")

    @classmethod
    def from_config(cls, ev: EvaluationConfig) -> GridSpec:
        if ev.grid_mode == "range":
            cs = np.logspace(np.log10(ev.c_min), np.log10(ev.c_max), ev.grid_points)
            gs = np.logspace(np.log10(ev.gamma_min), np.log10(ev.gamma_max), ev.grid_points)
        elif ev.grid_mode == "endpoints":
            cs, gs = (ev.c_min, ev.c_max), (ev.gamma_min, ev.gamma_max)
        else:
            raise ValueError(f"unknown grid mode {ev.grid_mode!r}")
        return cls(tuple(sorted(float(c) for c in cs)), tuple(sorted(float(g) for g in gs)),
                   tuple(sorted(int(n) for n in ev.n_features)))

    @property
    def size(self) -> int:
        return len(self.C) * len(self.gamma) * len(self.n_f)


def _binary_balanced(pred, y) -> float:
    return 0.5 * (np.mean(pred[y > 0] > 0) + np.mean(pred[y < 0] < 0))


def tune_subtask(X, codes, subtask: Subtask, grid: GridSpec, cfg: Config = Config(),
                 feature_selection: bool = True, seed: int = 0):
    """Pick (C, gamma, n_f) for one binary subtask by inner stratified CV.

    Every grid point is scored by its mean binary balanced accuracy over the
    inner folds. Ties go to the smaller C, then gamma, then n_f. Returns the
    chosen HyperParams and the (C, gamma, n_f) array of mean scores.
    """
    X = np.asarray(X, dtype=np.float64)
    codes = as_codes(codes)
    rows = subtask.rows(codes)
    Xs, cs = X[rows], codes[rows]
    ys = subtask.targets(cs)
    p = X.shape[1]
    nfs = tuple(min(n, p) for n in grid.n_f) if feature_selection else (p,)
    if grid.size == 1 or (len(grid.C) == 1 and len(grid.gamma) == 1 and len(nfs) == 1):
        return HyperParams(grid.C[0], grid.gamma[0], nfs[0]), np.zeros((1, 1, 1))

    k = cfg.evaluation.inner_folds
    smallest = min(np.sum(cs == c) for c in np.unique(cs))
    if smallest < k:
        if smallest < 2:
            raise DataError(f"subtask {subtask.name}: a class has a single training recording")
        log.warning("subtask %s: smallest class has %d recordings; using %d inner folds",
                    subtask.name, smallest, smallest)
        k = int(smallest)
    folds = stratified_folds(cs, k, seed)
    scores = np.zeros((len(grid.C), len(grid.gamma), len(nfs), k))
    for f in range(k):
        tr, te = folds != f, folds == f
        ytr, yte = ys[tr], ys[te]
        if len(np.unique(ytr)) < 2 or len(np.unique(yte)) < 2:
            log.warning("subtask %s inner fold %d lacks a class; scoring 0", subtask.name, f)
            continue
        weights = balanced_weights(ytr) if cfg.svm.class_weighting == "balanced" else {1: 1.0, -1: 1.0}
        for ni, nf in enumerate(nfs):
            cols = np.arange(p) if not feature_selection else np.asarray(select_top(Xs[tr], ytr > 0, nf).indices)
            scaler, keep = fit_scaler(Xs[tr][:, cols])
            if keep.size == 0:
                log.warning("subtask %s inner fold %d: selected features constant; scoring 0", subtask.name, f)
                continue
            cols = cols[keep]
            Ztr = scaler.transform(Xs[tr][:, cols])
            Zte = scaler.transform(Xs[te][:, cols])
            Dtr = squared_distances(Ztr, Ztr)
            Dte = squared_distances(Zte, Ztr)
            for gi, g in enumerate(grid.gamma):
                Ktr = np.exp(-g * Dtr)
                Kte = np.exp(-g * Dte)
                for ci, C in enumerate(grid.C):
                    try:
                        alpha, bias, _ = solve_dual(Ktr, ytr, C, weights, cfg.svm)
                    except ConvergenceError as exc:
                        log.warning("subtask %s inner fold %d: %s; scoring 0", subtask.name, f, exc)
                        continue
                    dec = Kte @ (alpha * ytr) + bias
                    pred = np.where(dec >= 0, 1, -1)
                    scores[ci, gi, ni, f] = _binary_balanced(pred, yte)
    mean = scores.mean(axis=3)
    ci, gi, ni = np.unravel_index(int(np.argmax(mean)), mean.shape)
    return HyperParams(grid.C[ci], grid.gamma[gi], nfs[ni]), mean


def nested_tune(X, labels, grid: GridSpec, scheme: str, cfg: Config = Config(), seed: int = 0):
    """Tune each member SVM of ``scheme`` independently on its own binary subtask."""
    base, fs = parse_scheme(scheme)
    codes = as_codes(labels)
    return tuple(tune_subtask(X, codes, st, grid, cfg, fs, _child_seed(seed, m))[0]
                 for m, st in enumerate(SUBTASKS[base]))


# ---------------------------------------------------------------------------
# Experiment
# ---------------------------------------------------------------------------

@dataclass
class MemberRecord:
    subtask: str
    C: float
    gamma: float
    n_f: int
    mask: list[int] | None
    features_used: list[int]
    scaler_mean: list[float]
    scaler_std: list[float]

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FoldRecord:
    fold: int
    test_ids: list[str]
    members: list[MemberRecord]

    def as_dict(self) -> dict:
        return {"fold": self.fold, "test_ids": self.test_ids, "members": [m.as_dict() for m in self.members]}


@dataclass
class RepetitionResult:
    index: int
    seed: int
    predictions: dict[str, str]
    accuracies: GroupAccuracies
    folds: list[FoldRecord]

    def as_dict(self) -> dict:
        return {"index": self.index, "seed": self.seed, "predictions": self.predictions,
                "accuracies": self.accuracies.as_dict(), "folds": [f.as_dict() for f in self.folds]}


@dataclass
class SchemeResult:
    scheme: str
    repetitions: list[RepetitionResult]

    @property
    def summary(self) -> dict:
        return summarize([r.accuracies for r in self.repetitions])

    def as_dict(self) -> dict:
        return {"scheme": self.scheme, "summary": self.summary,
                "repetitions": [r.as_dict() for r in self.repetitions]}


@dataclass
class PerceptualResult:
    per_judge: dict[str, GroupAccuracies]

    @property
    def summary(self) -> dict:
        return summarize([self.per_judge[j] for j in sorted(self.per_judge)])

    def as_dict(self) -> dict:
        return {"summary": self.summary,
                "judges": {j: self.per_judge[j].as_dict() for j in sorted(self.per_judge)}}


@dataclass
class EvaluationReport:
    config: dict
    dataset: dict
    schemes: dict[str, SchemeResult] = field(default_factory=dict)
    perceptual: PerceptualResult | None = None
    tool_version: str = __version__

    def as_dict(self) -> dict:
        d = {"tool": {"name": "msdclass", "version": self.tool_version},
             "config": self.config, "dataset": self.dataset,
             "schemes": {k: v.as_dict() for k, v in self.schemes.items()}}
        if self.perceptual is not None:
            d["perceptual"] = self.perceptual.as_dict()
        return d


def member_record(subtask: Subtask, m) -> MemberRecord:
    return MemberRecord(subtask.name, m.params.C, m.params.gamma, m.params.n_f,
                        None if m.mask is None else list(m.mask.indices), list(m.feature_indices),
                        m.scaler.mean.tolist(), m.scaler.std.tolist())


def fit_fold(X, labels, scheme: str, grid: GridSpec, cfg: Config = Config(), seed: int = 0,
             names=None) -> ThreeClassModel:
    """Tune and train ``scheme`` using only the rows passed in."""
    hps = nested_tune(X, labels, grid, scheme, cfg, seed)
    return train_scheme(scheme, X, labels, hps, cfg, names)


def run_repetition(fm: FeatureMatrix, scheme: str, rep: int, cfg: Config = Config(),
                   grid: GridSpec | None = None) -> RepetitionResult:
    ev = cfg.evaluation
    grid = grid or GridSpec.from_config(ev)
    codes = fm.label_array
    rep_seed = ev.seed + rep
    folds = stratified_folds(codes, ev.outer_folds, rep_seed)
    pred = np.full(len(codes), -1, dtype=np.int64)
    records = []
    for f in range(ev.outer_folds):
        tr, te = folds != f, folds == f
        try:
            model = fit_fold(fm.values[tr], codes[tr], scheme, grid, cfg, _child_seed(ev.seed, rep, f), fm.names)
        except MsdError as exc:
            raise type(exc)(f"scheme {scheme}, repetition {rep}, fold {f}: {exc}") from exc
        pred[te] = model.predict_codes(fm.values[te])
        records.append(FoldRecord(f, [fm.ids[i] for i in np.flatnonzero(te)],
                                  [member_record(st, m) for st, m in zip(model.subtasks, model.members)]))
    acc = GroupAccuracies.from_predictions(pred, codes)
    predictions = {fm.ids[i]: CLASSES[pred[i]].value for i in range(len(codes))}
    return RepetitionResult(rep, rep_seed, predictions, acc, records)


def _run_task(args):
    fm, scheme, rep, cfg = args
    return run_repetition(fm, scheme, rep, cfg)


def run_experiment(fm: FeatureMatrix, cfg: Config = Config(), schemes=None, jobs: int = 1) -> EvaluationReport:
    """Repeat stratified outer CV ``cfg.evaluation.repetitions`` times for each scheme.

    Within each outer fold, selection, scaling, tuning and training see the
    training rows only. Predictions are pooled per repetition before the
    metrics are computed; the report aggregates one value per repetition.
    """
    ev = cfg.evaluation
    schemes = tuple(schemes if schemes is not None else ev.schemes)
    if not schemes:
        raise ValueError("no schemes requested")
    for s in schemes:
        parse_scheme(s)
    codes = fm.label_array
    missing = [c.value for c in CLASSES if not np.any(codes == c.order)]
    if missing:
        raise DataError(f"feature matrix lacks class(es): {', '.join(missing)}")
    tasks = [(fm, s, r, cfg) for s in schemes for r in range(ev.repetitions)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    report = EvaluationReport(cfg.flat(), dataset_summary(fm))
    for s in schemes:
        report.schemes[s] = SchemeResult(s, [r for t, r in zip(tasks, results) if t[1] == s])
    return report


def dataset_summary(fm: FeatureMatrix) -> dict:
    codes = fm.label_array
    return {"n_recordings": len(fm), "n_features": len(fm.names),
            "class_counts": {c.value: int(np.sum(codes == c.order)) for c in CLASSES},
            "feature_names": list(fm.names)}


# ---------------------------------------------------------------------------
# Perceptual judgments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JudgeResponse:
    judge_id: str
    recording_id: str
    stage1: str  # "neurotypical" | "patient"
    stage2: str  # "dysarthria" | "aos" | "none"

    def __post_init__(self):
        if self.stage1 not in ("neurotypical", "patient"):
            raise DataError(f"stage1 must be neurotypical or patient, got {self.stage1!r}")
        if self.stage2 not in ("dysarthria", "aos", "none"):
            raise DataError(f"stage2 must be dysarthria, aos or empty, got {self.stage2!r}")
        if (self.stage1 == "neurotypical") != (self.stage2 == "none"):
            raise DataError(f"judge {self.judge_id}, recording {self.recording_id}: "
                            f"stage1={self.stage1} is inconsistent with stage2={self.stage2}")

    @property
    def label(self) -> ClassLabel:
        if self.stage1 == "neurotypical":
            return ClassLabel.NEUROTYPICAL
        return ClassLabel.parse(self.stage2)


def load_judge_responses(path: str | Path, known_ids=None) -> list[JudgeResponse]:
    """Read ``judge_id,recording_id,stage1,stage2`` rows; empty stage2 means none."""
    known = None if known_ids is None else set(known_ids)
    out = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read judge responses {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        expected = ["judge_id", "recording_id", "stage1", "stage2"]
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
            raise DataError(f"{path}: header must be {','.join(expected)}")
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            s2 = (row["stage2"] or "").strip().lower() or "none"
            try:
                r = JudgeResponse(row["judge_id"].strip(), row["recording_id"].strip(),
                                  row["stage1"].strip().lower(), s2)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if known is not None and r.recording_id not in known:
                raise DataError(f"{path}:{lineno}: unknown recording id {r.recording_id!r}")
            if (r.judge_id, r.recording_id) in seen:
                raise DataError(f"{path}:{lineno}: judge {r.judge_id} rated {r.recording_id} twice")
            seen.add((r.judge_id, r.recording_id))
            out.append(r)
    return out


def perceptual_metrics(responses: list[JudgeResponse], truths: dict[str, ClassLabel]) -> PerceptualResult:
    """Per-judge accuracies over the recordings each judge rated."""
    by_judge: dict[str, list[JudgeResponse]] = {}
    for r in responses:
        if r.recording_id not in truths:
            raise DataError(f"unknown recording id {r.recording_id!r}")
        by_judge.setdefault(r.judge_id, []).append(r)
    per_judge = {}
    for judge, rs in by_judge.items():
        try:
            per_judge[judge] = GroupAccuracies.from_predictions(
                [r.label for r in rs], [truths[r.recording_id] for r in rs])
        except ValueError as exc:
            raise DataError(f"judge {judge}: {exc}") from exc
    return PerceptualResult(per_judge)


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

STAGE1_FEATURES = (0, 6, 15, 24)
STAGE2_FEATURES = (2, 10, 19, 26)


def synth_cohort(seed: int = 0, n_per_class=(29, 20, 10), separation: float = 8.0) -> FeatureMatrix:
    """Gaussian 28-dimensional cohort with controllable class separation.

    Patients are shifted by ``separation`` standard deviations from
    neurotypical speakers on STAGE1_FEATURES; AoS is shifted from
    dysarthria by the same amount on STAGE2_FEATURES. With separation 0 the
    three classes are exchangeable.
    """
    if np.isscalar(n_per_class):
        n_per_class = (int(n_per_class),) * 3
    if len(n_per_class) != 3 or min(n_per_class) < 5:
        raise ValueError("need three class sizes of at least 5")
    if separation < 0:
        raise ValueError("separation must be non-negative")
    rng = np.random.default_rng(seed)
    n = sum(n_per_class)
    values = rng.standard_normal((n, len(FEATURE_NAMES)))
    codes = np.repeat(np.arange(3), n_per_class)
    patient = codes != NEURO
    values[np.ix_(patient, STAGE1_FEATURES)] += separation
    values[np.ix_(codes == AOS, STAGE2_FEATURES)] += separation
    ids = [f"S{i + 1:03d}" for i in range(n)]
    return FeatureMatrix(ids, [CLASSES[c] for c in codes], values)
