"""Three-class schemes built from binary SVMs: hierarchical, one-vs-one, one-vs-rest.

Class codes follow the fixed order neurotypical=0, dysarthria=1, AoS=2.
Each scheme is a list of binary subtasks; a subtask names the classes
whose rows it trains on and the classes mapped to the +1 side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msdclass.config import Config
from msdclass.errors import DataError, ModelFormatError
from msdclass.labels import CLASSES, ClassLabel
from msdclass.selection import select_top
from msdclass.svm import HyperParams, SvmModel, dump_artifact, load_artifact, model_from_dict, model_to_dict, train_svm

NEURO, DYS, AOS = 0, 1, 2
_NAMES = {c.order: c.value for c in CLASSES}


@dataclass(frozen=True)
class Subtask:
    name: str
    classes: tuple[int, ...]
    positive: tuple[int, ...]

    def rows(self, codes: np.ndarray) -> np.ndarray:
        return np.isin(codes, self.classes)

    def targets(self, codes: np.ndarray) -> np.ndarray:
        return np.where(np.isin(codes, self.positive), 1, -1)

    @property
    def class_map(self) -> dict[str, str]:
        pos = "+".join(_NAMES[c] for c in self.positive)
        neg = "+".join(_NAMES[c] for c in self.classes if c not in self.positive)
        return {"+1": pos, "-1": neg}


SUBTASKS = {
    "hierarchical": (
        Subtask("neurotypical-vs-patient", (NEURO, DYS, AOS), (DYS, AOS)),
        Subtask("dysarthria-vs-aos", (DYS, AOS), (AOS,)),
    ),
    "ovo": (
        Subtask("neurotypical-vs-dysarthria", (NEURO, DYS), (NEURO,)),
        Subtask("neurotypical-vs-aos", (NEURO, AOS), (NEURO,)),
        Subtask("dysarthria-vs-aos", (DYS, AOS), (DYS,)),
    ),
    "ovr": (
        Subtask("neurotypical-vs-rest", (NEURO, DYS, AOS), (NEURO,)),
        Subtask("dysarthria-vs-rest", (NEURO, DYS, AOS), (DYS,)),
        Subtask("aos-vs-rest", (NEURO, DYS, AOS), (AOS,)),
    ),
}

SCHEMES = ("hierarchical", "hierarchical-no-fs", "ovo", "ovr", "ovo-no-fs", "ovr-no-fs")


def parse_scheme(name: str) -> tuple[str, bool]:
    """``"ovo-no-fs"`` -> ``("ovo", False)``."""
    if name not in SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; choose from {', '.join(SCHEMES)}")
    base, _, suffix = name.partition("-no-fs")
    return base, name == base


def as_codes(labels) -> np.ndarray:
    labels = list(labels)
    if labels and isinstance(labels[0], (ClassLabel, str)):
        return np.array([ClassLabel.parse(v).order for v in labels], dtype=np.int64)
    return np.asarray(labels, dtype=np.int64)


def train_member(X, codes, subtask: Subtask, hp: HyperParams, cfg: Config = Config(),
                 feature_selection: bool = True, names=None) -> SvmModel:
    """Select features on the subtask grouping (training rows only) and train its SVM."""
    rows = subtask.rows(codes)
    Xs, ys = X[rows], subtask.targets(codes[rows])
    if len(np.unique(ys)) < 2:
        raise DataError(f"subtask {subtask.name}: a class is absent from the training rows")
    mask = None
    if feature_selection:
        mask = select_top(Xs, ys > 0, min(hp.n_f, X.shape[1]))
    return train_svm(Xs, ys, hp, cfg.svm, mask=mask, class_map=subtask.class_map, feature_names=names)


@dataclass(frozen=True)
class ThreeClassModel:
    scheme: str  # base scheme: hierarchical / ovo / ovr
    members: tuple[SvmModel, ...]
    feature_selection: bool = True
    stage1_tie_to_patient: bool = True

    @property
    def subtasks(self) -> tuple[Subtask, ...]:
        return SUBTASKS[self.scheme]

    def decision_values(self, X) -> np.ndarray:
        """(rows, members) decision values.

        For the hierarchical scheme the second column is NaN wherever the
        first stage says neurotypical: the second SVM is not consulted there.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.scheme != "hierarchical":
            return np.column_stack([m.decision_function(X) for m in self.members])
        d1 = self.members[0].decision_function(X)
        d2 = np.full(len(X), np.nan)
        patient = _stage1_patient(d1, self.stage1_tie_to_patient)
        if patient.any():
            d2[patient] = self.members[1].decision_function(X[patient])
        return np.column_stack([d1, d2])

    def predict_codes(self, X) -> np.ndarray:
        D = self.decision_values(X)
        if self.scheme == "hierarchical":
            return decide_hierarchical(D, self.stage1_tie_to_patient)
        if self.scheme == "ovo":
            return decide_ovo(D)
        return decide_ovr(D)

    def predict(self, X) -> list[ClassLabel]:
        return [CLASSES[c] for c in self.predict_codes(X)]


def _stage1_patient(d1, tie_to_patient: bool) -> np.ndarray:
    return d1 >= 0 if tie_to_patient else d1 > 0


def decide_hierarchical(D, tie_to_patient: bool = True) -> np.ndarray:
    d1, d2 = D[:, 0], D[:, 1]
    patient = _stage1_patient(d1, tie_to_patient)
    return np.where(~patient, NEURO, np.where(d2 >= 0, AOS, DYS))


def decide_ovo(D) -> np.ndarray:
    """Majority vote over the (N|D, N|A, D|A) pair decisions.

    A three-way split goes to the class with the largest summed |decision
    value| among the votes it won, then to the lower class code.
    """
    D = np.atleast_2d(D)
    pairs = [s.classes for s in SUBTASKS["ovo"]]
    votes = np.zeros((len(D), 3))
    support = np.zeros((len(D), 3))
    for k, (a, b) in enumerate(pairs):
        winner = np.where(D[:, k] >= 0, a, b)
        votes[np.arange(len(D)), winner] += 1
        support[np.arange(len(D)), winner] += np.abs(D[:, k])
    out = np.argmax(votes, axis=1)
    split = votes.max(axis=1) == 1
    if split.any():
        out[split] = np.argmax(support[split], axis=1)
    return out


def decide_ovr(D) -> np.ndarray:
    """Largest signed one-vs-rest decision value; ties to the lower class code."""
    return np.argmax(np.atleast_2d(D), axis=1)


def train_scheme(scheme: str, X, labels, hps, cfg: Config = Config(), names=None) -> ThreeClassModel:
    """Train every member of ``scheme`` (e.g. ``"hierarchical"`` or ``"ovr-no-fs"``).

    ``hps`` gives one HyperParams per member, in subtask order.
    """
    base, fs = parse_scheme(scheme)
    X = np.asarray(X, dtype=np.float64)
    codes = as_codes(labels)
    missing = [CLASSES[c].value for c in range(3) if not np.any(codes == c)]
    if missing:
        raise DataError(f"training data lacks class(es): {', '.join(missing)}")
    subtasks = SUBTASKS[base]
    if len(hps) != len(subtasks):
        raise ValueError(f"{scheme} needs {len(subtasks)} hyperparameter sets, got {len(hps)}")
    members = tuple(train_member(X, codes, st, hp, cfg, fs, names) for st, hp in zip(subtasks, hps))
    return ThreeClassModel(base, members, fs, cfg.classifiers.stage1_tie_to_patient)


def train_hierarchical(X, labels, hp1: HyperParams, hp2: HyperParams, cfg: Config = Config(),
                       feature_selection: bool = True, names=None) -> ThreeClassModel:
    scheme = "hierarchical" if feature_selection else "hierarchical-no-fs"
    return train_scheme(scheme, X, labels, (hp1, hp2), cfg, names)


def train_ovo(X, labels, hps, cfg: Config = Config(), feature_selection: bool = True, names=None):
    return train_scheme("ovo" if feature_selection else "ovo-no-fs", X, labels, hps, cfg, names)


def train_ovr(X, labels, hps, cfg: Config = Config(), feature_selection: bool = True, names=None):
    return train_scheme("ovr" if feature_selection else "ovr-no-fs", X, labels, hps, cfg, names)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def composite_to_dict(m: ThreeClassModel) -> dict:
    return {
        "kind": "composite",
        "scheme": m.scheme,
        "feature_selection": m.feature_selection,
        "stage1_tie_to_patient": m.stage1_tie_to_patient,
        "members": [{"subtask": st.name, "model": model_to_dict(mm)}
                    for st, mm in zip(m.subtasks, m.members)],
    }


def composite_from_dict(d: dict) -> ThreeClassModel:
    if d.get("kind") != "composite" or d.get("scheme") not in SUBTASKS:
        raise ModelFormatError("not a three-class model artifact")
    subtasks = SUBTASKS[d["scheme"]]
    members = d.get("members", [])
    if [m.get("subtask") for m in members] != [st.name for st in subtasks]:
        raise ModelFormatError(f"member list does not match the {d['scheme']} scheme")
    return ThreeClassModel(d["scheme"], tuple(model_from_dict(m["model"]) for m in members),
                           bool(d["feature_selection"]), bool(d["stage1_tie_to_patient"]))


def save_composite(m: ThreeClassModel) -> bytes:
    return dump_artifact(composite_to_dict(m))


def load_composite(data: bytes) -> ThreeClassModel:
    return composite_from_dict(load_artifact(data))
