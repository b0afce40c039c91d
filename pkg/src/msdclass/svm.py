"""Binary soft-margin SVM with an RBF kernel."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from msdclass import kernels
from msdclass.config import SvmConfig
from msdclass.errors import ChecksumError, ConvergenceError, DataError, ModelFormatError, SchemaVersionError
from msdclass.selection import SelectionMask

SCHEMA_VERSION = (1, 0)
_MAGIC = b"msdclass-model"


@dataclass(frozen=True)
class HyperParams:
    C: float
    gamma: float
    n_f: int = 28

    def __post_init__(self):
        if not (self.C > 0 and self.gamma > 0):
            raise ValueError(f"C and gamma must be positive, got C={self.C}, gamma={self.gamma}")
        if self.n_f < 1:
            raise ValueError(f"n_f must be >= 1, got {self.n_f}")


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X):
        return (X - self.mean) / self.std


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray  # scaled
    dual_coefs: np.ndarray  # alpha_i * y_i
    bias: float
    params: HyperParams
    scaler: Scaler
    feature_indices: tuple[int, ...]  # columns of the full feature row actually used
    mask: SelectionMask | None
    class_map: dict[str, str]  # {"+1": name, "-1": name}
    class_weights: dict[str, float]
    n_iter: int = 0
    feature_names: tuple[str, ...] | None = field(default=None, compare=False)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Z = self.scaler.transform(X[:, list(self.feature_indices)])
        K = rbf_kernel(Z, self.support_vectors, self.params.gamma)
        return K @ self.dual_coefs + self.bias

    def decision_value(self, x) -> float:
        return float(self.decision_function(np.asarray(x, dtype=np.float64)[None, :])[0])

    def predict(self, X) -> np.ndarray:
        """+1 / -1 per row; a decision value of exactly 0 goes to +1."""
        return np.where(self.decision_function(X) >= 0, 1, -1)


def squared_distances(A, B) -> np.ndarray:
    aa = np.sum(A * A, axis=1)[:, None]
    bb = np.sum(B * B, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    return np.exp(-gamma * squared_distances(A, B))


def balanced_weights(y) -> dict[int, float]:
    """Per-class weights inversely proportional to class frequency (mean weight 1)."""
    y = np.asarray(y)
    n = len(y)
    return {c: n / (2.0 * np.sum(y == c)) for c in (1, -1)}


def fit_scaler(X) -> tuple[Scaler, np.ndarray]:
    """Z-score scaler on the columns with non-zero spread; returns it and the kept column positions."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    keep = std > 1e-12 * np.maximum(np.abs(mean), 1.0)
    return Scaler(mean[keep], std[keep]), np.flatnonzero(keep)


def solve_dual(K, y, C: float, weights: dict[int, float], cfg: SvmConfig = SvmConfig()):
    """Run the dual solver on a precomputed kernel; returns ``(alpha, bias, iterations)``."""
    y = np.asarray(y, dtype=np.float64)
    ub = C * np.where(y > 0, weights[1], weights[-1])
    alpha, grad, it, status = kernels.smo_solve(K, y, ub, cfg.tol, cfg.no_progress_epochs * len(y))
    if status != kernels.SMO_CONVERGED:
        reason = "stalled" if status == kernels.SMO_STALLED else "hit the iteration cap"
        raise ConvergenceError(f"SVM dual solver {reason} after {it} iterations (C={C:g}, n={len(y)})")
    return alpha, kernels.smo_bias(alpha, grad, y, ub), it


def train_svm(X, y, params: HyperParams, cfg: SvmConfig = SvmConfig(), mask: SelectionMask | None = None,
              class_weights: dict[int, float] | None = None, class_map: dict[str, str] | None = None,
              feature_names=None) -> SvmModel:
    """Train on full feature rows ``X``; the mask and a training-only scaler are applied here.

    ``y`` holds +1/-1. Class weights default to the inverse class
    frequencies when ``cfg.class_weighting`` is ``"balanced"``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (rows, features) with one label per row")
    if not np.all(np.isfinite(X)):
        raise DataError("training rows contain non-finite values")
    if not set(np.unique(y)) <= {-1, 1}:
        raise ValueError("labels must be +1 / -1")
    if len(np.unique(y)) < 2:
        raise DataError("SVM training needs both classes; got a single class")
    cols = np.arange(X.shape[1]) if mask is None else np.asarray(mask.indices)
    scaler, keep = fit_scaler(X[:, cols])
    if keep.size == 0:
        raise DataError("every selected feature is constant on the training rows")
    cols = cols[keep]
    Z = scaler.transform(X[:, cols])
    if class_weights is None:
        class_weights = balanced_weights(y) if cfg.class_weighting == "balanced" else {1: 1.0, -1: 1.0}
    K = rbf_kernel(Z, Z, params.gamma)
    alpha, bias, it = solve_dual(K, y, params.C, class_weights, cfg)
    sv = alpha > 0
    return SvmModel(
        support_vectors=Z[sv],
        dual_coefs=(alpha * y)[sv],
        bias=bias,
        params=params,
        scaler=scaler,
        feature_indices=tuple(int(c) for c in cols),
        mask=mask,
        class_map=dict(class_map or {"+1": "+1", "-1": "-1"}),
        class_weights={"+1": float(class_weights[1]), "-1": float(class_weights[-1])},
        n_iter=it,
        feature_names=None if feature_names is None else tuple(feature_names),
    )


def dual_objective(alpha, y, K) -> float:
    """``sum(alpha) - 0.5 * (alpha*y)^T K (alpha*y)`` (to be maximised)."""
    ay = alpha * y
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def model_to_dict(m: SvmModel) -> dict:
    d = {
        "kind": "svm",
        "params": {"C": m.params.C, "gamma": m.params.gamma, "n_f": m.params.n_f},
        "class_map": m.class_map,
        "class_weights": m.class_weights,
        "scaler": {"mean": m.scaler.mean.tolist(), "std": m.scaler.std.tolist()},
        "feature_indices": list(m.feature_indices),
        "mask": None if m.mask is None else m.mask.to_dict(m.feature_names),
        "support_vectors": m.support_vectors.tolist(),
        "dual_coefs": m.dual_coefs.tolist(),
        "bias": m.bias,
        "n_iter": m.n_iter,
    }
    if m.feature_names is not None:
        d["feature_names"] = list(m.feature_names)
    return d


def model_from_dict(d: dict) -> SvmModel:
    if d.get("kind") != "svm":
        raise ModelFormatError(f"expected an svm payload, got kind {d.get('kind')!r}")
    try:
        n_feat = len(d["feature_indices"])
        sv = np.array(d["support_vectors"], dtype=np.float64).reshape(-1, n_feat)
        return SvmModel(
            support_vectors=sv,
            dual_coefs=np.array(d["dual_coefs"], dtype=np.float64),
            bias=float(d["bias"]),
            params=HyperParams(float(d["params"]["C"]), float(d["params"]["gamma"]), int(d["params"]["n_f"])),
            scaler=Scaler(np.array(d["scaler"]["mean"], dtype=np.float64),
                          np.array(d["scaler"]["std"], dtype=np.float64)),
            feature_indices=tuple(int(i) for i in d["feature_indices"]),
            mask=None if d["mask"] is None else SelectionMask.from_dict(d["mask"]),
            class_map=dict(d["class_map"]),
            class_weights={k: float(v) for k, v in d["class_weights"].items()},
            n_iter=int(d.get("n_iter", 0)),
            feature_names=tuple(d["feature_names"]) if "feature_names" in d else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed svm payload: {exc}") from exc


def dump_artifact(payload: dict) -> bytes:
    """Serialize a payload as a header line (schema version, sha256) plus canonical JSON."""
    body = json.dumps(payload, sort_keys=True, indent=1).encode("utf-8")
    digest = hashlib.sha256(body).hexdigest()
    major, minor = SCHEMA_VERSION
    return _MAGIC + f" schema={major}.{minor} sha256={digest}\n".encode("ascii") + body


def load_artifact(data: bytes) -> dict:
    header, sep, body = data.partition(b"\n")
    parts = header.split(b" ")
    if not sep or len(parts) != 3 or parts[0] != _MAGIC:
        raise ModelFormatError("not a model artifact (bad header)")
    fields = {}
    for part in parts[1:]:
        key, eq, value = part.partition(b"=")
        if not eq:
            raise ModelFormatError("malformed artifact header")
        fields[key.decode("ascii", "replace")] = value.decode("ascii", "replace")
    if hashlib.sha256(body).hexdigest() != fields.get("sha256"):
        raise ChecksumError("artifact checksum mismatch; the file is corrupted")
    try:
        major = int(fields.get("schema", "").split(".")[0])
    except ValueError:
        raise ModelFormatError(f"unreadable schema version {fields.get('schema')!r}") from None
    if major != SCHEMA_VERSION[0]:
        raise SchemaVersionError(f"artifact schema {fields['schema']} is not supported "
                                 f"(this build reads {SCHEMA_VERSION[0]}.x)")
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"artifact body is not valid JSON: {exc}") from exc


def save_model(m: SvmModel) -> bytes:
    return dump_artifact(model_to_dict(m))


def load_model(data: bytes) -> SvmModel:
    return model_from_dict(load_artifact(data))
