"""Fitting, prediction and model-file persistence for the five forecaster kinds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from ..errors import DataFormatError, DomainError, ShapeError
from .features import VOCABULARY, FeatureVector, HourlyClimatology, feature_names
from .linear import Standardizer, lasso, ols, ridge
from .svr import SVRSolution, smo_svr

KINDS = ("naive", "ols", "ridge", "lasso", "svr")
LINEAR_KINDS = ("ols", "ridge", "lasso")


def default_hyper(kind: str, p_mpp: float, dimension: int) -> dict:
    if kind == "ridge":
        return {"lambda": 1.0}
    if kind == "lasso":
        return {"lambda": 0.01, "tol": 1e-6, "max_iter": 10000}
    if kind == "svr":
        return {"C": 10.0, "epsilon": 0.01 * p_mpp, "gamma": 1.0 / dimension, "tol": 1e-3, "max_iter": 500000}
    return {}


@dataclass
class FittedModel:
    kind: str
    p_mpp: float
    standardizer: Optional[Standardizer] = None
    weights: Optional[np.ndarray] = None
    intercept: float = 0.0
    svr: Optional[SVRSolution] = None
    hyper: dict = field(default_factory=dict)
    vocabulary: tuple = VOCABULARY
    climatology: Optional[HourlyClimatology] = None
    warnings: list = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return len(feature_names(self.vocabulary))

    def raw(self, X) -> np.ndarray:
        """Unclipped regression output for each row of ``X`` (kW)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dimension:
            raise ShapeError(f"model expects {self.dimension} features, got {X.shape[1]}")
        if self.kind == "naive":
            return X[:, 0].copy()
        Z = self.standardizer.transform(X)
        if self.kind == "svr":
            # svr is fitted on targets normalized by p_mpp
            return self.svr.decision_function(Z) * self.p_mpp
        return Z @ self.weights + self.intercept

    def predict_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.clip(self.raw(X), 0.0, self.p_mpp)
        # nights are scored trivially as zero
        out[X[:, 0] <= 0] = 0.0
        return out


def predict(model: FittedModel, x, p_mpp: Optional[float] = None) -> float:
    """Next-hour production forecast in kW, clipped to [0, p_mpp]."""
    arr = x.as_array() if isinstance(x, FeatureVector) else np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ShapeError("predict takes a single feature vector")
    cap = model.p_mpp if p_mpp is None else p_mpp
    if model.kind == "naive":
        if arr.shape[0] != model.dimension:
            raise ShapeError(f"model expects {model.dimension} features, got {arr.shape[0]}")
        return float(min(max(arr[0], 0.0), cap))
    if arr[0] <= 0:
        return 0.0
    return float(np.clip(model.raw(arr[None, :])[0], 0.0, cap))


def fit_matrix(
    X,
    y,
    kind: str,
    p_mpp: float,
    hyper: Optional[dict] = None,
    vocabulary: Sequence[str] = VOCABULARY,
    climatology: Optional[HourlyClimatology] = None,
) -> FittedModel:
    """Fit one forecaster kind on a feature matrix (rows from ``FeatureVector.as_array``)."""
    if kind not in KINDS:
        raise DomainError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if d != len(feature_names(vocabulary)):
        raise ShapeError(f"expected {len(feature_names(vocabulary))} features, got {d}")
    params = default_hyper(kind, p_mpp, d)
    params.update(hyper or {})
    model = FittedModel(kind=kind, p_mpp=p_mpp, hyper=params, vocabulary=tuple(vocabulary), climatology=climatology)
    if kind == "naive":
        return model

    if kind in LINEAR_KINDS and n < d + 1:
        raise ShapeError(f"{kind} needs at least {d + 1} samples, got {n}")
    if kind == "svr" and n < 2:
        raise ShapeError("svr needs at least 2 samples")

    std = Standardizer.fit(X)
    model.standardizer = std
    if std.degenerate.any():
        names = feature_names(vocabulary)
        model.warnings.append(
            "zero-variance features pinned to weight 0: "
            + ", ".join(names[i] for i in np.flatnonzero(std.degenerate))
        )
    Z = std.transform(X)

    if kind == "ols":
        w, b = ols(Z, y)
    elif kind == "ridge":
        w, b = ridge(Z, y, params["lambda"])
    elif kind == "lasso":
        w, b = lasso(Z, y, params["lambda"], params["tol"], int(params["max_iter"]))
    else:
        model.svr = smo_svr(
            Z,
            y / p_mpp,
            C=params["C"],
            epsilon=params["epsilon"] / p_mpp,
            gamma=params["gamma"],
            tol=params["tol"],
            max_iter=int(params["max_iter"]),
        )
        return model
    w = np.where(std.degenerate, 0.0, w)
    model.weights = w
    model.intercept = float(b)
    return model


# --- model file -------------------------------------------------------------

FORMAT_VERSION = 1


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a).ravel()]


def to_dict(model: FittedModel) -> dict[str, Any]:
    d: dict[str, Any] = {
        "format": "sunlease-model",
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "p_mpp": model.p_mpp,
        "features": feature_names(model.vocabulary),
        "vocabulary": list(model.vocabulary),
        "hyperparameters": {k: model.hyper[k] for k in sorted(model.hyper)},
        "standardization": None,
        "parameters": None,
        "climatology": None if model.climatology is None else model.climatology.to_dict(),
        "warnings": list(model.warnings),
    }
    if model.standardizer is not None:
        d["standardization"] = {
            "mean": _floats(model.standardizer.mean),
            "scale": _floats(model.standardizer.scale),
            "degenerate": [bool(v) for v in model.standardizer.degenerate],
        }
    if model.kind in LINEAR_KINDS:
        d["parameters"] = {"weights": _floats(model.weights), "intercept": model.intercept}
    elif model.kind == "svr":
        sv = model.svr
        d["parameters"] = {
            "support_vectors": [_floats(r) for r in sv.support],
            "dual_coef": _floats(sv.coef),
            "intercept": sv.intercept,
            "gamma": sv.gamma,
            "target_scale": model.p_mpp,
            "iterations": sv.iterations,
        }
    return d


def dumps(model: FittedModel) -> str:
    return json.dumps(to_dict(model), indent=1) + "\n"


def from_dict(d: dict) -> FittedModel:
    try:
        if d.get("format") != "sunlease-model":
            raise DataFormatError("not a sunlease model file")
        vocab = tuple(d["vocabulary"])
        model = FittedModel(
            kind=d["kind"],
            p_mpp=float(d["p_mpp"]),
            hyper=dict(d["hyperparameters"]),
            vocabulary=vocab,
            warnings=list(d.get("warnings", [])),
        )
        if d.get("climatology"):
            model.climatology = HourlyClimatology.from_dict(d["climatology"])
        st = d.get("standardization")
        if st:
            model.standardizer = Standardizer(
                np.array(st["mean"]), np.array(st["scale"]), np.array(st["degenerate"], dtype=bool)
            )
        p = d.get("parameters")
        if model.kind in LINEAR_KINDS:
            model.weights = np.array(p["weights"], dtype=float)
            model.intercept = float(p["intercept"])
        elif model.kind == "svr":
            dim = len(feature_names(vocab))
            model.svr = SVRSolution(
                np.array(p["support_vectors"], dtype=float).reshape(-1, dim),
                np.array(p["dual_coef"], dtype=float),
                float(p["intercept"]),
                float(p["gamma"]),
                int(p.get("iterations", 0)),
            )
        return model
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(f"malformed model file: {exc}") from None


def loads(text: str) -> FittedModel:
    try:
        return from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"model file is not JSON: {exc}", line=exc.lineno) from None
