"""One-hidden-layer perceptron (sigmoid hidden, linear output) trained by Levenberg-Marquardt.

Weights are handled as one flat vector laid out as
``[W1 (n_hidden x n_inputs, row-major), b1 (n_hidden), w2 (n_hidden), b2]``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import ConfigError, InsufficientDataError, TrainingError
from .features import ScalingParams

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


def n_weights(n_inputs: int, n_hidden: int) -> int:
    return n_hidden * n_inputs + 2 * n_hidden + 1


@dataclass
class MlpModel:
    n_inputs: int
    n_hidden: int
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    scaling: ScalingParams | None = None
    feature_names: tuple[str, ...] = ()
    fingerprint: str = ""
    seed: int | None = None

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float).reshape(self.n_hidden, self.n_inputs)
        self.b1 = np.asarray(self.b1, dtype=float).reshape(self.n_hidden)
        self.w2 = np.asarray(self.w2, dtype=float).reshape(self.n_hidden)
        self.b2 = float(self.b2)
        if not all(np.all(np.isfinite(a)) for a in (self.W1, self.b1, self.w2)) or not math.isfinite(self.b2):
            raise TrainingError("model weights must be finite")

    @property
    def n_weights(self) -> int:
        return n_weights(self.n_inputs, self.n_hidden)

    def get_weights(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    def with_weights(self, w: np.ndarray) -> "MlpModel":
        h, n = self.n_hidden, self.n_inputs
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_weights,):
            raise ValueError(f"expected {self.n_weights} weights, got shape {w.shape}")
        return replace(
            self,
            W1=w[: h * n].reshape(h, n),
            b1=w[h * n: h * n + h],
            w2=w[h * n + h: h * n + 2 * h],
            b2=float(w[-1]),
        )

    def predict(self, X) -> np.ndarray:
        return forward(self, X)


def init_model(n_inputs: int, n_hidden: int, seed: int | Sequence[int]) -> MlpModel:
    """Uniform weights in [-0.5, 0.5] / sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    W1 = rng.uniform(-0.5, 0.5, (n_hidden, n_inputs)) / math.sqrt(n_inputs)
    b1 = rng.uniform(-0.5, 0.5, n_hidden) / math.sqrt(n_inputs)
    w2 = rng.uniform(-0.5, 0.5, n_hidden) / math.sqrt(n_hidden)
    b2 = rng.uniform(-0.5, 0.5) / math.sqrt(n_hidden)
    return MlpModel(n_inputs, n_hidden, W1, b1, w2, b2)


def _check_inputs(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    if X2.ndim != 2 or X2.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} inputs per sample, got shape {X.shape}")
    if not np.all(np.isfinite(X2)):
        raise ValueError("inputs must be finite")
    return X2


def _hidden(model: MlpModel, X2: np.ndarray) -> np.ndarray:
    # expit is evaluated stably for large |z|
    return expit(X2 @ model.W1.T + model.b1)


def forward(model: MlpModel, X):
    """Prediction w2 . sigmoid(W1 x + b1) + b2 for one vector or a (N, n_inputs) batch."""
    X2 = _check_inputs(model, X)
    out = _hidden(model, X2) @ model.w2 + model.b2
    return float(out[0]) if np.ndim(X) == 1 else out


def jacobian(model: MlpModel, X, y) -> tuple[np.ndarray, np.ndarray]:
    """Residuals r = y - yhat and J = dr/dw, shape (N, n_weights), in flat-weight order."""
    X2 = _check_inputs(model, X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) != len(X2) or len(y) == 0:
        raise ValueError("need one target per sample and at least one sample")
    a = _hidden(model, X2)
    if not np.all(np.isfinite(a)):
        raise TrainingError("non-finite hidden activations")
    r = y - (a @ model.w2 + model.b2)
    delta = a * (1.0 - a) * model.w2  # d yhat / d hidden pre-activation
    n = len(y)
    J = np.empty((n, model.n_weights))
    hn = model.n_hidden * model.n_inputs
    J[:, :hn] = (delta[:, :, None] * X2[:, None, :]).reshape(n, hn)
    J[:, hn: hn + model.n_hidden] = delta
    J[:, hn + model.n_hidden: -1] = a
    J[:, -1] = 1.0
    return r, -J


def lm_step(J: np.ndarray, r: np.ndarray, mu: float) -> np.ndarray:
    """Solve (J^T J + mu I) dw = J^T r by Cholesky; the update is w - dw."""
    A = J.T @ J
    A[np.diag_indices_from(A)] += mu
    c = linalg.cho_factor(A, check_finite=True)
    return linalg.cho_solve(c, J.T @ r)


@dataclass(frozen=True)
class TrainConfig:
    mu0: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    max_epochs: int = 300
    goal_mse: float = 0.0
    grad_tol: float = 1e-7
    hidden_candidates: tuple[int, ...] = (5, 10, 15, 20)
    seed: int = 0
    validation_fraction: float = 0.15
    patience: int = 6

    def __post_init__(self):
        object.__setattr__(self, "hidden_candidates", tuple(int(h) for h in self.hidden_candidates))
        if not self.mu_inc > 1 > self.mu_dec > 0:
            raise ConfigError("need mu_inc > 1 > mu_dec > 0")
        if not 0 < self.mu0 <= self.mu_max:
            raise ConfigError("need 0 < mu0 <= mu_max")
        if not 0 <= self.validation_fraction < 0.5:
            raise ConfigError("validation_fraction must lie in [0, 0.5)")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be positive")
        if any(h < 1 for h in self.hidden_candidates):
            raise ConfigError("hidden sizes must be positive")

    def to_dict(self) -> dict:
        d = {name: getattr(self, name) for name in self.__dataclass_fields__}
        d["hidden_candidates"] = list(self.hidden_candidates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training settings: {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class TrainingTrace:
    """Per-epoch train/validation MSE and damping, plus every attempted step."""

    epochs: list[dict] = field(default_factory=list)
    attempts: list[dict] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0

    @property
    def accepted_sse(self) -> list[float]:
        return [a["sse"] for a in self.attempts if a["accepted"]]


def _split_validation(X, y, fraction):
    n_val = int(math.floor(fraction * len(y)))
    if n_val == 0:
        return X, y, None, None
    return X[:-n_val], y[:-n_val], X[-n_val:], y[-n_val:]


def train_lm(X, y, n_hidden: int, config: TrainConfig = TrainConfig(), seed=None) -> tuple[MlpModel, TrainingTrace]:
    """Full-batch Levenberg-Marquardt on scaled samples.

    The last ``validation_fraction`` of rows (chronological tail) drives early
    stopping and the returned weights are those with the best validation MSE
    (training MSE when there is no validation tail).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (N, n_inputs) with one target per row")
    seed = config.seed if seed is None else seed
    X_tr, y_tr, X_val, y_val = _split_validation(X, y, config.validation_fraction)
    if len(y_tr) < 1:
        raise InsufficientDataError("no training rows left after the validation split")
    model = init_model(X.shape[1], n_hidden, seed)
    model.seed = seed if isinstance(seed, int) else None
    if len(y_tr) < model.n_weights:
        log.warning("%d training rows for %d weights; the fit is underdetermined", len(y_tr), model.n_weights)

    def val_mse(m):
        if X_val is None:
            return None
        return float(np.mean((y_val - forward(m, X_val)) ** 2))

    trace = TrainingTrace()
    w = model.get_weights()
    mu = config.mu0
    r, J = jacobian(model, X_tr, y_tr)
    sse = float(r @ r)
    best_w = w.copy()
    best_score = val_mse(model) if X_val is not None else sse / len(y_tr)
    trace.epochs.append({"epoch": 0, "train_mse": sse / len(y_tr), "val_mse": val_mse(model), "mu": mu})
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        grad = J.T @ r
        if np.max(np.abs(grad)) < config.grad_tol:
            trace.stop_reason = "grad_tol"
            break
        if sse / len(y_tr) <= config.goal_mse:
            trace.stop_reason = "goal_mse"
            break
        accepted = False
        solved_any = False
        while mu <= config.mu_max:
            try:
                dw = lm_step(J, r, mu)
            except (linalg.LinAlgError, ValueError):
                trace.attempts.append({"epoch": epoch, "mu": mu, "sse": None, "accepted": False})
                mu *= config.mu_inc
                continue
            solved_any = True
            w_try = w - dw
            trial = model.with_weights(w_try)
            r_try = y_tr - forward(trial, X_tr)
            sse_try = float(r_try @ r_try)
            if math.isfinite(sse_try) and sse_try < sse:
                trace.attempts.append({"epoch": epoch, "mu": mu, "sse": sse_try, "accepted": True})
                mu *= config.mu_dec
                w, model, sse = w_try, trial, sse_try
                accepted = True
                break
            trace.attempts.append({"epoch": epoch, "mu": mu, "sse": sse_try, "accepted": False})
            mu *= config.mu_inc
        if not accepted:
            if not solved_any:
                raise TrainingError(f"normal equations unsolvable for every damping up to mu_max at epoch {epoch}")
            trace.stop_reason = "mu_max"
            break
        r, J = jacobian(model, X_tr, y_tr)
        v = val_mse(model)
        trace.epochs.append({"epoch": epoch, "train_mse": sse / len(y_tr), "val_mse": v, "mu": mu})
        score = v if v is not None else sse / len(y_tr)
        if score < best_score:
            best_score, best_w, since_best = score, w.copy(), 0
            trace.best_epoch = epoch
        else:
            since_best += 1
            if X_val is not None and since_best >= config.patience:
                trace.stop_reason = "patience"
                break
    else:
        trace.stop_reason = "max_epochs"
    return model.with_weights(best_w), trace


@dataclass
class HiddenSizeResult:
    n_hidden: int
    val_mse: float
    model: MlpModel | None
    trace: TrainingTrace | None
    error: str | None = None


def candidate_seed(seed: int, n_hidden: int) -> list[int]:
    return [int(seed), int(n_hidden)]


def select_hidden_size(X, y, config: TrainConfig = TrainConfig()) -> tuple[int, list[HiddenSizeResult]]:
    """Train one model per hidden size and keep the lowest validation MSE (ties: smaller size)."""
    if not config.hidden_candidates:
        raise ConfigError("hidden_candidates must not be empty")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    X_tr, y_tr, X_val, y_val = _split_validation(X, y, config.validation_fraction)
    results = []
    for h in sorted(set(config.hidden_candidates)):
        try:
            model, trace = train_lm(X, y, h, config, seed=candidate_seed(config.seed, h))
        except (TrainingError, np.linalg.LinAlgError) as exc:
            results.append(HiddenSizeResult(h, math.inf, None, None, str(exc)))
            continue
        model.seed = config.seed
        if X_val is not None:
            score = float(np.mean((y_val - forward(model, X_val)) ** 2))
        else:
            score = float(np.mean((y_tr - forward(model, X_tr)) ** 2))
        results.append(HiddenSizeResult(h, score, model, trace))
    ok = [res for res in results if res.model is not None]
    if not ok:
        raise TrainingError("training failed for every hidden-layer size: " + "; ".join(r.error for r in results))
    best = min(ok, key=lambda res: (res.val_mse, res.n_hidden))
    return best.n_hidden, results


# --------------------------------------------------------------------------
# Serialization


def _num(x) -> str:
    return format(float(x), ".17g")


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format": "rsiforecast-mlp",
        "version": MODEL_FORMAT_VERSION,
        "n_inputs": model.n_inputs,
        "n_hidden": model.n_hidden,
        "activation": {"hidden": "logistic", "output": "linear"},
        "W1": [[_num(v) for v in row] for row in model.W1],
        "b1": [_num(v) for v in model.b1],
        "w2": [_num(v) for v in model.w2],
        "b2": _num(model.b2),
        "feature_names": list(model.feature_names),
        "fingerprint": model.fingerprint,
        "seed": model.seed,
        "scaling": model.scaling.to_dict() if model.scaling is not None else None,
    }


def model_from_dict(d: dict) -> MlpModel:
    if d.get("format") != "rsiforecast-mlp":
        raise ValueError("not a model document")
    if d.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    return MlpModel(
        n_inputs=int(d["n_inputs"]),
        n_hidden=int(d["n_hidden"]),
        W1=np.array([[float(v) for v in row] for row in d["W1"]]),
        b1=np.array([float(v) for v in d["b1"]]),
        w2=np.array([float(v) for v in d["w2"]]),
        b2=float(d["b2"]),
        scaling=ScalingParams.from_dict(d["scaling"]) if d.get("scaling") else None,
        feature_names=tuple(d.get("feature_names", ())),
        fingerprint=d.get("fingerprint", ""),
        seed=d.get("seed"),
    )


def save_model(model: MlpModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")
    return path


def load_model(path) -> MlpModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
