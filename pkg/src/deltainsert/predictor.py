"""Delta-pose predictors: ground-truth oracles with noise profiles, k-NN and ridge regressors."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .geometry import DeltaPose, planar_distance, wrap_angle
from .observation import features


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian error profile for the oracle predictor.

    The planar standard deviation shrinks linearly from ``sigma_xy_far`` at
    ``near_radius`` (and beyond) to ``sigma_xy_near`` at the goal.
    ``xy_correlation`` is the step-to-step autocorrelation of the planar
    error inside one episode; 0 draws fresh noise on every call. Height and
    yaw errors are always fresh.
    """

    sigma_xy_near: float = 0.0
    sigma_xy_far: float = 0.0
    sigma_z: float = 0.0
    sigma_psi: float = 0.0
    near_radius: float = 0.01
    xy_correlation: float = 0.0

    def __post_init__(self):
        if min(self.sigma_xy_near, self.sigma_xy_far, self.sigma_z, self.sigma_psi) < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if not self.near_radius > 0:
            raise ValueError("near_radius must be positive")
        if not 0.0 <= self.xy_correlation <= 1.0:
            raise ValueError("xy_correlation must lie in [0, 1]")

    def sigma_xy(self, distance: float) -> float:
        f = min(distance / self.near_radius, 1.0)
        return self.sigma_xy_near + f * (self.sigma_xy_far - self.sigma_xy_near)


ZERO_NOISE = NoiseSpec()


@dataclass(frozen=True)
class PredictionContext:
    observation: object
    true_delta: DeltaPose


def oracle_with_unit_noise(true_delta: DeltaPose, noise: NoiseSpec, unit) -> DeltaPose:
    """Ground truth plus ``unit`` (four standard normals) scaled by the profile."""
    s = noise.sigma_xy(planar_distance(true_delta))
    return DeltaPose(true_delta.dx + s * unit[0], true_delta.dy + s * unit[1],
                     true_delta.dz + noise.sigma_z * unit[2],
                     wrap_angle(true_delta.dpsi + noise.sigma_psi * unit[3]))


def predict_oracle(ctx: PredictionContext, noise: NoiseSpec,
                   rng: np.random.Generator) -> DeltaPose:
    return oracle_with_unit_noise(ctx.true_delta, noise, rng.standard_normal(4))


class OraclePredictor:
    """Oracle shared across episodes; each episode gets its own noise process."""

    kind = "oracle"

    def __init__(self, noise: NoiseSpec = ZERO_NOISE):
        self.noise = noise

    def episode(self, rng: np.random.Generator):
        noise = self.noise
        rho = noise.xy_correlation
        innov = math.sqrt(1.0 - rho * rho)
        state = {"xy": None}

        def policy(obs, true_delta: DeltaPose) -> DeltaPose:
            unit = rng.standard_normal(4)
            if state["xy"] is not None:
                unit[:2] = rho * state["xy"] + innov * unit[:2]
            state["xy"] = unit[:2].copy()
            return oracle_with_unit_noise(true_delta, noise, unit)

        return policy


# --------------------------------------------------------------------------
# learned regressors

KINDS = ("knn", "ridge")
WEIGHTINGS = ("uniform", "inverse_distance")


@dataclass(frozen=True, eq=False)
class PredictionModel:
    """A fitted regressor together with the training set it was fitted on.

    Training rows are kept in a canonical order (sorted by their raw bytes),
    so two datasets holding the same records in different orders give the
    same model. Ridge keeps its rows too so that adaptation can refit on the
    union with new data.
    """

    kind: str
    features: np.ndarray          # (n, F) float64
    labels: np.ndarray            # (n, 4) float64: dx, dy, dz, dpsi
    k: int = 1
    weighting: str = "uniform"
    lam: float = 0.0
    weights: Optional[np.ndarray] = None   # ridge: (F, 5) over dx, dy, dz, sin, cos
    bias: Optional[np.ndarray] = None      # ridge: (5,)

    @property
    def feature_length(self) -> int:
        return self.features.shape[1]

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @cached_property
    def _row_norms(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.features, self.features)


def _stack(dataset) -> tuple:
    feats = np.array([features(r.observation) for r in dataset], dtype=np.float64)
    labels = np.array([r.label.as_array() for r in dataset], dtype=np.float64)
    return feats.reshape(len(dataset), -1), labels.reshape(len(dataset), 4)


def canonical_order(feats: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row permutation that depends only on the multiset of (feature, label) rows."""
    rows = np.ascontiguousarray(np.concatenate([feats, labels], axis=1))
    keys = rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).ravel()
    return np.argsort(keys, kind="stable")


def _canonical(feats, labels):
    order = canonical_order(feats, labels)
    return np.ascontiguousarray(feats[order]), np.ascontiguousarray(labels[order])


def fit_knn(dataset, k: int = 5, weighting: str = "uniform") -> PredictionModel:
    return knn_from_arrays(*_stack(dataset), k=k, weighting=weighting)


def knn_from_arrays(feats: np.ndarray, labels: np.ndarray, k: int = 5,
                    weighting: str = "uniform") -> PredictionModel:
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}")
    if len(feats) == 0:
        raise ValueError("cannot fit k-NN on an empty dataset")
    if not 1 <= k <= len(feats):
        raise ValueError(f"k={k} must lie between 1 and the dataset size {len(feats)}")
    f, l = _canonical(np.asarray(feats, float), np.asarray(labels, float))
    return PredictionModel("knn", f, l, k=k, weighting=weighting)


def _ridge_targets(labels: np.ndarray) -> np.ndarray:
    return np.column_stack([labels[:, :3], np.sin(labels[:, 3]), np.cos(labels[:, 3])])


def solve_ridge(feats: np.ndarray, targets: np.ndarray, lam: float):
    """Minimize ||X w + b - y||^2 + lam ||w||^2 with an unpenalized bias."""
    if lam < 0 or not math.isfinite(lam):
        raise ValueError("lambda must be a finite non-negative number")
    mx = feats.mean(axis=0)
    my = targets.mean(axis=0)
    xc = feats - mx
    gram = xc.T @ xc
    if lam > 0:
        gram[np.diag_indices_from(gram)] += lam
    elif np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise np.linalg.LinAlgError(
            "singular least-squares system; use a regularization lambda > 0")
    w = np.linalg.solve(gram, xc.T @ (targets - my))
    return w, my - mx @ w


def fit_ridge(dataset, lam: float = 1e-3) -> PredictionModel:
    return ridge_from_arrays(*_stack(dataset), lam=lam)


def ridge_from_arrays(feats: np.ndarray, labels: np.ndarray, lam: float = 1e-3) -> PredictionModel:
    if len(feats) == 0:
        raise ValueError("cannot fit ridge on an empty dataset")
    f, l = _canonical(np.asarray(feats, float), np.asarray(labels, float))
    w, b = solve_ridge(f, _ridge_targets(l), lam)
    return PredictionModel("ridge", f, l, lam=lam, weights=w, bias=b)


def refit(model: PredictionModel, feats: np.ndarray, labels: np.ndarray) -> PredictionModel:
    """Same hyperparameters, trained on the model's rows plus the given ones."""
    f = np.concatenate([model.features, feats])
    l = np.concatenate([model.labels, labels])
    if model.kind == "knn":
        return knn_from_arrays(f, l, model.k, model.weighting)
    return ridge_from_arrays(f, l, model.lam)


def knn_neighbors(model: PredictionModel, q: np.ndarray):
    """Indices and exact distances of the k nearest rows, ties to the lowest index.

    Squared distances come from the expansion |x|^2 - 2 x.q + |q|^2 first; every
    row within a rounding margin of the k-th value is then re-scored exactly.
    """
    k = model.k
    approx = model._row_norms - 2.0 * (model.features @ q) + q @ q
    kth = np.partition(approx, k - 1)[k - 1]
    scale = model._row_norms.max() + q @ q
    cand = np.flatnonzero(approx <= kth + 1e-9 * scale + 1e-300)
    diff = model.features[cand] - q
    exact = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((cand, exact))[:k]
    return cand[order], np.sqrt(exact[order])


def _knn_predict(model: PredictionModel, q: np.ndarray) -> DeltaPose:
    idx, dist = knn_neighbors(model, q)
    labels = model.labels[idx]
    if model.weighting == "inverse_distance":
        zero = dist == 0.0
        w = zero.astype(float) if zero.any() else 1.0 / dist
    else:
        w = np.ones(len(idx))
    w = w / w.sum()
    lin = w @ labels[:, :3]
    psi = math.atan2(w @ np.sin(labels[:, 3]), w @ np.cos(labels[:, 3]))
    return DeltaPose(lin[0], lin[1], lin[2], wrap_angle(psi))


def _ridge_predict(model: PredictionModel, q: np.ndarray) -> DeltaPose:
    y = q @ model.weights + model.bias
    return DeltaPose(y[0], y[1], y[2], wrap_angle(math.atan2(y[3], y[4])))


def predict_features(model: PredictionModel, q: np.ndarray) -> DeltaPose:
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.size != model.feature_length:
        raise ValueError(f"feature length {q.size} does not match the model's "
                         f"{model.feature_length}")
    return _knn_predict(model, q) if model.kind == "knn" else _ridge_predict(model, q)


def predict_model(model: PredictionModel, obs) -> DeltaPose:
    return predict_features(model, features(obs))


class LearnedPredictor:
    """Adapter giving a fitted model the same episode interface as the oracle."""

    def __init__(self, model: PredictionModel):
        self.model = model
        self.kind = model.kind

    def episode(self, rng: np.random.Generator):
        model = self.model

        def policy(obs, true_delta: DeltaPose) -> DeltaPose:
            return predict_model(model, obs)

        return policy


# --------------------------------------------------------------------------
# model files
#
# One ASCII header line, then a little-endian float64 payload:
#   deltainsert-model <version> kind=<knn|ridge> k=<int> weighting=<name>
#       lambda=<repr float> feature_len=<F> records=<n>
# payload: features (n*F), labels (n*4), and for ridge weights (F*5), bias (5).

MODEL_MAGIC = "deltainsert-model"
MODEL_VERSION = 1
_HEADER_KEYS = ("kind", "k", "weighting", "lambda", "feature_len", "records")


class ModelFormatError(ValueError):
    def __init__(self, offset: int, message: str):
        super().__init__(f"byte {offset}: {message}")
        self.offset = offset


def model_header(model: PredictionModel) -> str:
    return (f"{MODEL_MAGIC} {MODEL_VERSION} kind={model.kind} k={model.k} "
            f"weighting={model.weighting} lambda={model.lam!r} "
            f"feature_len={model.feature_length} records={model.size}")


def save_model(model: PredictionModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_header(model).encode("ascii") + b"\n")
        parts = [model.features, model.labels]
        if model.kind == "ridge":
            parts += [model.weights, model.bias]
        for a in parts:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _parse_header(raw: bytes) -> dict:
    end = raw.find(b"\n")
    if end < 0:
        raise ModelFormatError(len(raw), "missing header line")
    try:
        line = raw[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(exc.start, "header is not ASCII") from None
    tokens = line.split(" ")
    if tokens[0] != MODEL_MAGIC:
        raise ModelFormatError(0, "not a model file")
    offset = len(tokens[0]) + 1
    if len(tokens) < 2 or not tokens[1].isdigit():
        raise ModelFormatError(offset, "missing format version")
    if int(tokens[1]) != MODEL_VERSION:
        raise ModelFormatError(offset, f"unsupported model version {tokens[1]} "
                                       f"(expected {MODEL_VERSION})")
    offset += len(tokens[1]) + 1
    fields = {}
    for tok in tokens[2:]:
        key, sep, value = tok.partition("=")
        if not sep or key not in _HEADER_KEYS or key in fields:
            raise ModelFormatError(offset, f"unexpected header field {tok!r}")
        fields[key] = (value, offset)
        offset += len(tok) + 1
    for key in _HEADER_KEYS:
        if key not in fields:
            raise ModelFormatError(end, f"header lacks field {key!r}")

    def num(key, cast):
        value, at = fields[key]
        try:
            return cast(value)
        except ValueError:
            raise ModelFormatError(at, f"bad value for {key}: {value!r}") from None

    out = {"kind": fields["kind"][0], "weighting": fields["weighting"][0],
           "k": num("k", int), "lambda": num("lambda", float),
           "feature_len": num("feature_len", int), "records": num("records", int),
           "payload_at": end + 1}
    if out["kind"] not in KINDS:
        raise ModelFormatError(fields["kind"][1], f"unknown model kind {out['kind']!r}")
    if out["weighting"] not in WEIGHTINGS:
        raise ModelFormatError(fields["weighting"][1], "unknown weighting")
    if out["feature_len"] < 1 or out["records"] < 1:
        raise ModelFormatError(fields["records"][1], "empty model")
    return out


def load_model(path) -> PredictionModel:
    raw = open(path, "rb").read()
    if not raw:
        raise ModelFormatError(0, "empty file")
    h = _parse_header(raw)
    n, f = h["records"], h["feature_len"]
    shapes = [(n, f), (n, 4)]
    if h["kind"] == "ridge":
        shapes += [(f, 5), (5,)]
    at = h["payload_at"]
    arrays = []
    for shape in shapes:
        size = 8 * int(np.prod(shape))
        if at + size > len(raw):
            raise ModelFormatError(len(raw), f"payload truncated (needed {at + size} bytes)")
        a = np.frombuffer(raw, dtype="<f8", count=size // 8, offset=at).reshape(shape)
        if not np.isfinite(a).all():
            bad = int(np.flatnonzero(~np.isfinite(a.ravel()))[0])
            raise ModelFormatError(at + 8 * bad, "non-finite value in payload")
        arrays.append(a.astype(np.float64))
        at += size
    if at != len(raw):
        raise ModelFormatError(at, "trailing bytes after payload")
    if h["kind"] == "knn":
        if not 1 <= h["k"] <= n:
            raise ModelFormatError(h["payload_at"] - 1, "k outside 1..records")
        return PredictionModel("knn", arrays[0], arrays[1], k=h["k"], weighting=h["weighting"])
    return PredictionModel("ridge", arrays[0], arrays[1], lam=h["lambda"],
                           weights=arrays[2], bias=arrays[3])
