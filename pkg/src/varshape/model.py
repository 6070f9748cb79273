"""Trainable test functions and the affine functional they induce on measures.

The test function is a small MLP on concatenated (position, direction)
coordinates with sigmoid hidden activations and a linear output; the model
output for a measure mu is ``<mu, h> + bias``, linear in mu and affine in
the measure. Everything runs in 64-bit floats with exact reverse-mode
gradients.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import BadDims, BadLabel, LengthMismatch, SchemaError, ShapeMismatch
from .varifold import DiscreteVarifold

SIGMOID_LIPSCHITZ = 0.25


@dataclass
class Mlp:
    """Layer widths ``dims`` with per-layer row-major weight matrices and biases."""

    dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        check_dims(self.dims)
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.dims) - 1:
            raise ShapeMismatch("one weight matrix and bias per layer required")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[l + 1], self.dims[l]) or b.shape != (self.dims[l + 1],):
                raise ShapeMismatch(f"layer {l} shapes inconsistent with dims {self.dims}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]


@dataclass
class AffineFunctional:
    """A measure-to-vector model: ``mu -> <mu, h> + bias``."""

    mlp: Mlp
    bias: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=np.float64).ravel()
        if len(self.bias) != self.mlp.out_dim:
            raise ShapeMismatch("bias length must equal the output width")


@dataclass
class Gradients:
    """Shape-mirror of an AffineFunctional's parameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    bias: np.ndarray


def check_dims(dims) -> None:
    if len(dims) < 2 or any(int(d) <= 0 for d in dims):
        raise BadDims(f"invalid layer widths {dims!r}")


def param_count(dims) -> int:
    """Number of MLP parameters, sum of d_in * d_out + d_out over layers.

    The output-side bias vector of the affine functional is excluded; see
    :func:`param_count_with_bias`.
    """
    check_dims(dims)
    return int(sum(dims[l] * dims[l + 1] + dims[l + 1] for l in range(len(dims) - 1)))


def param_count_with_bias(dims) -> int:
    return param_count(dims) + int(dims[-1])


def init(dims, seed) -> Mlp:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    check_dims(dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for l in range(len(dims) - 1):
        fan_in, fan_out = dims[l], dims[l + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(tuple(int(d) for d in dims), weights, biases)


def new_model(dims, seed) -> AffineFunctional:
    return AffineFunctional(init(dims, seed), np.zeros(int(dims[-1])))


# ---------------------------------------------------------------------------
# evaluation


def forward_batch(mlp: Mlp, points: np.ndarray) -> np.ndarray:
    """Evaluate h on a batch of points, shape (m, in_dim) -> (m, out_dim)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != mlp.in_dim:
        raise ShapeMismatch(f"expected points of width {mlp.in_dim}, got {points.shape}")
    a = points
    for w, b in zip(mlp.weights[:-1], mlp.biases[:-1]):
        a = expit(a @ w.T + b)
    return a @ mlp.weights[-1].T + mlp.biases[-1]


def forward(mlp: Mlp, point: np.ndarray) -> np.ndarray:
    """Evaluate h at a single point of width ``dims[0]``."""
    point = np.asarray(point, dtype=np.float64).ravel()
    if len(point) != mlp.in_dim:
        raise ShapeMismatch(f"expected a point of width {mlp.in_dim}, got {len(point)}")
    return forward_batch(mlp, point[None, :])[0]


def functional_output(model: AffineFunctional, features: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_i w_i h(f_i) + bias`` over arbitrary feature rows."""
    values = forward_batch(model.mlp, features)
    return weights @ values + model.bias


def model_output(model: AffineFunctional, mu: DiscreteVarifold) -> np.ndarray:
    """``<mu, h> + bias`` on the measure's (position, direction) supports."""
    if 2 * mu.dim != model.mlp.in_dim:
        raise ShapeMismatch(
            f"model expects input width {model.mlp.in_dim}, measure supports have {2 * mu.dim}"
        )
    return functional_output(model, mu.supports(), mu.weights)


# ---------------------------------------------------------------------------
# gradients


def _forward_trace(mlp: Mlp, points: np.ndarray) -> list[np.ndarray]:
    activations = [np.asarray(points, dtype=np.float64)]
    a = activations[0]
    for w, b in zip(mlp.weights[:-1], mlp.biases[:-1]):
        a = expit(a @ w.T + b)
        activations.append(a)
    return activations


def backward_rows(
    mlp: Mlp,
    features: np.ndarray,
    row_weights: np.ndarray,
    row_upstreams: np.ndarray,
    activations: list[np.ndarray] | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of ``sum_i r_i <u_i, h(f_i)>`` w.r.t. the MLP parameters.

    ``row_weights`` r and ``row_upstreams`` u have one entry (resp. row) per
    feature row, so one call covers a whole minibatch of measures at once.
    A forward trace from the same features may be passed to skip recomputing it.
    """
    if activations is None:
        activations = _forward_trace(mlp, features)
    g = row_weights[:, None] * row_upstreams
    d_weights: list[np.ndarray] = [None] * len(mlp.weights)
    d_biases: list[np.ndarray] = [None] * len(mlp.biases)
    for l in range(len(mlp.weights) - 1, -1, -1):
        d_weights[l] = g.T @ activations[l]
        d_biases[l] = g.sum(axis=0)
        if l > 0:
            a = activations[l]
            g = (g @ mlp.weights[l]) * a * (1.0 - a)
    return d_weights, d_biases


def backward(model: AffineFunctional, mu: DiscreteVarifold, upstream: np.ndarray) -> Gradients:
    """Exact gradients of ``<upstream, model_output(mu)>`` w.r.t. all parameters."""
    upstream = np.asarray(upstream, dtype=np.float64).ravel()
    if len(upstream) != model.mlp.out_dim:
        raise ShapeMismatch("upstream length must equal the output width")
    if 2 * mu.dim != model.mlp.in_dim:
        raise ShapeMismatch("measure dimension incompatible with the model")
    rows = np.repeat(upstream[None, :], mu.n_atoms, axis=0)
    d_weights, d_biases = backward_rows(model.mlp, mu.supports(), mu.weights, rows)
    return Gradients(d_weights, d_biases, upstream.copy())


# ---------------------------------------------------------------------------
# losses


def mse_loss(predictions, labels) -> tuple[float, list[np.ndarray]]:
    """Mean squared error over items; returns per-item upstream gradients.

    loss = (1/R) sum_j ||pred_j - y_j||^2, upstream_j = (2/R)(pred_j - y_j).
    """
    if len(predictions) != len(labels):
        raise LengthMismatch("predictions and labels differ in length")
    r = len(predictions)
    loss = 0.0
    upstreams = []
    for p, y in zip(predictions, labels):
        diff = np.atleast_1d(np.asarray(p, dtype=np.float64) - np.asarray(y, dtype=np.float64))
        loss += float(diff @ diff)
        upstreams.append(2.0 * diff / r)
    return loss / r, upstreams


def softmax_cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Stabilized cross-entropy of softmax(logits) against a class index.

    Returns the loss and its gradient w.r.t. the logits, softmax - one_hot.
    """
    logits = np.asarray(logits, dtype=np.float64).ravel()
    if not 0 <= int(label) < len(logits):
        raise BadLabel(f"label {label} outside 0..{len(logits) - 1}")
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    probs = np.exp(shifted - log_z)
    upstream = probs.copy()
    upstream[int(label)] -= 1.0
    return float(log_z - shifted[int(label)]), upstream


# ---------------------------------------------------------------------------
# Lipschitz upper bound


def spectral_norm(w: np.ndarray, iterations: int = 100, tol: float = 1e-10) -> float:
    """Largest singular value by power iteration on W^T W."""
    w = np.asarray(w, dtype=np.float64)
    v = np.ones(w.shape[1]) / np.sqrt(w.shape[1])
    sigma = 0.0
    for _ in range(iterations):
        u = w @ v
        norm_u = np.linalg.norm(u)
        if norm_u == 0:
            return 0.0
        v = w.T @ u
        norm_v = np.linalg.norm(v)
        if norm_v == 0:
            return 0.0
        v /= norm_v
        new_sigma = norm_v / norm_u
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            sigma = new_sigma
            break
        sigma = new_sigma
    return float(sigma)


def lipschitz_upper_bound(mlp: Mlp) -> float:
    """Product of layer spectral norms times 1/4 per sigmoid hidden layer.

    Valid on all of input space (sigmoid slope is at most 1/4); for vector
    outputs the bound is w.r.t. the Euclidean norm of the output.
    """
    bound = 1.0
    for w in mlp.weights:
        bound *= spectral_norm(w)
    hidden = len(mlp.dims) - 2
    return float(bound * SIGMOID_LIPSCHITZ**hidden)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: AffineFunctional, path) -> None:
    """Write the model as JSON; floats keep full round-trip precision."""
    payload = {
        "dims": list(model.mlp.dims),
        "activation": "sigmoid",
        "weights": [w.tolist() for w in model.mlp.weights],
        "biases": [b.tolist() for b in model.mlp.biases],
        "output_bias": model.bias.tolist(),
        "meta": model.meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> AffineFunctional:
    """Read a checkpoint back; raises SchemaError on any shape inconsistency."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"checkpoint is not valid JSON: {exc}") from exc
    try:
        dims = tuple(int(d) for d in payload["dims"])
        if payload.get("activation") != "sigmoid":
            raise SchemaError(f"unsupported activation {payload.get('activation')!r}")
        weights = [np.array(w, dtype=np.float64) for w in payload["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in payload["biases"]]
        bias = np.array(payload["output_bias"], dtype=np.float64)
        meta = dict(payload.get("meta", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed checkpoint: {exc}") from exc
    try:
        mlp = Mlp(dims, weights, biases)
        return AffineFunctional(mlp, bias, meta)
    except (BadDims, ShapeMismatch) as exc:
        raise SchemaError(str(exc)) from exc
