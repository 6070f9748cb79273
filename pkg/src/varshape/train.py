"""Optimization and experiment logic.

Training runs plain minibatch Adam over the affine measure functional. All
loops are sequential with fixed-order accumulation, so a (config, seed) pair
reproduces final parameters bitwise.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as mdl
from .errors import DimensionMismatch, KindMismatch, SchemaError, ShapeMismatch
from .mesh import TriMesh, all_triangle_geometry, decimate_cluster, remove_faces
from .model import AffineFunctional, Gradients, forward_batch
from .rotation import geodesic_distance_so3, project_to_so3
from .varifold import DiscreteVarifold, from_mesh, normalize_mass, total_mass

REPRESENTATIONS = ("varifold", "spatial", "directional")
LABEL_KINDS = ("class", "angle", "rotation9")


@dataclass
class LabeledDataset:
    """Measures with labels; meshes are kept when perturbation sweeps need them."""

    measures: list[DiscreteVarifold]
    labels: list
    label_kind: str
    representation: str = "varifold"
    meshes: list[TriMesh] | None = None

    def __post_init__(self):
        if self.label_kind not in LABEL_KINDS:
            raise ValueError(f"unknown label kind {self.label_kind!r}")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")
        if len(self.measures) != len(self.labels):
            raise ValueError("measures and labels differ in length")
        if self.meshes is not None and len(self.meshes) != len(self.measures):
            raise ValueError("meshes and measures differ in length")

    def __len__(self) -> int:
        return len(self.measures)

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(
            [self.measures[i] for i in indices],
            [self.labels[i] for i in indices],
            self.label_kind,
            self.representation,
            None if self.meshes is None else [self.meshes[i] for i in indices],
        )


@dataclass
class TrainConfig:
    dims: tuple[int, ...]
    lr: float = 0.005
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    split_fraction: float = 0.8
    mass_target: float | str | None = None  # number, "mean", or None
    representation: str = "varifold"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must be in (0, 1)")


@dataclass
class Metrics:
    epoch_loss: list[float] = field(default_factory=list)
    epoch_accuracy: list[float] | None = None
    accuracy: float | None = None
    mean_error: float | None = None
    r2: float | None = None
    wall_clock: float = 0.0


def feature_rows(mu: DiscreteVarifold, representation: str) -> np.ndarray:
    """Model inputs for one measure under the chosen representation."""
    if representation == "varifold":
        return mu.supports()
    if representation == "spatial":
        return mu.positions
    if representation == "directional":
        return mu.directions
    raise ValueError(f"unknown representation {representation!r}")


def input_width(dim: int, representation: str) -> int:
    return 2 * dim if representation == "varifold" else dim


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None


def _param_arrays(model: AffineFunctional) -> list[np.ndarray]:
    return [*model.mlp.weights, *model.mlp.biases, model.bias]


def _grad_arrays(grads: Gradients) -> list[np.ndarray]:
    return [*grads.weights, *grads.biases, grads.bias]


def adam_step(state: AdamState, model: AffineFunctional, grads: Gradients) -> AffineFunctional:
    """One bias-corrected Adam update; returns the updated model.

    The state's moment accumulators are updated in place (single writer
    between evaluation passes).
    """
    params = _param_arrays(model)
    glist = _grad_arrays(grads)
    if len(params) != len(glist) or any(p.shape != g.shape for p, g in zip(params, glist)):
        raise ShapeMismatch("gradient shapes do not mirror the parameters")
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    new_params = []
    for p, g, m, v in zip(params, glist, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        new_params.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    k = len(model.mlp.weights)
    mlp = mdl.Mlp(model.mlp.dims, new_params[:k], new_params[k:2 * k])
    return AffineFunctional(mlp, new_params[-1], dict(model.meta))


# ---------------------------------------------------------------------------
# splitting


def split(dataset: LabeledDataset, fraction: float, seed) -> tuple[LabeledDataset, LabeledDataset]:
    """Shuffled deterministic split into (train, test); disjoint and exhaustive."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    n_train = min(len(dataset) - 1, max(1, int(round(fraction * len(dataset)))))
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])


# ---------------------------------------------------------------------------
# shared training loop


def _resolve_mass_target(measures, target):
    if target is None:
        return None
    if target == "mean":
        return float(np.mean([total_mass(m) for m in measures]))
    return float(target)


def _prepare(measures, representation, mass_target):
    if mass_target is not None:
        measures = [normalize_mass(m, mass_target) for m in measures]
    return [feature_rows(m, representation) for m in measures], [m.weights for m in measures]


def _check_width(dataset: LabeledDataset, dims) -> None:
    need = input_width(dataset.measures[0].dim, dataset.representation)
    if dims[0] != need:
        raise DimensionMismatch(
            f"dims[0]={dims[0]} but {dataset.representation} features have width {need}"
        )


def _batched_outputs(mlp, features, weights, bias):
    """Per-item functional outputs plus the forward trace for reuse in backprop."""
    rows = np.concatenate(features)
    trace = mdl._forward_trace(mlp, rows)
    values = trace[-1] @ mlp.weights[-1].T + mlp.biases[-1]
    w = np.concatenate(weights)
    bounds = np.cumsum([0] + [len(f) for f in features])
    outputs = np.add.reduceat(w[:, None] * values, bounds[:-1], axis=0) + bias
    return outputs, rows, w, bounds, trace


def _batch_gradients(model, rows, w, bounds, trace, upstreams):
    row_up = np.repeat(np.asarray(upstreams), np.diff(bounds), axis=0)
    d_w, d_b = mdl.backward_rows(model.mlp, rows, w, row_up, activations=trace)
    return Gradients(d_w, d_b, np.sum(upstreams, axis=0))


def _train_loop(dataset: LabeledDataset, config: TrainConfig, classification: bool):
    _check_width(dataset, config.dims)
    start = time.perf_counter()
    mass_target = _resolve_mass_target(dataset.measures, config.mass_target)
    features, weights = _prepare(dataset.measures, dataset.representation, mass_target)
    n = len(dataset)
    if classification:
        labels = np.asarray(dataset.labels, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= config.dims[-1]:
            raise SchemaError(f"class labels exceed output width {config.dims[-1]}")
        onehot = np.eye(config.dims[-1])[labels]
    else:
        labels = np.asarray(dataset.labels, dtype=np.float64)
        if labels.ndim == 1:
            labels = labels[:, None]
        if labels.shape[1] != config.dims[-1]:
            raise SchemaError(f"labels of width {labels.shape[1]} vs output width {config.dims[-1]}")

    model = mdl.new_model(config.dims, config.seed)
    model.meta = {
        "seed": config.seed,
        "epochs": config.epochs,
        "representation": dataset.representation,
        "label_kind": dataset.label_kind,
        "mass_target": mass_target,
        "train_mean_mass": float(np.mean([total_mass(m) for m in dataset.measures])),
    }
    state = AdamState(lr=config.lr)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    metrics = Metrics(epoch_accuracy=[] if classification else None)

    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            outputs, rows, w, bounds, trace = _batched_outputs(
                model.mlp, [features[i] for i in idx], [weights[i] for i in idx], model.bias
            )
            if classification:
                shifted = outputs - outputs.max(axis=1, keepdims=True)
                log_z = np.log(np.exp(shifted).sum(axis=1))
                item_losses = log_z - shifted[np.arange(len(idx)), labels[idx]]
                probs = np.exp(shifted - log_z[:, None])
                upstreams = (probs - onehot[idx]) / len(idx)
                correct += int((outputs.argmax(axis=1) == labels[idx]).sum())
            else:
                diff = outputs - labels[idx]
                item_losses = np.einsum("ij,ij->i", diff, diff)
                upstreams = 2.0 * diff / len(idx)
            epoch_loss += float(item_losses.sum())
            grads = _batch_gradients(model, rows, w, bounds, trace, upstreams)
            model = adam_step(state, model, grads)
        metrics.epoch_loss.append(epoch_loss / n)
        if classification:
            metrics.epoch_accuracy.append(correct / n)
    metrics.wall_clock = time.perf_counter() - start
    return model, metrics


def train_regression(dataset: LabeledDataset, config: TrainConfig):
    """Minibatch Adam with mean-squared-error loss; deterministic per seed."""
    if dataset.label_kind == "class":
        raise KindMismatch("regression requires scalar or 9-vector labels")
    return _train_loop(dataset, config, classification=False)


def train_classification(dataset: LabeledDataset, config: TrainConfig):
    """Minibatch Adam with softmax cross-entropy; records loss and accuracy."""
    if dataset.label_kind != "class":
        raise KindMismatch("classification requires class labels")
    if config.dims[-1] < 2:
        raise ValueError("classification needs at least 2 output logits")
    return _train_loop(dataset, config, classification=True)


# ---------------------------------------------------------------------------
# evaluation


def predict(model: AffineFunctional, dataset: LabeledDataset) -> np.ndarray:
    """Model outputs for every item, honoring the model's mass normalization."""
    mass_target = model.meta.get("mass_target")
    features, weights = _prepare(dataset.measures, dataset.representation, mass_target)
    outputs, *_ = _batched_outputs(model.mlp, features, weights, model.bias)
    return outputs


def _r2(truth: np.ndarray, preds: np.ndarray) -> float:
    ss_res = float(np.sum((preds - truth) ** 2))
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def evaluate_regression(model: AffineFunctional, dataset: LabeledDataset, kind: str) -> Metrics:
    """Mean error in degrees plus the coefficient of determination.

    ``angle``: error is |pred - y| on the raw scalars. ``rotation9``: the
    prediction is projected to the nearest rotation and the error is the
    geodesic distance to the label; R^2 compares geodesic distances from the
    identity, predicted vs ground truth.
    """
    if kind not in ("angle", "rotation9") or dataset.label_kind != kind:
        raise KindMismatch(f"dataset holds {dataset.label_kind!r} labels, requested {kind!r}")
    outputs = predict(model, dataset)
    if kind == "angle":
        preds = outputs[:, 0]
        truth = np.asarray(dataset.labels, dtype=np.float64)
        errors = np.degrees(np.abs(preds - truth))
        r2 = _r2(truth, preds)
    else:
        eye = np.eye(3)
        truth_R = [np.asarray(y, dtype=np.float64).reshape(3, 3) for y in dataset.labels]
        pred_R = [project_to_so3(o) for o in outputs]
        errors = np.degrees([geodesic_distance_so3(t, p) for t, p in zip(truth_R, pred_R)])
        truth = np.array([geodesic_distance_so3(eye, t) for t in truth_R])
        preds = np.array([geodesic_distance_so3(eye, p) for p in pred_R])
        r2 = _r2(truth, preds)
    return Metrics(mean_error=float(np.mean(errors)), r2=r2)


def evaluate_classification(model: AffineFunctional, dataset: LabeledDataset) -> Metrics:
    """Argmax accuracy."""
    if dataset.label_kind != "class":
        raise KindMismatch("classification evaluation needs class labels")
    labels = np.asarray(dataset.labels, dtype=np.int64)
    if labels.max() >= model.mlp.out_dim:
        raise SchemaError(
            f"label {labels.max()} outside the checkpoint's {model.mlp.out_dim} classes"
        )
    outputs = predict(model, dataset)
    return Metrics(accuracy=float((outputs.argmax(axis=1) == labels).mean()))


# ---------------------------------------------------------------------------
# robustness and ablation


def _mesh_features(mesh: TriMesh, representation: str, mass_target):
    """Feature rows and weights straight from mesh geometry; empty if all faces degenerate."""
    centers, normals, areas, valid = all_triangle_geometry(mesh)
    if not valid.any():
        d = mesh.vertices.shape[1]
        width = input_width(d, representation)
        return np.zeros((0, width)), np.zeros(0)
    mu = DiscreteVarifold(centers[valid], normals[valid], areas[valid])
    if mass_target is not None:
        mu = normalize_mass(mu, mass_target)
    return feature_rows(mu, representation), mu.weights


def robustness_sweep(
    model: AffineFunctional,
    dataset: LabeledDataset,
    perturbation: str,
    levels,
    rescale: bool,
    seed: int = 0,
    mass_target: float | None = None,
) -> list[dict]:
    """Metric per perturbation level, re-deriving measures from the stored meshes.

    ``remove_faces`` levels are missing-face fractions; ``decimate`` levels
    are face-count ratios. With ``rescale`` every perturbed measure is
    normalized to ``mass_target`` (default: the model's recorded mean
    training mass) before evaluation.
    """
    if dataset.meshes is None:
        raise ValueError("dataset does not carry meshes")
    if perturbation not in ("remove_faces", "decimate"):
        raise ValueError(f"unknown perturbation {perturbation!r}")
    if rescale and mass_target is None:
        mass_target = model.meta.get("train_mean_mass")
        if mass_target is None:
            raise ValueError("no mass target available for rescaling")
    target = mass_target if rescale else model.meta.get("mass_target")

    labels = dataset.labels
    rows = []
    for li, level in enumerate(levels):
        outputs = []
        for ii, mesh in enumerate(dataset.meshes):
            if perturbation == "remove_faces":
                pert = remove_faces(mesh, level, seed=[seed, li, ii])
            else:
                pert = decimate_cluster(mesh, level)
            feats, w = _mesh_features(pert, dataset.representation, target)
            outputs.append(w @ forward_batch(model.mlp, feats) + model.bias)
        outputs = np.array(outputs)
        row = {"level": float(level)}
        if dataset.label_kind == "class":
            truth = np.asarray(labels, dtype=np.int64)
            row["accuracy"] = float((outputs.argmax(axis=1) == truth).mean())
        elif dataset.label_kind == "angle":
            truth = np.asarray(labels, dtype=np.float64)
            preds = outputs[:, 0]
            row["mean_error"] = float(np.degrees(np.abs(preds - truth)).mean())
            row["r2"] = _r2(truth, preds)
        else:
            eye = np.eye(3)
            truth_R = [np.asarray(y, dtype=np.float64).reshape(3, 3) for y in labels]
            pred_R = [project_to_so3(o) for o in outputs]
            errs = [geodesic_distance_so3(t, p) for t, p in zip(truth_R, pred_R)]
            row["mean_error"] = float(np.degrees(np.mean(errs)))
            row["r2"] = _r2(
                np.array([geodesic_distance_so3(eye, t) for t in truth_R]),
                np.array([geodesic_distance_so3(eye, p) for p in pred_R]),
            )
        rows.append(row)
    return rows


def ablate_representation(dataset: LabeledDataset, config: TrainConfig) -> dict[str, Metrics]:
    """Train one model per measure representation under an identical budget.

    The hidden widths of ``config.dims`` are kept; the input width is derived
    from each representation. Metrics are computed on the held-out split.
    """
    results: dict[str, Metrics] = {}
    for rep in REPRESENTATIONS:
        rep_data = replace_representation(dataset, rep)
        width = input_width(rep_data.measures[0].dim, rep)
        dims = (width, *config.dims[1:])
        cfg = replace(config, dims=dims, representation=rep)
        train_set, test_set = split(rep_data, config.split_fraction, config.seed)
        if dataset.label_kind == "class":
            model, _ = train_classification(train_set, cfg)
            results[rep] = evaluate_classification(model, test_set)
        else:
            model, _ = train_regression(train_set, cfg)
            results[rep] = evaluate_regression(model, test_set, dataset.label_kind)
    return results


def replace_representation(dataset: LabeledDataset, representation: str) -> LabeledDataset:
    return LabeledDataset(
        dataset.measures, dataset.labels, dataset.label_kind, representation, dataset.meshes
    )


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(
    model: AffineFunctional,
    mu: DiscreteVarifold,
    label,
    loss_kind: str,
    eps: float = 1e-5,
    max_params: int = 10_000,
    seed: int = 0,
) -> float:
    """Max relative error between backprop and central finite differences.

    Checks every parameter, or a random 200-parameter subsample when the
    model exceeds ``max_params``. The error is |fd - bp| / max(|fd|, |bp|, 1):
    the unit floor keeps finite-difference roundoff on near-zero gradients
    from registering as disagreement.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must be in [1e-7, 1e-3]")

    def loss_and_upstream(m: AffineFunctional):
        out = mdl.model_output(m, mu)
        if loss_kind == "mse":
            loss, ups = mdl.mse_loss([out], [label])
            return loss, ups[0]
        if loss_kind == "xent":
            return mdl.softmax_cross_entropy(out, label)
        raise ValueError(f"unknown loss kind {loss_kind!r}")

    _, upstream = loss_and_upstream(model)
    analytic = _grad_arrays(backward_with_meta(model, mu, upstream))
    params = _param_arrays(model)
    flat_an = np.concatenate([a.ravel() for a in analytic])
    total = len(flat_an)
    if total > max_params:
        rng = np.random.default_rng(seed)
        indices = rng.choice(total, size=200, replace=False)
    else:
        indices = np.arange(total)

    sizes = [p.size for p in params]
    offsets = np.cumsum([0] + sizes)

    def perturbed_loss(flat_index: int, delta: float) -> float:
        k = int(np.searchsorted(offsets, flat_index, side="right") - 1)
        local = flat_index - offsets[k]
        original = params[k].ravel()[local]
        params[k].ravel()[local] = original + delta
        try:
            return loss_and_upstream(model)[0]
        finally:
            params[k].ravel()[local] = original

    worst = 0.0
    for i in indices:
        fd = (perturbed_loss(int(i), eps) - perturbed_loss(int(i), -eps)) / (2 * eps)
        an = flat_an[i]
        err = abs(fd - an) / max(abs(fd), abs(an), 1.0)
        worst = max(worst, err)
    return worst


def backward_with_meta(model: AffineFunctional, mu: DiscreteVarifold, upstream):
    """backward() for models whose input width may be a marginal's width."""
    rep = model.meta.get("representation", "varifold")
    if rep == "varifold" and model.mlp.in_dim == 2 * mu.dim:
        return mdl.backward(model, mu, upstream)
    feats = feature_rows(mu, rep)
    upstream = np.asarray(upstream, dtype=np.float64).ravel()
    rows = np.repeat(upstream[None, :], mu.n_atoms, axis=0)
    d_w, d_b = mdl.backward_rows(model.mlp, feats, mu.weights, rows)
    return Gradients(d_w, d_b, upstream.copy())


# ---------------------------------------------------------------------------
# CSV emission


def write_metrics_csv(metrics: Metrics, path) -> None:
    """Per-epoch rows: epoch,loss[,accuracy]."""
    with open(path, "w", encoding="utf-8") as fh:
        if metrics.epoch_accuracy is not None:
            fh.write("epoch,loss,accuracy\n")
            for e, (l, a) in enumerate(zip(metrics.epoch_loss, metrics.epoch_accuracy), start=1):
                fh.write(f"{e},{l!r},{a!r}\n")
        else:
            fh.write("epoch,loss\n")
            for e, l in enumerate(metrics.epoch_loss, start=1):
                fh.write(f"{e},{l!r}\n")


def write_eval_csv(metrics: Metrics, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if metrics.accuracy is not None:
            fh.write("accuracy\n")
            fh.write(f"{metrics.accuracy!r}\n")
        else:
            fh.write("mean_error,r2\n")
            fh.write(f"{metrics.mean_error!r},{metrics.r2!r}\n")


def write_sweep_csv(rows: list[dict], path) -> None:
    """Sweep table: level,metric[,r2]."""
    if not rows:
        raise ValueError("empty sweep table")
    keys = list(rows[0].keys())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[k]) for k in keys) + "\n")
