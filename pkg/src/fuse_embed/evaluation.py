"""Downstream evaluation: splits, MLP classifier, metrics, label masking.

The classifier is a deliberately small two-layer perceptron trained with
plain mini-batch SGD on standardized embedding rows.  Everything here is
deterministic given its seed arguments, and the gradient code is a single
shared function so the analytic gradients can be checked against finite
differences directly.

Masking simulators produce keep-vectors for three missingness regimes:
completely at random (MCAR), dependent on observed node features (MAR), and
dependent on the label itself through per-class offsets (MNAR).  The MAR and
MNAR probability models are logistic scores calibrated by bisection so the
mean masking probability hits the requested rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import Graph, LabelSet

MECHANISMS = ("MCAR", "MAR", "MNAR")
FEATURE_SOURCES = ("given_features", "structural")


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


@dataclass
class Split:
    """Disjoint train/test node index arrays (ascending, observed nodes only)."""

    train_idx: np.ndarray
    test_idx: np.ndarray
    fraction: float
    seed: int


def stratified_split(ls: LabelSet, train_fraction: float, seed: int) -> Split:
    """Split observed nodes into train/test, per-class proportions within 1.

    Per-class train counts come from largest-remainder apportionment of
    ``round(train_fraction * n_observed)`` seats, then are clamped so every
    class keeps at least one node on each side.  Membership within a class
    is a seeded shuffle.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    pool = ls.observed_nodes()
    if pool.size == 0:
        raise ValueError("no observed labels to split")
    labels = ls.labels[pool]
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < 2):
        bad = classes[np.argmin(counts)]
        raise ValueError(f"class {bad} has fewer than 2 observed members")

    target = int(np.floor(train_fraction * pool.size + 0.5))
    base = np.floor(train_fraction * counts).astype(np.int64)
    remainders = train_fraction * counts - base
    extras = target - int(base.sum())
    take = base.copy()
    if extras > 0:
        # ties broken toward the smaller class id for determinism
        order = np.lexsort((classes, -remainders))
        take[order[:extras]] += 1
    take = np.clip(take, 1, counts - 1)

    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for c, t_c in zip(classes, take):
        members = pool[labels == c]
        perm = rng.permutation(members.size)
        train_parts.append(members[perm[:t_c]])
        test_parts.append(members[perm[t_c:]])
    return Split(
        train_idx=np.sort(np.concatenate(train_parts)),
        test_idx=np.sort(np.concatenate(test_parts)),
        fraction=train_fraction,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# MLP classifier
# ---------------------------------------------------------------------------


@dataclass
class MlpModel:
    """Two-layer perceptron with input standardization baked in."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    num_classes: int
    loss_history: list[float] = field(default_factory=list, repr=False)

    def logits(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - self.mu) / self.sigma
        hidden = np.maximum(z @ self.w1 + self.b1, 0.0)
        return hidden @ self.w2 + self.b2

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)


def mlp_loss_and_grads(
    w1: np.ndarray,
    b1: np.ndarray,
    w2: np.ndarray,
    b2: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    num_classes: int,
):
    """Mean cross-entropy of a ReLU two-layer net and its parameter gradients.

    Shared by training and by the finite-difference checks, so the gradient
    being tested is exactly the gradient being descended.
    """
    batch = x.shape[0]
    pre = x @ w1 + b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ w2 + b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(batch), y]))

    probs = np.exp(shifted - log_z[:, None])
    dlogits = probs
    dlogits[np.arange(batch), y] -= 1.0
    dlogits /= batch
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ w2.T
    dhidden[pre <= 0.0] = 0.0
    dw1 = x.T @ dhidden
    db1 = dhidden.sum(axis=0)
    return loss, (dw1, db1, dw2, db2)


def train_mlp(
    s: np.ndarray,
    ls: LabelSet,
    split: Split,
    hidden: int = 16,
    epochs: int = 300,
    lr: float = 0.01,
    batch_size: int = 64,
    seed: int = 0,
) -> MlpModel:
    """Train the classifier on the split's training rows of ``s``.

    Inputs are z-scored with training-set statistics (orthonormal embedding
    entries have magnitude ~ 1/sqrt(n), far too small for a fixed-step SGD);
    the statistics are stored on the model so prediction sees the same
    transform.  Raises ``FloatingPointError`` if the loss stops being finite.
    """
    s = np.asarray(s, dtype=np.float64)
    y_train = ls.labels[split.train_idx]
    if np.any(y_train < 0):
        raise ValueError("training nodes must carry labels")
    num_classes = ls.num_classes
    x_raw = s[split.train_idx]
    mu = x_raw.mean(axis=0)
    sigma = x_raw.std(axis=0)
    sigma = np.where(sigma < 1e-12, 1.0, sigma)
    x = (x_raw - mu) / sigma

    k = s.shape[1]
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((k, hidden)) * np.sqrt(2.0 / k)
    b1 = np.zeros(hidden)
    w2 = rng.standard_normal((hidden, num_classes)) * np.sqrt(1.0 / hidden)
    b2 = np.zeros(num_classes)

    n_train = x.shape[0]
    history: list[float] = []
    for _ in range(epochs):
        perm = rng.permutation(n_train)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n_train, batch_size):
            sel = perm[lo : lo + batch_size]
            loss, (dw1, db1, dw2, db2) = mlp_loss_and_grads(
                w1, b1, w2, b2, x[sel], y_train[sel], num_classes
            )
            w1 -= lr * dw1
            b1 -= lr * db1
            w2 -= lr * dw2
            b2 -= lr * db2
            epoch_loss += loss
            n_batches += 1
        epoch_loss /= n_batches
        if not np.isfinite(epoch_loss):
            raise FloatingPointError("classifier training diverged (non-finite loss)")
        history.append(epoch_loss)

    return MlpModel(
        w1=w1, b1=b1, w2=w2, b2=b2, mu=mu, sigma=sigma,
        num_classes=num_classes, loss_history=history,
    )


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Unweighted mean F1 over the classes present in ``y_true``.

    A class with no true positives scores 0 regardless of how the 0/0
    precision/recall corner is reached.
    """
    scores = []
    for c in np.unique(y_true):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def evaluate(
    model: MlpModel, s: np.ndarray, ls: LabelSet, idx: np.ndarray
) -> tuple[float, float]:
    """(accuracy, macro F1) of the model on rows ``idx`` of the embedding."""
    idx = np.asarray(idx, dtype=np.int64)
    y_true = ls.labels[idx]
    if np.any(y_true < 0):
        raise ValueError("evaluation nodes must carry ground-truth labels")
    y_pred = model.predict(np.asarray(s, dtype=np.float64)[idx])
    accuracy = float(np.mean(y_pred == y_true))
    return accuracy, macro_f1(y_true, y_pred)


# ---------------------------------------------------------------------------
# label masking
# ---------------------------------------------------------------------------


@dataclass
class MaskSpec:
    """One masking condition: mechanism, target rate, seed, feature source."""

    mechanism: str
    rate: float
    seed: int
    feature_source: str = "given_features"

    def validate(self) -> None:
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}")
        if not (0.0 <= self.rate <= 1.0):
            raise ValueError("rate must lie in [0, 1]")
        if self.feature_source not in FEATURE_SOURCES:
            raise ValueError(f"feature_source must be one of {FEATURE_SOURCES}")


def _as_dense(features) -> np.ndarray:
    if sp.issparse(features):
        return np.asarray(features.todense(), dtype=np.float64)
    return np.asarray(features, dtype=np.float64)


def _calibrate_intercept(score: np.ndarray, rate: float) -> float:
    """Bisect the logistic intercept so mean masking probability hits rate."""
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.mean(expit(score + mid))) < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mask_probabilities(
    features,
    ls: LabelSet,
    spec: MaskSpec,
    class_offsets: np.ndarray | None = None,
) -> np.ndarray:
    """Per-node masking probabilities before the Bernoulli draw.

    MCAR is the constant rate.  MAR scores nodes by a random unit-norm
    projection of their standardized features; MNAR adds a per-class offset
    (standard normal by default, injectable for testing) so missingness
    depends on the label itself.  The logistic intercept is calibrated by
    bisection to match the requested mean rate.
    """
    spec.validate()
    n = ls.n
    if spec.mechanism == "MCAR":
        return np.full(n, spec.rate)
    if features is None:
        raise ValueError(f"{spec.mechanism} masking requires node features")
    x = _as_dense(features)
    if x.shape[0] != n:
        raise ValueError(f"feature rows {x.shape[0]} != n {n}")

    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    sigma = np.where(sigma < 1e-12, 1.0, sigma)
    z = (x - mu) / sigma

    rng = np.random.default_rng(spec.seed)
    w = rng.standard_normal(x.shape[1])
    w /= np.linalg.norm(w)
    score = z @ w
    if spec.mechanism == "MNAR":
        if class_offsets is None:
            class_offsets = rng.standard_normal(max(ls.num_classes, 1))
        offsets = np.zeros(n)
        known = ls.labels >= 0
        offsets[known] = np.asarray(class_offsets, dtype=np.float64)[ls.labels[known]]
        score = score + offsets
    b = _calibrate_intercept(score, spec.rate)
    return expit(score + b)


def generate_mask(
    features,
    ls: LabelSet,
    spec: MaskSpec,
    class_offsets: np.ndarray | None = None,
) -> np.ndarray:
    """Boolean keep-vector: True keeps the node's label, False hides it.

    The Bernoulli draw consumes its own generator stream after the ones used
    to build the probability model, so MCAR/MAR/MNAR at the same seed stay
    comparable.
    """
    probs = mask_probabilities(features, ls, spec, class_offsets)
    draw_rng = np.random.default_rng([spec.seed, 1])
    masked = draw_rng.random(ls.n) < probs
    return ~masked


# ---------------------------------------------------------------------------
# structural node features (masking fallback when no features are given)
# ---------------------------------------------------------------------------


def _core_numbers(g: Graph) -> np.ndarray:
    """K-core index of every node by the linear peeling algorithm."""
    n = g.n
    core = g.degrees.astype(np.int64).copy()
    order = np.argsort(core, kind="stable").astype(np.int64)
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    # bin_ptr[d] = first position in `order` whose current degree is d
    max_deg = int(core.max()) if n else 0
    bin_ptr = np.searchsorted(core[order], np.arange(max_deg + 2)).astype(np.int64)
    for idx in range(n):
        v = order[idx]
        for u in g.neighbors(v):
            if core[u] > core[v]:
                du, pu = core[u], pos[u]
                pw = bin_ptr[du]
                w = order[pw]
                if u != w:
                    order[pu], order[pw] = w, u
                    pos[u], pos[w] = pw, pu
                bin_ptr[du] += 1
                core[u] -= 1
    return core


def structural_features(g: Graph) -> np.ndarray:
    """(n, 3) matrix: degree, clustering coefficient, normalized core number."""
    deg = g.degrees.astype(np.float64)
    a = g.adjacency()
    # row i of A.(A@A) sums closed 2-paths at i; each triangle is counted twice
    closed = np.asarray(a.multiply(a @ a).sum(axis=1)).ravel()
    pairs = deg * (deg - 1.0)
    clustering = np.where(pairs > 0.0, closed / np.where(pairs > 0.0, pairs, 1.0), 0.0)
    core = _core_numbers(g).astype(np.float64)
    top = core.max()
    core_norm = core / top if top > 0 else core
    return np.stack([deg, clustering, core_norm], axis=1)
