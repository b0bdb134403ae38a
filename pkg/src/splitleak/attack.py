"""Exhaustive cut-gradient matching attack, its top-k vote variant, and
nearest-neighbor reconstruction baselines.

The attacker enumerates every configuration of private client features and
label, recomputes the cut gradient each would produce through the known
client model, and picks the L2-nearest match to the gradient the client
actually returned.  Attack code only ever sees the client model snapshot,
the cut activation, the observed gradient and the candidate list.
"""

import time
from dataclasses import dataclass

import numpy as np

from .metrics import accuracy, f1
from .schema import FeatureSchema

DEFAULT_ENUMERATION_CAP = 10 ** 6


class EnumerationCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class CandidateConfiguration:
    """One assignment of private feature category indices and a label."""
    features: tuple
    label: int


class Enumeration:
    """All private-feature x label configurations, in lexicographic order.

    Feature indices vary in schema order with the label as the last, fastest
    digit.  Stored columnar for vectorized gradient recomputation.
    """

    def __init__(self, feature_names, cardinalities, feature_idx, labels):
        self.feature_names = list(feature_names)
        self.cardinalities = list(cardinalities)
        self.feature_idx = feature_idx  # (|L|, n_features) int64
        self.labels = labels  # (|L|,) int64

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> CandidateConfiguration:
        return CandidateConfiguration(tuple(int(v) for v in self.feature_idx[i]),
                                      int(self.labels[i]))


def enumerate_configurations(schema: FeatureSchema,
                             cap=DEFAULT_ENUMERATION_CAP) -> Enumeration:
    """Build the candidate list L; refuses if its size would exceed ``cap``."""
    specs = schema.client_features
    if not specs:
        raise ValueError("schema has no private client features")
    cards = [s.cardinality for s in specs]
    total = int(np.prod(cards)) * 2
    if total > cap:
        raise EnumerationCapExceeded(
            f"|L| = {total} exceeds the enumeration cap {cap}")
    grids = np.meshgrid(*[np.arange(c) for c in cards], np.arange(2), indexing="ij")
    feature_idx = np.stack([g.reshape(-1) for g in grids[:-1]], axis=1).astype(np.int64)
    labels = grids[-1].reshape(-1).astype(np.int64)
    return Enumeration([s.name for s in specs], cards, feature_idx, labels)


@dataclass
class AttackOutcome:
    sample_id: int
    predicted: CandidateConfiguration
    distance: float
    true: CandidateConfiguration | None = None
    candidates_evaluated: int = 0
    elapsed: float = 0.0


def candidate_cut_gradients(client, a_c, enum: Enumeration) -> np.ndarray:
    """Recompute the cut gradient every candidate configuration would send."""
    n = len(enum)
    tiled = np.broadcast_to(np.asarray(a_c, dtype=np.float64), (n, len(a_c)))
    p, cache = client.forward(tiled, enum.feature_idx)
    cut_grads, _ = client.backward(cache, enum.labels)
    return cut_grads


def exact_attack(client, a_c, observed, enum: Enumeration,
                 sample_id=-1, true=None) -> AttackOutcome:
    """Reconstruct one sample's private configuration by gradient matching.

    Returns the candidate minimizing the L2 distance between its recomputed
    cut gradient and the observed one; ties break to the lowest index.
    """
    if len(enum) == 0:
        raise ValueError("empty candidate list")
    t0 = time.perf_counter()
    grads = candidate_cut_gradients(client, a_c, enum)
    dists = np.linalg.norm(grads - np.asarray(observed, dtype=np.float64), axis=1)
    best = int(np.argmin(dists))
    return AttackOutcome(sample_id, enum[best], float(dists[best]), true,
                         candidates_evaluated=len(enum),
                         elapsed=time.perf_counter() - t0)


def _majority(values, n_values) -> int:
    """Mode of ``values`` (ordered nearest first); count ties go to the value
    of the nearest candidate among the tied ones."""
    counts = np.bincount(values, minlength=n_values)
    top = counts.max()
    for v in values:
        if counts[v] == top:
            return int(v)
    raise AssertionError("unreachable")


def exact_attack_topk(client, a_c, observed, enum: Enumeration, k: int,
                      sample_id=-1, true=None) -> AttackOutcome:
    """Majority vote per feature (and label) over the k nearest candidates."""
    if not 1 <= k <= len(enum):
        raise ValueError("k must be in [1, |L|]")
    t0 = time.perf_counter()
    grads = candidate_cut_gradients(client, a_c, enum)
    dists = np.linalg.norm(grads - np.asarray(observed, dtype=np.float64), axis=1)
    order = np.argsort(dists, kind="stable")[:k]
    feats = tuple(
        _majority(enum.feature_idx[order, j], card)
        for j, card in enumerate(enum.cardinalities))
    label = _majority(enum.labels[order], 2)
    predicted = CandidateConfiguration(feats, label)
    return AttackOutcome(sample_id, predicted, float(dists[order[0]]), true,
                         candidates_evaluated=len(enum),
                         elapsed=time.perf_counter() - t0)


def attack_samples(client, activations, observed_grads, enum, k=1,
                   sample_ids=None, truths=None) -> list:
    """Run the attack over a batch of samples; rows of the two matrices pair up."""
    outcomes = []
    for i in range(len(activations)):
        sid = int(sample_ids[i]) if sample_ids is not None else i
        true = truths[i] if truths is not None else None
        if k == 1:
            out = exact_attack(client, activations[i], observed_grads[i], enum,
                               sid, true)
        else:
            out = exact_attack_topk(client, activations[i], observed_grads[i],
                                    enum, k, sid, true)
        outcomes.append(out)
    return outcomes


def true_configurations(dataset, ids) -> list:
    cat = dataset.client_cat(ids)
    labels = dataset.labels[ids]
    return [CandidateConfiguration(tuple(int(v) for v in cat[i]), int(labels[i]))
            for i in range(len(ids))]


# ---------------------------------------------------------------------------
# KNN baselines: reconstruct private features from server-side views only.

def _vote_rows(neighbor_rows, cardinalities):
    return tuple(_majority(neighbor_rows[:, j], c)
                 for j, c in enumerate(cardinalities))


class KnnFeatureBaseline:
    """Nearest neighbors in server-feature space, majority vote per feature.

    Distance is the categorical mismatch count plus the L2 distance over
    standardized numeric features, equally weighted per component.
    """

    def __init__(self, dataset, train_ids, scalers):
        self.dataset = dataset
        self.train_ids = np.asarray(train_ids)
        self.train_cat = dataset.server_cat(self.train_ids)
        self.train_num = self._standardize(dataset.server_num(self.train_ids), scalers,
                                           dataset.schema.server_numeric)
        self.scalers = scalers
        self.client_truth = dataset.client_cat(self.train_ids)
        self.client_labels = dataset.labels[self.train_ids]
        self.cards = [s.cardinality for s in dataset.schema.client_features]

    @staticmethod
    def _standardize(num, scalers, specs):
        out = np.empty_like(num)
        for j, s in enumerate(specs):
            mean, std = scalers[s.name]
            col = (num[:, j] - mean) / std
            out[:, j] = np.where(np.isnan(col), 0.0, col)
        return out

    def reconstruct(self, server_cat_row, server_num_row, k) -> CandidateConfiguration:
        cat_d = (self.train_cat != server_cat_row).sum(axis=1)
        num_row = self._standardize(np.atleast_2d(server_num_row), self.scalers,
                                    self.dataset.schema.server_numeric)
        num_d = np.linalg.norm(self.train_num - num_row, axis=1)
        order = np.argsort(cat_d + num_d, kind="stable")[:k]
        feats = _vote_rows(self.client_truth[order], self.cards)
        label = _majority(self.client_labels[order], 2)
        return CandidateConfiguration(feats, label)

    def reconstruct_many(self, test_ids, k) -> list:
        cat = self.dataset.server_cat(test_ids)
        num = self.dataset.server_num(test_ids)
        return [self.reconstruct(cat[i], num[i], k) for i in range(len(test_ids))]


class KnnActivationBaseline:
    """Nearest neighbors in cut-activation space, majority vote per feature."""

    def __init__(self, dataset, train_ids, train_activations):
        self.train_activations = np.asarray(train_activations, dtype=np.float64)
        self.client_truth = dataset.client_cat(np.asarray(train_ids))
        self.client_labels = dataset.labels[np.asarray(train_ids)]
        self.cards = [s.cardinality for s in dataset.schema.client_features]

    def reconstruct(self, a_c, k) -> CandidateConfiguration:
        d = np.linalg.norm(self.train_activations - np.asarray(a_c), axis=1)
        order = np.argsort(d, kind="stable")[:k]
        feats = _vote_rows(self.client_truth[order], self.cards)
        label = _majority(self.client_labels[order], 2)
        return CandidateConfiguration(feats, label)

    def reconstruct_many(self, activations, k) -> list:
        return [self.reconstruct(a, k) for a in activations]


# ---------------------------------------------------------------------------
# Evaluation

@dataclass
class AttackReport:
    """Per-feature F1 plus label F1/accuracy over a set of reconstructions."""
    feature_f1: dict
    label_f1: float
    label_accuracy: float
    n_samples: int
    mean_distance: float | None = None

    def rows(self):
        for name, value in self.feature_f1.items():
            yield (name, "f1", value)
        yield ("label", "f1", self.label_f1)
        yield ("label", "accuracy", self.label_accuracy)


def evaluate_attack(predicted, truths, schema: FeatureSchema,
                    distances=None) -> AttackReport:
    """Score reconstructed configurations against the true ones."""
    if len(predicted) == 0:
        raise ValueError("no outcomes to evaluate")
    if len(predicted) != len(truths):
        raise ValueError("predicted/true configuration lists must align")
    specs = schema.client_features
    pred_f = np.array([c.features for c in predicted], dtype=np.int64)
    true_f = np.array([c.features for c in truths], dtype=np.int64)
    pred_l = np.array([c.label for c in predicted], dtype=np.int64)
    true_l = np.array([c.label for c in truths], dtype=np.int64)
    feature_f1 = {
        s.name: f1(pred_f[:, j], true_f[:, j], s.cardinality)
        for j, s in enumerate(specs)
    }
    return AttackReport(
        feature_f1=feature_f1,
        label_f1=f1(pred_l, true_l, 2),
        label_accuracy=accuracy(pred_l, true_l),
        n_samples=len(predicted),
        mean_distance=float(np.mean(distances)) if distances is not None else None,
    )


def evaluate_outcomes(outcomes, schema) -> AttackReport:
    return evaluate_attack([o.predicted for o in outcomes],
                           [o.true for o in outcomes], schema,
                           distances=[o.distance for o in outcomes])
