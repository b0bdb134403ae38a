"""Dataset ingestion, encoding, binning, splitting and synthetic generation."""

import csv

import numpy as np

from .schema import CATEGORICAL, NUMERIC, FeatureSchema, FeatureSpec, SchemaError

VOCAB_ERROR = "error"
VOCAB_RESERVE_UNKNOWN = "reserve-unknown-index"

MISSING_TOKENS = {"", "?", "NA", "nan"}


class ParseError(ValueError):
    """Raised on malformed input rows."""


class Dataset:
    """Encoded tabular dataset bound to a FeatureSchema.

    Categorical columns are int64 index arrays, numeric columns float64
    (missing values as NaN), labels a {0,1} int64 array.  ``vocabs`` maps
    each categorical feature to its index -> token list.
    """

    def __init__(self, schema: FeatureSchema, cat, num, labels, vocabs):
        self.schema = schema
        self.cat = {k: np.asarray(v, dtype=np.int64) for k, v in cat.items()}
        self.num = {k: np.asarray(v, dtype=np.float64) for k, v in num.items()}
        self.labels = np.asarray(labels, dtype=np.int64)
        self.vocabs = vocabs
        self._validate()

    def _validate(self):
        n = len(self.labels)
        for s in self.schema:
            if s.is_label:
                continue
            col = self.cat.get(s.name) if s.kind == CATEGORICAL else self.num.get(s.name)
            if col is None or len(col) != n:
                raise SchemaError(f"column {s.name!r} missing or wrong length")
            if s.kind == CATEGORICAL:
                if len(col) and (col.min() < 0 or col.max() >= s.cardinality):
                    raise SchemaError(
                        f"categorical index out of range for feature {s.name!r}"
                    )
        if len(self.labels) and not np.isin(self.labels, (0, 1)).all():
            raise SchemaError("labels must be 0 or 1")

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    def decode(self, feature: str, index: int) -> str:
        return self.vocabs[feature][index]

    def _cat_matrix(self, specs, ids):
        if not specs:
            return np.zeros((len(ids), 0), dtype=np.int64)
        return np.stack([self.cat[s.name][ids] for s in specs], axis=1)

    def server_cat(self, ids) -> np.ndarray:
        return self._cat_matrix(self.schema.server_categorical, ids)

    def server_num(self, ids) -> np.ndarray:
        specs = self.schema.server_numeric
        if not specs:
            return np.zeros((len(ids), 0), dtype=np.float64)
        return np.stack([self.num[s.name][ids] for s in specs], axis=1)

    def client_cat(self, ids) -> np.ndarray:
        return self._cat_matrix(self.schema.client_features, ids)


class SplitIndices:
    """Disjoint, covering train/test row ids."""

    def __init__(self, train_ids, test_ids):
        self.train_ids = np.asarray(train_ids, dtype=np.int64)
        self.test_ids = np.asarray(test_ids, dtype=np.int64)
        both = np.concatenate([self.train_ids, self.test_ids])
        if len(np.unique(both)) != len(both):
            raise ValueError("train/test indices overlap")


def load_csv(path, schema: FeatureSchema, vocab_policy=VOCAB_ERROR, delimiter=",") -> Dataset:
    """Load a delimited text file with a header row into an encoded Dataset.

    Unseen categorical tokens beyond the declared cardinality either raise
    (``error``) or map to the last reserved index (``reserve-unknown-index``).
    The label vocabulary is sorted so the lexicographically larger token is
    the positive class (e.g. ``>50K`` > ``<=50K``, ``yes`` > ``no``).
    """
    if vocab_policy not in (VOCAB_ERROR, VOCAB_RESERVE_UNKNOWN):
        raise ValueError(f"unknown vocab policy {vocab_policy!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file") from None
        col_of = {}
        for s in schema:
            if s.name not in header:
                raise ParseError(f"column {s.name!r} not found in header")
            col_of[s.name] = header.index(s.name)

        vocabs = {s.name: [] for s in schema if s.kind == CATEGORICAL}
        token_ix = {s.name: {} for s in schema if s.kind == CATEGORICAL}
        cat_rows = {s.name: [] for s in schema if s.kind == CATEGORICAL and not s.is_label}
        num_rows = {s.name: [] for s in schema if s.kind == NUMERIC}
        label_tokens = []
        label_name = schema.label.name

        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
            for s in schema:
                token = row[col_of[s.name]].strip()
                if s.kind == NUMERIC:
                    if token in MISSING_TOKENS:
                        num_rows[s.name].append(np.nan)
                        continue
                    try:
                        num_rows[s.name].append(float(token))
                    except ValueError:
                        raise ParseError(
                            f"row {rowno}: bad numeric value {token!r} for {s.name!r}"
                        ) from None
                elif s.is_label:
                    label_tokens.append(token)
                else:
                    ix = token_ix[s.name].get(token)
                    if ix is None:
                        limit = s.cardinality
                        if vocab_policy == VOCAB_RESERVE_UNKNOWN:
                            limit -= 1
                        if len(vocabs[s.name]) >= limit:
                            if vocab_policy == VOCAB_RESERVE_UNKNOWN:
                                ix = s.cardinality - 1
                            else:
                                raise SchemaError(
                                    f"row {rowno}: feature {s.name!r} exceeds "
                                    f"cardinality {s.cardinality}"
                                )
                        else:
                            ix = len(vocabs[s.name])
                            vocabs[s.name].append(token)
                            token_ix[s.name][token] = ix
                    cat_rows[s.name].append(ix)

    distinct = sorted(set(label_tokens))
    if len(distinct) != 2:
        raise SchemaError(f"label column has {len(distinct)} distinct values, need 2")
    vocabs[label_name] = distinct
    labels = [distinct.index(t) for t in label_tokens]
    if vocab_policy == VOCAB_RESERVE_UNKNOWN:
        for name, vocab in vocabs.items():
            spec = schema[name]
            if not spec.is_label and len(vocab) == spec.cardinality - 1:
                vocab.append("<unknown>")
    return Dataset(schema, cat_rows, num_rows, labels, vocabs)


def bin_numeric(dataset: Dataset, feature: str, n_bins: int, strategy="equal-width",
                train_ids=None) -> Dataset:
    """Re-encode a numeric feature as categorical(n_bins).

    Bin edges come from the training rows only (all rows when train_ids is
    None).  NaN values fall into the bin of the training mean.
    """
    spec = dataset.schema[feature]
    if spec.kind != NUMERIC:
        raise SchemaError(f"feature {feature!r} is not numeric")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    values = dataset.num[feature]
    train_vals = values if train_ids is None else values[train_ids]
    train_vals = train_vals[~np.isnan(train_vals)]
    if len(train_vals) == 0:
        raise ValueError(f"no finite training values for {feature!r}")

    if strategy == "equal-width":
        lo, hi = train_vals.min(), train_vals.max()
        if lo == hi:
            raise ValueError(f"degenerate bins: feature {feature!r} is constant")
        edges = np.linspace(lo, hi, n_bins + 1)
    elif strategy == "quantile":
        qs = np.linspace(0.0, 1.0, n_bins + 1)
        edges = np.quantile(train_vals, qs)
        if len(np.unique(edges)) != len(edges):
            raise ValueError(f"degenerate bins: repeated quantile edges for {feature!r}")
    else:
        raise ValueError(f"unknown binning strategy {strategy!r}")

    filled = np.where(np.isnan(values), train_vals.mean(), values)
    indices = np.clip(np.digitize(filled, edges[1:-1], right=False), 0, n_bins - 1)

    new_spec = FeatureSpec(feature, CATEGORICAL, n_bins, spec.side, spec.is_label)
    new_schema = dataset.schema.replace(feature, new_spec)
    cat = dict(dataset.cat)
    cat[feature] = indices
    num = {k: v for k, v in dataset.num.items() if k != feature}
    vocabs = dict(dataset.vocabs)
    vocabs[feature] = [
        f"[{edges[i]:.6g},{edges[i + 1]:.6g})" for i in range(n_bins)
    ]
    return Dataset(new_schema, cat, num, dataset.labels, vocabs)


def split_train_test(dataset: Dataset, ratio=0.9, seed=0) -> SplitIndices:
    """Deterministic shuffled train/test split."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0,1)")
    n = dataset.n_rows
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * ratio))
    return SplitIndices(perm[:n_train], perm[n_train:])


def generate_synthetic(schema: FeatureSchema, n_rows: int, class_imbalance=0.5,
                       seed=0) -> Dataset:
    """Generate a dataset whose labels follow a planted logistic model.

    Every feature contributes a random effect to the logit, so the task is
    learnable; the intercept is solved so the expected positive rate matches
    ``class_imbalance``.
    """
    if not 0.0 < class_imbalance < 1.0:
        raise ValueError("class_imbalance must be in (0,1)")
    if not schema.client_features:
        raise ValueError("schema has no private client features; nothing to attack")
    rng = np.random.default_rng(seed)
    cat = {}
    num = {}
    vocabs = {}
    logit = np.zeros(n_rows)
    for s in schema:
        if s.is_label:
            continue
        if s.kind == CATEGORICAL:
            idx = rng.integers(0, s.cardinality, size=n_rows)
            effects = rng.normal(0.0, 1.0, size=s.cardinality)
            cat[s.name] = idx
            vocabs[s.name] = [f"v{i}" for i in range(s.cardinality)]
            logit += effects[idx]
        else:
            x = rng.normal(0.0, 1.0, size=n_rows)
            num[s.name] = x
            logit += rng.normal(0.0, 1.0) * x

    # solve the intercept so that mean(sigmoid(logit + b)) == target rate
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 / (1.0 + np.exp(-(logit + mid)))) < class_imbalance:
            lo = mid
        else:
            hi = mid
    probs = 1.0 / (1.0 + np.exp(-(logit + 0.5 * (lo + hi))))
    labels = (rng.random(n_rows) < probs).astype(np.int64)
    vocabs[schema.label.name] = ["0", "1"]
    return Dataset(schema, cat, num, labels, vocabs)
