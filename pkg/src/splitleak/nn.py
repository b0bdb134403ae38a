"""Minimal differentiable split model with exact analytic backprop.

Both halves of the split network are plain dense stacks over embedded
categorical features.  The server half maps its features to the cut-layer
activation; the client half maps (cut activation, private features) to a
scalar probability under binary cross-entropy.  All gradients, including
the cut-layer activation gradient, are computed in closed form.

Arrays are float64, batch-first.  Models are immutable during inference;
training mutates parameter arrays in place through the optimizer.
"""

import numpy as np

from .schema import FeatureSchema, SchemaError

RELU = "relu"
IDENTITY = "identity"
SIGMOID = "sigmoid"

PROB_CLAMP = 1e-7  # BCE probabilities clamped to [PROB_CLAMP, 1 - PROB_CLAMP]


def _apply(act, z):
    if act == RELU:
        return np.maximum(z, 0.0)
    if act == SIGMOID:
        return sigmoid(z)
    return z


def _grad(act, z):
    if act == RELU:
        return (z > 0.0).astype(z.dtype)
    if act == SIGMOID:
        s = sigmoid(z)
        return s * (1.0 - s)
    return np.ones_like(z)


def sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(p, y):
    """Per-sample binary cross-entropy with probability clamping."""
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


class DenseStack:
    """Chained dense layers: z = x W^T + b, elementwise activation."""

    def __init__(self, weights, biases, activations):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activations = list(activations)
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("layer lists must have equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: bias shape does not match weight rows")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim does not chain")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameters")

    @classmethod
    def build(cls, dims, rng, hidden_activation=RELU, output_activation=IDENTITY):
        """Glorot-uniform weights, zero biases, for the given dimension chain."""
        weights, biases, acts = [], [], []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
            acts.append(output_activation if i == len(dims) - 2 else hidden_activation)
        return cls(weights, biases, acts)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    def forward(self, x):
        """Returns (output, cache) for a batch x of shape (n, in_dim)."""
        a = np.asarray(x, dtype=np.float64)
        cache = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ w.T + b
            cache.append((a, z))
            a = _apply(act, z)
        return a, cache

    def backward(self, cache, d_out):
        """Backprop upstream d_out (n, out_dim); per-sample rows stay independent.

        Returns (d_input, [(dW, db), ...]) with parameter gradients summed
        over the batch.
        """
        d = np.asarray(d_out, dtype=np.float64)
        grads = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            a_in, z = cache[i]
            dz = d * _grad(self.activations[i], z)
            grads[i] = (dz.T @ a_in, dz.sum(axis=0))
            d = dz @ self.weights[i]
        return d, grads


def init_embeddings(specs, embed_dim, rng):
    """normal(0, 0.01) embedding table per categorical feature."""
    return {s.name: rng.normal(0.0, 0.01, size=(s.cardinality, embed_dim))
            for s in specs}


def _embed(tables, specs, idx):
    """Look up and concatenate embedding rows: (n, m) indices -> (n, m*e)."""
    if not specs:
        return np.zeros((idx.shape[0], 0))
    return np.concatenate([tables[s.name][idx[:, j]]
                           for j, s in enumerate(specs)], axis=1)


def _embed_grads(tables, specs, idx, d_cols, offset, embed_dim):
    grads = {}
    for j, s in enumerate(specs):
        g = np.zeros_like(tables[s.name])
        sl = d_cols[:, offset + j * embed_dim: offset + (j + 1) * embed_dim]
        np.add.at(g, idx[:, j], sl)
        grads[f"emb/{s.name}"] = g
    return grads


class ServerModel:
    """Server half: (server features) -> cut activation of width d."""

    def __init__(self, schema: FeatureSchema, embeddings, scalers, trunk: DenseStack,
                 embed_dim: int):
        self.schema = schema
        self.embeddings = embeddings
        self.scalers = scalers  # name -> (mean, std) for numeric features
        self.trunk = trunk
        self.embed_dim = embed_dim
        for s in schema.server_categorical:
            if embeddings[s.name].shape[0] != s.cardinality:
                raise SchemaError(f"embedding rows for {s.name!r} do not match schema")

    @classmethod
    def build(cls, schema, cut_width, hidden, embed_dim, scalers, rng):
        emb = init_embeddings(schema.server_categorical, embed_dim, rng)
        n_in = len(schema.server_numeric) + len(schema.server_categorical) * embed_dim
        trunk = DenseStack.build([n_in, *hidden, cut_width], rng)
        return cls(schema, emb, scalers, trunk, embed_dim)

    @property
    def cut_width(self):
        return self.trunk.out_dim

    def _assemble(self, cat_idx, num):
        cols = []
        for j, s in enumerate(self.schema.server_numeric):
            mean, std = self.scalers[s.name]
            x = (num[:, j] - mean) / std
            cols.append(np.where(np.isnan(x), 0.0, x)[:, None])
        emb = _embed(self.embeddings, self.schema.server_categorical, cat_idx)
        if cols:
            return np.concatenate(cols + [emb], axis=1)
        return emb

    def forward(self, cat_idx, num):
        """Cut activation for a batch; returns (a_c (n,d), cache)."""
        cat_idx = np.asarray(cat_idx, dtype=np.int64)
        num = np.asarray(num, dtype=np.float64)
        self._check_indices(cat_idx)
        x = self._assemble(cat_idx, num)
        a_c, trunk_cache = self.trunk.forward(x)
        return a_c, (cat_idx, trunk_cache)

    def backward(self, cache, cut_grads):
        """Continue backprop from per-sample cut gradients (n, d).

        Returns parameter gradients summed over the batch.
        """
        cat_idx, trunk_cache = cache
        cut_grads = np.asarray(cut_grads, dtype=np.float64)
        if cut_grads.shape[1] != self.cut_width:
            raise ValueError("cut gradient width does not match model")
        d_in, layer_grads = self.trunk.backward(trunk_cache, cut_grads)
        grads = {f"trunk/W{i}": dw for i, (dw, _) in enumerate(layer_grads)}
        grads.update({f"trunk/b{i}": db for i, (_, db) in enumerate(layer_grads)})
        n_num = len(self.schema.server_numeric)
        grads.update(_embed_grads(self.embeddings, self.schema.server_categorical,
                                  cat_idx, d_in, n_num, self.embed_dim))
        return grads

    def _check_indices(self, cat_idx):
        for j, s in enumerate(self.schema.server_categorical):
            col = cat_idx[:, j]
            if len(col) and (col.min() < 0 or col.max() >= s.cardinality):
                raise SchemaError(f"index out of range for feature {s.name!r}")

    def params(self):
        out = {f"emb/{s.name}": self.embeddings[s.name]
               for s in self.schema.server_categorical}
        out.update({f"trunk/W{i}": w for i, w in enumerate(self.trunk.weights)})
        out.update({f"trunk/b{i}": b for i, b in enumerate(self.trunk.biases)})
        return out


class ClientModel:
    """Client half: (cut activation, private features) -> probability."""

    def __init__(self, schema: FeatureSchema, embeddings, head: DenseStack,
                 cut_width: int, embed_dim: int):
        self.schema = schema
        self.embeddings = embeddings
        self.head = head
        self.cut_width = cut_width
        self.embed_dim = embed_dim
        if head.out_dim != 1:
            raise ValueError("client head must end in a single unit")
        for s in schema.client_features:
            if embeddings[s.name].shape[0] != s.cardinality:
                raise SchemaError(f"embedding rows for {s.name!r} do not match schema")

    @classmethod
    def build(cls, schema, cut_width, hidden, embed_dim, rng):
        emb = init_embeddings(schema.client_features, embed_dim, rng)
        n_in = cut_width + len(schema.client_features) * embed_dim
        head = DenseStack.build([n_in, *hidden, 1], rng)
        return cls(schema, emb, head, cut_width, embed_dim)

    def forward(self, a_c, cat_idx):
        """Probability p in (0,1) for a batch; returns (p (n,), cache)."""
        a_c = np.atleast_2d(np.asarray(a_c, dtype=np.float64))
        cat_idx = np.asarray(cat_idx, dtype=np.int64)
        self._check_indices(cat_idx)
        if a_c.shape[1] != self.cut_width:
            raise ValueError("cut activation width does not match model")
        emb = _embed(self.embeddings, self.schema.client_features, cat_idx)
        x = np.concatenate([a_c, emb], axis=1)
        z, head_cache = self.head.forward(x)
        p = sigmoid(z[:, 0])
        return p, (cat_idx, head_cache, p)

    def loss(self, p, y):
        return bce_loss(p, y)

    def backward(self, cache, y):
        """Analytic gradients of the summed per-sample BCE losses.

        Returns (cut_grads (n, d) with row i = dL_i/da_c_i, param grads dict).
        """
        cat_idx, head_cache, p = cache
        y = np.asarray(y, dtype=np.float64)
        dz = (p - y)[:, None]  # d(BCE)/d(logit) for sigmoid output
        d_in, layer_grads = self.head.backward(head_cache, dz)
        cut_grads = d_in[:, : self.cut_width]
        grads = {f"head/W{i}": dw for i, (dw, _) in enumerate(layer_grads)}
        grads.update({f"head/b{i}": db for i, (_, db) in enumerate(layer_grads)})
        grads.update(_embed_grads(self.embeddings, self.schema.client_features,
                                  cat_idx, d_in, self.cut_width, self.embed_dim))
        return cut_grads, grads

    def _check_indices(self, cat_idx):
        for j, s in enumerate(self.schema.client_features):
            col = cat_idx[:, j]
            if len(col) and (col.min() < 0 or col.max() >= s.cardinality):
                raise SchemaError(f"index out of range for feature {s.name!r}")

    def params(self):
        out = {f"emb/{s.name}": self.embeddings[s.name]
               for s in self.schema.client_features}
        out.update({f"head/W{i}": w for i, w in enumerate(self.head.weights)})
        out.update({f"head/b{i}": b for i, b in enumerate(self.head.biases)})
        return out


class Adagrad:
    """Adagrad over a named parameter dict; updates arrays in place."""

    def __init__(self, params, learning_rate=0.01, epsilon=1e-10):
        if learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        self.learning_rate = learning_rate
        self.epsilon = epsilon
        self.accumulators = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        for name, g in grads.items():
            acc = self.accumulators[name]
            acc += g * g
            params[name] -= self.learning_rate * g / (np.sqrt(acc) + self.epsilon)
