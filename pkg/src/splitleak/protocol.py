"""Two-party split training orchestration (SL and FSL).

One engine drives both modes: rows are shuffled once into fixed mini-batches
(FSL treats each batch of ``fsl_samples_per_client`` rows as one virtual
client against shared weights), and the batch visit order is reshuffled
every epoch.  One-client FSL is therefore bit-identical to SL with the same
batch size, which pins the FSL update semantics.

Per batch: server forward to the cut layer, activation hand-off, client
forward/backward, per-sample DP processing of the returning cut gradients
if enabled, server backward, Adagrad steps on both sides.
"""

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from . import dp as dp_mod
from .data import Dataset, SplitIndices
from .metrics import auc
from .nn import Adagrad, ClientModel, ServerModel

SL = "sl"
FSL = "fsl"


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    client_hidden: tuple = (256, 128)
    server_hidden: tuple = (256, 128)
    cut_width: int = 32
    embed_dim: int = 16
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0
    mode: str = SL
    fsl_samples_per_client: int = 16
    adagrad_epsilon: float = 1e-10
    dp: dp_mod.DpConfig | None = None
    label_dp: dp_mod.LabelDpConfig | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.mode not in (SL, FSL):
            raise ValueError(f"unknown mode {self.mode!r}")

    def echo(self) -> dict:
        out = {
            "learning_rate": self.learning_rate,
            "client_hidden": list(self.client_hidden),
            "server_hidden": list(self.server_hidden),
            "cut_width": self.cut_width,
            "embed_dim": self.embed_dim,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "mode": self.mode,
            "fsl_samples_per_client": self.fsl_samples_per_client,
        }
        if self.dp is not None:
            out["dp"] = {
                "noise_multiplier": self.dp.noise_multiplier,
                "clip_mode": self.dp.clip_mode,
                "clip_norm": self.dp.clip_norm,
                "delta": self.dp.delta,
            }
        if self.label_dp is not None:
            out["label_dp"] = {"flip_probability": self.label_dp.flip_probability}
        return out


@dataclass
class ActivationMessage:
    sample_id: int
    a_c: np.ndarray


@dataclass
class GradientMessage:
    sample_id: int
    cut_gradient: np.ndarray  # post-DP when mitigation is on


@dataclass
class TrainingLog:
    mode: str
    n_train: int
    n_test: int
    n_clients: int | None
    config_echo: dict
    epochs: list = field(default_factory=list)
    best_epoch: int | None = None
    best_auc: float | None = None
    clip_state: dp_mod.ClipState | None = None
    steps: int = 0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_clients": self.n_clients,
            "config": self.config_echo,
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_auc": self.best_auc,
            "steps": self.steps,
        }


class TrainingDiverged(RuntimeError):
    pass


def _rng_streams(seed):
    init_ss, shuffle_ss, flip_ss, noise_ss = np.random.SeedSequence(seed).spawn(4)
    return (np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss),
            np.random.default_rng(flip_ss), np.random.default_rng(noise_ss))


def compute_scalers(dataset: Dataset, train_ids) -> dict:
    """Per-numeric-feature (mean, std) from the training split, NaN-aware."""
    scalers = {}
    for s in dataset.schema.server_numeric:
        vals = dataset.num[s.name][train_ids]
        vals = vals[~np.isnan(vals)]
        mean = float(vals.mean()) if len(vals) else 0.0
        std = float(vals.std()) if len(vals) else 1.0
        scalers[s.name] = (mean, std if std > 0 else 1.0)
    return scalers


def build_models(schema, config: TrainConfig, scalers, rng):
    server = ServerModel.build(schema, config.cut_width, config.server_hidden,
                               config.embed_dim, scalers, rng)
    client = ClientModel.build(schema, config.cut_width, config.client_hidden,
                               config.embed_dim, rng)
    return server, client


def batch_partition(train_ids, batch_size, rng) -> list:
    """Fixed shuffled partition of the training rows into mini-batches."""
    perm = rng.permutation(len(train_ids))
    shuffled = np.asarray(train_ids)[perm]
    return [shuffled[i: i + batch_size] for i in range(0, len(shuffled), batch_size)]


def run_batch(server, client, batch, labels, server_opt=None, client_opt=None,
              dp_config=None, clip_state=None, noise_rng=None):
    """One split-protocol step over a prepared batch.

    ``batch`` is a dict with sample_ids, server_cat, server_num, client_cat
    arrays; ``labels`` are the (possibly label-DP flipped) training labels
    for those rows.  Per-sample cut gradients are clipped and noised
    individually before the server sees them.  When optimizers are given,
    both sides take an Adagrad step on mean-loss gradients.

    Returns (activation messages, gradient messages, per-sample losses).
    """
    ids = batch["sample_ids"]
    n = len(ids)
    if n == 0:
        raise ValueError("empty batch")
    a_c, s_cache = server.forward(batch["server_cat"], batch["server_num"])
    p, c_cache = client.forward(a_c, batch["client_cat"])
    losses = client.loss(p, labels)
    cut_grads, client_grads = client.backward(c_cache, labels)

    if dp_config is not None:
        processed = np.empty_like(cut_grads)
        for i in range(n):
            processed[i] = dp_mod.clip_and_noise(
                cut_grads[i], clip_state, dp_config.noise_multiplier, noise_rng)
    else:
        processed = cut_grads

    server_grads = server.backward(s_cache, processed)
    if server_opt is not None:
        client_opt.step(client.params(), {k: v / n for k, v in client_grads.items()})
        server_opt.step(server.params(), {k: v / n for k, v in server_grads.items()})

    act_msgs = [ActivationMessage(int(ids[i]), a_c[i]) for i in range(n)]
    grad_msgs = [GradientMessage(int(ids[i]), processed[i]) for i in range(n)]
    return act_msgs, grad_msgs, losses


def _make_batch(dataset, ids):
    return {
        "sample_ids": ids,
        "server_cat": dataset.server_cat(ids),
        "server_num": dataset.server_num(ids),
        "client_cat": dataset.client_cat(ids),
    }


def predict_proba(server, client, dataset, ids) -> np.ndarray:
    """Inference pass over the composed split model."""
    batch = _make_batch(dataset, ids)
    a_c, _ = server.forward(batch["server_cat"], batch["server_num"])
    p, _ = client.forward(a_c, batch["client_cat"])
    return p


def _snapshot(server, client):
    return (copy.deepcopy(server.params()), copy.deepcopy(client.params()))


def _restore(server, client, snap):
    s_params, c_params = snap
    for k, v in server.params().items():
        v[...] = s_params[k]
    for k, v in client.params().items():
        v[...] = c_params[k]


def train(dataset: Dataset, split: SplitIndices, config: TrainConfig):
    """Train the split model; returns (ServerModel, ClientModel, TrainingLog).

    Deterministic given config.seed.  Keeps the parameters of the epoch with
    the best test AUC.  Label-DP flipping is applied to the training labels
    once, before the first epoch.
    """
    schema = dataset.schema
    if not schema.client_features:
        raise ValueError("schema has no private client features")
    if not (schema.server_numeric or schema.server_categorical):
        raise ValueError("schema has no server features")

    init_rng, shuffle_rng, flip_rng, noise_rng = _rng_streams(config.seed)
    scalers = compute_scalers(dataset, split.train_ids)
    server, client = build_models(schema, config, scalers, init_rng)

    batch_size = (config.fsl_samples_per_client if config.mode == FSL
                  else config.batch_size)
    batches = batch_partition(split.train_ids, batch_size, shuffle_rng)
    n_clients = len(batches) if config.mode == FSL else None

    train_labels = dataset.labels.copy()
    if config.label_dp is not None:
        flipped = dp_mod.flip_labels(train_labels[split.train_ids],
                                     config.label_dp.flip_probability, flip_rng)
        train_labels[split.train_ids] = flipped

    clip_state = dp_mod.ClipState(config.dp) if config.dp is not None else None
    server_opt = Adagrad(server.params(), config.learning_rate, config.adagrad_epsilon)
    client_opt = Adagrad(client.params(), config.learning_rate, config.adagrad_epsilon)

    log = TrainingLog(mode=config.mode, n_train=len(split.train_ids),
                      n_test=len(split.test_ids), n_clients=n_clients,
                      config_echo=config.echo(), clip_state=clip_state)

    best = None
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        epoch_loss = 0.0
        for b in shuffle_rng.permutation(len(batches)):
            ids = batches[b]
            _, _, losses = run_batch(
                server, client, _make_batch(dataset, ids), train_labels[ids],
                server_opt, client_opt, config.dp, clip_state, noise_rng)
            if not np.isfinite(losses).all():
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; check learning rate")
            epoch_loss += float(losses.sum())
            log.steps += 1
        test_auc = auc(predict_proba(server, client, dataset, split.test_ids),
                       dataset.labels[split.test_ids])
        log.epochs.append({
            "epoch": epoch,
            "train_loss": epoch_loss / len(split.train_ids),
            "test_auc": test_auc,
            "seconds": time.perf_counter() - t0,
        })
        if log.best_auc is None or test_auc > log.best_auc:
            log.best_auc = test_auc
            log.best_epoch = epoch
            best = _snapshot(server, client)

    if best is not None:
        _restore(server, client, best)
    return server, client, log


def train_sl(dataset, split, config: TrainConfig):
    if config.mode != SL:
        raise ValueError("train_sl requires mode 'sl'")
    return train(dataset, split, config)


def train_fsl(dataset, split, config: TrainConfig):
    if config.mode != FSL:
        raise ValueError("train_fsl requires mode 'fsl'")
    return train(dataset, split, config)


def collect_cut_gradients(server, client, dataset, ids, label_dp=None, dp_config=None,
                          clip_state=None, seed=0):
    """Per-sample cut activations and observed cut gradients for given rows.

    Simulates what the server receives for each sample in one forward/backward
    exchange, without optimizer steps: label-DP flips the label the client
    uses, and DP clips/noises each gradient with the (trained) clip state.

    Returns (a_c matrix (n, d), gradient matrix (n, d), labels used).
    """
    flip_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    noise_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    batch = _make_batch(dataset, ids)
    labels = dataset.labels[ids].copy()
    if label_dp is not None:
        labels = dp_mod.flip_labels(labels, label_dp.flip_probability, flip_rng)
    a_c, _ = server.forward(batch["server_cat"], batch["server_num"])
    p, cache = client.forward(a_c, batch["client_cat"])
    cut_grads, _ = client.backward(cache, labels)
    if dp_config is not None:
        if clip_state is None:
            clip_state = dp_mod.ClipState(dp_config)
        out = np.empty_like(cut_grads)
        for i in range(len(ids)):
            out[i] = dp_mod.clip_and_noise(
                cut_grads[i], clip_state, dp_config.noise_multiplier, noise_rng)
        cut_grads = out
    return a_c, cut_grads, labels
