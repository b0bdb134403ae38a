"""Fast internal oracle checks behind the ``selftest`` CLI subcommand.

These duplicate the heart of the test suite in dependency-free form so a
deployed build can vouch for itself: analytic gradients vs central finite
differences, rank-based AUC vs O(n^2) pair counting, attack self-consistency
on an untrained model, and DP mechanics.
"""

import numpy as np

from . import attack as attack_mod
from . import protocol
from .data import generate_synthetic
from .dp import ClipState, DpConfig, clip_and_noise, flip_labels, label_dp_epsilon
from .metrics import auc
from .schema import FeatureSchema


def _toy_schema():
    return FeatureSchema.parse(
        "num_a,numeric,-,server,0\n"
        "num_b,numeric,-,server,0\n"
        "srv_cat,categorical,4,server,0\n"
        "priv_a,categorical,3,client,0\n"
        "priv_b,categorical,2,client,0\n"
        "label,categorical,2,client,1\n")


def _toy_models(seed=0):
    schema = _toy_schema()
    cfg = protocol.TrainConfig(client_hidden=(8,), server_hidden=(8,),
                               cut_width=4, embed_dim=3, seed=seed)
    rng = np.random.default_rng(seed)
    scalers = {s.name: (0.0, 1.0) for s in schema.server_numeric}
    server, client = protocol.build_models(schema, cfg, scalers, rng)
    return schema, server, client


def check_gradients(trials=20, step=1e-5, tol=1e-4) -> bool:
    """Central finite differences over every parameter of both halves."""
    schema, server, client = _toy_models(seed=1)
    rng = np.random.default_rng(2)
    for _ in range(trials):
        scat = rng.integers(0, 4, size=(1, 1))
        num = rng.normal(size=(1, 2))
        ccat = np.array([[rng.integers(0, 3), rng.integers(0, 2)]])
        y = np.array([rng.integers(0, 2)])

        def loss():
            a_c, _ = server.forward(scat, num)
            p, _ = client.forward(a_c, ccat)
            return float(client.loss(p, y)[0])

        a_c, s_cache = server.forward(scat, num)
        p, c_cache = client.forward(a_c, ccat)
        cut, c_grads = client.backward(c_cache, y)
        s_grads = server.backward(s_cache, cut)
        for params, grads in ((client.params(), c_grads), (server.params(), s_grads)):
            for name, arr in params.items():
                g = grads[name]
                flat = arr.reshape(-1)
                for k in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                    orig = flat[k]
                    flat[k] = orig + step
                    up = loss()
                    flat[k] = orig - step
                    down = loss()
                    flat[k] = orig
                    fd = (up - down) / (2 * step)
                    an = g.reshape(-1)[k]
                    denom = max(abs(fd), abs(an), 1e-6)
                    if abs(fd - an) / denom > tol and abs(fd - an) > 1e-7:
                        return False
    return True


def check_auc_oracle(trials=50, n=80) -> bool:
    rng = np.random.default_rng(3)
    for _ in range(trials):
        scores = rng.choice(np.linspace(0, 1, 17), size=n)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            continue
        pairs = 0.0
        total = 0
        for s_p in scores[labels == 1]:
            for s_n in scores[labels == 0]:
                pairs += 1.0 if s_p > s_n else (0.5 if s_p == s_n else 0.0)
                total += 1
        if abs(auc(scores, labels) - pairs / total) > 1e-12:
            return False
    return True


def check_attack_self_consistency(n_samples=50) -> bool:
    """The true configuration must reproduce its own gradient."""
    schema, server, client = _toy_models(seed=4)
    dataset = generate_synthetic(schema, n_samples, 0.5, seed=5)
    ids = np.arange(n_samples)
    a_c, grads, _ = protocol.collect_cut_gradients(server, client, dataset, ids)
    enum = attack_mod.enumerate_configurations(schema)
    truths = attack_mod.true_configurations(dataset, ids)
    for i in range(n_samples):
        out = attack_mod.exact_attack(client, a_c[i], grads[i], enum, i, truths[i])
        if out.predicted == truths[i] and out.distance > 1e-9:
            return False
        if out.predicted != truths[i] and out.distance > 1e-9:
            return False  # argmin must at least tie the true candidate
    return True


def check_dp_mechanics() -> bool:
    rng = np.random.default_rng(6)
    state = ClipState(DpConfig(noise_multiplier=0.0, clip_mode="fixed", clip_norm=1.0))
    g = rng.normal(size=32) * 10
    clipped = clip_and_noise(g, state, 0.0, rng)
    if np.linalg.norm(clipped) > 1.0 + 1e-12:
        return False
    noise = np.stack([
        clip_and_noise(np.zeros(8), state, 0.01, rng) for _ in range(20000)])
    if abs(noise.std() - 0.01) > 0.01 * 0.05:
        return False
    flipped = flip_labels(np.zeros(100000, dtype=int), 0.1, rng)
    if abs(flipped.mean() - 0.1) > 0.005:
        return False
    return abs(label_dp_epsilon(0.1) - np.log(9.0)) < 1e-12


def run_selftest() -> int:
    checks = [
        ("gradient fidelity (finite differences)", check_gradients),
        ("auc rank statistic vs pair counting", check_auc_oracle),
        ("attack self-consistency", check_attack_self_consistency),
        ("dp mechanics", check_dp_mechanics),
    ]
    failed = 0
    for name, fn in checks:
        ok = fn()
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        failed += 0 if ok else 1
    return 1 if failed else 0
