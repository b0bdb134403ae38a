import numpy as np
import pytest

from splitleak import (DpConfig, TrainConfig, generate_synthetic, split_train_test)
from splitleak import attack as atk
from splitleak import protocol
from splitleak.attack import (CandidateConfiguration, EnumerationCapExceeded,
                              KnnActivationBaseline, KnnFeatureBaseline,
                              enumerate_configurations, evaluate_attack,
                              exact_attack, exact_attack_topk)
from splitleak.schema import FeatureSchema


def load_shipped(name):
    import importlib.resources as res
    return FeatureSchema.parse(
        (res.files("splitleak") / "schemas" / name).read_text())


def test_enumeration_size_adult_shipped_schema():
    enum = enumerate_configurations(load_shipped("adult.schema"))
    assert len(enum) == 840  # 7 * 6 * 5 * 2 categories x 2 labels


def test_enumeration_size_bank_shipped_schema():
    enum = enumerate_configurations(load_shipped("bank.schema"))
    assert len(enum) == 3456


def test_enumeration_single_binary_feature():
    schema = FeatureSchema.parse(
        "x,numeric,-,server,0\nf,categorical,2,client,0\ny,categorical,2,client,1\n")
    enum = enumerate_configurations(schema)
    assert len(enum) == 4
    assert [enum[i] for i in range(4)] == [
        CandidateConfiguration((0,), 0), CandidateConfiguration((0,), 1),
        CandidateConfiguration((1,), 0), CandidateConfiguration((1,), 1)]


def test_enumeration_completeness(toy_schema):
    enum = enumerate_configurations(toy_schema)
    assert len(enum) == 3 * 2 * 2
    rows = {(tuple(enum.feature_idx[i]), int(enum.labels[i]))
            for i in range(len(enum))}
    assert len(rows) == len(enum)


def test_enumeration_cap_refusal(toy_schema):
    with pytest.raises(EnumerationCapExceeded, match="cap"):
        enumerate_configurations(toy_schema, cap=5)


@pytest.fixture
def attacked(toy_schema, toy_models):
    server, client = toy_models
    ds = generate_synthetic(toy_schema, 120, 0.5, seed=19)
    ids = np.arange(60)
    a_c, grads, _ = protocol.collect_cut_gradients(server, client, ds, ids)
    enum = enumerate_configurations(toy_schema)
    truths = atk.true_configurations(ds, ids)
    return client, ds, ids, a_c, grads, enum, truths


def test_exact_attack_self_consistency(attacked):
    # the true configuration reproduces its own gradient, so the reported
    # minimum distance is numerically zero whenever the prediction is right
    client, ds, ids, a_c, grads, enum, truths = attacked
    for i in range(len(ids)):
        out = exact_attack(client, a_c[i], grads[i], enum, int(ids[i]), truths[i])
        assert out.distance < 1e-9
        assert out.candidates_evaluated == len(enum)


def test_exact_attack_recovers_truth_unless_tied(attacked):
    client, ds, ids, a_c, grads, enum, truths = attacked
    recovered = 0
    for i in range(len(ids)):
        out = exact_attack(client, a_c[i], grads[i], enum, int(ids[i]), truths[i])
        cands = atk.candidate_cut_gradients(client, a_c[i], enum)
        d = np.linalg.norm(cands - grads[i], axis=1)
        ties = (d < 1e-9).sum()
        if ties == 1:
            assert out.predicted == truths[i]
            recovered += 1
    assert recovered > 0


def test_topk_k1_equals_exact(attacked):
    client, ds, ids, a_c, grads, enum, truths = attacked
    for i in range(20):
        a = exact_attack(client, a_c[i], grads[i], enum)
        b = exact_attack_topk(client, a_c[i], grads[i], enum, k=1)
        assert a.predicted == b.predicted
        assert a.distance == b.distance


def test_topk_k_bounds(attacked):
    client, ds, ids, a_c, grads, enum, truths = attacked
    with pytest.raises(ValueError):
        exact_attack_topk(client, a_c[0], grads[0], enum, k=0)
    with pytest.raises(ValueError):
        exact_attack_topk(client, a_c[0], grads[0], enum, k=len(enum) + 1)


def test_majority_tie_breaks_to_nearest():
    assert atk._majority(np.array([2, 1, 1, 2]), 3) == 2
    assert atk._majority(np.array([1, 2, 2, 1]), 3) == 1
    assert atk._majority(np.array([0, 0, 1]), 2) == 0


def test_empty_candidate_list_rejected(attacked):
    client, ds, ids, a_c, grads, enum, truths = attacked
    empty = atk.Enumeration([], [], np.zeros((0, 0), dtype=int),
                            np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        exact_attack(client, a_c[0], grads[0], empty)


def test_attack_order_independence(attacked):
    # per-sample attacks are independent; aggregating in any order must
    # produce the same report
    client, ds, ids, a_c, grads, enum, truths = attacked
    fwd = atk.attack_samples(client, a_c, grads, enum, sample_ids=ids, truths=truths)
    rev_order = np.arange(len(ids))[::-1]
    rev = atk.attack_samples(client, a_c[rev_order], grads[rev_order], enum,
                             sample_ids=ids[rev_order],
                             truths=[truths[i] for i in rev_order])
    rep_f = atk.evaluate_outcomes(fwd, ds.schema)
    rep_r = atk.evaluate_outcomes(rev, ds.schema)
    assert rep_f.feature_f1 == rep_r.feature_f1
    assert rep_f.label_f1 == rep_r.label_f1


def test_attack_purity_signature():
    # the attack only ever receives the client snapshot, activation, observed
    # gradient and candidate list -- never raw features or a dataset
    import inspect
    params = set(inspect.signature(exact_attack).parameters)
    assert params == {"client", "a_c", "observed", "enum", "sample_id", "true"}
    params = set(inspect.signature(exact_attack_topk).parameters)
    assert "dataset" not in params and "features" not in params


def test_attack_ignores_true_argument(attacked):
    client, ds, ids, a_c, grads, enum, truths = attacked
    wrong = CandidateConfiguration((0, 0), 0)
    a = exact_attack(client, a_c[0], grads[0], enum, true=None)
    b = exact_attack(client, a_c[0], grads[0], enum, true=wrong)
    assert a.predicted == b.predicted and a.distance == b.distance


def test_knn_feature_baseline_exact_match(toy_schema):
    ds = generate_synthetic(toy_schema, 200, 0.5, seed=20)
    train_ids = np.arange(150)
    scalers = protocol.compute_scalers(ds, train_ids)
    bl = KnnFeatureBaseline(ds, train_ids, scalers)
    # query identical to training row 17 with k=1 returns that row's secrets
    pred = bl.reconstruct(ds.server_cat(np.array([17]))[0],
                          ds.server_num(np.array([17]))[0], k=1)
    assert pred == CandidateConfiguration(
        tuple(ds.client_cat(np.array([17]))[0]), int(ds.labels[17]))


def test_knn_activation_baseline_exact_match(toy_schema, toy_models):
    server, client = toy_models
    ds = generate_synthetic(toy_schema, 200, 0.5, seed=21)
    train_ids = np.arange(150)
    batch = protocol._make_batch(ds, train_ids)
    acts, _ = server.forward(batch["server_cat"], batch["server_num"])
    bl = KnnActivationBaseline(ds, train_ids, acts)
    pred = bl.reconstruct(acts[9], k=1)
    assert pred == CandidateConfiguration(
        tuple(ds.client_cat(train_ids)[9]), int(ds.labels[9]))


def test_evaluate_attack_perfect(toy_schema):
    truths = [CandidateConfiguration((i % 3, i % 2), i % 2) for i in range(10)]
    report = evaluate_attack(truths, truths, toy_schema)
    assert all(v == 1.0 for v in report.feature_f1.values())
    assert report.label_f1 == 1.0 and report.label_accuracy == 1.0


def test_evaluate_attack_all_zero_labels(toy_schema):
    # predicting label 0 everywhere on an unbalanced set zeroes the label F1
    truths = [CandidateConfiguration((0, 0), 1 if i < 2 else 0) for i in range(20)]
    preds = [CandidateConfiguration((0, 0), 0) for _ in range(20)]
    report = evaluate_attack(preds, truths, toy_schema)
    assert report.label_f1 == 0.0
    assert report.label_accuracy == 0.9


def test_evaluate_attack_hand_fixture(toy_schema):
    # 6 outcomes, feature priv_a (3 classes): truths/preds chosen so the
    # per-class confusion matrices are easy to hand-check
    truths = [CandidateConfiguration((t, t % 2), l)
              for t, l in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]]
    preds = [CandidateConfiguration((p, t % 2), l)
             for (p, l), t in zip(
                 [(0, 0), (1, 1), (1, 0), (1, 1), (2, 0), (2, 1)],
                 [0, 0, 1, 1, 2, 2])]
    report = evaluate_attack(preds, truths, toy_schema)
    # class 0: tp=1 fn=1 fp=0 -> 2/3; class 1: tp=2 fp=1 fn=0 -> 4/5; class 2: 1
    assert report.feature_f1["priv_a"] == pytest.approx(np.mean([2 / 3, 4 / 5, 1.0]))
    assert report.feature_f1["priv_b"] == 1.0  # binary, mixed and all correct
    assert report.label_f1 == 1.0


def test_evaluate_attack_empty_rejected(toy_schema):
    with pytest.raises(ValueError):
        evaluate_attack([], [], toy_schema)


def test_trained_model_attack_is_accurate(toy_schema):
    # end-to-end: unmitigated attack on a trained model reconstructs nearly
    # every private feature and all labels
    ds = generate_synthetic(toy_schema, 3000, 0.5, seed=22)
    split = split_train_test(ds, 0.9, seed=22)
    cfg = TrainConfig(client_hidden=(16,), server_hidden=(16,), cut_width=8,
                      embed_dim=4, epochs=3, seed=22)
    server, client, _ = protocol.train(ds, split, cfg)
    ids = split.test_ids[:150]
    a_c, grads, _ = protocol.collect_cut_gradients(server, client, ds, ids)
    enum = enumerate_configurations(toy_schema)
    truths = atk.true_configurations(ds, ids)
    outs = atk.attack_samples(client, a_c, grads, enum, sample_ids=ids,
                              truths=truths)
    report = atk.evaluate_outcomes(outs, ds.schema)
    assert report.label_f1 == 1.0
    assert all(v > 0.9 for v in report.feature_f1.values())


def test_dp_degrades_attack(toy_schema):
    ds = generate_synthetic(toy_schema, 3000, 0.5, seed=23)
    split = split_train_test(ds, 0.9, seed=23)
    base = dict(client_hidden=(16,), server_hidden=(16,), cut_width=8,
                embed_dim=4, epochs=3, seed=23)
    plain_cfg = TrainConfig(**base)
    dp_cfg = TrainConfig(**base, dp=DpConfig(noise_multiplier=0.01, warmup=256))
    ids = None
    reports = {}
    for tag, cfg in (("plain", plain_cfg), ("dp", dp_cfg)):
        server, client, log = protocol.train(ds, split, cfg)
        ids = split.test_ids[:150]
        a_c, grads, _ = protocol.collect_cut_gradients(
            server, client, ds, ids, dp_config=cfg.dp,
            clip_state=log.clip_state, seed=99)
        enum = enumerate_configurations(toy_schema)
        truths = atk.true_configurations(ds, ids)
        outs = atk.attack_samples(client, a_c, grads, enum, sample_ids=ids,
                                  truths=truths)
        reports[tag] = atk.evaluate_outcomes(outs, ds.schema)
    mean_plain = np.mean(list(reports["plain"].feature_f1.values()))
    mean_dp = np.mean(list(reports["dp"].feature_f1.values()))
    assert mean_dp < mean_plain - 0.1
