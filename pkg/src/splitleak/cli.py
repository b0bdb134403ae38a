"""Command-line experiment runner.

Subcommands: run (train + attack + baselines, repeated), train, attack,
baseline, report, selftest.  Results land in the output directory as
``results.jsonl`` (one record per score), ``summary.tsv`` (mean +/- std
aggregate), ``train.log`` and ``checkpoint_rep<i>.bin``.
"""

import argparse
import json
import os
import sys
from collections import defaultdict

import numpy as np

from . import attack as attack_mod
from . import checkpoint as ckpt_mod
from . import protocol
from .config import ConfigError, ExperimentConfig, load_config
from .data import load_csv, split_train_test
from .dp import label_dp_epsilon
from .schema import FeatureSchema


def scenario_tag(train_cfg: protocol.TrainConfig) -> str:
    parts = []
    if train_cfg.label_dp is not None:
        parts.append(f"LabelDP(p={train_cfg.label_dp.flip_probability:g})")
    if train_cfg.dp is not None:
        parts.append(f"DP(sigma={train_cfg.dp.noise_multiplier:g})")
    if len(parts) == 2:
        return "Comb"
    if parts:
        return parts[0]
    return train_cfg.mode.upper()


def record(scenario, metric, feature, value, seed, repetition) -> dict:
    return {"scenario": scenario, "metric": metric, "feature": feature,
            "value": float(value), "seed": seed, "repetition": repetition}


def write_records(path, records, append=False):
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def load_experiment_data(cfg: ExperimentConfig):
    cfg.validate_paths()
    schema = FeatureSchema.load(cfg.schema_path)
    dataset = load_csv(cfg.dataset_path, schema, vocab_policy=cfg.vocab_policy,
                       delimiter=cfg.delimiter)
    split = split_train_test(dataset, ratio=0.9, seed=cfg.seed)
    return dataset, split


def _attack_records(cfg, dataset, split, server, client, log, seed, rep,
                    scenario, logf=None, do_attack=True, do_baselines=True):
    """Attack and/or baselines on (a capped slice of) the test split."""
    test_ids = split.test_ids[: cfg.max_attack_samples]
    train_cfg = cfg.train
    a_c, grads, _ = protocol.collect_cut_gradients(
        server, client, dataset, test_ids,
        label_dp=train_cfg.label_dp, dp_config=train_cfg.dp,
        clip_state=log.clip_state, seed=seed + 1)
    truths = attack_mod.true_configurations(dataset, test_ids)
    records = []

    if do_attack:
        enum = attack_mod.enumerate_configurations(dataset.schema, cfg.enumeration_cap)
        k = cfg.attack_k if cfg.attack_variant == "topk" else 1
        outcomes = attack_mod.attack_samples(client, a_c, grads, enum, k=k,
                                             sample_ids=test_ids, truths=truths)
        report = attack_mod.evaluate_outcomes(outcomes, dataset.schema)
        for feature, metric, value in report.rows():
            records.append(record(scenario, metric, feature, value, seed, rep))
        if train_cfg.label_dp is not None:
            records.append(record(scenario, "epsilon", "label_dp",
                                  label_dp_epsilon(train_cfg.label_dp.flip_probability),
                                  seed, rep))
        if logf:
            elapsed = sum(o.elapsed for o in outcomes)
            print(f"attack [{scenario}] rep={rep} n={len(outcomes)} |L|={len(enum)} "
                  f"label_f1={report.label_f1:.4f} elapsed={elapsed:.1f}s", file=logf)

    if do_baselines:
        scalers = protocol.compute_scalers(dataset, split.train_ids)
        feat_bl = attack_mod.KnnFeatureBaseline(dataset, split.train_ids, scalers)
        preds = feat_bl.reconstruct_many(test_ids, cfg.baseline_k)
        bl_report = attack_mod.evaluate_attack(preds, truths, dataset.schema)
        for feature, metric, value in bl_report.rows():
            records.append(record("baseline-features", metric, feature, value,
                                  seed, rep))
        train_batch = protocol._make_batch(dataset, split.train_ids)
        train_act, _ = server.forward(train_batch["server_cat"],
                                      train_batch["server_num"])
        act_bl = attack_mod.KnnActivationBaseline(dataset, split.train_ids, train_act)
        preds = act_bl.reconstruct_many(a_c, cfg.baseline_k)
        bl_report = attack_mod.evaluate_attack(preds, truths, dataset.schema)
        for feature, metric, value in bl_report.rows():
            records.append(record("baseline-output", metric, feature, value,
                                  seed, rep))
    return records


def cmd_run(cfg: ExperimentConfig) -> int:
    dataset, split = load_experiment_data(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    all_records = []
    log_path = os.path.join(cfg.output_dir, "train.log")
    with open(log_path, "w", encoding="utf-8") as logf:
        for rep in range(cfg.repetitions):
            seed = cfg.seed + rep
            train_cfg = _with_seed(cfg.train, seed)
            scenario = scenario_tag(train_cfg)
            server, client, log = protocol.train(dataset, split, train_cfg)
            _log_training(logf, scenario, rep, log)
            extra = {"seed": seed, "repetition": rep, "scenario": scenario}
            if log.clip_state is not None and log.clip_state.median_estimate is not None:
                extra["clip_median_estimate"] = log.clip_state.median_estimate
            ckpt_mod.save(os.path.join(cfg.output_dir, f"checkpoint_rep{rep}.bin"),
                          server, client, extra)
            if log.best_auc is not None:
                all_records.append(
                    record(scenario, "auc", "model", log.best_auc, seed, rep))
            all_records.extend(_attack_records(cfg, dataset, split, server, client,
                                               log, seed, rep, scenario, logf))
    write_records(os.path.join(cfg.output_dir, "results.jsonl"), all_records)
    _write_summary(os.path.join(cfg.output_dir, "summary.tsv"), all_records)
    print(f"wrote {len(all_records)} records to {cfg.output_dir}")
    return 0


def _with_seed(train_cfg, seed):
    import copy
    out = copy.deepcopy(train_cfg)
    out.seed = seed
    return out


def _log_training(logf, scenario, rep, log):
    print(f"train [{scenario}] rep={rep} mode={log.mode} n_train={log.n_train} "
          f"n_clients={log.n_clients}", file=logf)
    for e in log.epochs:
        print(f"  epoch {e['epoch']}: loss={e['train_loss']:.4f} "
              f"auc={e['test_auc']:.4f} ({e['seconds']:.1f}s)", file=logf)
    print(f"  best epoch {log.best_epoch}: auc={log.best_auc}", file=logf)
    print(f"  config: {json.dumps(log.config_echo, sort_keys=True)}", file=logf)


def _write_summary(path, records):
    groups = defaultdict(list)
    for r in records:
        groups[(r["scenario"], r["feature"], r["metric"])].append(r["value"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("scenario\tfeature\tmetric\tmean\tstd\tn\n")
        for key in sorted(groups):
            vals = np.array(groups[key])
            fh.write(f"{key[0]}\t{key[1]}\t{key[2]}\t{vals.mean():.6f}\t"
                     f"{vals.std():.6f}\t{len(vals)}\n")


def cmd_train(cfg: ExperimentConfig) -> int:
    dataset, split = load_experiment_data(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    train_cfg = _with_seed(cfg.train, cfg.seed)
    scenario = scenario_tag(train_cfg)
    server, client, log = protocol.train(dataset, split, train_cfg)
    with open(os.path.join(cfg.output_dir, "train.log"), "w", encoding="utf-8") as logf:
        _log_training(logf, scenario, 0, log)
    extra = {"seed": cfg.seed, "repetition": 0, "scenario": scenario}
    if log.clip_state is not None and log.clip_state.median_estimate is not None:
        extra["clip_median_estimate"] = log.clip_state.median_estimate
    ckpt_mod.save(os.path.join(cfg.output_dir, "checkpoint.bin"), server, client, extra)
    records = []
    if log.best_auc is not None:
        records.append(record(scenario, "auc", "model", log.best_auc, cfg.seed, 0))
    write_records(os.path.join(cfg.output_dir, "results.jsonl"), records)
    _write_summary(os.path.join(cfg.output_dir, "summary.tsv"), records)
    print(f"trained [{scenario}] best_auc={log.best_auc}")
    return 0


def cmd_attack(cfg: ExperimentConfig, checkpoint_path, baselines_only=False) -> int:
    from .dp import ClipState
    dataset, split = load_experiment_data(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    server, client, extra = ckpt_mod.load(checkpoint_path)
    if dataset.schema != server.schema:
        raise ConfigError("checkpoint schema does not match dataset schema")
    train_cfg = _with_seed(cfg.train, cfg.seed)
    scenario = extra.get("scenario", scenario_tag(train_cfg))

    class _Log:
        clip_state = None
    log = _Log()
    if train_cfg.dp is not None and "clip_median_estimate" in extra:
        log.clip_state = ClipState(train_cfg.dp,
                                   median_estimate=extra["clip_median_estimate"])
    records = _attack_records(cfg, dataset, split, server, client, log,
                              cfg.seed, extra.get("repetition", 0), scenario,
                              do_attack=not baselines_only,
                              do_baselines=baselines_only)
    path = os.path.join(cfg.output_dir, "results.jsonl")
    write_records(path, records, append=os.path.exists(path))
    _write_summary(os.path.join(cfg.output_dir, "summary.tsv"), records)
    print(f"attack [{scenario}] wrote {len(records)} records")
    return 0


def cmd_report(paths) -> int:
    records = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            records.extend(json.loads(line) for line in fh if line.strip())
    groups = defaultdict(list)
    for r in records:
        groups[(r["scenario"], r["feature"], r["metric"])].append(r["value"])
    print("scenario\tfeature\tmetric\tmean\tstd\tn")
    for key in sorted(groups):
        vals = np.array(groups[key])
        print(f"{key[0]}\t{key[1]}\t{key[2]}\t{vals.mean():.6f}\t"
              f"{vals.std():.6f}\t{len(vals)}")
    return 0


def cmd_selftest() -> int:
    """Fast internal oracle checks; nonzero exit on any failure."""
    from .selftest import run_selftest
    return run_selftest()


def _apply_overrides(cfg: ExperimentConfig, args):
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
    if getattr(args, "mode", None):
        cfg.train.mode = args.mode
    if getattr(args, "dp_sigma", None) is not None:
        from .dp import DpConfig
        cfg.train.dp = DpConfig(noise_multiplier=args.dp_sigma)
    if getattr(args, "labeldp_p", None) is not None:
        from .dp import LabelDpConfig
        cfg.train.label_dp = LabelDpConfig(flip_probability=args.labeldp_p)
    if getattr(args, "variant", None):
        cfg.attack_variant = args.variant
    if getattr(args, "k", None) is not None:
        cfg.attack_k = args.k
    if getattr(args, "max_samples", None) is not None:
        cfg.max_attack_samples = args.max_samples
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitleak",
        description="Split-learning privacy lab: train split models, mount the "
                    "exhaustive cut-gradient reconstruction attack, evaluate "
                    "DP mitigations.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--mode", choices=["sl", "fsl"])
        p.add_argument("--dp-sigma", type=float, dest="dp_sigma")
        p.add_argument("--labeldp-p", type=float, dest="labeldp_p")
        p.add_argument("--variant", choices=["exact", "topk"])
        p.add_argument("--k", type=int)
        p.add_argument("--max-samples", type=int, dest="max_samples")

    common(sub.add_parser("run", help="full train+attack+baseline pipeline"))
    common(sub.add_parser("train", help="train one model, write a checkpoint"))
    p_attack = sub.add_parser("attack", help="attack from a saved checkpoint")
    common(p_attack)
    p_attack.add_argument("--checkpoint", required=True)
    p_baseline = sub.add_parser("baseline", help="KNN baselines from a checkpoint")
    common(p_baseline)
    p_baseline.add_argument("--checkpoint", required=True)
    p_report = sub.add_parser("report", help="merge result files into one table")
    p_report.add_argument("results", nargs="+")
    sub.add_parser("selftest", help="run the internal oracle suites")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return cmd_report(args.results)
    if args.command == "selftest":
        return cmd_selftest()
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command in ("attack", "baseline"):
            return cmd_attack(cfg, args.checkpoint,
                              baselines_only=args.command == "baseline")
    except (ConfigError, attack_mod.EnumerationCapExceeded, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
