"""Experiment configuration files.

INI-style sections mirroring the experiment surface; unknown sections or
keys are errors.  Example::

    [experiment]
    dataset = data/adult.csv
    schema = schemas/adult.schema
    output = runs/adult
    repetitions = 3
    seed = 7
    max_attack_samples = 2000
    delimiter = ,
    vocab_policy = error

    [train]
    mode = sl
    learning_rate = 0.01
    client_hidden = 256,128
    server_hidden = 256,128
    cut_width = 32
    embed_dim = 16
    batch_size = 128
    epochs = 10

    [dp]                      ; optional section
    noise_multiplier = 0.01
    clip_mode = adaptive_median
    delta = 1e-5

    [label_dp]                ; optional section
    flip_probability = 0.1

    [attack]
    variant = exact
    k = 1
    cap = 1000000

    [baseline]
    k = 5
"""

import configparser
import os
from dataclasses import dataclass, field

from .dp import DpConfig, LabelDpConfig
from .protocol import TrainConfig

_ALLOWED = {
    "experiment": {"dataset", "schema", "output", "repetitions", "seed",
                   "max_attack_samples", "delimiter", "vocab_policy"},
    "train": {"mode", "learning_rate", "client_hidden", "server_hidden",
              "cut_width", "embed_dim", "batch_size", "epochs",
              "fsl_samples_per_client"},
    "dp": {"noise_multiplier", "clip_mode", "clip_norm", "delta"},
    "label_dp": {"flip_probability"},
    "attack": {"variant", "k", "cap"},
    "baseline": {"k"},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset_path: str
    schema_path: str
    output_dir: str = "runs/out"
    repetitions: int = 1
    seed: int = 0
    max_attack_samples: int = 2000
    delimiter: str = ","
    vocab_policy: str = "error"
    train: TrainConfig = field(default_factory=TrainConfig)
    attack_variant: str = "exact"
    attack_k: int = 1
    enumeration_cap: int = 10 ** 6
    baseline_k: int = 5

    def validate_paths(self):
        for p, what in ((self.dataset_path, "dataset"), (self.schema_path, "schema")):
            if not os.path.exists(p):
                raise ConfigError(f"{what} path does not exist: {p}")


def _hidden(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)

    for section in parser.sections():
        if section not in _ALLOWED:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _ALLOWED[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    if "experiment" not in parser:
        raise ConfigError("missing [experiment] section")

    exp = parser["experiment"]
    if "dataset" not in exp or "schema" not in exp:
        raise ConfigError("[experiment] needs 'dataset' and 'schema' keys")

    tr = parser["train"] if "train" in parser else {}
    train = TrainConfig(
        learning_rate=float(tr.get("learning_rate", 0.01)),
        client_hidden=_hidden(tr.get("client_hidden", "256,128")),
        server_hidden=_hidden(tr.get("server_hidden", "256,128")),
        cut_width=int(tr.get("cut_width", 32)),
        embed_dim=int(tr.get("embed_dim", 16)),
        batch_size=int(tr.get("batch_size", 128)),
        epochs=int(tr.get("epochs", 10)),
        mode=tr.get("mode", "sl"),
        fsl_samples_per_client=int(tr.get("fsl_samples_per_client", 16)),
        seed=int(exp.get("seed", 0)),
    )
    if "dp" in parser:
        d = parser["dp"]
        clip_norm = d.get("clip_norm")
        train.dp = DpConfig(
            noise_multiplier=float(d.get("noise_multiplier", 0.01)),
            clip_mode=d.get("clip_mode", "adaptive_median"),
            clip_norm=float(clip_norm) if clip_norm else None,
            delta=float(d.get("delta", 1e-5)),
        )
    if "label_dp" in parser:
        train.label_dp = LabelDpConfig(
            flip_probability=float(parser["label_dp"].get("flip_probability", 0.1)))

    at = parser["attack"] if "attack" in parser else {}
    bl = parser["baseline"] if "baseline" in parser else {}
    variant = at.get("variant", "exact")
    if variant not in ("exact", "topk"):
        raise ConfigError(f"unknown attack variant {variant!r}")
    return ExperimentConfig(
        dataset_path=exp["dataset"],
        schema_path=exp["schema"],
        output_dir=exp.get("output", "runs/out"),
        repetitions=int(exp.get("repetitions", 1)),
        seed=int(exp.get("seed", 0)),
        max_attack_samples=int(exp.get("max_attack_samples", 2000)),
        delimiter=exp.get("delimiter", ","),
        vocab_policy=exp.get("vocab_policy", "error"),
        train=train,
        attack_variant=variant,
        attack_k=int(at.get("k", 1)),
        enumeration_cap=int(at.get("cap", 10 ** 6)),
        baseline_k=int(bl.get("k", 5)),
    )
