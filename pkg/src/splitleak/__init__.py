"""splitleak: a split-learning simulator and privacy-attack laboratory.

Trains two-party split models on tabular data, mounts the exhaustive
cut-gradient matching attack to reconstruct private client features and
labels, and evaluates DP-based mitigations.
"""

from .attack import (AttackOutcome, AttackReport, CandidateConfiguration,
                     enumerate_configurations, evaluate_attack, exact_attack,
                     exact_attack_topk)
from .data import (Dataset, SplitIndices, bin_numeric, generate_synthetic,
                   load_csv, split_train_test)
from .dp import (ClipState, DpConfig, LabelDpConfig, clip_and_noise, flip_label,
                 flip_labels, label_dp_epsilon)
from .metrics import accuracy, auc, f1
from .nn import Adagrad, ClientModel, DenseStack, ServerModel
from .protocol import (TrainConfig, TrainingLog, collect_cut_gradients, train,
                       train_fsl, train_sl)
from .schema import FeatureSchema, FeatureSpec, SchemaError

__version__ = "0.1.0"
