import numpy as np
import pytest

from splitleak import FeatureSchema, TrainConfig, generate_synthetic
from splitleak import protocol
from splitleak.schema import CATEGORICAL


TOY_SCHEMA_TEXT = """
num_a,numeric,-,server,0
num_b,numeric,-,server,0
srv_cat,categorical,4,server,0
priv_a,categorical,3,client,0
priv_b,categorical,2,client,0
label,categorical,2,client,1
"""


@pytest.fixture
def toy_schema():
    return FeatureSchema.parse(TOY_SCHEMA_TEXT)


@pytest.fixture
def toy_models(toy_schema):
    cfg = TrainConfig(client_hidden=(8,), server_hidden=(8,), cut_width=4,
                      embed_dim=3)
    rng = np.random.default_rng(42)
    scalers = {s.name: (0.0, 1.0) for s in toy_schema.server_numeric}
    server, client = protocol.build_models(toy_schema, cfg, scalers, rng)
    return server, client


@pytest.fixture
def toy_dataset(toy_schema):
    return generate_synthetic(toy_schema, 400, 0.5, seed=7)


def dataset_to_csv(dataset, path, delimiter=","):
    """Round a Dataset back out to delimited text for CLI tests."""
    schema = dataset.schema
    lines = [delimiter.join(s.name for s in schema)]
    for i in range(dataset.n_rows):
        row = []
        for s in schema:
            if s.is_label:
                row.append(dataset.vocabs[s.name][dataset.labels[i]])
            elif s.kind == CATEGORICAL:
                row.append(dataset.vocabs[s.name][dataset.cat[s.name][i]])
            else:
                row.append(repr(float(dataset.num[s.name][i])))
        lines.append(delimiter.join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
