"""Feature schema declarations for split tabular datasets.

A schema file is plain text, one feature per line:

    name,kind,cardinality_or_dash,side,is_label

where kind is ``categorical`` or ``numeric``, cardinality is an integer for
categorical features and ``-`` for numeric ones, side is ``server`` or
``client``, and is_label is ``0`` or ``1``.  Blank lines and lines starting
with ``#`` are ignored.
"""

from dataclasses import dataclass

CATEGORICAL = "categorical"
NUMERIC = "numeric"
SERVER = "server"
CLIENT = "client"


class SchemaError(ValueError):
    """Raised when a schema (or data against a schema) is invalid."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    cardinality: int | None
    side: str
    is_label: bool = False

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, NUMERIC):
            raise SchemaError(f"unknown feature kind {self.kind!r}")
        if self.side not in (SERVER, CLIENT):
            raise SchemaError(f"unknown side {self.side!r}")
        if self.kind == CATEGORICAL:
            if self.cardinality is None or self.cardinality < 2:
                raise SchemaError(
                    f"categorical feature {self.name!r} needs cardinality >= 2"
                )
        elif self.cardinality is not None:
            raise SchemaError(f"numeric feature {self.name!r} cannot have a cardinality")


class FeatureSchema:
    """Ordered collection of FeatureSpecs describing one dataset."""

    def __init__(self, specs):
        self.specs = tuple(specs)
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        labels = [s for s in self.specs if s.is_label]
        if len(labels) != 1:
            raise SchemaError(f"schema needs exactly one label feature, got {len(labels)}")
        label = labels[0]
        if label.kind != CATEGORICAL or label.cardinality != 2:
            raise SchemaError("label must be categorical with cardinality 2")
        if label.side != CLIENT:
            raise SchemaError("label must live on the client side")
        for s in self.client_features:
            if s.kind != CATEGORICAL:
                raise SchemaError(
                    f"client feature {s.name!r} must be categorical; bin it first"
                )

    @property
    def label(self) -> FeatureSpec:
        return next(s for s in self.specs if s.is_label)

    @property
    def client_features(self):
        """Private client-side features, label excluded, in schema order."""
        return tuple(s for s in self.specs if s.side == CLIENT and not s.is_label)

    @property
    def server_categorical(self):
        return tuple(
            s for s in self.specs if s.side == SERVER and s.kind == CATEGORICAL
        )

    @property
    def server_numeric(self):
        return tuple(s for s in self.specs if s.side == SERVER and s.kind == NUMERIC)

    def __iter__(self):
        return iter(self.specs)

    def __len__(self):
        return len(self.specs)

    def __getitem__(self, name: str) -> FeatureSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def __eq__(self, other):
        return isinstance(other, FeatureSchema) and self.specs == other.specs

    def replace(self, name: str, new_spec: FeatureSpec) -> "FeatureSchema":
        return FeatureSchema(
            tuple(new_spec if s.name == name else s for s in self.specs)
        )

    def to_text(self) -> str:
        lines = []
        for s in self.specs:
            card = "-" if s.cardinality is None else str(s.cardinality)
            lines.append(f"{s.name},{s.kind},{card},{s.side},{int(s.is_label)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "FeatureSchema":
        specs = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 5:
                raise SchemaError(f"line {lineno}: expected 5 comma-separated fields")
            name, kind, card, side, is_label = parts
            cardinality = None if card == "-" else int(card)
            if is_label not in ("0", "1"):
                raise SchemaError(f"line {lineno}: is_label must be 0 or 1")
            specs.append(FeatureSpec(name, kind, cardinality, side, is_label == "1"))
        return cls(specs)

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())
