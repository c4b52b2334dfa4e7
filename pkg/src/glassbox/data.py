"""Adult census ingestion, one-hot encoding and reproducible splits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

MISSING = "?"
LABEL_COLUMN = "income"

CANONICAL_COLUMNS = (
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education.num",
    "marital.status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital.gain",
    "capital.loss",
    "hours.per.week",
    "native.country",
)
NUMERIC_COLUMNS = (
    "age",
    "fnlwgt",
    "education.num",
    "capital.gain",
    "capital.loss",
    "hours.per.week",
)
COLUMN_PREFIXES = {"native.country": "nac"}
MARRIED_VALUES = ("Married-AF-spouse", "Married-civ-spouse", "Married-spouse-absent")

# Redundant recodings of retained features: `education` maps one-to-one onto
# `education.num`; `relationship` (Husband/Wife) restates married_1 and sex.
DEFAULT_DROP = ("education", "relationship")


class DataError(ValueError):
    """Malformed input data."""


class SchemaError(DataError):
    pass


@dataclass(frozen=True)
class RawTable:
    columns: tuple[str, ...]
    rows: tuple[tuple[str | None, ...], ...]

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str | None]:
        try:
            k = self.columns.index(name)
        except ValueError:
            raise SchemaError(f"no column named {name!r}") from None
        return [r[k] for r in self.rows]


@dataclass(frozen=True)
class DerivedRule:
    """Binary recoding of a categorical source column.

    Emits a single indicator column ``f"{name}_1"`` that is 1 when the source
    value is in ``positive`` and 0 otherwise (missing included).
    """

    name: str
    source: str
    positive: tuple[str, ...]

    @property
    def column_name(self) -> str:
        return f"{self.name}_1"

    def apply(self, value: str | None) -> float:
        return 1.0 if value in self.positive else 0.0


MARRIED_RULE = DerivedRule("married", "marital.status", MARRIED_VALUES)


@dataclass(frozen=True)
class FeatureSchema:
    numeric_columns: tuple[str, ...]
    categorical_columns: tuple[tuple[str, tuple[str, ...]], ...]
    derived_rules: tuple[DerivedRule, ...] = (MARRIED_RULE,)
    dropped: tuple[str, ...] = DEFAULT_DROP
    prefixes: tuple[tuple[str, str], ...] = tuple(COLUMN_PREFIXES.items())

    def prefix(self, column: str) -> str:
        return dict(self.prefixes).get(column, column)

    @property
    def feature_names(self) -> tuple[str, ...]:
        names = list(self.numeric_columns)
        for col, cats in self.categorical_columns:
            names.extend(f"{self.prefix(col)}_{c}" for c in cats)
        names.extend(rule.column_name for rule in self.derived_rules)
        return tuple(names)

    def groups(self) -> tuple["FeatureGroup", ...]:
        out: list[FeatureGroup] = []
        k = 0
        for col in self.numeric_columns:
            out.append(FeatureGroup(col, (k,), "numeric"))
            k += 1
        for col, cats in self.categorical_columns:
            out.append(FeatureGroup(col, tuple(range(k, k + len(cats))), "onehot"))
            k += len(cats)
        for rule in self.derived_rules:
            out.append(FeatureGroup(rule.column_name, (k,), "binary"))
            k += 1
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "numeric_columns": list(self.numeric_columns),
            "categorical_columns": [[c, list(v)] for c, v in self.categorical_columns],
            "derived_rules": [
                {"name": r.name, "source": r.source, "positive": list(r.positive)}
                for r in self.derived_rules
            ],
            "dropped": list(self.dropped),
            "prefixes": [list(p) for p in self.prefixes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            numeric_columns=tuple(d["numeric_columns"]),
            categorical_columns=tuple((c, tuple(v)) for c, v in d["categorical_columns"]),
            derived_rules=tuple(
                DerivedRule(r["name"], r["source"], tuple(r["positive"]))
                for r in d["derived_rules"]
            ),
            dropped=tuple(d["dropped"]),
            prefixes=tuple((a, b) for a, b in d["prefixes"]),
        )


@dataclass(frozen=True)
class FeatureGroup:
    """Encoded columns that originate from one source attribute."""

    name: str
    columns: tuple[int, ...]
    kind: str  # "numeric" | "onehot" | "binary"


@dataclass(frozen=True, eq=False)
class EncodedDataset:
    matrix: np.ndarray
    feature_names: tuple[str, ...]
    labels: np.ndarray
    groups: tuple[FeatureGroup, ...] = ()
    missing: np.ndarray | None = None  # rows x onehot-groups, True where source was "?"
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.feature_names):
            raise DataError("feature_names length must equal matrix width")
        if self.labels.shape != (self.matrix.shape[0],):
            raise DataError("labels must have one entry per row")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0/1")
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(self.matrix.shape[0]))

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    def group_of(self) -> dict[str, str]:
        """Map each encoded column name to the label of its group."""
        out = {}
        for g in self.groups:
            for c in g.columns:
                out[self.feature_names[c]] = g.name if len(g.columns) > 1 else self.feature_names[c]
        return out

    def take(self, idx: np.ndarray) -> "EncodedDataset":
        idx = np.asarray(idx)
        return EncodedDataset(
            matrix=self.matrix[idx],
            feature_names=self.feature_names,
            labels=self.labels[idx],
            groups=self.groups,
            missing=None if self.missing is None else self.missing[idx],
            row_ids=self.row_ids[idx],
        )


@dataclass(frozen=True)
class SplitPair:
    train: EncodedDataset
    test: EncodedDataset
    seed: int
    ratio: float


def parse_census(stream: BinaryIO | bytes) -> RawTable:
    """Parse comma-separated census text with a header row.

    "?" cells become ``None``; rows whose label cell is missing are dropped.
    Raises DataError naming the line on ragged rows.
    """
    raw = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    text = raw.decode("utf-8-sig")
    if not text.strip():
        raise DataError("empty input")
    reader = csv.reader(io.StringIO(text))
    header = None
    rows: list[tuple[str | None, ...]] = []
    for cells in reader:
        line_no = reader.line_num
        if not cells or all(not c.strip() for c in cells):
            continue
        cells = [c.strip() for c in cells]
        if header is None:
            header = tuple(cells)
            if LABEL_COLUMN in header:
                label_k = header.index(LABEL_COLUMN)
            else:
                label_k = len(header) - 1
            continue
        if len(cells) != len(header):
            raise DataError(
                f"line {line_no}: expected {len(header)} fields, got {len(cells)}"
            )
        row = tuple(None if (c == MISSING or c == "") else c for c in cells)
        if row[label_k] is None:
            continue
        rows.append(row)
    if header is None:
        raise DataError("empty input")
    return RawTable(header, tuple(rows))


def build_schema(
    table: RawTable,
    drop: Sequence[str] = DEFAULT_DROP,
    derived: Sequence[DerivedRule] = (MARRIED_RULE,),
) -> FeatureSchema:
    if len(table) == 0:
        raise SchemaError("table has no rows")
    missing = [c for c in (*CANONICAL_COLUMNS, LABEL_COLUMN) if c not in table.columns]
    if missing:
        raise SchemaError(f"missing canonical columns: {', '.join(missing)}")
    replaced = {r.source for r in derived}
    skip = set(drop) | replaced | set(NUMERIC_COLUMNS)
    categorical = []
    for col in sorted(c for c in CANONICAL_COLUMNS if c not in skip):
        cats = sorted({v for v in table.column(col) if v is not None})
        categorical.append((col, tuple(cats)))
    numeric = tuple(c for c in NUMERIC_COLUMNS if c not in drop)
    return FeatureSchema(
        numeric_columns=numeric,
        categorical_columns=tuple(categorical),
        derived_rules=tuple(derived),
        dropped=tuple(drop),
    )


def parse_label(value: str) -> int:
    v = value.rstrip(".")
    if v == ">50K":
        return 1
    if v == "<=50K":
        return 0
    raise DataError(f"unrecognised income label {value!r}")


def encode(table: RawTable, schema: FeatureSchema) -> EncodedDataset:
    """One-hot encode ``table`` under ``schema``.

    Missing categorical cells encode as an all-zero group and are flagged in
    ``EncodedDataset.missing``. Unseen categories raise DataError.
    """
    cols = {name: k for k, name in enumerate(table.columns)}
    for name in (*schema.numeric_columns, *(c for c, _ in schema.categorical_columns)):
        if name not in cols:
            raise SchemaError(f"table lacks schema column {name!r}")
    names = schema.feature_names
    n = len(table)
    X = np.zeros((n, len(names)))
    miss = np.zeros((n, len(schema.categorical_columns)), dtype=bool)

    k = 0
    for col in schema.numeric_columns:
        ci = cols[col]
        for i, row in enumerate(table.rows):
            v = row[ci]
            if v is None:
                raise DataError(f"row {i}: missing numeric value in {col!r}")
            try:
                X[i, k] = float(v)
            except ValueError:
                raise DataError(f"row {i}: non-numeric {col!r} value {v!r}") from None
        k += 1
    for g, (col, cats) in enumerate(schema.categorical_columns):
        ci = cols[col]
        lookup = {c: j for j, c in enumerate(cats)}
        for i, row in enumerate(table.rows):
            v = row[ci]
            if v is None:
                miss[i, g] = True
                continue
            j = lookup.get(v)
            if j is None:
                raise DataError(f"unseen category {v!r} in column {col!r}")
            X[i, k + j] = 1.0
        k += len(cats)
    for rule in schema.derived_rules:
        ci = cols[rule.source]
        X[:, k] = [rule.apply(row[ci]) for row in table.rows]
        k += 1

    li = cols[LABEL_COLUMN]
    y = np.array([parse_label(row[li]) for row in table.rows], dtype=np.int8)
    if not np.isfinite(X).all():
        raise DataError("non-finite numeric value")
    return EncodedDataset(X, names, y, schema.groups(), miss)


def train_test_split(data: EncodedDataset, ratio: float = 0.8, seed: int = 42) -> SplitPair:
    if not 0 < ratio < 1:
        raise DataError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(data)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.ceil(ratio * n)
    return SplitPair(data.take(np.sort(perm[:n_train])), data.take(np.sort(perm[n_train:])), seed, ratio)


def load_census(path, drop: Sequence[str] = DEFAULT_DROP) -> tuple[FeatureSchema, EncodedDataset]:
    with open(path, "rb") as fh:
        table = parse_census(fh)
    schema = build_schema(table, drop=drop)
    return schema, encode(table, schema)


def schema_summary(schema: FeatureSchema, data: EncodedDataset | None = None) -> dict:
    out = {
        "numeric_columns": list(schema.numeric_columns),
        "categorical_columns": {c: list(v) for c, v in schema.categorical_columns},
        "derived_columns": [r.column_name for r in schema.derived_rules],
        "dropped": list(schema.dropped),
        "n_features": len(schema.feature_names),
    }
    if data is not None:
        out["n_rows"] = len(data)
        out["positive_rate"] = float(data.labels.mean())
    return out
