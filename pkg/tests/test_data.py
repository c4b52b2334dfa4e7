import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glassbox.data import (
    MARRIED_RULE,
    DataError,
    EncodedDataset,
    SchemaError,
    build_schema,
    encode,
    load_census,
    parse_census,
    parse_label,
    schema_summary,
    train_test_split,
)

HEADER = (
    "age,workclass,fnlwgt,education,education.num,marital.status,occupation,"
    "relationship,race,sex,capital.gain,capital.loss,hours.per.week,native.country,income\n"
)
ROW_A = "39,State-gov,77516,Bachelors,13,Never-married,Adm-clerical,Not-in-family,White,Male,2174,0,40,United-States,<=50K\n"
ROW_B = "50,?,83311,Bachelors,13,Married-civ-spouse,Exec-managerial,Husband,White,Male,0,0,13,Cuba,>50K\n"
ROW_C = "38,Private,215646,HS-grad,9,Divorced,Handlers-cleaners,Not-in-family,Black,Female,0,0,40,?,<=50K\n"


def table(*rows):
    return parse_census((HEADER + "".join(rows)).encode())


def test_two_lines_two_rows():
    t = table(ROW_A, ROW_B)
    assert len(t) == 2
    assert t.columns[-1] == "income"


def test_missing_marker_becomes_none():
    t = table(ROW_A, ROW_B)
    assert t.column("workclass") == ["State-gov", None]


def test_ragged_row_names_line():
    with pytest.raises(DataError, match="line 3"):
        table(ROW_A, "1,2,3\n")


def test_empty_stream():
    with pytest.raises(DataError):
        parse_census(b"")
    with pytest.raises(DataError):
        parse_census(io.BytesIO(b"   \n"))


def test_missing_label_row_dropped():
    t = table(ROW_A, ROW_B.replace(">50K", "?"))
    assert len(t) == 1


def test_full_file_row_count(sample_path):
    # count data lines with plain text splitting, independent of the csv module
    n_lines = sum(1 for line in sample_path.read_text().splitlines() if line.strip()) - 1
    with open(sample_path, "rb") as fh:
        assert len(parse_census(fh)) == n_lines


def test_schema_columns():
    schema = build_schema(table(ROW_A, ROW_B, ROW_C))
    assert schema.numeric_columns == (
        "age", "fnlwgt", "education.num", "capital.gain", "capital.loss", "hours.per.week"
    )
    cats = dict(schema.categorical_columns)
    assert "marital.status" not in cats and "education" not in cats
    assert cats["race"] == ("Black", "White")
    names = schema.feature_names
    assert "nac_United-States" in names and "nac_Cuba" in names
    assert names[-1] == "married_1"
    assert "sex_Male" in names and "race_White" in names


def test_schema_requires_rows_and_columns():
    with pytest.raises(SchemaError):
        build_schema(table())
    bad = parse_census(b"a,b,income\n1,2,>50K\n")
    with pytest.raises(SchemaError, match="missing canonical"):
        build_schema(bad)


def test_married_rule():
    for v in ("Married-civ-spouse", "Married-AF-spouse", "Married-spouse-absent"):
        assert MARRIED_RULE.apply(v) == 1.0
    for v in ("Never-married", "Divorced", "Widowed", "Separated", None):
        assert MARRIED_RULE.apply(v) == 0.0


def test_label_parsing():
    assert parse_label(">50K") == 1
    assert parse_label("<=50K.") == 0
    with pytest.raises(DataError):
        parse_label("maybe")


def test_encode_one_hot_groups_sum_to_one():
    t = table(ROW_A, ROW_B, ROW_C)
    data = encode(t, build_schema(t))
    for g, group in enumerate(data.groups):
        if group.kind != "onehot":
            continue
        sums = data.matrix[:, list(group.columns)].sum(axis=1)
        k = [c for c, _ in build_schema(t).categorical_columns].index(group.name)
        np.testing.assert_array_equal(sums, np.where(data.missing[:, k], 0.0, 1.0))
    assert data.labels.tolist() == [0, 1, 0]
    assert data.matrix[1, data.index("married_1")] == 1.0


def test_encode_rejects_unseen_category():
    schema = build_schema(table(ROW_A, ROW_B))
    with pytest.raises(DataError, match="unseen"):
        encode(table(ROW_C), schema)


def test_schema_round_trip(sample):
    schema, data = sample
    from glassbox.data import FeatureSchema

    assert FeatureSchema.from_dict(schema.to_dict()) == schema
    summary = schema_summary(schema, data)
    assert summary["n_features"] == data.n_features == len(schema.feature_names)


def test_sample_groups_cover_all_columns(sample):
    _, data = sample
    cols = sorted(c for g in data.groups for c in g.columns)
    assert cols == list(range(data.n_features))
    mapping = data.group_of()
    assert mapping["race_White"] == "race"
    assert mapping["age"] == "age"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95))
def test_split_partitions(seed, ratio):
    rows = (ROW_A, ROW_B, ROW_C) * 7
    t = table(*rows)
    data = encode(t, build_schema(t))
    a = train_test_split(data, ratio, seed)
    b = train_test_split(data, ratio, seed)
    ids = np.concatenate([a.train.row_ids, a.test.row_ids])
    assert sorted(ids.tolist()) == list(range(len(data)))
    np.testing.assert_array_equal(a.train.row_ids, b.train.row_ids)
    np.testing.assert_array_equal(a.train.matrix, b.train.matrix)


def test_split_rejects_bad_ratio(sample):
    with pytest.raises(DataError):
        train_test_split(sample[1], 1.0)


def test_load_census_sample(sample_path):
    schema, data = load_census(sample_path)
    assert len(data) == 2000
    assert set(np.unique(data.labels)) == {0, 1}


def test_split_sizes_and_seed_sensitivity():
    t = table(*((ROW_A, ROW_B) * 5))
    data = encode(t, build_schema(t))
    pair = train_test_split(data, 0.8, 1)
    assert (len(pair.train), len(pair.test)) == (8, 2)
    big = EncodedDataset(np.arange(1000.0)[:, None], ("v",), np.zeros(1000, dtype=int))
    a, b = train_test_split(big, 0.8, 1), train_test_split(big, 0.8, 2)
    assert not np.array_equal(a.train.row_ids, b.train.row_ids)


def test_encoded_width_matches_raw_category_census(sample_path):
    # independent census: split raw lines by hand, count distinct non-missing values
    lines = [ln for ln in sample_path.read_text().splitlines() if ln.strip()]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    schema, data = load_census(sample_path)
    width = len(schema.numeric_columns) + 1  # + married_1
    for name, _ in schema.categorical_columns:
        k = header.index(name)
        width += len({r[k] for r in rows if r[k] != "?"})
    assert data.n_features == width
