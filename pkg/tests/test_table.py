import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gramediate.table import (
    TRANSCRIBED_COUNTS,
    ContingencyTable,
    DataError,
    ObservationRecords,
    VariableSchema,
    crosstab,
    embedded_dataset,
    expand,
    marginalize,
    parse_csv,
)

SCHEMA = (
    VariableSchema("SSC-F", ("0", "1", "2", "3")),
    VariableSchema("SSC-W", ("0", "1", "2", "3")),
    VariableSchema("TIME", ("0", "1", "2")),
    VariableSchema("IC", ("0", "1")),
)
AB = (VariableSchema("A", ("x", "y")), VariableSchema("B", ("u", "v")))


# ---------------------------------------------------------------- schema


def test_schema_needs_two_levels():
    with pytest.raises(DataError):
        VariableSchema("A", ("only",))


def test_schema_levels_unique():
    with pytest.raises(DataError):
        VariableSchema("A", ("a", "a"))


def test_duplicate_variable_names_rejected():
    with pytest.raises(DataError):
        ContingencyTable((AB[0], AB[0]), np.zeros((2, 2)))


def test_counts_shape_must_match_schema():
    with pytest.raises(DataError):
        ContingencyTable(AB, np.zeros((2, 3)))


def test_negative_counts_rejected():
    with pytest.raises(DataError):
        ContingencyTable(AB, [[1, -1], [0, 0]])


def test_counts_are_read_only():
    t = ContingencyTable(AB, [[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        t.counts[0, 0] = 5


# ---------------------------------------------------------------- parse_csv


def test_parse_single_line():
    recs = parse_csv("SSC-F,SSC-W,TIME,IC\n0,0,0,0\n", SCHEMA)
    assert len(recs) == 1
    assert recs.rows.tolist() == [[0, 0, 0, 0]]


def test_parse_reorders_columns_to_schema():
    recs = parse_csv("IC,TIME,SSC-W,SSC-F\n1,2,3,0\n", SCHEMA)
    assert recs.rows.tolist() == [[0, 3, 2, 1]]


def test_parse_accepts_labels_and_indices():
    recs = parse_csv("A,B\nx,1\n1,u\n", AB)
    assert recs.rows.tolist() == [[0, 1], [1, 0]]


def test_parse_unknown_level_reports_line():
    with pytest.raises(DataError, match=r"line 3.*unknown level"):
        parse_csv("SSC-F,SSC-W,TIME,IC\n0,0,0,0\n4,0,0,0\n", SCHEMA)


def test_parse_unknown_column():
    with pytest.raises(DataError, match="unknown column"):
        parse_csv("SSC-F,SSC-W,TIME,DOSE\n0,0,0,0\n", SCHEMA)


def test_parse_ragged_row():
    with pytest.raises(DataError, match=r"line 2.*ragged"):
        parse_csv("A,B\nx\n", AB)


def test_csv_round_trip_of_embedded_dataset():
    table = embedded_dataset()
    text = expand(table).to_csv()
    assert len(text.strip().splitlines()) == 1 + 1343
    assert crosstab(parse_csv(text, table.schema)) == table


# ---------------------------------------------------------------- crosstab / marginalize / expand


def test_crosstab_of_empty_records_is_zero():
    t = crosstab(ObservationRecords(AB, np.zeros((0, 2), dtype=np.int64)))
    assert t.shape == (2, 2)
    assert t.total == 0


def test_marginalize_keep_all_is_identity():
    t = embedded_dataset()
    assert marginalize(t, t.names) == t


def test_marginalize_errors():
    t = embedded_dataset()
    with pytest.raises(DataError):
        marginalize(t, [])
    with pytest.raises(DataError):
        marginalize(t, ["DOSE"])


def test_marginalize_keeps_schema_order():
    t = embedded_dataset()
    assert marginalize(t, ["IC", "SSC-F"]).names == ("SSC-F", "IC")


def test_expand_small_table():
    recs = expand(ContingencyTable(AB, [[1, 0], [0, 2]]))
    assert recs.rows.tolist() == [[0, 0], [1, 1], [1, 1]]


def test_expand_rejects_fractional_counts():
    with pytest.raises(DataError):
        expand(ContingencyTable(AB, [[0.5, 0], [0, 2]]))


def _tables():
    shapes = st.lists(st.integers(2, 3), min_size=1, max_size=3)

    def build(shape):
        n = int(np.prod(shape))
        return st.lists(st.integers(0, 6), min_size=n, max_size=n).map(
            lambda c: ContingencyTable(
                [VariableSchema(f"V{i}", tuple(map(str, range(s)))) for i, s in enumerate(shape)],
                np.array(c, dtype=float).reshape(shape),
            )
        )

    return shapes.flatmap(build)


@settings(max_examples=100, deadline=None)
@given(_tables())
def test_crosstab_expand_round_trip(t):
    assert crosstab(expand(t)) == t


@settings(max_examples=100, deadline=None)
@given(_tables(), st.data())
def test_marginalize_composes_and_preserves_total(t, data):
    keep = data.draw(st.lists(st.sampled_from(t.names), min_size=1, unique=True))
    inner = data.draw(st.lists(st.sampled_from(keep), min_size=1, unique=True))
    once = marginalize(t, inner)
    twice = marginalize(marginalize(t, keep), inner)
    assert once == twice
    assert once.total == t.total


# ---------------------------------------------------------------- embedded data


def test_embedded_cells():
    t = embedded_dataset()
    assert t.shape == (4, 4, 3, 2)
    assert t.n_cells == 96
    assert t[{"SSC-F": 0, "SSC-W": 0, "TIME": 0, "IC": 0}] == 53
    assert t[{"SSC-F": 3, "TIME": 0, "IC": 1, "SSC-W": 3}] == 24
    assert t[{"SSC-F": 1, "TIME": 1, "IC": 0, "SSC-W": 3}] == 0
    assert t.total == 1343
    assert len(expand(t)) == 1343


def test_transcription_total_and_correction():
    printed = embedded_dataset(printed=True)
    assert printed.total == 1333
    diff = embedded_dataset().counts - printed.counts
    assert np.count_nonzero(diff) == 1
    assert diff[2, 2, 2, 1] == 10


def test_embedded_margins_against_raw_sums():
    # oracle: sum the transcribed rows directly, without the table machinery
    ic_time = {}
    for (f, time), row in TRANSCRIBED_COUNTS:
        for ic in (0, 1):
            ic_time[ic, time] = ic_time.get((ic, time), 0) + sum(row[4 * ic: 4 * ic + 4])
    ic_time[1, 2] += 10  # the single corrected cell
    t = embedded_dataset()
    m = marginalize(t, ["TIME", "IC"])
    for (ic, time), n in ic_time.items():
        assert m[{"IC": ic, "TIME": time}] == n
    assert m[{"IC": 0, "TIME": 0}] == 261
    assert marginalize(t, ["IC"])[{"IC": 1}] == 712
    assert m[{"IC": 1, "TIME": 2}] == 192


@pytest.mark.parametrize(
    "ic,time,n", [(0, 0, 53), (0, 1, 45), (0, 2, 47), (1, 0, 83), (1, 1, 69), (1, 2, 87)]
)
def test_neither_symptom_counts(ic, time, n):
    assert embedded_dataset()[{"SSC-F": 0, "SSC-W": 0, "TIME": time, "IC": ic}] == n


# ---------------------------------------------------------------- serialization


def test_json_round_trip():
    t = embedded_dataset()
    obj = json.loads(json.dumps(t.to_json()))
    assert obj["order"] == "lex-last-fastest"
    assert ContingencyTable.from_json(obj) == t


def test_last_variable_fastest():
    t = ContingencyTable(AB, [[1, 2], [3, 4]])
    assert t.to_json()["counts"] == [1, 2, 3, 4]


def test_reorder():
    t = embedded_dataset()
    r = t.reorder(["IC", "TIME", "SSC-W", "SSC-F"])
    assert r.shape == (2, 3, 4, 4)
    assert r[{"SSC-F": 3, "TIME": 0, "IC": 1, "SSC-W": 3}] == 24
