from datetime import date

import numpy as np
import pytest

from insider_forest.errors import DataError, InvalidSpec
from insider_forest.featurize import assemble, read_panel_csv
from insider_forest.form4 import Label, Transaction


def txn(cik, day, label, code="D", **flags):
    return Transaction(cik, "X", day, code, label=label, **flags)


@pytest.fixture
def panel(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text(
        "cik,quarter,size,leverage\n"
        "1,2020Q1,10,\n"
        "1,2020Q2,11,0.4\n"
        "2,2020Q1,5,NA\n"
        "2,2020Q3,6,0.2\n"
    )
    return read_panel_csv(path)


def test_panel_reading(panel):
    assert panel[("1", "2020Q1")] == {"size": 10.0, "leverage": None}
    assert panel[("2", "2020Q3")] == {"size": 6.0, "leverage": 0.2}


def test_panel_header_checked(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("quarter,cik,a\n")
    with pytest.raises(DataError):
        read_panel_csv(path)


def test_assemble_fills_and_drops(panel):
    txns = [
        txn("1", date(2020, 2, 1), Label.UNLAWFUL, is_officer=True),
        txn("2", date(2020, 1, 15), Label.LAWFUL, code="A"),  # no Q2 row to fill from
        txn("1", date(2020, 5, 1), Label.LAWFUL, code="A"),
        txn("1", date(2020, 5, 2), Label.UNLABELED),
    ]
    d, dropped = assemble(txns, panel, ["size", "leverage", "acquisition_disposition", "is_officer"])
    assert dropped == 2
    np.testing.assert_array_equal(d.x, [[10.0, 0.4, 0.0, 1.0], [11.0, 0.4, 1.0, 0.0]])
    assert d.y.tolist() == [1, 0]
    assert d.schema.kinds == ["numeric", "numeric", "categorical", "categorical"]


def test_assemble_unknown_column(panel):
    with pytest.raises(InvalidSpec):
        assemble([txn("1", date(2020, 5, 1), Label.LAWFUL)], panel, ["size", "missing_col"])
