from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kglab import persist
from kglab.plots import emit_plot, render_svg


def test_empty_series_rejected(tmp_path):
    with pytest.raises(ValueError):
        render_svg({})
    with pytest.raises(ValueError):
        emit_plot({}, tmp_path / "p.svg")


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        render_svg({"a": ([0, 1, 2], [0, 1])})


def test_identical_inputs_identical_bytes(tmp_path):
    t = np.linspace(0, 1, 50)
    series = {"decay": (t, np.exp(-t)), "growth <b+>": (t, np.exp(t))}
    a = emit_plot(series, tmp_path / "a.svg", title="modes", logy=True)
    b = emit_plot(series, tmp_path / "b.svg", title="modes", logy=True)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.startswith("<svg") or text.startswith("<?xml")
    assert "&lt;b+&gt;" in text


def test_log_axis_drops_nonpositive():
    svg = render_svg({"a": ([0, 1, 2, 3], [1.0, 0.0, -1.0, 10.0])}, logy=True)
    assert "NaN" not in svg and "nan" not in svg


def test_json_special_values(tmp_path):
    obj = {"b": np.float64(math.nan), "a": [np.inf, -np.inf, np.int64(3)], "c": np.array([1.5, 2.0]),
           "d": np.bool_(True)}
    p = persist.write_json(tmp_path / "x.json", obj)
    data = json.loads(p.read_text())
    assert data == {"a": ["inf", "-inf", 3], "b": None, "c": [1.5, 2.0], "d": True}
    assert list(data) == ["a", "b", "c", "d"]


@settings(max_examples=30, deadline=None)
@given(values=st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_csv_roundtrip_exact(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("csv") / "c.csv"
    persist.write_csv(p, {"t": np.arange(len(values), dtype=float), "v": values})
    back = persist.read_csv(p)
    np.testing.assert_array_equal(back["v"], np.array(values))


def test_csv_unequal_columns(tmp_path):
    with pytest.raises(ValueError):
        persist.write_csv(tmp_path / "c.csv", {"a": [1, 2], "b": [1]})


def test_sha256_stable(tmp_path):
    p = persist.write_json(tmp_path / "x.json", {"k": 1})
    assert persist.sha256(p) == persist.sha256(p)
    assert len(persist.sha256(p)) == 64
