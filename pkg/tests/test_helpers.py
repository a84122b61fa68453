import math

import numpy as np
import pytest

from python_rotkit import helpers, plotting
from python_rotkit.const import CSV_SCHEMAS, ExperimentType, PlotKind
from python_rotkit.exceptions import DataError
from python_rotkit.model import EulerXYZ, RunRecord, UnitQuaternion


@pytest.mark.parametrize(
    "value, text",
    [
        (0.1, "0.10000000000000001"),
        (2.0, "2"),
        (np.float64(-1.5), "-1.5"),
        (True, "1"),
        (np.int64(7), "7"),
        ("gso", "gso"),
    ],
    ids=["float", "whole float", "numpy float", "bool", "numpy int", "str"],
)
def test_format_value(value, text):
    assert helpers.format_value(value) == text


def test_format_value_round_trips_doubles(rng):
    values = rng.normal(size=100) * 10.0 ** rng.integers(-20, 20, size=100)
    assert all(float(helpers.format_value(v)) == v for v in values)


def test_representation_csv(rng):
    q = rng.normal(size=(5, 4))
    rep = UnitQuaternion(q / np.linalg.norm(q, axis=-1, keepdims=True))
    text = helpers.representation_to_csv(rep)
    assert text.splitlines()[0] == "# rep=quat order=w,x,y,z"
    back = helpers.representation_from_csv(text)
    assert isinstance(back, UnitQuaternion)
    assert np.array_equal(back.values, rep.values)


def test_representation_header_for_pairs():
    assert helpers.representation_header(EulerXYZ, pairs=True) == (
        "# rep=euler order=alpha,beta,gamma,alpha,beta,gamma"
    )


def test_representation_pairs_from_csv():
    first, second = helpers.representation_pairs_from_csv(
        "# rep=euler order=alpha,beta,gamma,alpha,beta,gamma\n1,2,3,4,5,6\n\n0,0,0,0,0,1\n"
    )
    assert first.values.tolist() == [[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]
    assert second.values.tolist() == [[4.0, 5.0, 6.0], [0.0, 0.0, 1.0]]


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "line 1: representation CSV is empty"),
        ("w,x,y,z\n1,0,0,0\n", "line 1: expected a '# rep=<tag> order=<fields>' header"),
        ("# rep=rodrigues order=a,b,c\n", "line 1: unknown representation 'rodrigues'"),
        ("# rep=quat order=x,y,z,w\n", "line 1: quat expects order w,x,y,z"),
        ("# rep=quat order\n", "line 1: malformed header token 'order'"),
        ("# rep=quat order=w,x,y,z\n1,0,0,0\n1,0,0\n", "line 3: expected 4 values, got 3"),
        ("# rep=quat order=w,x,y,z\n1,0,zero,0\n", "line 2: could not convert"),
    ],
    ids=["empty", "no header", "unknown tag", "field order", "bad token", "short row", "not a number"],
)
def test_representation_csv_errors(text, message):
    with pytest.raises(DataError, match=message):
        helpers.representation_from_csv(text)


def test_paired_file_needs_both_halves():
    with pytest.raises(DataError, match="expects its field order twice"):
        helpers.representation_pairs_from_csv("# rep=quat order=w,x,y,z\n1,0,0,0\n")


def test_records_to_csv():
    records = [
        RunRecord(ExperimentType.TOYEST, rep="quat", loss="mse", seed=1, values={"geodesic_med": 0.5, "chordal_med": 0.25}),
        RunRecord(ExperimentType.TOYEST, rep="sixd", loss="mse", seed=2, values={"geodesic_med": 1.0, "chordal_med": 2.0}),
    ]
    text = helpers.records_to_csv(records, CSV_SCHEMAS[ExperimentType.TOYEST])
    assert text == "rep,loss,seed,geodesic_med,chordal_med\nquat,mse,1,0.5,0.25\nsixd,mse,2,1,2\n"
    header, rows = helpers.table_from_csv(text)
    assert header == list(CSV_SCHEMAS[ExperimentType.TOYEST])
    assert rows[1] == ["sixd", "mse", "2", "1", "2"]


def test_column_to_csv():
    assert helpers.column_to_csv("distance", [0.0, math.pi]) == "distance\n0\n3.1415926535897931\n"


def test_table_from_csv_errors():
    with pytest.raises(DataError, match="line 1: CSV has no header row"):
        helpers.table_from_csv("")
    with pytest.raises(DataError, match="line 3: expected 2 columns, got 3"):
        helpers.table_from_csv("a,b\n1,2\n1,2,3\n")


def test_meta_text():
    text = helpers.meta_to_text({"experiment": "fourier", "fourier.nb": (1, 2, 3), "adam_betas": (0.5, 0.25), "svg": False})
    assert text == "experiment = fourier\nfourier.nb = 1,2,3\nadam_betas = 0.5,0.25\nsvg = 0\n"
    assert helpers.meta_from_text(text)["fourier.nb"] == "1,2,3"
    with pytest.raises(DataError, match="line 2: expected 'key = value'"):
        helpers.meta_from_text("a = 1\nb\n")


def test_read_text_reports_missing_files(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        helpers.read_text(tmp_path / "nowhere.csv")


def test_write_text_creates_parents(tmp_path):
    path = helpers.write_text(tmp_path / "a" / "b" / "c.txt", "hello\n")
    assert helpers.read_text(path) == "hello\n"


def test_array_lines(rng):
    array = rng.normal(size=(2, 3))
    line = helpers.array_to_line(array)
    assert np.array_equal(helpers.line_to_array(line, (2, 3), 1), array)
    with pytest.raises(DataError, match="line 4: expected 6 values, got 2"):
        helpers.line_to_array("1 2", (2, 3), 4)
    with pytest.raises(DataError, match="line 9"):
        helpers.line_to_array("1 two", (2,), 9)


# plotting


_PLOT_INPUTS = {
    PlotKind.SCATTER: "rep,d_so3,d_repr\nquat,0.1,0.2\nquat,0.5,1.9\nsixd,0.3,0.3\n",
    PlotKind.DENSITY: "projection,ratio_pair,ratio\n"
    + "".join(f"gso,nu1/nu2,{1.0 + 0.1 * i}\nsvd_plus,m1/m2,{1.0 + 0.01 * i}\n" for i in range(20)),
    PlotKind.VECFIELD: "y1,y2,gx,gy,defined\n-1,0,1,0,1\n0,0,0,0,0\n1,1,-0.5,-0.5,1\n",
    PlotKind.PATHS: "run,iter,vector,comp_x,comp_y,comp_z,loss\ngso-0,0,nu1,1,0,0,0.5\ngso-0,1,nu1,1,0,0,0\n",
}


@pytest.mark.parametrize("kind", list(PlotKind), ids=[k.value for k in PlotKind])
def test_render_svg(kind):
    svg = plotting.render_svg(kind, _PLOT_INPUTS[kind])
    assert "<svg" in svg
    assert svg == plotting.render_svg(kind, _PLOT_INPUTS[kind])


@pytest.mark.parametrize("kind", list(PlotKind), ids=[k.value for k in PlotKind])
def test_render_svg_without_rows(kind):
    assert "<svg" in plotting.render_svg(kind, "")


def test_render_svg_checks_columns():
    with pytest.raises(DataError, match="line 1: scatter plot expects columns rep,d_so3,d_repr"):
        plotting.render_svg(PlotKind.SCATTER, "op,batch,median_ms\ngso,1,0.1\n")
