import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import R0_EX
from wrflow.errors import IoError, ParseError, ValidationError
from wrflow.formats import (
    RunReport,
    dumps_report,
    emit_report,
    load_psd,
    loads_report,
    parse_matrix_file,
    read_report,
    resolve_projection,
    resolve_subspace,
    write_matrix_file,
)
from wrflow.psd import Projection, PsdOperator


def _write(tmp_path, name, tree):
    p = tmp_path / name
    p.write_text(json.dumps(tree) if not isinstance(tree, str) else tree)
    return p


def test_parse_psd_file(tmp_path):
    m = parse_matrix_file(_write(tmp_path, "r0.json", {"dim": 2, "entries": [5, 3, 3, 2], "kind": "psd"}))
    assert isinstance(m, PsdOperator)
    assert_allclose(m.matrix, R0_EX)


def test_parse_rejects_indefinite_psd(tmp_path):
    path = _write(tmp_path, "bad.json", {"dim": 2, "entries": [0, 1, 1, 0], "kind": "psd"})
    with pytest.raises(ValidationError, match="psd") as exc:
        parse_matrix_file(path)
    assert "eigenvalue -1" in str(exc.value)


def test_parse_identity_projection(tmp_path):
    p = parse_matrix_file(_write(tmp_path, "p.json", {"dim": 1, "entries": [1], "kind": "projection"}))
    assert isinstance(p, Projection)
    assert p.rank == 1 and p.matrix[0, 0] == 1.0


def test_parse_rejects_bad_projection(tmp_path):
    path = _write(tmp_path, "p.json", {"dim": 2, "entries": [0.5, 0, 0, 1], "kind": "projection"})
    with pytest.raises(ValidationError, match="eigenvalue 0.5"):
        parse_matrix_file(path)


def test_parse_symmetric_kind(tmp_path):
    m = parse_matrix_file(_write(tmp_path, "s.json", {"dim": 2, "entries": [0, 1, 1, 0], "kind": "symmetric"}))
    assert_allclose(m, [[0, 1], [1, 0]])
    assert not m.flags.writeable
    with pytest.raises(ValidationError, match="positive semidefinite"):
        load_psd(tmp_path / "s.json")


@pytest.mark.parametrize(
    "tree, fragment",
    [
        ("not json", "invalid JSON"),
        ([1, 2], "expected an object"),
        ({"dim": 2, "entries": [1, 0, 0, 1]}, "missing field"),
        ({"dim": 0, "entries": [], "kind": "psd"}, "positive integer"),
        ({"dim": 2, "entries": [1, 0, 0], "kind": "psd"}, "expected dim^2 = 4"),
        ({"dim": 1, "entries": ["x"], "kind": "psd"}, "expected a real"),
        ({"dim": 1, "entries": [1], "kind": "hermitian"}, "kind must be"),
        ({"dim": 1, "entries": 1, "kind": "psd"}, "must be a list"),
    ],
)
def test_parse_errors(tmp_path, tree, fragment):
    with pytest.raises(ParseError, match=fragment.replace("^", r"\^")):
        parse_matrix_file(_write(tmp_path, "m.json", tree))


def test_parse_rejects_asymmetric(tmp_path):
    with pytest.raises(ValidationError, match="symmetric"):
        parse_matrix_file(_write(tmp_path, "m.json", {"dim": 2, "entries": [1, 0, 1, 1], "kind": "psd"}))


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError, match="nope.json"):
        parse_matrix_file(tmp_path / "nope.json")


def test_resolve_projection_keywords_and_span():
    assert not resolve_projection("zero", 2).matrix.any()
    assert_allclose(resolve_projection("identity", 3).matrix, np.eye(3))
    assert_allclose(resolve_projection("span:1,0", 2).matrix, np.diag([1, 0]))
    assert_allclose(resolve_projection([[1.0, 0.0]], 2).matrix, np.diag([1, 0]))
    assert resolve_projection("span:1,1;2,2", 2).rank == 1
    assert resolve_projection("span:", 2).rank == 0
    with pytest.raises(ValidationError, match="3 components"):
        resolve_projection("span:1,0,0", 2)
    with pytest.raises(ValidationError, match="not a list of reals"):
        resolve_projection("span:a,b", 2)


def test_resolve_projection_from_file(tmp_path):
    path = _write(tmp_path, "p.json", {"dim": 2, "entries": [1, 0, 0, 0], "kind": "projection"})
    assert resolve_projection(str(path), 2).rank == 1
    with pytest.raises(ValidationError, match="dimension"):
        resolve_projection(str(path), 3)
    path = _write(tmp_path, "q.json", {"dim": 2, "entries": [2, 0, 0, 0], "kind": "psd"})
    with pytest.raises(ValidationError, match="eigenvalue 2"):
        resolve_projection(str(path), 2)


def test_resolve_subspace(tmp_path):
    k = resolve_subspace(str(_write(tmp_path, "k.json", {"dim": 3, "basis": [[1, 0, 0], [1, 1, 0]]})), 3)
    assert k.dim == 2
    assert_allclose(k.projection().matrix, np.diag([1, 1, 0]), atol=1e-15)
    assert resolve_subspace("span:0,1", 2).dim == 1
    assert resolve_subspace(str(_write(tmp_path, "e.json", {"dim": 2, "basis": []})), 2).dim == 0
    with pytest.raises(ValidationError):
        resolve_subspace(str(_write(tmp_path, "w.json", {"dim": 2, "basis": [[1, 0, 0]]})), 2)


def test_write_matrix_file_round_trip(tmp_path):
    path = tmp_path / "m.json"
    write_matrix_file(path, R0_EX, "psd")
    assert_allclose(parse_matrix_file(path).matrix, R0_EX, rtol=0, atol=0)


# -- reports --------------------------------------------------------------------

def _report():
    return RunReport(
        command="compare",
        inputs={"dim": 2, "r0_fro": math.sqrt(47)},
        tolerances={"stop_tol": 1e-12},
        results={"gap_fro": 0.2 - 2**-50, "r_inf": [[0.1, 1 / 3], [1 / 3, 2e-300]], "converged": True, "violations": []},
        timings={"flow": 0.0123},
    )


def test_report_round_trip(tmp_path):
    rep = _report()
    path = tmp_path / "r.json"
    emit_report(rep, path)
    assert read_report(path) == rep


def test_report_without_timings():
    rep = _report()
    back = loads_report(dumps_report(rep, include_timings=False))
    assert back.timings == {}
    assert back.results == rep.results


def test_emit_report_unwritable(tmp_path):
    target = tmp_path / "missing_dir" / "r.json"
    with pytest.raises(IoError, match="missing_dir"):
        emit_report(_report(), target)


def test_read_report_rejects_garbage(tmp_path):
    with pytest.raises(ParseError):
        read_report(_write(tmp_path, "r.json", {"inputs": {}}))
    with pytest.raises(ParseError):
        loads_report("{")


_json_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=8), st.one_of(_json_floats, st.lists(_json_floats, max_size=5))))
def test_report_round_trip_is_bit_exact(values):
    rep = RunReport(command="flow", results=values)
    back = loads_report(dumps_report(rep))
    assert back == rep
    for k, v in values.items():
        w = back.results[k]
        if isinstance(v, float):
            assert repr(v) == repr(w)
