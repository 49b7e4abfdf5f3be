import io as _io
import json

import numpy as np
import pandas as pd
import pytest

from ivqr import io
from ivqr.models import (
    ConfidenceSet, Dgp1Config, McConfig, MC_METHODS, MissingColumn, NonFinite, ParseError, ProfileGrid, TestResult,
    ValidationError)
from ivqr.simulation import RejectionTable, gen_dgp1


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_load_csv(tmp_path):
    path = write(tmp_path, "cluster,y,x,w_1,z_1\nNY,1.5,0.2,3,1\nCA,2,0.1,4,0\nNY,-1e-3,0.3,5,1\n")
    data = io.load_csv(path)
    assert data.n == 3
    assert data.d_w == 2
    assert data.cluster_labels == ["NY", "CA"]
    assert list(data.cluster) == [0, 1, 0]
    assert data.y[2] == -0.001
    np.testing.assert_array_equal(data.w[:, 0], 1.0)
    assert io.load_csv(path, add_intercept=False).d_w == 1


def test_weights_column(tmp_path):
    path = write(tmp_path, "cluster,y,x,z_1,v\n1,1,0,1,2\n2,2,1,0,0.5\n")
    data = io.load_csv(path)
    assert list(data.v) == [2.0, 0.5]
    assert data.d_w == 1


def test_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        io.load_csv(write(tmp_path, "cluster,y,x,w_1\n1,1,0,1\n"))


def test_instrument_columns_without_gaps(tmp_path):
    with pytest.raises(MissingColumn):
        io.load_csv(write(tmp_path, "cluster,y,x,z_1,z_3\n1,1,0,1,2\n"))


def test_parse_error_reports_the_line(tmp_path):
    path = write(tmp_path, "cluster,y,x,z_1\n1,1,0,1\n2,abc,1,0\n")
    with pytest.raises(ParseError) as error:
        io.load_csv(path)
    assert error.value.line == 3
    assert "line 3" in str(error.value)


def test_ragged_row(tmp_path):
    with pytest.raises(ParseError):
        io.load_csv(write(tmp_path, "cluster,y,x,z_1\n1,1,0,1\n2,1,1,0,7\n"))


@pytest.mark.parametrize("value", ["inf", "nan", "-inf"])
def test_non_finite(tmp_path, value):
    with pytest.raises(NonFinite):
        io.load_csv(write(tmp_path, "cluster,y,x,z_1\n1,%s,0,1\n" % value))


def test_export_and_import_are_exact(tmp_path):
    data = gen_dgp1(Dgp1Config(n=120, J=4, dz=2, seed=3))
    path = str(tmp_path / "dgp1.csv")
    io.dump_csv(data, path)
    loaded = io.load_csv(path)
    for name in ("y", "x", "w", "z", "cluster", "v"):
        np.testing.assert_array_equal(getattr(loaded, name), getattr(data, name))


def test_empty_document():
    document = json.loads(io.emit_results([], "json", {"seed": 1}).decode("utf-8"))
    assert document == {"schema": "ivqr-results/1", "config": {"seed": 1}, "results": []}


def test_test_results_read_back():
    result = TestResult("AR", 3.5, 2.0, 0.04, 0.1, 32, "enumerate", tau=0.5, beta0=1.5,
                        metadata={"weighting": "identity"})
    config, (back, ) = io.read_results(io.emit_results([result], "json", {"alpha": 0.1}))
    assert config == {"alpha": 0.1}
    assert back.to_dict() == result.to_dict()
    assert back.reject


def test_unknown_schema():
    with pytest.raises(ValidationError):
        io.read_results(json.dumps({"schema": "other/2", "config": {}, "results": []}))


def test_unknown_format():
    with pytest.raises(ValidationError):
        io.emit_results([], "xml")


def test_rejection_table_csv():
    methods = list(MC_METHODS[:6])
    taus = [0.1, 0.25, 0.5, 0.75, 0.9]
    columns = pd.MultiIndex.from_tuples([(h, t) for h in ("H0", "H1") for t in taus], names=["hypothesis", "tau"])
    rates = pd.DataFrame(10.0, index=methods, columns=columns)
    failures = pd.DataFrame(0, index=methods, columns=columns)
    table = RejectionTable(rates, failures, 100, Dgp1Config(), McConfig())

    lines = io.emit_results([table], "csv", {"seed": 42}).decode("utf-8").splitlines()
    assert lines[0] == "# schema: ivqr-results/1"
    assert lines[1] == '# config: {"seed": 42}'
    assert lines[2] == "# rejection_table"
    frame = pd.read_csv(_io.StringIO("\n".join(lines[3:])), index_col=0)
    assert list(frame.index) == methods
    assert list(frame.columns[:10]) == ["%s_%s" % (h, t) for h in ("H0", "H1") for t in taus]
    assert frame.shape == (6, 20)
    assert (frame.iloc[:, :10] == 10.0).all().all()


def test_confidence_set_csv():
    grid = ProfileGrid(0.0, 1.0, 0.25)
    accepted = ConfidenceSet("AR", 0.5, 0.1, grid, [False, True, True, False, True])
    empty = ConfidenceSet("T", 0.5, 0.1, grid, [False] * 5)
    lines = io.emit_results([accepted, empty], "csv").decode("utf-8").splitlines()
    assert lines[2:] == [
        "# confidence_set", "method,tau,alpha,lower,upper", "AR,0.5,0.1,0.25,0.5", "AR,0.5,0.1,1.0,1.0",
        "T,0.5,0.1,,"]


def test_load_edges(tmp_path):
    net = io.load_edges(write(tmp_path, "source,target\n0,1\n1,2\n2,0\n", "edges.csv"))
    assert net.n == 3
    assert net.edges.shape == (3, 2)
    spaced = io.load_edges(write(tmp_path, "0 1\n1 2\n", "edges.txt"), n=5)
    assert spaced.n == 5
    assert list(spaced.degrees) == [1, 2, 1, 0, 0]


def test_load_edges_rejects_labels(tmp_path):
    with pytest.raises(ParseError):
        io.load_edges(write(tmp_path, "0,1\na,b\n", "edges.csv"))
