from argparse import ArgumentParser
import itertools
import json

import pandas as pd
import pytest

from ivqr import io
from ivqr.ivqr import add_args, main, overrides


def run(argv):
    with pytest.raises(SystemExit) as error:
        main(argv)
    return error.value.code


@pytest.fixture
def data_file(tmp_path, make_design):
    path = str(tmp_path / "data.csv")
    io.dump_csv(make_design(n=120, J=5, seed=1), path)
    return path


GRID = ["--grid-min", "1.4", "--grid-max", "2.6", "--grid-step", "0.1"]


def test_fit(isolated_home, data_file, tmp_path):
    out = str(tmp_path / "fit.json")
    profile = str(tmp_path / "profile.csv")
    code = run(["fit", data_file, "--instrument", "parametric", "--profile-csv", profile, "--out", out, "-q"] + GRID)
    assert code == 0
    document = json.loads(open(out).read())
    assert document["schema"] == "ivqr-results/1"
    assert document["config"]["instrument"]["method"] == "parametric"
    assert document["results"][0]["kind"] == "fit"
    assert pd.read_csv(profile).shape[0] == 13


def test_test_is_reproducible(isolated_home, data_file, tmp_path):
    outputs = list()
    for name in ("first.json", "second.json"):
        out = str(tmp_path / name)
        code = run(["test", data_file, "--method", "AR", "--beta0", "2.0", "--mode", "enumerate", "--seed", "3",
                    "--instrument", "parametric", "--out", out, "-q"] + GRID)
        assert code == 0
        outputs.append(open(out, "rb").read())
    assert outputs[0] == outputs[1]
    _, (result, ) = io.read_results(outputs[0])
    assert result.method == "AR"
    assert result.n_sign_vectors == 32


def test_missing_column_is_a_usage_error(isolated_home, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("cluster,y,x\n1,1,0\n")
    assert run(["fit", str(path), "-q"]) == 2


def test_rank_deficient_design_is_a_numerical_failure(isolated_home, tmp_path, make_design):
    data = make_design(n=120, J=5, seed=1)
    frame = data.asDataFrame()
    frame["w_2"] = 1.0
    path = str(tmp_path / "collinear.csv")
    frame.to_csv(path, index=False)
    assert run(["fit", path, "--instrument", "parametric", "-q"] + GRID) == 3


def test_missing_configuration_file(isolated_home, data_file):
    assert run(["fit", data_file, "--config", "nowhere.yaml", "-q"]) == 2


def test_no_command():
    assert run([]) == 2


def test_cluster(isolated_home, tmp_path):
    edges = list(itertools.combinations(range(10), 2)) + list(itertools.combinations(range(10, 20), 2)) + [(9, 10)]
    path = tmp_path / "edges.csv"
    path.write_text("source,target\n" + "".join("%i,%i\n" % edge for edge in edges))
    out = str(tmp_path / "partition.csv")
    assert run(["cluster", "--edges", str(path), "--L", "2", "--eigens", "smallest", "--out", out, "-q"]) == 0
    partition = pd.read_csv(out)
    assert list(partition.columns) == ["node", "label"]
    assert list(partition["label"]) == [0] * 10 + [1] * 10


def test_simulate_grid_needs_all_bounds():
    parser = add_args(ArgumentParser())
    partial = overrides(parser.parse_args(["simulate", "--grid-min", "0"]))
    assert partial["simulation"]["grid"] is None
    full = overrides(parser.parse_args(["simulate", "--grid-min", "0", "--grid-max", "3", "--grid-step", "0.25",
                                        "--adjacency-op", "as-written"]))
    assert full["simulation"]["grid"] == [0.0, 3.0, 0.25]
    assert full["simulation"]["adjacency_op"] == "ge"


def test_fit_as_csv(isolated_home, data_file, tmp_path):
    out = str(tmp_path / "fit.csv")
    assert run(["fit", data_file, "--instrument", "parametric", "--tau", "0.25", "0.5", "--format", "csv",
                "--out", out, "-q"] + GRID) == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "# schema: ivqr-results/1"
    assert lines[2:4] == ["# fit", "tau,beta,boundary"]
    assert [line.split(",")[0] for line in lines[4:]] == ["0.25", "0.5"]


def test_methods_accept_command_line_spellings(isolated_home, data_file, tmp_path):
    out = str(tmp_path / "baselines.json")
    code = run(["test", data_file, "--method", "t-std", "im", "crs", "--tau", "0.25", "0.5", "--beta0", "2.0",
                "--mode", "enumerate", "--instrument", "parametric", "--out", out, "-q"] + GRID)
    assert code == 0
    _, results = io.read_results(open(out).read())
    assert [r.method for r in results] == ["T_STD", "T_STD", "IM", "IM", "CRS", "CRS"]
    assert [r.tau for r in results] == [0.25, 0.5] * 3

    out = str(tmp_path / "robust.json")
    code = run(["test", data_file, "--method", "t-cr", "ar-cr", "--beta0", "2.0", "--mode", "enumerate",
                "--instrument", "parametric", "--out", out, "-q"] + GRID)
    assert code == 0
    _, results = io.read_results(open(out).read())
    assert [r.method for r in results] == ["T_CR", "AR_CR"]


def test_step_is_an_alias_of_grid_step(isolated_home, data_file, tmp_path):
    parser = add_args(ArgumentParser())
    assert parser.parse_args(["ci", data_file, "--step", "0.1"]).grid_step == 0.1
    assert parser.parse_args(["simulate", "--step", "0.25"]).grid_step == 0.25

    out = str(tmp_path / "ci.json")
    code = run(["ci", data_file, "--method", "t-cr", "--grid-min", "1.4", "--grid-max", "2.6", "--step", "0.1",
                "--instrument", "parametric", "--mode", "sample", "--draws", "9", "--out", out, "-q"])
    assert code == 0
    document = json.loads(open(out).read())
    (result, ) = document["results"]
    assert result["kind"] == "confidence_set"
    assert result["method"] == "T_CR"
    assert result["grid"]["step"] == pytest.approx(0.1)
