import json
import math
from pathlib import Path

import pytest

from yfwl import cli

DATA = Path(__file__).parent / "data"
PANEL = DATA / "panel50.csv"


def run(capsys, *argv):
    status = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return status, out, err


@pytest.fixture
def tiny_csv(tmp_path):
    # residualising on the constant gives x~ = [-2,-1,0,1,2]; u = [0.4,-0.6,0.4,-0.6,0.4]
    path = tmp_path / "tiny.csv"
    path.write_text("x,y\n1,3\n2,3\n3,5\n4,5\n5,7\n")
    return path


def test_fit_hand_computed(capsys, tiny_csv):
    status, out, _ = run(capsys, "fit", "--input", tiny_csv, "--focus", "x")
    assert status == cli.EXIT_OK
    payload = json.loads(out)
    assert payload["coefficients"] == {"x": 1.0}
    # sigma^2 = 1.2 / (5 - 2) = 0.4, sum x~^2 = 10
    assert payload["standard_errors"]["x"] == pytest.approx(0.2, rel=1e-12)
    assert payload["covariance"] == [[pytest.approx(0.04, rel=1e-12)]]
    assert (payload["n_obs"], payload["k1"], payload["k2"]) == (5, 1, 1)
    assert payload["estimator"] == "classical"
    assert payload["check"] is None


def test_fit_check_passes(capsys, tiny_csv):
    status, out, _ = run(capsys, "fit", "--input", tiny_csv, "--focus", "x", "--check")
    assert status == cli.EXIT_OK
    check = json.loads(out)["check"]
    assert check["passed"] and all(r["passed"] for r in check["reports"])


@pytest.mark.parametrize(
    "extra",
    [
        ["--estimator", "hc3"],
        ["--estimator", "hac", "--hac-bandwidth", "3"],
        ["--estimator", "cluster", "--cluster-col", "firm", "--cluster-dof", "g"],
        ["--intercept", "focus"],
        ["--intercept", "none"],
        ["--estimator", "hc4", "--hc4-delta", "min"],
    ],
)
def test_fit_check_on_panel(capsys, extra):
    status, out, _ = run(
        capsys, "fit", "--input", PANEL, "--focus", "x1,x2", "--controls", "z1,z2", "--check", *extra
    )
    assert status == cli.EXIT_OK, out
    payload = json.loads(out)
    assert list(payload["standard_errors"]) == list(payload["coefficients"])
    for name, se in payload["standard_errors"].items():
        idx = list(payload["coefficients"]).index(name)
        assert se == pytest.approx(math.sqrt(payload["covariance"][idx][idx]), rel=1e-10)


def test_table_format(capsys):
    status, out, _ = run(
        capsys, "fit", "--input", PANEL, "--focus", "x1", "--controls", "z1", "--format", "table", "--check"
    )
    assert status == cli.EXIT_OK
    lines = out.splitlines()
    assert lines[0].startswith("estimator: classical")
    assert lines[2].split()[0] == "x1"
    assert "check: PASS" in out


@pytest.mark.parametrize(
    "argv, needle",
    [
        (["--focus", "nope"], "nope"),
        (["--focus", "x1", "--controls", "x1"], "both"),
        (["--focus", "x1", "--estimator", "cluster"], "cluster"),
        (["--focus", "x1", "--hac-bandwidth", "2"], "hac"),
        (["--focus", "x1", "--outcome", "firm"], "firm"),
    ],
)
def test_input_errors_exit_2(capsys, argv, needle):
    status, _, err = run(capsys, "fit", "--input", PANEL, *argv)
    assert status == cli.EXIT_INPUT
    assert needle in err.lower()


def test_missing_file(capsys, tmp_path):
    status, _, err = run(capsys, "fit", "--input", tmp_path / "absent.csv", "--focus", "x")
    assert status == cli.EXIT_INPUT
    assert "not found" in err


def test_blank_cell_is_located(capsys, tmp_path):
    path = tmp_path / "holes.csv"
    path.write_text("x,y\n1,2\n2,\n3,4\n4,5\n")
    status, _, err = run(capsys, "fit", "--input", path, "--focus", "x")
    assert status == cli.EXIT_INPUT
    assert "holes.csv:3" in err and "'y'" in err


def test_non_finite_rejected(capsys, tmp_path):
    path = tmp_path / "inf.csv"
    path.write_text("x,y\n1,2\n2,inf\n3,4\n4,5\n")
    status, _, _ = run(capsys, "fit", "--input", path, "--focus", "x")
    assert status == cli.EXIT_INPUT


def test_collinear_focus_exits_3(capsys, tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("x,w,y\n1,2,1\n2,4,3\n3,6,2\n4,8,5\n5,10,4\n")
    status, _, _ = run(capsys, "fit", "--input", path, "--focus", "x,w")
    assert status == cli.EXIT_NUMERIC


def test_single_cluster_exits_2(capsys, tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("x,y,g\n1,2,a\n2,3,a\n3,5,a\n4,4,a\n")
    status, _, _ = run(capsys, "fit", "--input", path, "--focus", "x", "--estimator", "cluster", "--cluster-col", "g")
    assert status == cli.EXIT_INPUT


def test_verify_streams_reports(capsys):
    status, out, _ = run(capsys, "verify", "--instances", "2", "--n-obs", "60")
    assert status == cli.EXIT_OK
    reports = [json.loads(line) for line in out.splitlines()]
    assert len(reports) > 20 and all(r["passed"] for r in reports)


def test_verify_near_collinear(capsys):
    status, out, _ = run(capsys, "verify", "--instances", "2", "--rho", "0.999")
    assert status == cli.EXIT_OK
    assert "near-collinear" in out


def test_verify_impossible_tolerance_exits_4(capsys):
    status, _, _ = run(capsys, "verify", "--instances", "1", "--n-obs", "60", "--tolerance", "1e-18")
    assert status == cli.EXIT_CHECK


def test_bench_small(capsys):
    status, out, _ = run(capsys, "bench", "--n", "300", "--k1", "20", "--k2", "30", "--repeats", "1")
    assert status == cli.EXIT_OK
    payload = json.loads(out)
    assert payload["coef_check_passed"]
    assert payload["max_coef_discrepancy"] <= 1e-8
    assert payload["time_direct_s"] > 0 and payload["time_partitioned_s"] > 0


def test_bench_draws_same_instance(capsys):
    keys = ("max_coef_discrepancy", "max_cov_rel_discrepancy")
    first = json.loads(run(capsys, "bench", "--n", "200", "--k1", "5", "--k2", "5", "--repeats", "1")[1])
    second = json.loads(run(capsys, "bench", "--n", "200", "--k1", "5", "--k2", "5", "--repeats", "1")[1])
    assert [first[k] for k in keys] == [second[k] for k in keys]


def test_unknown_estimator_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit", "--input", str(PANEL), "--focus", "x1", "--estimator", "hc9"])
    assert exc.value.code == 2
