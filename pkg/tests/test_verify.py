import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yfwl import PartitionedDesign
from yfwl.errors import (
    DegenerateResidual,
    DimensionMismatch,
    InstanceTooLarge,
    OracleSizeExceeded,
    SingularSystem,
)
from yfwl.verify import (
    DEFAULT_TOL,
    RELAXED_TOL,
    EquivalenceReport,
    check_block_relation,
    check_cov_equivalence,
    check_cramer_agreement,
    check_leverage_blocks,
    check_lovell_identities,
    check_projection_decomposition,
    check_yule_identity,
    compare,
    covariance_cases,
    cramer_oracle_fit,
    instance_rng,
    leibniz_det,
    random_instance,
    run_suite,
)

from .conftest import orthogonal_design


# --------------------------------------------------------------------------- oracle


def test_leibniz_small_cases():
    assert leibniz_det([[3.0]]) == 3.0
    assert leibniz_det([[1.0, 2.0], [3.0, 4.0]]) == pytest.approx(-2.0)
    assert leibniz_det(np.diag([2.0, 3.0, 4.0])) == pytest.approx(24.0)
    perm = np.eye(4)[[1, 0, 2, 3]]
    assert leibniz_det(perm) == pytest.approx(-1.0)


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 6))
def test_leibniz_matches_lu(seed, k):
    a = np.random.default_rng(seed).standard_normal((k, k))
    assert leibniz_det(a) == pytest.approx(np.linalg.det(a), rel=1e-9, abs=1e-12)


def test_cramer_single_regressor():
    x = np.array([[1.0], [2.0], [3.0]])
    y = np.array([2.0, 3.0, 7.0])
    # sum(xy) / sum(x^2) = 29 / 14
    np.testing.assert_allclose(cramer_oracle_fit(x, y), [29 / 14], rtol=1e-15)


def test_cramer_exact_line():
    x = np.column_stack([np.ones(4), np.arange(4.0)])
    np.testing.assert_allclose(cramer_oracle_fit(x, 1 + 2 * np.arange(4.0)), [1.0, 2.0], rtol=1e-14)


def test_cramer_limits():
    rng = np.random.default_rng(0)
    with pytest.raises(OracleSizeExceeded):
        cramer_oracle_fit(rng.standard_normal((20, 9)), rng.standard_normal(20))
    x = np.column_stack([np.ones(5), np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(SingularSystem):
        cramer_oracle_fit(x, np.arange(5.0))
    with pytest.raises(DimensionMismatch):
        cramer_oracle_fit(np.ones((4, 1)), np.ones(3))


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 6))
def test_cramer_agrees_with_cholesky(seed, k):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3 * k + 4, k))
    report = check_cramer_agreement(x, rng.standard_normal(3 * k + 4))
    assert report.passed, report


# --------------------------------------------------------------------------- reports


def test_compare_and_json_roundtrip():
    r = compare("demo", [1.0, 2.0 + 1e-12], [1.0, 2.0], 1e-9, "tiny")
    assert r.passed and r.max_abs_err == pytest.approx(1e-12, rel=1e-3)
    assert r.tolerance_used == pytest.approx(3e-9)
    payload = json.loads(r.to_json())
    assert list(payload) == [
        "identity_name", "passed", "max_abs_err", "max_rel_err", "tolerance_used", "instance_descriptor",
    ]
    assert EquivalenceReport(**payload) == r
    assert not compare("demo", [1.0], [1.1], 1e-9).passed
    with pytest.raises(DimensionMismatch):
        compare("demo", [1.0], [1.0, 2.0], 1e-9)


# --------------------------------------------------------------------------- identities


def test_yule_on_single_focus(rng):
    inst = random_instance(rng, 80, 1, 4, rho=0.6, errors="hetero")
    assert check_yule_identity(inst.design).passed


def test_yule_requires_single_focus(design):
    if design.k1 == 1:
        pytest.skip("fixture already has k1 = 1")
    with pytest.raises(DimensionMismatch):
        check_yule_identity(design)


def test_yule_degenerate_focus():
    n = 10
    t = np.arange(n, dtype=float)
    w2 = np.column_stack([np.ones(n), t])
    d = PartitionedDesign(t**2, (3 * t + 1)[:, None] + 1e-15, w2)
    with pytest.raises(DegenerateResidual):
        check_yule_identity(d)


def test_lovell_orthogonal_design_is_tight():
    d = orthogonal_design()
    coef, resid = check_lovell_identities(d)
    assert coef.passed and resid.passed
    assert coef.max_abs_err <= 1e-12 and resid.max_abs_err <= 1e-12
    assert "near-collinear" not in coef.instance_descriptor
    assert coef.tolerance_used < 10 * DEFAULT_TOL * (1 + np.max(np.abs(d.y)))


def test_near_collinear_relaxes_tolerance():
    inst = random_instance(instance_rng(5, 0), 200, 3, 4, rho=0.999)
    coef, resid = check_lovell_identities(inst.design, descriptor=inst.descriptor)
    assert coef.passed and resid.passed
    assert "near-collinear" in coef.instance_descriptor
    assert coef.tolerance_used >= RELAXED_TOL


def test_forced_tolerance_is_honoured(design):
    coef, _ = check_lovell_identities(design, tolerance=1e-30)
    assert not coef.passed


def test_projection_decomposition(rng):
    inst = random_instance(rng, 60, 3, 5, rho=0.5)
    report = check_projection_decomposition(inst.design)
    assert report.passed, report
    for part in ("sum", "orthogonal", "idempotent(P_W1*)", "symmetric(P_W)"):
        assert part in report.instance_descriptor


def test_projection_refuses_large_instance(rng):
    inst = random_instance(rng, 201, 2, 2)
    with pytest.raises(InstanceTooLarge):
        check_projection_decomposition(inst.design)


def test_block_relation_and_leverages(rng):
    inst = random_instance(rng, 120, 4, 6, rho=0.8, outlier=6.0)
    assert check_block_relation(inst.design).passed
    report = check_leverage_blocks(inst.design)
    assert report.passed and "trace_err" in report.instance_descriptor


@pytest.mark.parametrize("case", range(12))
def test_cov_equivalence_each_case(instance, case):
    estimator, params = covariance_cases(instance.design, instance.clusters)[case]
    report = check_cov_equivalence(instance.design, estimator, **params)
    assert report.passed, report
    expect = "dof" if case in (0, 2, 11) else "exact"
    assert report.identity_name.endswith(expect)


def test_cov_equivalence_min_delta(instance):
    report = check_cov_equivalence(instance.design, "hc4", hc4_delta="min")
    assert report.passed and "delta=min" in report.identity_name


@given(
    seed=st.integers(0, 2**32 - 1),
    k1=st.integers(1, 5),
    k2=st.integers(1, 8),
    rho=st.floats(0.0, 0.95),
    intercept=st.sampled_from(["controls", "focus", "none"]),
)
def test_identities_hold_on_random_designs(seed, k1, k2, rho, intercept):
    if intercept == "focus" and k1 == 1:
        k1 = 2
    inst = random_instance(np.random.default_rng(seed), 40, k1, k2, rho=rho, intercept=intercept, errors="ar1")
    d = inst.design
    checks = [*check_lovell_identities(d), check_block_relation(d), check_projection_decomposition(d)]
    checks.append(check_leverage_blocks(d))
    for estimator, params in covariance_cases(d, inst.clusters):
        checks.append(check_cov_equivalence(d, estimator, **params))
    failed = [r for r in checks if not r.passed]
    assert not failed, failed


# --------------------------------------------------------------------------- suite


def test_suite_is_deterministic():
    a = [r.to_json() for r in run_suite(7, 3)]
    b = [r.to_json() for r in run_suite(7, 3)]
    assert a == b
    c = [r.to_json() for r in run_suite(8, 3)]
    assert a != c


def test_suite_covers_every_identity():
    names = {r.identity_name.split("[")[0].split(" ")[0] for r in run_suite(1, 4)}
    assert {
        "coefficients", "residuals", "yule_bivariate", "block_relation", "cov",
        "projection_decomposition", "leverage_blocks", "cramer_vs_cholesky",
    } <= names


def test_suite_fixed_rho():
    reports = list(run_suite(3, 2, rho=0.999))
    assert all(r.passed for r in reports)
    assert any("near-collinear" in r.instance_descriptor for r in reports)


def test_random_instance_validation(rng):
    with pytest.raises(ValueError):
        random_instance(rng, 20, 1, 1, rho=1.0)
    with pytest.raises(ValueError):
        random_instance(rng, 20, 1, 1, errors="garch")
    with pytest.raises(ValueError):
        random_instance(rng, 20, 0, 1, intercept="focus")


def test_instance_rng_streams_are_independent():
    draws = {tuple(instance_rng(1, i).integers(0, 10**9, 3)) for i in range(50)}
    assert len(draws) == 50
    assert list(itertools.islice(instance_rng(1, 0).integers(0, 9, 5), 5)) == list(instance_rng(1, 0).integers(0, 9, 5))
