import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbindex.bounds import (
    EUCLIDEAN,
    SPHERE,
    AmbientModel,
    VerificationReport,
    index_lower_bound,
    fractional_bound,
    stable_classification,
    verify_comparison,
)
from fbindex.errors import ConfigError

models = st.sampled_from([EUCLIDEAN, SPHERE, AmbientModel.custom(2), AmbientModel.custom(10)])


@pytest.mark.parametrize("g, k, expected", [(0, 4, 0), (3, 1, 1), (0, 1, 0), (1, 2, 0), (1, 3, 1), (0, 5, 1)])
def test_euclidean_bound_values(g, k, expected):
    assert index_lower_bound(g, k) == expected


def test_sphere_bound_values():
    assert index_lower_bound(2, 1, SPHERE) == 0
    assert index_lower_bound(0, 5, SPHERE) == 0
    assert index_lower_bound(0, 6, SPHERE) == 1


@given(st.integers(0, 30), st.integers(1, 30), models)
def test_bound_monotone(g, k, a):
    b = index_lower_bound(g, k, a)
    assert index_lower_bound(g + 1, k, a) >= b
    assert index_lower_bound(g, k + 1, a) >= b


@given(st.integers(0, 30), st.integers(1, 30), models)
def test_bound_is_ceiling_of_fraction(g, k, a):
    assert index_lower_bound(g, k, a) == max(0, math.ceil(fractional_bound(g, k, a)))


@given(st.integers(0, 30), st.integers(1, 30), models)
def test_zero_bound_iff_small_harmonic_space(g, k, a):
    dim = 2 * g + k - 1
    assert (index_lower_bound(g, k, a) == 0) == (2 * dim <= a.equation_multiplier)


def test_bound_rejects_bad_topology():
    with pytest.raises(ConfigError):
        index_lower_bound(0, 0)
    with pytest.raises(ConfigError):
        index_lower_bound(-1, 2)


def test_classification_euclidean_exact():
    c = stable_classification(EUCLIDEAN)
    assert set(c.admissible) == {(0, 1), (0, 2), (0, 3), (0, 4), (1, 1), (1, 2)}
    assert not c.discrepancy


def test_classification_sphere_flags_discrepancies():
    c = stable_classification(SPHERE)
    assert set(c.reference) == {(0, 1), (0, 2), (0, 3), (0, 4), (1, 1), (1, 2), (2, 1)}
    assert (0, 5) in c.missing_from_reference
    assert c.discrepancy
    assert any("DISCREPANCY" in line and "(0, 5)" in line for line in c.lines())


def test_classification_custom_multiplier():
    c = stable_classification(AmbientModel.custom(2))
    assert set(c.admissible) == {(0, 1), (0, 2)}
    assert c.reference is None


def test_ambient_model_validation():
    with pytest.raises(ConfigError):
        AmbientModel("euclidean", 1.0, 3, 6)
    with pytest.raises(ConfigError):
        AmbientModel("custom", 0.0, 1, 0)
    with pytest.raises(ConfigError):
        AmbientModel.from_tag("hyperbolic")


def test_comparison_rows():
    jac = [-0.2, 0.5, 0.6]
    hodge = np.linspace(0.0, 6.0, 13)  # hodge[m-1] = (m-1) / 2
    rows = verify_comparison(jac, hodge, H=0.5, a=EUCLIDEAN, alpha_max=3)
    by = {(r.alpha, r.variant): r for r in rows}
    # alpha = 1: -0.2 <= -0.5 + 0 fails; the scan moves to m = 2 (rhs 0)
    assert by[1, "minimal"].m_alpha == 1 and by[1, "minimal"].margin == pytest.approx(-0.3)
    assert not by[1, "minimal"].passed
    assert by[1, "scan"].m_alpha == 2 and by[1, "scan"].margin == pytest.approx(0.2)
    assert by[2, "minimal"].m_alpha == 7 and by[2, "minimal"].passed
    assert by[3, "minimal"].m_alpha == 13 and by[3, "minimal"].rhs == pytest.approx(5.5)
    for r in rows:
        assert r.margin == pytest.approx(r.rhs - r.lambda_J)


def test_comparison_scan_exhausted():
    rows = verify_comparison([10.0], np.zeros(3), 0.0, alpha_max=1)
    scan = [r for r in rows if r.variant == "scan"][0]
    assert not scan.passed and scan.m_alpha is None and scan.margin is None


def test_comparison_scan_and_tolerance():
    jac = [0.0, 1.0, 2.0]
    hodge = np.r_[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, np.linspace(0.7, 5, 10)]
    rows = verify_comparison(jac, hodge, H=0.5, alpha_max=1)
    scan = [r for r in rows if r.variant == "scan"][0]
    assert scan.passed and scan.m_alpha == 6 and scan.margin == pytest.approx(0.0)
    loose = [r for r in verify_comparison(jac, hodge, 0.5, alpha_max=1, tol=0.5) if r.variant == "minimal"][0]
    assert loose.passed


def test_comparison_needs_enough_eigenvalues():
    with pytest.raises(ConfigError):
        verify_comparison([0.0], np.zeros(20), 0.0, alpha_max=3)
    with pytest.raises(ConfigError):
        verify_comparison([0.0, 1, 2], np.zeros(5), 0.0, alpha_max=3)


def _report():
    rows = [r.to_dict() for r in verify_comparison([-1.0, 0.5, 1.0], np.linspace(0, 9, 13), 0.5)]
    return VerificationReport("s", 0, 2, 0.5, 1, 0, rows, {"x": np.float64(1.5)}, {"ok": np.bool_(True)},
                              {"tol": 0.1}, ["n"])


def test_report_round_trip_and_timestamp():
    r = _report()
    r.decide()
    a, b = json.loads(r.to_json()), json.loads(r.to_json(stamp=False))
    assert a.pop("timestamp") and b.pop("timestamp") == ""
    assert a == b
    back = VerificationReport.from_json(r.to_json())
    assert back.verdict == r.verdict and back.rows == json.loads(r.to_json())["rows"]


def test_report_decision():
    r = _report()
    assert r.decide() == "PASS"
    r.checks["ok"] = False
    assert r.decide() == "FAIL"
    r.checks["ok"] = True
    r.index_fem = -1
    assert r.decide() == "FAIL"


def test_report_schema_version():
    d = json.loads(_report().to_json())
    d["schema_version"] = 99
    with pytest.raises(ConfigError):
        VerificationReport.from_json(json.dumps(d))
