import json

import pytest

from conftest import ref_model, ref_modes
from ullersma.config import reference_config
from ullersma.errors import ConfigurationError
from ullersma.verify import (CHECK_GROUPS, FAIL, PASS, VACUOUS, CheckResult,
                             check_commutators, check_divergence, check_inequalities, run_all)


@pytest.mark.parametrize("name", ["vacuum", "homogeneous_n0", "homogeneous_n3", "two_layer_n2"])
def test_suite_passes_on_reference_configs(name):
    report = run_all(reference_config(name))
    assert report.ok, report.table()
    names = {r.name for r in report.results}
    assert "argument_principle" in names and "divergence" in names


def test_weight_fault_is_caught():
    report = run_all(reference_config("homogeneous_n3"), corrupt_weight=True,
                     only=["commutators"])
    assert not report.ok
    assert report.context["fault"] is True
    assert any(r.status == FAIL for r in report.results)


def test_sum_rules_vacuous_without_dielectric():
    res = check_commutators(ref_modes("vacuum")[0], ref_model("vacuum").medium)
    statuses = {r.name: r.status for r in res}
    assert VACUOUS in statuses.values()
    assert FAIL not in statuses.values()


def test_inequalities_hold_on_lossy_config():
    m = ref_model("two_layer_n2")
    assert all(r.ok for r in check_inequalities(m.geometry, m.medium, m.reservoir, samples=10))


def test_divergence_vacuous_in_1d():
    assert check_divergence(ref_model("vacuum").geometry).status == VACUOUS


def test_unknown_check_rejected():
    with pytest.raises(ConfigurationError):
        run_all(reference_config("vacuum"), only=["nonsense"])


def test_subset_and_tolerance_scaling():
    r1 = run_all(reference_config("homogeneous_n3"), only=["green"])
    r2 = run_all(reference_config("homogeneous_n3"), only=["green"], tolerance_scale=10.0)
    assert {r.name for r in r1.results} == {r.name for r in r2.results}
    assert r2.results[0].tolerance == pytest.approx(10 * r1.results[0].tolerance)


def test_report_serialisation_is_deterministic():
    a = run_all(reference_config("homogeneous_n0"), seed=4)
    b = run_all(reference_config("homogeneous_n0"), seed=4)
    assert a.to_json() == b.to_json()
    data = json.loads(a.to_json())
    assert {c["check"] for c in data["checks"]} == {r.name for r in a.results}
    assert data["context"]["seed"] == 4
    assert a.table().splitlines()[0].startswith("check")


def test_judge():
    assert CheckResult.judge("x", 1e-9, 1e-8).status == PASS
    assert not CheckResult.judge("x", 1e-7, 1e-8).ok
    assert set(CHECK_GROUPS) >= {"commutators", "green"}
