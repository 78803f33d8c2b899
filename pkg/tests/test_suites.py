import json
import time
from concurrent.futures import ThreadPoolExecutor
from unittest.mock import patch

import mpmath
import numpy as np
import pandas as pd
import pytest

from sov_verify.core.exceptions import BudgetExceeded, ConfigError
from sov_verify.schemas.report import SuiteConfig
from sov_verify.services import plane, suites
from sov_verify.services.cfield import FieldExponent
from sov_verify.services.plane import fourier_propagator, raise_if_cancelled
from sov_verify.services.reporting import render_json
from sov_verify.services.suites import Check, run_suite


def stable_json(report):
    payload = json.loads(render_json(report))
    for check in payload["checks"]:
        check["wall_time"] = 0.0
    return payload


def fake_checks():
    def boom():
        raise ZeroDivisionError("bad draw")

    return [
        Check("good", "exact", lambda: (1.0 + 0j, 1.0 + 0j, 3), 1e-6),
        Check("bad", "off by ten percent", lambda: (1.1 + 0j, 1.0 + 0j, 1), 1e-6),
        Check("crash", "raises", boom, 1e-6),
    ]


def test_unknown_suite():
    with pytest.raises(ConfigError):
        run_suite(SuiteConfig(suite="nonsense"))


def test_missing_chain_file(tmp_path):
    with pytest.raises(ConfigError):
        run_suite(SuiteConfig(suite="eigen", chain_file=str(tmp_path / "missing.json")))


def test_eigen_needs_two_sites(tmp_path, chain3):
    path = tmp_path / "chain.json"
    path.write_text(chain3.model_dump_json())
    with pytest.raises(ConfigError):
        run_suite(SuiteConfig(suite="eigen", chain_file=str(path)))


def test_load_chain_rejects_bad_layout(tmp_path):
    path = tmp_path / "chain.json"
    path.write_text(json.dumps({"N": 2, "spins": [{"n2": 0}]}))
    with pytest.raises(ConfigError):
        suites.load_chain(str(path))


def test_failures_are_recorded():
    with patch("sov_verify.services.suites.build_checks", return_value=fake_checks()):
        report = run_suite(SuiteConfig(suite="gamma", threads=2))
    assert [c.name for c in report.checks] == ["good", "bad", "crash"]
    good, bad, crash = report.checks
    assert good.passed and good.evals == 3
    assert not bad.passed and bad.rel_err == pytest.approx(0.1)
    assert crash.error == "ZeroDivisionError: bad draw"
    assert (report.summary.passed, report.summary.failed, report.summary.errors) == (1, 1, 1)


def test_tolerance_overrides():
    cfg = SuiteConfig(suite="gamma", tolerances={"gamma": 0.2})
    with patch("sov_verify.services.suites.build_checks", return_value=fake_checks()):
        report = run_suite(cfg)
    assert report.checks[1].passed
    cfg = SuiteConfig(suite="gamma", tolerances={"gamma": 0.2, "bad": 1e-3})
    with patch("sov_verify.services.suites.build_checks", return_value=fake_checks()):
        report = run_suite(cfg)
    assert not report.checks[1].passed


def test_budget_exceeded_keeps_partial_report():
    def slow():
        time.sleep(0.2)
        return 1.0 + 0j, 1.0 + 0j, 1

    checks = [Check("slow", "sleeps", slow, 1e-6), Check("late", "never runs", lambda: (0j, 0j, 0), 1e-6)]
    with patch("sov_verify.services.suites.build_checks", return_value=checks):
        with pytest.raises(BudgetExceeded) as info:
            run_suite(SuiteConfig(suite="rules", budget=0.05, threads=1))
    partial = info.value.report
    assert partial.budget_exceeded
    assert [c.name for c in partial.checks] == ["slow", "late"]
    assert partial.checks[0].passed
    assert partial.checks[1].error.startswith("BudgetExceeded")


def test_budget_cancels_running_evaluation():
    def endless():
        while True:
            raise_if_cancelled()
            time.sleep(0.01)

    checks = [Check("endless", "runs until cancelled", endless, 1e-6)]
    start = time.monotonic()
    with patch("sov_verify.services.suites.build_checks", return_value=checks):
        with pytest.raises(BudgetExceeded) as info:
            run_suite(SuiteConfig(suite="eigen", budget=0.1, threads=1))
    assert time.monotonic() - start < 2.0
    record = info.value.report.checks[0]
    assert record.error == "BudgetExceeded: evaluation cancelled: time budget exhausted"
    assert not plane.cancelled.is_set()


def test_gamma_suite_is_deterministic():
    first = run_suite(SuiteConfig(suite="gamma", seed=11))
    second = run_suite(SuiteConfig(suite="gamma", seed=11))
    assert [c.name for c in first.checks] == ["gamma-recurrence", "gamma-reflection", "gamma-inverse", "gamma-oracle"]
    assert first.summary.errors == 0
    assert first.ok
    assert stable_json(first) == stable_json(second)


def test_mpmath_precision_survives_threads():
    dps = mpmath.mp.dps
    oracle = next(c for c in suites.gamma_suite(np.random.default_rng(5), draws=100) if c.name == "gamma-oracle")
    alpha = FieldExponent(0.6 + 0.2j, 2)

    def job(i):
        if i % 2:
            return suites._record(oracle, oracle.tol).passed
        return fourier_propagator(alpha, 0.7 + 0.3j).value != 0

    with ThreadPoolExecutor(max_workers=4) as pool:
        assert all(pool.map(job, range(16)))
    assert mpmath.mp.dps == dps


def test_suite_builders():
    assert len(suites.gamma_suite(np.random.default_rng(1), draws=10)) == 4
    assert len(suites.rules_suite(np.random.default_rng(1), draws=2)) == 8
    names = [c.name for c in suites.gustafson_suite(np.random.default_rng(1))]
    assert "j-omega-mapping" in names
    assert all(c.anchor for c in suites.scalar_products_suite(np.random.default_rng(1)))


def test_gustafson_exact_checks():
    checks = {c.name: c for c in suites.gustafson_suite(np.random.default_rng(3))}
    for name in ("j-omega-mapping", "j-omega-signs"):
        record = suites._record(checks[name], checks[name].tol)
        assert record.passed, record


def test_table_rows_are_json_safe():
    frame = pd.DataFrame([{"window": "1x", "lhs": 1 + 2j, "n_max": np.int64(8), "cauchy": float("nan")}])
    assert suites._table_rows(frame) == [{"window": "1x", "lhs": "1+2j", "n_max": 8, "cauchy": None}]


def test_gustafson_checks_carry_tables():
    checks = {c.name: c for c in suites.gustafson_suite(np.random.default_rng(3))}
    assert {"gustafson-first-N2", "j-omega-N1", "j-omega-N2"} <= set(checks)
    record = suites._record(checks["gustafson-first-N1"], checks["gustafson-first-N1"].tol)
    assert record.error is None
    assert [row["window"] for row in record.table] == ["1x", "2x", "4x", "aitken"]


@pytest.mark.slow
@pytest.mark.parametrize("suite", ["rules", "scalar-products", "gustafson"])
def test_suite_passes(suite):
    report = run_suite(SuiteConfig(suite=suite, threads=2, budget=3600.0))
    failing = [(c.name, c.rel_err, c.error) for c in report.checks if not c.passed]
    assert report.ok, failing


@pytest.mark.slow
def test_eigen_suite_passes():
    report = run_suite(SuiteConfig(suite="eigen", threads=4, budget=3600.0))
    assert len(report.checks) == 30
    failing = [(c.name, c.rel_err, c.error) for c in report.checks if not c.passed]
    assert report.ok, failing
