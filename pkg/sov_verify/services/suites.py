"""Verification suites: seeded checks of the Γ-function, the rewrite rules, the scalar
products, the eigen-relations and the Mellin-Barnes identities, judged against tolerances.
"""

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import mpmath
import numpy as np
import pandas as pd
from pydantic import ValidationError

from sov_verify.core.config import get_settings
from sov_verify.core.exceptions import BudgetExceeded, ConfigError
from sov_verify.schemas.chain import ChainSpec, ImpuritySpec, SpinSpec
from sov_verify.schemas.report import SUITES, CheckRecord, Report, SuiteConfig
from sov_verify.services import gustafson as mb
from sov_verify.services import plane, sov
from sov_verify.services.cfield import FieldExponent, afactor, cgamma, sign_factor
from sov_verify.services.diagrams import (
    Diagram,
    apply_chain,
    apply_exchange,
    apply_star_triangle,
    numeric_eval,
    reduce,
)
from sov_verify.services.plane import (
    MPMATH_LOCK,
    QuadratureSpec,
    fourier_closed,
    fourier_plane,
    fourier_propagator,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCES = {
    "gamma": 1e-12,
    "rules": 1e-3,
    "scalar-products": 1e-3,
    "eigen": 1e-3,
    "gustafson": 1e-4,
}

FORM_EXACT = 1e-10
CANCEL_GRACE = 5.0

Outcome = Union[Tuple[complex, complex, int], Tuple[complex, complex, int, pd.DataFrame]]


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    run: Callable[[], Outcome]
    tol: float


def load_chain(path: str) -> ChainSpec:
    """Read a chain specification from JSON.

    Raises:
        ConfigError: If the file is missing or does not describe a chain
    """
    if not os.path.exists(path):
        raise ConfigError(f"chain file {path} does not exist")
    try:
        with open(path, encoding="utf-8") as handle:
            return ChainSpec.model_validate(json.load(handle))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"Failed to read chain file {path}: {str(e)}")


def default_chain(N: int) -> ChainSpec:
    spins = [SpinSpec(n2=0, rho=0.1 * (k + 1) * (-1) ** k) for k in range(N)]
    impurities = [ImpuritySpec(re=0.3 - 0.2 * k) for k in range(N)]
    return ChainSpec(N=N, spins=spins, impurities=impurities)


def _worst(pairs: List[Tuple[complex, complex]]) -> Outcome:
    """The pair with the largest relative deviation."""

    def rel(pair):
        lhs, rhs = pair
        return abs(lhs - rhs) / abs(rhs) if rhs else abs(lhs)

    lhs, rhs = max(pairs, key=rel)
    return lhs, rhs, len(pairs)


def _exponent(rng: np.random.Generator, lo: float, hi: float, m_range: int = 2, im: float = 1.0) -> FieldExponent:
    return FieldExponent(
        w=complex(rng.uniform(lo, hi), rng.uniform(-im, im)), m2=2 * int(rng.integers(-m_range, m_range + 1))
    )


def _point(rng: np.random.Generator) -> complex:
    return complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))


def _table_rows(frame: pd.DataFrame) -> List[Dict[str, Any]]:
    """JSON-safe rows: complex values as strings, missing values as None."""

    def cell(value: Any) -> Any:
        if value is None:
            return None
        if isinstance(value, (complex, np.complexfloating)):
            return f"{value.real:.12g}{value.imag:+.12g}j"
        if isinstance(value, (float, np.floating)):
            return None if math.isnan(value) else float(value)
        if isinstance(value, np.integer):
            return int(value)
        return value

    return [{key: cell(value) for key, value in row.items()} for row in frame.to_dict(orient="records")]


# ---------------------------------------------------------------------------
# suites


def gamma_suite(rng: np.random.Generator, draws: int = 1000) -> List[Check]:
    samples = [_exponent(rng, -4.0, 4.0, m_range=4, im=6.0) for _ in range(draws)]
    tol = DEFAULT_TOLERANCES["gamma"]

    def recurrence() -> Outcome:
        return _worst([(cgamma(u + 1).value, -u.a * u.abar * cgamma(u).value) for u in samples])

    def reflection() -> Outcome:
        return _worst([(cgamma(u).value * cgamma(u.reflect()).value, complex(sign_factor(u))) for u in samples])

    def inverse() -> Outcome:
        return _worst([(afactor(u).value * cgamma(u).value, 1.0 + 0j) for u in samples])

    def oracle() -> Outcome:
        pairs = []
        with MPMATH_LOCK, mpmath.workdps(30):
            for u in samples[:100]:
                exact = mpmath.gamma(u.a) / mpmath.gamma(1 - u.abar)
                pairs.append((cgamma(u).value, complex(exact)))
        return _worst(pairs)

    return [
        Check("gamma-recurrence", "Γ[u+1, ū+1] = -uū Γ[u, ū]", recurrence, tol),
        Check("gamma-reflection", "Γ[u] Γ[1-u] = (-1)^{[u]}", reflection, tol),
        Check("gamma-inverse", "a(u) Γ[u] = 1", inverse, tol),
        Check("gamma-oracle", "Γ[u] against a 30-digit Γ(u)/Γ(1-ū)", oracle, tol),
    ]


def rules_suite(rng: np.random.Generator, draws: int = 20) -> List[Check]:
    tol = DEFAULT_TOLERANCES["rules"]
    quad = QuadratureSpec.default(1, rel_tol=1e-5, max_level=6)
    fourier_quad = QuadratureSpec.default(1, rel_tol=1e-4)
    checks: List[Check] = []
    for i in range(draws):
        alpha, beta = _exponent(rng, 0.6, 0.8, im=0.5), _exponent(rng, 0.6, 0.8, im=0.5)
        a, b = _point(rng), _point(rng)
        chain = Diagram.build({"a": a, "b": b}, ["v"], [("v", "a", alpha), ("b", "v", beta)])

        def run_chain(d=chain) -> Outcome:
            before = numeric_eval(d, spec=quad).require()
            return before.value, numeric_eval(apply_chain(d, "v")).value, before.evals

        checks.append(Check(f"rule-chain-{i}", "chain integral of two propagators", run_chain, tol))

        gamma = 2 - alpha - beta
        c = _point(rng)
        star = Diagram.build(
            {"a": a, "b": b, "c": c}, ["v"], [("v", "a", alpha), ("v", "b", beta), ("v", "c", gamma)]
        )

        def run_star(d=star) -> Outcome:
            before = numeric_eval(d, spec=quad).require()
            return before.value, numeric_eval(apply_star_triangle(d, "v")).value, before.evals

        checks.append(Check(f"rule-star-triangle-{i}", "star-triangle relation", run_star, tol))

        shift = FieldExponent(w=complex(rng.uniform(-0.05, 0.05), rng.uniform(-0.5, 0.5)), m2=2)
        two_leg = Diagram.build({"a": a, "b": b}, ["w"], [("w", "a", alpha), ("w", "b", beta)])

        def run_exchange(d=two_leg, new=(alpha - shift, beta + shift)) -> Outcome:
            before = numeric_eval(d, spec=quad).require()
            after = numeric_eval(apply_exchange(d, ("w", "a", "b", None), new), spec=quad).require()
            return before.value, after.value, before.evals + after.evals

        checks.append(Check(f"rule-exchange-{i}", "exchange of index between two legs", run_exchange, tol))

        kernel = _exponent(rng, 0.5, 0.8)
        p = _point(rng) + 0.5

        def run_fourier(alpha=kernel, p=p) -> Outcome:
            estimate = fourier_propagator(alpha, p, fourier_quad).require()
            return estimate.value, fourier_closed(alpha, p), estimate.evals

        checks.append(Check(f"rule-fourier-{i}", "Fourier transform of a propagator", run_fourier, tol))
    return checks


def scalar_products_suite(rng: np.random.Generator, chain: Optional[ChainSpec] = None) -> List[Check]:
    tol = DEFAULT_TOLERANCES["scalar-products"]
    exact = 1e-8
    checks: List[Check] = []
    eps = 0.3

    def points(count: int, im: float) -> Tuple[sov.SeparatedPoint, ...]:
        return tuple(sov.SeparatedPoint(0, complex(rng.uniform(-0.6, 0.6), im)) for _ in range(count))

    for spec_chain in (chain,) if chain is not None else (default_chain(2), default_chain(3)):
        N = spec_chain.N
        g = sov.build_gamma(spec_chain.with_epsilon(0.0), sov.EigenKind.B)
        xs, ys = points(N - 1, 0.1), points(N - 1, 0.1)

        def reduced(xs=xs, ys=ys, g=g) -> Outcome:
            lhs = sov.scalar_bb_reduced(xs, ys, g, eps, eps)
            return lhs, sov.scalar_bb_closed(xs, ys, g, eps, eps).evaluate(), 0

        def forms(xs=xs, ys=ys, g=g) -> Outcome:
            first = sov.scalar_bb_closed(xs, ys, g, eps, eps, form=1).evaluate()
            return first, sov.scalar_bb_closed(xs, ys, g, eps, eps, form=2).evaluate(), 0

        def confluence(xs=xs, ys=ys, g=g) -> Outcome:
            d = sov.bb_diagram(xs, ys, g, eps, eps)
            left, right = reduce(d, "leftmost"), reduce(d, "rightmost")
            return left.evaluate({"o": 0j, "p": 1.0}), right.evaluate({"o": 0j, "p": 1.0}), 0

        checks += [
            Check(f"bb-reduced-N{N}", "B-B pairing: rewrite rules against the closed form", reduced, exact),
            Check(f"bb-forms-N{N}", "B-B pairing: the two equivalent closed forms", forms, exact),
            Check(f"bb-confluence-N{N}", "B-B pairing: reduction order independence", confluence, exact),
        ]
        if N == 2:

            def quadrature(xs=xs, ys=ys, g=g) -> Outcome:
                estimate = sov.scalar_bb_numeric(xs, ys, g, eps, eps)
                return estimate.value, sov.scalar_bb_closed(xs, ys, g, eps, eps).evaluate(), estimate.evals

            checks.append(Check("bb-quadrature-N2", "B-B pairing: direct momentum quadrature", quadrature, 1e-3))
        if N == 3:
            sign = sov.bb_sign_turns(g, N)
            checks.append(
                Check("bb-sign-N3", "sign of the B-B pairing for odd N", lambda s=sign: (1j**s, 1.0 + 0j, 0), exact)
            )

    one = default_chain(1)
    g_a = sov.build_gamma(one, sov.EigenKind.A)
    x = sov.SeparatedPoint(0, complex(rng.uniform(-0.6, 0.6), 0.1))
    p = complex(rng.uniform(0.4, 1.0), rng.uniform(-0.5, 0.5))
    fourier_quad = QuadratureSpec.default(1, rel_tol=1e-4)

    def ab_fourier() -> Outcome:
        index = g_a.at(1) - x.ix()
        estimate = fourier_propagator(index, -p, fourier_quad).require()
        closed = sov.scalar_ab_closed([x], [], g_a).evaluate({"p": p})
        return closed, estimate.value / math.pi, estimate.evals

    g_b = sov.build_gamma(default_chain(2), sov.EigenKind.B)
    q1 = complex(rng.uniform(0.4, 1.0), rng.uniform(0.1, 0.5))
    q2 = complex(rng.uniform(0.4, 1.0), rng.uniform(-0.5, -0.1))
    plane_quad = QuadratureSpec.default(1, outer_cutoff=100.0, rel_tol=1e-4, max_evals=20_000_000)

    def mixed_fourier() -> Outcome:
        first = fourier_plane(g_b.at(1) - x.ix(), -q1, plane_quad).require()
        second = fourier_plane(g_b.at(2) + x.ix(), -q2, plane_quad).require()
        closed = sov.scalar_mixed_closed([], [x], g_b).evaluate({"p": q1 + q2, "q1": q1, "q2": q2}) / math.pi
        expected = abs(q1 + q2) / math.pi**2 * sov.varpi1(x, g_b) * first.value * second.value
        return closed, expected, first.evals + second.evals

    u, v = points(2, 0.1)

    def omega_forms() -> Outcome:
        first, second = sov.omega_factor_forms(g_b, u, v)
        return first, second, 0

    checks += [
        Check("ab-fourier-N1", "A-B pairing at N = 1 against the Fourier transform", ab_fourier, tol),
        Check("mixed-fourier-N1", "pairing with a product of eigenfunctions at N = 1", mixed_fourier, tol),
        Check("omega-forms", "ω(γ, u, v) and its component-swapped form", omega_forms, FORM_EXACT),
        Check("measure-c1B", "SoV constant c_1^B = 1/(2π²)", lambda: (sov.sov_constants(1, "B"), 1 / (2 * math.pi**2), 0), exact),
        Check("measure-c1A", "SoV constant c_1^A = 1/(2π)", lambda: (sov.sov_constants(1, "A"), 1 / (2 * math.pi), 0), exact),
    ]

    ys = points(3, 0.0)
    perm = (ys[2], ys[0], ys[1])
    checks.append(
        Check("measure-symmetry", "μ_N is symmetric in the separated variables", lambda: (sov.measure_mu(ys), sov.measure_mu(perm), 0), exact)
    )
    coincident = (ys[0], ys[0], ys[1])
    checks.append(
        Check("measure-coincidence", "μ_N vanishes at coinciding points", lambda: (sov.measure_mu(coincident), 0j, 0), exact)
    )

    study_x, study_y = points(1, 0.0), points(1, 0.0)

    def epsilon_monotone() -> Outcome:
        g = sov.build_gamma(default_chain(2).with_epsilon(0.0), sov.EigenKind.B)
        table = sov.epsilon_study(study_x, study_y, g)
        steps = table["cauchy"].dropna().to_numpy()
        ratio = float(np.max(steps[1:] / steps[:-1])) if len(steps) > 1 else 0.0
        return complex(ratio), 0j, len(table), table

    checks.append(Check("epsilon-cauchy", "largest ratio of successive ε Cauchy differences", epsilon_monotone, 1.0))
    return checks


def eigen_suite(rng: np.random.Generator, chain: Optional[ChainSpec] = None, draws: int = 10) -> List[Check]:
    chain = (chain or default_chain(2)).with_epsilon(0.6)
    if chain.N != 2:
        raise ConfigError(f"eigen-relations are checked at N = 2, the chain file has N = {chain.N}")
    checks: List[Check] = []
    for i in range(draws):
        x = sov.SeparatedPoint(0, complex(rng.uniform(-0.5, 0.5), 0.3))
        p = 0.4 * complex(math.cos(rng.uniform(0, 2 * math.pi)), math.sin(rng.uniform(0, 2 * math.pi)))
        spec = sov.EigenfunctionSpec(sov.EigenKind.B, chain, (x,), p)
        zs = (_point(rng), _point(rng))
        while abs(zs[0] - zs[1]) <= 0.5:
            zs = (zs[0], _point(rng))
        u = complex(rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5))
        quad = QuadratureSpec.default(1, oscillation=2.0 * abs(p), outer_cutoff=60.0, rel_tol=1e-5, max_level=6)

        def translation(spec=spec, zs=zs, quad=quad) -> Outcome:
            return complex(sov.eigen_translation_check(spec, zs, quad)), 0j, 0

        def b_relation(spec=spec, zs=zs, u=u, quad=quad) -> Outcome:
            return complex(sov.eigen_b_check(spec, u, zs, quad)), 0j, 0

        def annihilation(spec=spec, zs=zs, x=x, quad=quad) -> Outcome:
            return complex(sov.eigen_b_check(spec, x.x, zs, quad)), 0j, 0

        checks += [
            Check(f"eigen-translation-{i}", "-iΣ∂_k Ψ = pΨ", translation, 1e-4),
            Check(f"eigen-b-{i}", "B_2(u)Ψ = p(u - x_1)Ψ", b_relation, DEFAULT_TOLERANCES["eigen"]),
            Check(f"eigen-annihilation-{i}", "B_2(x_1) annihilates Ψ", annihilation, DEFAULT_TOLERANCES["eigen"]),
        ]
    return checks


def first_params(count: int) -> mb.MBParams:
    """Parameters whose discrete parts let a straight contour pass at every label, with fast decay."""
    z = [FieldExponent(-0.45, 4), FieldExponent(-0.4 + 0.05j, 4), FieldExponent(-0.42, 4)]
    w = [FieldExponent.scalar(-0.45), FieldExponent.scalar(-0.4), FieldExponent(-0.42 - 0.03j, 0)]
    return mb.MBParams(tuple(z[:count]), tuple(w[:count]))


def second_params() -> mb.MBParams:
    """Single-variable parameters of the second integral; the discrete part keeps the pole gap open."""
    return mb.MBParams((FieldExponent(-1.3, 12),), (FieldExponent.scalar(-1.3),))


def _with_table(result: mb.MBResult, rhs: complex) -> Outcome:
    estimate = result.estimate.require()
    return estimate.value, rhs, estimate.evals, mb.levels_frame(result, rhs)


def gustafson_suite(rng: np.random.Generator) -> List[Check]:
    spec = mb.MBSpec.default(n_max=12)
    wide = mb.MBSpec.default(n_max=12, tol=1e-5)

    def first(N: int) -> Callable[[], Outcome]:
        def run() -> Outcome:
            return _with_table(*mb.gustafson_evaluate("first", N, first_params(N + 1), spec if N == 1 else wide))

        return run

    def second(zeta: complex) -> Callable[[], Outcome]:
        def run() -> Outcome:
            return _with_table(*mb.gustafson_evaluate("second", 1, second_params(), spec, zeta))

        return run

    j_zeta = 1.3 * complex(math.cos(0.4), math.sin(0.4))

    def j_single() -> Outcome:
        return _with_table(*mb.j_omega_evaluate([], [], FieldExponent(-1.8, 8), 0.0, j_zeta, wide))

    re = rng.uniform(-0.5, 0.5)
    x_pair = [sov.SeparatedPoint(12, complex(re, 0.35))]
    x_pair_prime = [sov.SeparatedPoint(-12, complex(rng.uniform(-0.5, 0.5), -0.35))]

    def j_pair() -> Outcome:
        Z = FieldExponent(-0.45 + 0.2j, 6)
        return _with_table(*mb.j_omega_evaluate(x_pair, x_pair_prime, Z, 0.25, j_zeta, wide))

    x = [sov.SeparatedPoint(2, complex(rng.uniform(-0.5, 0.5), -0.05))]
    x_prime = [sov.SeparatedPoint(0, complex(rng.uniform(-0.5, 0.5), 0.05))]
    zeta = 0.8 * complex(math.cos(0.3), math.sin(0.3))

    def j_mapping() -> Outcome:
        closed = mb.j_omega_closed(x, x_prime, 0.5 + 0.7j, 0.1, zeta)
        return closed, mb.j_omega_from_second(x, x_prime, 0.5 + 0.7j, 0.1, zeta), 0

    draws = [(rng.integers(-2, 3, size=2).tolist(), rng.integers(-2, 3, size=3).tolist()) for _ in range(200)]

    def signs() -> Outcome:
        failures = sum(not mb.sign_identity_holds(ns, ms) for ns, ms in draws)
        return complex(failures), 0j, len(draws)

    return [
        Check("gustafson-first-N1", "first Gustafson integral, N = 1", first(1), 1e-6),
        Check("gustafson-first-N2", "first Gustafson integral, N = 2", first(2), 1e-4),
        Check("gustafson-second-N1", "second Gustafson integral, N = 1, ζ = 1", second(1.0), 1e-6),
        Check("gustafson-second-N1-phase", "second Gustafson integral, N = 1, complex ζ", second(0.7 * complex(math.cos(0.9), math.sin(0.9))), 1e-6),
        Check("j-omega-N1", "J_ω by direct summation, N = 1", j_single, 1e-4),
        Check("j-omega-N2", "J_ω by direct summation, N = 2", j_pair, 1e-4),
        Check("j-omega-mapping", "J_ω closed form through the second Gustafson integral", j_mapping, FORM_EXACT),
        Check("j-omega-signs", "sign exponents of the J_ω reduction", signs, 0.5),
    ]


# ---------------------------------------------------------------------------
# runner


def build_checks(name: str, cfg: SuiteConfig, rng: np.random.Generator) -> List[Check]:
    chain = load_chain(cfg.chain_file) if cfg.chain_file else None
    if name == "gamma":
        return gamma_suite(rng)
    if name == "rules":
        return rules_suite(rng)
    if name == "scalar-products":
        return scalar_products_suite(rng, chain)
    if name == "eigen":
        return eigen_suite(rng, chain)
    if name == "gustafson":
        return gustafson_suite(rng)
    raise ConfigError(f"unknown suite {name!r}")


def _tolerance(check: Check, suite: str, tolerances: Dict[str, float]) -> float:
    return tolerances.get(check.name, tolerances.get(suite, check.tol))


def _failed(check: Check, tol: float, error: str, wall_time: float = 0.0) -> CheckRecord:
    return CheckRecord(
        name=check.name, anchor=check.anchor, lhs=0j, rhs=0j, abs_err=0.0, rel_err=0.0, tol=tol,
        passed=False, wall_time=wall_time, error=error,
    )


def _record(check: Check, tol: float) -> CheckRecord:
    start = time.perf_counter()
    try:
        lhs, rhs, evals, *extra = check.run()
    except Exception as e:
        logger.warning("check %s failed to run: %s", check.name, e)
        return _failed(check, tol, f"{type(e).__name__}: {e}", time.perf_counter() - start)
    lhs, rhs = complex(lhs), complex(rhs)
    abs_err = abs(lhs - rhs)
    rel_err = abs_err / abs(rhs) if rhs != 0 else abs_err
    measured = rel_err if rhs != 0 else abs_err
    return CheckRecord(
        name=check.name, anchor=check.anchor, lhs=lhs, rhs=rhs, abs_err=abs_err, rel_err=rel_err, tol=tol,
        passed=bool(measured <= tol), evals=int(evals), wall_time=time.perf_counter() - start,
        table=_table_rows(extra[0]) if extra else None,
    )


def run_suite(cfg: SuiteConfig) -> Report:
    """Run a suite (or all of them) deterministically under the configured seed.

    A failing or crashing check is recorded and the run continues. When the budget runs
    out, evaluations in progress are cancelled at their next quadrature level or label
    and every unfinished check is recorded as an error.

    Raises:
        ConfigError: For an unknown suite or an unreadable chain file
        BudgetExceeded: When the time budget runs out; carries the partial report
    """
    names = list(SUITES) if cfg.suite == "all" else [cfg.suite]
    for name in names:
        if name not in SUITES:
            raise ConfigError(f"unknown suite {name!r}")
    settings = get_settings()
    workers = min(cfg.threads or settings.threads, settings.threads)
    rng = np.random.default_rng(cfg.seed)
    planned = [(name, check) for name in names for check in build_checks(name, cfg, rng)]
    logger.info("suite %s: %d checks on %d workers", cfg.suite, len(planned), workers)

    def run(item: Tuple[str, Check]) -> CheckRecord:
        name, check = item
        record = _record(check, _tolerance(check, name, cfg.tolerances))
        logger.info("%s: %s (rel_err %.2g)", check.name, "pass" if record.passed else "FAIL", record.rel_err)
        return record

    plane.cancelled.clear()
    pool = ThreadPoolExecutor(max_workers=workers)
    futures = [pool.submit(run, item) for item in planned]
    _, pending = wait(futures, timeout=cfg.budget)
    if pending:
        plane.cancelled.set()
        pool.shutdown(wait=False, cancel_futures=True)
        wait(pending, timeout=CANCEL_GRACE)
        plane.cancelled.clear()
    else:
        pool.shutdown()

    records = []
    for (name, check), future in zip(planned, futures):
        if future.done() and not future.cancelled():
            records.append(future.result())
        else:
            error = f"BudgetExceeded: not finished within {cfg.budget} s"
            records.append(_failed(check, _tolerance(check, name, cfg.tolerances), error))
    report = Report(suite=cfg.suite, seed=cfg.seed, checks=records, budget_exceeded=bool(pending))
    if pending:
        logger.warning("budget of %.0f s exceeded with %d of %d checks unfinished", cfg.budget, len(pending), len(planned))
        raise BudgetExceeded(f"budget of {cfg.budget} s exceeded", report=report)
    return report
