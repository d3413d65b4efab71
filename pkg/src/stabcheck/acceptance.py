"""Acceptance suite over the three bundled example systems.

Each criterion is an independent, seeded, deterministic check with its
tolerance pinned here.  The suite is shared by ``tests/test_acceptance.py``
and the ``corpus-verify`` CLI subcommand; both print one pass/fail line per
criterion.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .detect import invariant_kernel_sample, residual_sweep, detectability_report
from .integrators import IntegratorConfig, flight_time_lower_bound, integrate, sup_norm_bound
from .invariance import (
    ATTRACTIVE,
    NON_ATTRACTIVE,
    STABLE,
    UNSTABLE,
    attractivity_probe,
    barbalat_diagnostic,
    invariance_principle_check,
    sample_zero_set,
    uniform_stability_probe,
)
from .lyapunov import corpus_certificate
from .robust import (
    TIME_INVARIANT,
    TIME_VARYING,
    PerturbationSpec,
    hamilton_jacobi_residual,
    robust_verdict,
    sample_perturbations,
    validate_sector_bound,
)
from .sampling import ball_points
from .systems import as_control_system, corpus_get


@dataclass(frozen=True)
class CriterionResult:
    key: str
    passed: bool
    details: dict

    def summary(self) -> str:
        return "; ".join(f"{k}={v}" for k, v in self.details.items())


@dataclass(frozen=True)
class Criterion:
    key: str
    description: str
    run: Callable[[int], CriterionResult]


def _result(key: str, passed: bool, **details) -> CriterionResult:
    return CriterionResult(key=key, passed=bool(passed), details=details)


def _norm_bisect(fn: Callable[[float], float], lo: float, hi: float, iters: int = 200) -> float:
    """Root of a scalar function by plain bisection (independent oracle)."""
    f_lo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------


def example1_oracle_agreement(seed: int = 0) -> CriterionResult:
    """50 seeded starts in the unit ball match the closed form to 1e-6 over
    [0, 10] in max norm, in under five seconds."""
    started = time.perf_counter()
    field, oracle = corpus_get("example1")
    field = dataclasses.replace(field, domain_radius=4.0)  # room for the growing component
    starts = ball_points(50, 2, 1.0, seed)
    times = np.linspace(0.0, 10.0, 21)[1:]
    cfg = IntegratorConfig(horizon=10.0)
    worst = 0.0
    for x0 in starts:
        traj = integrate(field, 0.0, x0, cfg)
        for t in times:
            gap = np.max(np.abs(traj.state(t) - oracle.eval(t, 0.0, x0)))
            worst = max(worst, float(gap))
    elapsed = time.perf_counter() - started
    return _result(
        "example1_oracle_agreement",
        worst < 1e-6 and elapsed < 5.0,
        max_error=worst,
        tolerance=1e-6,
        elapsed_s=round(elapsed, 3),
        budget_s=5.0,
    )


def example1_stability_dichotomy(seed: int = 0) -> CriterionResult:
    """Full dynamics unstable with an escape witness whose escape time matches
    the closed form within 1%; the dynamics restricted to the zero set is
    stable (delta = epsilon) and not attractive.  Under thirty seconds."""
    started = time.perf_counter()
    field, oracle = corpus_get("example1")
    cert = corpus_certificate("example1")

    full = uniform_stability_probe(
        field,
        eps_list=(0.6,),
        t0_grid=(0.0,),
        delta_resolution=0.25,
        horizon=40.0,
        n_directions=12,
        seed=seed,
    )
    unstable_ok = full.status == UNSTABLE and full.escape_witness is not None

    start = np.array((0.0, 0.5))
    traj = integrate(field, 0.0, start, IntegratorConfig(horizon=10.0), event_radii=(0.6,))
    exits = [ev.t for ev in traj.events if ev.radius == 0.6 and ev.direction > 0]
    t_exit = exits[0] if exits else math.nan
    t_oracle = _norm_bisect(
        lambda t: float(np.linalg.norm(oracle.eval(t, 0.0, start))) - 0.6, 0.1, 10.0
    )
    witness_ok = exits and abs(t_exit - t_oracle) <= 0.01 * t_oracle

    e_sample = sample_zero_set(cert.bound, radius=1.0, tol=1e-10, budget=512, dim=2, seed=seed)
    restricted_stab = uniform_stability_probe(
        field,
        eps_list=(0.3, 0.6),
        t0_grid=(0.0,),
        delta_resolution=0.05,
        horizon=50.0,
        restrict_to=e_sample,
        seed=seed,
    )
    table_ok = restricted_stab.status == STABLE and all(
        delta is not None and abs(delta - eps) <= 1e-9
        for eps, delta in restricted_stab.epsilon_delta_table
    )
    restricted_attr = attractivity_probe(
        field,
        ball_radius=0.5,
        t0_grid=(0.0,),
        horizon=50.0,
        target_tol=0.05,
        restrict_to=e_sample,
        seed=seed,
    )
    attr_ok = restricted_attr.status == NON_ATTRACTIVE
    elapsed = time.perf_counter() - started
    return _result(
        "example1_stability_dichotomy",
        unstable_ok and witness_ok and table_ok and attr_ok and elapsed < 30.0,
        full_status=full.status,
        escape_time=t_exit,
        oracle_escape_time=t_oracle,
        restricted_status=restricted_stab.status,
        restricted_table=[list(row) for row in restricted_stab.epsilon_delta_table],
        restricted_attractivity=restricted_attr.status,
        elapsed_s=round(elapsed, 3),
        budget_s=30.0,
    )


def example2_detectability(seed: int = 0) -> CriterionResult:
    """Residual of the output-dissipation identity below 1e-10 at 1e4 points,
    strong detectability passes, and the ball-0.5 attractivity probe reaches
    norm 0.05 by t = 1e4.  Under sixty seconds."""
    started = time.perf_counter()
    field, _ = corpus_get("example2")
    system = as_control_system(field, output=lambda x: float(x[1] ** 2), name="example2")
    cert = corpus_certificate("example2")

    status, r_max, r_min = residual_sweep(cert, system, q=2.0, samples=10_000, seed=seed)
    residual_ok = max(abs(r_max), abs(r_min)) < 1e-10 and status == "equation"

    n_sample = invariant_kernel_sample(system, tol=1e-8, budget=400, seed=seed)
    report = detectability_report(
        system, n_sample, eps0=1.0, horizon=1e4, tol=0.05, delta_resolution=0.05, seed=seed
    )
    strong_ok = report.strong_zsd.passed

    attract = attractivity_probe(
        field, ball_radius=0.5, t0_grid=(0.0,), horizon=1e4, target_tol=0.05,
        n_starts=16, seed=seed,
    )
    attract_ok = attract.status == ATTRACTIVE
    elapsed = time.perf_counter() - started
    return _result(
        "example2_detectability",
        residual_ok and strong_ok and attract_ok and elapsed < 60.0,
        residual_status=status,
        residual_max_abs=max(abs(r_max), abs(r_min)),
        strong_zsd=report.strong_zsd.status,
        attractivity=attract.status,
        max_final_norm=attract.detail.get("max_final_norm"),
        elapsed_s=round(elapsed, 3),
        budget_s=60.0,
    )


def example3_hamilton_jacobi(seed: int = 0) -> CriterionResult:
    """The quartic certificate zeroes the feedback dissipation identity to
    1e-12 at 1e4 low-discrepancy points for gains 0.5, 1, 2 and 10.

    Points are drawn in the unit ball: the identity cancels structurally, so
    the residual is pure floating-point noise, and at gain 10 the cancelled
    terms reach 6.4e3 on the radius-2 ball, where a few ulps already exceed
    the absolute tolerance.
    """
    started = time.perf_counter()
    system, _ = corpus_get("example3")
    feedback = lambda y: y  # noqa: E731
    pts = ball_points(10_000, 2, 1.0, seed)
    worst = {}
    for gain in (0.5, 1.0, 2.0, 10.0):
        cert = corpus_certificate("example3", gain=gain)
        worst[gain] = max(
            abs(hamilton_jacobi_residual(cert, system, feedback, gain, x)) for x in pts
        )
    passed = all(v < 1e-12 for v in worst.values())
    elapsed = time.perf_counter() - started
    return _result(
        "example3_hamilton_jacobi",
        passed,
        worst_residuals={str(k): v for k, v in worst.items()},
        tolerance=1e-12,
        elapsed_s=round(elapsed, 3),
    )


def example3_robust_family(seed: int = 0) -> CriterionResult:
    """Gain 2: seeded families of eight static and eight time-varying sector
    perturbations all yield stable and attractive closed loops from the 0.5
    ball, and the decrease chain dV/dt <= W holds along every trajectory to
    1e-8.  Under five minutes."""
    started = time.perf_counter()
    system, _ = corpus_get("example3")
    feedback = lambda y: y  # noqa: E731
    cert = corpus_certificate("example3", gain=2.0)
    outcomes = {}
    chain_ok = True
    all_pass = True
    for family, margin, t0_grid in (
        (TIME_INVARIANT, 0.0, (0.0,)),
        (TIME_VARYING, 0.2, (0.0, 2.5)),
    ):
        spec = PerturbationSpec(
            family=family, gain_a=2.0, margin_eps=margin, family_seed=seed, family_size=8
        )
        verdict = robust_verdict(
            system,
            feedback,
            cert,
            spec,
            ball_radius=0.5,
            t0_grid=t0_grid,
            horizon=1e4,
            tol=0.05,
            eps_list=(0.3, 0.5),
            delta_resolution=0.05,
            stability_horizon=50.0,
            n_starts=12,
            seed=seed,
        )
        members = verdict.detail["members"]
        outcomes[family] = {
            "status": verdict.status,
            "members": len(members),
            "worst_h2_slack": max(m["worst_h2_slack"] for m in members),
        }
        all_pass = all_pass and verdict.passed
        chain_ok = chain_ok and all(m["worst_h2_slack"] <= 1e-8 for m in members)
    elapsed = time.perf_counter() - started
    return _result(
        "example3_robust_family",
        all_pass and chain_ok and elapsed < 300.0,
        outcomes=outcomes,
        h2_chain_tolerance=1e-8,
        elapsed_s=round(elapsed, 3),
        budget_s=300.0,
    )


def example2_invariance_principle(seed: int = 0) -> CriterionResult:
    """All 32 sampled starts approach the sampled invariant set: the median
    distance over the last 10% of a horizon-200 run stays below ten times the
    combined sampling and integration tolerances."""
    started = time.perf_counter()
    field, _ = corpus_get("example2")
    cert = corpus_certificate("example2")
    e_sample = sample_zero_set(cert.bound, radius=1.2, tol=1e-8, budget=256, dim=2, seed=seed)
    from .invariance import approximate_invariant_set

    n_sample = approximate_invariant_set(field, e_sample, horizon=20.0, tube_tol=1e-6)
    starts = ball_points(32, 2, 0.5, seed)
    verdict = invariance_principle_check(
        field, cert, n_sample, starts, t0_grid=(0.0,), horizon=200.0
    )
    medians = [rec["tail_median_distance"] for rec in verdict.detail["starts"]]
    elapsed = time.perf_counter() - started
    return _result(
        "example2_invariance_principle",
        verdict.passed and len(medians) == 32,
        status=verdict.status,
        bound=verdict.tolerance,
        max_tail_median=max(medians) if medians else None,
        n_starts=len(medians),
        elapsed_s=round(elapsed, 3),
    )


def example2_integral_diagnostic(seed: int = 0) -> CriterionResult:
    """The decrease rate along the horizon-200 trajectory from (0.5, 0.5) has
    tail sup below 1e-4 over the last quarter, and the tail sup shrinks when
    the horizon doubles."""
    started = time.perf_counter()
    field, _ = corpus_get("example2")
    cert = corpus_certificate("example2")
    start = np.array((0.5, 0.5))
    traj_200 = integrate(field, 0.0, start, IntegratorConfig(horizon=200.0))
    _, sup_200 = barbalat_diagnostic(traj_200, cert, field)
    traj_400 = integrate(field, 0.0, start, IntegratorConfig(horizon=400.0))
    _, sup_400 = barbalat_diagnostic(traj_400, cert, field)
    elapsed = time.perf_counter() - started
    return _result(
        "example2_integral_diagnostic",
        sup_200 < 1e-4 and sup_400 < sup_200,
        tail_sup_200=sup_200,
        tail_sup_400=sup_400,
        tolerance=1e-4,
        elapsed_s=round(elapsed, 3),
    )


def property_suites(seed: int = 0) -> CriterionResult:
    """Cross-cutting properties: gradient consistency, monotone decrease of V
    along corpus trajectories, the transit-time lower bound against observed
    sphere crossings, sector bounds of every generated perturbation, and
    byte-identical reports for identical seeds."""
    started = time.perf_counter()
    failures = []

    # gradient versus central differences, 200 points per certificate
    for name, gain in (("example1", 1.0), ("example2", 1.0), ("example3", 2.0)):
        cert = corpus_certificate(name, gain=gain)
        pts = ball_points(200, cert.dim, cert.domain_radius, seed)
        for x in pts:
            g = cert.grad(x)
            fd = np.array(
                [
                    (cert.value(x + dx) - cert.value(x - dx)) / (2.0 * h)
                    for i in range(cert.dim)
                    for h, dx in [(1e-5 * (1.0 + float(np.linalg.norm(x))), None)]
                    for dx in [np.eye(cert.dim)[i] * h]
                ]
            )
            if np.any(np.abs(g - fd) > 1e-6 * (1.0 + np.abs(g))):
                failures.append(f"gradient mismatch for {name} at {x.tolist()}")
                break

    # V non-increasing along corpus trajectories, 1e-9 slack per step
    runs = []
    field1, _ = corpus_get("example1")
    field1 = dataclasses.replace(field1, domain_radius=4.0)
    runs.append((field1, corpus_certificate("example1"), (0.0, 1.0), 10.0))
    runs.append((field1, corpus_certificate("example1"), (0.3, -0.8), 10.0))
    field2, _ = corpus_get("example2")
    runs.append((field2, corpus_certificate("example2"), (0.5, 0.5), 100.0))
    system3, _ = corpus_get("example3")
    runs.append((system3.drift, corpus_certificate("example3", 2.0), (0.5, -0.5), 100.0))
    for field, cert, x0, horizon in runs:
        traj = integrate(field, 0.0, np.array(x0), IntegratorConfig(horizon=horizon))
        values = np.array([cert.value(x) for x in traj.xs])
        if np.any(np.diff(values) > 1e-9):
            failures.append(f"V increased along {field.name} from {x0}")

    # observed sphere transits never undercut the transit-time lower bound
    field1_small, _ = corpus_get("example1")
    a_bound = sup_norm_bound(field1_small, radius=0.6, samples=4_000, seed=seed)
    t_min = flight_time_lower_bound(0.6, 0.5, a_bound)
    transits = []
    for x0 in ball_points(50, 2, 0.45, seed):
        traj = integrate(
            field1_small, 0.0, x0, IntegratorConfig(horizon=120.0), event_radii=(0.5, 0.6)
        )
        inner = [ev.t for ev in traj.events if ev.radius == 0.5 and ev.direction > 0]
        outer = [ev.t for ev in traj.events if ev.radius == 0.6 and ev.direction > 0]
        for t_out in outer:
            prior = [t for t in inner if t < t_out]
            if prior:
                transits.append(t_out - max(prior))
    if len(transits) < 20:
        failures.append(f"too few observed sphere transits ({len(transits)})")
    elif min(transits) < t_min:
        failures.append(f"observed transit {min(transits):.4g} undercuts bound {t_min:.4g}")

    # sector bounds at 1e4 dense points per generated member
    feedback = lambda y: y  # noqa: E731
    for family, margin in ((TIME_INVARIANT, 0.0), (TIME_VARYING, 0.2)):
        spec = PerturbationSpec(
            family=family, gain_a=2.0, margin_eps=margin, family_seed=seed, family_size=8
        )
        for member in sample_perturbations(spec, feedback):
            ok, witness = validate_sector_bound(
                member.func,
                feedback,
                spec.sector_bound,
                samples=10_000,
                time_varying=member.time_varying,
            )
            if not ok:
                failures.append(f"sector bound violated by {member.pid}: {witness}")

    # identical config and seed produce byte-identical reports
    import tempfile
    from pathlib import Path

    from . import cli

    config = {
        "system": "example1",
        "certificate": {"V": "x2^2", "W": "-2*x2^4"},
        "seed": seed,
    }
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for run_dir in ("a", "b"):
            out = Path(tmp) / run_dir
            cfg_path = Path(tmp) / f"config_{run_dir}.json"
            cli.write_config(cfg_path, config)
            status = cli.main(
                ["hypotheses", "--config", str(cfg_path), "--out", str(out)]
            )
            if status != 0:
                failures.append(f"hypotheses run exited with {status}")
                break
            blobs.append((out / "hypotheses.json").read_bytes())
    if len(blobs) == 2 and blobs[0] != blobs[1]:
        failures.append("reports differ between identical runs")

    elapsed = time.perf_counter() - started
    return _result(
        "property_suites",
        not failures,
        failures=failures or "none",
        observed_transits=len(transits),
        transit_bound=t_min,
        elapsed_s=round(elapsed, 3),
    )


CRITERIA = (
    Criterion(
        key="example1_oracle_agreement",
        description="numerical trajectories match the closed form to 1e-6 over [0, 10]",
        run=example1_oracle_agreement,
    ),
    Criterion(
        key="example1_stability_dichotomy",
        description="full dynamics unstable with witness; restricted dynamics stable, not attractive",
        run=example1_stability_dichotomy,
    ),
    Criterion(
        key="example2_detectability",
        description="dissipation residual ~0, strong detectability, slow-decay attractivity",
        run=example2_detectability,
    ),
    Criterion(
        key="example3_hamilton_jacobi",
        description="quartic certificate zeroes the feedback dissipation identity",
        run=example3_hamilton_jacobi,
    ),
    Criterion(
        key="example3_robust_family",
        description="sampled sector families keep the closed loop asymptotically stable",
        run=example3_robust_family,
    ),
    Criterion(
        key="example2_invariance_principle",
        description="distance to the sampled invariant set decays below the tolerance bound",
        run=example2_invariance_principle,
    ),
    Criterion(
        key="example2_integral_diagnostic",
        description="decrease-rate tail sup is small and shrinks with the horizon",
        run=example2_integral_diagnostic,
    ),
    Criterion(
        key="property_suites",
        description="gradients, monotonicity, transit bound, sector bounds, determinism",
        run=property_suites,
    ),
)


def run_all(seed: int = 0, only: tuple[str, ...] = ()) -> tuple[bool, list[CriterionResult]]:
    results = []
    for criterion in CRITERIA:
        if only and criterion.key not in only:
            continue
        results.append(criterion.run(seed))
    return all(r.passed for r in results), results
