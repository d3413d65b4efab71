"""Zero-state detectability verdicts and the certificate-to-stability pipeline.

Detectability is probed on the sampled maximal invariant subset of the output
kernel: the plain verdict asks that kernel-confined starts converge to the
origin, the strong variant additionally asks for stability of the restricted
dynamics.  The pipeline ties a residual sweep of the output-dissipation
identity to those verdicts and to full-state probes, and raises an alarm if
the observed facts contradict the expected equivalence.

Restricted-dynamics runs reuse the full vector field and verify that each
trajectory stays inside the kernel tube; a start that drifts out is dropped
with a warning rather than silently leaving the set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrators import IntegratorConfig
from .invariance import (
    ATTRACTIVE,
    INCONCLUSIVE_STATUS,
    NON_ATTRACTIVE,
    STABLE,
    UNSTABLE,
    SetSample,
    StabilityVerdict,
    approximate_invariant_set,
    attractivity_probe,
    sample_zero_set,
    uniform_stability_probe,
)
from .lyapunov import Certificate, check_nonnegative, lyapunov_residual
from .sampling import ball_points
from .systems import AffineControlSystem
from .verdicts import FAIL, INCONCLUSIVE, PASS, Verdict

RESIDUAL_EQUATION = "equation"
RESIDUAL_INEQUALITY = "inequality"
RESIDUAL_INVALID = "invalid"


def kernel_sample(
    system: AffineControlSystem,
    radius: Optional[float] = None,
    tol: float = 1e-8,
    budget: int = 512,
    seed: int = 0,
) -> SetSample:
    """Sample the output kernel {x : |h(x)| <= tol} inside the domain ball."""
    radius = system.domain_radius if radius is None else radius
    return sample_zero_set(
        lambda x: float(system.output(x)),
        radius=radius,
        tol=tol,
        budget=budget,
        dim=system.dim,
        seed=seed,
    )


def invariant_kernel_sample(
    system: AffineControlSystem,
    radius: Optional[float] = None,
    tol: float = 1e-8,
    budget: int = 512,
    seed: int = 0,
    filter_horizon: float = 50.0,
    tube_tol: float = 1e-6,
    cfg: Optional[IntegratorConfig] = None,
) -> SetSample:
    """Kernel sample filtered down to points whose orbit stays in the kernel."""
    e_sample = kernel_sample(system, radius=radius, tol=tol, budget=budget, seed=seed)
    return approximate_invariant_set(
        system.drift, e_sample, horizon=filter_horizon, tube_tol=tube_tol, cfg=cfg
    )


def zsd_verdict(
    system: AffineControlSystem,
    n_sample: SetSample,
    eps0: float,
    horizon: float = 1e4,
    tol: float = 0.05,
    *,
    cfg: Optional[IntegratorConfig] = None,
    tube_tol: Optional[float] = None,
    max_starts: int = 64,
) -> Verdict:
    """Convergence of kernel-confined starts: attractivity on the sampled set.

    Pass iff every admissible start with norm below eps0 reaches
    ||x(horizon)|| < tol.  The verdict holds at the configured eps0 only.
    """
    if n_sample.count == 0:
        return Verdict(
            check="zero_state_detectable",
            status=INCONCLUSIVE,
            tolerance=tol,
            samples=0,
            detail={"reason": "empty invariant-set sample"},
        )
    restricted = attractivity_probe(
        system.drift,
        ball_radius=eps0,
        t0_grid=(0.0,),
        horizon=horizon,
        target_tol=tol,
        restrict_to=n_sample,
        tube_tol=tube_tol,
        n_starts=max_starts,
        cfg=cfg,
    )
    status = {ATTRACTIVE: PASS, INCONCLUSIVE_STATUS: INCONCLUSIVE}.get(restricted.status, FAIL)
    return Verdict(
        check="zero_state_detectable",
        status=status,
        witness=restricted.escape_witness if status == FAIL else None,
        tolerance=tol,
        samples=restricted.detail.get("n_runs"),
        detail={"eps0": eps0, "restricted_attractivity": restricted.to_dict()},
    )


@dataclass(frozen=True)
class DetectabilityReport:
    """Plain and strong detectability verdicts plus the restricted probes."""

    zsd: Verdict
    strong_zsd: Verdict
    restricted_stability: StabilityVerdict
    restricted_attractivity: StabilityVerdict

    def __post_init__(self):
        if self.strong_zsd.passed and not self.zsd.passed:
            raise ValueError("strong detectability cannot pass when the plain verdict fails")

    def to_dict(self) -> dict:
        return {
            "zsd": self.zsd.to_dict(),
            "strong_zsd": self.strong_zsd.to_dict(),
            "restricted_stability": self.restricted_stability.to_dict(),
            "restricted_attractivity": self.restricted_attractivity.to_dict(),
        }


def detectability_report(
    system: AffineControlSystem,
    n_sample: SetSample,
    eps0: float,
    horizon: float = 1e4,
    tol: float = 0.05,
    delta_resolution: float = 0.05,
    *,
    cfg: Optional[IntegratorConfig] = None,
    tube_tol: Optional[float] = None,
    stability_horizon: Optional[float] = None,
    seed: int = 0,
) -> DetectabilityReport:
    """Run both restricted probes and assemble the detectability verdicts."""
    plain = zsd_verdict(system, n_sample, eps0, horizon, tol, cfg=cfg, tube_tol=tube_tol)
    restricted_attr = StabilityVerdict(
        status=plain.detail["restricted_attractivity"]["status"],
        escape_witness=plain.detail["restricted_attractivity"]["escape_witness"],
        horizon=horizon,
        detail=plain.detail["restricted_attractivity"]["detail"],
    ) if "restricted_attractivity" in plain.detail else StabilityVerdict(
        status=INCONCLUSIVE_STATUS, horizon=horizon
    )
    if n_sample.count == 0:
        restricted_stab = StabilityVerdict(
            status=INCONCLUSIVE_STATUS,
            horizon=horizon,
            detail={"reason": "empty invariant-set sample"},
        )
    else:
        restricted_stab = uniform_stability_probe(
            system.drift,
            eps_list=(0.5 * eps0, eps0),
            t0_grid=(0.0,),
            delta_resolution=delta_resolution,
            horizon=stability_horizon if stability_horizon is not None else min(horizon, 200.0),
            restrict_to=n_sample,
            tube_tol=tube_tol,
            cfg=cfg,
            seed=seed,
        )
    detail = {"zsd": plain.to_dict(), "restricted_stability": restricted_stab.to_dict()}
    if plain.passed and restricted_stab.status == STABLE:
        strong = Verdict(
            check="strong_zero_state_detectable",
            status=PASS,
            tolerance=tol,
            samples=plain.samples,
            detail=detail,
        )
    elif plain.status == INCONCLUSIVE or restricted_stab.status == INCONCLUSIVE_STATUS:
        strong = Verdict(
            check="strong_zero_state_detectable",
            status=INCONCLUSIVE,
            tolerance=tol,
            samples=plain.samples,
            detail=detail,
        )
    else:
        witness = (
            plain.witness
            or restricted_stab.escape_witness
            or {"reason": "restricted stability probe failed"}
        )
        strong = Verdict(
            check="strong_zero_state_detectable",
            status=FAIL,
            witness=witness,
            tolerance=tol,
            samples=plain.samples,
            detail=detail,
        )
    return DetectabilityReport(
        zsd=plain,
        strong_zsd=strong,
        restricted_stability=restricted_stab,
        restricted_attractivity=restricted_attr,
    )


def strong_zsd_verdict(
    system: AffineControlSystem,
    n_sample: SetSample,
    eps0: float,
    horizon: float = 1e4,
    tol: float = 0.05,
    delta_resolution: float = 0.05,
    **kwargs,
) -> Verdict:
    """Strong detectability verdict; see :func:`detectability_report`."""
    return detectability_report(
        system, n_sample, eps0, horizon, tol, delta_resolution, **kwargs
    ).strong_zsd


def residual_sweep(
    cert: Certificate,
    system: AffineControlSystem,
    q: float,
    samples: int = 10_000,
    radius: Optional[float] = None,
    seed: int = 0,
    eq_tol: float = 1e-10,
    ineq_slack: float = 1e-10,
) -> tuple[str, float, float]:
    """Classify the certificate against the output-dissipation identity.

    Returns (status, max residual, min residual) over a low-discrepancy ball
    sample: "equation" when the residual vanishes within eq_tol, "inequality"
    when it is nonpositive within the slack, "invalid" otherwise.
    """
    radius = cert.domain_radius if radius is None else radius
    pts = ball_points(samples, cert.dim, radius, seed)
    res = np.array([lyapunov_residual(cert, system, q, x) for x in pts])
    r_max, r_min = float(res.max()), float(res.min())
    if max(abs(r_max), abs(r_min)) <= eq_tol:
        return RESIDUAL_EQUATION, r_max, r_min
    if r_max <= ineq_slack:
        return RESIDUAL_INEQUALITY, r_max, r_min
    return RESIDUAL_INVALID, r_max, r_min


@dataclass(frozen=True)
class PipelineReport:
    """End-to-end record tying the residual sweep to the stability verdicts."""

    residual_status: str
    residual_max: float
    residual_min: float
    certificate_nonnegative: Verdict
    applicable: bool
    detectability: DetectabilityReport
    full_stability: StabilityVerdict
    full_attractivity: StabilityVerdict
    consistent: Optional[bool]
    alarm: Optional[str]

    def to_dict(self) -> dict:
        return {
            "residual_status": self.residual_status,
            "residual_max": self.residual_max,
            "residual_min": self.residual_min,
            "certificate_nonnegative": self.certificate_nonnegative.to_dict(),
            "applicable": self.applicable,
            "detectability": self.detectability.to_dict(),
            "full_stability": self.full_stability.to_dict(),
            "full_attractivity": self.full_attractivity.to_dict(),
            "consistent": self.consistent,
            "alarm": self.alarm,
        }


def detectability_pipeline(
    system: AffineControlSystem,
    cert: Certificate,
    q: float = 2.0,
    eps0: Optional[float] = None,
    horizon: float = 1e4,
    *,
    tol: float = 0.05,
    delta_resolution: float = 0.05,
    residual_samples: int = 10_000,
    kernel_budget: int = 512,
    kernel_tol: float = 1e-8,
    seed: int = 0,
    cfg: Optional[IntegratorConfig] = None,
    stability_horizon: Optional[float] = None,
) -> PipelineReport:
    """Residual sweep, detectability verdicts and full-state probes, with a
    consistency alarm when the observed facts contradict each other.

    With a valid certificate (nonnegative V solving the identity or its
    inequality form), strong detectability and observed asymptotic stability
    of the full dynamics are expected to agree; ``alarm`` is set when both
    sides are decisive and disagree.  Without a valid certificate the
    equivalence is not applicable and no alarm can be raised.
    """
    if eps0 is None:
        eps0 = 0.5 * system.domain_radius
    status, r_max, r_min = residual_sweep(cert, system, q, samples=residual_samples, seed=seed)
    nonneg = check_nonnegative(cert, seed=seed)
    applicable = status != RESIDUAL_INVALID and nonneg.passed

    n_sample = invariant_kernel_sample(
        system, tol=kernel_tol, budget=kernel_budget, seed=seed, cfg=cfg
    )
    report = detectability_report(
        system,
        n_sample,
        eps0,
        horizon,
        tol,
        delta_resolution,
        cfg=cfg,
        stability_horizon=stability_horizon,
        seed=seed,
    )
    stab_horizon = stability_horizon if stability_horizon is not None else min(horizon, 200.0)
    full_stability = uniform_stability_probe(
        system.drift,
        eps_list=(0.5 * eps0, eps0),
        t0_grid=(0.0,),
        delta_resolution=delta_resolution,
        horizon=stab_horizon,
        cfg=cfg,
        seed=seed,
    )
    full_attractivity = attractivity_probe(
        system.drift,
        ball_radius=0.5 * eps0,
        t0_grid=(0.0,),
        horizon=horizon,
        target_tol=tol,
        cfg=cfg,
        seed=seed,
    )

    consistent: Optional[bool] = None
    alarm: Optional[str] = None
    if applicable:
        strong = report.strong_zsd
        if full_stability.status == STABLE and full_attractivity.status == ATTRACTIVE:
            stable_observed: Optional[bool] = True
        elif full_stability.status == UNSTABLE or full_attractivity.status == NON_ATTRACTIVE:
            stable_observed = False
        else:
            stable_observed = None
        if strong.status != INCONCLUSIVE and stable_observed is not None:
            consistent = strong.passed == stable_observed
            if not consistent:
                alarm = (
                    "strong detectability and observed asymptotic stability disagree "
                    f"(strong={strong.status}, stability={full_stability.status}, "
                    f"attractivity={full_attractivity.status})"
                )
    return PipelineReport(
        residual_status=status,
        residual_max=r_max,
        residual_min=r_min,
        certificate_nonnegative=nonneg,
        applicable=applicable,
        detectability=report,
        full_stability=full_stability,
        full_attractivity=full_attractivity,
        consistent=consistent,
        alarm=alarm,
    )
