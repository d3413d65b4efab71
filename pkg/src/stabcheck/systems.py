"""System objects and the bundled example systems with closed-form oracles.

A :class:`TimeVaryingField` is the right-hand side of ``x' = f(t, x)`` on a
ball around the origin, with the regularity metadata the checks rely on
(domain radius, optional Lipschitz and magnitude hints).  All objects are
immutable after construction and safe to evaluate concurrently.

The bundled examples are simple polynomial systems whose solutions separate,
so each ships a closed form derived by separation of variables.  The closed
forms are validated against the fields by finite differences in the test
suite; they are rederived from the equations rather than copied, since
transcribed solution formulas are easy to get wrong by a constant factor.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .expressions import parse_state_function, state_variables
from .exceptions import ConfigError


@dataclass(frozen=True)
class TimeVaryingField:
    """Vector field f(t, x) with the metadata used by the numerical checks.

    ``rhs`` maps (t, x) to the state derivative; ``eval`` applies the
    accumulated time offset so translated fields share one evaluation path.
    ``domain_radius`` bounds the ball on which every check runs.  The field
    must vanish at the origin for all t and stay finite on the ball.
    """

    dim: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    domain_radius: float = 2.0
    lipschitz_hint: Optional[float] = None
    bound_hint: Optional[Callable[[np.ndarray], float]] = None
    autonomous: bool = False
    name: str = ""
    time_offset: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("field dimension must be a positive integer")
        if not self.domain_radius > 0.0:
            raise ConfigError("domain_radius must be positive")

    def eval(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.rhs(t + self.time_offset, x)

    __call__ = eval


def time_translate(field: TimeVaryingField, shift: float) -> TimeVaryingField:
    """Field evaluating as f(t + shift, x); dimension and domain unchanged.

    Translations compose exactly: the offsets are summed once, so
    ``time_translate(time_translate(f, a), b)`` evaluates bit-for-bit like
    ``time_translate(f, a + b)``.
    """
    return dataclasses.replace(field, time_offset=field.time_offset + float(shift))


@dataclass(frozen=True)
class AffineControlSystem:
    """Single-input single-output system x' = f(x) + g(x) u, y = h(x).

    The drift must be autonomous with f(0) = 0 and the output must satisfy
    h(0) = 0.
    """

    drift: TimeVaryingField
    input_field: Callable[[np.ndarray], np.ndarray]
    output: Callable[[np.ndarray], float]
    name: str = ""

    @property
    def dim(self) -> int:
        return self.drift.dim

    @property
    def domain_radius(self) -> float:
        return self.drift.domain_radius


def as_control_system(
    field: TimeVaryingField,
    output: Callable[[np.ndarray], float],
    input_field: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    name: str = "",
) -> AffineControlSystem:
    """Attach an output map (and optionally an input channel) to a field."""
    if input_field is None:
        zero = np.zeros(field.dim)

        def input_field(x, _z=zero):
            return _z

    return AffineControlSystem(drift=field, input_field=input_field, output=output, name=name)


@dataclass(frozen=True)
class ClosedFormSolution:
    """Exact solution oracle x(t; t0, x0) with its validity horizon.

    ``components`` restricts the oracle to a subset of state indices; entries
    outside it are NaN and must be ignored by comparisons.
    """

    eval: Callable[[float, float, np.ndarray], np.ndarray]
    valid_horizon: Callable[[float, np.ndarray], float]
    components: Optional[tuple[int, ...]] = None

    def compare_mask(self, dim: int) -> np.ndarray:
        mask = np.zeros(dim, dtype=bool)
        if self.components is None:
            mask[:] = True
        else:
            mask[list(self.components)] = True
        return mask


def field_from_expressions(
    components: Sequence[str],
    domain_radius: float = 2.0,
    name: str = "",
) -> TimeVaryingField:
    """Build a field from one expression per component (variables x1..xn, t)."""
    dim = len(components)
    exprs = [parse_state_function(src, dim) for src in components]
    uses_time = any(e.uses_time for e in exprs)

    def rhs(t, x, _exprs=tuple(exprs)):
        return np.array([e(t, x) for e in _exprs], dtype=float)

    return TimeVaryingField(
        dim=dim,
        rhs=rhs,
        domain_radius=domain_radius,
        autonomous=not uses_time,
        name=name or " ; ".join(components),
    )


# ---------------------------------------------------------------------------
# bundled example systems
# ---------------------------------------------------------------------------


def _cubic_decay(x0c: float, tau: float) -> float:
    # solution of v' = -v^3, separated: 1/v^2 = 1/x0^2 + 2 tau
    return x0c / math.sqrt(1.0 + 2.0 * x0c * x0c * tau)


def example1(domain_radius: float = 2.0):
    """Planar system x' = y^2, y' = -y^3 and its closed-form flow.

    The x component grows without bound for y0 != 0 while y decays, which is
    what makes this system the canonical unstable-but-restricted-stable case.
    """

    def rhs(t, x):
        y = x[1]
        return np.array((y * y, -y * y * y))

    field = TimeVaryingField(
        dim=2,
        rhs=rhs,
        domain_radius=domain_radius,
        bound_hint=lambda x: abs(x[1]) ** 2 * math.sqrt(1.0 + x[1] ** 2),
        autonomous=True,
        name="example1",
    )

    def solution(t, t0, x0):
        tau = t - t0
        y0 = x0[1]
        w = 1.0 + 2.0 * y0 * y0 * tau
        return np.array((x0[0] + 0.5 * math.log(w), y0 / math.sqrt(w)))

    oracle = ClosedFormSolution(eval=solution, valid_horizon=lambda t0, x0: math.inf)
    return field, oracle


_DEFAULT_COUPLING = ("x1^2", 1.0, 2.0)  # expression, sector gain a, exponent b


def example2(
    coupling: Optional[Callable[[float], float]] = None,
    domain_radius: float = 2.0,
):
    """Planar cascade x1' = -x1^3 + psi(x2), x2' = -x2^3.

    ``coupling`` is the cross term psi; it must vanish at zero and satisfy a
    sector bound |psi(v)| <= a |v|^b with b >= 1.  The default is psi(v) = v^2.
    The closed form covers the x2 component only (x1 has no elementary
    solution for general psi).
    """
    if coupling is None:
        coupling = lambda v: v * v  # noqa: E731 - default sector shape

    def rhs(t, x, _psi=coupling):
        x1, x2 = x[0], x[1]
        return np.array((-x1 ** 3 + _psi(x2), -x2 ** 3))

    field = TimeVaryingField(
        dim=2,
        rhs=rhs,
        domain_radius=domain_radius,
        autonomous=True,
        name="example2",
    )

    def solution(t, t0, x0):
        tau = t - t0
        return np.array((math.nan, _cubic_decay(x0[1], tau)))

    oracle = ClosedFormSolution(
        eval=solution,
        valid_horizon=lambda t0, x0: math.inf,
        components=(1,),
    )
    return field, oracle


def example3(domain_radius: float = 2.0):
    """SISO control system x1' = -x1^3 + u, x2' = -x2^3, y = x2^3.

    The oracle is the flow of the unforced drift (u = 0), where both
    components separate.
    """

    def rhs(t, x):
        return np.array((-x[0] ** 3, -x[1] ** 3))

    drift = TimeVaryingField(
        dim=2,
        rhs=rhs,
        domain_radius=domain_radius,
        autonomous=True,
        name="example3-drift",
    )
    system = AffineControlSystem(
        drift=drift,
        input_field=lambda x: np.array((1.0, 0.0)),
        output=lambda x: float(x[1] ** 3),
        name="example3",
    )

    def solution(t, t0, x0):
        tau = t - t0
        return np.array((_cubic_decay(x0[0], tau), _cubic_decay(x0[1], tau)))

    oracle = ClosedFormSolution(eval=solution, valid_horizon=lambda t0, x0: math.inf)
    return system, oracle


_CORPUS = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
}


def corpus_names() -> tuple[str, ...]:
    return tuple(sorted(_CORPUS))


def corpus_get(name: str):
    """Return (system, closed-form oracle or None) for a bundled system."""
    try:
        factory = _CORPUS[name]
    except KeyError:
        raise KeyError(
            f"unknown corpus system {name!r}; available: {', '.join(corpus_names())}"
        ) from None
    return factory()


def coupling_from_expression(source: str) -> Callable[[float], float]:
    """Compile a psi(x1) cross-term expression for :func:`example2`."""
    expr = parse_state_function(source, 1)
    return lambda v: float(expr.evaluate(np.array([v])))


__all__ = [
    "TimeVaryingField",
    "AffineControlSystem",
    "ClosedFormSolution",
    "time_translate",
    "as_control_system",
    "field_from_expressions",
    "coupling_from_expression",
    "corpus_get",
    "corpus_names",
    "example1",
    "example2",
    "example3",
    "state_variables",
]
