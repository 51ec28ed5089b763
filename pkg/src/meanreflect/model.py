"""Model declaration: SDE coefficients, jump structure, constraint, initial law.

The engine simulates scalar dynamics

    dX = b(X) dt + sigma(X) dB + jump term + dK,

where the jump term is a compound Poisson sum of amplitudes F(X, mark),
compensated by ``intensity * E_mark[F(x, mark)]``, and K is the minimal
nondecreasing deterministic push keeping the mean constraint
``mean h(X_t) >= 0`` satisfied.

Three parametric families with (semi-)closed-form solutions are built in;
anything else can be declared directly through :class:`ModelSpec` and
:class:`Constraint` with vectorized coefficient callables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import stochastics
from .numerics import bisect_increasing, expand_bracket
from .stochastics import CustomSampler, DiracPoint, Law, LogNormal

_SQRT_E = math.sqrt(math.e)

#: Internal seed for the Monte Carlo compensator fallback; fixed so scheme
#: determinism never depends on compensator noise.
_COMPENSATOR_SEED = 0x434F4D50454E5341
_COMPENSATOR_MARKS = 100_000

#: Internal seed for validation sampling (report must be reproducible).
_VALIDATE_SEED = 0x56414C4944415445


@dataclass(frozen=True)
class Constraint:
    """Bi-Lipschitz increasing constraint function h.

    ``m`` and ``M`` bound the increments: m|x-y| <= |h(x)-h(y)| <= M|x-y|.
    They may be ``None`` for custom constraints without certified bounds, in
    which case root brackets are grown geometrically instead of placed
    directly. ``kind`` selects fast evaluation paths in the reflection
    kernel ("linear", "sine", or "custom").
    """

    h: Callable[[np.ndarray], np.ndarray]
    m: float | None
    M: float | None
    h_prime: Callable[[np.ndarray], np.ndarray] | None = None
    h_second: Callable[[np.ndarray], np.ndarray] | None = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)


def linear_constraint(p: float) -> Constraint:
    """h(x) = x - p; the constraint ``mean X >= p``."""
    return Constraint(
        h=lambda x: x - p,
        m=1.0,
        M=1.0,
        h_prime=lambda x: np.ones_like(np.asarray(x, dtype=np.float64)),
        h_second=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
        kind="linear",
        params={"p": p},
    )


def sine_constraint(alpha: float, p: float) -> Constraint:
    """h(x) = x + alpha*sin(x) - p, increasing and bi-Lipschitz for |alpha| < 1.

    Constraints with |alpha| >= 1 can still be constructed (``m`` collapses
    to 0) so that :func:`validate` can report the violation; the model
    factories reject them outright.
    """
    return Constraint(
        h=lambda x: x + alpha * np.sin(x) - p,
        m=max(1.0 - abs(alpha), 0.0),
        M=1.0 + abs(alpha),
        h_prime=lambda x: 1.0 + alpha * np.cos(x),
        h_second=lambda x: -alpha * np.sin(x),
        kind="sine",
        params={"alpha": alpha, "p": p},
    )


def sine_constraint_root(alpha: float, p: float) -> float:
    """The unique solution of x + alpha*sin(x) = p (needs |alpha| < 1)."""
    if abs(alpha) >= 1.0:
        raise ValueError(f"|alpha| must be < 1, got {alpha}")
    f = lambda x: x + alpha * math.sin(x) - p
    lo, hi = expand_bracket(f, -max(1.0, 2.0 * abs(p)), max(1.0, 2.0 * abs(p)))
    return bisect_increasing(f, lo, hi, tol_x=1e-14)


def mc_compensator(
    jump_amplitude: Callable,
    intensity: float,
    law: Law,
    n_marks: int = _COMPENSATOR_MARKS,
    chunk: int = 4096,
) -> Callable[[np.ndarray], np.ndarray]:
    """Monte Carlo fallback for x -> intensity * E_mark[F(x, mark)].

    Marks are drawn once from a fixed internal substream and cached, so the
    returned callable is deterministic and safe to share across workers.
    """
    cache: list[np.ndarray] = []

    def compensator(x):
        if not cache:
            u = stochastics.uniforms(
                _COMPENSATOR_SEED, np.arange(n_marks), 0,
                stochastics.Channel.JUMP_SIZE,
            )
            cache.append(law.from_uniform(u))
        marks = cache[0]
        x_arr = np.asarray(x, dtype=np.float64)
        scalar = x_arr.ndim == 0
        xa = np.atleast_1d(x_arr)
        total = np.zeros(xa.shape)
        for lo in range(0, n_marks, chunk):
            z = marks[lo : lo + chunk]
            vals = np.broadcast_to(
                jump_amplitude(xa[:, None], z[None, :]), (xa.size, z.size)
            )
            total += vals.sum(axis=1)
        out = intensity * total / n_marks
        return float(out[0]) if scalar else out

    return compensator


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients, jump structure and initial law of one model.

    Coefficient callables must accept numpy arrays (or broadcast against
    them). ``compensator`` is x -> intensity * E_mark[F(x, mark)]; when not
    supplied it is replaced by the Monte Carlo fallback.
    """

    drift: Callable
    diffusion: Callable
    jump_amplitude: Callable
    intensity: float
    jump_size_law: Law
    initial_law: DiracPoint | CustomSampler
    compensator: Callable | None = None
    case: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.intensity <= 0.0:
            raise ValueError(f"intensity must be > 0, got {self.intensity}")
        if self.compensator is None:
            object.__setattr__(
                self,
                "compensator",
                mc_compensator(
                    self.jump_amplitude, self.intensity, self.jump_size_law
                ),
            )


def make_case_i(
    beta: float, sigma: float, eta: float, lam: float, x0: float, p: float
) -> tuple[ModelSpec, Constraint]:
    """Drifted Brownian motion with compensated lognormal jumps, linear constraint.

    b = -beta, sigma constant, F(x, z) = eta*z with lognormal(0,1) marks.
    The jump compensator is lam*eta*sqrt(e) since the marks have mean
    sqrt(e).
    """
    if beta <= 0 or sigma <= 0 or eta <= 0 or lam <= 0:
        raise ValueError("case (i) requires beta, sigma, eta, lambda > 0")
    if x0 < p:
        raise ValueError(
            f"x0={x0} < p={p}: initial mean constraint h(x0) >= 0 violated"
        )
    comp_value = lam * eta * _SQRT_E
    spec = ModelSpec(
        drift=lambda x: -beta,
        diffusion=lambda x: sigma,
        jump_amplitude=lambda x, z: eta * z,
        intensity=lam,
        jump_size_law=LogNormal(0.0, 1.0),
        initial_law=DiracPoint(x0),
        compensator=lambda x: comp_value,
        case="i",
        params={
            "beta": beta, "sigma": sigma, "eta": eta, "lambda": lam,
            "x0": x0, "p": p,
        },
    )
    return spec, linear_constraint(p)


def make_case_ii(
    a: float, gamma: float, theta: float, lam: float, x0: float, p: float
) -> tuple[ModelSpec, Constraint]:
    """Geometric dynamics with multiplicative jumps, linear constraint.

    b = -a*x, sigma = gamma*x, F(x, .) = theta*x at the unit Dirac mark.
    """
    if a <= 0 or gamma <= 0 or theta <= 0 or lam <= 0:
        raise ValueError("case (ii) requires a, gamma, theta, lambda > 0")
    if p <= 0:
        raise ValueError(
            f"p={p} <= 0: the reflection onset time (ln x0 - ln p)/a is undefined"
        )
    if x0 < p:
        raise ValueError(
            f"x0={x0} < p={p}: initial mean constraint h(x0) >= 0 violated"
        )
    spec = ModelSpec(
        drift=lambda x: -a * x,
        diffusion=lambda x: gamma * x,
        jump_amplitude=lambda x, z: theta * x,
        intensity=lam,
        jump_size_law=DiracPoint(1.0),
        initial_law=DiracPoint(x0),
        compensator=lambda x: lam * theta * x,
        case="ii",
        params={
            "a": a, "gamma": gamma, "theta": theta, "lambda": lam,
            "x0": x0, "p": p,
        },
    )
    return spec, linear_constraint(p)


def make_case_iii(
    beta: float,
    a: float,
    sigma: float,
    eta: float,
    lam: float,
    x0: float,
    p: float,
    alpha: float,
) -> tuple[ModelSpec, Constraint]:
    """Mean-reverting dynamics with unit-mark jumps, sine-perturbed constraint.

    b = -(beta + a*x), sigma constant, F = eta at the unit Dirac mark,
    h(x) = x + alpha*sin(x) - p.
    """
    if beta <= 0 or a <= 0 or sigma <= 0 or eta <= 0 or lam <= 0:
        raise ValueError("case (iii) requires beta, a, sigma, eta, lambda > 0")
    if abs(alpha) >= 1.0:
        raise ValueError(
            f"|alpha|={abs(alpha)} >= 1: constraint no longer increasing bi-Lipschitz"
        )
    constraint = sine_constraint(alpha, p)
    if float(constraint.h(x0)) < 0.0:
        raise ValueError(
            f"h(x0) = {float(constraint.h(x0)):.6g} < 0: initial mean constraint violated"
        )
    spec = ModelSpec(
        drift=lambda x: -(beta + a * x),
        diffusion=lambda x: sigma,
        jump_amplitude=lambda x, z: eta,
        intensity=lam,
        jump_size_law=DiracPoint(1.0),
        initial_law=DiracPoint(x0),
        compensator=lambda x: lam * eta,
        case="iii",
        params={
            "beta": beta, "a": a, "sigma": sigma, "eta": eta, "lambda": lam,
            "x0": x0, "p": p, "alpha": alpha,
        },
    )
    return spec, constraint


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`: hard violations and advisory warnings."""

    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [f"violations: {len(self.violations)}, warnings: {len(self.warnings)}"]
        lines += [f"  VIOLATION: {v}" for v in self.violations]
        lines += [f"  warning:   {w}" for w in self.warnings]
        return "\n".join(lines)


def _uniform_grid(seed: int, n: int, lo: float, hi: float) -> np.ndarray:
    u = stochastics.uniforms(
        seed, np.arange(n), 0, stochastics.Channel.INITIAL
    )
    return lo + (hi - lo) * u


def validate(
    spec: ModelSpec,
    constraint: Constraint,
    lipschitz_grid: np.ndarray | None = None,
    lipschitz_bound: float = 1e6,
    initial_samples: int = 100_000,
) -> ValidationReport:
    """Report-only check of the model and constraint invariants.

    Hard violations: non-positive intensity, broken (m, M) ordering,
    non-monotone or non-bi-Lipschitz h on sampled pairs, negative initial
    constraint mean. Advisory warnings: finite-difference coefficient slopes
    above ``lipschitz_bound`` (global Lipschitz continuity cannot be
    certified numerically, so this never rejects).
    """
    report = ValidationReport()

    if spec.intensity <= 0.0:
        report.violations.append(f"intensity must be > 0, got {spec.intensity}")

    if constraint.kind == "sine":
        alpha = constraint.params.get("alpha", 0.0)
        if abs(alpha) >= 1.0:
            report.violations.append(
                f"sine constraint needs |alpha| < 1, got alpha={alpha}"
            )

    if (constraint.m is None) != (constraint.M is None):
        report.violations.append("m and M must be supplied together")
    has_bounds = constraint.m is not None and constraint.M is not None
    if has_bounds:
        if not (0.0 < constraint.m <= constraint.M):
            report.violations.append(
                f"need 0 < m <= M, got m={constraint.m}, M={constraint.M}"
            )
            has_bounds = False
    else:
        report.warnings.append(
            "no (m, M) bounds: root brackets will be grown geometrically"
        )

    # Monotonicity and bi-Lipschitz bounds on random pairs in [-50, 50].
    xs = _uniform_grid(_VALIDATE_SEED, 10_000, -50.0, 50.0)
    ys = _uniform_grid(_VALIDATE_SEED + 1, 10_000, -50.0, 50.0)
    lo = np.minimum(xs, ys)
    hi = np.maximum(xs, ys)
    gap = hi - lo
    dh = np.asarray(constraint.h(hi), dtype=np.float64) - np.asarray(
        constraint.h(lo), dtype=np.float64
    )
    if np.any(dh < -1e-12):
        report.violations.append("h is not nondecreasing on sampled pairs")
    if has_bounds:
        slack = 1e-9 * (1.0 + gap)
        if np.any(dh < constraint.m * gap - slack):
            report.violations.append(
                f"h increments fall below m={constraint.m} on sampled pairs"
            )
        if np.any(dh > constraint.M * gap + slack):
            report.violations.append(
                f"h increments exceed M={constraint.M} on sampled pairs"
            )

    # Initial mean constraint E[h(X0)] >= 0.
    if isinstance(spec.initial_law, DiracPoint):
        h0 = float(constraint.h(spec.initial_law.value))
        if h0 < 0.0:
            report.violations.append(
                f"mean h(X0) = {h0:.6g} < 0 for the point initial law"
            )
    else:
        u = stochastics.uniforms(
            _VALIDATE_SEED + 2, np.arange(initial_samples), 0,
            stochastics.Channel.INITIAL,
        )
        hvals = np.asarray(constraint.h(spec.initial_law.from_uniform(u)))
        mean = float(hvals.mean())
        se = float(hvals.std(ddof=1)) / math.sqrt(initial_samples)
        if mean < -3.0 * se:
            report.violations.append(
                f"mean h(X0) = {mean:.6g} < 0 beyond 3 standard errors ({se:.2g})"
            )

    # Advisory finite-difference Lipschitz spot-check.
    grid = (
        np.linspace(-50.0, 50.0, 201)
        if lipschitz_grid is None
        else np.asarray(lipschitz_grid, dtype=np.float64)
    )
    dx = np.diff(grid)
    keep = dx > 0
    for name, fn in (("drift", spec.drift), ("diffusion", spec.diffusion)):
        vals = np.broadcast_to(np.asarray(fn(grid), dtype=np.float64), grid.shape)
        slopes = np.abs(np.diff(vals)[keep] / dx[keep])
        if slopes.size and slopes.max() > lipschitz_bound:
            report.warnings.append(
                f"{name} finite-difference slope {slopes.max():.3g} exceeds "
                f"{lipschitz_bound:.3g}"
            )
    mark = spec.jump_size_law.mean()
    marks = [mark] if mark is not None else [1.0]
    for z in marks:
        vals = np.broadcast_to(
            np.asarray(spec.jump_amplitude(grid, z), dtype=np.float64), grid.shape
        )
        slopes = np.abs(np.diff(vals)[keep] / dx[keep])
        if slopes.size and slopes.max() > lipschitz_bound:
            report.warnings.append(
                f"jump_amplitude slope {slopes.max():.3g} at mark {z:.3g} "
                f"exceeds {lipschitz_bound:.3g}"
            )

    return report
