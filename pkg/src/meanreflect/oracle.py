"""Closed-form and semi-analytic reference solutions for the built-in cases.

The coupled oracles replay the exact same counter-based noise as a scheme
run (same Gaussian increments, same jump counts and marks), so the
difference between an exact path and its scheme counterpart isolates the
discretization and particle-approximation error.

Case overview:

* case i   - drifted Brownian motion with compensated lognormal jumps:
  the reflection is (p + beta*t - x0)^+ and the state has a fully explicit
  path representation.
* case ii  - geometric dynamics with multiplicative jumps: reflection
  starts at t* = (ln x0 - ln p)/a and grows linearly; the state is
  reconstructed from the unreflected exponential process by a left-point
  Riemann sum of 1/Y against the reflection increments.
* case iii - mean-reverting dynamics with a sine-perturbed constraint:
  only the reflection path is available, through the root of a
  semi-analytic mean-constraint function whose jump factor is accurate for
  small mean-reversion speed; its outputs are flagged approximate.

The reflection-density estimator turns a particle snapshot into the local
growth rate of the reflection via the generator of the constraint
function, giving a diagnostic that is independent of the running-sup
construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import stochastics
from .errors import DerivativesMissing, NoiseMismatch
from .model import Constraint, ModelSpec
from .numerics import bisect_increasing, expand_bracket
from .scheme import GridSpec, ParticleSystem
from .stochastics import DiracPoint, NoiseRecord

_SQRT_E = math.sqrt(math.e)

#: Above this mean-reversion speed the case-iii jump factor is dubious.
SMALL_A_GUARD = 0.05

_DENSITY_MARKS = 10_000
_DENSITY_SEED = 0x44454E53495459


@dataclass
class OraclePath:
    """Reference solution on a grid.

    ``x_exact`` is the coupled per-particle path when one exists (cases i
    and ii); ``approximate`` marks outputs whose jump factor is itself an
    approximation (case iii).
    """

    times: np.ndarray
    k_exact: np.ndarray
    x_exact: np.ndarray | None = None
    mean_y: np.ndarray | None = None
    approximate: bool = False


def _require(params: Mapping[str, float], *names: str) -> list[float]:
    missing = [n for n in names if n not in params]
    if missing:
        raise KeyError(f"missing parameters {missing}")
    return [float(params[n]) for n in names]


def _check_noise(noise: NoiseRecord, grid: GridSpec, particle: int) -> None:
    if noise.n_steps != grid.steps:
        raise NoiseMismatch(
            f"noise record has {noise.n_steps} steps, grid has {grid.steps}"
        )
    if not 0 <= particle < noise.n_particles:
        raise NoiseMismatch(
            f"particle {particle} outside record of {noise.n_particles}"
        )


def _brownian_path(noise: NoiseRecord, grid: GridSpec, particle: int) -> np.ndarray:
    sqrt_dt = math.sqrt(grid.dt)
    increments = sqrt_dt * noise.particle_gaussians(particle)
    return np.concatenate(([0.0], np.cumsum(increments)))


def exact_case_i(
    noise: NoiseRecord, params: Mapping[str, float], grid: GridSpec, particle: int = 0
) -> OraclePath:
    """Exact coupled path for case i on the grid."""
    beta, sigma, eta, lam, x0, p = _require(
        params, "beta", "sigma", "eta", "lambda", "x0", "p"
    )
    _check_noise(noise, grid, particle)
    t = grid.times()
    k_exact = np.maximum(0.0, p + beta * t - x0)
    b_path = _brownian_path(noise, grid, particle)
    jump_path = np.concatenate(
        ([0.0], np.cumsum(eta * noise.particle_mark_sums(particle)))
    )
    x_exact = (
        x0 - (beta + lam * eta * _SQRT_E) * t + sigma * b_path + jump_path + k_exact
    )
    return OraclePath(times=t, k_exact=k_exact, x_exact=x_exact, mean_y=x0 - beta * t)


def exact_case_ii(
    noise: NoiseRecord, params: Mapping[str, float], grid: GridSpec, particle: int = 0
) -> OraclePath:
    """Exact coupled path for case ii on the grid.

    The unreflected exponential process is exact at grid times; the
    reconstruction integral of 1/Y against dK uses left-point sums, which
    is first-order consistent like the scheme itself.
    """
    a, gamma, theta, lam, x0, p = _require(
        params, "a", "gamma", "theta", "lambda", "x0", "p"
    )
    _check_noise(noise, grid, particle)
    t = grid.times()
    t_star = (math.log(x0) - math.log(p)) / a
    k_exact = a * p * np.maximum(0.0, t - t_star)
    b_path = _brownian_path(noise, grid, particle)
    n_path = np.concatenate(
        ([0], np.cumsum(noise.particle_counts(particle)))
    ).astype(np.float64)
    y = (
        x0
        * np.exp(-(a + 0.5 * gamma**2 + lam * theta) * t + gamma * b_path)
        * (1.0 + theta) ** n_path
    )
    integral = np.concatenate(([0.0], np.cumsum(np.diff(k_exact) / y[:-1])))
    x_exact = y * (1.0 + integral)
    return OraclePath(
        times=t, k_exact=k_exact, x_exact=x_exact, mean_y=x0 * np.exp(-a * t)
    )


def _case_iii_constraint_mean(
    t: float, params: Mapping[str, float]
) -> tuple[float, float, float, float, float, float]:
    """Coefficients of the case-iii mean-constraint function at time t.

    Returns (decay, ey, f, g, m, n) where the constraint mean as a function
    of the accumulated (discounted) reflection x is

        ey + decay*x + alpha*g*(m*cos(f + decay*x) + n*sin(f + decay*x)) - p.

    g is the Gaussian smearing factor exp(-Var/2) of the stochastic
    integral part; m and n are the real and imaginary parts of the
    small-speed approximation of the jump characteristic function.
    """
    beta, a, sigma, eta, lam, x0 = _require(
        params, "beta", "a", "sigma", "eta", "lambda", "x0"
    )
    decay = math.exp(-a * t)
    growth = (math.exp(a * t) - 1.0) / a
    ey = decay * (x0 - beta * growth)
    f = decay * (x0 - (beta + lam * eta) * growth)
    var = sigma**2 * (1.0 - math.exp(-2.0 * a * t)) / (2.0 * a)
    g = math.exp(-0.5 * var)
    shrink = math.exp(lam * t * (math.cos(eta) - 1.0))
    phase = lam * t * math.sin(eta)
    n = shrink * math.cos(phase)
    m = shrink * math.sin(phase)
    return decay, ey, f, g, m, n


def exact_case_iii_K(params: Mapping[str, float], grid: GridSpec) -> OraclePath:
    """Semi-analytic reflection path for case iii.

    At each grid time the root of the mean-constraint function is found by
    bisection (the function is strictly increasing for |alpha| < 1); the
    discounted running supremum of the positive parts is then accumulated
    into the reflection. All outputs are flagged approximate.
    """
    beta, a, sigma, eta, lam, x0, p, alpha = _require(
        params, "beta", "a", "sigma", "eta", "lambda", "x0", "p", "alpha"
    )
    if a > SMALL_A_GUARD:
        warnings.warn(
            f"case iii reference uses a small-speed jump factor; a={a} exceeds "
            f"{SMALL_A_GUARD} and the approximation may be poor",
            stacklevel=2,
        )
    t_grid = grid.times()
    scale = max(1.0, 2.0 * (abs(p) + abs(x0)))
    roots = np.empty(t_grid.size)
    mean_y = np.empty(t_grid.size)
    for j, t in enumerate(t_grid):
        decay, ey, f, g, m, n = _case_iii_constraint_mean(t, params)
        mean_y[j] = ey

        def fn(x: float) -> float:
            arg = f + decay * x
            return (
                ey
                + decay * x
                + alpha * g * (m * math.cos(arg) + n * math.sin(arg))
                - p
            )

        lo, hi = expand_bracket(fn, -scale, scale)
        roots[j] = bisect_increasing(fn, lo, hi)
    kbar = np.maximum.accumulate(np.maximum(0.0, roots))
    increments = np.diff(np.concatenate(([0.0], kbar)))
    k_exact = np.cumsum(np.exp(-a * t_grid) * increments)
    return OraclePath(
        times=t_grid, k_exact=k_exact, x_exact=None, mean_y=mean_y, approximate=True
    )


def mean_y(t, x0: float, beta: float, a: float):
    """Mean of the unreflected state for mean-reverting dynamics (a != 0):
    exp(-a t) * (x0 - beta*(exp(a t) - 1)/a)."""
    if a == 0.0:
        raise ValueError("mean_y requires a != 0; use x0 - beta*t directly")
    t = np.asarray(t, dtype=np.float64)
    out = np.exp(-a * t) * (x0 - beta * (np.exp(a * t) - 1.0) / a)
    return float(out) if out.ndim == 0 else out


def exact_k_path(case: str, params: Mapping[str, float], grid: GridSpec) -> np.ndarray:
    """Reference reflection path for a built-in case (no noise needed)."""
    t = grid.times()
    if case == "i":
        beta, x0, p = _require(params, "beta", "x0", "p")
        return np.maximum(0.0, p + beta * t - x0)
    if case == "ii":
        a, x0, p = _require(params, "a", "x0", "p")
        t_star = (math.log(x0) - math.log(p)) / a
        return a * p * np.maximum(0.0, t - t_star)
    if case == "iii":
        return exact_case_iii_K(params, grid).k_exact
    raise ValueError(f"no reference reflection path for case {case!r}")


def _jump_generator_term(
    atoms: np.ndarray,
    h_prime_vals: np.ndarray,
    model: ModelSpec,
    constraint: Constraint,
) -> np.ndarray:
    """intensity * E_mark[h(x+F) - h(x) - F h'(x)] per atom."""
    if constraint.kind == "linear":
        return np.zeros_like(atoms)
    h = constraint.h
    if isinstance(model.jump_size_law, DiracPoint):
        amp = np.broadcast_to(
            np.asarray(
                model.jump_amplitude(atoms, model.jump_size_law.value),
                dtype=np.float64,
            ),
            atoms.shape,
        )
        return model.intensity * (h(atoms + amp) - h(atoms) - amp * h_prime_vals)
    u = stochastics.uniforms(
        _DENSITY_SEED, np.arange(_DENSITY_MARKS), 0, stochastics.Channel.JUMP_SIZE
    )
    marks = model.jump_size_law.from_uniform(u)
    h_at = h(atoms)
    total = np.zeros_like(atoms)
    chunk = max(1, _DENSITY_MARKS * 200 // max(1, atoms.size))
    for lo in range(0, marks.size, chunk):
        z = marks[lo : lo + chunk]
        amp = np.broadcast_to(
            np.asarray(model.jump_amplitude(atoms[:, None], z[None, :])),
            (atoms.size, z.size),
        )
        bracket = h(atoms[:, None] + amp) - h_at[:, None] - amp * h_prime_vals[:, None]
        total += bracket.sum(axis=1)
    return model.intensity * total / marks.size


def density_k(
    snapshot,
    model: ModelSpec,
    constraint: Constraint,
    epsilon_active: float | None = None,
) -> float:
    """Reflection-density estimate from one particle snapshot.

    Applies the generator of h to the cloud and returns the negative part
    of its mean divided by the mean of h', gated by whether the constraint
    mean sits at the boundary (within ``epsilon_active``, which defaults to
    three standard errors of the constraint mean).
    """
    if constraint.h_prime is None or constraint.h_second is None:
        raise DerivativesMissing(
            "density estimation needs h_prime and h_second on the constraint"
        )
    atoms = np.asarray(snapshot, dtype=np.float64)
    h_vals = np.asarray(constraint.h(atoms), dtype=np.float64)
    mean_h = float(h_vals.mean())
    if epsilon_active is None:
        spread = float(h_vals.std(ddof=1)) if atoms.size > 1 else 0.0
        epsilon_active = 3.0 * spread / math.sqrt(atoms.size)
    if abs(mean_h) > epsilon_active:
        return 0.0
    hp = np.broadcast_to(
        np.asarray(constraint.h_prime(atoms), dtype=np.float64), atoms.shape
    )
    hpp = np.asarray(constraint.h_second(atoms), dtype=np.float64)
    sig = np.asarray(model.diffusion(atoms), dtype=np.float64)
    generator = (
        np.asarray(model.drift(atoms), dtype=np.float64) * hp
        + 0.5 * sig * sig * hpp
        + _jump_generator_term(atoms, hp, model, constraint)
    )
    negative_part = max(0.0, -float(np.mean(generator)))
    return negative_part / float(np.mean(hp))


def density_series(
    model: ModelSpec,
    constraint: Constraint,
    grid: GridSpec,
    n_particles: int,
    seed: int,
    threads: int | None = None,
    epsilon_active: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Reflection-density estimates along a scheme run.

    The estimate at grid time T_k uses the post-reflection cloud at T_k,
    the discrete stand-in for the left limit on (T_k, T_k+1); the
    left-point sum of the series times dt approximates the total
    reflection. Returns (times[:-1], estimates).
    """
    system = ParticleSystem(model, constraint, grid, n_particles, seed, threads)
    khat = np.empty(grid.steps)
    for k in range(grid.steps):
        khat[k] = density_k(system.X, model, constraint, epsilon_active)
        system.step()
    return grid.times()[:-1], khat
