"""Discrete interacting-particle Euler scheme.

N coupled particles are advanced on a uniform grid. Each step updates the
unreflected states U with left-point Euler increments (drift minus jump
compensator, Brownian increment, summed jump amplitudes), recomputes the
minimal push g0 of the empirical U-cloud, advances the running supremum,
and applies the sup increment to every reflected state X. The coupling

    X[i] = U[i] + running_sup

holds exactly at every completed step by construction.

Within a step, particle updates are embarrassingly parallel and are chunked
over disjoint index ranges; every value depends only on (seed, particle,
step), and the g0 reduction is a single numpy call over the full array, so
results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteState
from .model import Constraint, ModelSpec
from .parallel import run_chunked, worker_count
from .reflection import MeanEvaluator, ReflectionTracker
from .stochastics import CustomSampler, DiracPoint, NoiseRecord


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of ``steps`` intervals on [0, horizon]."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class RecordOptions:
    """What :func:`simulate` should keep beyond the summary series.

    ``snapshot_stride``: store a copy of the particle cloud every so many
    steps (memory grows as N * steps / stride). ``track_particles``: store
    the full path of these particle indices (used to couple a run against
    its exact-solution oracle).
    """

    snapshot_stride: int | None = None
    track_particles: tuple[int, ...] = ()


@dataclass
class TrajectoryRecord:
    """Per-step output of one scheme run."""

    times: np.ndarray
    k_hat: np.ndarray
    delta_k: np.ndarray
    mean_h: np.ndarray
    mean_x: np.ndarray
    var_x: np.ndarray
    tracked: dict[int, np.ndarray] = field(default_factory=dict)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    noise: NoiseRecord | None = None


class ParticleSystem:
    """State of the coupled particle arrays plus the step clock.

    Owned by a single stepping controller; `step` mutates in place. Use
    :func:`simulate` unless you need step-level control.
    """

    def __init__(
        self,
        model: ModelSpec,
        constraint: Constraint,
        grid: GridSpec,
        n_particles: int,
        seed: int,
        threads: int | None = None,
    ):
        if n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {n_particles}")
        self.model = model
        self.constraint = constraint
        self.grid = grid
        self.n_particles = n_particles
        self.seed = int(seed)
        self.threads = worker_count() if threads is None else threads
        self.noise = NoiseRecord(
            seed=self.seed,
            n_steps=grid.steps,
            n_particles=n_particles,
            jump_mean=model.intensity * grid.dt,
            jump_law=model.jump_size_law,
        )
        if isinstance(model.initial_law, DiracPoint):
            self.U = np.full(n_particles, float(model.initial_law.value))
        elif isinstance(model.initial_law, CustomSampler):
            self.U = np.asarray(
                model.initial_law.from_uniform(self.noise.initial_uniforms()),
                dtype=np.float64,
            ).copy()
        else:
            raise TypeError(
                f"unsupported initial law {type(model.initial_law).__name__}"
            )
        self.tracker = ReflectionTracker()
        self.k = 0
        evaluator = MeanEvaluator(self.U, constraint)
        self.tracker.advance(self._g0_value(evaluator))
        self.X = self.U + self.tracker.running_sup
        self._stash_stats(evaluator)

    @staticmethod
    def _g0_value(evaluator: MeanEvaluator) -> float:
        if evaluator(0.0) >= 0.0:
            return 0.0
        return max(0.0, evaluator.root())

    def _stash_stats(self, evaluator: MeanEvaluator) -> None:
        sup = self.tracker.running_sup
        self.last_mean_h = evaluator(sup)
        self.last_mean_x = evaluator.atom_mean + sup
        self.last_var_x = float(np.var(self.U))

    def _increments(self, x_prev: np.ndarray, step: int) -> np.ndarray:
        model = self.model
        noise = self.noise
        dt = self.grid.dt
        sqrt_dt = math.sqrt(dt)
        out = np.empty(self.n_particles)

        def work(lo: int, hi: int) -> None:
            x = x_prev[lo:hi]
            g = noise.gaussians(step, lo, hi)
            counts = noise.counts(step, lo, hi)
            jump = np.zeros(hi - lo)
            if counts.any():
                idx = np.arange(lo, hi)
                for j in range(int(counts.max())):
                    mask = counts > j
                    marks = noise.marks(step, idx[mask], j)
                    jump[mask] += model.jump_amplitude(x[mask], marks)
            drift_part = model.drift(x) - model.compensator(x)
            out[lo:hi] = dt * drift_part + sqrt_dt * (model.diffusion(x) * g) + jump

        run_chunked(work, self.n_particles, self.threads)
        return out

    def step(self) -> float:
        """Advance one grid step; returns the reflection increment."""
        if self.k >= self.grid.steps:
            raise ValueError(f"grid exhausted after {self.grid.steps} steps")
        step = self.k + 1
        incr = self._increments(self.X, step)
        self.U += incr
        if not np.isfinite(self.U).all():
            raise NonFiniteState(
                f"non-finite particle state at step {step} "
                f"(t={step * self.grid.dt:.6g})"
            )
        evaluator = MeanEvaluator(self.U, self.constraint)
        delta = self.tracker.advance(self._g0_value(evaluator))
        self.X = self.U + self.tracker.running_sup
        self.k = step
        self._stash_stats(evaluator)
        return delta


def simulate(
    model: ModelSpec,
    constraint: Constraint,
    grid: GridSpec,
    n_particles: int,
    seed: int,
    record: RecordOptions | None = None,
    threads: int | None = None,
) -> TrajectoryRecord:
    """Run the full scheme and collect the per-step series."""
    record = record or RecordOptions()
    system = ParticleSystem(model, constraint, grid, n_particles, seed, threads)
    n = grid.steps
    k_hat = np.empty(n + 1)
    delta_k = np.empty(n + 1)
    mean_h = np.empty(n + 1)
    mean_x = np.empty(n + 1)
    var_x = np.empty(n + 1)
    tracked = {i: np.empty(n + 1) for i in record.track_particles}
    snapshots: dict[int, np.ndarray] = {}

    def capture(k: int, delta: float) -> None:
        k_hat[k] = system.tracker.running_sup
        delta_k[k] = delta
        mean_h[k] = system.last_mean_h
        mean_x[k] = system.last_mean_x
        var_x[k] = system.last_var_x
        for i in tracked:
            tracked[i][k] = system.X[i]
        stride = record.snapshot_stride
        if stride and (k % stride == 0 or k == n):
            snapshots[k] = system.X.copy()

    capture(0, system.tracker.history[0][2])
    for k in range(1, n + 1):
        capture(k, system.step())

    return TrajectoryRecord(
        times=grid.times(),
        k_hat=k_hat,
        delta_k=delta_k,
        mean_h=mean_h,
        mean_x=mean_x,
        var_x=var_x,
        tracked=tracked,
        snapshots=snapshots,
        noise=system.noise,
    )
