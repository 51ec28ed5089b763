"""Error estimation, convergence sweeps, and constraint diagnostics.

The headline statistic is the replicated worst-grid-point squared coupling
error between a scheme particle and its exact-solution counterpart driven
by identical noise:

    E_hat = (1/L) * sum_l max_k |X_exact(T_k) - X_scheme(T_k)|^2 .

Replications use independent derived seeds; the tracked particle is fixed
at index 0 (the particles are exchangeable, and fixing the index keeps runs
reproducible). The same replication seeds are reused across sweep cells, a
common-random-numbers coupling that sharpens cell-to-cell comparisons
without touching the within-cell independence of replications.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import model as model_mod
from . import oracle as oracle_mod
from .errors import DegenerateAbscissae, ValidationError
from .model import Constraint, ModelSpec
from .parallel import map_ordered, worker_count
from .scheme import GridSpec, RecordOptions, TrajectoryRecord, simulate
from .stochastics import DiracPoint, LogNormal, derive_seed

_REPLICATION_PURPOSE = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a model, a grid/particle menu, and replication count.

    ``grid_steps`` and ``particles`` are the sweep menus consumed by
    :func:`convergence_sweep`; single-run commands use ``base_steps`` and
    ``base_particles`` (which default to the first menu entries).
    """

    case: str
    model_params: dict
    horizon: float
    grid_steps: tuple[int, ...]
    particles: tuple[int, ...]
    replications: int = 1000
    seed: int | None = None
    constraint_params: dict | None = None
    base_steps: int | None = None
    base_particles: int | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError(
                f"replications must be >= 1, got {self.replications}"
            )
        if not self.grid_steps or not self.particles:
            raise ValidationError("grid_steps and particles must be nonempty")

    def grid(self, n: int | None = None) -> GridSpec:
        return GridSpec(self.horizon, self.grid_steps[0] if n is None else n)

    def single_grid(self) -> GridSpec:
        n = self.base_steps if self.base_steps is not None else self.grid_steps[0]
        return GridSpec(self.horizon, n)

    def single_particle_count(self) -> int:
        if self.base_particles is not None:
            return self.base_particles
        return self.particles[0]

    def to_json_dict(self) -> dict:
        doc = {
            "model": {"case": self.case, **self.model_params},
            "grid": {"T": self.horizon, "n": self.single_grid().steps},
            "particles": self.single_particle_count(),
            "replications": self.replications,
        }
        if self.constraint_params is not None:
            doc["constraint"] = dict(self.constraint_params)
        if len(self.grid_steps) > 1 or len(self.particles) > 1:
            doc["sweep"] = {"n": list(self.grid_steps), "N": list(self.particles)}
        if self.seed is not None:
            doc["seed"] = self.seed
        return doc


def build_model(config: ExperimentConfig) -> tuple[ModelSpec, Constraint]:
    """Instantiate the model/constraint pair a config describes.

    Factory rejections (bad coefficients, violated initial constraint)
    surface as :class:`ValidationError` so config-driven callers can treat
    them uniformly.
    """
    p = config.model_params
    try:
        if config.case == "i":
            return model_mod.make_case_i(
                p["beta"], p["sigma"], p["eta"], p["lambda"], p["x0"], p["p"]
            )
        if config.case == "ii":
            return model_mod.make_case_ii(
                p["a"], p["gamma"], p["theta"], p["lambda"], p["x0"], p["p"]
            )
        if config.case == "iii":
            return model_mod.make_case_iii(
                p["beta"], p["a"], p["sigma"], p["eta"], p["lambda"], p["x0"],
                p["p"], p["alpha"],
            )
        if config.case == "custom":
            return _build_affine_model(p, config.constraint_params or {})
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    raise ValidationError(f"unknown case {config.case!r}")


def _build_affine_model(
    params: dict, constraint_params: dict
) -> tuple[ModelSpec, Constraint]:
    """Affine-coefficient family for declarative custom configs.

    drift = -(beta + a*x), diffusion = sigma + gamma*x, jump amplitude
    z*(eta + theta*x) with marks from a lognormal or point law. Arbitrary
    coefficient callables remain available through the Python API.
    """
    beta = float(params.get("beta", 0.0))
    a = float(params.get("a", 0.0))
    sigma = float(params.get("sigma", 0.0))
    gamma = float(params.get("gamma", 0.0))
    eta = float(params.get("eta", 0.0))
    theta = float(params.get("theta", 0.0))
    lam = float(params["lambda"])
    x0 = float(params["x0"])
    jump = params.get("jump", {"law": "dirac", "value": 1.0})
    if jump.get("law") == "lognormal":
        law = LogNormal(float(jump.get("location", 0.0)), float(jump.get("scale", 1.0)))
    elif jump.get("law") == "dirac":
        law = DiracPoint(float(jump.get("value", 1.0)))
    else:
        raise ValidationError(f"unknown jump law {jump.get('law')!r}")
    mark_mean = law.mean()
    kind = constraint_params.get("kind", "linear")
    if kind == "linear":
        constraint = model_mod.linear_constraint(float(constraint_params["p"]))
    elif kind == "sine":
        constraint = model_mod.sine_constraint(
            float(constraint_params["alpha"]), float(constraint_params["p"])
        )
    else:
        raise ValidationError(f"unknown constraint kind {kind!r}")
    spec = ModelSpec(
        drift=lambda x: -(beta + a * x),
        diffusion=lambda x: sigma + gamma * x,
        jump_amplitude=lambda x, z: z * (eta + theta * x),
        intensity=lam,
        jump_size_law=law,
        initial_law=DiracPoint(x0),
        compensator=lambda x: lam * mark_mean * (eta + theta * x),
        case="custom",
        params=dict(params),
    )
    return spec, constraint


@dataclass(frozen=True)
class ResultRow:
    n: int
    N: int
    L: int
    e_hat: float
    runtime_sec: float


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float


@dataclass
class ResultTable:
    """Sweep results ordered by (n, N), plus the log-log regressions."""

    rows: list[ResultRow] = field(default_factory=list)
    regression_in_particles: dict[int, RegressionResult] = field(default_factory=dict)
    regression_in_steps: dict[int, RegressionResult] = field(default_factory=dict)


def _coupled_error(
    model: ModelSpec,
    constraint: Constraint,
    case: str,
    grid: GridSpec,
    n_particles: int,
    seed: int,
    threads: int,
) -> float:
    traj = simulate(
        model, constraint, grid, n_particles, seed,
        record=RecordOptions(track_particles=(0,)),
        threads=threads,
    )
    if case == "i":
        path = oracle_mod.exact_case_i(traj.noise, model.params, grid, particle=0)
    elif case == "ii":
        path = oracle_mod.exact_case_ii(traj.noise, model.params, grid, particle=0)
    else:
        raise ValidationError(f"no exact coupled path for case {case!r}")
    diff = path.x_exact - traj.tracked[0]
    return float(np.max(diff * diff))


def l2_error(
    config: ExperimentConfig,
    n: int | None = None,
    n_particles: int | None = None,
    threads: int | None = None,
) -> float:
    """Replicated worst-grid-point squared coupling error for one cell."""
    if config.seed is None:
        raise ValidationError("error estimation needs an explicit seed")
    threads = worker_count() if threads is None else threads
    model, constraint = build_model(config)
    grid = config.grid(n)
    n_particles = config.particles[0] if n_particles is None else n_particles
    L = config.replications
    outer = max(1, min(threads, L))
    inner = max(1, threads // outer)
    seeds = [derive_seed(config.seed, l, _REPLICATION_PURPOSE) for l in range(L)]
    errors = map_ordered(
        lambda s: _coupled_error(
            model, constraint, config.case, grid, n_particles, s, inner
        ),
        seeds,
        threads=outer,
    )
    return float(np.mean(errors))


def loglog_fit(points: Sequence[tuple[float, float]]) -> RegressionResult:
    """Ordinary least squares of log(y) on log(x)."""
    xs = np.asarray([float(p[0]) for p in points])
    ys = np.asarray([float(p[1]) for p in points])
    if np.unique(xs).size < 2:
        raise DegenerateAbscissae(
            f"need >= 2 distinct abscissae, got {np.unique(xs).size}"
        )
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("log-log fit needs strictly positive coordinates")
    lx = np.log(xs)
    ly = np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RegressionResult(float(slope), float(intercept), r2)


def convergence_sweep(
    config: ExperimentConfig, threads: int | None = None
) -> ResultTable:
    """E_hat over the (n, N) menu plus log-log regressions along each axis."""
    table = ResultTable()
    cells = sorted(
        {(int(n), int(N)) for n in config.grid_steps for N in config.particles}
    )
    for n, n_particles in cells:
        start = time.perf_counter()
        e_hat = l2_error(config, n=n, n_particles=n_particles, threads=threads)
        table.rows.append(
            ResultRow(n, n_particles, config.replications, e_hat,
                      time.perf_counter() - start)
        )
    for n in sorted({row.n for row in table.rows}):
        pts = [(row.N, row.e_hat) for row in table.rows if row.n == n]
        if len({p[0] for p in pts}) >= 2:
            table.regression_in_particles[n] = loglog_fit(pts)
    for n_particles in sorted({row.N for row in table.rows}):
        pts = [(row.n, row.e_hat) for row in table.rows if row.N == n_particles]
        if len({p[0] for p in pts}) >= 2:
            table.regression_in_steps[n_particles] = loglog_fit(pts)
    return table


@dataclass(frozen=True)
class SkorokhodReport:
    """Discrete complementarity diagnostics of one trajectory.

    Violations are normalized by 1 + |mean X| at the step. A step counts as
    active when its reflection increment exceeds the threshold; on those
    steps the constraint mean should sit at the boundary.
    """

    worst_negative_mean_h: float
    worst_active_mean_h: float
    active_fraction: float
    active_threshold: float


def skorokhod_report(
    trajectory: TrajectoryRecord, active_threshold: float = 1e-8
) -> SkorokhodReport:
    norm = 1.0 + np.abs(trajectory.mean_x)
    worst_negative = float(np.max(np.maximum(0.0, -trajectory.mean_h / norm)))
    active = trajectory.delta_k > active_threshold
    if active.any():
        worst_active = float(np.max(np.abs(trajectory.mean_h[active]) / norm[active]))
    else:
        worst_active = 0.0
    # Step 0 holds the initial push, not a dynamic step.
    dynamic = active[1:]
    fraction = float(np.mean(dynamic)) if dynamic.size else 0.0
    return SkorokhodReport(
        worst_negative_mean_h=worst_negative,
        worst_active_mean_h=worst_active,
        active_fraction=fraction,
        active_threshold=active_threshold,
    )
