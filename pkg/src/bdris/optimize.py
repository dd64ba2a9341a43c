"""Two-stage link optimization: surface tuning, then power allocation.

Stage 1 maximizes the sum channel gain over the center susceptances, a
surrogate justified by Jensen's inequality under uniform power.  The
continuous solver removes the box constraint with a smooth squashing map
and runs a BFGS ascent; the discrete solver sweeps blocks of quantized
susceptances greedily over a codebook.  Stage 2 water-fills the transmit
power over the resulting per-subcarrier channels.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .channel import AdmittanceChannels
from .circuit import LinearSusceptanceModel, flat_model
from .network import (
    QuantizedSet,
    RisTopology,
    port_map_tensor,
    validate_center_susceptances,
)

# Stationarity threshold: gradient infinity norm relative to |objective|.
GRAD_TOL_SCALE = 1e-9

# Backtracking line search constants.
ARMIJO_SLOPE = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_BACKTRACKS = 60

# Fraction of the susceptance box covered by random restart draws.
RESTART_BOX_COVER = 0.95

# Relative budget tolerance of the water-filling bisection.
BUDGET_TOL = 1e-10


class SolverFailure(RuntimeError):
    """No restart of the continuous solver produced a finite objective."""


class EnumerationCeilingError(ValueError):
    """Discrete codebook too large to enumerate."""


class AllZeroChannelError(ValueError):
    """Water-filling asked to allocate power over identically zero channels."""


@dataclass(frozen=True)
class ContinuousSolverConfig:
    """Settings of the quasi-Newton stage-1 solver."""

    max_iterations: int = 500
    gradient_step: float | None = None  # siemens; default 1e-6 * box width
    convergence_tol: float = 1e-8
    restarts: int = 1

    def __post_init__(self):
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("iteration and restart counts must be positive")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.gradient_step is not None and self.gradient_step <= 0:
            raise ValueError("gradient_step must be positive")


@dataclass(frozen=True)
class GreedyConfig:
    """Settings of the discrete block-greedy stage-1 solver."""

    block_size: int
    quantization: QuantizedSet
    max_sweeps: int = 30
    enumeration_ceiling: int = 2**20

    def __post_init__(self):
        if self.block_size < 1 or self.max_sweeps < 1:
            raise ValueError("block_size and max_sweeps must be positive")


@dataclass(frozen=True)
class PowerAllocation:
    """Per-subcarrier transmit powers, their budget, and the noise power."""

    p: np.ndarray
    power: float
    sigma2: float
    water_level: float


@dataclass(frozen=True)
class RunResult:
    """Everything produced by one two-stage run."""

    values: np.ndarray
    sum_gain: float
    channels: np.ndarray
    allocation: PowerAllocation
    rate: float
    iterations: int
    mode: str


@dataclass(frozen=True)
class FlatDesignResult:
    """Frequency-independent benchmark: one matrix designed, true channels scored."""

    values: np.ndarray
    y_flat: np.ndarray
    channels: np.ndarray
    allocation: PowerAllocation
    rate: float
    flat_objective: float
    iterations: int


@dataclass
class SumGainProblem:
    """Sum-channel-gain objective over packed center susceptances.

    Holds the admittance-form channels, the surface topology, and the
    fitted frequency model; precomputes the per-group port map and the
    grouped channel vectors so objective and gradient evaluations reduce
    to batched group-size linear solves.
    """

    adm: AdmittanceChannels
    topology: RisTopology
    model: LinearSusceptanceModel
    omegas: np.ndarray
    _tensor: np.ndarray = field(init=False, repr=False)
    _drift: np.ndarray = field(init=False, repr=False)
    _f1: np.ndarray = field(init=False, repr=False)
    _f2: np.ndarray = field(init=False, repr=False)
    _y_ri: np.ndarray = field(init=False, repr=False)
    _y_it: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        n = self.omegas.size
        if self.adm.y_rt.shape != (n,):
            raise ValueError("channel count does not match the frequency grid")
        if self.adm.y_ri.shape[1] != self.topology.elements:
            raise ValueError("channel element count does not match the topology")
        g, mb = self.topology.group_count, self.topology.group_size
        self._tensor = port_map_tensor(self.topology)
        self._drift = self._tensor.sum(axis=2)
        self._f1 = self.model.f1(self.omegas)
        self._f2 = self.model.f2(self.omegas)
        self._y_ri = self.adm.y_ri.reshape(n, g, mb)
        self._y_it = self.adm.y_it.reshape(n, g, mb)

    @property
    def subcarriers(self) -> int:
        return self.omegas.size

    def _system_matrices(self, grouped: np.ndarray, groups=None) -> np.ndarray:
        """(y0*I + j*B_gn) for the selected groups; shape (n, |groups|, mb, mb)."""
        sel = grouped if groups is None else grouped[groups]
        base = np.einsum("ijl,...gl->...gij", self._tensor, sel)
        blocks = (
            self._f1[:, None, None, None] * base[None, ...]
            + self._f2[:, None, None, None] * self._drift
        )
        eye = np.eye(self.topology.group_size)
        return self.adm.y0 * eye + 1j * blocks

    def group_terms(self, values: np.ndarray, groups=None) -> np.ndarray:
        """Per-group through-surface terms y_ri (Y+y0 I)^-1 y_it, shape (n, G)."""
        grouped = np.asarray(values, float).reshape(
            self.topology.group_count, self.topology.variables_per_group
        )
        a = self._system_matrices(grouped, groups)
        y_ri = self._y_ri if groups is None else self._y_ri[:, groups]
        y_it = self._y_it if groups is None else self._y_it[:, groups]
        sol = np.linalg.solve(a, y_it[..., None])[..., 0]
        return np.einsum("ngi,ngi->ng", y_ri, sol)

    def residuals(self, values: np.ndarray) -> np.ndarray:
        """Per-subcarrier e_n = -y_rt_n + sum_g (through-surface terms)."""
        return -self.adm.y_rt + self.group_terms(values).sum(axis=1)

    def channels(self, values: np.ndarray) -> np.ndarray:
        """Effective per-subcarrier channels h_n for this configuration."""
        return self.residuals(values) / (2 * self.adm.y0)

    def objective(self, values: np.ndarray) -> float:
        """Sum channel gain surrogate, scaled by (2*y0)^2: sum_n |e_n|^2."""
        e = self.residuals(values)
        return float(np.sum(np.abs(e) ** 2))

    def objective_and_gradient(self, values: np.ndarray) -> tuple[float, np.ndarray]:
        """Objective plus its analytic gradient with respect to the packed values.

        Uses d(A^-1)/dt = -A^-1 (dA/dt) A^-1 with the symmetric system
        matrix, so one extra solve against y_ri yields every partial.
        """
        topo = self.topology
        grouped = np.asarray(values, float).reshape(
            topo.group_count, topo.variables_per_group
        )
        a = self._system_matrices(grouped)
        rhs = np.stack([self._y_it, self._y_ri], axis=-1)
        sol = np.linalg.solve(a, rhs)
        v = sol[..., 0]
        u = sol[..., 1]
        e = -self.adm.y_rt + np.einsum("ngi,ngi->n", self._y_ri, v)
        w = np.einsum("ijl,ngi,ngj->ngl", self._tensor, u, v)
        coeff = -1j * np.conj(e)[:, None, None] * self._f1[:, None, None]
        grad = 2 * np.real(coeff * w).sum(axis=0)
        return float(np.sum(np.abs(e) ** 2)), grad.reshape(-1)


def sum_gain(problem: SumGainProblem, values: np.ndarray) -> float:
    """Sum channel gain of a packed susceptance vector (validated against the box)."""
    validate_center_susceptances(problem.topology, values, problem.model)
    return problem.objective(values)


def box_map(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Smooth bijection from unconstrained reals onto the open box (lo, hi)."""
    half = (hi - lo) / 2
    mid = (hi + lo) / 2
    x = np.asarray(x, dtype=float)
    return x / np.sqrt((x / half) ** 2 + 1) + mid


def box_map_inverse(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Inverse of box_map on the interior of the box."""
    half = (hi - lo) / 2
    mid = (hi + lo) / 2
    u = (np.asarray(values, dtype=float) - mid) / half
    if np.any(np.abs(u) >= 1):
        raise ValueError("values on or outside the box boundary have no preimage")
    return half * u / np.sqrt(1 - u * u)


def _finite_difference_gradient(fun, x: np.ndarray, step: float) -> np.ndarray:
    grad = np.empty_like(x)
    for i in range(x.size):
        bumped = x.copy()
        bumped[i] = x[i] + step
        hi = fun(bumped)
        bumped[i] = x[i] - step
        lo = fun(bumped)
        grad[i] = (hi - lo) / (2 * step)
    return grad


def _bfgs_ascent(fun_and_grad, x0, max_iterations, convergence_tol):
    """Maximize via BFGS with an inverse-curvature update and Armijo backtracking.

    Returns (x, objective, gradient_inf_norm, iterations).  Accepted steps
    never decrease the objective.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_and_grad(x)
    if not np.isfinite(f):
        raise SolverFailure(f"objective not finite at the starting point: {f}")
    scale = abs(f) if f != 0 else 1.0
    dim = x.size
    h = np.eye(dim)
    eye = np.eye(dim)
    iterations = 0
    tiny = np.finfo(float).tiny

    for it in range(1, max_iterations + 1):
        if np.max(np.abs(g)) <= GRAD_TOL_SCALE * max(abs(f), tiny):
            break
        g_scaled = -g / scale
        direction = -h @ g_scaled
        slope = direction @ g_scaled
        if slope >= 0:  # curvature estimate unusable; fall back to steepest ascent
            h = np.eye(dim)
            direction = -g_scaled
            slope = -(g_scaled @ g_scaled)
        alpha = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = x + alpha * direction
            f_new, g_new = fun_and_grad(x_new)
            if np.isfinite(f_new) and (
                -f_new / scale <= -f / scale + ARMIJO_SLOPE * alpha * slope
            ):
                accepted = True
                break
            alpha *= BACKTRACK_FACTOR
        if not accepted:
            break
        iterations = it
        improvement = (f_new - f) / max(abs(f), tiny)
        s = x_new - x
        y_vec = (-g_new / scale) - (-g / scale)
        x, f, g = x_new, f_new, g_new
        sy = s @ y_vec
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y_vec):
            if it == 1:
                h = eye * (sy / (y_vec @ y_vec))
            rho = 1.0 / sy
            left = eye - rho * np.outer(s, y_vec)
            h = left @ h @ left.T + rho * np.outer(s, s)
        if improvement < convergence_tol:
            break
    return x, f, float(np.max(np.abs(g))), iterations


def solve_continuous(
    problem: SumGainProblem,
    config: ContinuousSolverConfig,
    seed: int,
    analytic_gradient: bool = True,
):
    """Stage-1 continuous solve; returns (values, objective, iterations).

    The box constraint is removed by composing the objective with box_map;
    the first restart starts at the box midpoint (x = 0) and the remaining
    ones at seeded random points covering most of the box.  The gradient
    is analytic by default, central finite differences otherwise.
    """
    lo = problem.model.susceptance_min
    hi = problem.model.susceptance_max
    half = (hi - lo) / 2
    step = config.gradient_step or 1e-6 * (hi - lo)

    def composite(x):
        b = box_map(x, lo, hi)
        jac = (1.0 + (x / half) ** 2) ** -1.5
        if analytic_gradient:
            f, grad_b = problem.objective_and_gradient(b)
        else:
            f = problem.objective(b)
            grad_b = _finite_difference_gradient(problem.objective, b, step)
        return f, grad_b * jac

    rng = np.random.default_rng(seed)
    dim = problem.topology.variable_count
    starts = [np.zeros(dim)]
    for _ in range(config.restarts - 1):
        u = rng.uniform(-RESTART_BOX_COVER, RESTART_BOX_COVER, dim)
        starts.append(half * u / np.sqrt(1 - u * u))

    best = None
    failures = []
    for x0 in starts:
        try:
            x, f, _, iters = _bfgs_ascent(
                composite, x0, config.max_iterations, config.convergence_tol
            )
        except SolverFailure as exc:
            failures.append(str(exc))
            continue
        if best is None or f > best[1]:
            best = (x, f, iters)
    if best is None:
        raise SolverFailure("all restarts failed: " + "; ".join(failures))
    x, f, iters = best
    return box_map(x, lo, hi), f, iters


def solve_discrete_greedy(problem: SumGainProblem, config: GreedyConfig, seed: int):
    """Stage-1 discrete solve; returns (values, objective, sweeps).

    Blocks of block_size variables are visited in fixed ascending order;
    each visit enumerates the full codebook for that block with the others
    held fixed and keeps the incumbent on ties.  Stops after a sweep with
    no change or at max_sweeps.
    """
    topo = problem.topology
    levels = config.quantization.levels
    n_vars = topo.variable_count
    if n_vars % config.block_size != 0:
        raise ValueError(
            f"block size {config.block_size} must divide {n_vars} variables"
        )
    n_codes = len(levels) ** config.block_size
    if n_codes > config.enumeration_ceiling:
        raise EnumerationCeilingError(
            f"codebook of {n_codes} exceeds ceiling {config.enumeration_ceiling}"
        )
    codebook = np.array(list(itertools.product(levels, repeat=config.block_size)))
    n_blocks = n_vars // config.block_size
    per_group = topo.variables_per_group

    rng = np.random.default_rng(seed)
    values = codebook[rng.integers(n_codes, size=n_blocks)].reshape(-1)

    terms = problem.group_terms(values)
    e = -problem.adm.y_rt + terms.sum(axis=1)
    best_f = float(np.sum(np.abs(e) ** 2))

    sweeps = 0
    for _ in range(config.max_sweeps):
        sweeps += 1
        changed = False
        for blk in range(n_blocks):
            var_lo = blk * config.block_size
            var_hi = var_lo + config.block_size
            groups = np.unique(np.arange(var_lo, var_hi) // per_group)
            base_e = e - terms[:, groups].sum(axis=1)

            grouped = values.reshape(topo.group_count, per_group)
            cand = np.broadcast_to(
                grouped[groups], (n_codes,) + grouped[groups].shape
            ).copy()
            rows = np.arange(var_lo, var_hi) // per_group
            cols = np.arange(var_lo, var_hi) % per_group
            local = np.searchsorted(groups, rows)
            cand[:, local, cols] = codebook

            base = np.einsum("ijl,cgl->cgij", problem._tensor, cand)
            blocks = (
                problem._f1[:, None, None, None, None] * base[None]
                + problem._f2[:, None, None, None, None] * problem._drift
            )
            eye = np.eye(topo.group_size)
            a = problem.adm.y0 * eye + 1j * blocks
            rhs = problem._y_it[:, None, groups, :, None]
            sol = np.linalg.solve(a, rhs)[..., 0]
            t_cand = np.einsum("ngi,ncgi->ncg", problem._y_ri[:, groups], sol)
            e_cand = base_e[:, None] + t_cand.sum(axis=2)
            f_cand = np.sum(np.abs(e_cand) ** 2, axis=0)

            incumbent = np.flatnonzero(
                np.all(codebook == values[var_lo:var_hi], axis=1)
            )[0]
            choice = int(np.argmax(f_cand))
            if f_cand[choice] > f_cand[incumbent]:
                values[var_lo:var_hi] = codebook[choice]
                terms[:, groups] = t_cand[:, choice]
                e = e_cand[:, choice]
                best_f = float(f_cand[choice])
                changed = True
        if not changed:
            break
    return values, best_f, sweeps


def water_filling(h: np.ndarray, power: float, sigma2: float) -> PowerAllocation:
    """Classic water-filling by bisection on the water level.

    p_n = max(0, mu - sigma2/|h_n|^2), with mu set so the powers sum to
    the budget within a 1e-10 relative tolerance; zero channels get zero
    power.
    """
    if power < 0:
        raise ValueError("power budget must be nonnegative")
    if sigma2 <= 0:
        raise ValueError("noise power must be positive")
    h = np.asarray(h)
    gains = np.abs(h) ** 2
    active = gains > 0
    if not np.any(active):
        raise AllZeroChannelError("no nonzero channel to allocate power on")
    p = np.zeros(h.shape[0])
    if power == 0:
        return PowerAllocation(p=p, power=0.0, sigma2=sigma2, water_level=0.0)
    inv = sigma2 / gains[active]
    lo, hi = 0.0, power + float(inv.max())
    mu = hi
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        total = np.sum(np.maximum(0.0, mu - inv))
        if abs(total - power) <= BUDGET_TOL * power:
            break
        if total > power:
            hi = mu
        else:
            lo = mu
    p[active] = np.maximum(0.0, mu - inv)
    return PowerAllocation(p=p, power=power, sigma2=sigma2, water_level=mu)


def average_rate(h: np.ndarray, alloc: PowerAllocation) -> float:
    """Mean spectral efficiency (1/N) sum_n log2(1 + p_n |h_n|^2 / sigma2)."""
    snr = alloc.p * np.abs(h) ** 2 / alloc.sigma2
    return float(np.mean(np.log1p(snr)) / np.log(2))


def jensen_upper_bound(h: np.ndarray, power: float, sigma2: float) -> float:
    """Rate bound from pushing uniform power through the mean channel gain."""
    mean_gain = float(np.mean(np.abs(h) ** 2))
    return float(np.log1p((power / h.shape[0]) * mean_gain / sigma2) / np.log(2))


def two_stage_pipeline(
    problem: SumGainProblem,
    power: float,
    sigma2: float,
    seed: int,
    mode: str = "continuous",
    solver_config: ContinuousSolverConfig | None = None,
    greedy_config: GreedyConfig | None = None,
) -> RunResult:
    """Stage 1 (sum-gain maximization) followed by stage 2 (water-filling)."""
    if mode == "continuous":
        cfg = solver_config or ContinuousSolverConfig()
        values, objective, iterations = solve_continuous(problem, cfg, seed)
    elif mode == "discrete":
        if greedy_config is None:
            raise ValueError("discrete mode requires a GreedyConfig")
        values, objective, iterations = solve_discrete_greedy(
            problem, greedy_config, seed
        )
    else:
        raise ValueError(f"unknown mode {mode!r}")
    h = problem.channels(values)
    alloc = water_filling(h, power, sigma2)
    return RunResult(
        values=values,
        sum_gain=objective,
        channels=h,
        allocation=alloc,
        rate=average_rate(h, alloc),
        iterations=iterations,
        mode=mode,
    )


def solve_frequency_independent(
    problem: SumGainProblem,
    power: float,
    sigma2: float,
    seed: int,
    mode: str = "continuous",
    solver_config: ContinuousSolverConfig | None = None,
    greedy_config: GreedyConfig | None = None,
) -> FlatDesignResult:
    """Benchmark that tunes one frequency-flat matrix, scored on true channels.

    The solver sees F1 = 1, F2 = 0 (every subcarrier shares one admittance
    matrix); the resulting susceptances are then pushed through the true
    frequency model to get the channels that are actually realized, and
    power is water-filled on those.
    """
    flat_problem = SumGainProblem(
        adm=problem.adm,
        topology=problem.topology,
        model=flat_model(problem.model),
        omegas=problem.omegas,
    )
    if mode == "continuous":
        cfg = solver_config or ContinuousSolverConfig()
        values, flat_obj, iterations = solve_continuous(flat_problem, cfg, seed)
    elif mode == "discrete":
        if greedy_config is None:
            raise ValueError("discrete mode requires a GreedyConfig")
        values, flat_obj, iterations = solve_discrete_greedy(
            flat_problem, greedy_config, seed
        )
    else:
        raise ValueError(f"unknown mode {mode!r}")

    mb = problem.topology.group_size
    grouped = values.reshape(problem.topology.group_count, -1)
    tensor = port_map_tensor(problem.topology)
    m = problem.topology.elements
    y_flat = np.zeros((m, m), dtype=complex)
    for g in range(problem.topology.group_count):
        sl = slice(g * mb, (g + 1) * mb)
        y_flat[sl, sl] = 1j * np.einsum("ijl,l->ij", tensor, grouped[g])

    h_true = problem.channels(values)
    alloc = water_filling(h_true, power, sigma2)
    return FlatDesignResult(
        values=values,
        y_flat=y_flat,
        channels=h_true,
        allocation=alloc,
        rate=average_rate(h_true, alloc),
        flat_objective=flat_obj,
        iterations=iterations,
    )
