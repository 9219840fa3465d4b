"""Platform-side pricing: payoff derivatives and equilibrium solver.

Because each user's best response depends only on its own price, the
platform payoff U(p) = utility_scale * ln(b(p)) - p.x*(p) with
b = 1 + sum ln(1 + x*_n) is smooth on the price box
[threshold_n, own_value_n]^N and strictly concave there for admitted
demand laws.  The solver runs projected gradient ascent with Armijo
backtracking, scaled per coordinate by the analytic curvature so badly
conditioned boxes (tiny own_value - unit_cost margins) converge inside
the iteration budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .follower import best_response, price_threshold
from .model import AllocationProfile, PriceProfile, Scenario, mu_payoff

__all__ = [
    "SolverConfig",
    "EquilibriumResult",
    "price_box",
    "sp_payoff_gradient",
    "sp_payoff_hessian",
    "solve_optimal_prices",
    "compute_se",
]

_BOX_SLACK = 1e-9
_HESSIAN_FACE_MARGIN = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule, iteration budget and line-search constants."""

    tol: float = 1e-8
    max_iters: int = 20000
    n_starts: int = 5
    step_init: float = 1.0
    step_shrink: float = 0.5
    armijo_slope: float = 1e-4
    record_trace: bool = False

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1 or self.n_starts < 1:
            raise ValueError("max_iters and n_starts must be at least 1")
        if not 0.0 < self.step_shrink < 1.0:
            raise ValueError("step_shrink must lie in (0, 1)")
        if not 0.0 < self.armijo_slope < 1.0:
            raise ValueError("armijo_slope must lie in (0, 1)")


@dataclass(frozen=True)
class EquilibriumResult:
    """Solved leader prices with the induced follower responses."""

    prices: PriceProfile
    allocations: AllocationProfile
    sp_payoff: float
    mu_payoffs: np.ndarray
    iterations: int
    grad_residual: float
    multistart_spread: float
    converged: bool
    objective_trace: tuple[float, ...] | None = None


def price_box(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-user price bounds [threshold_n, own_value_n].

    Prices below the threshold buy nothing and prices above own_value
    overpay for capacity the user would sell anyway, so the optimum
    always lies in this box.
    """
    lo = np.array([price_threshold(mu) for mu in scenario.mus])
    hi = scenario.own_values()
    return lo, hi


def _check_admissible(scenario: Scenario) -> None:
    for i, mu in enumerate(scenario.mus):
        if not mu.demand.admissible():
            raise ValueError(
                f"mu {i}: demand law {mu.demand.kind!r} is not admitted for "
                "equilibrium solving (needs a non-increasing density, positive below hi)"
            )


def _responses(scenario: Scenario, p: np.ndarray):
    n = scenario.n
    alloc = np.empty(n)
    slope = np.empty(n)
    curv = np.empty(n)
    for i, mu in enumerate(scenario.mus):
        br = best_response(mu, float(p[i]))
        alloc[i] = br.allocation
        slope[i] = br.slope
        curv[i] = br.curvature
    return alloc, slope, curv


def _require_in_box(scenario: Scenario, p: np.ndarray) -> np.ndarray:
    lo, hi = price_box(scenario)
    if p.shape != lo.shape:
        raise ValueError(f"price vector must have {lo.size} entries, got {p.size}")
    if np.any(p < lo - _BOX_SLACK) or np.any(p > hi + _BOX_SLACK):
        raise ValueError("price vector lies outside the [threshold, own_value] box")
    return np.clip(p, lo, hi)


def _gradient_from(scenario, p, alloc, slope):
    b = 1.0 + float(np.sum(np.log1p(alloc)))
    gp = scenario.utility_scale / b
    return gp * slope / (1.0 + alloc) - p * slope - alloc


def _hessian_diag_from(scenario, p, alloc, slope, curv):
    b = 1.0 + float(np.sum(np.log1p(alloc)))
    gp = scenario.utility_scale / b
    gpp = -scenario.utility_scale / (b * b)
    opx = 1.0 + alloc
    return (gpp - gp) / opx**2 * slope**2 - 2.0 * slope + (gp / opx - p) * curv


def sp_payoff_gradient(scenario: Scenario, p) -> np.ndarray:
    """Analytic gradient of the platform payoff on the price box."""
    pa = np.asarray(getattr(p, "values", p), dtype=float)
    pa = _require_in_box(scenario, pa)
    alloc, slope, _ = _responses(scenario, pa)
    return _gradient_from(scenario, pa, alloc, slope)


def sp_payoff_hessian(scenario: Scenario, p) -> np.ndarray:
    """Analytic Hessian of the platform payoff, strict box interior only.

    The cross terms couple users solely through the aggregate index, so
    the off-diagonal is a rank-one profile; the diagonal carries the
    own-price curvature.  Symmetric and negative definite for admitted
    demand laws.
    """
    pa = np.asarray(getattr(p, "values", p), dtype=float)
    lo, hi = price_box(scenario)
    if pa.shape != lo.shape:
        raise ValueError(f"price vector must have {lo.size} entries, got {pa.size}")
    if np.any(pa < lo + _HESSIAN_FACE_MARGIN) or np.any(pa > hi - _HESSIAN_FACE_MARGIN):
        raise ValueError("hessian is only evaluated strictly inside the price box")
    alloc, slope, curv = _responses(scenario, pa)
    b = 1.0 + float(np.sum(np.log1p(alloc)))
    gpp = -scenario.utility_scale / (b * b)
    q = slope / (1.0 + alloc)
    hess = gpp * np.outer(q, q)
    np.fill_diagonal(hess, _hessian_diag_from(scenario, pa, alloc, slope, curv))
    return hess


def _objective(scenario: Scenario, p: np.ndarray) -> float:
    alloc, _, _ = _responses(scenario, p)
    b = 1.0 + float(np.sum(np.log1p(alloc)))
    return scenario.utility_scale * math.log(b) - float(p @ alloc)


def _grad_and_residual(scenario, p, lo, hi):
    alloc, slope, curv = _responses(scenario, p)
    grad = _gradient_from(scenario, p, alloc, slope)
    residual = float(np.max(np.abs(p - np.clip(p + grad, lo, hi))))
    diag = _hessian_diag_from(scenario, p, alloc, slope, curv)
    return grad, residual, diag


_POLISH_BUDGET = 100


def _ascend(scenario, p0, lo, hi, cfg: SolverConfig):
    """One projected ascent run.  Returns (p, payoff, iters, residual, ok, trace).

    The Armijo phase certifies ascent through objective comparisons and
    carries all global progress.  Near the optimum the remaining payoff
    gain drops below float64 resolution while the gradient is still
    readable, so a short damped diagonal-Newton polish that backtracks
    on the projected-gradient residual finishes the last decades.
    """
    p = np.clip(p0, lo, hi)
    payoff = _objective(scenario, p)
    trace = [payoff] if cfg.record_trace else None
    converged = False
    iters = 0
    grad, residual, diag = _grad_and_residual(scenario, p, lo, hi)
    while iters < cfg.max_iters:
        if residual <= cfg.tol:
            converged = True
            break
        iters += 1
        direction = grad / np.maximum(np.abs(diag), 1e-12)
        step = cfg.step_init
        moved = False
        while step > 1e-18:
            cand = np.clip(p + step * direction, lo, hi)
            gain_linear = float(grad @ (cand - p))
            if gain_linear <= 0.0:
                # every still-free coordinate is blocked at a face
                break
            cand_payoff = _objective(scenario, cand)
            if cand_payoff >= payoff + cfg.armijo_slope * gain_linear:
                p, payoff = cand, cand_payoff
                moved = True
                break
            step *= cfg.step_shrink
        if not moved:
            break
        if cfg.record_trace:
            trace.append(payoff)
        grad, residual, diag = _grad_and_residual(scenario, p, lo, hi)
    for _ in range(_POLISH_BUDGET):
        if converged or residual <= cfg.tol or iters >= cfg.max_iters:
            converged = converged or residual <= cfg.tol
            break
        iters += 1
        direction = grad / np.maximum(np.abs(diag), 1e-12)
        damping = 1.0
        improved = False
        while damping > 1e-12:
            cand = np.clip(p + damping * direction, lo, hi)
            cand_grad, cand_residual, cand_diag = _grad_and_residual(scenario, cand, lo, hi)
            if cand_residual < residual:
                p, grad, residual, diag = cand, cand_grad, cand_residual, cand_diag
                improved = True
                break
            damping *= 0.5
        if not improved:
            break
    converged = converged or residual <= cfg.tol
    return p, _objective(scenario, p), iters, residual, converged, trace


def solve_optimal_prices(scenario: Scenario, config: SolverConfig | None = None) -> EquilibriumResult:
    """Maximize the platform payoff over the price box.

    Runs n_starts independent ascents from prices drawn uniformly in
    the box (seeded by scenario.seed plus the start index) and keeps the
    best payoff, ties broken by the lower start index.  converged is
    True only when every start met the tolerance; otherwise the result
    still carries the best iterate and its residual.
    """
    cfg = config or SolverConfig()
    _check_admissible(scenario)
    lo, hi = price_box(scenario)
    runs = []
    for k in range(cfg.n_starts):
        rng = np.random.Generator(np.random.PCG64((scenario.seed + k) % 2**64))
        p0 = lo + rng.uniform(0.0, 1.0, size=scenario.n) * (hi - lo)
        runs.append(_ascend(scenario, p0, lo, hi, cfg))
    finals = np.array([r[0] for r in runs])
    spread = 0.0
    for a in range(len(runs)):
        for b in range(a + 1, len(runs)):
            spread = max(spread, float(np.max(np.abs(finals[a] - finals[b]))))
    order = sorted(range(len(runs)), key=lambda k: (-runs[k][1], k))
    p_best, payoff, iters, residual, _, trace = runs[order[0]]
    all_ok = all(r[4] for r in runs)
    alloc, _, _ = _responses(scenario, p_best)
    payoffs = np.array([
        mu_payoff(mu, float(alloc[i]), float(p_best[i])) for i, mu in enumerate(scenario.mus)
    ])
    return EquilibriumResult(
        prices=PriceProfile(p_best),
        allocations=AllocationProfile(alloc),
        sp_payoff=payoff,
        mu_payoffs=payoffs,
        iterations=iters,
        grad_residual=residual,
        multistart_spread=spread,
        converged=all_ok,
        objective_trace=tuple(trace) if trace is not None else None,
    )


def compute_se(scenario: Scenario, config: SolverConfig | None = None) -> EquilibriumResult:
    """Stackelberg equilibrium: solved prices plus follower responses.

    Prices of users left at zero allocation are reported canonically at
    their threshold, which is where the solver's lower box face sits.
    """
    res = solve_optimal_prices(scenario, config)
    p = res.prices.values.copy()
    lo, _ = price_box(scenario)
    snap = res.allocations.values <= 1e-12
    p[snap] = lo[snap]
    alloc, _, _ = _responses(scenario, p)
    payoffs = np.array([
        mu_payoff(mu, float(alloc[i]), float(p[i])) for i, mu in enumerate(scenario.mus)
    ])
    return EquilibriumResult(
        prices=PriceProfile(p),
        allocations=AllocationProfile(alloc),
        sp_payoff=_objective(scenario, p),
        mu_payoffs=payoffs,
        iterations=res.iterations,
        grad_residual=res.grad_residual,
        multistart_spread=res.multistart_spread,
        converged=res.converged,
        objective_trace=res.objective_trace,
    )
