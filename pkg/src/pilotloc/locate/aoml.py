"""Alternating-optimisation ML: angle searches with Doppler fixed, then Doppler with angles fixed."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .grid import GridSpec
from .mle import fit_single_drone, mle_estimate
from .moments import PilotModel, _as_matrix
from .params import ParamVector

__all__ = ["SolverConfig", "aoml_estimate", "alternate"]


@dataclass(frozen=True)
class SolverConfig:
    """Stop when ‖β^{(z)} − β^{(z−1)}‖₂ < epsilon (degrees / 100 Hz units) or after max_iters.

    ``init_refine_levels`` is the refinement depth of the grid MLE that provides
    the starting point when none is given. On the unrefined lattice the start can
    sit far along the shallow angle–Doppler valley of a short pilot, which costs
    many alternating iterations without changing where they end.
    """

    epsilon: float = 1e-3
    max_iters: int = 50
    init_refine_levels: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.init_refine_levels < 0:
            raise ValueError("init_refine_levels must be >= 0")


def alternate(objective_fn, search_fn, init: ParamVector, solver: SolverConfig):
    """Generic alternating loop shared by AO-ML and the windowed joint detector.

    ``search_fn(params, k, phase)`` returns a SearchResult for drone k where
    phase is "angles" or "doppler"; ``objective_fn(params)`` is minimised.
    Each coordinate update is accepted only when it lowers the objective, so the
    trace is non-increasing by construction.
    """
    params = init.copy()
    best = objective_fn(params)
    trace = [(params.normalized(), best)]
    converged = False
    z = 0
    for z in range(1, solver.max_iters + 1):
        prev = params.copy()
        for phase in ("angles", "doppler"):
            for k in range(params.k):
                res = search_fn(params, k, phase)
                az, el, fd = res.point
                if phase == "angles":
                    cand = params.with_drone(k, az=math.radians(az), el=math.radians(el))
                else:
                    cand = params.with_drone(k, fd=fd)
                val = objective_fn(cand)
                if val < best:
                    params, best = cand, val
        trace.append((params.normalized(), best))
        if params.distance(prev) < solver.epsilon:
            converged = True
            break
    params.info.update(iterations=z, converged=converged, objective=best,
                       trace_objective=[t[1] for t in trace],
                       trace_params=[t[0] for t in trace])
    return params


def aoml_estimate(observations, model: PilotModel, grid: GridSpec | None = None,
                  solver: SolverConfig | None = None, init: ParamVector | None = None,
                  weighting: str = "none") -> ParamVector:
    """AO-ML estimate with its iteration trace in ``info``.

    Without ``init`` the starting point is the grid MLE refined to
    ``solver.init_refine_levels`` levels.
    ``info["iterations"]`` is the iteration at which the ε test first passed
    (or max_iters), ``info["trace_objective"]`` starts with the initial value.
    """
    grid = grid or GridSpec()
    solver = solver or SolverConfig()
    y = _as_matrix(observations, model)
    if init is None:
        levels = min(solver.init_refine_levels, grid.refine_levels)
        init = mle_estimate(y, model, replace(grid, refine_levels=levels), weighting=weighting)
    if init.k != model.k:
        raise ValueError("init has the wrong number of drones")

    def objective_fn(p):
        if weighting == "gamma":
            return model.weighted_objective(y, p)
        return model.objective(y, p)

    def search_fn(p, k, phase):
        az, el, fd = p.drone(k)
        fixed = (None, None, fd) if phase == "angles" else (math.degrees(az), math.degrees(el), None)
        return fit_single_drone(model, y, p, k, grid, fixed=fixed, weighting=weighting)

    out = alternate(objective_fn, search_fn, init, solver)
    if not out.info["converged"]:
        out.info["warning"] = "AO-ML hit max_iters before the epsilon test passed"
    return out
