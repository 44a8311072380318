"""Forward solver for the coupled bulk/surface phase-field system.

One implicit Euler step solves the coupled nonlinear system

    (y+ - y)/dt + L_bulk y+ + f'(y+) = u      at interior nodes,
    (yG+ - yG)/dt + L_surf yG+ + B_flux y+ + g'(yG+) = uG   at boundary nodes,

with a single unknown vector over all bulk nodes (the boundary trace is
the restriction of that vector, so the trace identity holds by
construction). Newton with interval-preserving damping solves each step;
the logarithmic derivative pushes iterates away from 0 and 1, so the
damped iteration stays inside the guarded interval without projections.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BoundsViolationWarning,
    DimensionMismatchError,
    DomainError,
    SolverFailureError,
)
from .geometry import inner_product_bulk, inner_product_surf

NEWTON_TOL = 1e-11
MAX_NEWTON = 50
MAX_DAMPING = 30


@dataclass
class FieldPair:
    """A bulk scalar field whose boundary trace is shared storage.

    Attributes:
        bulk: (N,) values at all bulk nodes.
        grid: owning grid (provides the boundary cycle).
    """

    bulk: np.ndarray
    grid: object

    def __post_init__(self):
        self.bulk = np.asarray(self.bulk, dtype=float)
        if self.bulk.shape != (self.grid.num_nodes,):
            raise DimensionMismatchError(
                f"field needs shape ({self.grid.num_nodes},), got {self.bulk.shape}"
            )

    @property
    def surface(self):
        """Boundary trace, ordered along the cycle."""
        return self.bulk[self.grid.boundary_cycle]


@dataclass
class ControlPair:
    """Distributed and boundary controls, stored independently.

    The surface control is not a trace of the bulk control. Shapes are
    (m+1, N) and (m+1, 4n): one row per time level.
    """

    bulk: np.ndarray
    surface: np.ndarray

    def __post_init__(self):
        self.bulk = np.asarray(self.bulk, dtype=float)
        self.surface = np.asarray(self.surface, dtype=float)
        if self.bulk.ndim != 2 or self.surface.ndim != 2 or self.bulk.shape[0] != self.surface.shape[0]:
            raise DimensionMismatchError(
                f"control pair needs matching (levels, nodes) arrays, got {self.bulk.shape} and {self.surface.shape}"
            )

    def copy(self):
        return ControlPair(self.bulk.copy(), self.surface.copy())

    @classmethod
    def zeros(cls, grid, time):
        return cls(
            np.zeros((time.m + 1, grid.num_nodes)),
            np.zeros((time.m + 1, grid.num_boundary)),
        )


@dataclass
class Trajectory:
    """Time-indexed snapshots of a coupled field.

    values has shape (m+1, N); the surface trajectory is the restriction
    to the boundary cycle.
    """

    values: np.ndarray
    grid: object
    time: object
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.time.m + 1, self.grid.num_nodes)
        if self.values.shape != expected:
            raise DimensionMismatchError(
                f"trajectory needs shape {expected}, got {self.values.shape}"
            )

    @property
    def surface(self):
        return self.values[:, self.grid.boundary_cycle]

    def snapshot(self, k):
        return FieldPair(self.values[k], self.grid)

    @property
    def terminal(self):
        return self.snapshot(self.time.m)


def slot_fields(grid, bulk_values, surface_values):
    """Combine interior-slot and boundary-slot data into one equation vector."""
    out = np.zeros(grid.num_nodes)
    out[grid.interior_nodes] = bulk_values[grid.interior_nodes]
    out[grid.boundary_cycle] = surface_values
    return out


def _nonlinearity(grid, pf, pg, z, order):
    """f-derivative at interior slots, g-derivative at boundary slots."""
    out = np.zeros(grid.num_nodes)
    out[grid.interior_nodes] = np.asarray(pf._eval(order, pf._prepare(z[grid.interior_nodes])))
    out[grid.boundary_cycle] = np.asarray(pg._eval(order, pg._prepare(z[grid.boundary_cycle])))
    return out


def _interval(pf, pg):
    lo = max(pf.eps_guard if pf.is_singular else -np.inf, pg.eps_guard if pg.is_singular else -np.inf)
    hi = min(1 - pf.eps_guard if pf.is_singular else np.inf, 1 - pg.eps_guard if pg.is_singular else np.inf)
    return lo, hi


def solve_state(grid, ops, time, pf, pg, control, init, newton_tol=NEWTON_TOL,
                max_newton=MAX_NEWTON, max_damping=MAX_DAMPING):
    """March the nonlinear coupled system forward with damped Newton steps.

    Args:
        control: ControlPair with m+1 levels; the step to level k+1 reads
            level k+1 (level 0 never enters the dynamics).
        init: FieldPair (or array) of initial values; for singular
            potentials all entries must lie strictly inside (0, 1).

    Returns:
        Trajectory with info dict holding newton iteration counts and the
        clamp tally accumulated during the solve.

    Raises:
        SolverFailureError: Newton did not converge within max_newton
            iterations at some step, or no damped update stayed inside the
            guarded interval.
    """
    y0 = init.bulk if isinstance(init, FieldPair) else np.asarray(init, dtype=float)
    if y0.shape != (grid.num_nodes,):
        raise DimensionMismatchError(f"initial data needs shape ({grid.num_nodes},)")
    singular = pf.is_singular or pg.is_singular
    if singular and (np.min(y0) <= 0.0 or np.max(y0) >= 1.0):
        raise DomainError("initial data must lie strictly inside (0, 1)")
    if not (np.isfinite(control.bulk).all() and np.isfinite(control.surface).all()):
        raise DomainError("controls must be finite")

    dt = time.dt
    base = (sp.eye(grid.num_nodes, format="csr") / dt + ops.coupled).tocsr()
    lo, hi = _interval(pf, pg)

    # reset the tallies so the reported count is attributable to this solve
    pf.pop_clamp_events()
    pg.pop_clamp_events()

    values = np.empty((time.m + 1, grid.num_nodes))
    values[0] = y0
    newton_iters = []

    for k in range(time.m):
        rhs = slot_fields(grid, control.bulk[k + 1], control.surface[k + 1])
        prev = values[k]
        z = prev.copy()

        def residual(v):
            return (v - prev) / dt + ops.coupled @ v + _nonlinearity(grid, pf, pg, v, 1) - rhs

        res = residual(z)
        res_norm = np.max(np.abs(res))
        converged = res_norm <= newton_tol
        iters = 0
        while not converged and iters < max_newton:
            jac = base + sp.diags(_nonlinearity(grid, pf, pg, z, 2))
            delta = spla.splu(jac.tocsc()).solve(-res)
            step = 1.0
            accepted = None
            fallback = None
            for _ in range(max_damping):
                cand = z + step * delta
                if np.min(cand) >= lo and np.max(cand) <= hi:
                    cand_res = residual(cand)
                    cand_norm = np.max(np.abs(cand_res))
                    if cand_norm < res_norm:
                        accepted = (cand, cand_res, cand_norm)
                        break
                    if fallback is None:
                        fallback = (cand, cand_res, cand_norm)
                step *= 0.5
            if accepted is None:
                if fallback is None:
                    raise SolverFailureError(
                        f"no admissible Newton update at step {k + 1}",
                        step=k + 1,
                        residual=res_norm,
                    )
                accepted = fallback
            z, res, res_norm = accepted
            iters += 1
            converged = res_norm <= newton_tol
        if not converged:
            raise SolverFailureError(
                f"Newton stalled at step {k + 1}: residual {res_norm:.3e} after {iters} iterations",
                step=k + 1,
                residual=res_norm,
            )
        values[k + 1] = z
        newton_iters.append(iters)

    clamp_events = pf.pop_clamp_events() + pg.pop_clamp_events()
    if clamp_events > 0:
        warnings.warn(
            f"state solve clamped {clamp_events} potential evaluations",
            BoundsViolationWarning,
            stacklevel=2,
        )
    return Trajectory(
        values,
        grid,
        time,
        info={"newton_iters": newton_iters, "clamp_events": clamp_events},
    )


def energy(grid, ops, pf, pg, state):
    """Discrete free energy: Dirichlet forms plus potential terms.

    The bulk potential is quadratured over interior nodes and the surface
    potential over the boundary cycle; under that splitting the coupled
    scheme is the exact implicit gradient flow of this functional, so its
    value decreases step by step for vanishing controls.
    """
    z = state.bulk if isinstance(state, FieldPair) else np.asarray(state, dtype=float)
    trace = z[grid.boundary_cycle]
    if pf.is_singular or pg.is_singular:
        if np.min(z) <= 0.0 or np.max(z) >= 1.0:
            raise DomainError("energy undefined at or beyond the endpoints 0, 1")
    grad_bulk = 0.5 * float(z @ (ops.dirichlet_bulk @ z))
    grad_surf = 0.5 * float(trace @ (ops.dirichlet_surf @ trace))
    w_int = grid.bulk_weights[grid.interior_nodes]
    pot_bulk = float(np.dot(w_int, np.asarray(pf._eval(0, pf._prepare(z[grid.interior_nodes])))))
    pot_surf = float(np.dot(grid.surface_weights, np.asarray(pg._eval(0, pg._prepare(trace)))))
    return grad_bulk + grad_surf + pot_bulk + pot_surf


def invariant_interval(pf, pg, radius, y_min, y_max):
    """Numerically realize the confinement interval of the maximum principle.

    Finds r_lo <= y_min with f'(r) + radius <= 0 and g'(r) + radius <= 0 on
    (0, r_lo], and r_hi >= y_max with f'(r) - radius >= 0 and
    g'(r) - radius >= 0 on [r_hi, 1). Solutions started inside
    [r_lo, r_hi] under controls bounded by radius cannot leave it.
    """
    if not (pf.is_singular and pg.is_singular):
        raise DomainError("confinement interval needs singular potentials on both sides")
    eps = max(pf.eps_guard, pg.eps_guard)
    r = np.concatenate(
        [
            np.geomspace(eps, 0.5, 4000),
            np.linspace(0.5, 1.0 - eps, 4000),
        ]
    )
    r = np.unique(r)
    top = np.maximum(np.asarray(pf.d1(r)), np.asarray(pg.d1(r)))
    bot = np.minimum(np.asarray(pf.d1(r)), np.asarray(pg.d1(r)))

    ok_lo = np.maximum.accumulate(top) + radius <= 0.0
    if not ok_lo[0]:
        raise SolverFailureError("no confinement interval: derivative not below -radius near 0")
    idx = np.flatnonzero(ok_lo)[-1]
    r_lo = min(float(r[idx]), float(y_min))

    ok_hi = (np.minimum.accumulate((bot - radius)[::-1])[::-1]) >= 0.0
    if not ok_hi[-1]:
        raise SolverFailureError("no confinement interval: derivative not above radius near 1")
    idx = np.flatnonzero(ok_hi)[0]
    r_hi = max(float(r[idx]), float(y_max))
    if not (0.0 < r_lo <= r_hi < 1.0):
        raise SolverFailureError("degenerate confinement interval")
    return r_lo, r_hi


def trajectory_sup_norm(traj_a, traj_b=None):
    """Max over time levels of the bulk L2 norm of the (difference) field."""
    diff = traj_a.values if traj_b is None else traj_a.values - traj_b.values
    grid = traj_a.grid
    norms = [np.sqrt(inner_product_bulk(diff[k], diff[k], grid)) for k in range(diff.shape[0])]
    return float(np.max(norms))


def trajectory_space_time_norm(traj_a, traj_b=None):
    """Space-time norm over bulk and surface parts with trapezoid weights."""
    diff = traj_a.values if traj_b is None else traj_a.values - traj_b.values
    grid, time = traj_a.grid, traj_a.time
    theta = time.weights()
    total = 0.0
    for k in range(diff.shape[0]):
        total += theta[k] * inner_product_bulk(diff[k], diff[k], grid)
        trace = diff[k][grid.boundary_cycle]
        total += theta[k] * inner_product_surf(trace, trace, grid)
    return float(np.sqrt(total))
