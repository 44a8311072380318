"""Double-well potentials with a logarithmic singular part.

The potential splits as a convex singular part
alpha * (y log y + (1-y) log(1-y)) plus a smooth concave part
c * y * (1-y). With alpha > 0 the first derivative blows up at 0 and 1,
which is what confines solution values to the open unit interval. Setting
alpha = 0 selects the purely quadratic variant used by linear-quadratic
cross checks; in that case there is no singularity and no argument
safeguarding.

Evaluation clamps arguments of a singular potential to
[eps_guard, 1 - eps_guard] and tallies every clamping event. Solvers keep
their iterates inside the guarded interval, so a nonzero tally after a
solve flags a discretization problem rather than normal operation.
"""

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidArgumentError, InvalidParameterError


@dataclass
class Potential:
    """Coefficients and derivative evaluators for one potential.

    Attributes:
        alpha: coefficient of the logarithmic part, >= 0 (0 disables it).
        smooth_c: coefficient c of the smooth part c * y * (1 - y).
        eps_guard: safeguard distance from the endpoints, in (0, 0.5).
    """

    alpha: float = 1.0
    smooth_c: float = 3.0
    eps_guard: float = 1e-9
    _clamp_events: int = field(default=0, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidParameterError(f"alpha must be >= 0, got {self.alpha}")
        if not (0.0 < self.eps_guard < 0.5):
            raise InvalidParameterError(f"eps_guard must lie in (0, 0.5), got {self.eps_guard}")

    @property
    def is_singular(self):
        return self.alpha > 0

    # -- clamp tally ----------------------------------------------------

    def pop_clamp_events(self):
        """Return and reset the number of clamped evaluations."""
        with self._lock:
            count = self._clamp_events
            self._clamp_events = 0
        return count

    def _record_clamps(self, count):
        if count:
            with self._lock:
                self._clamp_events += int(count)

    # -- evaluation ------------------------------------------------------

    def _prepare(self, y):
        y = np.asarray(y, dtype=float)
        if np.isnan(y).any():
            raise InvalidArgumentError("potential argument contains NaN")
        if not self.is_singular:
            return y
        if (y < 0.0).any() or (y > 1.0).any():
            raise DomainError("argument of a singular potential outside [0, 1]")
        lo, hi = self.eps_guard, 1.0 - self.eps_guard
        outside = np.count_nonzero((y < lo) | (y > hi))
        self._record_clamps(outside)
        return np.clip(y, lo, hi) if outside else y

    def _eval(self, order, y):
        a, c = self.alpha, self.smooth_c
        if order == 0:
            smooth = c * y * (1.0 - y)
            if a == 0.0:
                return smooth
            return a * (y * np.log(y) + (1.0 - y) * np.log(1.0 - y)) + smooth
        if order == 1:
            smooth = c * (1.0 - 2.0 * y)
            if a == 0.0:
                return smooth
            return a * np.log(y / (1.0 - y)) + smooth
        if order == 2:
            return a / (y * (1.0 - y)) - 2.0 * c if a else np.full_like(y, -2.0 * c)
        if order == 3:
            if a == 0.0:
                return np.zeros_like(y)
            return a * (2.0 * y - 1.0) / (y * y * (1.0 - y) * (1.0 - y))
        raise InvalidParameterError(f"derivative order must be 0..3, got {order}")

    def value(self, y):
        return eval_derivative(self, 0, y)

    def d1(self, y):
        return eval_derivative(self, 1, y)

    def d2(self, y):
        return eval_derivative(self, 2, y)

    def d3(self, y):
        return eval_derivative(self, 3, y)

    def singular_d1(self, y):
        """Derivative of the logarithmic part alone (used by (2.4)-style growth checks)."""
        y = self._prepare(y)
        if self.alpha == 0.0:
            return np.zeros_like(y)
        return self.alpha * np.log(y / (1.0 - y))


def eval_derivative(p, order, y):
    """Evaluate the potential or one of its first three derivatives.

    Arguments of singular potentials are clamped to
    [eps_guard, 1 - eps_guard]; values outside [0, 1] raise DomainError
    rather than being clamped silently. Scalar input gives scalar output.
    """
    scalar = np.isscalar(y) or getattr(y, "ndim", 1) == 0
    yv = p._prepare(y)
    out = p._eval(order, yv)
    return float(out) if scalar else out


@dataclass(frozen=True)
class AssumptionReport:
    """Result of the growth/convexity checks on a potential pair.

    m1, m2 are fitted so that |f1'(r)| <= m1 + m2 |g1'(r)| on the sample;
    growth_bound_holds is False when no finite fit exists (for example a
    vanishing surface singular part against a singular bulk part).
    """

    m1: float
    m2: float
    growth_bound_holds: bool
    f_singular_limits_ok: bool
    g_singular_limits_ok: bool
    f_convex_ok: bool
    g_convex_ok: bool

    @property
    def all_ok(self):
        return (
            self.growth_bound_holds
            and self.f_singular_limits_ok
            and self.g_singular_limits_ok
            and self.f_convex_ok
            and self.g_convex_ok
        )


def _endpoint_samples(eps):
    """Log-spaced points accumulating at both endpoints of (0, 1)."""
    t = np.geomspace(max(eps, 1e-12), 0.5, 200)
    return np.unique(np.concatenate([t, 1.0 - t]))


def _singular_limits_ok(p, samples):
    """Blow-up check: d1 of the log part below -alpha*log(1/eps)/2 near 0."""
    if not p.is_singular:
        return False
    eps = max(p.eps_guard, 1e-12)
    probe = math.sqrt(eps)
    return float(p.singular_d1(probe)) < -p.alpha * math.log(1.0 / probe) / 2.0


def check_assumptions(pf, pg):
    """Fit and verify the growth bound between the singular derivatives.

    Report only: the growth constants are existential in nature, so they
    are estimated on a log-spaced endpoint sample rather than proven.
    """
    eps = max(pf.eps_guard, pg.eps_guard)
    r = _endpoint_samples(eps)
    fval = np.abs(pf.singular_d1(r))
    gval = np.abs(pg.singular_d1(r))

    if pf.is_singular and not pg.is_singular:
        m1, m2, holds = math.inf, math.inf, False
    else:
        mask = gval > 1e-14
        m2 = float(np.max(fval[mask] / gval[mask])) if mask.any() else 1.0
        m1 = float(max(0.0, np.max(fval - m2 * gval)))
        holds = np.all(fval <= m1 + m2 * gval + 1e-12)

    interior = r[(r > eps) & (r < 1.0 - eps)]
    f_convex = pf.is_singular and bool(np.all(pf.alpha / (interior * (1 - interior)) > 0))
    g_convex = pg.is_singular and bool(np.all(pg.alpha / (interior * (1 - interior)) > 0))

    return AssumptionReport(
        m1=m1,
        m2=m2,
        growth_bound_holds=bool(holds),
        f_singular_limits_ok=_singular_limits_ok(pf, r),
        g_singular_limits_ok=_singular_limits_ok(pg, r),
        f_convex_ok=f_convex,
        g_convex_ok=g_convex,
    )
