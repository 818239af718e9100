"""Equivalent transmission model of a slotted CSMA/CA network.

Every node sees a Poisson number of neighbours and runs binary exponential
backoff with an unbounded number of stages.  The per-slot transmission
probability and the neighbour-averaged collision probability are coupled;
:func:`solve_fixed_point` finds the consistent pair and the resulting
per-slot service rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


class ModelError(ValueError):
    """Base class for errors raised by the analytic model."""


class NoConvergence(ModelError):
    pass


class InfeasibleRegime(ModelError):
    """The only candidate solutions have a collision probability >= 1/2."""


@dataclass(frozen=True)
class NetworkParams:
    """Full input space of the model.

    density is in nodes per unit area, transmit_range in length units,
    w_min and frame_length in slots.
    """

    density: float
    transmit_range: float = 4.0
    w_min: int = 16
    frame_length: int = 50

    def __post_init__(self):
        if not (self.density > 0 and math.isfinite(self.density)):
            raise ValueError(f"density must be positive, got {self.density!r}")
        if not (self.transmit_range > 0 and math.isfinite(self.transmit_range)):
            raise ValueError(f"transmit_range must be positive, got {self.transmit_range!r}")
        if int(self.w_min) != self.w_min or self.w_min < 2:
            raise ValueError(f"w_min must be an integer >= 2, got {self.w_min!r}")
        if int(self.frame_length) != self.frame_length or self.frame_length < 1:
            raise ValueError(f"frame_length must be an integer >= 1, got {self.frame_length!r}")
        object.__setattr__(self, "w_min", int(self.w_min))
        object.__setattr__(self, "frame_length", int(self.frame_length))
        lam = self.lambda_nb
        if not (lam > 0 and math.isfinite(lam)):
            raise ValueError(f"mean neighbour count rho*pi*r^2 must be finite and > 0, got {lam}")

    @property
    def lambda_nb(self) -> float:
        """Mean number of nodes in a disc of radius ``transmit_range``."""
        return self.density * math.pi * self.transmit_range**2


@dataclass(frozen=True)
class EquivalentModel:
    p_tx: float
    p_cl_avg: float
    mu: float
    lambda_nb: float
    iterations: int = 0
    method: str = "damped"


def p_tx_of_collision(p_cl: float, w_min: int) -> float:
    """Per-slot transmission probability for a given collision probability.

    Stationary attempt rate of binary exponential backoff with infinitely
    many stages.  Only defined for ``p_cl < 0.5``; at and above that the
    backoff chain has no stationary distribution.
    """
    if not 0.0 <= p_cl < 0.5:
        raise InfeasibleRegime(f"collision probability must lie in [0, 0.5), got {p_cl!r}")
    if w_min < 2:
        raise ValueError(f"w_min must be >= 2, got {w_min!r}")
    a = 1.0 - 2.0 * p_cl
    return 2.0 * a / (w_min * (1.0 - p_cl) + a)


def p_cl_given_neighbors(p_tx: float, n_nb: int) -> float:
    """Collision probability of a node with exactly ``n_nb`` neighbours."""
    if not 0.0 <= p_tx <= 1.0:
        raise ValueError(f"p_tx must be a probability, got {p_tx!r}")
    if n_nb < 0:
        raise ValueError(f"n_nb must be >= 0, got {n_nb!r}")
    if n_nb <= 1:
        return 0.0
    return -math.expm1((n_nb - 1) * math.log1p(-p_tx)) if p_tx < 1.0 else 1.0


def neighbor_pmf(lambda_nb: float, n):
    """P(N_nb = n) where N_nb + 1 is Poisson(lambda_nb) conditioned on >= 1.

    Evaluated in log space; ``n`` may be an integer or an integer array.
    """
    if not lambda_nb > 0:
        raise ValueError(f"lambda_nb must be positive, got {lambda_nb!r}")
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("n must be >= 0")
    k = n + 1.0
    log_p = k * math.log(lambda_nb) - lambda_nb - gammaln(k + 1.0) - math.log(-math.expm1(-lambda_nb))
    out = np.exp(log_p)
    return float(out) if out.ndim == 0 else out


def avg_collision_prob(p_tx: float, lambda_nb: float) -> float:
    """Collision probability averaged over the neighbour-count distribution.

    Closed form of ``sum_n neighbor_pmf(n) * p_cl_given_neighbors(p_tx, n)``
    rewritten with ``expm1`` so it stays accurate as ``lambda_nb * p_tx -> 0``.
    """
    if not 0.0 <= p_tx < 1.0:
        raise ValueError(f"p_tx must lie in [0, 1), got {p_tx!r}")
    if not lambda_nb > 0:
        raise ValueError(f"lambda_nb must be positive, got {lambda_nb!r}")
    q = 1.0 - p_tx
    lam = lambda_nb
    # e^{-lam} [ lam (p^2 - p) + e^{lam q} - 1 ]  ==  e^{-lam p} - e^{-lam} - lam e^{-lam} p q
    num = math.exp(-lam) * (math.expm1(lam * q) - lam * p_tx * q)
    den = -math.expm1(-lam) * q * q
    return max(0.0, 1.0 - num / den)


def avg_collision_prob_series(p_tx: float, lambda_nb: float, n_max: int | None = None) -> float:
    """Truncated-series evaluation of :func:`avg_collision_prob`."""
    if n_max is None:
        n_max = int(lambda_nb + 20.0 * math.sqrt(lambda_nb) + 50)
    n = np.arange(n_max + 1)
    w = neighbor_pmf(lambda_nb, n)
    pcl = np.where(n <= 1, 0.0, -np.expm1((n - 1) * math.log1p(-p_tx)))
    return float(np.sum(w * pcl))


def _composed(p_tx: float, lambda_nb: float, w_min: int) -> float:
    """p_tx -> avg collision -> p_tx; returns 0 past the transient boundary."""
    p_cl = avg_collision_prob(p_tx, lambda_nb)
    if p_cl >= 0.5:
        return 0.0
    return p_tx_of_collision(p_cl, w_min)


def solve_fixed_point(
    params: NetworkParams,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    damping: float = 0.5,
) -> EquivalentModel:
    """Solve the coupled transmission/collision equations for ``params``.

    Damped iteration ``p <- (1 - damping) p + damping F(p)`` from the
    collision-free attempt rate; if that stalls or leaves the feasible
    region, bisection on ``p - F(p)`` over ``(0, 2/(w_min+1)]``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    lam = params.lambda_nb
    w = params.w_min
    p_max = 2.0 / (w + 1.0)

    p = p_max
    it = 0
    method = "damped"
    converged = False
    for it in range(1, max_iter + 1):
        f = _composed(p, lam, w)
        if f == 0.0:
            break
        if abs(p - f) < tol:
            converged = True
            break
        p = (1.0 - damping) * p + damping * f

    if not converged:
        method = "bisection"
        p, it = _bisect_fixed_point(lam, w, p_max, tol, max_iter)

    p_cl = avg_collision_prob(p, lam)
    if p_cl >= 0.5:
        raise InfeasibleRegime(f"fixed point has collision probability {p_cl:.6g} >= 0.5")
    if abs(p - p_tx_of_collision(p_cl, w)) >= tol:
        raise NoConvergence(f"fixed point residual above tol={tol} after {it} iterations")
    return EquivalentModel(
        p_tx=p, p_cl_avg=p_cl, mu=(1.0 - p_cl) * p, lambda_nb=lam, iterations=it, method=method
    )


def _bisect_fixed_point(lam, w, p_max, tol, max_iter):
    # g(p) = p - F(p) < 0 near 0, >= 0 at p_max and beyond the transient boundary
    lo, hi = 0.0, p_max
    if p_max - _composed(p_max, lam, w) == 0.0:
        return p_max, 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        g = mid - _composed(mid, lam, w)
        if abs(g) < tol * 0.5 or mid in (lo, hi):
            return mid, it
        if g < 0:
            lo = mid
        else:
            hi = mid
    raise NoConvergence(f"bisection did not converge in {max_iter} iterations")


def service_pmf(mu: float, j):
    """P(S = j) for the geometric service time on {1, 2, ...}."""
    if not 0.0 < mu <= 1.0:
        raise ValueError(f"mu must lie in (0, 1], got {mu!r}")
    j = np.asarray(j)
    if np.any(j < 1):
        raise ValueError("j must be >= 1")
    if mu == 1.0:
        out = np.where(j == 1, 1.0, 0.0)
    else:
        out = np.exp((j - 1) * math.log1p(-mu)) * mu
    return float(out) if out.ndim == 0 else out
