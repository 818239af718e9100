"""GI/Geo/1 queue with triangular inter-arrivals and the average broadcast age.

Inter-arrival times between consecutive updates are the difference of two
uniform slot indices one frame apart, i.e. triangular on ``1..2T_F-1``.
Service is geometric with per-slot success probability ``mu``.  The system
time is then geometric with parameter ``nu = 1 - mu (1 - alpha)`` where
``alpha`` is the root of ``z = G_X(1 - mu (1 - z))`` inside ``[0, 1)``.

Two evaluation modes exist for the inter-departure time:

``"consistent"``
    normalised PGF (``G_Y(1) = 1``) and ``E[Y] = T_F`` by flow conservation.
``"paper"``
    the published closed forms taken verbatim, kept for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_core import EquivalentModel, ModelError, NetworkParams, solve_fixed_point

MODES = ("consistent", "paper")

# distance to a removable singularity below which the explicit series is used
NEAR = 1e-4
STABILITY_MARGIN = 1e-9


class Unstable(ModelError):
    """mu * T_F <= 1: the update queue is not positive recurrent."""


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _coeffs(T_F: int) -> np.ndarray:
    """Coefficients c_k of h(x) = sum c_k x^k (the triangular weights)."""
    k = np.arange(2 * T_F, dtype=float)
    return np.where(k <= T_F, k, 2.0 * T_F - k)


def _poly(c, x):
    return np.polynomial.polynomial.polyval(x, c)


def _series_f(x, T_F):
    c = np.zeros(T_F + 1)
    c[1:] = np.arange(1, T_F + 1)
    return _poly(c, x)


def _series_g(x, T_F):
    c = _coeffs(T_F)
    c[: T_F + 1] = 0.0
    return _poly(c, x)


def _series_h(x, T_F):
    return _poly(_coeffs(T_F), x)


def _series_h_prime(x, T_F):
    return _poly(np.polynomial.polynomial.polyder(_coeffs(T_F)), x)


def _blend(x, closed, series, T_F):
    """Evaluate ``closed`` away from x = 1 and ``series`` near it."""
    x = np.asarray(x, dtype=float)
    near = np.abs(1.0 - x) < NEAR
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(near, series(x, T_F), closed(np.where(near, 0.0, x), T_F))
    return float(out) if out.ndim == 0 else out


def _geom(x, n):
    """1 + x + ... + x^(n-1) = (1 - x^n)/(1 - x), without the cancellation in 1 - x^n."""
    if n == 0:
        return np.zeros_like(x)
    return -np.expm1(n * np.log(x)) / (1.0 - x)


def _closed_h(x, T_F):
    # (x - 2x^(T+1) + x^(2T+1)) / (1-x)^2 with the numerator factored as x (1 - x^T)^2
    return x * _geom(x, T_F) ** 2


def _closed_f(x, T_F):
    return (x - (1.0 + T_F) * x ** (T_F + 1) + T_F * x ** (T_F + 2)) / (1.0 - x) ** 2


def _closed_g(x, T_F):
    return ((T_F - 1.0) * x ** (T_F + 1) - T_F * x ** (T_F + 2) + x ** (2 * T_F + 1)) / (1.0 - x) ** 2


def _closed_h_prime(x, T_F):
    # ((2T+1)x^(2T) - (2+2T)x^T + 1 + x + (2T-2)x^(T+1) + (1-2T)x^(2T+1)) / (1-x)^3,
    # evaluated as d/dx [x q^2] with q = _geom(x, T) so the triple root at 1 never cancels
    q = _geom(x, T_F)
    dq = (_geom(x, T_F - 1) - (T_F - 1) * x ** (T_F - 1)) / (1.0 - x)
    return q * q + 2.0 * x * q * dq


def aux_h(x, T_F: int):
    """h(x) = sum_{k<=T_F} k x^k + sum_{T_F<k<2T_F} (2T_F - k) x^k; h(1) = T_F**2."""
    return _blend(x, _closed_h, _series_h, T_F)


def aux_f(x, T_F: int):
    return _blend(x, _closed_f, _series_f, T_F)


def aux_g(x, T_F: int):
    return _blend(x, _closed_g, _series_g, T_F)


def aux_h_prime(x, T_F: int):
    """Derivative of :func:`aux_h`."""
    return _blend(x, _closed_h_prime, _series_h_prime, T_F)


def interarrival_pmf(T_F: int) -> np.ndarray:
    """Array ``p`` with ``p[j] = P(X = j)`` for ``j = 0..2T_F-1`` (``p[0] = 0``)."""
    if T_F < 1:
        raise ValueError("T_F must be >= 1")
    return _coeffs(T_F) / T_F**2


def pgf_X(z, T_F: int):
    """PGF of the triangular inter-arrival time."""
    return aux_h(z, T_F) / T_F**2


def is_stable(mu: float, T_F: int) -> bool:
    return mu * T_F > 1.0 + STABILITY_MARGIN


def solve_alpha(mu: float, T_F: int, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Root of ``z = G_X(1 - mu (1 - z))`` in ``[0, 1)`` by bisection.

    Raises :class:`Unstable` unless ``mu * T_F > 1``.
    """
    if not 0.0 < mu <= 1.0:
        raise ValueError(f"mu must lie in (0, 1], got {mu!r}")
    if not is_stable(mu, T_F):
        raise Unstable(f"mu*T_F = {mu * T_F:.6g} <= 1; the update queue is unstable")

    def resid(z):
        return pgf_X(1.0 - mu * (1.0 - z), T_F) - z

    lo = 0.0
    if resid(lo) <= 0.0:
        return 0.0
    # resid < 0 on (alpha, 1); very close to 1 its sign is rounding noise, so
    # back the upper end off until the sign is trustworthy
    for delta in 10.0 ** -np.arange(12, 0, -1):
        hi = 1.0 - delta
        if resid(hi) < 0.0:
            break
    else:
        raise Unstable(f"no root below 1 for mu*T_F = {mu * T_F:.6g}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo < tol * 1e-3:
            break
        if resid(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def nu_of_alpha(mu: float, alpha: float) -> float:
    return 1.0 - mu * (1.0 - alpha)


def pgf_service(z, mu: float):
    return z * mu / (1.0 - z + z * mu)


def _departure_kernel(z, nu, T_F):
    """E[z^(X - T); X >= T] = (1 - nu)(h(z) - h(nu)) / (T_F^2 (z - nu))."""
    z = np.asarray(z, dtype=float)
    near = np.abs(z - nu) < NEAR
    hn = aux_h(nu, T_F)
    with np.errstate(divide="ignore", invalid="ignore"):
        far = (1.0 - nu) * (aux_h(z, T_F) - hn) / (T_F**2 * (z - nu))
    if np.any(near):
        # (h(z) - h(nu)) / (z - nu) by Taylor expansion about nu
        d = z - nu
        c = _coeffs(T_F)
        taylor = np.zeros_like(d)
        fact = 1.0
        for k in range(1, 5):
            c = np.polynomial.polynomial.polyder(c)
            fact *= k
            taylor = taylor + _poly(c, nu) * d ** (k - 1) / fact
        far = np.where(near, (1.0 - nu) * taylor / T_F**2, far)
    return float(far) if np.ndim(far) == 0 else far


def pgf_Y(z, mu: float, nu: float, T_F: int, mode: str = "consistent"):
    """PGF of the inter-departure time.

    ``"consistent"`` uses P(X < T) + E[z^(X-T); X >= T]; ``"paper"``
    additionally multiplies the second term by P(X >= T), which breaks
    ``G_Y(1) = 1`` whenever 0 < P(X < T) < 1.
    """
    _check_mode(mode)
    p_lt = aux_h(nu, T_F) / T_F**2
    a = _departure_kernel(z, nu, T_F)
    if mode == "paper":
        a = (1.0 - p_lt) * a
    return pgf_service(z, mu) * (p_lt + a)


def mean_interdeparture(mu: float, nu: float, T_F: int, mode: str = "consistent") -> float:
    """E[Y].  Flow conservation gives T_F; ``"paper"`` evaluates the published expression."""
    _check_mode(mode)
    if mode == "consistent":
        return float(T_F)
    hn = aux_h(nu, T_F)
    return (
        T_F
        - hn / T_F
        + (2 * mu + nu - 1) * hn / (mu * (1 - nu) * T_F**2)
        + (1 - mu - nu) * (T_F**4 + hn) / (mu * (1 - nu) * T_F)
    )


def mean_xw(mu: float, nu: float, T_F: int) -> float:
    """E[X_k W_k] with W_k = max(0, T_{k-1} - X_k)."""
    return nu * aux_h_prime(nu, T_F) / (T_F**2 * (1.0 - nu))


@dataclass(frozen=True)
class QueueSolution:
    mu: float
    frame_length: int
    mode: str
    alpha: float
    nu: float
    mean_system_time: float
    mean_interdeparture: float
    e_xw: float
    baoi_avg: float

    @property
    def velocity(self) -> float:
        """Hops per slot: inverse of the average broadcast age."""
        return 1.0 / self.baoi_avg


def baoi_from_mu(mu: float, T_F: int, mode: str = "consistent") -> QueueSolution:
    """Average broadcast age for service rate ``mu`` and frame length ``T_F``."""
    _check_mode(mode)
    alpha = solve_alpha(mu, T_F)
    nu = nu_of_alpha(mu, alpha)
    ey = mean_interdeparture(mu, nu, T_F, mode)
    exw = mean_xw(mu, nu, T_F)
    num = T_F / 2.0 + (7.0 * T_F**2 - 1.0) / 12.0 + T_F / mu + exw
    return QueueSolution(
        mu=mu,
        frame_length=T_F,
        mode=mode,
        alpha=alpha,
        nu=nu,
        mean_system_time=1.0 / (1.0 - nu),
        mean_interdeparture=ey,
        e_xw=exw,
        baoi_avg=num / ey,
    )


def average_baoi(model: EquivalentModel, T_F: int, mode: str = "consistent") -> QueueSolution:
    return baoi_from_mu(model.mu, T_F, mode)


def max_stable_density(
    transmit_range: float = 4.0,
    w_min: int = 16,
    frame_length: int = 50,
    tol: float = 1e-6,
) -> float:
    """Largest density whose fixed-point service rate keeps the queue stable.

    The service rate falls with density, so stability holds on an interval
    ``(0, rho*)``; ``rho*`` is located by bisection on :func:`is_stable`.
    """

    def stable(rho):
        mu = solve_fixed_point(NetworkParams(rho, transmit_range, w_min, frame_length)).mu
        return is_stable(mu, frame_length)

    lo, hi = 1e-9, 1.0
    if not stable(lo):
        raise Unstable(f"unstable even at density {lo:g}")
    while stable(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise ModelError("no stability limit found below density 1e6")
    while hi - lo > tol * max(lo, 1e-9):
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


def left_derivative(fn, x: float = 1.0, h: float = 8e-5, levels: int = 4) -> float:
    """Derivative of ``fn`` at ``x`` from the left, Richardson-extrapolated.

    Only points ``<= x`` are evaluated, so PGFs can be differentiated at 1.
    """
    table = []
    for i in range(levels):
        step = h / 2**i
        table.append([(fn(x) - fn(x - step)) / step])
    for j in range(1, levels):
        for i in range(j, levels):
            prev, cur = table[i - 1][j - 1], table[i][j - 1]
            table[i].append(cur + (cur - prev) / (2**j - 1))
    return table[-1][-1]
