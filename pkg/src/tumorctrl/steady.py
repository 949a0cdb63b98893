"""Closed-form steady states and the steady-state inhibitor optimizers.

For a constant dose m the equilibrium nutrient profile is

    u(xi) = cosh(sqrt(1+m) rho xi) / cosh(sqrt(1+m) rho),

with the equilibrium thickness rho pinned down by the zero-net-growth
condition tanh(x)/x = sigma_tilde at x = sqrt(1+m) rho.  Writing
g(x) = tanh(x)/x (strictly decreasing on x >= 0), that reads

    sqrt(1+m) rho = g^{-1}(sigma_tilde).

The steady objective is J(m) = rho(m) + B m^2, whose interior critical
point solves m (1+m)^{3/2} = g^{-1}(sigma_tilde) / (4B); clamping at the
dose cap M gives the optimizer.  The same optimizer is also the fixed
point of the update map

    m  <-  clip( integral_0^1 w u dxi / (2B), 0, M ),

where w is the steady adjoint profile; :func:`steady_fixed_point` iterates
that map, while :func:`optimal_m_direct` solves the scalar equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Grid, ModelParams, SteadyStateSolution

__all__ = [
    "RootSolverConfig",
    "FixedPointResult",
    "g_eval",
    "g_inverse",
    "steady_rho",
    "steady_u_profile",
    "optimal_m_direct",
    "steady_lambda",
    "steady_w_profile",
    "steady_objective",
    "steady_fixed_point",
]


class RootSolverError(RuntimeError):
    """A scalar solve failed to converge or could not be bracketed."""


@dataclass(frozen=True)
class RootSolverConfig:
    """Tolerances and bracket for the scalar solves."""

    abs_tol: float = 1e-12
    max_iter: int = 100
    bracket_lo: float = 1e-6
    bracket_hi: float = 50.0

    def __post_init__(self):
        if self.abs_tol <= 0.0:
            raise ValueError("abs_tol must be positive")
        if not self.bracket_lo < self.bracket_hi:
            raise ValueError("bracket_lo must be below bracket_hi")


_DEFAULT_ROOT_CFG = RootSolverConfig()


def g_eval(x: float) -> float:
    """tanh(x)/x, continued by its limit value 1 at x = 0.

    Strictly decreasing on [0, inf); the removable singularity is handled
    by a Taylor expansion below 1e-4 to keep full precision.
    """
    if x < 0.0:
        raise ValueError(f"g is defined for x >= 0, got {x}")
    if x < 1e-4:
        x2 = x * x
        return 1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0
    return math.tanh(x) / x


def _g_prime(x: float) -> float:
    # d/dx tanh(x)/x = (x sech^2 x - tanh x) / x^2
    if x < 1e-4:
        return -2.0 * x / 3.0
    sech2 = 1.0 / math.cosh(x) ** 2
    return (x * sech2 - math.tanh(x)) / (x * x)


def _bisect_then_newton(f, fprime, lo, hi, cfg: RootSolverConfig,
                        bisect_width: float = 1e-6) -> float:
    """Root of a strictly monotone f: bisection to a coarse bracket, then
    Newton polish until |f| <= cfg.abs_tol (or the step stagnates)."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise RootSolverError(
            f"root not bracketed on [{lo:g}, {hi:g}]: f(lo)={flo:g}, f(hi)={fhi:g}"
        )
    for _ in range(cfg.max_iter):
        if hi - lo <= bisect_width:
            break
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if flo * fmid < 0.0:
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
    x = 0.5 * (lo + hi)
    for _ in range(cfg.max_iter):
        fx = f(x)
        if abs(fx) <= cfg.abs_tol:
            return x
        dfx = fprime(x)
        if dfx == 0.0:
            break
        step = fx / dfx
        x_new = x - step
        if not lo <= x_new <= hi:  # Newton left the bracket; fall back
            x_new = 0.5 * (lo + hi)
        if x_new == x:
            return x
        if f(lo) * f(x_new) < 0.0:
            hi = x_new
        else:
            lo = x_new
        x = x_new
    if abs(f(x)) <= cfg.abs_tol:
        return x
    raise RootSolverError(
        f"no convergence after {cfg.max_iter} Newton iterations, "
        f"residual {f(x):g} at x={x!r}"
    )


def g_inverse(s: float, cfg: RootSolverConfig | None = None) -> float:
    """The x > 0 with tanh(x)/x = s, for s in (0, 1).

    The configured bracket is widened automatically when s falls outside
    the g-range it covers (small s pushes the root beyond the default
    upper end, since g(x) ~ 1/x for large x).
    """
    cfg = cfg or _DEFAULT_ROOT_CFG
    if not 0.0 < s < 1.0:
        raise ValueError(f"g_inverse requires s in (0,1), got {s}")
    lo, hi = cfg.bracket_lo, cfg.bracket_hi
    for _ in range(60):
        if g_eval(lo) > s:
            break
        lo *= 0.5
    for _ in range(60):
        if g_eval(hi) < s:
            break
        hi *= 2.0
    else:
        raise RootSolverError(f"could not bracket g_inverse({s})")
    return _bisect_then_newton(
        lambda x: g_eval(x) - s, _g_prime, lo, hi, cfg
    )


def steady_rho(m: float, params: ModelParams,
               cfg: RootSolverConfig | None = None) -> float:
    """Equilibrium thickness for a constant dose m >= 0."""
    if m < 0.0:
        raise ValueError(f"dose must be nonnegative, got {m}")
    return g_inverse(params.sigma_tilde, cfg) / math.sqrt(1.0 + m)


def steady_u_profile(m: float, rho: float, grid: Grid) -> np.ndarray:
    """Equilibrium nutrient profile on the grid nodes; increasing, u(1)=1."""
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    if m < 0.0:
        raise ValueError(f"dose must be nonnegative, got {m}")
    x = math.sqrt(1.0 + m) * rho
    return np.cosh(x * grid.xi) / math.cosh(x)


def optimal_m_direct(params: ModelParams,
                     cfg: RootSolverConfig | None = None) -> float:
    """Steady-state optimizer from the scalar optimality equation.

    Solves m (1+m)^{3/2} = g^{-1}(sigma_tilde) / (4B); the left side is
    strictly increasing on m >= 0, so the root is unique.  The result is
    clamped at the dose cap M.
    """
    cfg = cfg or _DEFAULT_ROOT_CFG
    if params.B <= 0.0:
        raise ValueError("the direct optimizer divides by 4B; B must be > 0")
    rhs = g_inverse(params.sigma_tilde, cfg) / (4.0 * params.B)

    def f(m):
        return m * (1.0 + m) ** 1.5 - rhs

    def fp(m):
        return (1.0 + m) ** 1.5 + 1.5 * m * (1.0 + m) ** 0.5

    hi = max(params.M, 100.0)
    for _ in range(60):
        if f(hi) > 0.0:
            break
        hi *= 2.0
    m_star = _bisect_then_newton(f, fp, 0.0, hi, cfg)
    return min(m_star, params.M)


def steady_lambda(m: float, rho: float, params: ModelParams) -> float:
    """Adjoint scalar of the steady optimality system.

    For a pair (m, rho) satisfying the thickness equation,

        1 / (mu lambda) = sigma_tilde - sech^2(sqrt(1+m) rho),

    and the right side is positive (tanh(x)/x > sech^2 x for x > 0), so
    lambda > 0.  A non-positive denominator therefore signals an
    inconsistent input pair.
    """
    x = math.sqrt(1.0 + m) * rho
    den = params.sigma_tilde - 1.0 / math.cosh(x) ** 2
    if den <= 0.0:
        raise ValueError(
            f"non-positive denominator {den:g} in the adjoint-scalar formula; "
            f"(m={m}, rho={rho}) does not satisfy the thickness equation"
        )
    return 1.0 / (params.mu * den)


def steady_w_profile(m: float, rho: float, lam: float, params: ModelParams,
                     grid: Grid) -> np.ndarray:
    """Steady adjoint profile; vanishes at xi = 1, flat at xi = 0."""
    x = math.sqrt(1.0 + m) * rho
    scale = params.mu * lam * rho / (1.0 + m)
    return scale * (1.0 - np.cosh(x * grid.xi) / math.cosh(x))


def steady_objective(m: float, params: ModelParams,
                     cfg: RootSolverConfig | None = None) -> float:
    """Steady objective J(m) = rho(m) + B m^2."""
    return steady_rho(m, params, cfg) + params.B * m * m


@dataclass(frozen=True)
class FixedPointResult:
    """Converged steady optimizer plus the iterate history."""

    solution: SteadyStateSolution
    iterates: np.ndarray = field(repr=False)
    iterations: int = 0

    def __post_init__(self):
        arr = np.array(self.iterates, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "iterates", arr)


def steady_fixed_point(m0: float, params: ModelParams, grid: Grid,
                       tol: float = 1e-5, max_iter: int = 500,
                       cfg: RootSolverConfig | None = None) -> FixedPointResult:
    """Iterate the steady optimality map until the dose stabilizes.

    Each pass rebuilds the equilibrium (rho, u), the adjoint scalar and
    profile (lambda, w) for the current dose, then projects the update
    integral_0^1 w u dxi / (2B) onto [0, M].  Stops when consecutive doses
    differ by less than ``tol``.

    Raises
    ------
    RootSolverError
        On non-convergence within ``max_iter``; the iterate history is
        attached to the exception as ``.iterates``.
    """
    if not 0.0 <= m0 <= params.M:
        raise ValueError(f"m0={m0} outside the admissible box [0, {params.M}]")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if params.B <= 0.0:
        raise ValueError("the update map divides by 2B; B must be > 0")

    dxi = grid.dxi
    m = float(m0)
    history = [m]
    for _ in range(max_iter):
        rho = steady_rho(m, params, cfg)
        u = steady_u_profile(m, rho, grid)
        lam = steady_lambda(m, rho, params)
        w = steady_w_profile(m, rho, lam, params, grid)
        wu = w * u
        integral = dxi * (wu.sum() - 0.5 * (wu[0] + wu[-1]))
        m_next = min(max(0.0, integral / (2.0 * params.B)), params.M)
        history.append(m_next)
        if abs(m_next - m) < tol:
            m = m_next
            rho = steady_rho(m, params, cfg)
            u = steady_u_profile(m, rho, grid)
            lam = steady_lambda(m, rho, params)
            w = steady_w_profile(m, rho, lam, params, grid)
            solution = SteadyStateSolution(
                m=m,
                rho=rho,
                u_profile=u,
                w_profile=w,
                lam=lam,
                J=rho + params.B * m * m,
            )
            return FixedPointResult(
                solution=solution,
                iterates=np.array(history),
                iterations=len(history) - 1,
            )
        m = m_next
    err = RootSolverError(
        f"steady fixed-point iteration did not reach tol={tol:g} "
        f"within {max_iter} iterations (last dose {m!r})"
    )
    err.iterates = np.array(history)
    raise err
