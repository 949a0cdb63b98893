"""Time-stepping solvers on the fixed unit strip.

The moving domain 0 < y < rho(t) is mapped onto [0, 1] by xi = y/rho(t)
once and for all; the price is an advection term with coefficient
(rho'/rho) xi.  Three linear parabolic problems share one tridiagonal
backbone:

state        u_t - (rho'/rho) xi u_xi - u_xixi/rho^2 + (1+m) u = 0,
sensitivity  same left side in v, with a source built from (eta, u, h),
adjoint      backward in time, with (xi w)_xi expanded to w + xi w_xi so
             the stencil is unchanged, and nonlocal integral sources.

Per time step the growth ODE is advanced first (explicit Euler on the
multiplicative update), then one banded solve produces the next space
slice.  The advection term is centered by default (the cell Peclet number
is tiny at sane resolutions); ``SchemeConfig.upwind`` switches to
first-order upwinding should the bounds monitor ever report oscillations.
The nonlocal adjoint integrals are evaluated with the field lagged by one
time level, which keeps the matrix tridiagonal and is consistent with the
first-order accuracy of the stepping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .model import (
    AdjointSolution,
    Grid,
    ModelParams,
    SensitivityPair,
    StateSolution,
    as_control_array,
    build_initial_profile,
)

__all__ = [
    "SchemeConfig",
    "SolverError",
    "trapz",
    "first_derivative",
    "second_derivative",
    "solve_state",
    "solve_adjoint",
    "solve_sensitivity",
]


class SolverError(RuntimeError):
    """A PDE solve produced non-finite values or lost positivity."""


@dataclass(frozen=True)
class SchemeConfig:
    """Discretization knobs shared by the three solvers.

    ``theta`` weights the implicit part of the spatial operator
    (1 = backward Euler, 0.5 = Crank-Nicolson-like); sources and nonlocal
    terms are always applied at the target level regardless of theta.
    ``bounds_monitor_tol`` is the tolerated under/overshoot of the
    0 < u < 1 maximum principle before a warning is emitted.
    """

    theta: float = 1.0
    bounds_monitor_tol: float = 1e-8
    upwind: bool = False

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0,1], got {self.theta}")
        if self.bounds_monitor_tol <= 0.0:
            raise ValueError("bounds_monitor_tol must be positive")


_DEFAULT_SCHEME = SchemeConfig()


def trapz(values: np.ndarray, spacing: float) -> float:
    """Composite trapezoid rule on a uniform grid."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] < 2:
        raise ValueError("trapz needs at least two samples")
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    return float(spacing * (values.sum(axis=-1) - 0.5 * (values[..., 0] + values[..., -1])))


def _trapz(values: np.ndarray, spacing: float) -> float:
    # unchecked fast path for the inner loops
    return spacing * (values.sum() - 0.5 * (values[0] + values[-1]))


def first_derivative(f: np.ndarray, dxi: float) -> np.ndarray:
    """Second-order d/dxi along the last axis (one-sided at the ends)."""
    g = np.empty_like(f, dtype=float)
    g[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2.0 * dxi)
    g[..., 0] = (-3.0 * f[..., 0] + 4.0 * f[..., 1] - f[..., 2]) / (2.0 * dxi)
    g[..., -1] = (3.0 * f[..., -1] - 4.0 * f[..., -2] + f[..., -3]) / (2.0 * dxi)
    return g


def second_derivative(f: np.ndarray, dxi: float) -> np.ndarray:
    """Second-order d2/dxi2 along the last axis (one-sided at the ends)."""
    dx2 = dxi * dxi
    g = np.empty_like(f, dtype=float)
    g[..., 1:-1] = (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / dx2
    if f.shape[-1] >= 4:
        g[..., 0] = (2.0 * f[..., 0] - 5.0 * f[..., 1] + 4.0 * f[..., 2] - f[..., 3]) / dx2
        g[..., -1] = (2.0 * f[..., -1] - 5.0 * f[..., -2] + 4.0 * f[..., -3] - f[..., -4]) / dx2
    else:
        g[..., 0] = g[..., 1]
        g[..., -1] = g[..., -2]
    return g


def _operator_bands(n, dxi, adv, diff, react, upwind):
    """Stencil bands (lower, diag, upper) of A f = adv f_xi + diff f_xixi - react f.

    Row 0 folds the ghost node of the zero-slope condition (f_{-1} = f_1)
    into the stencil; the advection coefficient vanishes there because it
    carries a factor xi.  Row n-1 is left zero, to be overridden by the
    Dirichlet condition.
    """
    c = diff / (dxi * dxi)
    lower = np.empty(n)
    diag = np.empty(n)
    upper = np.empty(n)
    if upwind:
        ap = np.maximum(adv, 0.0) / dxi
        am = np.minimum(adv, 0.0) / dxi
        lower[1:-1] = c - am[1:-1]
        diag[1:-1] = -2.0 * c - (ap[1:-1] - am[1:-1]) - react
        upper[1:-1] = c + ap[1:-1]
    else:
        a = adv / (2.0 * dxi)
        lower[1:-1] = c - a[1:-1]
        diag[1:-1] = -2.0 * c - react
        upper[1:-1] = c + a[1:-1]
    diag[0] = -2.0 * c - react
    upper[0] = 2.0 * c
    lower[0] = 0.0
    lower[-1] = diag[-1] = upper[-1] = 0.0
    return lower, diag, upper


def _apply_operator(f, bands):
    lower, diag, upper = bands
    out = diag * f
    out[:-1] += upper[:-1] * f[1:]
    out[1:] += lower[1:] * f[:-1]
    return out


def _implicit_step(f_old, dt, dxi, theta, bands_new, bands_old, source, bc_value):
    """Advance one level of f_t = A f + source with f(1) = bc_value.

    Solves (I - theta dt A_new) f = f_old + (1-theta) dt A_old f_old
    + dt source as a single banded system.
    """
    n = f_old.shape[0]
    rhs = f_old.copy()
    if theta < 1.0:
        rhs += (1.0 - theta) * dt * _apply_operator(f_old, bands_old)
    if source is not None:
        rhs += dt * source
    rhs[-1] = bc_value

    lower, diag, upper = bands_new
    gamma = theta * dt
    ab = np.empty((3, n))
    ab[0, 1:] = -gamma * upper[:-1]
    ab[1, :] = 1.0 - gamma * diag
    ab[2, :-1] = -gamma * lower[1:]
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def solve_state(m, params: ModelParams, grid: Grid,
                scheme: SchemeConfig | None = None,
                u0: np.ndarray | None = None) -> StateSolution:
    """March the nutrient/thickness system forward over [0, T].

    Parameters
    ----------
    m : ControlPath, array, or scalar
        Inhibitor schedule sampled at the time nodes.  Admissibility is
        not required here (derivative oracles probe outside the box);
        use :func:`tumorctrl.model.validate_control` where it matters.
    u0 : array, optional
        Tabulated initial profile overriding the one built from ``params``.

    Per step: the growth integral of the current slice updates rho
    multiplicatively, then one banded solve with coefficients frozen at
    the new level produces the next nutrient slice.  The maximum-principle
    monitor warns (non-fatally) if u leaves [0, 1] by more than the
    configured tolerance.

    Raises
    ------
    SolverError
        On non-finite values or loss of thickness positivity, with the
        offending step in the message.
    """
    scheme = scheme or _DEFAULT_SCHEME
    mvals = as_control_array(m, grid.n_t)
    if not np.isfinite(mvals).all():
        raise ValueError("control contains non-finite values")
    if u0 is None:
        u0 = build_initial_profile(params, grid)
    else:
        u0 = np.asarray(u0, dtype=float)
        if u0.shape != (grid.n_xi,):
            raise ValueError(f"u0 must have {grid.n_xi} nodes, got {u0.shape}")

    n_xi, n_t = grid.n_xi, grid.n_t
    dxi, dt = grid.dxi, grid.dt(params.T)
    xi = grid.xi
    mu, sig = params.mu, params.sigma_tilde
    theta = scheme.theta

    u = np.empty((n_t, n_xi))
    rho = np.empty(n_t)
    growth = np.empty(n_t)  # integral mu (u - sigma_tilde) dxi per level
    u[0] = u0
    rho[0] = params.rho0

    for n in range(n_t - 1):
        growth[n] = mu * _trapz(u[n] - sig, dxi)
        rho_new = rho[n] * (1.0 + dt * growth[n])
        if not (np.isfinite(rho_new) and rho_new > 0.0):
            raise SolverError(
                f"thickness became {rho_new!r} at step {n + 1} "
                f"(t={dt * (n + 1):.6g}); the state solve blew up"
            )
        adv = growth[n] * xi  # frozen rho'/rho of the freshly updated level
        bands_new = _operator_bands(
            n_xi, dxi, adv, 1.0 / rho_new**2, 1.0 + mvals[n + 1], scheme.upwind
        )
        bands_old = None
        if theta < 1.0:
            bands_old = _operator_bands(
                n_xi, dxi, adv, 1.0 / rho[n] ** 2, 1.0 + mvals[n], scheme.upwind
            )
        u[n + 1] = _implicit_step(
            u[n], dt, dxi, theta, bands_new, bands_old, None, 1.0
        )
        if not np.isfinite(u[n + 1]).all():
            raise SolverError(
                f"non-finite nutrient values at step {n + 1} "
                f"(t={dt * (n + 1):.6g}); the state solve blew up"
            )
        rho[n + 1] = rho_new
    growth[-1] = mu * _trapz(u[-1] - sig, dxi)

    tol = scheme.bounds_monitor_tol
    umin, umax = u.min(), u.max()
    if umin < -tol or umax > 1.0 + tol:
        warnings.warn(
            f"nutrient bound monitor: u ranges over [{umin:.3e}, {umax:.3e}], "
            f"outside [0,1] beyond tolerance {tol:g}",
            stacklevel=2,
        )
    return StateSolution(u=u, rho=rho, rho_prime=rho * growth)


def solve_adjoint(state: StateSolution, m, params: ModelParams, grid: Grid,
                  scheme: SchemeConfig | None = None,
                  zero_sources: bool = False) -> AdjointSolution:
    """March the adjoint pair (w, lambda) backward from the horizon.

    In the reversed time tau = T - t the field equation reads

        w_tau + (rho'/rho)(w + xi w_xi) - w_xixi/rho^2 + (1+m) w
            = mu * integral_0^1 w xi u_xi dxi + mu lambda rho,

    with w(1) = 0, w_xi(0) = 0 and zero data at tau = 0.  The scalar obeys
    d lambda/d tau = 1 + lambda I + (2/rho^3) integral w_xi u_xi dxi, with
    I the growth-rate integral of the state.  Each backward step advances
    lambda explicitly with the lagged field, then solves the banded system
    for the new slice with that fresh lambda in the source.

    ``zero_sources`` drops the right-hand side of the field equation (a
    bookkeeping diagnostic: zero terminal data then propagates exactly).
    """
    scheme = scheme or _DEFAULT_SCHEME
    mvals = as_control_array(m, grid.n_t)
    n_xi, n_t = grid.n_xi, grid.n_t
    if state.u.shape != (n_t, n_xi):
        raise ValueError("state was solved on a different grid")
    dxi, dt = grid.dxi, grid.dt(params.T)
    xi = grid.xi
    mu = params.mu
    theta = scheme.theta

    rho = state.rho
    growth = state.rho_prime / rho
    u_xi = first_derivative(state.u, dxi)

    w = np.zeros((n_t, n_xi))
    lam = np.zeros(n_t)

    for n in range(n_t - 1, 0, -1):
        w_xi_lag = first_derivative(w[n], dxi)
        lam[n - 1] = lam[n] + dt * (
            1.0
            + lam[n] * growth[n]
            + (2.0 / rho[n] ** 3) * _trapz(w_xi_lag * u_xi[n], dxi)
        )
        if zero_sources:
            source = None
        else:
            src = (
                mu * _trapz(w[n] * xi * u_xi[n - 1], dxi)
                + mu * lam[n - 1] * rho[n - 1]
            )
            source = np.full(n_xi, src)
        bands_new = _operator_bands(
            n_xi,
            dxi,
            -growth[n - 1] * xi,
            1.0 / rho[n - 1] ** 2,
            1.0 + mvals[n - 1] + growth[n - 1],
            scheme.upwind,
        )
        bands_old = None
        if theta < 1.0:
            bands_old = _operator_bands(
                n_xi,
                dxi,
                -growth[n] * xi,
                1.0 / rho[n] ** 2,
                1.0 + mvals[n] + growth[n],
                scheme.upwind,
            )
        w[n - 1] = _implicit_step(
            w[n], dt, dxi, theta, bands_new, bands_old, source, 0.0
        )
        if not (np.isfinite(w[n - 1]).all() and np.isfinite(lam[n - 1])):
            raise SolverError(
                f"non-finite adjoint values at backward step {n - 1}; "
                "the adjoint solve blew up"
            )
    return AdjointSolution(w=w, lam=lam)


def solve_sensitivity(state: StateSolution, m, h, params: ModelParams,
                      grid: Grid,
                      scheme: SchemeConfig | None = None) -> SensitivityPair:
    """Linearized response (v, eta) to a dose perturbation direction h.

    Mirrors the state stepping: eta is advanced explicitly first (this is
    the exact derivative of the multiplicative rho update, given v), then
    eta and its ODE right-hand side feed the source of a banded solve for
    the next v slice.  The spatial derivatives of the stored state are
    centered, one-sided at the ends.
    """
    scheme = scheme or _DEFAULT_SCHEME
    mvals = as_control_array(m, grid.n_t)
    hvals = as_control_array(h, grid.n_t)
    n_xi, n_t = grid.n_xi, grid.n_t
    if state.u.shape != (n_t, n_xi):
        raise ValueError("state was solved on a different grid")
    dxi, dt = grid.dxi, grid.dt(params.T)
    xi = grid.xi
    mu = params.mu
    theta = scheme.theta

    rho = state.rho
    rho_prime = state.rho_prime
    growth = rho_prime / rho
    u_xi = first_derivative(state.u, dxi)
    u_xixi = second_derivative(state.u, dxi)

    v = np.zeros((n_t, n_xi))
    eta = np.zeros(n_t)

    for n in range(n_t - 1):
        v_int_lag = mu * _trapz(v[n], dxi)
        eta[n + 1] = eta[n] + dt * (eta[n] * growth[n] + rho[n] * v_int_lag)
        r = rho[n + 1]
        eta_prime = eta[n + 1] * growth[n + 1] + r * v_int_lag
        source = (
            (eta_prime / r) * xi * u_xi[n + 1]
            - (rho_prime[n + 1] * eta[n + 1] / r**2) * xi * u_xi[n + 1]
            - (2.0 * eta[n + 1] / r**3) * u_xixi[n + 1]
            - state.u[n + 1] * hvals[n + 1]
        )
        bands_new = _operator_bands(
            n_xi, dxi, growth[n] * xi, 1.0 / r**2, 1.0 + mvals[n + 1],
            scheme.upwind,
        )
        bands_old = None
        if theta < 1.0:
            bands_old = _operator_bands(
                n_xi, dxi, growth[n] * xi, 1.0 / rho[n] ** 2, 1.0 + mvals[n],
                scheme.upwind,
            )
        v[n + 1] = _implicit_step(
            v[n], dt, dxi, theta, bands_new, bands_old, source, 0.0
        )
        if not np.isfinite(v[n + 1]).all():
            raise SolverError(
                f"non-finite sensitivity values at step {n + 1}; "
                "the sensitivity solve blew up"
            )
    return SensitivityPair(v=v, eta=eta)
