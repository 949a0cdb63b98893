"""Domain types and initial data for the multilayered-tumor control problem.

The tumor occupies a slab 0 < y < rho(t); nutrient diffuses in from the top
surface and drives growth, while an inhibitor schedule m(t) lowers the
effective nutrient level.  After the front-fixing substitution xi = y/rho(t)
everything lives on the fixed strip [0, 1] x [0, T]:

    u_t - (rho'/rho) xi u_xi - u_xixi / rho^2 = -(1 + m) u,
    u(1, t) = 1,   u_xi(0, t) = 0,   u(xi, 0) = u0(xi),
    rho'(t) = rho(t) * integral_0^1 mu (u - sigma_tilde) dxi,  rho(0) = rho0.

This module holds the shared parameter/grid/solution containers and the
construction and validation of initial data.  All containers are frozen and
their arrays marked read-only, so they can be shared freely across
concurrent solver runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModelParams",
    "Grid",
    "ControlPath",
    "StateSolution",
    "AdjointSolution",
    "SensitivityPair",
    "SteadyStateSolution",
    "build_initial_profile",
    "load_initial_profile",
    "validate_control",
    "as_control_array",
]

#: Accepted absolute deviation of u0(1) from the boundary value 1.
PROFILE_COMPAT_TOL = 1e-12


def _frozen_array(values, dtype=float) -> np.ndarray:
    """Copy ``values`` into a read-only float array."""
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Physical and optimization constants.

    Parameters
    ----------
    sigma_tilde : float
        Nutrient threshold in (0, 1); below it cell loss outweighs
        proliferation.
    mu : float
        Proliferation intensity, > 0.
    B : float
        Side-effect weight in the objective, >= 0.
    M : float
        Upper bound of the admissible inhibitor dose, > 0.
    rho0 : float
        Initial tissue thickness, > 0.
    T : float
        Time horizon, > 0.
    u0_perturb_amp : float
        Amplitude of the cosine perturbation added to the baseline
        initial nutrient profile.
    u0_perturb_freq : float
        Frequency multiple k of pi in cos(k pi xi).  When the amplitude is
        nonzero, k must be an odd multiple of 1/2 so that u0(1) = 1 holds.
    """

    sigma_tilde: float
    mu: float
    B: float
    M: float
    rho0: float
    T: float
    u0_perturb_amp: float = 0.1
    u0_perturb_freq: float = 3.5

    def __post_init__(self):
        if not 0.0 < self.sigma_tilde < 1.0:
            raise ValueError(
                f"sigma_tilde must lie in (0,1), got {self.sigma_tilde}"
            )
        for name in ("mu", "M", "rho0", "T"):
            value = getattr(self, name)
            if not value > 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.B < 0.0:
            raise ValueError(f"B must be nonnegative, got {self.B}")
        if self.u0_perturb_freq <= 0.0:
            raise ValueError(
                f"u0_perturb_freq must be positive, got {self.u0_perturb_freq}"
            )
        if self.u0_perturb_amp != 0.0:
            _check_half_odd(self.u0_perturb_freq)


def _check_half_odd(k: float) -> None:
    """Require k to be an odd multiple of 1/2, so cos(k*pi) = 0."""
    two_k = 2.0 * k
    if abs(two_k - round(two_k)) > 1e-9 or round(two_k) % 2 == 0:
        raise ValueError(
            "perturbation frequency must be an odd multiple of 1/2 "
            f"(cos(k*pi) must vanish at xi=1), got k={k}"
        )


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [0,1] x [0,T].

    ``n_xi`` nodes span [0, 1] including both endpoints; ``n_t`` nodes span
    [0, T].  The time horizon itself lives in :class:`ModelParams`, so the
    time spacing is obtained via :meth:`dt`.
    """

    n_xi: int = 201
    n_t: int = 2001

    def __post_init__(self):
        if self.n_xi < 3:
            raise ValueError(f"n_xi must be >= 3, got {self.n_xi}")
        if self.n_t < 2:
            raise ValueError(f"n_t must be >= 2, got {self.n_t}")

    @property
    def dxi(self) -> float:
        return 1.0 / (self.n_xi - 1)

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_xi)

    def dt(self, T: float) -> float:
        return T / (self.n_t - 1)

    def times(self, T: float) -> np.ndarray:
        return np.linspace(0.0, T, self.n_t)

    def refined(self) -> "Grid":
        """Grid with both spacings halved (nodes nest into the old ones)."""
        return Grid(n_xi=2 * self.n_xi - 1, n_t=2 * self.n_t - 1)


@dataclass(frozen=True)
class ControlPath:
    """Inhibitor schedule sampled at the time nodes.

    The container itself does not enforce the dose bounds; membership in the
    admissible set [0, M] is checked by :func:`validate_control` (derivative
    oracles deliberately evaluate slightly outside the box).
    """

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.values.ndim != 1:
            raise ValueError("control values must be one-dimensional")

    @classmethod
    def constant(cls, value: float, n_t: int) -> "ControlPath":
        return cls(np.full(n_t, float(value)))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class StateSolution:
    """Nutrient field u(xi_j, t_n), thickness rho(t_n) and its derivative.

    ``rho_prime[n]`` is the growth ODE right-hand side evaluated from the
    stored slice, rho(t_n) * trapz(mu (u(., t_n) - sigma_tilde)), so the
    ratio rho_prime/rho reproduces the growth-rate integral exactly.
    """

    u: np.ndarray
    rho: np.ndarray
    rho_prime: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen_array(self.u))
        object.__setattr__(self, "rho", _frozen_array(self.rho))
        object.__setattr__(self, "rho_prime", _frozen_array(self.rho_prime))
        n_t, _ = self.u.shape
        if self.rho.shape != (n_t,) or self.rho_prime.shape != (n_t,):
            raise ValueError("rho/rho_prime length must match u time levels")

    @property
    def n_t(self) -> int:
        return self.u.shape[0]

    @property
    def n_xi(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class AdjointSolution:
    """Adjoint field w(xi_j, t_n) and adjoint scalar lambda(t_n)."""

    w: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen_array(self.w))
        object.__setattr__(self, "lam", _frozen_array(self.lam))


@dataclass(frozen=True)
class SensitivityPair:
    """Linearized response (v, eta) of (u, rho) to a control perturbation."""

    v: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", _frozen_array(self.v))
        object.__setattr__(self, "eta", _frozen_array(self.eta))


@dataclass(frozen=True)
class SteadyStateSolution:
    """Bundle returned by the steady-state optimizer routines."""

    m: float
    rho: float
    u_profile: np.ndarray = field(repr=False)
    w_profile: np.ndarray = field(repr=False)
    lam: float = 0.0
    J: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "u_profile", _frozen_array(self.u_profile))
        object.__setattr__(self, "w_profile", _frozen_array(self.w_profile))


def build_initial_profile(params: ModelParams, grid: Grid) -> np.ndarray:
    """Initial nutrient profile cosh(rho0 xi)/cosh(rho0) + a cos(k pi xi).

    The baseline term is the uncontrolled equilibrium profile for thickness
    ``rho0``; the cosine term adds a compatible perturbation.  Both terms
    have zero slope at xi = 0, and the perturbation vanishes at xi = 1
    whenever k is an odd multiple of 1/2, so the boundary compatibility
    u0(1) = 1, u0'(0) = 0 holds exactly.

    Raises
    ------
    ValueError
        If the amplitude is nonzero but cos(k pi) != 0, which would break
        the Dirichlet value at xi = 1.
    """
    a = params.u0_perturb_amp
    k = params.u0_perturb_freq
    if a != 0.0:
        _check_half_odd(k)
    xi = grid.xi
    u0 = np.cosh(params.rho0 * xi) / math.cosh(params.rho0)
    if a != 0.0:
        u0 = u0 + a * np.cos(k * math.pi * xi)
        u0[-1] = 1.0  # cos(k*pi) is an exact zero analytically, not in floats
    _warn_if_outside_unit_range(u0, "initial profile")
    return u0


def load_initial_profile(path, grid: Grid) -> np.ndarray:
    """Read a tabulated u0 from ``path``: one value per line, xi=0 first.

    The file must contain exactly ``grid.n_xi`` values and satisfy the
    boundary compatibility |u0(1) - 1| <= 1e-12.  The zero-slope condition
    at xi = 0 is enforced by the solver's ghost node, not by the data.
    """
    u0 = np.loadtxt(path, dtype=float, comments="#", ndmin=1)
    if u0.ndim != 1 or u0.size != grid.n_xi:
        raise ValueError(
            f"initial-profile file {path} must hold {grid.n_xi} values, "
            f"got shape {u0.shape}"
        )
    if abs(u0[-1] - 1.0) > PROFILE_COMPAT_TOL:
        raise ValueError(
            f"tabulated initial profile violates u0(1)=1: u0(1)={u0[-1]!r}"
        )
    _warn_if_outside_unit_range(u0, f"initial profile from {path}")
    return u0


def _warn_if_outside_unit_range(u0: np.ndarray, what: str) -> None:
    # The comparison theory assumes 0 <= u0 <= 1; perturbed profiles are
    # accepted with a warning since the solver monitors the bound anyway.
    if u0.min() < 0.0 or u0.max() > 1.0:
        warnings.warn(
            f"{what} leaves [0,1] (min={u0.min():.6g}, max={u0.max():.6g}); "
            "the solution bound monitor may report violations",
            stacklevel=3,
        )


def as_control_array(m, n_t: int) -> np.ndarray:
    """Coerce a ControlPath, scalar, or array to a length-``n_t`` array."""
    if isinstance(m, ControlPath):
        values = m.values
    elif np.isscalar(m):
        return np.full(n_t, float(m))
    else:
        values = np.asarray(m, dtype=float)
    if values.shape != (n_t,):
        raise ValueError(f"control has {values.shape[0]} samples, grid has {n_t}")
    return values


def validate_control(m, params: ModelParams) -> np.ndarray:
    """Indices where the schedule leaves the admissible box [0, M].

    Bounds are inclusive; an empty result means the control is admissible.
    """
    values = m.values if isinstance(m, ControlPath) else np.asarray(m, dtype=float)
    bad = (values < 0.0) | (values > params.M)
    return np.flatnonzero(bad)
