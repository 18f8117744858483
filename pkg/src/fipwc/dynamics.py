"""Nonlinear equations of motion for the flexible inverted pendulum on a cart.

The pendulum is a beam (mass ``m_b``, centre of mass at ``l = L/2``) carrying a
tip mass ``m_t``.  Flexibility is represented by two linear springs, ``k1`` at
the tip and ``k2`` at the beam centre of mass.  Generalized coordinates are the
tip angle ``theta``, the beam angle ``phi`` and the cart position ``z``.

State ordering everywhere in this package::

    x = [z, z_dot, phi, phi_dot, theta, theta_dot]

Angles are in radians.  The accelerations are obtained by solving the 3x3
mass-matrix system ``M(q) qdd = f(q, qd, F)`` with rows ordered
``(theta, phi, z)``.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields, replace

import numpy as np
from numba import njit

# indices into the state vector
Z, Z_DOT, PHI, PHI_DOT, THETA, THETA_DOT = range(6)
STATE_NAMES = ("z", "z_dot", "phi", "phi_dot", "theta", "theta_dot")

SINGULAR_COND = 1e12


class SingularMassMatrixError(ArithmeticError):
    """Raised when the 3x3 mass matrix is numerically singular."""


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters; defaults are the nominal values used for the benchmark.

    ``l`` is not stored; it is always half of ``L``.
    """

    m_t: float = 0.019
    m_b: float = 0.0215
    m_c: float = 0.18
    L: float = 0.32
    k1: float = 2.0
    k2: float = 8.0
    b1: float = 0.001
    b2: float = 0.001
    b3: float = 12.0
    g: float = 9.81

    def __post_init__(self):
        for name in ("m_t", "m_b", "m_c", "L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("k1", "k2", "b1", "b2", "b3"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        for f in fields(self):
            if not np.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")

    @property
    def l(self) -> float:
        return 0.5 * self.L

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def undamped(self) -> "ModelParams":
        return replace(self, b1=0.0, b2=0.0, b3=0.0)


def mass_matrix(state, params: ModelParams) -> np.ndarray:
    """Coefficient matrix of ``(theta_dd, phi_dd, z_dd)``."""
    phi, theta = state[PHI], state[THETA]
    mt, mb, L, l = params.m_t, params.m_b, params.L, params.l
    m01 = mt * L * l * np.cos(theta - phi)
    m02 = mt * L * np.cos(theta)
    m12 = (mt + mb) * l * np.cos(phi)
    return np.array(
        [
            [mt * L * L, m01, m02],
            [m01, (mt + mb) * l * l, m12],
            [m02, m12, params.m_c + mb + mt],
        ]
    )


def generalized_forces(state, force: float, params: ModelParams) -> np.ndarray:
    """Right-hand side of the equations of motion (everything except ``M @ qdd``)."""
    z_dot, phi, phi_dot, theta, theta_dot = state[1:]
    mt, mb, L, l, g = params.m_t, params.m_b, params.L, params.l, params.g
    b1, b2, b3, k1, k2 = params.b1, params.b2, params.b3, params.k1, params.k2
    s_tp, c_tp = np.sin(theta - phi), np.cos(theta - phi)
    s_th, c_th = np.sin(theta), np.cos(theta)
    s_ph, c_ph = np.sin(phi), np.cos(phi)

    f_theta = -(
        mt * L * l * phi_dot**2 * s_tp
        + 0.5 * k1 * L * L * np.sin(2.0 * theta)
        - mt * g * L * s_th
        + b1 * L * z_dot * c_th
        + b1 * L * L * theta_dot
        + b1 * L * l * phi_dot * c_tp
    )
    f_phi = -(
        (b1 + b2) * l * z_dot * c_ph
        + (b1 + b2) * l * l * phi_dot
        + b1 * L * l * theta_dot * c_tp
        - mt * L * l * theta_dot**2 * s_tp
        + 0.5 * k2 * l * l * np.sin(2.0 * phi)
        - mb * g * l * s_ph
    )
    f_z = force - (
        -(mt + mb) * l * phi_dot**2 * s_ph
        - mt * L * theta_dot**2 * s_th
        + (b1 + b2 + b3) * z_dot
        + (b1 + b2) * l * phi_dot * c_ph
        + b1 * L * theta_dot * c_th
    )
    return np.array([f_theta, f_phi, f_z])


@njit(cache=True)
def _accel_kernel(x, force, p):
    # p = [m_t, m_b, m_c, L, k1, k2, b1, b2, b3, g]; returns (theta_dd, phi_dd, z_dd, ok)
    mt, mb, mc, L, k1, k2, b1, b2, b3, g = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9]
    l = 0.5 * L
    z_dot, phi, phi_dot, theta, theta_dot = x[1], x[2], x[3], x[4], x[5]
    s_tp = math.sin(theta - phi)
    c_tp = math.cos(theta - phi)
    s_th = math.sin(theta)
    c_th = math.cos(theta)
    s_ph = math.sin(phi)
    c_ph = math.cos(phi)

    a = np.empty((3, 3))
    a[0, 0] = mt * L * L
    a[0, 1] = a[1, 0] = mt * L * l * c_tp
    a[0, 2] = a[2, 0] = mt * L * c_th
    a[1, 1] = (mt + mb) * l * l
    a[1, 2] = a[2, 1] = (mt + mb) * l * c_ph
    a[2, 2] = mc + mb + mt
    b = np.empty(3)
    b[0] = -(
        mt * L * l * phi_dot * phi_dot * s_tp
        + k1 * L * L * s_th * c_th
        - mt * g * L * s_th
        + b1 * L * z_dot * c_th
        + b1 * L * L * theta_dot
        + b1 * L * l * phi_dot * c_tp
    )
    b[1] = -(
        (b1 + b2) * l * z_dot * c_ph
        + (b1 + b2) * l * l * phi_dot
        + b1 * L * l * theta_dot * c_tp
        - mt * L * l * theta_dot * theta_dot * s_tp
        + k2 * l * l * s_ph * c_ph
        - mb * g * l * s_ph
    )
    b[2] = force - (
        -(mt + mb) * l * phi_dot * phi_dot * s_ph
        - mt * L * theta_dot * theta_dot * s_th
        + (b1 + b2 + b3) * z_dot
        + (b1 + b2) * l * phi_dot * c_ph
        + b1 * L * theta_dot * c_th
    )

    # Gaussian elimination with partial pivoting
    norm1 = 0.0
    for j in range(3):
        norm1 = max(norm1, abs(a[0, j]) + abs(a[1, j]) + abs(a[2, j]))
    for k in range(3):
        piv = k
        for i in range(k + 1, 3):
            if abs(a[i, k]) > abs(a[piv, k]):
                piv = i
        if piv != k:
            for j in range(3):
                a[k, j], a[piv, j] = a[piv, j], a[k, j]
            b[k], b[piv] = b[piv], b[k]
        if not abs(a[k, k]) > norm1 / SINGULAR_COND:
            return 0.0, 0.0, 0.0, False
        for i in range(k + 1, 3):
            f = a[i, k] / a[k, k]
            for j in range(k, 3):
                a[i, j] -= f * a[k, j]
            b[i] -= f * b[k]
    q2 = b[2] / a[2, 2]
    q1 = (b[1] - a[1, 2] * q2) / a[1, 1]
    q0 = (b[0] - a[0, 1] * q1 - a[0, 2] * q2) / a[0, 0]
    return q0, q1, q2, True


@njit(cache=True)
def _deriv_kernel(x, force, p, out):
    th_dd, ph_dd, z_dd, ok = _accel_kernel(x, force, p)
    out[0] = x[1]
    out[1] = z_dd
    out[2] = x[3]
    out[3] = ph_dd
    out[4] = x[5]
    out[5] = th_dd
    return ok


@njit(cache=True)
def _rk4_kernel(x, force, p, dt):
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    ok = _deriv_kernel(x, force, p, k1)
    ok &= _deriv_kernel(x + 0.5 * dt * k1, force, p, k2)
    ok &= _deriv_kernel(x + 0.5 * dt * k2, force, p, k3)
    ok &= _deriv_kernel(x + dt * k3, force, p, k4)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), ok


def _check(ok: bool, state) -> None:
    if not ok:
        raise SingularMassMatrixError(f"mass matrix singular (condition estimate > {SINGULAR_COND:.0e}) near state {state}")


def accelerations(state, force: float, params: ModelParams) -> np.ndarray:
    """Return ``[theta_dd, phi_dd, z_dd]``."""
    x = np.asarray(state, dtype=float)
    th_dd, ph_dd, z_dd, ok = _accel_kernel(x, float(force), params.as_array())
    _check(ok, x)
    return np.array([th_dd, ph_dd, z_dd])


def derivative(state, force: float, params: ModelParams) -> np.ndarray:
    """Time derivative ``[z_dot, z_dd, phi_dot, phi_dd, theta_dot, theta_dd]``."""
    x = np.asarray(state, dtype=float)
    out = np.empty(6)
    _check(_deriv_kernel(x, float(force), params.as_array(), out), x)
    return out


def rk4_step(state, force: float, params: ModelParams, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step with ``force`` held constant (zero-order hold)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(state, dtype=float)
    new, ok = _rk4_kernel(x, float(force), params.as_array(), float(dt))
    _check(ok, x)
    return new


def kinetic_energy(state, params: ModelParams) -> float:
    z_dot, phi, phi_dot, theta, theta_dot = state[1:]
    mt, mb, L, l = params.m_t, params.m_b, params.L, params.l
    cart = 0.5 * params.m_c * z_dot**2
    beam = 0.5 * mb * (z_dot**2 + 2 * l * z_dot * phi_dot * np.cos(phi) + l * l * phi_dot**2)
    tip = 0.5 * mt * (
        z_dot**2
        + 2 * z_dot * (L * theta_dot * np.cos(theta) + l * phi_dot * np.cos(phi))
        + L * L * theta_dot**2
        + l * l * phi_dot**2
        + 2 * L * l * theta_dot * phi_dot * np.cos(theta - phi)
    )
    return float(cart + beam + tip)


def potential_energy(state, params: ModelParams) -> float:
    """Gravity plus spring energy, zero at upright rest."""
    phi, theta = state[PHI], state[THETA]
    mt, mb, L, l, g = params.m_t, params.m_b, params.L, params.l, params.g
    return float(
        -mt * g * L * (1 - np.cos(theta))
        + 0.5 * params.k1 * (L * np.sin(theta)) ** 2
        - mb * g * l * (1 - np.cos(phi))
        + 0.5 * params.k2 * (l * np.sin(phi)) ** 2
    )


def total_energy(state, params: ModelParams) -> float:
    return kinetic_energy(state, params) + potential_energy(state, params)


def numeric_jacobian(state, force: float, params: ModelParams, h: float = 1e-6):
    """Central-difference Jacobians ``(d f/d x, d f/d F)`` of :func:`derivative`."""
    x0 = np.asarray(state, dtype=float)
    a = np.zeros((6, 6))
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        a[:, j] = (derivative(x0 + e, force, params) - derivative(x0 - e, force, params)) / (2 * h)
    b = (derivative(x0, force + h, params) - derivative(x0, force - h, params)) / (2 * h)
    return a, b
