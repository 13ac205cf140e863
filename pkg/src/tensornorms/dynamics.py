"""Two-body and CR3BP dynamics, their derivative tensors, and STT propagation.

States are ``(x, y, z, vx, vy, vz)``. Only the gravitational part of the
acceleration is nonlinear, so the second- and third-derivative tensors of
the vector field are nonzero only in the (acceleration | position, ...)
block; the code keeps those as small 3-index and 4-index arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import DomainError, MissingOrderError, PropagationError, SizingError
from .tensor import Tensor0m, Tensor1m

MU_EARTH = 398600.4418  # km^3/s^2
MU_MOON = 4902.8  # km^3/s^2
EARTH_MOON_MASS_RATIO = 81.30059
MU_EARTH_MOON = 1.0 / (EARTH_MOON_MASS_RATIO + 1.0)
MIN_RADIUS = 1e-12

KINDS = ("two_body", "two_body_nondim", "cr3bp", "free")

_EYE3 = np.eye(3)
_CENTRIFUGAL = np.diag([1.0, 1.0, 0.0])
_CORIOLIS = np.array([[0.0, 2.0, 0.0], [-2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


@dataclass(frozen=True)
class DynamicsModel:
    """Dynamics selection. ``mu`` is the gravitational parameter (two-body) or mass ratio (cr3bp)."""

    kind: str
    mu: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if self.kind == "cr3bp" and not 0.0 < self.mu < 1.0:
            raise ValueError("cr3bp mass ratio must lie in (0, 1)")
        if self.kind != "cr3bp" and not self.mu > 0.0:
            raise ValueError("mu must be positive")

    @classmethod
    def two_body(cls, mu: float = MU_EARTH) -> "DynamicsModel":
        return cls("two_body", float(mu))

    @classmethod
    def two_body_nondim(cls) -> "DynamicsModel":
        return cls("two_body_nondim", 1.0)

    @classmethod
    def cr3bp(cls, mu_star: float = MU_EARTH_MOON) -> "DynamicsModel":
        return cls("cr3bp", float(mu_star))

    @classmethod
    def free(cls) -> "DynamicsModel":
        """Force-free motion; every STT above first order vanishes."""
        return cls("free", 1.0)

    @property
    def dimension(self) -> int:
        return 6

    def bodies(self):
        """(gm, position) of each attracting point mass."""
        if self.kind in ("two_body", "two_body_nondim"):
            return [(self.mu, np.zeros(3))]
        if self.kind == "cr3bp":
            m = self.mu
            return [(1.0 - m, np.array([-m, 0.0, 0.0])), (m, np.array([1.0 - m, 0.0, 0.0]))]
        return []

    def describe(self) -> str:
        return f"{self.kind}(mu={self.mu!r})"


# -- point-mass gravity and its derivatives ---------------------------------

def _point_mass(gm: float, d: np.ndarray, order: int):
    """Acceleration ``-gm d/|d|^3`` and its position derivatives up to ``order``."""
    rho = float(np.sqrt(d @ d))
    if rho < MIN_RADIUS:
        raise DomainError(f"singular radius {rho!r}")
    r3, r5 = rho**3, rho**5
    out = [-gm * d / r3]
    if order >= 1:
        out.append(-gm * (_EYE3 / r3 - 3.0 * np.outer(d, d) / r5))
    if order >= 2:
        r7 = rho**7
        dd = np.einsum("i,j->ij", d, d)
        sym = (np.einsum("ij,k->ijk", _EYE3, d) + np.einsum("ik,j->ijk", _EYE3, d)
               + np.einsum("jk,i->ijk", _EYE3, d))
        out.append(3.0 * gm * sym / r5 - 15.0 * gm * np.einsum("ij,k->ijk", dd, d) / r7)
    if order >= 3:
        r9 = rho**9
        dd = np.outer(d, d)
        dddd = np.einsum("ij,kl->ijkl", dd, dd)
        deltas = (np.einsum("ij,kl->ijkl", _EYE3, _EYE3) + np.einsum("ik,jl->ijkl", _EYE3, _EYE3)
                  + np.einsum("il,jk->ijkl", _EYE3, _EYE3))
        mixed = (np.einsum("ij,kl->ijkl", _EYE3, dd) + np.einsum("ik,jl->ijkl", _EYE3, dd)
                 + np.einsum("il,jk->ijkl", _EYE3, dd) + np.einsum("jk,il->ijkl", _EYE3, dd)
                 + np.einsum("jl,ik->ijkl", _EYE3, dd) + np.einsum("kl,ij->ijkl", _EYE3, dd))
        out.append(3.0 * gm * deltas / r5 - 15.0 * gm * mixed / r7 + 105.0 * gm * dddd / r9)
    return out


def gravity_derivatives(model: DynamicsModel, r, order: int = 3):
    """Position-only gravity acceleration and its derivative arrays (3, 3x3, 3x3x3, 3x3x3x3)."""
    r = np.asarray(r, dtype=float)
    out = [np.zeros(3), np.zeros((3, 3)), np.zeros((3, 3, 3)), np.zeros((3, 3, 3, 3))][: order + 1]
    for gm, pos in model.bodies():
        for k, term in enumerate(_point_mass(gm, r - pos, order)):
            out[k] = out[k] + term
    return out


def vector_field(model: DynamicsModel, x, order: int = 0):
    """The vector field at ``x``; with ``order >= 1`` also its derivatives.

    Returns ``F`` alone for order 0, else the list ``[F, A, F2, F3][:order+1]``
    where ``A`` is the 6x6 Jacobian (ndarray) and ``F2``/``F3`` are Tensor1m.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (6,):
        raise SizingError("state must be a 6-vector")
    if not 0 <= order <= 3:
        raise ValueError("derivative order must be 0..3")
    r, v = x[:3], x[3:]
    g = gravity_derivatives(model, r, order)
    acc = g[0]
    if model.kind == "cr3bp":
        acc = acc + _CENTRIFUGAL @ r + _CORIOLIS @ v
    f = np.concatenate([v, acc])
    if order == 0:
        return f
    jac = np.zeros((6, 6))
    jac[:3, 3:] = _EYE3
    jac[3:, :3] = g[1]
    if model.kind == "cr3bp":
        jac[3:, :3] += _CENTRIFUGAL
        jac[3:, 3:] = _CORIOLIS
    out = [f, jac]
    if order >= 2:
        f2 = np.zeros((6, 6, 6))
        f2[3:, :3, :3] = g[2]
        out.append(Tensor1m(f2))
    if order >= 3:
        f3 = np.zeros((6, 6, 6, 6))
        f3[3:, :3, :3, :3] = g[3]
        out.append(Tensor1m(f3))
    return out


def acceleration_batch(model: DynamicsModel, r: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Acceleration for a stack of states (leading axes broadcast)."""
    acc = np.zeros_like(r)
    for gm, pos in model.bodies():
        d = r - pos
        rho = np.sqrt(np.sum(d * d, axis=-1, keepdims=True))
        acc = acc - gm * d / rho**3
    if model.kind == "cr3bp":
        acc = acc + r @ _CENTRIFUGAL.T + v @ _CORIOLIS.T
    return acc


def deviation_acceleration(model: DynamicsModel, r, v, dr, dv) -> np.ndarray:
    """``a(r+dr, v+dv) - a(r, v)`` without subtracting two nearly equal accelerations.

    Each point-mass term uses
    ``d/|d|^3 - d'/|d'|^3 = -dr/|d'|^3 + d (|d'|^3 - |d|^3) / (|d|^3 |d'|^3)``
    where ``d' = d + dr`` and the cube difference is expanded through ``|d'| - |d| = (2 d.dr + dr.dr) / (|d| + |d'|)``.
    """
    out = np.zeros(np.broadcast_shapes(np.shape(r), np.shape(dr)))
    for gm, pos in model.bodies():
        d = r - pos
        dp = d + dr
        rho = np.sqrt(np.sum(d * d, axis=-1, keepdims=True))
        rhop = np.sqrt(np.sum(dp * dp, axis=-1, keepdims=True))
        diff = (2.0 * np.sum(d * dr, axis=-1, keepdims=True) + np.sum(dr * dr, axis=-1, keepdims=True)) / (rho + rhop)
        cube_diff = diff * (rhop * rhop + rhop * rho + rho * rho)
        # -d'/|d'|^3 + d/|d|^3, rearranged so nothing large cancels
        term = -dr / rhop**3 + d * cube_diff / (rho**3 * rhop**3)
        out = out + gm * term
    if model.kind == "cr3bp":
        out = out + dr @ _CENTRIFUGAL.T + dv @ _CORIOLIS.T
    return out


def jacobi_constant(model: DynamicsModel, x) -> float:
    """``2U - |v|^2`` for the CR3BP; raises for other models."""
    if model.kind != "cr3bp":
        raise ValueError("Jacobi constant is defined for cr3bp only")
    x = np.asarray(x, dtype=float)
    r, v = x[:3], x[3:]
    pot = 0.5 * (r[0] ** 2 + r[1] ** 2)
    for gm, pos in model.bodies():
        pot += gm / np.linalg.norm(r - pos)
    return float(2.0 * pot - v @ v)


# -- variational equations --------------------------------------------------

def _sizes(order: int):
    return [6, 36, 216, 1296][: order + 1]


def pack(x, phi, psi2=None, psi3=None) -> np.ndarray:
    parts = [np.asarray(x, float).ravel(), np.asarray(phi, float).ravel()]
    if psi2 is not None:
        parts.append(np.asarray(psi2, float).ravel())
    if psi3 is not None:
        parts.append(np.asarray(psi3, float).ravel())
    return np.concatenate(parts)


def unpack(y: np.ndarray, order: int):
    out, i = [], 0
    shapes = [(6,), (6, 6), (6, 6, 6), (6, 6, 6, 6)][: order + 1]
    for shp in shapes:
        size = int(np.prod(shp))
        out.append(y[i:i + size].reshape(shp))
        i += size
    return out


def variational_rhs(model: DynamicsModel, order: int):
    """Right-hand side of the state plus variational equations up to ``order``.

    Third order: dPsi3 = F3 Phi Phi Phi + F2 (Psi Phi over the three index
    pairings) + A Psi3.
    """

    def rhs(t, y):
        parts = unpack(y, order)
        x = parts[0]
        g = gravity_derivatives(model, x[:3], order)
        f = np.concatenate([x[3:], g[0]])
        jac = np.zeros((6, 6))
        jac[:3, 3:] = _EYE3
        jac[3:, :3] = g[1]
        if model.kind == "cr3bp":
            f[3:] += _CENTRIFUGAL @ x[:3] + _CORIOLIS @ x[3:]
            jac[3:, :3] += _CENTRIFUGAL
            jac[3:, 3:] = _CORIOLIS
        phi = parts[1]
        out = [f, jac @ phi]
        if order >= 2:
            psi = parts[2]
            p = phi[:3]
            dpsi = np.einsum("ia,ajk->ijk", jac, psi)
            dpsi[3:] += np.einsum("iab,aj,bk->ijk", g[2], p, p, optimize=True)
            out.append(dpsi)
        if order >= 3:
            psi3 = parts[3]
            q = psi[:3]
            dpsi3 = np.einsum("ia,ajkl->ijkl", jac, psi3)
            cross = np.einsum("iab,ajk,bl->ijkl", g[2], q, p, optimize=True)
            cross = cross + np.transpose(cross, (0, 1, 3, 2)) + np.transpose(cross, (0, 3, 1, 2))
            dpsi3[3:] += cross + np.einsum("iabc,aj,bk,cl->ijkl", g[3], p, p, p, optimize=True)
            out.append(dpsi3)
        return np.concatenate([o.ravel() for o in out])

    return rhs


def state_scales(model: DynamicsModel, x0) -> np.ndarray:
    """Per-component magnitude used to scale absolute tolerances."""
    x0 = np.asarray(x0, dtype=float)
    if model.kind == "two_body":
        length = max(float(np.linalg.norm(x0[:3])), 1e-300)
        speed = max(float(np.linalg.norm(x0[3:])), math.sqrt(model.mu / length))
        return np.array([length] * 3 + [speed] * 3)
    return np.ones(6)


def atol_vector(scales: np.ndarray, order: int, atol: float) -> np.ndarray:
    """Absolute tolerances: the state scale for x and its ratios for each tensor slot."""
    s = scales
    inv = 1.0 / s
    parts = [s, np.einsum("i,j->ij", s, inv)]
    if order >= 2:
        parts.append(np.einsum("i,j,k->ijk", s, inv, inv))
    if order >= 3:
        parts.append(np.einsum("i,j,k,l->ijkl", s, inv, inv, inv))
    return atol * np.concatenate([p.ravel() for p in parts])


@dataclass
class SttStack:
    """Reference trajectory segment with its state transition tensors."""

    x0: np.ndarray
    t0: float
    tf: float
    xf: np.ndarray
    phi: np.ndarray
    psi2: Optional[Tensor1m] = None
    psi3: Optional[Tensor1m] = None
    model: Optional[DynamicsModel] = None
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rtol: float = 1e-12
    atol: float = 1e-12
    nfev: int = 0

    @property
    def order(self) -> int:
        return 1 + (self.psi2 is not None) + (self.psi3 is not None)

    @property
    def dim(self) -> int:
        return self.phi.shape[0]

    def stt(self, m: int):
        """Tensor of the flow derivative of order ``m`` (1 gives Phi as a Tensor1m)."""
        if m == 1:
            return Tensor1m(self.phi)
        t = {2: self.psi2, 3: self.psi3}.get(m)
        if t is None:
            raise MissingOrderError(f"order-{m} STT not available (stack order {self.order})")
        return t

    @classmethod
    def from_tensors(cls, phi, psi2=None, psi3=None) -> "SttStack":
        """Wrap hand-built tensors of any dimension (no trajectory attached)."""
        phi = np.array(phi, dtype=float)
        n = phi.shape[0]
        wrap = lambda t: None if t is None else (t if isinstance(t, Tensor1m) else Tensor1m(t))
        return cls(np.zeros(n), 0.0, 0.0, np.zeros(n), phi, wrap(psi2), wrap(psi3))


def _integrate(model, y0, t0, tf, order, scales, rtol, atol):
    rhs = variational_rhs(model, order)
    try:
        sol = solve_ivp(rhs, (t0, tf), y0, method="DOP853", rtol=rtol,
                        atol=atol_vector(scales, order, atol))
    except DomainError as exc:
        raise PropagationError(f"propagation hit a singularity: {exc}", None) from exc
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        t_fail = float(sol.t[-1]) if sol.t.size else t0
        raise PropagationError(f"integration failed at t={t_fail!r}: {sol.message}", t_fail)
    return sol


def _stack_from(model, x0, t0, tf, y, order, steps, rtol, atol, nfev):
    parts = unpack(y, order)
    return SttStack(
        x0=np.array(x0, dtype=float), t0=float(t0), tf=float(tf), xf=parts[0].copy(),
        phi=parts[1].copy(),
        psi2=Tensor1m(parts[2]) if order >= 2 else None,
        psi3=Tensor1m(parts[3]) if order >= 3 else None,
        model=model, steps=np.asarray(steps, dtype=float), rtol=rtol, atol=atol, nfev=nfev,
    )


def _initial(x0, order):
    return pack(x0, np.eye(6), np.zeros((6, 6, 6)) if order >= 2 else None,
                np.zeros((6, 6, 6, 6)) if order >= 3 else None)


def propagate_stt(model: DynamicsModel, x0, t0: float, tf: float, order: int = 2,
                  rtol: float = 1e-12, atol: float = 1e-12) -> SttStack:
    """Integrate the reference state and its STTs up to ``order`` from t0 to tf.

    One adaptive DOP853 pass over the whole augmented system. ``atol`` is
    relative to the state scales (component-wise), so it reads as a
    nondimensional tolerance for every model. The accepted step times are
    kept in ``steps``.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (6,):
        raise SizingError("x0 must be a 6-vector")
    y0 = _initial(x0, order)
    if tf == t0:
        return _stack_from(model, x0, t0, tf, y0, order, [t0], rtol, atol, 0)
    sol = _integrate(model, y0, t0, tf, order, state_scales(model, x0), rtol, atol)
    return _stack_from(model, x0, t0, tf, sol.y[:, -1], order, sol.t, rtol, atol, sol.nfev)


def propagate_sweep(model: DynamicsModel, x0, t0: float, times, order: int = 2,
                    rtol: float = 1e-12, atol: float = 1e-12) -> list[SttStack]:
    """STT stacks from ``t0`` to every time in ``times`` (monotone), integrated piecewise.

    Each stack's ``steps`` is the full accepted-step schedule from ``t0``.
    """
    x0 = np.asarray(x0, dtype=float)
    times = [float(t) for t in times]
    direction = np.sign(times[-1] - t0) if times else 1.0
    scales = state_scales(model, x0)
    y = _initial(x0, order)
    t_prev = t0
    steps = [t0]
    nfev = 0
    out = []
    for t in times:
        if (t - t_prev) * direction < 0:
            raise ValueError("sweep times must be monotone away from t0")
        if t != t_prev:
            sol = _integrate(model, y, t_prev, t, order, scales, rtol, atol)
            y = sol.y[:, -1]
            steps.extend(sol.t[1:].tolist())
            nfev += sol.nfev
            t_prev = t
        out.append(_stack_from(model, x0, t0, t, y.copy(), order, list(steps), rtol, atol, nfev))
    return out


def flow(model: DynamicsModel, x0, t0: float, tf: float, rtol: float = 1e-12, atol: float = 1e-12) -> np.ndarray:
    """Final state only (adaptive DOP853)."""
    return propagate_stt(model, x0, t0, tf, order=1, rtol=rtol, atol=atol).xf


# -- Cauchy-Green tensors ---------------------------------------------------

def cauchy_green(stack: SttStack, order: int) -> Tensor0m:
    """Coefficient tensor of the order-``order`` term in |delta x_f|^2.

    Sum over p+q=order (p,q >= 1) of ``(1/(p! q!)) Psi(p)^T Psi(q)`` with the
    output index contracted; Psi(1) is Phi. Not symmetrized.
    """
    if order not in (2, 3, 4):
        raise ValueError("cauchy_green order must be 2, 3 or 4")
    total = None
    for p in range(1, order):
        q = order - p
        a = stack.stt(p).entries
        b = stack.stt(q).entries
        term = np.tensordot(a, b, axes=([0], [0])) / (math.factorial(p) * math.factorial(q))
        total = term if total is None else total + term
    return Tensor0m(total, symmetric=False)
