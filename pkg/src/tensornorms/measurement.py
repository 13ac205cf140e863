"""Angle and unit-vector line-of-sight measurements and their nonlinearity tensor.

Angles are ``theta = atan2(y, x)`` (azimuth) and ``phi = asin(z/|r|)``
(elevation). ``hbar_tensor`` maps the measurement's second derivative back
into position space through the Jacobian pseudoinverse, so its 2-norm
bounds the observable part of a linearized update error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigen import PowerIterConfig
from .exceptions import DegenerateGeometryError, DomainError, SizingError
from .norms import norm_2
from .tensor import Tensor1m

PINV_CUTOFF = 1e-12
POLE_TOL = 1e-14


@dataclass(frozen=True)
class MeasurementModel:
    kind: str

    def __post_init__(self):
        if self.kind not in ("angles", "unit_vector"):
            raise ValueError(f"unknown measurement kind {self.kind!r}")

    @property
    def dim_out(self) -> int:
        return 2 if self.kind == "angles" else 3

    @property
    def rank(self) -> int:
        """Rank of the Jacobian away from singular geometry."""
        return 2


ANGLES = MeasurementModel("angles")
UNIT_VECTOR = MeasurementModel("unit_vector")


def _angles(r, derivs):
    x, y, z = r
    s2 = x * x + y * y
    rho2 = s2 + z * z
    if s2 < POLE_TOL * max(rho2, 1e-300):
        raise DomainError("angles are undefined on the polar axis (x = y = 0)")
    s = np.sqrt(s2)
    rho = np.sqrt(rho2)
    h = np.array([np.arctan2(y, x), np.arcsin(np.clip(z / rho, -1.0, 1.0))])
    if derivs == 0:
        return h
    jac = np.array([
        [-y / s2, x / s2, 0.0],
        [-x * z / (s * rho2), -y * z / (s * rho2), s / rho2],
    ])
    if derivs == 1:
        return h, jac
    hess = np.zeros((2, 3, 3))
    s4, rho4 = s2 * s2, rho2 * rho2
    hess[0, 0, 0] = 2 * x * y / s4
    hess[0, 1, 1] = -2 * x * y / s4
    hess[0, 0, 1] = hess[0, 1, 0] = (y * y - x * x) / s4
    # Elevation: phi = atan2(z, s)
    hess[1, 0, 0] = -z * (1 / (rho2 * s) - 2 * x * x / (rho4 * s) - x * x / (rho2 * s**3))
    hess[1, 1, 1] = -z * (1 / (rho2 * s) - 2 * y * y / (rho4 * s) - y * y / (rho2 * s**3))
    hess[1, 0, 1] = hess[1, 1, 0] = x * y * z * (2 / (rho4 * s) + 1 / (rho2 * s**3))
    hess[1, 2, 2] = -2 * z * s / rho4
    hess[1, 0, 2] = hess[1, 2, 0] = x * (z * z - s2) / (s * rho4)
    hess[1, 1, 2] = hess[1, 2, 1] = y * (z * z - s2) / (s * rho4)
    return h, jac, Tensor1m(hess)


def _unit_vector(r, derivs):
    rho = float(np.linalg.norm(r))
    u = r / rho
    if derivs == 0:
        return u
    eye = np.eye(3)
    jac = (eye - np.outer(u, u)) / rho
    if derivs == 1:
        return u, jac
    hess = (-np.einsum("ij,k->ijk", eye, u) - np.einsum("ik,j->ijk", eye, u)
            - np.einsum("jk,i->ijk", eye, u) + 3 * np.einsum("i,j,k->ijk", u, u, u)) / rho**2
    return u, jac, Tensor1m(hess)


def evaluate(model: MeasurementModel, r, derivs: int = 0):
    """Measurement at ``r``; ``derivs`` of 1 or 2 also returns the Jacobian and the Hessian tensor."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise SizingError("position must be a 3-vector")
    if not np.all(np.isfinite(r)) or np.linalg.norm(r) == 0.0:
        raise DomainError("measurement undefined at the zero vector")
    if derivs not in (0, 1, 2):
        raise ValueError("derivs must be 0, 1 or 2")
    if model.kind == "angles":
        return _angles(r, derivs)
    return _unit_vector(r, derivs)


def pseudoinverse(jac: np.ndarray, expected_rank: int) -> np.ndarray:
    """Moore-Penrose inverse by SVD with a relative singular-value cutoff."""
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    keep = s > PINV_CUTOFF * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    if int(np.sum(keep)) < expected_rank:
        raise DegenerateGeometryError(
            f"measurement Jacobian has rank {int(np.sum(keep))} < {expected_rank}")
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def hbar_tensor(model: MeasurementModel, r) -> Tensor1m:
    """``H^+ h''``: the second derivative pulled back into position space (3 x 3 x 3)."""
    _, jac, hess = evaluate(model, r, 2)
    pinv = pseudoinverse(jac, model.rank)
    return Tensor1m(np.tensordot(pinv, hess.entries, axes=([1], [0])))


def observable_projector(model: MeasurementModel, r):
    """(Pi_H, Pi_perp): projectors onto the Jacobian row space and its complement."""
    _, jac = evaluate(model, r, 1)
    pi = pseudoinverse(jac, model.rank) @ jac
    pi = 0.5 * (pi + pi.T)
    return pi, np.eye(3) - pi


def hbar_norm(model: MeasurementModel, r, cfg: PowerIterConfig = PowerIterConfig()) -> float:
    return norm_2(hbar_tensor(model, r), cfg).value


def update_error_bound(model: MeasurementModel, r, delta_scale: float,
                       cfg: PowerIterConfig = PowerIterConfig()) -> float:
    """``1/2 |Hbar|_2 delta^2``, bounding the observable part of the update error."""
    return 0.5 * hbar_norm(model, r, cfg) * float(delta_scale) ** 2


def unit_sphere_point(theta_deg: float, phi_deg: float) -> np.ndarray:
    t, p = np.radians(theta_deg), np.radians(phi_deg)
    return np.array([np.cos(p) * np.cos(t), np.cos(p) * np.sin(t), np.sin(p)])


def unit_error_closed_form(theta, phi):
    """Closed-form ``|Hbar_u dr^2|_2^2`` at r = e_x for a unit ``dr`` with angles (theta, phi)."""
    c2t, c2p = np.cos(theta) ** 2, np.cos(phi) ** 2
    return 4 * c2t * c2p * (np.sin(theta) ** 2 * c2p + np.sin(phi) ** 2)
