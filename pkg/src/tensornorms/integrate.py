"""Batch relative-motion propagation on a fixed DOP853 step schedule.

Perturbed trajectories are integrated as deviations from the reference
(Encke form) with exactly the same Runge-Kutta tableau and step times the
adaptive STT pass accepted. The STTs are then exact derivatives of this
discrete flow map, so nonlinear residuals such as
``dx_f - Phi dx_0`` are free of integrator bias and cancellation noise.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .dynamics import DynamicsModel, _CENTRIFUGAL, _CORIOLIS, acceleration_batch, deviation_acceleration

_A = _dop.A[: _dop.N_STAGES, : _dop.N_STAGES]
_B = _dop.B
_C = _dop.C[: _dop.N_STAGES]


def rk_step(rhs, t: float, y: np.ndarray, h: float) -> np.ndarray:
    """One 8th-order DOP853 step (the propagated solution, not the error estimate)."""
    k = [rhs(t, y)]
    for s in range(1, _dop.N_STAGES):
        dy = sum(_A[s, j] * k[j] for j in range(s) if _A[s, j] != 0.0)
        k.append(rhs(t + _C[s] * h, y + h * dy))
    return y + h * sum(_B[j] * k[j] for j in range(_dop.N_STAGES))


def integrate_fixed(rhs, y0: np.ndarray, steps) -> np.ndarray:
    y = np.array(y0, dtype=float)
    for t, t_next in zip(steps[:-1], steps[1:]):
        y = rk_step(rhs, t, y, t_next - t)
    return y


def gravity_jacobian_batch(model: DynamicsModel, r: np.ndarray) -> np.ndarray:
    """d(acceleration)/d(position) for each row of ``r`` (N x 3 x 3)."""
    out = np.zeros(r.shape[:-1] + (3, 3))
    eye = np.eye(3)
    for gm, pos in model.bodies():
        d = r - pos
        rho = np.sqrt(np.sum(d * d, axis=-1))[..., None, None]
        out = out - gm * (eye / rho**3 - 3.0 * d[..., :, None] * d[..., None, :] / rho**5)
    if model.kind == "cr3bp":
        out = out + _CENTRIFUGAL
    return out


class BatchPropagator:
    """Propagate many initial deviations from one reference state on a fixed schedule.

    Rows of the internal state hold ``[x_ref (6), dx (6), Phi (36, optional)]``;
    ``Phi`` is the STM of the perturbed trajectory itself.
    """

    def __init__(self, model: DynamicsModel, x_ref0, steps):
        self.model = model
        self.x_ref0 = np.asarray(x_ref0, dtype=float)
        self.steps = np.asarray(steps, dtype=float)

    def _rhs(self, with_stm: bool):
        model = self.model

        def rhs(t, y):
            r, v = y[:, 0:3], y[:, 3:6]
            dr, dv = y[:, 6:9], y[:, 9:12]
            out = np.empty_like(y)
            out[:, 0:3] = v
            out[:, 3:6] = acceleration_batch(model, r, v)
            out[:, 6:9] = dv
            out[:, 9:12] = deviation_acceleration(model, r, v, dr, dv)
            if with_stm:
                phi = y[:, 12:48].reshape(-1, 6, 6)
                g = gravity_jacobian_batch(model, r + dr)
                dphi = np.empty_like(phi)
                dphi[:, :3] = phi[:, 3:]
                dphi[:, 3:] = g @ phi[:, :3]
                if model.kind == "cr3bp":
                    dphi[:, 3:] += _CORIOLIS @ phi[:, 3:]
                out[:, 12:48] = dphi.reshape(-1, 36)
            return out

        return rhs

    def propagate(self, dx0, with_stm: bool = False):
        """Final deviations (N x 6), plus perturbed STMs (N x 6 x 6) when requested.

        Rows whose propagation produces non-finite values come back as NaN.
        """
        dx0 = np.atleast_2d(np.asarray(dx0, dtype=float))
        n = dx0.shape[0]
        width = 48 if with_stm else 12
        y0 = np.zeros((n, width))
        y0[:, 0:6] = self.x_ref0
        y0[:, 6:12] = dx0
        if with_stm:
            y0[:, 12:48] = np.eye(6).ravel()
        if self.steps.size < 2:
            y = y0
        else:
            with np.errstate(all="ignore"):
                y = integrate_fixed(self._rhs(with_stm), y0, self.steps)
        bad = ~np.all(np.isfinite(y), axis=1)
        y[bad] = np.nan
        dxf = y[:, 6:12]
        if with_stm:
            return dxf, y[:, 12:48].reshape(-1, 6, 6)
        return dxf
