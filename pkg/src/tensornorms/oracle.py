"""Brute-force checks of tensor error bounds against the full nonlinear dynamics.

Each objective maps a batch of 3-vectors (rows) to nonlinear error values,
with NaN marking rows whose propagation or shooting failed. Three
estimates of the max over the sphere of radius R are compared with the
tensor bound: uniform sampling, evaluation along the norm maximizer, and a
local sphere-constrained optimization started from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .dynamics import SttStack
from .eigen import PowerIterConfig
from .guidance import (GuidanceErrorTensor, bound_curve, error_tensor, guidance_velocity,
                       rendezvous_velocity, tensor_norm)
from .integrate import BatchPropagator

OBJECTIVE_KINDS = {
    "propagation_vv": "propagation",
    "miss_E1": "miss",
    "miss_E2": "miss",
    "velocity_err_1": "velocity",
    "velocity_err_2": "velocity",
    "rendezvous_F1": "rendezvous",
}


class Objective:
    """Batch objective over input rows of length ``dim``."""

    dim = 3
    name = "objective"

    def __call__(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class NormObjective(Objective):
    """``|M x|_2`` for a fixed matrix; a closed-form test objective."""

    name = "matrix_norm"

    def __init__(self, mat):
        self.mat = np.asarray(mat, dtype=float)
        self.dim = self.mat.shape[1]

    def __call__(self, points):
        return np.linalg.norm(np.atleast_2d(points) @ self.mat.T, axis=1)


class _StackObjective(Objective):
    def __init__(self, stack: SttStack):
        self.stack = stack
        self.prop = BatchPropagator(stack.model, stack.x0, stack.steps)

    def _states(self, dr, dv):
        return np.hstack([dr, dv])


class PropagationObjective(_StackObjective):
    """Position error of the linear prediction for an initial velocity offset."""

    name = "propagation"

    def __call__(self, dv):
        dv = np.atleast_2d(dv)
        dx0 = self._states(np.zeros_like(dv), dv)
        dxf = self.prop.propagate(dx0)
        lin = dx0 @ self.stack.phi.T
        return np.linalg.norm(dxf[:, :3] - lin[:, :3], axis=1)


class MissObjective(_StackObjective):
    """Miss distance at t_f when the initial velocity is solved to first or second order."""

    name = "miss"

    def __init__(self, stack: SttStack, order: int = 1):
        super().__init__(stack)
        self.order = order

    def __call__(self, target):
        target = np.atleast_2d(target)
        dv = guidance_velocity(self.stack, target, self.order)
        dxf = self.prop.propagate(self._states(np.zeros_like(dv), dv))
        return np.linalg.norm(dxf[:, :3] - target, axis=1)


class VelocityObjective(_StackObjective):
    """Error of the first/second-order initial velocity against the shooting solution."""

    name = "velocity"

    def __init__(self, stack: SttStack, order: int = 1, max_newton: int = 25):
        super().__init__(stack)
        self.order = order
        self.max_newton = max_newton

    def true_velocity(self, target: np.ndarray):
        """Newton shooting on the position-targeting problem; rows that fail are NaN."""
        target = np.atleast_2d(target)
        dv = guidance_velocity(self.stack, target, 2 if self.stack.order >= 2 else 1)
        best = np.full(target.shape[0], np.inf)
        best_dv = np.full_like(dv, np.nan)
        for _ in range(self.max_newton):
            dxf, stm = self.prop.propagate(self._states(np.zeros_like(dv), dv), with_stm=True)
            resid = dxf[:, :3] - target
            err = np.linalg.norm(resid, axis=1)
            better = err < best
            best = np.where(better, err, best)
            best_dv[better] = dv[better]
            step = np.full_like(dv, np.nan)
            for i in range(dv.shape[0]):
                if not np.all(np.isfinite(stm[i])):
                    continue
                try:
                    step[i] = lu_solve(lu_factor(stm[i, 0:3, 3:6]), resid[i])
                except (ValueError, np.linalg.LinAlgError):
                    continue
            small = np.linalg.norm(step, axis=1) <= 1e-15 * np.linalg.norm(dv, axis=1)
            dv = dv - np.nan_to_num(step)
            if np.all(small | ~np.isfinite(err)):
                break
        scale = np.maximum(np.linalg.norm(target, axis=1), np.linalg.norm(self.stack.x0[:3]) * 1e-6)
        failed = ~(best <= 1e-10 * scale)
        best_dv[failed] = np.nan
        return best_dv

    def __call__(self, target):
        target = np.atleast_2d(target)
        approx = guidance_velocity(self.stack, target, self.order)
        return np.linalg.norm(self.true_velocity(target) - approx, axis=1)


class RendezvousObjective(_StackObjective):
    """Final distance from the reference after a linear rendezvous burn from ``dr0``."""

    name = "rendezvous"

    def __call__(self, dr0):
        dr0 = np.atleast_2d(dr0)
        dv = rendezvous_velocity(self.stack, dr0)
        dxf = self.prop.propagate(self._states(dr0, dv))
        return np.linalg.norm(dxf[:, :3], axis=1)


def objective_for(stack: SttStack, kind: str) -> Objective:
    if kind == "propagation_vv":
        return PropagationObjective(stack)
    if kind in ("miss_E1", "miss_E2"):
        return MissObjective(stack, 1 if kind == "miss_E1" else 2)
    if kind in ("velocity_err_1", "velocity_err_2"):
        return VelocityObjective(stack, int(kind[-1]))
    if kind == "rendezvous_F1":
        return RendezvousObjective(stack)
    raise ValueError(f"no objective for kind {kind!r}")


# -- the three estimates ----------------------------------------------------

def sphere_samples(dim: int, n: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def sample_sphere_max(objective: Objective, radius: float, n: int, seed=0, batch: int = 5000):
    """Max of the objective over ``n`` uniform sphere samples: (value, argmax, n_failed)."""
    if n < 1:
        raise ValueError("need at least one sample")
    dirs = sphere_samples(objective.dim, n, seed)
    vals = np.concatenate([objective(radius * dirs[i:i + batch]) for i in range(0, n, batch)])
    ok = np.isfinite(vals)
    if not np.any(ok):
        return float("nan"), None, n
    i = int(np.argmax(np.where(ok, vals, -np.inf)))
    return float(vals[i]), radius * dirs[i], int(np.sum(~ok))


def eigvec_eval(objective: Objective, direction, radius: float) -> float:
    """Larger objective value at +/- R along a unit direction."""
    d = np.asarray(direction, dtype=float)
    vals = objective(np.vstack([radius * d, -radius * d]))
    return float(np.nanmax(vals)) if np.any(np.isfinite(vals)) else float("nan")


@dataclass
class OptSettings:
    fd_step: float = 1e-7
    step_tol: float = 1e-10
    max_iters: int = 500
    armijo: float = 1e-4


def local_opt_max(objective: Objective, radius: float, start, settings: OptSettings = OptSettings()):
    """Sphere-constrained local maximization from ``start`` (unit vector).

    Projected gradient ascent with central-difference gradients (step
    ``fd_step * R``), retraction to the sphere, and an adaptive step
    with backtracking. Both signs of ``start`` are tried. Returns
    (value, argmax, iterations).
    """
    if radius == 0.0:
        x = np.asarray(start, dtype=float) * 0.0
        return float(objective(x[None])[0]), x, 0
    start = np.asarray(start, dtype=float)
    start = start / np.linalg.norm(start)
    cands = np.vstack([radius * start, -radius * start])
    vals = objective(cands)
    if not np.any(np.isfinite(vals)):
        return float("nan"), None, 0
    k = int(np.nanargmax(vals))
    x, val = cands[k], float(vals[k])
    dim = x.size
    h = settings.fd_step * radius
    step = 0.01 * radius
    it = 0
    for it in range(1, settings.max_iters + 1):
        probes = np.vstack([x + h * np.eye(dim), x - h * np.eye(dim)])
        fv = objective(probes)
        if not np.all(np.isfinite(fv)):
            break
        grad = (fv[:dim] - fv[dim:]) / (2 * h)
        tang = grad - (grad @ x) * x / radius**2
        gn = np.linalg.norm(tang)
        if gn == 0.0:
            break
        direction = tang / gn
        accepted = False
        while step >= settings.step_tol * radius:
            cand = x + step * direction
            cand = radius * cand / np.linalg.norm(cand)
            cval = float(objective(cand[None])[0])
            moved = np.linalg.norm(cand - x)
            if np.isfinite(cval) and cval > val + settings.armijo * gn * moved:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        x, val = cand, cval
        if moved < settings.step_tol * radius:
            break
        step *= 2.0
    return val, x, it


# -- protocol ---------------------------------------------------------------

@dataclass
class OracleReport:
    R: float
    bound: float
    eigvec_eval: float
    sampled_max: float
    optimized_max: float
    rel_err_bound: float
    rel_err_sampled: float
    rel_err_eigvec: float
    n_failed_samples: int
    samples_used: int = 0
    opt_iterations: int = 0
    extra: dict = field(default_factory=dict)


def rel_gap(value: float, reference: float) -> float:
    """``|value - reference| / |reference|``, zero when both vanish."""
    if reference == 0.0:
        return 0.0 if value == 0.0 else float("inf")
    return abs(value - reference) / abs(reference)


def evaluate_scale(objective: Objective, radius: float, bound: float, direction, n_samples: int, seed,
                   enable_opt: bool = True, settings: OptSettings = OptSettings()) -> OracleReport:
    sampled, _, failed = sample_sphere_max(objective, radius, n_samples, seed) if n_samples > 0 else (float("nan"), None, 0)
    eig = eigvec_eval(objective, direction, radius)
    if enable_opt:
        opt, _, iters = local_opt_max(objective, radius, direction, settings)
        opt = max(opt, eig)
    else:
        opt, iters = eig, 0
    return OracleReport(
        R=float(radius), bound=float(bound), eigvec_eval=eig, sampled_max=sampled, optimized_max=opt,
        rel_err_bound=rel_gap(bound, opt), rel_err_sampled=rel_gap(sampled, opt),
        rel_err_eigvec=rel_gap(eig, opt), n_failed_samples=failed, samples_used=n_samples - failed,
        opt_iterations=iters,
    )


def run_protocol(stack: SttStack, kind: str, scales, n_samples: int = 5000, seed: int = 0,
                 enable_opt: bool = True, cfg: PowerIterConfig = PowerIterConfig(),
                 tensor: GuidanceErrorTensor | None = None, executor=None) -> list[OracleReport]:
    """Bound, sampled, eigenvector and optimized maxima for each scale R.

    Scale ``i`` samples with seed ``(seed, i)`` so results do not depend on
    execution order. ``executor`` (a concurrent.futures executor) runs
    scales in parallel when given.
    """
    if tensor is None:
        tensor = error_tensor(stack, kind)
    norm = tensor_norm(tensor, cfg)
    bounds = bound_curve(tensor, scales, norm=norm)
    objective = objective_for(stack, kind)
    jobs = [(objective, r, b, norm.maximizer, n_samples, (seed, i), enable_opt)
            for i, (r, b) in enumerate(bounds)]
    if executor is None:
        return [evaluate_scale(*job) for job in jobs]
    return list(executor.map(_evaluate_job, jobs))


def _evaluate_job(job):
    return evaluate_scale(*job)
