"""Nonlinearity indices built from STTs and Cauchy-Green tensors.

Quotient indices divide a norm of the second-order STT by a norm of the
STM. DEMoN-m is ``sup |Psi(m) x^m| / |Phi x|`` over unit ``x``; TEMoN is
``R^(m-2) sup |C(m) x^m| / (C(2) x^2)``; the beth bound sums DEMoN terms.

For DEMoN and TEMoN the eigenvector of the pulled-back problem (square-root
factor ``Phi``) is only a starting point: the eigenproblem maximizes a
quotient with a different denominator power, so the value reported comes
from a sphere-constrained ascent of the actual quotient seeded by it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .dynamics import DynamicsModel, SttStack, cauchy_green, propagate_stt
from .eigen import PowerIterConfig, d_eig_max_square, shifted_z_eig_max
from .exceptions import DegenerateGeometryError
from .integrate import BatchPropagator
from .norms import (norm_2, norm_2_upper_flatten, norm_frob2, norm_frobinf_upper, norm_inf2)
from .tensor import Tensor0m, Tensor1m, frobenius_norm, symmetrize

QUOTIENT_KINDS = ("nu_star", "nu_2", "nu_frob2", "nu_inf2", "nu_box", "nu_2_upper")


@dataclass
class IndexResult:
    value: float
    direction: Optional[np.ndarray]
    kind: str
    order_m: Optional[int] = None
    converged: bool = True
    n_failed: int = 0


# -- quotient indices --------------------------------------------------------

def stt_norm_2(psi: Tensor1m, phi: np.ndarray, cfg: PowerIterConfig = PowerIterConfig()):
    """2-norm of an STT started both from Phi's dominant right singular vector and the unfolding."""
    _, _, vt = np.linalg.svd(phi)
    seeded = norm_2(psi, PowerIterConfig(cfg.tol, cfg.max_iters, cfg.restarts, cfg.seed, vt[0]))
    if cfg.initial_guess is not None:
        return seeded
    plain = norm_2(psi, cfg)
    return seeded if seeded.value >= plain.value else plain


def nu_quotient(stack: SttStack, kind: str, cfg: PowerIterConfig = PowerIterConfig()) -> IndexResult:
    """Norm of Psi over a norm of Phi.

    ``nu_star`` and ``nu_box`` divide by the Frobenius norm of Phi; the
    induced kinds divide by the matching induced norm (the (Frobenius,2)
    norm of a matrix is its 2-norm).
    """
    psi = stack.stt(2)
    phi = stack.phi
    if kind == "nu_star":
        num, den = norm_frob2(psi), frobenius_norm(phi)
    elif kind == "nu_2":
        num, den = stt_norm_2(psi, phi, cfg), np.linalg.norm(phi, 2)
    elif kind == "nu_frob2":
        num, den = norm_frob2(psi), np.linalg.norm(phi, 2)
    elif kind == "nu_inf2":
        num, den = norm_inf2(psi), norm_inf2(Tensor1m(phi)).value
    elif kind == "nu_box":
        num, den = norm_frobinf_upper(psi), frobenius_norm(phi)
    elif kind == "nu_2_upper":
        num, den = norm_2_upper_flatten(psi), np.linalg.norm(phi, 2)
    else:
        raise ValueError(f"unknown quotient index {kind!r}; choose from {', '.join(QUOTIENT_KINDS)}")
    if not den > 0.0:
        raise DegenerateGeometryError(f"{kind}: zero denominator norm of Phi")
    return IndexResult(float(num.value / den), num.maximizer, kind, 2, num.converged)


# -- sphere-constrained ascent ---------------------------------------------

def sphere_ascent(fun: Callable, x0: np.ndarray, max_iters: int = 3000, gtol: float = 1e-12):
    """Maximize ``fun`` (returning value, gradient) on the unit sphere from ``x0``.

    Projected gradient steps with retraction and an adaptive step length
    under a sufficient-increase backtracking rule. Stops once the tangent gradient is below ``gtol`` relative
    to the value, or after three steps that change the value by less than
    machine precision. Returns (value, x).
    """
    x = x0 / np.linalg.norm(x0)
    val, grad = fun(x)
    alpha = 1.0 / max(np.linalg.norm(grad), 1e-300)
    stalls = 0
    for _ in range(max_iters):
        g = grad - (grad @ x) * x
        gn = np.linalg.norm(g)
        if not np.isfinite(gn) or gn <= gtol * max(abs(val), 1e-300):
            break
        improved = False
        for _ in range(60):
            cand = x + alpha * g
            cand /= np.linalg.norm(cand)
            cval, cgrad = fun(cand)
            # Sufficient increase (Armijo) keeps the iteration from zig-zagging.
            if np.isfinite(cval) and cval > val and cval - val >= 0.1 * alpha * gn * gn:
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        stalls = stalls + 1 if cval - val <= 1e-16 * abs(cval) else 0
        x, val, grad = cand, cval, cgrad
        alpha *= 2.0
        if stalls >= 3:
            break
    return float(val), x


def quotient_max(fun: Callable, x0: np.ndarray, polish_iters: int = 300):
    """Local max of ``fun`` on the unit sphere: BFGS on ``z -> fun(z/|z|)``, then projected polish.

    The scale-invariant parametrization lets a quasi-Newton method absorb
    the stiffness that an ill-conditioned STM puts into the quotients.
    """
    def neg(z):
        n = np.linalg.norm(z)
        x = z / n
        val, grad = fun(x)
        return -val, -(grad - (grad @ x) * x) / n

    z0 = x0 / np.linalg.norm(x0)
    res = minimize(neg, z0, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
    z = res.x if np.all(np.isfinite(res.x)) and np.linalg.norm(res.x) > 0 else z0
    if -res.fun < fun(z0)[0]:
        z = z0
    return sphere_ascent(fun, z, max_iters=polish_iters)


def _candidate_starts(phi: np.ndarray, n: int, extra, seed: int, restarts: int):
    """Seeds for the quotient ascent: eigen candidates, Phi's singular vectors, random directions."""
    starts = [np.asarray(e, dtype=float) for e in extra if e is not None and np.linalg.norm(e) > 0]
    _, _, vt = np.linalg.svd(phi)
    starts.extend(vt)
    rng = np.random.default_rng(seed)
    starts.extend(rng.standard_normal((restarts, n)))
    return starts


def _phi_invertible(phi: np.ndarray) -> bool:
    s = np.linalg.svd(phi, compute_uv=False)
    return s[-1] > 1e-12 * s[0]


# -- DEMoN ----------------------------------------------------------------

def demon_quotient(stack: SttStack, m: int):
    """(value, gradient) of ``|Psi(m) x^m| / |Phi x|``; zero where Phi x vanishes."""
    psi = stack.stt(m).entries
    phi = stack.phi

    def fun(x):
        p = psi
        for _ in range(m - 1):
            p = p @ x
        num_vec = p @ x
        num = float(np.linalg.norm(num_vec))
        lin = phi @ x
        den = float(np.linalg.norm(lin))
        if den <= 1e-300 or num == 0.0:
            return 0.0, np.zeros_like(x)
        g_num = m * (p.T @ num_vec) / num
        g_den = phi.T @ lin / den
        return num / den, g_num / den - num * g_den / den**2

    return fun


def demon(stack: SttStack, m: int = 2, cfg: PowerIterConfig = PowerIterConfig(),
          ascent_restarts: int = 10) -> IndexResult:
    if m not in (2, 3):
        raise ValueError("DEMoN is implemented for m = 2 or 3")
    psi = stack.stt(m)
    n = stack.dim
    if frobenius_norm(psi) == 0.0:
        return IndexResult(0.0, np.eye(n)[0], f"demon_{m}", m)
    candidates = []
    converged = True
    if _phi_invertible(stack.phi):
        res = d_eig_max_square(psi, cfg=cfg, sqrt_factor=stack.phi)
        converged = res.converged
        candidates.append(res.eigenvector)
    fun = demon_quotient(stack, m)
    best_val, best_x = -1.0, None
    for x0 in _candidate_starts(stack.phi, n, candidates, cfg.seed, ascent_restarts):
        val, x = quotient_max(fun, x0)
        if val > best_val:
            best_val, best_x = val, x
    return IndexResult(best_val, best_x, f"demon_{m}", m, converged)


# -- TEMoN ----------------------------------------------------------------

def temon_quotient(c_m: Tensor0m, c_2: np.ndarray):
    """(value, gradient) of ``|C(m) x^m| / (x^T C(2) x)`` with C(m) symmetric."""
    e = c_m.entries
    m = c_m.order

    def fun(x):
        p = e
        for _ in range(m - 1):
            p = p @ x
        top = float(p @ x)
        quad = c_2 @ x
        bot = float(x @ quad)
        if bot <= 1e-300 or top == 0.0:
            return 0.0, np.zeros_like(x)
        sign = 1.0 if top > 0 else -1.0
        return abs(top) / bot, sign * (m * p / bot - top * 2.0 * quad / bot**2)

    return fun


def _pull_back(c: np.ndarray, phi_inv: np.ndarray) -> np.ndarray:
    out = c
    for axis in range(c.ndim):
        out = np.moveaxis(np.tensordot(out, phi_inv, axes=([axis], [0])), -1, axis)
    return out


def temon(stack: SttStack, m: int, radius: float, cfg: PowerIterConfig = PowerIterConfig(),
          ascent_restarts: int = 10) -> IndexResult:
    """TEMoN of order m at radius R, ``R^(m-2)`` times the unit-sphere quotient max."""
    if m not in (3, 4):
        raise ValueError("TEMoN is implemented for m = 3 or 4")
    c_m = symmetrize(cauchy_green(stack, m))
    c_2 = cauchy_green(stack, 2).entries
    n = stack.dim
    scale = float(radius) ** (m - 2)
    if frobenius_norm(c_m) == 0.0:
        return IndexResult(0.0, np.eye(n)[0], f"temon_{m}", m)
    candidates = []
    converged = True
    if _phi_invertible(stack.phi):
        phi_inv = np.linalg.inv(stack.phi)
        pulled = _pull_back(c_m.entries, phi_inv)
        for sign in (1.0, -1.0):
            res = shifted_z_eig_max(Tensor0m(sign * pulled, symmetric=True), cfg)
            converged = converged and res.converged
            candidates.append(phi_inv @ res.eigenvector)
    fun = temon_quotient(c_m, c_2)
    best_val, best_x = -1.0, None
    for x0 in _candidate_starts(stack.phi, n, candidates, cfg.seed, ascent_restarts):
        val, x = quotient_max(fun, x0)
        if val > best_val:
            best_val, best_x = val, x
    return IndexResult(scale * best_val, best_x, f"temon_{m}", m, converged)


# -- beth bound -------------------------------------------------------------

def beth_bound(stack: SttStack, m: int, radius: float, cfg: PowerIterConfig = PowerIterConfig()) -> IndexResult:
    """``sum_{l=2..m} R^(l-1)/l! DEMoN-l``."""
    if m not in (2, 3):
        raise ValueError("beth bound needs DEMoN orders 2..m with m <= 3")
    total = 0.0
    direction = None
    conv = True
    for order in range(2, m + 1):
        d = demon(stack, order, cfg)
        total += float(radius) ** (order - 1) / math.factorial(order) * d.value
        conv = conv and d.converged
        if order == 2:
            direction = d.direction
    return IndexResult(total, direction, "beth_bound", m, conv)


def beth_quotient(stack: SttStack, dx) -> np.ndarray:
    """Higher-order part of the Taylor series over the linear part, per row of ``dx``."""
    dx = np.atleast_2d(dx)
    lin = dx @ stack.phi.T
    hot = np.zeros_like(lin)
    for order in range(2, stack.order + 1):
        hot += _contract_rows(stack.stt(order).entries, dx) / math.factorial(order)
    den = np.linalg.norm(lin, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(den > 0, np.linalg.norm(hot, axis=1) / den, 0.0)
    return q


def _contract_rows(t: np.ndarray, dx: np.ndarray) -> np.ndarray:
    out = np.broadcast_to(t, (dx.shape[0],) + t.shape)
    for _ in range(t.ndim - 1):
        out = np.einsum("n...j,nj->n...", out, dx)
    return out


# -- sampled index -----------------------------------------------------------

def nu_sampled(model: DynamicsModel, x0, t0: float, tf: float, radius: float, samples: int, seed: int,
               rtol: float = 1e-12, atol: float = 1e-12) -> IndexResult:
    """Max over sphere samples of ``|Phi(x0 + dx) - Phi(x0)|_F / |Phi(x0)|_F``.

    Perturbed STMs are integrated on the reference step schedule. Samples
    whose propagation fails are skipped and counted.
    """
    if samples < 1 or not radius > 0:
        raise ValueError("need samples >= 1 and radius > 0")
    ref = propagate_stt(model, x0, t0, tf, order=1, rtol=rtol, atol=atol)
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((samples, 6))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    prop = BatchPropagator(model, x0, ref.steps)
    _, stms = prop.propagate(np.vstack([np.zeros(6), radius * dirs]), with_stm=True)
    base = stms[0]
    diffs = np.linalg.norm((stms[1:] - base).reshape(samples, -1), axis=1) / frobenius_norm(base)
    ok = np.isfinite(diffs)
    if not np.any(ok):
        return IndexResult(float("nan"), None, "nu_sampled", None, False, samples)
    i = int(np.nanargmax(np.where(ok, diffs, -np.inf)))
    return IndexResult(float(diffs[i]), dirs[i], "nu_sampled", None, True, int(np.sum(~ok)))
