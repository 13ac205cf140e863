"""Largest Z- and D-eigenpairs of tensor squares by symmetric power iteration.

The square of a partially symmetric (1,m)-tensor is never formed. Each step
contracts the tensor m-1 times with the iterate to get a matrix ``M``, then
uses ``M^T (M x)``, which equals the symmetrized square applied to
``x^(2m-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, lu_factor, lu_solve, solve_triangular

from .exceptions import NotPositiveDefiniteError, SizingError
from .tensor import Tensor0m, Tensor1m, frobenius_norm

ZERO_GUARD = 1e-300


@dataclass(frozen=True)
class PowerIterConfig:
    tol: float = 1e-12
    max_iters: int = 1000
    restarts: int = 10
    seed: int = 0
    initial_guess: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class EigResult:
    eigenvalue: float
    eigenvector: np.ndarray
    iterations: int
    converged: bool
    restarts_used: int


def _unit(x):
    return x / np.linalg.norm(x)


def _starts(n: int, cfg: PowerIterConfig, transform=None):
    """Yield the configured initial guess (if any) then Gaussian-direction starts."""
    rng = np.random.default_rng(cfg.seed)
    count = 0
    if cfg.initial_guess is not None:
        x0 = np.asarray(cfg.initial_guess, dtype=float).ravel()
        if x0.shape != (n,):
            raise SizingError(f"initial guess length {x0.size} != {n}")
        if transform is not None:
            x0 = transform(x0)
        if np.linalg.norm(x0) > 0:
            count += 1
            yield _unit(x0)
    while count < cfg.restarts:
        count += 1
        yield _unit(rng.standard_normal(n))


# -- fast path ---------------------------------------------------------------

def power_step(b: Tensor1m, x) -> np.ndarray:
    """Symmetrized square of ``b`` applied to ``x^(2m-1)`` without forming it."""
    return _square_grad(b.entries, np.asarray(x, dtype=float))[1]


def _square_grad(entries: np.ndarray, x: np.ndarray):
    m_mat = entries
    for _ in range(entries.ndim - 2):
        m_mat = m_mat @ x
    v = m_mat @ x
    return float(v @ v), m_mat.T @ v, m_mat, v


def _square_jac(entries: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Jacobian of the fast-path map ``x -> M(x)^T M(x) x``."""
    m = entries.ndim - 1
    _, _, m_mat, v = _square_grad(entries, x)
    jac = m * (m_mat.T @ m_mat)
    if m >= 2:
        sub = entries
        for _ in range(m - 2):
            sub = sub @ x
        jac = jac + (m - 1) * np.tensordot(v, sub, axes=(0, 0))
    return jac


# -- generic driver ----------------------------------------------------------

def _polish(y, lam, value_grad, jac, steps=8):
    """Newton refinement on the sphere-constrained stationarity system."""
    n = y.size

    def residual(yy, ll):
        _, g = value_grad(yy)
        return np.linalg.norm(g - ll * yy)

    res = residual(y, lam)
    for _ in range(steps):
        if res <= 1e-15 * max(abs(lam), 1e-300):
            break
        _, g = value_grad(y)
        kkt = np.zeros((n + 1, n + 1))
        kkt[:n, :n] = jac(y) - lam * np.eye(n)
        kkt[:n, n] = -y
        kkt[n, :n] = -y
        rhs = -np.concatenate([g - lam * y, [0.5 * (1.0 - y @ y)]])
        try:
            step = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            break
        y_new = _unit(y + step[:n])
        lam_new, _ = value_grad(y_new)
        res_new = residual(y_new, lam_new)
        # Only accept refinements that stay on the same (maximal) branch.
        if res_new >= res or lam_new < lam - 1e-10 * abs(lam):
            break
        y, lam, res = y_new, lam_new, res_new
    return y, lam, res


def _run(
    n: int,
    value_grad: Callable,
    jac: Callable,
    cfg: PowerIterConfig,
    shift: float = 0.0,
    transform=None,
    history: Optional[list] = None,
):
    """Power iteration over all starts; returns best (y, lam, iters, converged, starts)."""
    best = None
    starts = 0
    for y in _starts(n, cfg, transform):
        starts += 1
        lam, g = value_grad(y)
        trace = [lam]
        s = shift
        calm = 0
        converged = False
        it = 0
        while it < cfg.max_iters:
            it += 1
            for _ in range(60):
                cand = g + s * y
                nrm = np.linalg.norm(cand)
                if nrm == 0.0:
                    y_new = y
                else:
                    y_new = cand / nrm
                lam_new, g_new = value_grad(y_new)
                if lam_new >= lam - 1e-15 * abs(lam):
                    break
                # Restore monotone ascent by enlarging the shift.
                s = max(2.0 * s, float(np.linalg.norm(g)))
            else:
                y_new, lam_new, g_new = y, lam, g
            change = abs(lam_new - lam) / max(abs(lam_new), 1e-300)
            y, lam, g = y_new, lam_new, g_new
            trace.append(lam)
            calm = calm + 1 if change < cfg.tol else 0
            if calm >= 2:
                converged = True
                break
        y, lam, res = _polish(y, lam, value_grad, jac)
        if not converged and res <= 1e-10 * max(abs(lam), 1e-300):
            converged = True
        if history is not None:
            history.append(trace)
        if best is None or lam > best[1]:
            best = (y, lam, it, converged)
    return best[0], best[1], best[2], best[3], starts


def _zero_result(n: int, cfg: PowerIterConfig) -> EigResult:
    x = np.zeros(n)
    x[0] = 1.0
    if cfg.initial_guess is not None and np.linalg.norm(cfg.initial_guess) > 0:
        x = _unit(np.asarray(cfg.initial_guess, dtype=float))
    return EigResult(0.0, x, 0, True, 0)


# -- public solvers ----------------------------------------------------------

def z_eig_max_square(b: Tensor1m, cfg: PowerIterConfig = PowerIterConfig(),
                     history: Optional[list] = None) -> EigResult:
    """Largest Z-eigenpair of the symmetrized square of ``b``.

    The eigenvalue is ``max |B x^m|^2`` over the unit sphere (as found from the
    configured starts). ``history``, if given, collects the eigenvalue trace
    of every start.
    """
    n = b.dim_in
    if frobenius_norm(b) < ZERO_GUARD:
        return _zero_result(n, cfg)
    e = b.entries

    def value_grad(x):
        lam, g, _, _ = _square_grad(e, x)
        return lam, g

    y, lam, it, conv, starts = _run(n, value_grad, lambda x: _square_jac(e, x), cfg, history=history)
    return EigResult(float(lam), y, it, conv, starts)


class _Factor:
    """Invertible ``S`` with ``D = S^T S``; triangular when built from Cholesky."""

    def __init__(self, d=None, sqrt_factor=None):
        if sqrt_factor is not None:
            s = np.asarray(sqrt_factor, dtype=float)
            self.s = s
            self.lu = lu_factor(s)
            if not np.all(np.isfinite(self.lu[0])) or np.min(np.abs(np.diag(self.lu[0]))) == 0.0:
                raise NotPositiveDefiniteError("square-root factor is singular")
            self.upper = None
            self.d = s.T @ s
            return
        d = np.asarray(d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise SizingError("D must be square")
        if not np.all(np.isfinite(d)):
            raise ValueError("D must be finite")
        if np.max(np.abs(d - d.T)) > 1e-10 * max(np.max(np.abs(d)), 1.0):
            raise NotPositiveDefiniteError("D is not symmetric")
        try:
            c, _ = cho_factor(d, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"D is not positive definite: {exc}") from None
        lower = np.tril(c)
        self.upper = lower.T
        self.s = self.upper
        self.d = d

    def solve(self, y):
        """``S^{-1} y``."""
        if self.upper is not None:
            return solve_triangular(self.upper, y, lower=False)
        return lu_solve(self.lu, y)

    def solve_t(self, g):
        """``S^{-T} g``."""
        if self.upper is not None:
            return solve_triangular(self.upper, g, trans="T", lower=False)
        return lu_solve(self.lu, g, trans=1)

    def apply(self, x):
        return self.s @ x


def d_eig_max_square(b: Tensor1m, d=None, cfg: PowerIterConfig = PowerIterConfig(),
                     sqrt_factor=None, history: Optional[list] = None) -> EigResult:
    """Largest D-eigenpair of the symmetrized square of ``b``.

    Maximizes ``|B x^m|^2`` subject to ``x^T D x = 1`` by iterating on
    ``y = S x`` where ``D = S^T S``. ``S`` is the transposed Cholesky factor of
    ``d`` unless an explicit invertible ``sqrt_factor`` is supplied. The
    initial guess, if any, is given in x-coordinates.
    """
    n = b.dim_in
    fac = _Factor(d, sqrt_factor)
    if fac.d.shape != (n, n):
        raise SizingError(f"D shape {fac.d.shape} does not match dim_in {n}")
    if frobenius_norm(b) < ZERO_GUARD:
        res = _zero_result(n, cfg)
        x = res.eigenvector / np.sqrt(res.eigenvector @ fac.d @ res.eigenvector)
        return EigResult(0.0, x, 0, True, 0)
    e = b.entries

    def value_grad(y):
        z = fac.solve(y)
        lam, g, _, _ = _square_grad(e, z)
        return lam, fac.solve_t(g)

    def jac(y):
        z = fac.solve(y)
        inner = _square_jac(e, z)
        left = fac.solve_t(inner)
        return fac.solve_t(left.T).T

    y, lam, it, conv, starts = _run(n, value_grad, jac, cfg, transform=fac.apply, history=history)
    x = fac.solve(y)
    x = x / np.sqrt(x @ fac.d @ x)
    lam = _square_grad(e, x)[0]
    return EigResult(float(lam), x, it, conv, starts)


def _sym_apply(c: np.ndarray, y: np.ndarray, times: int):
    out = c
    for _ in range(times):
        out = out @ y
    return out


def shifted_z_eig_max(c: Tensor0m, cfg: PowerIterConfig = PowerIterConfig(),
                      history: Optional[list] = None) -> EigResult:
    """Largest Z-eigenpair of a symmetric tensor by shifted power iteration.

    The shift is ``(k-1) * sum |c|`` for a tensor of order ``k``, which makes
    the shifted objective convex on the unit ball.
    """
    if not c.symmetric:
        raise ValueError("shifted_z_eig_max needs a tensor flagged symmetric")
    n, k = c.dim, c.order
    if frobenius_norm(c) < ZERO_GUARD:
        return _zero_result(n, cfg)
    e = c.entries
    alpha = (k - 1) * float(np.sum(np.abs(e)))

    def value_grad(y):
        g = _sym_apply(e, y, k - 1)
        return float(g @ y), g

    def jac(y):
        if k == 1:
            return np.zeros((n, n))
        return (k - 1) * _sym_apply(e, y, k - 2)

    y, lam, it, conv, starts = _run(n, value_grad, jac, cfg, shift=alpha, history=history)
    return EigResult(float(lam), y, it, conv, starts)
