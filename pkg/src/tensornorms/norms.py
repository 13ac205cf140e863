"""Induced norms and cheap upper bounds for partially symmetric (1,m)-tensors.

Kinds:

========================  ==========================================  =========
kind                      value                                       maximizer
========================  ==========================================  =========
``2``                     max |B x^m|_2 over |x|_2 = 1                 yes
``2D``                    max |B x^m|_2 over x^T D x = 1               yes
``inf2``                  max |B x^m|_inf over |x|_2 = 1 (m <= 2)      yes
``frob2``                 max |B x|_F over |x|_2 = 1 (m = 2)           yes
``2_upper``               sigma_max of the n_o x n^m unfolding         no
``frobinf_upper``         |abs row-sum matrix|_F (m = 2)               no
========================  ==========================================  =========
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .eigen import PowerIterConfig, d_eig_max_square, z_eig_max_square
from .exceptions import UnsupportedOrderError
from .tensor import Tensor1m, flatten_first, flatten_last, frobenius_norm

NORM_KINDS = ("2", "2D", "inf2", "frob2", "2_upper", "frobinf_upper")


@dataclass
class NormResult:
    value: float
    maximizer: Optional[np.ndarray]
    kind: str
    converged: bool = True
    restarts_used: int = 0


def flattening_start(entries: np.ndarray) -> np.ndarray:
    """Input direction read off the dominant right singular vector of the unfolding.

    The singular vector lives in the m-fold input product space; its
    dominant one-slot factor is a good first iterate for power iteration.
    """
    n = entries.shape[1]
    m = entries.ndim - 1
    _, _, vt = np.linalg.svd(entries.reshape(entries.shape[0], -1), full_matrices=False)
    if m == 1:
        return vt[0]
    u, _, _ = np.linalg.svd(vt[0].reshape(n, n ** (m - 1)), full_matrices=False)
    return u[:, 0]


def _with_start(cfg: PowerIterConfig, start) -> PowerIterConfig:
    if cfg.initial_guess is not None:
        return cfg
    return replace(cfg, initial_guess=start)


def norm_2(b: Tensor1m, cfg: PowerIterConfig = PowerIterConfig()) -> NormResult:
    """Induced 2-norm; without a caller-supplied guess the first start comes from the unfolding."""
    res = z_eig_max_square(b, _with_start(cfg, flattening_start(b.entries)))
    return NormResult(float(np.sqrt(max(res.eigenvalue, 0.0))), res.eigenvector, "2",
                      res.converged, res.restarts_used)


def norm_2d(b: Tensor1m, d, cfg: PowerIterConfig = PowerIterConfig(), sqrt_factor=None) -> NormResult:
    if cfg.initial_guess is None:
        # Start from the unfolding of the tensor pulled back to the unit sphere.
        s = np.asarray(sqrt_factor, dtype=float) if sqrt_factor is not None else np.linalg.cholesky(d).T
        s_inv = np.linalg.inv(s)
        pulled = b.entries
        for axis in range(1, b.order + 1):
            pulled = np.moveaxis(np.tensordot(pulled, s_inv, axes=([axis], [0])), -1, axis)
        cfg = replace(cfg, initial_guess=s_inv @ flattening_start(pulled))
    res = d_eig_max_square(b, d, cfg, sqrt_factor=sqrt_factor)
    return NormResult(float(np.sqrt(max(res.eigenvalue, 0.0))), res.eigenvector, "2D",
                      res.converged, res.restarts_used)


def norm_inf2(b: Tensor1m) -> NormResult:
    """Largest output component: the biggest slice spectral radius (row norm for m=1)."""
    e = b.entries
    if b.order == 1:
        rows = np.linalg.norm(e, axis=1)
        i = int(np.argmax(rows))
        x = e[i] / rows[i] if rows[i] > 0 else np.eye(b.dim_in)[0]
        return NormResult(float(rows[i]), x, "inf2")
    if b.order != 2:
        raise UnsupportedOrderError("norm_inf2 supports m <= 2")
    best, best_x = -1.0, None
    for sl in e:
        # Slices are symmetric, so the top singular value is the largest |eigenvalue|.
        w, v = np.linalg.eigh(0.5 * (sl + sl.T))
        j = int(np.argmax(np.abs(w)))
        if abs(w[j]) > best:
            best, best_x = float(abs(w[j])), v[:, j]
    return NormResult(best, best_x, "inf2")


def norm_frob2(b: Tensor1m) -> NormResult:
    """Spectral norm of the (n_o n) x n unfolding: max over unit x of |B x|_F."""
    if b.order != 2:
        raise UnsupportedOrderError("norm_frob2 needs m = 2")
    _, s, vt = np.linalg.svd(flatten_last(b), full_matrices=False)
    return NormResult(float(s[0]), vt[0], "frob2")


def norm_frob2_gram(b: Tensor1m) -> float:
    """Same value through the eigenvalues of sum_i (B^i)^T B^i (test cross-check)."""
    if b.order != 2:
        raise UnsupportedOrderError("norm_frob2 needs m = 2")
    gram = np.einsum("iaj,iak->jk", b.entries, b.entries)
    return float(np.sqrt(max(np.linalg.eigvalsh(gram)[-1], 0.0)))


def norm_2_upper_flatten(b: Tensor1m) -> NormResult:
    return NormResult(float(np.linalg.norm(flatten_first(b), 2)), None, "2_upper")


def norm_frobinf_upper(b: Tensor1m) -> NormResult:
    if b.order != 2:
        raise UnsupportedOrderError("norm_frobinf_upper needs m = 2")
    row_sums = np.sum(np.abs(b.entries), axis=2)
    return NormResult(frobenius_norm(row_sums), None, "frobinf_upper")


def compute_norm(b: Tensor1m, kind: str, cfg: PowerIterConfig = PowerIterConfig(), d=None) -> NormResult:
    """Dispatch by kind name (see module table)."""
    if kind == "2":
        return norm_2(b, cfg)
    if kind == "2D":
        if d is None:
            raise ValueError("kind 2D needs a weighting matrix")
        return norm_2d(b, d, cfg)
    if kind == "inf2":
        return norm_inf2(b)
    if kind == "frob2":
        return norm_frob2(b)
    if kind == "2_upper":
        return norm_2_upper_flatten(b)
    if kind == "frobinf_upper":
        return norm_frobinf_upper(b)
    raise ValueError(f"unknown norm kind {kind!r}; choose from {', '.join(NORM_KINDS)}")
