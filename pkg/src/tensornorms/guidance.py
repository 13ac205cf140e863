"""Error tensors for linearized propagation, targeting and rendezvous.

Where the constants live:

===================  ===========================================  ============
kind                 tensor                                       bound
===================  ===========================================  ============
propagation_vv       Psi^r_vv                                     1/2 |T| R^2
miss_E1              1/2 Psi^r_vv M M                             |T| R^2
miss_E2              -1/2 Psi(w, M Psi w^2) + 1/6 Psi^r_vvv w^3   |T| R^3
velocity_err_1       M E1                                         |T| R^2
velocity_err_2       M E2                                         |T| R^3
rendezvous_F1        1/2 Psi (dr, -K dr)^2                        |T| R^2
===================  ===========================================  ============

with ``M = (Phi^r_v)^-1``, ``K = M Phi^r_r`` and ``w = M dr``. Miss and
velocity kinds take the target position offset as input; rendezvous takes
the initial relative position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .dynamics import SttStack
from .eigen import PowerIterConfig
from .exceptions import MissingOrderError, SingularTransferError
from .norms import NormResult, norm_2
from .tensor import Tensor1m, slice_block

COND_LIMIT = 1e12
KINDS = ("propagation_vv", "miss_E1", "miss_E2", "velocity_err_1", "velocity_err_2", "rendezvous_F1")

R, V = (0, 3), (3, 6)


@dataclass
class GuidanceErrorTensor:
    kind: str
    tensor: Tensor1m
    phirv_condition: float

    @property
    def order(self) -> int:
        return self.tensor.order

    @property
    def coefficient(self) -> float:
        return 0.5 if self.kind == "propagation_vv" else 1.0


def phirv_condition(stack: SttStack) -> float:
    return float(np.linalg.cond(stack.phi[0:3, 3:6]))


def _transfer_factor(stack: SttStack):
    """LU factors of Phi^r_v, refusing near-singular transfers."""
    block = stack.phi[0:3, 3:6]
    cond = float(np.linalg.cond(block))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularTransferError(f"Phi^r_v is near singular (cond={cond:.3e})", cond)
    return lu_factor(block), cond


def _inverse(lu) -> np.ndarray:
    return lu_solve(lu, np.eye(3))


def _psi_block(stack: SttStack, *inputs) -> np.ndarray:
    return slice_block(stack.stt(len(inputs)), R, list(inputs)).entries


def _transform_inputs(t: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """Contract every covariant slot of ``t`` with ``mat`` (slot index -> mat row)."""
    out = t
    for axis in range(1, t.ndim):
        out = np.moveaxis(np.tensordot(out, mat, axes=([axis], [0])), -1, axis)
    return out


def _require(stack: SttStack, order: int):
    if stack.order < order:
        raise MissingOrderError(f"need STTs of order {order}, stack has {stack.order}")


def propagation_bound_tensor(stack: SttStack) -> GuidanceErrorTensor:
    _require(stack, 2)
    return GuidanceErrorTensor("propagation_vv", Tensor1m(_psi_block(stack, V, V)), phirv_condition(stack))


def _e1_entries(stack, m_inv):
    return 0.5 * _transform_inputs(_psi_block(stack, V, V), m_inv)


def _e2_entries(stack, m_inv):
    psi = _psi_block(stack, V, V)
    psi3 = _psi_block(stack, V, V, V)
    m_psi = np.tensordot(m_inv, psi, axes=([1], [0]))
    # Psi(w, M Psi w^2) as a 4-index array before the input transform by M
    nested = np.einsum("iab,bcd->iacd", psi, m_psi)
    return _transform_inputs(-0.5 * nested + psi3 / 6.0, m_inv)


def miss_distance_tensor_first(stack: SttStack) -> GuidanceErrorTensor:
    _require(stack, 2)
    lu, cond = _transfer_factor(stack)
    return GuidanceErrorTensor("miss_E1", Tensor1m(_e1_entries(stack, _inverse(lu))), cond)


def miss_distance_tensor_second(stack: SttStack) -> GuidanceErrorTensor:
    _require(stack, 3)
    lu, cond = _transfer_factor(stack)
    return GuidanceErrorTensor("miss_E2", Tensor1m(_e2_entries(stack, _inverse(lu))), cond)


def velocity_error_tensor(stack: SttStack, m: int = 1) -> GuidanceErrorTensor:
    if m not in (1, 2):
        raise ValueError("velocity error tensor is defined for m = 1 or 2")
    _require(stack, m + 1)
    lu, cond = _transfer_factor(stack)
    m_inv = _inverse(lu)
    e = _e1_entries(stack, m_inv) if m == 1 else _e2_entries(stack, m_inv)
    out = lu_solve(lu, e.reshape(3, -1)).reshape(e.shape)
    return GuidanceErrorTensor(f"velocity_err_{m}", Tensor1m(out), cond)


def rendezvous_tensor(stack: SttStack) -> GuidanceErrorTensor:
    _require(stack, 2)
    lu, cond = _transfer_factor(stack)
    k = lu_solve(lu, stack.phi[0:3, 0:3])
    rr = _psi_block(stack, R, R)
    rv = _psi_block(stack, R, V)
    vv = _psi_block(stack, V, V)
    f1 = 0.5 * (rr - np.einsum("ijb,bk->ijk", rv, k) - np.einsum("ibk,bj->ijk", rv.transpose(0, 2, 1), k)
                + _transform_inputs(vv, k))
    return GuidanceErrorTensor("rendezvous_F1", Tensor1m(f1), cond)


def error_tensor(stack: SttStack, kind: str) -> GuidanceErrorTensor:
    if kind == "propagation_vv":
        return propagation_bound_tensor(stack)
    if kind == "miss_E1":
        return miss_distance_tensor_first(stack)
    if kind == "miss_E2":
        return miss_distance_tensor_second(stack)
    if kind == "velocity_err_1":
        return velocity_error_tensor(stack, 1)
    if kind == "velocity_err_2":
        return velocity_error_tensor(stack, 2)
    if kind == "rendezvous_F1":
        return rendezvous_tensor(stack)
    raise ValueError(f"unknown error tensor kind {kind!r}; choose from {', '.join(KINDS)}")


def tensor_norm(tensor: GuidanceErrorTensor, cfg: PowerIterConfig = PowerIterConfig()) -> NormResult:
    return norm_2(tensor.tensor, cfg)


def bound_curve(tensor: GuidanceErrorTensor, scales, cfg: PowerIterConfig = PowerIterConfig(),
                norm: NormResult | None = None):
    """``[(R, coefficient * |T|_2 * R^order), ...]`` with the norm computed once."""
    if norm is None:
        norm = tensor_norm(tensor, cfg)
    return [(float(r), tensor.coefficient * norm.value * float(r) ** tensor.order) for r in scales]


def guidance_velocity(stack: SttStack, dr_target, order: int = 1) -> np.ndarray:
    """Initial velocity offset(s) hitting ``dr_target`` to first or second order.

    ``dr_target`` may be a single 3-vector or an N x 3 array.
    """
    lu, _ = _transfer_factor(stack)
    dr = np.atleast_2d(np.asarray(dr_target, dtype=float))
    w = lu_solve(lu, dr.T).T
    if order == 2:
        _require(stack, 2)
        psi = _psi_block(stack, V, V)
        w = w - 0.5 * lu_solve(lu, np.einsum("iab,na,nb->in", psi, w, w)).T
    elif order != 1:
        raise ValueError("guidance order must be 1 or 2")
    return w if np.ndim(dr_target) == 2 else w[0]


def rendezvous_velocity(stack: SttStack, dr0) -> np.ndarray:
    """Linear initial velocity offset that returns ``dr0`` to the reference at t_f."""
    lu, _ = _transfer_factor(stack)
    dr = np.atleast_2d(np.asarray(dr0, dtype=float))
    out = -lu_solve(lu, stack.phi[0:3, 0:3] @ dr.T).T
    return out if np.ndim(dr0) == 2 else out[0]
