"""Operator norms of Taylor-series coefficient tensors for bounding linearization error."""

__version__ = "0.1.0"

from .exceptions import (DegenerateGeometryError, DomainError, MissingOrderError,  # noqa: E402
                         NotPositiveDefiniteError, PropagationError, SingularTransferError,
                         SizingError, TensorNormsError, UnsupportedOrderError)
from .tensor import Tensor0m, Tensor1m, contract, square, symmetrize  # noqa: E402
from .eigen import PowerIterConfig, d_eig_max_square, shifted_z_eig_max, z_eig_max_square  # noqa: E402
from .norms import (compute_norm, norm_2, norm_2_upper_flatten, norm_2d, norm_frob2,  # noqa: E402
                    norm_frobinf_upper, norm_inf2)
from .dynamics import DynamicsModel, SttStack, cauchy_green, propagate_stt, propagate_sweep  # noqa: E402
from .guidance import GuidanceErrorTensor, bound_curve, error_tensor  # noqa: E402
from .measurement import ANGLES, UNIT_VECTOR, MeasurementModel, hbar_norm, hbar_tensor  # noqa: E402
from .indices import IndexResult, beth_bound, demon, nu_quotient, nu_sampled, temon  # noqa: E402
from .oracle import OracleReport, run_protocol  # noqa: E402
