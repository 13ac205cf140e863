import numpy as np
import pytest

from tensornorms import scenarios
from tensornorms.dynamics import DynamicsModel, SttStack, propagate_stt
from tensornorms.exceptions import MissingOrderError, SingularTransferError
from tensornorms.guidance import (COND_LIMIT, KINDS, bound_curve, error_tensor, guidance_velocity,
                                  phirv_condition, rendezvous_velocity, tensor_norm)
from tensornorms.oracle import MissObjective, eigvec_eval, local_opt_max, objective_for
from tensornorms.tensor import Tensor1m

from oracles import loglog_slope, random_partially_symmetric


def random_stack(rng, zero_curvature=False):
    phi = np.eye(6) + 0.3 * rng.standard_normal((6, 6))
    if zero_curvature:
        return SttStack.from_tensors(phi, np.zeros((6, 6, 6)), np.zeros((6, 6, 6, 6)))
    return SttStack.from_tensors(phi, random_partially_symmetric(rng, 6, 6, 2),
                                 random_partially_symmetric(rng, 6, 6, 3))


def poly_coefficient(fun, direction, degree, power):
    """Coefficient of s**power in the polynomial s -> fun(s * direction)."""
    s = np.linspace(-1.0, 1.0, 2 * degree + 3)
    vals = np.array([fun(si * direction) for si in s])
    coeffs = np.polynomial.polynomial.polyfit(s, vals, degree)
    return coeffs[power]


# -- structural checks ------------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_linear_dynamics_give_zero_tensors(rng, kind):
    t = error_tensor(random_stack(rng, zero_curvature=True), kind)
    assert not np.any(t.tensor.entries)
    assert tensor_norm(t).value == 0.0


@pytest.mark.parametrize("kind", KINDS)
def test_free_motion_gives_zero_tensors(kind):
    st = propagate_stt(DynamicsModel.free(), np.array([1.0, 0, 0, 0, 1, 0]), 0.0, 2.0, order=3)
    assert np.max(np.abs(error_tensor(st, kind).tensor.entries)) < 1e-14


def test_zero_span_propagation_tensor(iss):
    st = propagate_stt(iss.model, iss.x0, 0.0, 0.0, order=2)
    assert not np.any(error_tensor(st, "propagation_vv").tensor.entries)


def test_bound_curve_homogeneity(rng):
    t = error_tensor(random_stack(rng), "miss_E1")
    (r0, b0), (r1, b1), (r2, b2) = bound_curve(t, [0.0, 1.5, 3.0])
    assert b0 == 0.0
    assert np.isclose(b2, 4 * b1, rtol=1e-14)
    t3 = error_tensor(random_stack(rng), "miss_E2")
    _, (_, c1), (_, c2) = bound_curve(t3, [0.0, 1.5, 3.0])
    assert np.isclose(c2, 8 * c1, rtol=1e-14)
    tp = error_tensor(random_stack(rng), "propagation_vv")
    assert np.isclose(bound_curve(tp, [2.0])[0][1], 0.5 * tensor_norm(tp).value * 4.0)


def test_partial_symmetry_of_all_kinds(rng):
    st = random_stack(rng)
    for kind in KINDS:
        e = error_tensor(st, kind).tensor.entries
        assert np.allclose(e, np.swapaxes(e, 1, 2), atol=1e-14 * np.max(np.abs(e)))


def test_missing_order(rng):
    st = SttStack.from_tensors(np.eye(6) + 0.1 * rng.standard_normal((6, 6)),
                               random_partially_symmetric(rng, 6, 6, 2))
    with pytest.raises(MissingOrderError):
        error_tensor(st, "miss_E2")
    with pytest.raises(ValueError):
        error_tensor(st, "bogus")


def test_singular_transfer_is_refused():
    phi = np.eye(6)
    phi[0:3, 3:6] = np.diag([1.0, 1.0, 0.0])
    st = SttStack.from_tensors(phi, np.zeros((6, 6, 6)))
    with pytest.raises(SingularTransferError) as info:
        error_tensor(st, "miss_E1")
    assert not info.value.condition <= COND_LIMIT
    assert error_tensor(st, "propagation_vv").tensor.order == 2


def test_norms_diverge_near_transfer_singularity():
    sc = scenarios.circular()
    times = [3.0, 3.1, 3.14]
    miss, prop, cond = [], [], []
    for t in times:
        st = propagate_stt(sc.model, sc.x0, 0.0, t, order=2)
        miss.append(tensor_norm(error_tensor(st, "miss_E1")).value)
        prop.append(tensor_norm(error_tensor(st, "propagation_vv")).value)
        cond.append(phirv_condition(st))
    assert np.all(np.diff(cond) > 0) and np.all(np.diff(miss) > 0)
    assert miss[-1] > 1e3 * miss[0]
    assert max(prop) < 2 * min(prop)


# -- expansion checks by polynomial fitting ----------------------------------------------

def second_order_map(st, dx):
    return st.phi @ dx + 0.5 * st.psi2.contract(dx, 2)


def third_order_map(st, dx):
    return second_order_map(st, dx) + st.psi3.contract(dx, 3) / 6.0


def test_rendezvous_tensor_is_composed_quadratic_coefficient(rng):
    st = random_stack(rng)
    f1 = error_tensor(st, "rendezvous_F1").tensor
    d = rng.standard_normal(3)

    def composed(dr):
        dx = np.concatenate([dr, rendezvous_velocity(st, dr)])
        return second_order_map(st, dx)[:3]

    coef = poly_coefficient(composed, d, 2, 2)
    ref = f1.contract(d, 2)
    assert np.linalg.norm(coef - ref) < 1e-6 * np.linalg.norm(ref)
    assert np.linalg.norm(poly_coefficient(composed, d, 2, 1)) < 1e-10


def test_miss_tensors_are_expansion_coefficients(rng):
    st = random_stack(rng)
    e1 = error_tensor(st, "miss_E1").tensor
    e2 = error_tensor(st, "miss_E2").tensor
    d = rng.standard_normal(3)

    def miss(order, expansion):
        def f(dr):
            dv = guidance_velocity(st, dr, order)
            return expansion(st, np.concatenate([np.zeros(3), dv]))[:3] - dr
        return f

    c1 = poly_coefficient(miss(1, second_order_map), d, 2, 2)
    assert np.linalg.norm(c1 - e1.contract(d, 2)) < 1e-6 * np.linalg.norm(c1)
    f2 = miss(2, third_order_map)
    assert np.linalg.norm(poly_coefficient(f2, d, 6, 2)) < 1e-8
    c3 = poly_coefficient(f2, d, 6, 3)
    assert np.linalg.norm(c3 - e2.contract(d, 3)) < 1e-6 * np.linalg.norm(c3)


def test_velocity_tensor_is_transfer_inverse_times_miss_tensor(rng):
    st = random_stack(rng)
    m_inv = np.linalg.inv(st.phi[0:3, 3:6])
    for m, miss_kind in ((1, "miss_E1"), (2, "miss_E2")):
        e = error_tensor(st, miss_kind).tensor.entries
        v = error_tensor(st, f"velocity_err_{m}").tensor.entries
        assert np.allclose(v, np.tensordot(m_inv, e, axes=([1], [0])), rtol=1e-10, atol=1e-12)


# -- reference orbits ---------------------------------------------------------------------

def optimized(st, kind, radius):
    t = error_tensor(st, kind)
    n = tensor_norm(t)
    obj = objective_for(st, kind)
    val = local_opt_max(obj, radius, n.maximizer)[0]
    return val, t.coefficient * n.value * radius ** t.order, eigvec_eval(obj, n.maximizer, radius)


def test_iss_propagation_error_hundreds_of_meters(iss, iss_stack):
    val, bound, eig = optimized(iss_stack, "propagation_vv", iss.velocity_scale(200.0))
    assert 0.1 <= val <= 1.0
    assert abs(bound - val) <= 0.10 * val
    assert eig >= 0.999 * val


def test_nrho_propagation_error_tens_of_km(nrho, nrho_stack):
    val, _, eig = optimized(nrho_stack, "propagation_vv", nrho.velocity_scale(200.0))
    km = val * nrho.length_unit_km
    assert 10.0 <= km < 100.0
    assert eig >= 0.999 * val


def test_miss_distance_hundreds_of_meters(iss, iss_stack, nrho, nrho_stack):
    iss_miss = optimized(iss_stack, "miss_E1", iss.position_scale(200.0))[0]
    nrho_miss = optimized(nrho_stack, "miss_E1", nrho.position_scale(2000.0))[0] * nrho.length_unit_km
    assert 0.1 <= iss_miss < 1.0
    assert 0.1 <= nrho_miss < 1.0


def test_iss_rendezvous_miss_between_one_and_two_km(iss, iss_stack):
    val = optimized(iss_stack, "rendezvous_F1", iss.position_scale(200.0))[0]
    assert 1.0 <= val <= 2.0


def test_iss_rendezvous_two_to_three_times_transfer_miss(iss, iss_stack):
    # Measured ratio is about 3.5 at 200 km; kept as the stated 2..3 window.
    r = iss.position_scale(200.0)
    ratio = optimized(iss_stack, "rendezvous_F1", r)[0] / optimized(iss_stack, "miss_E1", r)[0]
    assert 2.0 <= ratio <= 3.0


@pytest.mark.parametrize("kind", ["propagation_vv", "miss_E1", "velocity_err_1", "rendezvous_F1"])
@pytest.mark.parametrize("orbit", ["iss", "nrho"])
def test_bound_tight_at_small_scale(request, orbit, kind):
    sc = request.getfixturevalue(orbit)
    st = request.getfixturevalue(orbit + "_stack")
    top = sc.velocity_scale(200.0) if kind == "propagation_vv" else sc.position_scale(
        200.0 if orbit == "iss" else 2000.0)
    val, bound, _ = optimized(st, kind, 1e-3 * top)
    assert bound * (1 - 1e-2) <= val <= bound * (1 + 1e-2)


def test_second_order_guidance_residual_is_cubic(nrho, nrho_stack):
    e2 = error_tensor(nrho_stack, "miss_E2")
    direction = tensor_norm(e2).maximizer
    obj = MissObjective(nrho_stack, 2)
    radii = nrho.position_scale(np.geomspace(100.0, 2000.0, 5))
    vals = [eigvec_eval(obj, direction, r) for r in radii]
    assert abs(loglog_slope(radii, vals) - 3.0) <= 0.1


def test_second_order_guidance_gains_a_power_of_scale(iss, iss_stack):
    direction = tensor_norm(error_tensor(iss_stack, "miss_E1")).maximizer
    first, second = MissObjective(iss_stack, 1), MissObjective(iss_stack, 2)
    radii = iss.position_scale(np.geomspace(5.0, 100.0, 5))
    ratio = [eigvec_eval(second, direction, r) / eigvec_eval(first, direction, r) for r in radii]
    assert np.all(np.array(ratio) < 1.0)
    assert abs(loglog_slope(radii, ratio) - 1.0) <= 0.1
