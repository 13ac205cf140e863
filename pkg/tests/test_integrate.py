import numpy as np

from tensornorms.dynamics import DynamicsModel, flow, state_scales
from tensornorms.integrate import BatchPropagator

from oracles import loglog_slope


def test_zero_deviation_stays_zero(iss, iss_stack):
    prop = BatchPropagator(iss.model, iss.x0, iss_stack.steps)
    assert not np.any(prop.propagate(np.zeros(6)))


def test_batch_matches_adaptive_flow(iss, iss_stack):
    scales = state_scales(iss.model, iss.x0)
    dx = 1e-3 * scales * np.array([1.0, -0.5, 0.2, 0.3, 0.1, -0.7])
    dxf = BatchPropagator(iss.model, iss.x0, iss_stack.steps).propagate(dx)[0]
    ref = flow(iss.model, iss.x0 + dx, iss.t0, iss.tf, rtol=1e-13, atol=1e-14) - iss_stack.xf
    assert np.linalg.norm((dxf - ref) / scales) < 1e-9 * np.linalg.norm(ref / scales) + 1e-12


def test_stm_slot_matches_reference_at_zero(nrho, nrho_stack):
    _, phi = BatchPropagator(nrho.model, nrho.x0, nrho_stack.steps).propagate(np.zeros(6), with_stm=True)
    assert np.allclose(phi[0], nrho_stack.phi, rtol=0, atol=1e-10 * np.max(np.abs(nrho_stack.phi)))


def test_encke_residual_slopes(rng, nrho, nrho_stack):
    d = rng.standard_normal(6)
    d /= np.linalg.norm(d)
    s = np.geomspace(1e-7, 1e-3, 5)
    dxf = BatchPropagator(nrho.model, nrho.x0, nrho_stack.steps).propagate(s[:, None] * d)
    r1, r2, r3 = [], [], []
    for si, row in zip(s, dxf):
        dx = si * d
        lin = row - nrho_stack.phi @ dx
        quad = lin - 0.5 * nrho_stack.psi2.contract(dx, 2)
        cub = quad - nrho_stack.psi3.contract(dx, 3) / 6.0
        r1.append(np.linalg.norm(lin))
        r2.append(np.linalg.norm(quad))
        r3.append(np.linalg.norm(cub))
    # Deviations as small as 1e-7 keep clean slopes because no reference is subtracted.
    assert abs(loglog_slope(s, r1) - 2.0) < 0.05
    assert abs(loglog_slope(s, r2) - 3.0) < 0.05
    assert abs(loglog_slope(s[2:], r3[2:]) - 4.0) < 0.2


def test_nonfinite_rows_become_nan():
    model = DynamicsModel.two_body_nondim()
    x0 = np.array([1.0, 0, 0, 0, 1.0, 0])
    prop = BatchPropagator(model, x0, np.linspace(0, 1.0, 5))
    out = prop.propagate(np.array([[0, 0, 0, 0, 0, 0], [-1.0, 0, 0, 0, -1.0, 0]]))
    assert np.all(np.isfinite(out[0]))
    assert np.all(np.isnan(out[1]))
